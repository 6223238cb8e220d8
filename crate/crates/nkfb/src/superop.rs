//! Superoperators for open-system and homodyne-conditioned dynamics.
//!
//! For a collapse operator ĉ and state ρ:
//!
//! - dissipator:      D[ĉ]ρ = ĉρĉ† - (ĉ†ĉρ + ρĉ†ĉ)/2
//! - Lindblad RHS:    ℒρ   = -i[Ĥ, ρ] + D[ĉ]ρ
//! - record drift:    ℋ[ĉ]ρ = ĉρ + ρĉ† - Tr(ĉρ + ρĉ†)·ρ
//! - squared drift:   𝒜²[ĉ]ρ = 𝒜̄²[ĉ]ρ - Tr(𝒜̄²[ĉ]ρ)·ρ, with 𝒜̄[ĉ]ρ = ĉρ + ρĉ†
//!
//! For a Hermitian coupling rotated by the no-knowledge phase, ĉ = i·L̂,
//! the squared drift loses its stochastic character:
//! 𝒜²[iL̂]ρ/2 = D[iL̂]ρ = D[L̂]ρ, which is what removes all measurement
//! information from the record and makes the backaction purely unitary.
//!
//! All functions act linearly on an arbitrary matrix argument (the
//! integrators apply them to predictor states that are not exactly valid
//! density matrices), and validate dimensions only.

use crate::error::{Error, Result};
use crate::operators::{c, CMatrix};

fn check_square_same(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
        return Err(Error::InvalidArgument {
            name: "dimensions",
            reason: format!(
                "operands must be square with equal size, got {}x{} and {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ),
        });
    }
    Ok(())
}

pub(crate) fn dissipator_raw(cop: &CMatrix, rho: &CMatrix) -> CMatrix {
    let cdc = cop.adjoint() * cop;
    cop * rho * cop.adjoint() - (&cdc * rho + rho * cdc).scale(0.5)
}

/// D[ĉ]ρ = ĉρĉ† - (ĉ†ĉρ + ρĉ†ĉ)/2. Trace-free for any ĉ.
pub fn dissipator(cop: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_square_same(cop, rho)?;
    Ok(dissipator_raw(cop, rho))
}

pub(crate) fn lindblad_rhs_raw(h: &CMatrix, cop: &CMatrix, rho: &CMatrix) -> CMatrix {
    let comm = h * rho - rho * h;
    comm * c(0.0, -1.0) + dissipator_raw(cop, rho)
}

/// Lindblad right-hand side ℒρ = -i[Ĥ, ρ] + D[ĉ]ρ for one collapse channel.
pub fn lindblad_rhs(h: &CMatrix, cop: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_square_same(h, rho)?;
    check_square_same(cop, rho)?;
    Ok(lindblad_rhs_raw(h, cop, rho))
}

/// 𝒜̄[ĉ]ρ = ĉρ + ρĉ† (no trace removal).
pub(crate) fn superop_a_bar_raw(cop: &CMatrix, rho: &CMatrix) -> CMatrix {
    cop * rho + rho * cop.adjoint()
}

pub(crate) fn superop_h_raw(cop: &CMatrix, rho: &CMatrix) -> CMatrix {
    let bar = superop_a_bar_raw(cop, rho);
    let tr = bar.trace();
    bar - rho * tr
}

/// Record-conditioned drift ℋ[ĉ]ρ = ĉρ + ρĉ† - Tr(ĉρ + ρĉ†)·ρ.
///
/// Trace-free whenever Tr ρ = 1; for ĉ = i·L̂ with Hermitian L̂ it reduces
/// to i[L̂, ρ].
pub fn superop_h(cop: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_square_same(cop, rho)?;
    Ok(superop_h_raw(cop, rho))
}

pub(crate) fn superop_a2_raw(cop: &CMatrix, rho: &CMatrix) -> CMatrix {
    let bar2 = superop_a_bar_raw(cop, &superop_a_bar_raw(cop, rho));
    let tr = bar2.trace();
    bar2 - rho * tr
}

/// Squared record drift 𝒜²[ĉ]ρ = 𝒜̄²[ĉ]ρ - Tr(𝒜̄²[ĉ]ρ)·ρ.
pub fn superop_a2(cop: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_square_same(cop, rho)?;
    Ok(superop_a2_raw(cop, rho))
}
