//! Validated operator and state types for small dense quantum systems.
//!
//! Everything here works on `d x d` complex matrices with `d = 2` as the
//! primary case (single qubit). States are density matrices ρ (Hermitian,
//! unit trace, positive semidefinite); the qubit Bloch picture
//! ρ = (1 + s·σ)/2 with s = (Tr ρσx, Tr ρσy, Tr ρσz) is used throughout the
//! higher-level modules.
//!
//! Unitaries are built from Hermitian generators as U = exp(-i·angle·G):
//! in closed form (Pauli rotation) for d = 2, via Hermitian
//! eigendecomposition for larger d.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used for all operators and states.
pub type CMatrix = DMatrix<Complex64>;

/// Stack-allocated 2x2 complex matrix used by the qubit hot paths.
pub(crate) type M2 = Matrix2<Complex64>;

/// Maximum entrywise deviation from Hermiticity, `max |A - A†|`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Maximum deviation of a density-matrix trace from one, `|Tr ρ - 1|`.
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalue floor for positive semidefiniteness checks.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// Maximum entrywise deviation of `U U† - 1` for unitarity checks.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Allowed excess of a Bloch vector's squared norm over one.
pub const BLOCH_NORM_SQ_TOL: f64 = 1e-10;
/// Frobenius-norm threshold below which two operators count as commuting.
pub const COMMUTING_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// e^{iφ} as a complex number.
#[inline]
pub(crate) fn cis(phi: f64) -> Complex64 {
    Complex64::new(phi.cos(), phi.sin())
}

/// Pauli σx.
pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

/// Pauli σy.
pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

/// Pauli σz.
pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// d x d identity.
pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Maximum entrywise deviation from Hermiticity.
fn hermiticity_defect(m: &CMatrix) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix (closed form for d <= 2).
pub(crate) fn min_eigenvalue(m: &CMatrix) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].re,
        2 => {
            let a = m[(0, 0)].re;
            let d = m[(1, 1)].re;
            let b = m[(0, 1)];
            let mid = 0.5 * (a + d);
            let disc = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
            mid - disc
        }
        _ => {
            let eig = m.clone().symmetric_eigen();
            eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

/// Bloch vector (Sx, Sy, Sz) of a qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochVector {
    pub const fn new(sx: f64, sy: f64, sz: f64) -> Self {
        Self { sx, sy, sz }
    }

    pub fn norm_squared(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.sx * other.sx + self.sy * other.sy + self.sz * other.sz
    }

    /// Transverse (equatorial-plane) amplitude sqrt(Sx² + Sy²).
    pub fn transverse(&self) -> f64 {
        self.sx.hypot(self.sy)
    }

    /// Azimuthal angle atan2(Sy, Sx).
    pub fn azimuth(&self) -> f64 {
        self.sy.atan2(self.sx)
    }

    /// Euclidean distance to another Bloch vector.
    pub fn distance(&self, other: &BlochVector) -> f64 {
        ((self.sx - other.sx).powi(2)
            + (self.sy - other.sy).powi(2)
            + (self.sz - other.sz).powi(2))
        .sqrt()
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
///
/// Validation happens at construction; the tolerances are the module
/// constants above. All evolution code in this crate preserves these
/// invariants (exactly for unitary maps, through an explicit repair policy
/// for the stochastic integrators).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Validates and wraps a matrix as a quantum state.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "density matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let herm = hermiticity_defect(&m);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian: max |rho - rho^dag| = {herm:.3e} exceeds {HERMITICITY_TOL:.1e}"
            )));
        }
        let tr = m.trace();
        let tr_dev = (tr - c(1.0, 0.0)).norm();
        if tr_dev > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace not one: |Tr rho - 1| = {tr_dev:.3e} exceeds {TRACE_TOL:.1e}"
            )));
        }
        let min_eig = min_eigenvalue(&m);
        if min_eig < EIGENVALUE_FLOOR {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite: min eigenvalue {min_eig:.3e} below {EIGENVALUE_FLOOR:.1e}"
            )));
        }
        Ok(Self { m })
    }

    /// Qubit state from a Bloch vector, ρ = (1 + s·σ)/2.
    pub fn from_bloch(b: BlochVector) -> Result<Self> {
        let n2 = b.norm_squared();
        if n2 > 1.0 + BLOCH_NORM_SQ_TOL {
            return Err(Error::InvalidState(format!(
                "Bloch vector leaves the sphere: |s|^2 = {n2} exceeds 1 + {BLOCH_NORM_SQ_TOL:.1e}"
            )));
        }
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.5 * (1.0 + b.sz), 0.0),
                c(0.5 * b.sx, -0.5 * b.sy),
                c(0.5 * b.sx, 0.5 * b.sy),
                c(0.5 * (1.0 - b.sz), 0.0),
            ],
        );
        Ok(Self { m })
    }

    /// Wraps without validation; callers must guarantee the invariants.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Bloch vector of a qubit state (d = 2 only).
    pub fn bloch(&self) -> Result<BlochVector> {
        if self.dim() != 2 {
            return Err(Error::InvalidArgument {
                name: "rho",
                reason: format!("Bloch vector requires d = 2, got d = {}", self.dim()),
            });
        }
        Ok(bloch_of_m2(&m2_of(&self.m)))
    }

    /// Purity Tr(ρ²).
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }
}

/// Hermitian operator (Hamiltonian in angular-frequency units, or a bath
/// coupling in square-root-of-rate units).
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidOperator(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let herm = hermiticity_defect(&m);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidOperator(format!(
                "not Hermitian: max |A - A^dag| = {herm:.3e} exceeds {HERMITICITY_TOL:.1e}"
            )));
        }
        Ok(Self { m })
    }

    /// The zero operator (e.g. a free qubit with no drive).
    pub fn zero(d: usize) -> Self {
        Self {
            m: CMatrix::zeros(d, d),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Unitary operator, validated against `U U† = 1`.
#[derive(Debug, Clone)]
pub struct UnitaryOperator {
    m: CMatrix,
}

impl UnitaryOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidOperator(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = (&m * m.adjoint() - identity(m.nrows()))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > UNITARITY_TOL {
            return Err(Error::InvalidOperator(format!(
                "not unitary: max |U U^dag - 1| = {defect:.3e} exceeds {UNITARITY_TOL:.1e}"
            )));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Applies the unitary as ρ -> U ρ U†.
    pub fn conjugate(&self, rho: &DensityMatrix) -> DensityMatrix {
        let m = &self.m * rho.matrix() * self.m.adjoint();
        DensityMatrix::from_matrix_unchecked(m)
    }
}

/// U = exp(-i·angle·G) for a Hermitian generator G.
///
/// d = 2 uses the closed-form Pauli rotation; larger dimensions go through
/// a Hermitian eigendecomposition. The result is unitary to machine
/// precision for any real angle.
pub fn unitary_from_generator(g: &HermitianOperator, angle: f64) -> UnitaryOperator {
    let d = g.dim();
    let m = if d == 2 {
        let rot = PauliDecomposition::of_matrix(g.matrix()).rotation(-angle);
        cmatrix_of_m2(&rot)
    } else {
        let eig = g.matrix().clone().symmetric_eigen();
        let phases = DVector::from_iterator(
            d,
            eig.eigenvalues.iter().map(|&lambda| cis(-angle * lambda)),
        );
        let diag = CMatrix::from_diagonal(&phases);
        &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
    };
    // Construction guarantees unitarity; avoid re-validating in hot paths.
    UnitaryOperator { m }
}

/// Frobenius norm of the commutator, ‖AB - BA‖_F.
///
/// Used to gate code paths that require `[H, L] = 0` (threshold
/// [`COMMUTING_TOL`]).
pub fn commutator_norm(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
    (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm()
}

/// Bloch-sphere axis labels for the drive Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(&self) -> CMatrix {
        match self {
            Axis::X => sigma_x(),
            Axis::Y => sigma_y(),
            Axis::Z => sigma_z(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidArgument {
                name: "rabi_axis",
                reason: format!("expected one of x|y|z, got {other:?}"),
            }),
        }
    }
}

/// Rabi drive Ĥ = (Ω/2)·σ_axis. Ω = 0 gives a free qubit.
pub fn rabi_hamiltonian(omega: f64, axis: Axis) -> HermitianOperator {
    HermitianOperator {
        m: axis.pauli().scale(0.5 * omega),
    }
}

/// Hermitian dephasing coupling L̂ = sqrt(γ)·σz.
pub fn dephasing_coupling(gamma: f64) -> Result<HermitianOperator> {
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidArgument {
            name: "gamma",
            reason: format!("decay rate must be finite and >= 0, got {gamma}"),
        });
    }
    Ok(HermitianOperator {
        m: sigma_z().scale(gamma.sqrt()),
    })
}

// ----- qubit kernels (shared by the trajectory and SME hot loops) -----

pub(crate) fn m2_of(m: &CMatrix) -> M2 {
    debug_assert_eq!(m.nrows(), 2);
    M2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

pub(crate) fn cmatrix_of_m2(m: &M2) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// Bloch vector of an (assumed valid) 2x2 density matrix.
#[inline]
pub(crate) fn bloch_of_m2(rho: &M2) -> BlochVector {
    BlochVector {
        sx: 2.0 * rho[(0, 1)].re,
        sy: -2.0 * rho[(0, 1)].im,
        sz: rho[(0, 0)].re - rho[(1, 1)].re,
    }
}

/// Pauli decomposition G = a0·1 + a·σ of a Hermitian 2x2 operator,
/// cached so that exponentials exp(i·φ·G) cost one `sin_cos` each.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PauliDecomposition {
    pub a0: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    /// |a| = sqrt(ax² + ay² + az²).
    pub r: f64,
}

impl PauliDecomposition {
    pub fn of(g: &HermitianOperator) -> Self {
        debug_assert_eq!(g.dim(), 2);
        Self::of_matrix(g.matrix())
    }

    pub fn of_matrix(m: &CMatrix) -> Self {
        let a0 = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
        let ax = m[(0, 1)].re;
        let ay = -m[(0, 1)].im;
        let az = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
        let r = (ax * ax + ay * ay + az * az).sqrt();
        Self { a0, ax, ay, az, r }
    }

    /// exp(i·φ·G) = e^{iφa0}·[cos(φr)·1 + i·sin(φr)·(â·σ)].
    #[inline]
    pub fn rotation(&self, phi: f64) -> M2 {
        let phase = cis(phi * self.a0);
        if self.r == 0.0 {
            return M2::new(phase, c(0.0, 0.0), c(0.0, 0.0), phase);
        }
        let (s, cos) = (phi * self.r).sin_cos();
        let (nx, ny, nz) = (self.ax / self.r, self.ay / self.r, self.az / self.r);
        // i·(â·σ) = [[i·nz, ny + i·nx], [-ny + i·nx, -i·nz]]
        let m00 = c(cos, s * nz);
        let m01 = c(s * ny, s * nx);
        let m10 = c(-s * ny, s * nx);
        let m11 = c(cos, -s * nz);
        M2::new(phase * m00, phase * m01, phase * m10, phase * m11)
    }
}
