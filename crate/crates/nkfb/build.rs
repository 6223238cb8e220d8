use std::process::Command;

/// Embeds a build identifier so output manifests can state which build
/// produced them. Falls back to the package version when the source tree is
/// not a git checkout (e.g. a published tarball).
fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());

    let build_id = match describe {
        Some(desc) => desc,
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    };
    println!("cargo:rustc-env=NKFB_BUILD_ID={build_id}");
    println!("cargo:rerun-if-changed=build.rs");
}
