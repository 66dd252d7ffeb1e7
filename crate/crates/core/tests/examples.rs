//! Runs the quick examples so they stay in working order. `cargo test`
//! builds every example next to the test binaries.

use std::path::PathBuf;
use std::process::Command;

fn run(name: &str) {
    let exe = std::env::current_exe().unwrap();
    let dir: PathBuf = exe.parent().unwrap().parent().unwrap().join("examples");
    let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    let out = Command::new(&path)
        .output()
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stdout.is_empty());
}

#[test]
fn haar_decomposition() {
    run("haar_decomposition");
}

#[test]
fn cross_covariances() {
    run("cross_covariances");
}

#[test]
fn implied_moments() {
    run("implied_moments");
}

#[test]
fn simulate_gyros() {
    run("simulate_gyros");
}
