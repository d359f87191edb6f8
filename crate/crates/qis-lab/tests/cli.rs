//! Black-box checks of the command-line interface and its exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qis-lab"))
}

#[test]
fn usage_error_exits_2() {
    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-data"));
}

#[test]
fn domain_error_exits_1() {
    let out = bin()
        .args(["eval", "--model", "/nonexistent/model.hrn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gen_data_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen-data", "--n", "3", "--frames", "20", "--rate", "1.0", "--seed", "5"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let count = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(count, 7); // 3 covers + 3 stego + manifest

    // identical seed reproduces the dataset byte for byte
    let dir2 = tempfile::tempdir().unwrap();
    bin()
        .args(["gen-data", "--n", "3", "--frames", "20", "--rate", "1.0", "--seed", "5"])
        .arg("--out")
        .arg(dir2.path())
        .output()
        .unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(dir.path().join(&name)).unwrap(),
            std::fs::read(dir2.path().join(&name)).unwrap()
        );
    }
}

#[test]
fn verify_partition_reports_all_tracks() {
    let out = bin().args(["verify-partition", "--seed", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("pass").count(), 3);
}
