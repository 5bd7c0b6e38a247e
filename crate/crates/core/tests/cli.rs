use std::process::Command;

fn lodgpe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lodgpe")).args(args).output().unwrap()
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lodgpe-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn groundstate_writes_table_and_manifest() {
    let dir = scratch("gs");
    let out = dir.join("gs");
    let o = lodgpe(&[
        "groundstate",
        "--problem",
        "harmonic",
        "--domain",
        "-4:4",
        "--H",
        "1",
        "--factor",
        "4",
        "--ell",
        "2",
        "--beta",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.join("gs.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("H,ell,factor,form,E_lod,E_exactform,lambda,iters,err_vs_ref"));
    assert!(lines.next().unwrap().ends_with(",ok"));
    assert!(dir.join("gs.txt").exists());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("gs.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "groundstate");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn evolve_sweep_prints_rows() {
    let o = lodgpe(&[
        "evolve", "--problem", "soliton", "--H", "0.3125", "--factor", "4", "--ell", "4", "--q", "1", "--T", "0.125",
        "--tau", "0.015625,0.0078125",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().contains("eoc_l2"));
}

#[test]
fn invalid_configuration_exits_with_four() {
    let o = lodgpe(&["lodinfo", "--problem", "harmonic", "--domain", "-4:4", "--H", "3"]);
    assert_eq!(o.status.code(), Some(4));
    let dir = scratch("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "problem = \"soliton\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\n").unwrap();
    let o = lodgpe(&["groundstate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = lodgpe(&["groundstate", "--config", cfg.to_str().unwrap(), "--problem", "harmonic"]);
    assert_eq!(o.status.code(), Some(4));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn not_converged_exits_with_two() {
    let dir = scratch("iters");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("short.toml");
    std::fs::write(
        &cfg,
        "problem = \"harmonic\"\nlower = [-4.0]\nupper = [4.0]\nH = 1.0\nfactor = 4\nell = 2\nbeta = 5.0\nmax_iters = 2\n",
    )
    .unwrap();
    let o = lodgpe(&["groundstate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("not_converged"));
    std::fs::remove_dir_all(&dir).unwrap();
}
