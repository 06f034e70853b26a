use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn loopsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> (f64, usize) {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let line = text.lines().nth(1).unwrap();
    let (t, n) = line.split_once(',').unwrap();
    (t.parse().unwrap(), n.parse().unwrap())
}

#[test]
fn simulate_from_flop_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let w = fixture("constant_1000.flops");
    let o = loopsched(&[
        "simulate",
        "--platform",
        "mini128",
        "--workload",
        w.to_str().unwrap(),
        "--dls",
        "GSS",
        "--scenario",
        "np",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(dir.path()).1, 1000);
    let chunks = fs::read_to_string(dir.path().join("chunks.csv")).unwrap();
    assert!(chunks.starts_with("time_issued,pe,start,size,technique\n"));
    let per_pe = fs::read_to_string(dir.path().join("per_pe.csv")).unwrap();
    assert_eq!(per_pe.lines().count(), 129);
}

#[test]
fn simas_with_reduced_portfolio_logs_selections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = loopsched(&[
        "simulate",
        "--platform",
        "mini128",
        "--gen",
        "constant",
        "--n",
        "100000",
        "--dls",
        "simas",
        "--portfolio",
        "SS,FSC,mFSC,WF,AWF-B,AWF-C,AWF-D,AWF-E,AF",
        "--scenario",
        "pea-cs",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(dir.path().join("selections.csv")).unwrap();
    let header = log.lines().next().unwrap();
    assert!(header.starts_with("time,chosen,previous,reason,SS_sim_time"));
    for line in log.lines().skip(1) {
        let chosen = line.split(',').nth(1).unwrap();
        assert!(!["GSS", "TSS", "FAC"].contains(&chosen), "{line}");
    }
    assert!(dir.path().join("overhead.csv").exists());
    assert_eq!(summary(dir.path()).1, 100_000);
}

#[test]
fn cutoff_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = loopsched(&[
        "simulate",
        "--platform",
        "mini128",
        "--gen",
        "constant",
        "--n",
        "400000",
        "--dls",
        "STATIC",
        "--max-sim-time",
        "10",
        "--out",
        out,
    ]);
    assert!(o.status.success());
    let (t, n) = summary(dir.path());
    assert_eq!(t, 10.0);
    assert!(n < 400_000);
}

#[test]
fn time_steps_and_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let scn = fixture("half_pea_cs.scn");
    let o = loopsched(&[
        "simulate",
        "--platform",
        fixture("mini128.platform").to_str().unwrap(),
        "--gen",
        "gamma,2,1e8,4.1e6,2.7e9,5",
        "--n",
        "4000",
        "--dls",
        "AWF-B",
        "--timesteps",
        "3",
        "--scenario-file",
        scn.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(dir.path()).1, 12_000);
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec![
            "simulate",
            "--platform",
            "mini128",
            "--gen",
            "constant",
            "--dls",
            "XYZ",
            "--out",
            out,
        ],
        vec![
            "simulate",
            "--platform",
            "mini128",
            "--gen",
            "constant",
            "--dls",
            "SS",
            "--scenario",
            "nope",
            "--out",
            out,
        ],
        vec![
            "simulate",
            "--platform",
            "mini128",
            "--gen",
            "constant",
            "--dls",
            "WF",
            "--weights",
            "1,1",
            "--out",
            out,
        ],
        vec![
            "simulate",
            "--platform",
            "mini128",
            "--dls",
            "SS",
            "--out",
            out,
        ],
        vec![
            "simulate",
            "--platform",
            "mini128",
            "--gen",
            "constant",
            "--n",
            "0",
            "--dls",
            "SS",
            "--out",
            out,
        ],
    ] {
        let o = loopsched(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = loopsched(&[
        "simulate",
        "--platform",
        "no/such.platform",
        "--gen",
        "constant",
        "--dls",
        "SS",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such.platform"));
    let o = loopsched(&["sweep", "no/such.manifest", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    let bad = dir.path().join("bad.flops");
    fs::write(&bad, "1e9\nabc\n").unwrap();
    let o = loopsched(&[
        "simulate",
        "--platform",
        "mini128",
        "--workload",
        bad.to_str().unwrap(),
        "--dls",
        "SS",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let o = Command::new(env!("CARGO_BIN_EXE_loopsched"))
        .args([
            "sweep",
            fixture("three_cell.manifest").to_str().unwrap(),
            "--out",
        ])
        .arg(&results)
        .env("LOOPSCHED_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = loopsched(&["report", results.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "groups.csv",
        "normalized_0.csv",
        "heatmap_0.csv",
        "selection_0.csv",
        "missing.csv",
    ] {
        assert!(results.join("report").join(f).exists(), "{f}");
    }
}

#[test]
fn report_without_baseline_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.manifest");
    fs::write(
        &manifest,
        "axis workload constant\naxis n 1000\naxis platform mini128\naxis scenario np\naxis technique SS\n",
    )
    .unwrap();
    let results = dir.path().join("r");
    assert!(loopsched(&[
        "sweep",
        manifest.to_str().unwrap(),
        "--out",
        results.to_str().unwrap()
    ])
    .status
    .success());
    let o = loopsched(&["report", results.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("baseline"));
}
