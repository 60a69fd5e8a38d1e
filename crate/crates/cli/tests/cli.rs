use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bandloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL_LYAPUNOV: [&str; 10] = [
    "lyapunov",
    "--alpha-grid",
    "0,6.283,5",
    "--steps",
    "3000",
    "--runs",
    "4",
    "--seed",
    "7",
    "--t=0.5",
];

#[test]
fn reruns_are_byte_identical_for_any_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, jobs) in ["1", "3", "3"].iter().enumerate() {
        let path = dir.path().join(format!("run{i}.csv"));
        let mut args = vec!["--jobs", jobs];
        args.extend(SMALL_LYAPUNOV);
        args.extend(["--out", path.to_str().unwrap()]);
        let o = bandloc(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert!(text.starts_with("alpha,gamma_hat,stderr,gamma_per_site,steps,runs,t,nu_spec,seed\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn json_reruns_are_byte_identical() {
    let a = bandloc(&["localize", "--window", "200", "--realizations", "2", "--steps", "500", "--runs", "2"]);
    let b = bandloc(&["localize", "--window", "200", "--realizations", "2", "--steps", "500", "--runs", "2"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["report"]["realizations"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["subcommand"], "localize");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# lyapunov defaults\nsubcommand=lyapunov\nt=0.3\nsteps=500\nruns=2\nalpha_grid=0,1,2\nseed=11\n",
    )
    .unwrap();
    let o = bandloc(&["--config", cfg.to_str().unwrap(), "--t", "0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "500");
    assert_eq!(row[5], "2");
    assert_eq!(row[6].parse::<f64>().unwrap(), 0.5);
    assert_eq!(row[8], "11");

    let o = bandloc(&["lyapunov", "--config", cfg.to_str().unwrap(), "--runs", "3"]);
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1).unwrap().split(',').nth(5), Some("3"));
    assert_eq!(text.lines().nth(1).unwrap().split(',').nth(6).unwrap().parse::<f64>().unwrap(), 0.3);

    fs::write(&cfg, "subcommand=lyapunov\nno_such_flag=1\n").unwrap();
    assert_eq!(code(&bandloc(&["--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&bandloc(&["--config", dir.path().join("missing").to_str().unwrap(), "lyapunov"])), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&bandloc(&["lyapunov", "--nu", "bogus"])), 2);
    assert_eq!(code(&bandloc(&["no-such-command"])), 2);
    assert_eq!(code(&bandloc(&["lyapunov", "--t", "1.5"])), 2);
    assert_eq!(code(&bandloc(&["average", "--grid", "32", "--size", "40"])), 2);
    let o = bandloc(&[
        "lyapunov",
        "--steps",
        "10",
        "--runs",
        "2",
        "--alpha-grid",
        "0,1,1",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot write"));
    // a failing acceptance criterion is a numerical-check failure
    let o = bandloc(&["selftest", "--criteria", "8"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let expected = if v[0]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true) { 0 } else { 3 };
    assert_eq!(code(&o), expected);
    assert_eq!(code(&bandloc(&["selftest", "--criteria", "2"])), 0);
}

#[test]
fn fuerstenberg_example() {
    let o = bandloc(&["fuerstenberg", "--t", "0.5", "--theta", "0", "--eta", "3.14159"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certificate"]["noncompact_witnessed"], true);
    assert!(v["certificate"]["trace_k"].as_f64().unwrap() > 2.0);
    assert!(v["growth_rate"].as_f64().unwrap() > 1.0);
    let o = bandloc(&["fuerstenberg", "--theta", "1", "--eta", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certificate"]["noncompact_witnessed"], false);
    assert!(v["growth_rate"].is_null());
}

#[test]
fn cmv_check_example() {
    let o = bandloc(&["cmv-check", "--r", "0.6", "--size", "200", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["defect"].as_f64().unwrap() < 1e-12);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("cmv-check: interior defect"));
}

#[test]
fn build_writes_csv_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let o = bandloc(&["build", "--flavor", "u", "--size", "12", "--seed", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("row,col,re,im\n"));
    let header = fs::read_to_string(Path::new(&format!("{}.header.json", path.display()))).unwrap();
    let h: serde_json::Value = serde_json::from_str(&header).unwrap();
    assert_eq!(h["flavor"], "U-full");
    assert_eq!(h["offset"], -6);
    assert_eq!(h["seed"], 4);
    assert_eq!(code(&bandloc(&["build", "--flavor", "s", "--size", "12", "--offset", "-5"])), 2);
}

#[test]
fn cyclicity_reports_both_ranks() {
    let o = bandloc(&["cyclicity", "--lattice", "half", "--size", "12", "--seed", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rank"], 12);
    assert_eq!(v["arnoldi_rank"], 12);
    let o = bandloc(&["cyclicity", "--operator", "diagonal", "--size", "20"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rank"], 2);
}

#[test]
fn every_subcommand_documents_its_output() {
    let expect = [
        ("build", "row,col,re,im"),
        ("lyapunov", "alpha,gamma_hat"),
        ("spectrum", "distance_to_sigma"),
        ("localize", "bin_center,count"),
        ("average", "n,re,im,abs"),
        ("fuerstenberg", "noncompact_witnessed"),
        ("cmv-check", "defect"),
        ("cyclicity", "singular_value"),
        ("selftest", "criterion"),
    ];
    for (sub, needle) in expect {
        let o = bandloc(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        assert!(text.contains(needle), "{sub}: {text}");
        assert!(text.contains("--out") && text.contains("--format"), "{sub}");
    }
    let o = bandloc(&["--help"]);
    assert!(stdout(&o).contains("--jobs") && stdout(&o).contains("--config"));
}

#[test]
fn spectrum_and_average_outputs() {
    let o = bandloc(&["spectrum", "--size", "100", "--nu", "arc:0,0.3", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["eigenvectors"].as_array().unwrap().len(), 100);
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
    let o = bandloc(&["average", "--size", "40", "--grid", "64", "--format", "csv"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().nth(1).unwrap().starts_with("0,1.0000000000000000e0,"));
}
