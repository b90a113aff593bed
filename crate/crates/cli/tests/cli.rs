use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cot_lab::report::Report;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cot-lab"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).arg("--quiet").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report on stdout")
}

fn command_for(mode: &str) -> &'static str {
    match mode {
        "ot" | "cot" | "mot" => "solve",
        "order" => "check-order",
        "envelope" => "envelope",
        "polar" => "polar-scan",
        "gap" => "gap-demo",
        "normalize" => "normalize-dual",
        "quotient" => "quotient-dist",
        other => panic!("no command for {other}"),
    }
}

fn fixtures() -> Vec<(PathBuf, String)> {
    let mut all: Vec<_> = fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| {
            let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
            let mode = v["mode"].as_str().unwrap().to_string();
            (p, mode)
        })
        .collect();
    all.sort();
    all
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn verify(problem: &Path, report: &Path) -> Output {
    run(&[
        "verify",
        "--input",
        problem.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ])
}

#[test]
fn diagonal_indicator_has_value_one() {
    let out = run(&["solve", "--input", fixture("ot_2x2.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["status"], "ok");
    let v = &r["values"];
    assert!((v["primal"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["dual"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn unordered_martingale_problem_exits_two_with_witness() {
    let out = run(&["solve", "--input", fixture("mot_not_ordered.json").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let r = json(&out);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "not_convex_order");
    // u_μ(0) = 1 > u_ν(0) = 0
    assert_eq!(r["error"]["details"]["witness"].as_f64(), Some(0.0));
}

#[test]
fn gap_demo_writes_three_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&["gap-demo", "--n", "1001", "--shifts", "1,2,5", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let field = |row: &str, name: &str| -> f64 {
        let col = header.iter().position(|h| *h == name).unwrap();
        row.split(',').nth(col).unwrap().parse().unwrap()
    };
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    // one-step shift: 10·(0.0035 + 0.0025 + 0.001) − 1
    assert!(field(rows[0], "shortfall") <= -0.9, "{}", rows[0]);
    // the bound grows roughly linearly in the shift but stays negative
    let shortfalls: Vec<f64> = rows.iter().map(|r| field(r, "shortfall")).collect();
    assert!(shortfalls.windows(2).all(|w| w[0] < w[1]), "{shortfalls:?}");
    assert!(shortfalls.iter().all(|&s| s < 0.0));
    for (row, s) in rows.iter().zip([1.0, 2.0, 5.0]) {
        assert!((field(row, "defect") - s / 1000.0).abs() < 1e-15);
        assert!((field(row, "offdiag_mass") - 1.0).abs() < 1e-12);
    }
}

#[test]
fn every_fixture_report_passes_verify() {
    let dir = tempfile::tempdir().unwrap();
    for (path, mode) in fixtures() {
        let report = dir.path().join("report.json");
        let out = run(&[command_for(&mode), "--input", path.to_str().unwrap(), "--output", report.to_str().unwrap()]);
        assert!(matches!(code(&out), 0 | 2), "{}: exit {}", path.display(), code(&out));
        let v = verify(&path, &report);
        assert_eq!(code(&v), 0, "{}: {}", path.display(), String::from_utf8_lossy(&v.stdout));
        let r = json(&v);
        assert_eq!(r["mode"], "verify");
        assert_eq!(r["diagnostics"]["target_mode"], mode.as_str());
    }
}

#[test]
fn failed_order_certificate_is_rechecked() {
    let dir = tempfile::tempdir().unwrap();
    let problem = fixture("order_not_ordered.json");
    let report = dir.path().join("report.json");
    let out = run(&["check-order", "--input", problem.to_str().unwrap(), "--output", report.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let v = json(&verify(&problem, &report));
    let checks = v["diagnostics"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["pass"], true);

    // the same failure claimed for ordered marginals cannot be certified
    let ordered: Value = serde_json::from_str(&fs::read_to_string(fixture("order_ordered.json")).unwrap()).unwrap();
    let mut forged: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    forged["error"]["details"]["farkas"] = Value::Null;
    let p = write_json(dir.path(), "ordered.json", &ordered);
    let r = write_json(dir.path(), "forged.json", &forged);
    assert_eq!(code(&verify(&p, &r)), 1);
}

fn solved_ot() -> (PathBuf, Value) {
    let problem = fixture("ot_2x2.json");
    let out = run(&["solve", "--input", problem.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    (problem, json(&out))
}

#[test]
fn tampered_dual_value_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let (problem, mut r) = solved_ot();
    let fresh = write_json(dir.path(), "fresh.json", &r);
    assert_eq!(code(&verify(&problem, &fresh)), 0);
    r["values"]["dual"] = (r["values"]["dual"].as_f64().unwrap() + 1.0).into();
    let tampered = write_json(dir.path(), "tampered.json", &r);
    let out = verify(&problem, &tampered);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["kind"], "verification");
    let failed: Vec<&str> = v["diagnostics"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"reported_gap") || failed.contains(&"dual_value"), "{failed:?}");
}

#[test]
fn negated_coupling_entry_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let (problem, mut r) = solved_ot();
    let w = r["witnesses"]["coupling"][0][2].as_f64().unwrap();
    assert!(w > 0.0);
    r["witnesses"]["coupling"][0][2] = (-w).into();
    let tampered = write_json(dir.path(), "tampered.json", &r);
    let out = verify(&problem, &tampered);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    let neg = v["diagnostics"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "nonnegativity")
        .unwrap()
        .clone();
    assert_eq!(neg["pass"], false);
}

#[test]
fn mismatched_files_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let (_, r) = solved_ot();
    let report = write_json(dir.path(), "report.json", &r);
    let out = verify(&fixture("quotient.json"), &report);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["error"]["kind"], "parse");

    // same mode, different grid
    let out = verify(&fixture("ot_quasi_sure.json"), &report);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["error"]["kind"], "shape");
}

#[test]
fn reports_are_deterministic() {
    for (path, mode) in fixtures() {
        let args = [command_for(&mode), "--input", path.to_str().unwrap(), "--seed", "7"];
        let a = run(&args);
        let b = bin().args(args).arg("--quiet").env("COT_LAB_THREADS", "1").output().unwrap();
        assert_eq!(a.stdout, b.stdout, "{}", path.display());
    }
}

#[test]
fn sampled_polar_scan_depends_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut p: Value = serde_json::from_str(&fs::read_to_string(fixture("polar_mot.json")).unwrap()).unwrap();
    p["parameters"]["sample"] = 6.into();
    let path = write_json(dir.path(), "sampled.json", &p);
    let with = |seed: &str| run(&["polar-scan", "--input", path.to_str().unwrap(), "--seed", seed]).stdout;
    assert_eq!(with("3"), with("3"));
    let r: Value = serde_json::from_slice(&with("3")).unwrap();
    assert_eq!(r["diagnostics"]["subset"].as_array().unwrap().len(), 6);
    assert_eq!(r["diagnostics"]["certificate"]["scanned"], 6);
    let report = write_json(dir.path(), "report.json", &r);
    assert_eq!(code(&verify(&path, &report)), 0);
}

#[test]
fn reports_round_trip_losslessly() {
    for (path, mode) in fixtures() {
        let out = run(&[command_for(&mode), "--input", path.to_str().unwrap()]);
        let text = String::from_utf8(out.stdout).unwrap();
        let report = Report::parse(&text).unwrap();
        assert_eq!(report.to_json(), text, "{}", path.display());
        assert_eq!(Report::parse(&report.to_json()).unwrap(), report);
    }
}

#[test]
fn output_flag_writes_the_report_file_only() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["solve", "--input", fixture("ot_2x2.json").to_str().unwrap(), "--output", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("r.json")]);
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["mode"], "ot");
}

#[test]
fn csv_headers_are_fixed_per_mode() {
    let expected = [
        ("ot", "i,j,weight"),
        ("cot", "i,j,weight"),
        ("mot", "i,j,weight"),
        ("order", "t,u_mu,u_nu"),
        ("envelope", "x,phi,envelope"),
        ("polar", "i,j,max_mass"),
        ("gap", "n,shift,dist_x,dist_y,defect,offdiag_mass,shortfall"),
        ("normalize", "part,index,value"),
        ("quotient", "i,j,measure"),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (path, mode) in fixtures() {
        let csv = dir.path().join("t.csv");
        let _ = fs::remove_file(&csv);
        let out = run(&[command_for(&mode), "--input", path.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
        if code(&out) != 0 {
            assert!(!csv.exists(), "csv written for a failed run");
            continue;
        }
        let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
        let want = expected.iter().find(|(m, _)| *m == mode).unwrap().1;
        assert_eq!(header, want, "{}", path.display());
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let base: Value = serde_json::from_str(&fs::read_to_string(fixture("cot_3x3.json")).unwrap()).unwrap();
    let ones = serde_json::json!([[1, 1, 1], [1, 1, 1], [1, 1, 1]]);

    let mut inadmissible = base.clone();
    inadmissible["constraints"] = serde_json::json!([ones]);
    let out = run(&["solve", "--input", write_json(dir.path(), "a.json", &inadmissible).to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&out)["error"]["kind"], "inadmissible");

    let mut empty = base.clone();
    empty["constraints"] = serde_json::json!([ones, ones]);
    let out = run(&["solve", "--input", write_json(dir.path(), "b.json", &empty).to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["kind"], "empty_constraint_set");

    let mut shape = base.clone();
    shape["payoff"] = serde_json::json!([[1, 0], [0, 1]]);
    let out = run(&["solve", "--input", write_json(dir.path(), "c.json", &shape).to_str().unwrap()]);
    assert_eq!(code(&out), 4);

    let mut unnormalized = base.clone();
    unnormalized["mu"] = serde_json::json!([0.5, 0.5, 0.5]);
    let out = run(&["solve", "--input", write_json(dir.path(), "d.json", &unnormalized).to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["error"]["kind"], "not_normalized");

    let garbled = dir.path().join("e.json");
    fs::write(&garbled, "{\"schema\": 1, \"mode\":").unwrap();
    let out = run(&["solve", "--input", garbled.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["status"], "error");

    let out = run(&["check-order", "--input", fixture("ot_2x2.json").to_str().unwrap()]);
    assert_eq!(code(&out), 4);

    let out = run(&["solve", "--no-such-flag"]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["error"]["kind"], "parse");

    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);

    let out = bin()
        .args(["solve", "--input", fixture("ot_2x2.json").to_str().unwrap()])
        .env("COT_LAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
}
