use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use monodromy::systems::SyntheticTwist;
use monodromy::IntMatrix;
use monodromy_cli::schema::report_violations;
use monodromy_cli::{exit_status, run_job, JobConfig, Report, Verdict};
use serde_json::{json, Value};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> JobConfig {
    JobConfig::from_json(&fs::read_to_string(configs_dir().join(name)).unwrap()).unwrap()
}

fn config(v: Value) -> JobConfig {
    JobConfig::from_json(&v.to_string()).unwrap()
}

fn verdict(r: &Report, stage: &str) -> Verdict {
    r.verdicts.iter().find(|v| v.stage == stage).unwrap_or_else(|| panic!("no stage {stage}")).verdict
}

fn check_schema(r: &Report) {
    let v: Value = serde_json::from_str(&r.to_json()).unwrap();
    let errs = report_violations(&v);
    assert!(errs.is_empty(), "{errs:?}");
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn twist_config(m: i64) -> Value {
    json!({
        "system": { "name": "synthetic-twist", "params": { "m": m } },
        "job": "full-verify",
        "loop": { "kind": "circle", "center": [0.0, 0.0], "radius": 1.0, "start_angle": 0.0, "samples": 32 },
        "seed": 5
    })
}

#[test]
fn full_verify_synthetic_twist() {
    let r = run_job(&config(twist_config(1))).unwrap();
    assert_eq!(r.results.monodromy, Some(IntMatrix::from_rows(&[vec![1, 1], vec![0, 1]])));
    assert_eq!(verdict(&r, "maslov"), Verdict::Skipped);
    for stage in ["basis", "monodromy", "rho_invariance", "kernel_chain", "section", "free_action", "mapping_torus"] {
        assert_eq!(verdict(&r, stage), Verdict::Pass, "{stage}");
    }
    assert_eq!(exit_status(&r), 0);
    check_schema(&r);
}

#[test]
fn full_verify_iso_oscillator() {
    let r = run_job(&load("iso-full-verify.json")).unwrap();
    assert_eq!(r.results.monodromy, Some(IntMatrix::identity(2)));
    assert_eq!(r.results.maslov_vector, Some(vec![2, 2]));
    assert!(r.verdicts.iter().all(|v| v.verdict == Verdict::Pass));
    assert_eq!(exit_status(&r), 0);
    check_schema(&r);
}

#[test]
fn full_verify_champagne_bottle() {
    let r = run_job(&load("champagne-full-verify.json")).unwrap();
    assert!(r.verdicts.iter().all(|v| v.verdict == Verdict::Pass), "{:?}", r.verdicts);
    let c = r.results.conjugacy.as_ref().unwrap();
    assert_eq!((c.class.as_str(), c.k.abs()), ("parabolic", 1));
    let k = r.results.maslov_vector.clone().unwrap();
    assert_eq!(num_gcd(k[0], k[1]), 2);
    assert_eq!(r.results.rho_invariant, Some(true));
    check_schema(&r);
}

fn num_gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        num_gcd(b, a % b)
    }
}

#[test]
fn non_invariant_functional_fails_the_verdict() {
    let mut v = twist_config(1);
    v["rho"] = json!([[1, 0]]);
    let r = run_job(&config(v)).unwrap();
    assert_eq!(verdict(&r, "rho_invariance"), Verdict::Fail);
    assert_eq!(exit_status(&r), 1);
    check_schema(&r);
}

#[test]
fn reports_are_reproducible() {
    for name in ["champagne-s1-action.json", "twist-mapping-torus.json"] {
        let cfg = load(name);
        let a = run_job(&cfg).unwrap().to_json();
        let b = run_job(&cfg).unwrap().to_json();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn shipped_configs_produce_schema_valid_reports() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let mut cfg = JobConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        if cfg.output.plot_dir.is_some() {
            cfg.output.plot_dir = Some(dir.path().join(path.file_stem().unwrap()));
        }
        let r = run_job(&cfg).unwrap();
        assert_eq!(exit_status(&r), 0, "{}", path.display());
        check_schema(&r);
    }
}

#[test]
fn every_tolerance_is_echoed() {
    let r = run_job(&load("aniso-refine.json")).unwrap();
    let v: Value = serde_json::from_str(&r.to_json()).unwrap();
    let t = &v["tolerances"];
    for key in ["abs_tol", "rel_tol", "newton_tol", "max_newton_iters"] {
        assert!(t["flow"][key].is_number(), "{key}");
    }
    for key in ["monodromy_rounding", "gap_safety", "mapping_torus_residual", "critical_exclusion"] {
        assert!(t[key].is_number(), "{key}");
    }
    // Refined hints span the analytic lattice, of covolume 2 pi^2.
    let b = r.results.basis.unwrap();
    let area = (b.periods[0][0] * b.periods[1][1] - b.periods[0][1] * b.periods[1][0]).abs();
    assert!((area - 2.0 * PI * PI).abs() < 1e-8);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        json!({ "system": { "name": "champagne-bottle" }, "job": "monodromy" }),
        json!({ "system": { "name": "no-such-system" }, "job": "periods", "value": [1.0, 1.0] }),
        json!({ "system": { "name": "champagne-bottle" }, "job": "periods", "value": [0.5, 0.8], "extra": 1 }),
        json!({ "system": { "name": "aniso-oscillator" }, "job": "refine", "value": [0.5, 0.5] }),
        json!({ "system": { "name": "iso-oscillator" }, "job": "periods", "value": [0.5, 0.5],
                "tolerances": { "flow": { "abs_tol": -1.0 } } }),
    ];
    for v in bad {
        assert!(JobConfig::from_json(&v.to_string()).is_err(), "{v}");
    }
}

#[test]
fn trajectory_csv_matches_analytic_interpolant() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = twist_config(3);
    v["job"] = json!("monodromy");
    v["output"] = json!({ "plot_dir": dir.path() });
    let r = run_job(&config(v)).unwrap();
    assert_eq!(r.diagnostics.plot_files, vec!["trajectory.csv".to_string()]);
    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header, ["s", "T1_1", "T1_2", "T2_1", "T2_2"]);
    assert_eq!(rows.len(), 33);
    let tw = SyntheticTwist::new(3, 1.0);
    for row in &rows {
        let b = tw.basis_at_angle(2.0 * PI * row[0]);
        let expect = [b[(0, 0)], b[(1, 0)], b[(0, 1)], b[(1, 1)]];
        for (x, e) in row[1..].iter().zip(expect) {
            assert!((x - e).abs() < 1e-10);
        }
    }
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let field = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.replace('.', "").len(), 17);
}

#[test]
fn constant_path_gives_constant_columns() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_job(&config(json!({
        "system": { "name": "iso-oscillator" },
        "job": "monodromy",
        "loop": { "kind": "polyline", "points": [[0.7, 0.4], [0.7, 0.4], [0.7, 0.4]] },
        "output": { "plot_dir": dir.path() }
    })))
    .unwrap();
    assert_eq!(r.results.monodromy, Some(IntMatrix::identity(2)));
    let (_, rows) = read_csv(&dir.path().join("trajectory.csv"));
    for row in &rows {
        assert_eq!(row[1..], rows[0][1..]);
    }
}

#[test]
fn maslov_phase_curve_advances_by_two_turns() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_job(&config(json!({
        "system": { "name": "iso-oscillator" },
        "job": "maslov",
        "value": [0.5, 0.5],
        "output": { "plot_dir": dir.path() }
    })))
    .unwrap();
    assert_eq!(r.results.maslov_vector, Some(vec![2, 2]));
    for i in 1..=2 {
        let (header, rows) = read_csv(&dir.path().join(format!("maslov_cycle_{i}.csv")));
        assert_eq!(header, ["s", "phase"]);
        let gain = rows.last().unwrap()[1] - rows[0][1];
        assert!((gain - 4.0 * PI).abs() < 1e-3);
        assert_eq!(rows.last().unwrap()[0], 1.0);
    }
}

fn binary(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_monodromy")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn binary_exit_codes_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("twist.json");
    fs::write(&cfg, twist_config(1).to_string()).unwrap();
    let (code, stdout, _) = binary(&["run", cfg.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["config"]["seed"], 99);
    let (_, again, _) = binary(&["run", cfg.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(stdout, again);

    let mut failing = twist_config(1);
    failing["rho"] = json!([[1, 0]]);
    fs::write(&cfg, failing.to_string()).unwrap();
    assert_eq!(binary(&["run", cfg.to_str().unwrap()]).0, 1);

    fs::write(&cfg, json!({ "system": { "name": "champagne-bottle" }, "job": "monodromy" }).to_string()).unwrap();
    let (code, _, stderr) = binary(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("invalid config"), "{stderr}");

    // A loop through the critical value is a runtime error with module context.
    fs::write(
        &cfg,
        json!({
            "system": { "name": "champagne-bottle" },
            "job": "monodromy",
            "loop": { "kind": "polyline", "points": [[0.5, 0.0], [0.0, 0.0], [0.25, 0.3]] }
        })
        .to_string(),
    )
    .unwrap();
    let (code, _, stderr) = binary(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("lattice"), "{stderr}");
}
