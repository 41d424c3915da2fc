use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpt-litho"))
        .args(args)
        .env_remove("CPT_LITHO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_csv(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("zeta,density"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn fringe_writes_profile_with_expected_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fringe.csv");
    let o = cpt(&["fringe", "--n", "10", "--points", "400", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 400);
    for (z, d) in rows {
        let m = z / (PI / 10.0);
        if (m - m.round()).abs() < 1e-9 {
            assert!(d.abs() < 1e-12, "density {d} at ζ = {z}");
        }
    }
}

#[test]
fn period_prints_scaled_wavelength() {
    let o = cpt(&["period", "--wavelength", "817e-9", "--n", "10"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "4.085e-08");
}

#[test]
fn fourier_of_uniform_plan_is_spectrally_pure() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("uniform10.json");
    let plan_json = cpt_litho::fields::uniform_phase_plan(10).unwrap().to_json().unwrap();
    fs::write(&plan, plan_json).unwrap();
    let o = cpt(&["fourier", "--plan-file", plan.to_str().unwrap()]);
    assert!(o.status.success());
    let coeffs = cpt_litho::fourier::LaurentCoeffs::from_json(&stdout(&o)).unwrap();
    for mu in 1..=9 {
        assert!(coeffs.get(mu).norm() <= 1e-10, "c_{mu} = {}", coeffs.get(mu));
    }
    assert!(coeffs.get(10).norm() > 1e-4);
}

#[test]
fn decohere_profile_spans_full_contrast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("retention.csv");
    let o = cpt(&[
        "decohere", "--gamma-d", "1.0", "--branch", "1.0", "--intensity", "1.0", "--points", "64", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out);
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.1).fold(1.0, f64::min);
    assert!(max > 0.99 && min < 1e-8);
}

#[test]
fn fit1d_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = ["fit1d", "--target", "square", "--n", "10", "--seed", "7", "--starts", "8", "--out"];
    for path in [&a, &b] {
        let mut v = args.to_vec();
        v.push(path.to_str().unwrap());
        let o = cpt(&v);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["peak_density"].as_f64().unwrap() > 0.0);
    assert_eq!(report["plan"].as_array().unwrap().len(), 10);
    assert_eq!(report["starts"].as_array().unwrap().len(), 8);
}

#[test]
fn config_and_flags_give_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"n": 4, "points": 32, "gamma_d": 0.5, "branch": 2.0, "intensity": 0.3}"#).unwrap();
    let from_config = cpt(&["--config", config.to_str().unwrap(), "decohere"]);
    let from_flags = cpt(&[
        "decohere", "--n", "4", "--points", "32", "--gamma-d", "0.5", "--branch", "2.0", "--intensity", "0.3",
    ]);
    assert!(from_config.status.success() && from_flags.status.success());
    assert_eq!(from_config.stdout, from_flags.stdout);
    let overridden = cpt(&["--config", config.to_str().unwrap(), "decohere", "--points", "16"]);
    assert_eq!(stdout(&overridden).lines().count(), 17);
}

#[test]
fn fit2d_reports_full_plan() {
    let o = cpt(&[
        "fit2d", "--target", "c-shape", "--angles", "2", "--steps", "2", "--grid", "12", "--starts", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["plan"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes() {
    assert_eq!(cpt(&["fringe", "--bogus"]).status.code(), Some(1));
    assert_eq!(cpt(&["--help"]).status.code(), Some(0));
    assert_eq!(cpt(&["period", "--wavelength", "-1"]).status.code(), Some(1));
    assert_eq!(cpt(&["localize", "--s", "0.1"]).status.code(), Some(1));
    // a single iteration cannot meet any convergence test; the report is
    // still written
    let o = cpt(&["fit1d", "--n", "10", "--starts", "2", "--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["starts"].as_array().unwrap().iter().all(|s| s["converged"] == false));
}

#[test]
fn fit_config_keys_reach_nested_options() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fit.json");
    fs::write(&config, r#"{"target": "square", "n": 4, "starts": 3, "seed": 11}"#).unwrap();
    let o = cpt(&["--config", config.to_str().unwrap(), "fit1d"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["starts"].as_array().unwrap().len(), 3);
    assert_eq!(report["plan"].as_array().unwrap().len(), 4);
    fs::write(&config, r#"{"n": 4, "bogus": 1}"#).unwrap();
    assert_eq!(cpt(&["--config", config.to_str().unwrap(), "fit1d"]).status.code(), Some(1));
}

#[test]
fn samples_target_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("target.csv");
    let mut text = String::from("zeta,value\n");
    for nu in -10..10 {
        let z = nu as f64 * PI / 20.0;
        text.push_str(&format!("{z},{}\n", z.cos().powi(6)));
    }
    fs::write(&csv, text).unwrap();
    let o = cpt(&["fit1d", "--target", "samples", "--samples-file", csv.to_str().unwrap(), "--n", "3", "--starts", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["distance"].as_f64().unwrap() < 1e-6);
}
