mod common;

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use bookend::cli::*;
use bookend::meta_core::{ArmData, Dataset, Treatment};
use bookend::models::ModelKind;
use proptest::prelude::*;
use serde_json::Value;

fn write_table1(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("table1.csv");
    fs::write(&path, common::TABLE1_CSV).unwrap();
    path
}

fn fit_config(dir: &Path, model: ModelKind) -> RunConfig {
    let mut cfg = RunConfig::new(Command::Fit, dir.join("out"));
    cfg.input = Some(write_table1(dir));
    cfg.model = model;
    cfg
}

fn report_json(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(REPORT_FILE)).unwrap()).unwrap()
}

#[test]
fn ingest_table1_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = ingest(write_table1(dir.path())).unwrap();
    assert_eq!(data.n_studies(), 3);
    assert_eq!(data.arms()[0], ArmData::new("1", Treatment::Control, 514, 1000).unwrap());
    assert!(ingest(dir.path().join("missing.csv")).is_err());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert!(ingest(&empty).unwrap_err().to_string().contains("no studies"));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "study,treatment,events,n\n1,1,514,1000\n1,2,1001,1000\n").unwrap();
    let msg = ingest(&bad).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn fit_standard_fe_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fit_config(dir.path(), ModelKind::StandardFe);
    let outcome = run(&cfg).unwrap();
    assert_eq!(outcome.exit_code, EXIT_OK);
    assert_eq!(outcome.artifacts.len(), 3);
    let out = dir.path().join("out");
    for f in [REPORT_FILE, SUMMARY_FILE, PLOT_FILE] {
        assert!(out.join(f).exists(), "{f}");
    }
    let json = report_json(&out);
    assert_eq!(json["seed"], 20_240_617);
    assert_eq!(json["config"]["sampler"]["seed"], 20_240_617);
    let fit = &json["fits"][0];
    assert_eq!(fit["purpose"], "primary");
    let d = fit["parameters"].as_array().unwrap().iter().find(|p| p["name"] == "d").unwrap();
    assert!((d["mean"].as_f64().unwrap() + 0.458).abs() < 0.02);
    assert!((d["q025"].as_f64().unwrap() + 0.58).abs() < 0.03);
    assert!((d["q975"].as_f64().unwrap() + 0.34).abs() < 0.03);
    // Spread above 1 on Table 1 is surfaced as a warning.
    assert!(json["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("spread")));
    assert!(outcome.text.contains("standard-fe"));
}

#[test]
fn fit_bookend_with_auto_selection() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&fit_config(dir.path(), ModelKind::Bookend)).unwrap();
    assert_eq!(outcome.exit_code, EXIT_OK);
    let report = &outcome.report;
    assert_eq!(report.fits.len(), 2);
    assert_eq!(report.fits[0].purpose, FitPurpose::BookendSelection);
    let primary = report.primary_fit().unwrap();
    assert_eq!(primary.model.bookend_low.as_deref(), Some("2"));
    assert_eq!(primary.model.bookend_high.as_deref(), Some("1"));
    let d = primary.param("d").unwrap();
    assert!((d.mean + 0.492).abs() < 0.02);
    assert!((d.q025 + 0.62).abs() < 0.03 && (d.q975 + 0.37).abs() < 0.03);
}

#[test]
fn report_lists_every_parameter_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fit_config(dir.path(), ModelKind::StandardRe);
    cfg.sampler = common::quick(4);
    run(&cfg).unwrap();
    let json = report_json(&dir.path().join("out"));
    let params = json["fits"][0]["parameters"].as_array().unwrap();
    let mut names: Vec<&str> = params.iter().map(|p| p["name"].as_str().unwrap()).collect();
    names.sort();
    let expected = ["d", "delta[1]", "delta[2]", "delta[3]", "mu[1]", "mu[2]", "mu[3]", "tau"];
    assert_eq!(names, expected);
    for p in params {
        for key in ["mean", "sd", "q025", "q50", "q975", "rhat", "ess_bulk", "role"] {
            assert!(p.get(key).is_some(), "{key} missing in {p}");
        }
    }
    // Round-trip of the whole report type.
    let report: Report = serde_json::from_value(json).unwrap();
    assert_eq!(report.fits[0].parameters.len(), 8);
}

#[test]
fn rerun_with_recorded_seed_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fit_config(dir.path(), ModelKind::Bookend);
    cfg.sampler = common::quick(99);
    let out = dir.path().join("out");
    run(&cfg).unwrap();
    let first = fs::read(out.join(REPORT_FILE)).unwrap();
    let first_svg = fs::read(out.join(PLOT_FILE)).unwrap();
    // Rebuild the config from the echo in the report.
    let echoed: Report = serde_json::from_slice(&first).unwrap();
    run(&echoed.config).unwrap();
    assert_eq!(fs::read(out.join(REPORT_FILE)).unwrap(), first);
    assert_eq!(fs::read(out.join(PLOT_FILE)).unwrap(), first_svg);
}

#[test]
fn diagnose_writes_both_model_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fit_config(dir.path(), ModelKind::Bookend);
    cfg.command = Command::Diagnose;
    cfg.colors.bookend = "#ff00aa".into();
    let outcome = run(&cfg).unwrap();
    let diag = outcome.report.diagnostics.as_ref().unwrap();
    assert_eq!((diag.bookend_low.as_str(), diag.bookend_high.as_str()), ("2", "1"));
    assert!((diag.discrepancy - 0.034).abs() < 0.02);
    let svg = fs::read_to_string(dir.path().join("out").join(PLOT_FILE)).unwrap();
    let defaults = PlotColors::default();
    assert!(svg.contains(&defaults.study) && svg.contains(&defaults.standard_fe) && svg.contains("#ff00aa"));
    assert!(!svg.contains(&defaults.bookend));
    let pos = |s: &str| svg.find(s).unwrap();
    assert!(pos("Study 3") < pos("standard-fe") && pos("standard-fe") < pos(">bookend<"));
    assert!(svg.contains("stroke-dasharray"));
    assert!(outcome.text.contains("discrepancy"));
}

#[test]
fn attenuation_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(Command::Attenuation, dir.path());
    let outcome = run(&cfg).unwrap();
    assert!(outcome.text.contains("attenuation factor = 0.850119 (0.850)"), "{}", outcome.text);
    assert!(outcome.text.contains("log OR_mix = -0.425060"));
    let a = outcome.report.attenuation.unwrap();
    assert_eq!(format!("{:.3}", a.result.attenuation_factor.unwrap()), "0.850");
    // No forest plot outside fit/diagnose.
    assert!(!dir.path().join(PLOT_FILE).exists());
}

#[test]
fn simulate_and_sweep_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Simulate, dir.path().join("sim"));
    cfg.sampler.seed = 12;
    let outcome = run(&cfg).unwrap();
    let data = ingest(dir.path().join("sim").join(DATA_FILE)).unwrap();
    assert_eq!(data.arms(), outcome.report.data.as_slice());
    assert_eq!(data.n_studies(), 3);

    let mut cfg = RunConfig::new(Command::Sweep, dir.path().join("sweep"));
    cfg.sampler = bookend::mcmc::SamplerConfig { burn_in: 300, total_draws: 600, thin: 1, ..Default::default() };
    cfg.sweep = SweepSettings { gaps: vec![0.0, 2.0], ws: vec![0.5], ds: vec![-0.5], replications: 2 };
    run(&cfg).unwrap();
    let table = fs::read_to_string(dir.path().join("sweep").join(SWEEP_FILE)).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("gap,w,d,replications"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(Command::Fit, dir.path());
    assert!(run(&cfg).is_err());
    let mut cfg = fit_config(dir.path(), ModelKind::StandardFe);
    cfg.bookend_low = Some("1".into());
    assert!(run(&cfg).is_err());
    let mut cfg = fit_config(dir.path(), ModelKind::StandardFe);
    cfg.sampler.thin = 0;
    assert!(run(&cfg).is_err());
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_bookend"))
}

#[test]
fn binary_attenuation_prints_factor() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["attenuation", "--mu1", "0", "--mu2", "-2", "--d", "-0.5", "--w", "0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("0.850"), "{stdout}");
}

#[test]
fn binary_reports_bad_rows_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "study,treatment,events,n\n1,1,514,1000\n1,2,1001,1000\n").unwrap();
    let out = bin().arg("fit").arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    // Very precise data, no adaptation and a far-off start: the chains
    // cannot reach the posterior in the few iterations allowed.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    fs::write(
        &path,
        "study,treatment,events,n\na,1,500000,1000000\na,2,380000,1000000\nb,1,120000,1000000\nb,2,76000,1000000\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("fit")
        .arg(&path)
        .args(["--burn-in", "1", "--samples", "300", "--thin", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_NOT_CONVERGED));
    let json = report_json(&out_dir);
    assert_eq!(json["hard_convergence_failure"], true);
    assert!(out_dir.join(PLOT_FILE).exists() && out_dir.join(SUMMARY_FILE).exists());
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec((1u64..500, 1u64..500, 0.0..=1.0f64, 0.0..=1.0f64), 1..6).prop_map(|studies| {
        let mut arms = Vec::new();
        for (i, (n1, n2, f1, f2)) in studies.into_iter().enumerate() {
            let id = if i % 2 == 0 { format!("s{i}") } else { format!("trial, {i}") };
            arms.push(ArmData::new(id.clone(), Treatment::Control, (n1 as f64 * f1) as u64, n1).unwrap());
            arms.push(ArmData::new(id, Treatment::Active, (n2 as f64 * f2) as u64, n2).unwrap());
        }
        Dataset::new(arms).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_emit_round_trip(data in arb_dataset()) {
        let text = emit_dataset(&data).unwrap();
        prop_assert_eq!(parse_dataset(text.as_bytes()).unwrap(), data);
    }
}
