//! Command runner behind the `bookend` binary.
//!
//! [`run`] executes one [`RunConfig`] and writes its artifacts (JSON report,
//! text summary, forest plot, CSV tables) into the output directory.

pub mod args;
pub mod ingest;
pub mod plot;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::SamplerConfig;
use crate::meta_core::{exact_mixture_or, naive_average_log_or, naive_baseline, Dataset, ScenarioParams};
use crate::models::{fit, FitResult, ModelKind, ModelSpec, CONVERGED_RHAT};
use crate::simulate::{bias_sweep, simulate, SimDesign, SimStudy, SweepCell, SweepRow, SweepTemplate};
use crate::workflow::{assess_baseline_spread, identify_bookends, sensitivity_analysis, WorkflowOptions};

pub use ingest::{emit_dataset, ingest, parse_dataset};
pub use plot::{render_forest_svg, ForestRow, PlotColors, RowKind};
pub use report::{sig6, text_summary, AttenuationSection, FitPurpose, FitReport, Report, SimulationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// Artifacts were written but some R-hat is at or above [`HARD_RHAT`].
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const HARD_RHAT: f64 = 1.05;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const PLOT_FILE: &str = "forest.svg";
pub const DATA_FILE: &str = "data.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Diagnose,
    Simulate,
    Sweep,
    Attenuation,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Diagnose => "diagnose",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Attenuation => "attenuation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    StructuredReport,
    TextSummary,
    ForestPlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub gaps: Vec<f64>,
    pub ws: Vec<f64>,
    pub ds: Vec<f64>,
    pub replications: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { gaps: vec![0.0, 1.0, 2.0, 4.0], ws: vec![0.5], ds: vec![-0.5], replications: 200 }
    }
}

impl SweepSettings {
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::with_capacity(self.gaps.len() * self.ws.len() * self.ds.len());
        for &gap in &self.gaps {
            for &w in &self.ws {
                for &d in &self.ds {
                    cells.push(SweepCell { gap, w, d });
                }
            }
        }
        cells
    }
}

/// Everything one invocation needs. The seed lives in `sampler.seed` and is
/// also used for data simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model: ModelKind,
    pub bookend_low: Option<String>,
    pub bookend_high: Option<String>,
    pub prior_sd_logodds: f64,
    pub tau_prior_scale: f64,
    pub sampler: SamplerConfig,
    pub spread_threshold: f64,
    /// Scenario for `attenuation` and `simulate`; `mu1` and `arm_size` also
    /// seed the sweep template.
    pub scenario: ScenarioParams,
    /// Study populations for `simulate`; empty means population 1,
    /// population 2 and one mixture at `scenario.w`.
    pub populations: Vec<SimStudy>,
    pub sweep: SweepSettings,
    pub formats: Vec<OutputFormat>,
    pub colors: PlotColors,
}

impl RunConfig {
    pub fn new(command: Command, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            command,
            input: None,
            out_dir: out_dir.into(),
            model: ModelKind::StandardFe,
            bookend_low: None,
            bookend_high: None,
            prior_sd_logodds: 10.0,
            tau_prior_scale: 1.0,
            sampler: SamplerConfig::default(),
            spread_threshold: 1.0,
            scenario: ScenarioParams { mu1: 0.0, mu2: -2.0, d: -0.5, w: 0.5, arm_size: 1000 },
            populations: Vec::new(),
            sweep: SweepSettings::default(),
            formats: vec![OutputFormat::StructuredReport, OutputFormat::TextSummary, OutputFormat::ForestPlot],
            colors: PlotColors::default(),
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    fn model_spec(&self, kind: ModelKind, low: Option<String>, high: Option<String>) -> ModelSpec {
        ModelSpec {
            kind,
            bookend_low: low,
            bookend_high: high,
            prior_sd_logodds: self.prior_sd_logodds,
            tau_prior_scale: self.tau_prior_scale,
        }
    }

    fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if !(self.spread_threshold >= 0.0) {
            return Err(Error::arg(format!("spread threshold {} must be non-negative", self.spread_threshold)));
        }
        let needs_input = matches!(self.command, Command::Fit | Command::Diagnose);
        if needs_input && self.input.is_none() {
            return Err(Error::arg(format!("{} needs an input file", self.command.name())));
        }
        let overrides = self.bookend_low.is_some() || self.bookend_high.is_some();
        if self.command == Command::Fit && self.model != ModelKind::Bookend && overrides {
            return Err(Error::arg("--bookend-low/--bookend-high only apply to the bookend model"));
        }
        Ok(())
    }
}

/// Exit status, paths written, and the text summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub report: Report,
    pub text: String,
}

fn convergence_check(report: &mut Report, fit: &FitResult, label: &str) {
    let rhats: Vec<_> = fit.summary.params.iter().map(|p| (p.name.as_str(), p.rhat)).collect();
    let hard: Vec<_> = rhats.iter().filter(|(_, r)| r.is_none_or(|r| r >= HARD_RHAT)).collect();
    if !hard.is_empty() {
        report.hard_convergence_failure = true;
        let names: Vec<_> = hard.iter().map(|(n, r)| format!("{n} ({})", r.map_or("undefined".into(), sig6))).collect();
        report.warnings.push(format!("{label}: R-hat at or above {HARD_RHAT} for {}", names.join(", ")));
    } else if !fit.converged {
        let max = fit.summary.max_rhat().map_or("undefined".into(), sig6);
        report.warnings.push(format!("{label}: max R-hat {max} is not below the {CONVERGED_RHAT} convergence target"));
    }
}

fn study_rows(report: &Report) -> Vec<ForestRow> {
    let Some(naive) = &report.naive_baseline else { return Vec::new() };
    naive
        .per_study
        .iter()
        .map(|(study, e)| ForestRow {
            label: format!("Study {study}"),
            estimate: e.log_or,
            lower: e.ci95.0,
            upper: e.ci95.1,
            kind: RowKind::Study,
        })
        .collect()
}

fn model_row(fit: &FitResult) -> ForestRow {
    let d = fit.effect();
    ForestRow {
        label: fit.model.kind.label().to_string(),
        estimate: d.mean,
        lower: d.q025,
        upper: d.q975,
        kind: RowKind::Model(fit.model.kind),
    }
}

fn load(cfg: &RunConfig, report: &mut Report) -> Result<Dataset> {
    let path = cfg.input.as_ref().expect("validated");
    let data = ingest(path)?;
    report.data = data.arms().to_vec();
    let naive = naive_baseline(&data);
    for id in &naive.excluded {
        report.warnings.push(format!("study {id} has no information on the odds ratio and is omitted from the observed estimates"));
    }
    report.naive_baseline = Some(naive);
    Ok(data)
}

fn run_fit(cfg: &RunConfig, report: &mut Report) -> Result<Vec<ForestRow>> {
    let data = load(cfg, report)?;
    let mut rows = study_rows(report);
    let primary = if cfg.model == ModelKind::Bookend {
        let (low, high) = match (&cfg.bookend_low, &cfg.bookend_high) {
            (Some(low), Some(high)) => (low.clone(), high.clone()),
            _ => {
                let fe = fit(&data, &cfg.model_spec(ModelKind::StandardFe, None, None), &cfg.sampler)?;
                convergence_check(report, &fe, "bookend selection fit");
                let (low, high) = identify_bookends(&fe, &data)?;
                report.fits.push(FitReport::new(FitPurpose::BookendSelection, &fe));
                rows.push(model_row(&fe));
                (cfg.bookend_low.clone().unwrap_or(low), cfg.bookend_high.clone().unwrap_or(high))
            }
        };
        fit(&data, &cfg.model_spec(ModelKind::Bookend, Some(low), Some(high)), &cfg.sampler)?
    } else {
        let f = fit(&data, &cfg.model_spec(cfg.model, None, None), &cfg.sampler)?;
        if f.model.kind == ModelKind::StandardFe && data.n_studies() >= 2 {
            let spread = assess_baseline_spread(&f, cfg.spread_threshold)?;
            if spread.flag {
                report.warnings.push(format!(
                    "baseline log-odds spread {} exceeds {}; the pooled odds ratio may be attenuated by non-collapsibility",
                    sig6(spread.spread),
                    sig6(cfg.spread_threshold)
                ));
            }
        }
        f
    };
    convergence_check(report, &primary, primary.model.kind.label());
    report.fits.push(FitReport::new(FitPurpose::Primary, &primary));
    rows.push(model_row(&primary));
    Ok(rows)
}

fn run_diagnose(cfg: &RunConfig, report: &mut Report) -> Result<Vec<ForestRow>> {
    let data = load(cfg, report)?;
    let opts = WorkflowOptions {
        spread_threshold: cfg.spread_threshold,
        bookend_low: cfg.bookend_low.clone(),
        bookend_high: cfg.bookend_high.clone(),
        prior_sd_logodds: cfg.prior_sd_logodds,
        ..WorkflowOptions::default()
    };
    let analysis = sensitivity_analysis(&data, &cfg.sampler, &opts)?;
    convergence_check(report, &analysis.standard_fit, "standard-fe");
    convergence_check(report, &analysis.bookend_fit, "bookend");
    report.fits.push(FitReport::new(FitPurpose::Comparison, &analysis.standard_fit));
    report.fits.push(FitReport::new(FitPurpose::Primary, &analysis.bookend_fit));
    report.warnings.extend(analysis.report.warnings.iter().cloned());
    if analysis.report.flag_spread {
        report.warnings.push(format!(
            "baseline log-odds spread {} exceeds {}",
            sig6(analysis.report.spread),
            sig6(analysis.report.spread_threshold)
        ));
    }
    if analysis.report.flag_discrepancy {
        report.warnings.push(format!(
            "standard and bookend estimates of d differ by {} (threshold {})",
            sig6(analysis.report.discrepancy),
            sig6(analysis.report.discrepancy_threshold)
        ));
    }
    let mut rows = study_rows(report);
    rows.push(model_row(&analysis.standard_fit));
    rows.push(model_row(&analysis.bookend_fit));
    report.diagnostics = Some(analysis.report);
    Ok(rows)
}

fn run_simulate(cfg: &RunConfig, report: &mut Report) -> Result<Dataset> {
    let design = if cfg.populations.is_empty() {
        SimDesign::three_study(cfg.scenario, cfg.sampler.seed)
    } else {
        SimDesign { scenario: cfg.scenario, studies: cfg.populations.clone(), seed: cfg.sampler.seed }
    };
    let data = simulate(&design)?;
    report.data = data.arms().to_vec();
    report.naive_baseline = Some(naive_baseline(&data));
    report.simulation = Some(SimulationReport { probabilities: design.probabilities()?, design });
    Ok(data)
}

fn run_sweep(cfg: &RunConfig, report: &mut Report) -> Result<Vec<SweepRow>> {
    let cells = cfg.sweep.cells();
    if cells.is_empty() {
        return Err(Error::arg("sweep grid is empty"));
    }
    let template = SweepTemplate {
        mu1: cfg.scenario.mu1,
        arm_size: cfg.scenario.arm_size,
        sampler: cfg.sampler.clone(),
        seed: cfg.sampler.seed,
    };
    let rows = bias_sweep(&cells, &template, cfg.sweep.replications)?;
    report.sweep = Some(rows.clone());
    Ok(rows)
}

fn run_attenuation(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let result = exact_mixture_or(&cfg.scenario)?;
    let naive_average = naive_average_log_or(&[cfg.scenario.d, cfg.scenario.d, result.log_or_mix])?;
    report.attenuation = Some(AttenuationSection { scenario: cfg.scenario, result, naive_average });
    Ok(())
}

/// Sweep table as CSV, one row per cell.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "gap",
        "w",
        "d",
        "replications",
        "mean_standard_d",
        "se_standard_d",
        "mean_bookend_d",
        "se_bookend_d",
        "mean_mixed_observed_log_or",
        "se_mixed_observed_log_or",
        "exact_log_or_mix",
        "attenuation_factor",
    ])?;
    for r in rows {
        let f = |x: f64| x.to_string();
        wtr.write_record([
            f(r.cell.gap),
            f(r.cell.w),
            f(r.cell.d),
            r.replications.to_string(),
            f(r.mean_standard_d),
            f(r.se_standard_d),
            f(r.mean_bookend_d),
            f(r.se_bookend_d),
            f(r.mean_mixed_observed_log_or),
            f(r.se_mixed_observed_log_or),
            f(r.exact_log_or_mix),
            r.attenuation_factor.map_or_else(String::new, f),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input is utf-8"))
}

fn write_artifact(dir: &Path, name: &str, contents: &str, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    artifacts.push(path);
    Ok(())
}

/// Runs one command. Errors (bad input, invalid arguments) are returned as
/// `Err`; a hard convergence failure still writes every artifact and is
/// reported through [`EXIT_NOT_CONVERGED`].
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut report = Report::new(cfg);
    let mut plot_rows = None;
    let mut extra: Option<(&str, String)> = None;
    match cfg.command {
        Command::Fit => plot_rows = Some(run_fit(cfg, &mut report)?),
        Command::Diagnose => plot_rows = Some(run_diagnose(cfg, &mut report)?),
        Command::Simulate => {
            let data = run_simulate(cfg, &mut report)?;
            extra = Some((DATA_FILE, emit_dataset(&data)?));
        }
        Command::Sweep => {
            let rows = run_sweep(cfg, &mut report)?;
            extra = Some((SWEEP_FILE, sweep_csv(&rows)?));
        }
        Command::Attenuation => run_attenuation(cfg, &mut report)?,
    }

    let text = text_summary(&report);
    fs::create_dir_all(&cfg.out_dir)?;
    let mut artifacts = Vec::new();
    if cfg.wants(OutputFormat::StructuredReport) {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        write_artifact(&cfg.out_dir, REPORT_FILE, &json, &mut artifacts)?;
    }
    if cfg.wants(OutputFormat::TextSummary) {
        write_artifact(&cfg.out_dir, SUMMARY_FILE, &text, &mut artifacts)?;
    }
    if let (true, Some(rows)) = (cfg.wants(OutputFormat::ForestPlot), &plot_rows) {
        let svg = render_forest_svg("Log odds ratio with 95% intervals", rows, &cfg.colors);
        write_artifact(&cfg.out_dir, PLOT_FILE, &svg, &mut artifacts)?;
    }
    if let Some((name, contents)) = extra {
        write_artifact(&cfg.out_dir, name, &contents, &mut artifacts)?;
    }

    let exit_code = if report.hard_convergence_failure { EXIT_NOT_CONVERGED } else { EXIT_OK };
    Ok(RunOutcome { exit_code, artifacts, report, text })
}
