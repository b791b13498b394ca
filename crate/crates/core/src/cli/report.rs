//! Structured (JSON) report and plain-text summary.
//!
//! The JSON report keeps full precision; the text summary prints floats to
//! six significant digits.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::meta_core::{AttenuationReport, ArmData, NaiveBaseline, ScenarioParams};
use crate::models::{FitResult, ModelSpec, ParamRole};
use crate::simulate::{SimDesign, SweepRow};
use crate::workflow::DiagnosticsReport;

use super::{Command, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    #[serde(flatten)]
    pub role: ParamRole,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
    pub accept_rate: f64,
}

/// Why a fit is in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitPurpose {
    Primary,
    /// Standard FE fit used to pick the bookend studies.
    BookendSelection,
    Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub purpose: FitPurpose,
    pub model: ModelSpec,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParamReport>,
    pub max_rhat: Option<f64>,
    pub converged: bool,
}

impl FitReport {
    pub fn new(purpose: FitPurpose, fit: &FitResult) -> Self {
        let parameters = fit
            .roles
            .iter()
            .enumerate()
            .map(|(i, (name, role))| {
                let s = fit.summary.get(name).expect("summary covers every parameter");
                ParamReport {
                    name: name.clone(),
                    role: role.clone(),
                    mean: s.mean,
                    sd: s.sd,
                    q025: s.q025,
                    q50: s.q50,
                    q975: s.q975,
                    rhat: s.rhat,
                    ess_bulk: s.ess_bulk,
                    accept_rate: fit.chains.accept_rates[i],
                }
            })
            .collect();
        Self {
            purpose,
            model: fit.model.clone(),
            n_chains: fit.summary.n_chains,
            draws_per_chain: fit.summary.draws_per_chain,
            parameters,
            max_rhat: fit.summary.max_rhat(),
            converged: fit.converged,
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamReport> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub design: SimDesign,
    pub probabilities: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSection {
    pub scenario: ScenarioParams,
    pub result: AttenuationReport,
    /// Naive mean of the two homogeneous log-ORs (both `d`) and the mixed one.
    pub naive_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(default)]
    pub data: Vec<ArmData>,
    pub naive_baseline: Option<NaiveBaseline>,
    #[serde(default)]
    pub fits: Vec<FitReport>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub attenuation: Option<AttenuationSection>,
    pub simulation: Option<SimulationReport>,
    pub sweep: Option<Vec<SweepRow>>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Any defined R-hat at or above the hard-failure threshold, or undefined.
    pub hard_convergence_failure: bool,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: config.command,
            seed: config.sampler.seed,
            config: config.clone(),
            data: Vec::new(),
            naive_baseline: None,
            fits: Vec::new(),
            diagnostics: None,
            attenuation: None,
            simulation: None,
            sweep: None,
            warnings: Vec::new(),
            hard_convergence_failure: false,
        }
    }

    pub fn primary_fit(&self) -> Option<&FitReport> {
        self.fits.iter().find(|f| f.purpose == FitPurpose::Primary)
    }
}

/// Formats `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding may carry into a new digit (9.999995 -> 10.00000).
        let digits = s.chars().filter(char::is_ascii_digit).collect::<String>();
        let trimmed = digits.trim_start_matches('0');
        if trimmed.len() > 6 && decimals > 0 {
            let d = decimals - 1;
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.5e}")
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), sig6)
}

fn write_fit(out: &mut String, fit: &FitReport) {
    let purpose = match fit.purpose {
        FitPurpose::Primary => "",
        FitPurpose::BookendSelection => " (bookend selection)",
        FitPurpose::Comparison => " (comparison)",
    };
    let _ = writeln!(out, "\nModel: {}{purpose}", fit.model.kind.label());
    if let (Some(low), Some(high)) = (&fit.model.bookend_low, &fit.model.bookend_high) {
        let _ = writeln!(out, "  bookends: low = {low}, high = {high}");
    }
    let _ = writeln!(
        out,
        "  chains = {}, draws per chain = {}, max R-hat = {}, converged = {}",
        fit.n_chains,
        fit.draws_per_chain,
        opt6(fit.max_rhat),
        fit.converged
    );
    let _ = writeln!(
        out,
        "  {:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>8}",
        "parameter", "mean", "sd", "2.5%", "50%", "97.5%", "R-hat", "ESS", "accept"
    );
    for p in &fit.parameters {
        let _ = writeln!(
            out,
            "  {:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>8}",
            p.name,
            sig6(p.mean),
            sig6(p.sd),
            sig6(p.q025),
            sig6(p.q50),
            sig6(p.q975),
            opt6(p.rhat),
            p.ess_bulk.map_or_else(|| "undefined".into(), |e| format!("{e:.0}")),
            format!("{:.3}", p.accept_rate)
        );
    }
}

pub fn text_summary(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", report.tool, report.version, report.command.name());
    let _ = writeln!(out, "seed: {}", report.seed);

    if let Some(naive) = &report.naive_baseline {
        let _ = writeln!(out, "\nObserved log odds ratios (Woolf):");
        let _ = writeln!(out, "  {:<12} {:>12} {:>12} {:>12} {:>12}", "study", "logOR", "SE", "2.5%", "97.5%");
        for (study, e) in &naive.per_study {
            let _ = writeln!(
                out,
                "  {:<12} {:>12} {:>12} {:>12} {:>12}",
                study,
                sig6(e.log_or),
                sig6(e.se),
                sig6(e.ci95.0),
                sig6(e.ci95.1)
            );
        }
        for study in &naive.excluded {
            let _ = writeln!(out, "  {study:<12} excluded (no information on the odds ratio)");
        }
        if let Some(p) = &naive.pooled {
            let _ = writeln!(
                out,
                "  inverse-variance pooled: {} (SE {}; 95% CI {} to {})",
                sig6(p.log_or),
                sig6(p.se),
                sig6(p.ci95.0),
                sig6(p.ci95.1)
            );
        }
    }

    for fit in &report.fits {
        write_fit(&mut out, fit);
    }

    if let Some(d) = &report.diagnostics {
        let _ = writeln!(out, "\nDiagnostics:");
        let _ = writeln!(out, "  {:<12} {:>12} {:>16}", "study", "mu_hat", "empirical logit");
        for b in &d.mu_hats {
            let _ = writeln!(out, "  {:<12} {:>12} {:>16}", b.study, sig6(b.mu_hat), sig6(b.empirical_logit));
        }
        let _ = writeln!(
            out,
            "  baseline spread = {} (threshold {}, flagged = {})",
            sig6(d.spread),
            sig6(d.spread_threshold),
            d.flag_spread
        );
        let _ = writeln!(out, "  bookends: low = {}, high = {}", d.bookend_low, d.bookend_high);
        let _ = writeln!(
            out,
            "  d standard = {}, d bookend = {}, discrepancy = {} (threshold {}, flagged = {})",
            sig6(d.d_standard.mean),
            sig6(d.d_bookend.mean),
            sig6(d.discrepancy),
            sig6(d.discrepancy_threshold),
            d.flag_discrepancy
        );
        for w in &d.w_summaries {
            let _ = writeln!(
                out,
                "  w[{}] = {} (95% CrI {} to {}){}",
                w.study,
                sig6(w.summary.mean),
                sig6(w.summary.q025),
                sig6(w.summary.q975),
                if w.boundary_warning { "  boundary" } else { "" }
            );
        }
    }

    if let Some(a) = &report.attenuation {
        let r = &a.result;
        let s = &a.scenario;
        let _ = writeln!(
            out,
            "\nScenario: mu1 = {}, mu2 = {}, d = {}, w = {}",
            sig6(s.mu1),
            sig6(s.mu2),
            sig6(s.d),
            sig6(s.w)
        );
        let _ = writeln!(out, "  p11 = {}, p12 = {}", sig6(r.p11), sig6(r.p12));
        let _ = writeln!(out, "  p21 = {}, p22 = {}", sig6(r.p21), sig6(r.p22));
        let _ = writeln!(
            out,
            "  mixed control p = {}, mixed active p = {}",
            sig6(r.p_mix_control),
            sig6(r.p_mix_active)
        );
        let _ = writeln!(out, "  OR_mix = {}", sig6(r.or_mix));
        let _ = writeln!(out, "  log OR_mix = {}", sig6(r.log_or_mix));
        let _ = writeln!(out, "  naive average log OR = {}", sig6(a.naive_average));
        match r.attenuation_factor {
            Some(f) => {
                let _ = writeln!(out, "  attenuation factor = {} ({f:.3})", sig6(f));
            }
            None => {
                let _ = writeln!(out, "  attenuation factor = undefined (d = 0)");
            }
        }
    }

    if let Some(sim) = &report.simulation {
        let _ = writeln!(out, "\nSimulated {} studies (seed {}):", sim.design.studies.len(), sim.design.seed);
        for (i, (p1, p2)) in sim.probabilities.iter().enumerate() {
            let _ = writeln!(out, "  study {}: p_control = {}, p_active = {}", i + 1, sig6(*p1), sig6(*p2));
        }
        if !report.data.is_empty() {
            let _ = writeln!(out, "  {:<8} {:>9} {:>9} {:>9}", "study", "treatment", "events", "n");
            for a in &report.data {
                let _ = writeln!(out, "  {:<8} {:>9} {:>9} {:>9}", a.study_id, a.treatment.code(), a.events, a.size);
            }
        }
    }

    if let Some(rows) = &report.sweep {
        let _ = writeln!(out, "\nBias sweep:");
        let _ = writeln!(
            out,
            "  {:>8} {:>8} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "gap", "w", "d", "standard d", "bookend d", "mixed logOR", "exact logOR", "factor"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "  {:>8} {:>8} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
                sig6(r.cell.gap),
                sig6(r.cell.w),
                sig6(r.cell.d),
                sig6(r.mean_standard_d),
                sig6(r.mean_bookend_d),
                sig6(r.mean_mixed_observed_log_or),
                sig6(r.exact_log_or_mix),
                opt6(r.attenuation_factor)
            );
        }
    }

    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\nWarnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out
}
