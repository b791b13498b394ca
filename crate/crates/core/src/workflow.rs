//! Practitioner diagnostics: how far apart are the study baselines, which
//! studies are the bookends, and do the standard and bookend fits disagree?

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ParamSummary, SamplerConfig};
use crate::meta_core::Dataset;
use crate::models::{fit, FitResult, ModelKind, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowOptions {
    /// Baseline spread (log-odds units) above which the spread flag is raised.
    pub spread_threshold: f64,
    /// Discrepancy is flagged when it exceeds this multiple of the standard
    /// fit's posterior sd of `d`.
    pub discrepancy_sd_ratio: f64,
    /// Mixing weights with posterior mean within this distance of 0 or 1
    /// get a boundary warning.
    pub w_boundary: f64,
    pub bookend_low: Option<String>,
    pub bookend_high: Option<String>,
    pub prior_sd_logodds: f64,
}

impl Default for WorkflowOptions {
    fn default() -> Self {
        Self {
            spread_threshold: 1.0,
            discrepancy_sd_ratio: 0.5,
            w_boundary: 0.05,
            bookend_low: None,
            bookend_high: None,
            prior_sd_logodds: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadAssessment {
    pub mu_hats: Vec<(String, f64)>,
    pub spread: f64,
    pub flag: bool,
}

fn require_fe(fit: &FitResult) -> Result<()> {
    if fit.model.kind != ModelKind::StandardFe {
        return Err(Error::arg(format!("expected a standard-fe fit, got {}", fit.model.kind)));
    }
    Ok(())
}

/// Range of the posterior mean baselines of a standard FE fit.
pub fn assess_baseline_spread(fit: &FitResult, threshold: f64) -> Result<SpreadAssessment> {
    require_fe(fit)?;
    let mu_hats = fit.baseline_means();
    let (lo, hi) = mu_hats
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, m)| (lo.min(*m), hi.max(*m)));
    let spread = hi - lo;
    Ok(SpreadAssessment { mu_hats, spread, flag: spread > threshold })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BookendCandidate {
    pub study: String,
    pub mu_hat: f64,
    pub total_size: u64,
}

/// Picks `(low, high)` as the studies with the smallest and largest
/// baseline. Ties go to the larger study, then to the lexicographically
/// smaller label; the high bookend is chosen among the remaining studies.
pub fn select_bookends(candidates: &[BookendCandidate]) -> Result<(String, String)> {
    if candidates.len() < 3 {
        return Err(Error::data(format!(
            "bookend identification needs at least 3 studies, got {}",
            candidates.len()
        )));
    }
    let tie_break = |a: &BookendCandidate, b: &BookendCandidate| {
        b.total_size.cmp(&a.total_size).then_with(|| a.study.cmp(&b.study))
    };
    let low = candidates
        .iter()
        .min_by(|a, b| a.mu_hat.total_cmp(&b.mu_hat).then_with(|| tie_break(a, b)))
        .expect("non-empty");
    let high = candidates
        .iter()
        .filter(|c| c.study != low.study)
        .min_by(|a, b| b.mu_hat.total_cmp(&a.mu_hat).then_with(|| tie_break(a, b)))
        .expect("at least two candidates");
    Ok((low.study.clone(), high.study.clone()))
}

pub fn identify_bookends(fit: &FitResult, data: &Dataset) -> Result<(String, String)> {
    require_fe(fit)?;
    let candidates = fit
        .baseline_means()
        .into_iter()
        .map(|(study, mu_hat)| {
            let total_size = data.study(&study).map_or(0, |s| s.total_size());
            BookendCandidate { study, mu_hat, total_size }
        })
        .collect::<Vec<_>>();
    select_bookends(&candidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyBaseline {
    pub study: String,
    pub mu_hat: f64,
    pub empirical_logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    pub study: String,
    pub summary: ParamSummary,
    pub boundary_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub mu_hats: Vec<StudyBaseline>,
    pub spread: f64,
    pub spread_threshold: f64,
    pub flag_spread: bool,
    pub bookend_low: String,
    pub bookend_high: String,
    pub d_standard: ParamSummary,
    pub d_bookend: ParamSummary,
    pub discrepancy: f64,
    pub discrepancy_threshold: f64,
    pub flag_discrepancy: bool,
    pub w_summaries: Vec<MixingSummary>,
    pub standard_converged: bool,
    pub bookend_converged: bool,
    pub warnings: Vec<String>,
}

/// The report together with the two fits it was built from.
#[derive(Debug, Clone)]
pub struct SensitivityAnalysis {
    pub report: DiagnosticsReport,
    pub standard_fit: FitResult,
    pub bookend_fit: FitResult,
}

pub fn sensitivity_analysis(data: &Dataset, cfg: &SamplerConfig, opts: &WorkflowOptions) -> Result<SensitivityAnalysis> {
    if data.n_studies() < 3 {
        return Err(Error::data(format!("sensitivity analysis needs at least 3 studies, got {}", data.n_studies())));
    }
    let fe_spec = ModelSpec { prior_sd_logodds: opts.prior_sd_logodds, ..ModelSpec::standard_fe() };
    let bookend_spec = |low: String, high: String| ModelSpec {
        prior_sd_logodds: opts.prior_sd_logodds,
        ..ModelSpec::bookend(low, high)
    };

    let (standard_fit, bookend_fit, low, high) = match (&opts.bookend_low, &opts.bookend_high) {
        (Some(low), Some(high)) => {
            let spec = bookend_spec(low.clone(), high.clone());
            let (fe, bk) = rayon::join(|| fit(data, &fe_spec, cfg), || fit(data, &spec, cfg));
            (fe?, bk?, low.clone(), high.clone())
        }
        _ => {
            let fe = fit(data, &fe_spec, cfg)?;
            let (auto_low, auto_high) = identify_bookends(&fe, data)?;
            let low = opts.bookend_low.clone().unwrap_or(auto_low);
            let high = opts.bookend_high.clone().unwrap_or(auto_high);
            let bk = fit(data, &bookend_spec(low.clone(), high.clone()), cfg)?;
            (fe, bk, low, high)
        }
    };

    let spread = assess_baseline_spread(&standard_fit, opts.spread_threshold)?;
    let mu_hats = spread
        .mu_hats
        .iter()
        .map(|(study, mu_hat)| StudyBaseline {
            study: study.clone(),
            mu_hat: *mu_hat,
            empirical_logit: data.study(study).map_or(f64::NAN, |s| s.empirical_control_logit()),
        })
        .collect();

    let d_standard = standard_fit.effect().clone();
    let d_bookend = bookend_fit.effect().clone();
    let discrepancy = (d_standard.mean - d_bookend.mean).abs();
    let discrepancy_threshold = opts.discrepancy_sd_ratio * d_standard.sd;

    let mut warnings = Vec::new();
    let w_summaries: Vec<MixingSummary> = bookend_fit
        .mixing_summaries()
        .into_iter()
        .map(|(study, s)| {
            let boundary_warning = s.mean < opts.w_boundary || s.mean > 1.0 - opts.w_boundary;
            if boundary_warning {
                warnings.push(format!(
                    "study {study}: mixing weight posterior mean {:.3} is at the boundary; its baseline may lie outside the bookend range",
                    s.mean
                ));
            }
            MixingSummary { study, summary: s.clone(), boundary_warning }
        })
        .collect();
    for (label, f) in [("standard-fe", &standard_fit), ("bookend", &bookend_fit)] {
        if !f.converged {
            warnings.push(format!("{label} fit has not converged (max R-hat {:?})", f.summary.max_rhat()));
        }
    }

    let report = DiagnosticsReport {
        mu_hats,
        spread: spread.spread,
        spread_threshold: opts.spread_threshold,
        flag_spread: spread.flag,
        bookend_low: low,
        bookend_high: high,
        d_standard,
        d_bookend,
        discrepancy,
        discrepancy_threshold,
        flag_discrepancy: discrepancy > discrepancy_threshold,
        w_summaries,
        standard_converged: standard_fit.converged,
        bookend_converged: bookend_fit.converged,
        warnings,
    };
    Ok(SensitivityAnalysis { report, standard_fit, bookend_fit })
}

/// Standard FE fit, bookend identification and bookend fit with default
/// thresholds.
pub fn sensitivity_compare(data: &Dataset, cfg: &SamplerConfig) -> Result<DiagnosticsReport> {
    sensitivity_analysis(data, cfg, &WorkflowOptions::default()).map(|a| a.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(study: &str, mu_hat: f64, total_size: u64) -> BookendCandidate {
        BookendCandidate { study: study.into(), mu_hat, total_size }
    }

    #[test]
    fn extremes_are_selected() {
        let c: Vec<_> = [-3.0, -2.0, -1.0, 0.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| cand(&format!("s{i}"), m, 100))
            .collect();
        assert_eq!(select_bookends(&c).unwrap(), ("s0".into(), "s4".into()));
    }

    #[test]
    fn ties_prefer_larger_studies() {
        let c = vec![cand("a", 0.2, 100), cand("b", 0.2, 200), cand("c", 0.2, 300)];
        let (low, high) = select_bookends(&c).unwrap();
        let mut picked = [low, high];
        picked.sort();
        assert_eq!(picked, ["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn full_ties_fall_back_to_labels() {
        let c = vec![cand("z", 0.0, 10), cand("m", 0.0, 10), cand("a", 0.0, 10)];
        assert_eq!(select_bookends(&c).unwrap(), ("a".into(), "m".into()));
    }

    #[test]
    fn too_few_studies() {
        assert!(select_bookends(&[cand("a", 0.0, 1), cand("b", 1.0, 1)]).is_err());
    }
}
