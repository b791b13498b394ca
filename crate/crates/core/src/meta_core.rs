//! Domain types and exact arithmetic for odds-ratio pooling.
//!
//! Everything here is a pure function over immutable values. The contrast
//! model puts study baselines `mu_j` and the treatment effect `d` on the
//! logit scale; a study whose population mixes two homogeneous
//! sub-populations has event probabilities that are mixtures on the
//! *probability* scale, which is what makes the odds ratio non-collapsible.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile used for Wald intervals.
pub const Z95: f64 = 1.96;

/// Treatment arm of a pairwise study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Treatment {
    Control = 1,
    Active = 2,
}

impl Treatment {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Treatment::Control),
            2 => Some(Treatment::Active),
            _ => None,
        }
    }
}

/// Observed binomial counts for one arm of one study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmData {
    pub study_id: String,
    pub treatment: Treatment,
    pub events: u64,
    pub size: u64,
}

impl ArmData {
    pub fn new(study_id: impl Into<String>, treatment: Treatment, events: u64, size: u64) -> Result<Self> {
        let study_id = study_id.into();
        if study_id.is_empty() {
            return Err(Error::data("study id must not be empty"));
        }
        if size == 0 {
            return Err(Error::data(format!("study {study_id}: arm size must be at least 1")));
        }
        if events > size {
            return Err(Error::data(format!(
                "study {study_id}: events ({events}) exceed arm size ({size})"
            )));
        }
        Ok(Self { study_id, treatment, events, size })
    }

    pub fn non_events(&self) -> u64 {
        self.size - self.events
    }
}

/// Counts `(events, size)` for the two arms of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub events: u64,
    pub size: u64,
}

/// One pairwise study, derived from the arm list of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub control: Counts,
    pub active: Counts,
}

impl Study {
    pub fn total_size(&self) -> u64 {
        self.control.size + self.active.size
    }

    /// Empirical control-arm logit with a 0.5 correction when a cell is zero.
    pub fn empirical_control_logit(&self) -> f64 {
        let (r, n) = (self.control.events as f64, self.control.size as f64);
        if r == 0.0 || r == n {
            // also covers zero-size arms: logit(0.5 / 1) = 0
            ((r + 0.5) / (n - r + 0.5)).ln()
        } else {
            (r / (n - r)).ln()
        }
    }
}

/// Arm-level data for a pairwise meta-analysis.
///
/// Every study carries exactly one control and one active arm. Arm order is
/// preserved; study order follows first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    arms: Vec<ArmData>,
    studies: Vec<Study>,
}

impl Dataset {
    pub fn new(arms: Vec<ArmData>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::data("no studies"));
        }
        for arm in &arms {
            if arm.size == 0 || arm.events > arm.size {
                return Err(Error::data(format!(
                    "study {}: invalid arm counts {}/{}",
                    arm.study_id, arm.events, arm.size
                )));
            }
        }
        Self::assemble(arms)
    }

    /// A dataset whose arms all have zero size, so any model fitted to it
    /// samples from the prior. Intended for prior-recovery checks.
    pub fn prior_only<S: AsRef<str>>(study_ids: &[S]) -> Result<Self> {
        let arms = study_ids
            .iter()
            .flat_map(|id| {
                [Treatment::Control, Treatment::Active].map(|treatment| ArmData {
                    study_id: id.as_ref().to_string(),
                    treatment,
                    events: 0,
                    size: 0,
                })
            })
            .collect();
        Self::assemble(arms)
    }

    fn assemble(arms: Vec<ArmData>) -> Result<Self> {
        let mut order: Vec<&str> = Vec::new();
        let mut slots: HashMap<&str, [Option<Counts>; 2]> = HashMap::new();
        for arm in &arms {
            let entry = slots.entry(arm.study_id.as_str()).or_insert_with(|| {
                order.push(arm.study_id.as_str());
                [None, None]
            });
            let slot = &mut entry[arm.treatment as usize - 1];
            if slot.is_some() {
                return Err(Error::data(format!(
                    "study {}: duplicate arm for treatment {}",
                    arm.study_id,
                    arm.treatment.code()
                )));
            }
            *slot = Some(Counts { events: arm.events, size: arm.size });
        }
        let mut studies = Vec::with_capacity(order.len());
        for id in order {
            match slots[id] {
                [Some(control), Some(active)] => {
                    studies.push(Study { id: id.to_string(), control, active })
                }
                [None, _] => return Err(Error::data(format!("study {id}: missing control arm"))),
                [_, None] => return Err(Error::data(format!("study {id}: missing active arm"))),
            }
        }
        Ok(Self { arms, studies })
    }

    pub fn arms(&self) -> &[ArmData] {
        &self.arms
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    pub fn study(&self, id: &str) -> Option<&Study> {
        self.studies.iter().find(|s| s.id == id)
    }

    pub fn study_index(&self, id: &str) -> Option<usize> {
        self.studies.iter().position(|s| s.id == id)
    }
}

/// Generative truth for the two-population scenario.
///
/// `w` is the fraction of the mixed study drawn from population 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub mu1: f64,
    pub mu2: f64,
    pub d: f64,
    pub w: f64,
    pub arm_size: u64,
}

impl ScenarioParams {
    pub fn new(mu1: f64, mu2: f64, d: f64, w: f64, arm_size: u64) -> Result<Self> {
        let p = Self { mu1, mu2, d, w, arm_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1.is_finite() && self.mu2.is_finite() && self.d.is_finite()) {
            return Err(Error::arg("log-odds parameters must be finite"));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::arg(format!("mixing proportion {} outside [0, 1]", self.w)));
        }
        Ok(())
    }

    /// Intercept of the regression form; equals `mu1`.
    pub fn beta0(&self) -> f64 {
        self.mu1
    }

    /// Population-2 indicator coefficient; equals `mu2 - mu1`.
    pub fn beta1(&self) -> f64 {
        self.mu2 - self.mu1
    }

    /// Treatment coefficient; equals `d`.
    pub fn beta2(&self) -> f64 {
        self.d
    }
}

/// Exact marginal quantities for a probability-scale mixture study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationReport {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
    pub p_mix_control: f64,
    pub p_mix_active: f64,
    pub or_mix: f64,
    pub log_or_mix: f64,
    /// `log_or_mix / d`; `None` when `d == 0`.
    pub attenuation_factor: Option<f64>,
}

/// Point estimate with a standard error and its 95% Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub log_or: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

impl PooledEstimate {
    pub fn new(log_or: f64, se: f64) -> Self {
        Self { log_or, se, ci95: (log_or - Z95 * se, log_or + Z95 * se) }
    }
}

impl fmt::Display for PooledEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.4} (SE {:.4}; 95% CI {:.4} to {:.4})",
            self.log_or, self.se, self.ci95.0, self.ci95.1
        )
    }
}

/// Logistic function without input checks, stable for any `x`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x < 0.0 {
        let e = x.exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// `ln(sigmoid(x))`, accurate in both tails.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x < -33.3 {
        x
    } else if x <= -18.0 {
        x - x.exp()
    } else {
        -(-x).exp().ln_1p()
    }
}

pub fn inverse_logit(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::arg(format!("inverse_logit of non-finite value {x}")));
    }
    Ok(sigmoid(x))
}

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg(format!("logit of {p} outside (0, 1)")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Marginal odds ratio of a study mixing population 1 (weight `w`) and
/// population 2 (weight `1 - w`) under a common conditional log-OR `d`.
pub fn exact_mixture_or(params: &ScenarioParams) -> Result<AttenuationReport> {
    params.validate()?;
    let ScenarioParams { mu1, mu2, d, w, .. } = *params;
    let (p11, p12) = (sigmoid(mu1), sigmoid(mu1 + d));
    let (p21, p22) = (sigmoid(mu2), sigmoid(mu2 + d));
    let p_mix_control = w * p11 + (1.0 - w) * p21;
    let p_mix_active = w * p12 + (1.0 - w) * p22;
    // Complements are mixed directly so that odds near 1 keep full precision.
    let q_mix_control = w * sigmoid(-mu1) + (1.0 - w) * sigmoid(-mu2);
    let q_mix_active = w * sigmoid(-mu1 - d) + (1.0 - w) * sigmoid(-mu2 - d);
    let log_or_mix = (p_mix_active.ln() - q_mix_active.ln()) - (p_mix_control.ln() - q_mix_control.ln());
    let attenuation_factor = (d != 0.0).then(|| log_or_mix / d);
    Ok(AttenuationReport {
        p11,
        p12,
        p21,
        p22,
        p_mix_control,
        p_mix_active,
        or_mix: log_or_mix.exp(),
        log_or_mix,
        attenuation_factor,
    })
}

pub fn naive_average_log_or(log_ors: &[f64]) -> Result<f64> {
    if log_ors.is_empty() {
        return Err(Error::arg("cannot average an empty list of log odds ratios"));
    }
    Ok(log_ors.iter().sum::<f64>() / log_ors.len() as f64)
}

/// Woolf log odds ratio (active vs control) and its standard error.
///
/// A study with a zero cell gets 0.5 added to all four cells. Studies with
/// no events in both arms, or only events in both arms, carry no
/// information on the odds ratio and are rejected.
pub fn observed_log_or(study: &Study) -> Result<PooledEstimate> {
    let (c, a) = (study.control, study.active);
    let degenerate = c.size == 0
        || a.size == 0
        || (c.events == 0 && a.events == 0)
        || (c.events == c.size && a.events == a.size);
    if degenerate {
        return Err(Error::DegenerateStudy(study.id.clone()));
    }
    let cells = [c.events, c.size - c.events, a.events, a.size - a.events];
    let correction = if cells.contains(&0) { 0.5 } else { 0.0 };
    let [r1, f1, r2, f2] = cells.map(|x| x as f64 + correction);
    let log_or = (r2 / f2).ln() - (r1 / f1).ln();
    let se = (1.0 / r1 + 1.0 / f1 + 1.0 / r2 + 1.0 / f2).sqrt();
    Ok(PooledEstimate::new(log_or, se))
}

/// Fixed-effect inverse-variance pooling.
pub fn inverse_variance_pool(estimates: &[PooledEstimate]) -> Result<PooledEstimate> {
    if estimates.is_empty() {
        return Err(Error::arg("cannot pool an empty list of estimates"));
    }
    if let Some(bad) = estimates.iter().find(|e| !(e.se > 0.0 && e.se.is_finite())) {
        return Err(Error::arg(format!("standard error {} is not positive", bad.se)));
    }
    let (sw, swx) = estimates.iter().fold((0.0, 0.0), |(sw, swx), e| {
        let w = 1.0 / (e.se * e.se);
        (sw + w, swx + w * e.log_or)
    });
    Ok(PooledEstimate::new(swx / sw, 1.0 / sw.sqrt()))
}

/// Naive two-stage baseline over a dataset: per-study Woolf estimates,
/// pooled by inverse variance. Degenerate studies are skipped and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBaseline {
    pub per_study: Vec<(String, PooledEstimate)>,
    pub excluded: Vec<String>,
    pub pooled: Option<PooledEstimate>,
}

pub fn naive_baseline(data: &Dataset) -> NaiveBaseline {
    let mut per_study = Vec::new();
    let mut excluded = Vec::new();
    for study in data.studies() {
        match observed_log_or(study) {
            Ok(e) => per_study.push((study.id.clone(), e)),
            Err(_) => excluded.push(study.id.clone()),
        }
    }
    let estimates: Vec<_> = per_study.iter().map(|(_, e)| *e).collect();
    let pooled = inverse_variance_pool(&estimates).ok();
    NaiveBaseline { per_study, excluded, pooled }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn study(id: &str, c: (u64, u64), a: (u64, u64)) -> Study {
        Study {
            id: id.into(),
            control: Counts { events: c.0, size: c.1 },
            active: Counts { events: a.0, size: a.1 },
        }
    }

    fn table1() -> Vec<Study> {
        vec![
            study("1", (514, 1000), (375, 1000)),
            study("2", (118, 1000), (81, 1000)),
            study("3", (304, 1000), (237, 1000)),
        ]
    }

    #[test]
    fn inverse_logit_values() {
        assert_eq!(inverse_logit(0.0).unwrap(), 0.5);
        assert_abs_diff_eq!(inverse_logit(-2.0).unwrap(), 0.11920, epsilon = 5e-6);
        assert_abs_diff_eq!(inverse_logit(-0.5).unwrap(), 0.37754, epsilon = 5e-6);
        assert!(inverse_logit(f64::NAN).is_err());
        assert!(inverse_logit(f64::INFINITY).is_err());
        // no overflow far in the tails
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0);
        assert_abs_diff_eq!(log_sigmoid(-20.0), sigmoid(-20.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn mixture_or_matches_high_precision_oracle() {
        // 40-digit evaluation of the closed-form chain.
        let r = exact_mixture_or(&ScenarioParams::new(0.0, -2.0, -0.5, 0.5, 1000).unwrap()).unwrap();
        assert_abs_diff_eq!(r.p_mix_control, 0.309_601_461_011_058_8, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p_mix_active, 0.226_699_424_409_694_5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.log_or_mix, -0.425_059_634_575_944_1, epsilon = 1e-14);
        assert_abs_diff_eq!(r.or_mix, 0.653_730_799_008_417_9, epsilon = 1e-14);
        assert_abs_diff_eq!(r.attenuation_factor.unwrap(), 0.850_119_269_151_888_3, epsilon = 1e-13);
        assert_eq!(format!("{:.3}", r.attenuation_factor.unwrap()), "0.850");
    }

    #[test]
    fn mixture_or_degenerate_cases() {
        let null = exact_mixture_or(&ScenarioParams::new(0.3, -1.7, 0.0, 0.5, 10).unwrap()).unwrap();
        assert_abs_diff_eq!(null.or_mix, 1.0, epsilon = 1e-15);
        assert!(null.attenuation_factor.is_none());

        let pure = exact_mixture_or(&ScenarioParams::new(0.0, -2.0, -0.5, 1.0, 10).unwrap()).unwrap();
        assert_abs_diff_eq!(pure.log_or_mix, -0.5, epsilon = 1e-14);

        assert!(ScenarioParams::new(0.0, -2.0, -0.5, 1.5, 10).is_err());
        assert!(ScenarioParams::new(f64::NAN, -2.0, -0.5, 0.5, 10).is_err());
    }

    #[test]
    fn regression_aliases() {
        let p = ScenarioParams::new(0.0, -2.0, -0.5, 0.5, 1000).unwrap();
        assert_eq!((p.beta0(), p.beta1(), p.beta2()), (0.0, -2.0, -0.5));
    }

    #[test]
    fn naive_average() {
        assert_eq!(format!("{:.3}", naive_average_log_or(&[-0.5, -0.5, -0.425]).unwrap()), "-0.475");
        assert_eq!(naive_average_log_or(&[-0.5]).unwrap(), -0.5);
        assert_abs_diff_eq!(naive_average_log_or(&[-0.5, -0.5, -0.42509]).unwrap(), -0.47503, epsilon = 5e-6);
        assert!(naive_average_log_or(&[]).is_err());
    }

    #[test]
    fn woolf_estimates_reproduce_table() {
        let expected = [(-0.57, 0.09), (-0.42, 0.15), (-0.34, 0.10)];
        for (s, (lor, se)) in table1().iter().zip(expected) {
            let e = observed_log_or(s).unwrap();
            assert_eq!(format!("{:.2}", e.log_or), format!("{lor:.2}"));
            assert_eq!(format!("{:.2}", e.se), format!("{se:.2}"));
        }
        let same = observed_log_or(&study("x", (17, 80), (17, 80))).unwrap();
        assert_eq!(same.log_or, 0.0);
    }

    #[test]
    fn zero_cells_get_haldane_correction() {
        let e = observed_log_or(&study("z", (0, 20), (3, 20))).unwrap();
        let expected = (3.5f64 / 17.5).ln() - (0.5f64 / 20.5).ln();
        assert_abs_diff_eq!(e.log_or, expected, epsilon = 1e-14);
        assert!(e.se.is_finite());
        assert!(matches!(observed_log_or(&study("a", (0, 20), (0, 30))), Err(Error::DegenerateStudy(_))));
        assert!(matches!(observed_log_or(&study("b", (20, 20), (30, 30))), Err(Error::DegenerateStudy(_))));
    }

    #[test]
    fn inverse_variance_pooling() {
        // Hand-computed weighted mean of the full-precision Woolf estimates.
        let est: Vec<_> = table1().iter().map(|s| observed_log_or(s).unwrap()).collect();
        let pooled = inverse_variance_pool(&est).unwrap();
        assert_abs_diff_eq!(pooled.log_or, -0.457_909_783_502_948_6, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.se, 0.061_801_234_659_371_52, epsilon = 1e-12);

        let one = PooledEstimate::new(-0.3, 0.2);
        assert_eq!(inverse_variance_pool(&[one]).unwrap(), one);
        let two = inverse_variance_pool(&[one, one]).unwrap();
        assert_abs_diff_eq!(two.log_or, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(two.se, 0.2 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(two.ci95.1 - two.log_or, Z95 * two.se, epsilon = 1e-15);

        assert!(inverse_variance_pool(&[]).is_err());
        assert!(inverse_variance_pool(&[PooledEstimate::new(0.1, 0.0)]).is_err());
    }

    #[test]
    fn dataset_validation() {
        let arm = |id: &str, t, r, n| ArmData::new(id, t, r, n).unwrap();
        use Treatment::*;
        let ok = Dataset::new(vec![arm("a", Control, 1, 10), arm("a", Active, 2, 10), arm("b", Active, 3, 9), arm("b", Control, 4, 9)]).unwrap();
        assert_eq!(ok.n_studies(), 2);
        assert_eq!(ok.studies()[1].control, Counts { events: 4, size: 9 });

        assert!(ArmData::new("a", Control, 11, 10).is_err());
        assert!(ArmData::new("a", Control, 0, 0).is_err());
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![arm("a", Control, 1, 10)]).is_err());
        assert!(Dataset::new(vec![arm("a", Control, 1, 10), arm("a", Control, 1, 10), arm("a", Active, 1, 10)]).is_err());
    }

    #[test]
    fn baseline_skips_degenerate_studies() {
        let arm = |id: &str, t, r, n| ArmData::new(id, t, r, n).unwrap();
        use Treatment::*;
        let data = Dataset::new(vec![
            arm("a", Control, 5, 10), arm("a", Active, 3, 10),
            arm("b", Control, 0, 10), arm("b", Active, 0, 10),
        ]).unwrap();
        let nb = naive_baseline(&data);
        assert_eq!(nb.excluded, vec!["b".to_string()]);
        assert_eq!(nb.per_study.len(), 1);
        assert!(nb.pooled.is_some());
    }
}
