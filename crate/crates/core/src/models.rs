//! Log-posteriors for the three fitted models and the binding to the
//! sampler.
//!
//! All models share the arm-level binomial likelihood. The standard models
//! put every arm on the logit scale (`mu_j`, plus `d` or `delta_j` in the
//! active arm). The bookend model does so only for the two bookend
//! studies; every other study is a probability-scale mixture of the two
//! bookend populations:
//!
//! ```text
//! p_mk = w_m * p_low,k + (1 - w_m) * p_high,k
//! ```
//!
//! Priors are N(0, sd^2) on every log-odds parameter (sd = 10 by default),
//! Beta(1, 1) on mixing weights and half-normal on `tau`.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::mcmc::{self, ChainSet, ParamSummary, ParameterSpace, PosteriorSummary, SamplerConfig, Support};
use crate::meta_core::{log_sigmoid, sigmoid, Counts, Dataset};

/// R-hat below which a fit counts as converged.
pub const CONVERGED_RHAT: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    StandardFe,
    StandardRe,
    Bookend,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::StandardFe => "standard-fe",
            ModelKind::StandardRe => "standard-re",
            ModelKind::Bookend => "bookend",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub bookend_low: Option<String>,
    pub bookend_high: Option<String>,
    pub prior_sd_logodds: f64,
    pub tau_prior_scale: f64,
}

impl ModelSpec {
    fn with_kind(kind: ModelKind) -> Self {
        Self { kind, bookend_low: None, bookend_high: None, prior_sd_logodds: 10.0, tau_prior_scale: 1.0 }
    }

    pub fn standard_fe() -> Self {
        Self::with_kind(ModelKind::StandardFe)
    }

    pub fn standard_re() -> Self {
        Self::with_kind(ModelKind::StandardRe)
    }

    pub fn bookend(low: impl Into<String>, high: impl Into<String>) -> Self {
        Self { bookend_low: Some(low.into()), bookend_high: Some(high.into()), ..Self::with_kind(ModelKind::Bookend) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_sd_logodds > 0.0 && self.prior_sd_logodds.is_finite()) {
            return Err(Error::arg("prior sd for log-odds parameters must be positive"));
        }
        if !(self.tau_prior_scale > 0.0 && self.tau_prior_scale.is_finite()) {
            return Err(Error::arg("tau prior scale must be positive"));
        }
        if self.kind == ModelKind::Bookend {
            match (&self.bookend_low, &self.bookend_high) {
                (Some(l), Some(h)) if l == h => {
                    return Err(Error::arg(format!("bookend studies must differ (both are {l})")))
                }
                (Some(_), Some(_)) => {}
                _ => return Err(Error::arg("bookend model needs both a low and a high bookend study")),
            }
        }
        Ok(())
    }
}

/// What a sampled parameter means.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "study", rename_all = "kebab-case")]
pub enum ParamRole {
    Baseline(String),
    Effect,
    StudyEffect(String),
    Heterogeneity,
    Mixing(String),
}

#[derive(Debug, Clone, Copy)]
enum Layout {
    StandardFe,
    StandardRe,
    Bookend { low: usize, high: usize },
}

/// A model bound to a dataset, with per-arm constants precomputed.
pub struct Posterior<'a> {
    data: &'a Dataset,
    spec: ModelSpec,
    layout: Layout,
    /// Indices of the mixed (non-bookend) studies, in dataset order.
    mixed: Vec<usize>,
    ln_choose: Vec<[f64; 2]>,
}

fn ln_choose(c: Counts) -> f64 {
    if c.size == 0 {
        0.0
    } else {
        ln_binomial(c.size, c.events)
    }
}

#[inline]
fn normal_lpdf(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * (x / sd).powi(2)
}

#[inline]
fn half_normal_lpdf(x: f64, scale: f64) -> f64 {
    LN_2 + normal_lpdf(x, scale)
}

/// Binomial log-pmf without the combinatorial constant, logit-parameterised.
#[inline]
fn binom_logit(c: Counts, eta: f64) -> f64 {
    let r = c.events as f64;
    let f = (c.size - c.events) as f64;
    let mut ll = 0.0;
    if r > 0.0 {
        ll += r * log_sigmoid(eta);
    }
    if f > 0.0 {
        ll += f * log_sigmoid(-eta);
    }
    ll
}

/// Binomial log-pmf without the combinatorial constant, given `p` and `1 - p`.
#[inline]
fn binom_prob(c: Counts, p: f64, q: f64) -> f64 {
    let r = c.events as f64;
    let f = (c.size - c.events) as f64;
    let mut ll = 0.0;
    if r > 0.0 {
        ll += r * p.ln();
    }
    if f > 0.0 {
        ll += f * q.ln();
    }
    ll
}

impl<'a> Posterior<'a> {
    pub fn new(data: &'a Dataset, spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let j = data.n_studies();
        let (layout, mixed) = match spec.kind {
            ModelKind::StandardRe if j < 2 => {
                return Err(Error::data(format!("{} model needs at least 2 studies, got {j}", spec.kind)))
            }
            ModelKind::StandardFe => (Layout::StandardFe, Vec::new()),
            ModelKind::StandardRe => (Layout::StandardRe, Vec::new()),
            ModelKind::Bookend => {
                if j < 3 {
                    return Err(Error::data(format!("bookend model needs at least 3 studies, got {j}")));
                }
                let find = |id: &Option<String>| {
                    let id = id.as_deref().unwrap_or_default();
                    data.study_index(id).ok_or_else(|| Error::arg(format!("bookend study {id} not in dataset")))
                };
                let (low, high) = (find(&spec.bookend_low)?, find(&spec.bookend_high)?);
                let mixed = (0..j).filter(|&i| i != low && i != high).collect();
                (Layout::Bookend { low, high }, mixed)
            }
        };
        let ln_choose = data.studies().iter().map(|s| [ln_choose(s.control), ln_choose(s.active)]).collect();
        Ok(Self { data, spec: spec.clone(), layout, mixed, ln_choose })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        let j = self.data.n_studies();
        match self.layout {
            Layout::StandardFe => j + 1,
            Layout::StandardRe => 2 * j + 2,
            Layout::Bookend { .. } => 3 + self.mixed.len(),
        }
    }

    /// Parameter names, supports and roles in `theta` order.
    pub fn parameters(&self) -> Vec<(String, Support, ParamRole)> {
        let studies = self.data.studies();
        let mut out = Vec::with_capacity(self.dim());
        match self.layout {
            Layout::StandardFe | Layout::StandardRe => {
                for s in studies {
                    out.push((format!("mu[{}]", s.id), Support::Real, ParamRole::Baseline(s.id.clone())));
                }
                if let Layout::StandardRe = self.layout {
                    for s in studies {
                        out.push((format!("delta[{}]", s.id), Support::Real, ParamRole::StudyEffect(s.id.clone())));
                    }
                }
                out.push(("d".into(), Support::Real, ParamRole::Effect));
                if let Layout::StandardRe = self.layout {
                    out.push(("tau".into(), Support::Positive, ParamRole::Heterogeneity));
                }
            }
            Layout::Bookend { low, high } => {
                out.push(("mu_low".into(), Support::Real, ParamRole::Baseline(studies[low].id.clone())));
                out.push(("mu_high".into(), Support::Real, ParamRole::Baseline(studies[high].id.clone())));
                out.push(("d".into(), Support::Real, ParamRole::Effect));
                for &m in &self.mixed {
                    let id = &studies[m].id;
                    out.push((format!("w[{id}]"), Support::UnitInterval, ParamRole::Mixing(id.clone())));
                }
            }
        }
        out
    }

    pub fn space(&self) -> ParameterSpace {
        ParameterSpace::new(self.parameters().into_iter().map(|(n, s, _)| (n, s)).collect())
            .expect("parameter names are unique by construction")
    }

    /// Data-informed starting point: baselines at empirical control logits,
    /// effects at 0, mixing weights at 0.5 and `tau` at 0.5.
    pub fn initial_values(&self) -> Vec<f64> {
        let studies = self.data.studies();
        let logit = |i: usize| studies[i].empirical_control_logit();
        let j = studies.len();
        match self.layout {
            Layout::StandardFe => (0..j).map(logit).chain([0.0]).collect(),
            Layout::StandardRe => (0..j).map(logit).chain(std::iter::repeat_n(0.0, j + 1)).chain([0.5]).collect(),
            Layout::Bookend { low, high } => {
                [logit(low), logit(high), 0.0].into_iter().chain(self.mixed.iter().map(|_| 0.5)).collect()
            }
        }
    }

    /// Unnormalised log-posterior at `theta` (constrained scale).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        if theta.iter().any(|t| t.is_nan()) {
            return f64::NAN;
        }
        match self.layout {
            Layout::StandardFe => self.standard_fe(theta),
            Layout::StandardRe => self.standard_re(theta),
            Layout::Bookend { low, high } => self.bookend(theta, low, high),
        }
    }

    fn checked(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::arg(format!(
                "{} model expects {} parameters, got {}",
                self.spec.kind,
                self.dim(),
                theta.len()
            )));
        }
        Ok(self.log_density(theta))
    }

    fn arm_terms(&self, i: usize, eta_control: f64, eta_active: f64) -> f64 {
        let s = &self.data.studies()[i];
        let [c0, c1] = self.ln_choose[i];
        c0 + binom_logit(s.control, eta_control) + c1 + binom_logit(s.active, eta_active)
    }

    fn standard_fe(&self, theta: &[f64]) -> f64 {
        let j = self.data.n_studies();
        let (mu, d) = (&theta[..j], theta[j]);
        let sd = self.spec.prior_sd_logodds;
        let mut lp = normal_lpdf(d, sd);
        for (i, &m) in mu.iter().enumerate() {
            lp += normal_lpdf(m, sd) + self.arm_terms(i, m, m + d);
        }
        lp
    }

    fn standard_re(&self, theta: &[f64]) -> f64 {
        let j = self.data.n_studies();
        let (mu, delta) = (&theta[..j], &theta[j..2 * j]);
        let (d, tau) = (theta[2 * j], theta[2 * j + 1]);
        if !(tau > 0.0) {
            return f64::NEG_INFINITY;
        }
        let sd = self.spec.prior_sd_logodds;
        let mut lp = normal_lpdf(d, sd) + half_normal_lpdf(tau, self.spec.tau_prior_scale);
        for i in 0..j {
            lp += normal_lpdf(mu[i], sd) + normal_lpdf(delta[i] - d, tau) + self.arm_terms(i, mu[i], mu[i] + delta[i]);
        }
        lp
    }

    fn bookend(&self, theta: &[f64], low: usize, high: usize) -> f64 {
        let (mu_low, mu_high, d) = (theta[0], theta[1], theta[2]);
        let weights = &theta[3..];
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return f64::NEG_INFINITY;
        }
        let sd = self.spec.prior_sd_logodds;
        let mut lp = normal_lpdf(mu_low, sd) + normal_lpdf(mu_high, sd) + normal_lpdf(d, sd);
        lp += self.arm_terms(low, mu_low, mu_low + d);
        lp += self.arm_terms(high, mu_high, mu_high + d);

        let etas = [(mu_low, mu_high), (mu_low + d, mu_high + d)];
        let probs = etas.map(|(el, eh)| (sigmoid(el), sigmoid(eh), sigmoid(-el), sigmoid(-eh)));
        let studies = self.data.studies();
        for (&m, &w) in self.mixed.iter().zip(weights) {
            let s = &studies[m];
            let [c0, c1] = self.ln_choose[m];
            for (k, counts) in [s.control, s.active].into_iter().enumerate() {
                let (pl, ph, ql, qh) = probs[k];
                let p = w * pl + (1.0 - w) * ph;
                let q = w * ql + (1.0 - w) * qh;
                lp += binom_prob(counts, p, q);
            }
            // Beta(1, 1) prior contributes 0.
            lp += c0 + c1;
        }
        lp
    }
}

/// Standard fixed-effect log-posterior; `theta = (mu_1..mu_J, d)`.
pub fn log_post_standard_fe(data: &Dataset, spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    let spec = ModelSpec { kind: ModelKind::StandardFe, ..spec.clone() };
    Posterior::new(data, &spec)?.checked(theta)
}

/// Standard random-effects log-posterior;
/// `theta = (mu_1..mu_J, delta_1..delta_J, d, tau)`.
pub fn log_post_standard_re(data: &Dataset, spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    let spec = ModelSpec { kind: ModelKind::StandardRe, ..spec.clone() };
    Posterior::new(data, &spec)?.checked(theta)
}

/// Bookend log-posterior; `theta = (mu_low, mu_high, d, w_1..w_M)` with one
/// mixing weight per non-bookend study in dataset order.
pub fn log_post_bookend(data: &Dataset, spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    if spec.kind != ModelKind::Bookend {
        return Err(Error::arg("log_post_bookend needs a bookend model spec"));
    }
    Posterior::new(data, spec)?.checked(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub summary: PosteriorSummary,
    pub chains: ChainSet,
    pub roles: Vec<(String, ParamRole)>,
    pub init: Vec<f64>,
    /// All split R-hat values defined and below [`CONVERGED_RHAT`].
    pub converged: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.summary.get(name)
    }

    /// Summary of the common treatment effect `d`.
    pub fn effect(&self) -> &ParamSummary {
        self.summary.get("d").expect("every model has a d parameter")
    }

    /// Posterior mean baseline log-odds per study, for the standard models.
    pub fn baseline_means(&self) -> Vec<(String, f64)> {
        self.roles
            .iter()
            .filter_map(|(name, role)| match role {
                ParamRole::Baseline(study) => Some((study.clone(), self.summary.get(name)?.mean)),
                _ => None,
            })
            .collect()
    }

    pub fn mixing_summaries(&self) -> Vec<(String, &ParamSummary)> {
        self.roles
            .iter()
            .filter_map(|(name, role)| match role {
                ParamRole::Mixing(study) => Some((study.clone(), self.summary.get(name)?)),
                _ => None,
            })
            .collect()
    }
}

pub fn fit(data: &Dataset, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<FitResult> {
    let post = Posterior::new(data, spec)?;
    let params = post.parameters();
    let init = post.initial_values();
    let chains = mcmc::sample(|t| post.log_density(t), &post.space(), &init, cfg)?;
    let summary = mcmc::summarize(&chains)?;
    let converged = summary.max_rhat().is_some_and(|r| r < CONVERGED_RHAT);
    Ok(FitResult {
        model: spec.clone(),
        summary,
        chains,
        roles: params.into_iter().map(|(n, _, r)| (n, r)).collect(),
        init,
        converged,
    })
}
