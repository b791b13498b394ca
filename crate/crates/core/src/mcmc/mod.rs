//! Component-wise adaptive random-walk Metropolis.
//!
//! Each coordinate is updated in turn with a Gaussian proposal on an
//! unbounded scale. Bounded parameters are mapped through a logit (unit
//! interval) or log (positive) transform and the log-Jacobian is added to
//! the target. Proposal scales are tuned during burn-in by Robbins–Monro
//! steps toward `target_accept`, evaluated once per `adapt_window`
//! iterations, and frozen afterwards.

mod diagnostics;

pub use diagnostics::{
    bulk_ess, quantile_sorted, split_rhat, summarize, summarize_chains, ParamSummary, PosteriorSummary,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_core::{log_sigmoid, sigmoid};

const INITIAL_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    /// Retained draws after thinning, summed over all chains.
    pub total_draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub target_accept: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 3,
            burn_in: 2000,
            total_draws: 10_000,
            thin: 2,
            seed: 20_240_617,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `ceil(total_draws / n_chains)`.
    pub fn draws_per_chain(&self) -> usize {
        self.total_draws.div_ceil(self.n_chains.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.total_draws == 0 || self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::arg("chains, draws, thin and adapt window must all be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::arg(format!("target acceptance {} outside (0, 1)", self.target_accept)));
        }
        Ok(())
    }
}

/// Domain of a single parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Real,
    UnitInterval,
    Positive,
}

impl Support {
    fn contains(self, x: f64) -> bool {
        match self {
            Support::Real => x.is_finite(),
            Support::UnitInterval => x > 0.0 && x < 1.0,
            Support::Positive => x > 0.0 && x.is_finite(),
        }
    }

    fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Support::Real => x,
            Support::UnitInterval => (x / (1.0 - x)).ln(),
            Support::Positive => x.ln(),
        }
    }

    fn to_constrained(self, z: f64) -> f64 {
        match self {
            Support::Real => z,
            Support::UnitInterval => sigmoid(z),
            Support::Positive => z.exp(),
        }
    }

    fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Support::Real => 0.0,
            Support::UnitInterval => log_sigmoid(z) + log_sigmoid(-z),
            Support::Positive => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    names: Vec<String>,
    supports: Vec<Support>,
}

impl ParameterSpace {
    pub fn new(params: Vec<(String, Support)>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::arg("parameter space is empty"));
        }
        let (names, supports): (Vec<_>, Vec<_>) = params.into_iter().unzip();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::arg(format!("duplicate parameter name {n}")));
            }
        }
        Ok(Self { names, supports })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Retained draws from all chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    pub names: Vec<String>,
    /// Indexed `[chain][parameter][draw]`.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Post-burn-in acceptance rate per parameter, averaged over chains.
    pub accept_rates: Vec<f64>,
    /// Frozen proposal scales per chain and parameter (unconstrained scale).
    pub step_sizes: Vec<Vec<f64>>,
    pub config: SamplerConfig,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// Per-chain draws of one parameter.
    pub fn param(&self, name: &str) -> Option<Vec<&[f64]>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.draws.iter().map(|c| c[i].as_slice()).collect())
    }

    /// All draws of one parameter, chains concatenated in order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.param(name).map(|cs| cs.concat())
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    accepted: Vec<usize>,
    steps: Vec<f64>,
}

/// Runs `cfg.n_chains` independent chains from `init`.
///
/// `log_post` is evaluated on the constrained scale. A NaN at a proposal
/// rejects the proposal; a non-finite value at `init` is an error. Chain
/// `c` is driven by a ChaCha8 stream seeded with `seed ^ c`, so results do
/// not depend on scheduling.
pub fn sample<F>(log_post: F, space: &ParameterSpace, init: &[f64], cfg: &SamplerConfig) -> Result<ChainSet>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if init.len() != space.dim() {
        return Err(Error::arg(format!("init has {} values for {} parameters", init.len(), space.dim())));
    }
    for ((name, support), &x) in space.names.iter().zip(&space.supports).zip(init) {
        if !support.contains(x) {
            return Err(Error::arg(format!("initial value {x} for {name} is outside its support")));
        }
    }
    let lp0 = log_post(init);
    if !lp0.is_finite() {
        return Err(Error::NonFiniteInit(lp0));
    }

    let outputs: Vec<ChainOutput> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&log_post, space, init, cfg, cfg.seed ^ c as u64))
        .collect();

    let per_chain = cfg.draws_per_chain();
    let post_iters = (per_chain * cfg.thin) as f64;
    let dim = space.dim();
    let accept_rates = (0..dim)
        .map(|i| outputs.iter().map(|o| o.accepted[i] as f64 / post_iters).sum::<f64>() / outputs.len() as f64)
        .collect();
    let (draws, step_sizes) = outputs.into_iter().map(|o| (o.draws, o.steps)).unzip();
    Ok(ChainSet { names: space.names.clone(), draws, accept_rates, step_sizes, config: cfg.clone() })
}

fn run_chain<F>(log_post: &F, space: &ParameterSpace, init: &[f64], cfg: &SamplerConfig, seed: u64) -> ChainOutput
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let supports = &space.supports;
    let dim = supports.len();
    let per_chain = cfg.draws_per_chain();

    let mut x = init.to_vec();
    let mut z: Vec<f64> = supports.iter().zip(&x).map(|(s, &v)| s.to_unconstrained(v)).collect();
    let mut jac: Vec<f64> = supports.iter().zip(&z).map(|(s, &v)| s.log_jacobian(v)).collect();
    let mut lp = log_post(&x);
    let mut log_step = vec![INITIAL_STEP.ln(); dim];

    let mut window_accepts = vec![0usize; dim];
    let mut batch = 0usize;
    let mut accepted = vec![0usize; dim];
    let mut draws = vec![Vec::with_capacity(per_chain); dim];

    let total_iters = cfg.burn_in + per_chain * cfg.thin;
    for iter in 0..total_iters {
        let burning = iter < cfg.burn_in;
        for i in 0..dim {
            let eps: f64 = rng.sample(StandardNormal);
            let z_new = z[i] + log_step[i].exp() * eps;
            let x_new = supports[i].to_constrained(z_new);
            let u: f64 = rng.random();
            if !supports[i].contains(x_new) {
                continue;
            }
            let old = x[i];
            x[i] = x_new;
            let lp_new = log_post(&x);
            let jac_new = supports[i].log_jacobian(z_new);
            let log_ratio = (lp_new + jac_new) - (lp + jac[i]);
            if !lp_new.is_nan() && u.ln() < log_ratio {
                z[i] = z_new;
                jac[i] = jac_new;
                lp = lp_new;
                if burning {
                    window_accepts[i] += 1;
                } else {
                    accepted[i] += 1;
                }
            } else {
                x[i] = old;
            }
        }

        if burning && (iter + 1) % cfg.adapt_window == 0 {
            batch += 1;
            let gain = (batch as f64).powf(-0.5);
            for i in 0..dim {
                let rate = window_accepts[i] as f64 / cfg.adapt_window as f64;
                log_step[i] += gain * (rate - cfg.target_accept);
                window_accepts[i] = 0;
            }
        }

        if !burning && (iter - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            for (d, &v) in draws.iter_mut().zip(&x) {
                d.push(v);
            }
        }
    }

    ChainOutput { draws, accepted, steps: log_step.iter().map(|s| s.exp()).collect() }
}
