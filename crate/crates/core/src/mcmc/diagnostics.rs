//! Posterior summaries: moments, interpolated quantiles, split R-hat and
//! rank-normalised bulk ESS.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ChainSet;
use crate::error::{Error, Result};

const MIN_CHAINS: usize = 2;
const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Split R-hat; `None` when the within-chain variance is zero.
    pub rhat: Option<f64>,
    /// Bulk effective sample size; `None` for constant draws.
    pub ess_bulk: Option<f64>,
}

impl ParamSummary {
    pub fn ci95(&self) -> (f64, f64) {
        (self.q025, self.q975)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub n_chains: usize,
    pub draws_per_chain: usize,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Largest R-hat, or `None` if any parameter has an undefined R-hat.
    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().try_fold(1.0f64, |m, p| p.rhat.map(|r| m.max(r)))
    }
}

pub fn summarize(chains: &ChainSet) -> Result<PosteriorSummary> {
    let params = chains
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let per_chain: Vec<&[f64]> = chains.draws.iter().map(|c| c[i].as_slice()).collect();
            summarize_chains(name, &per_chain)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary { params, n_chains: chains.n_chains(), draws_per_chain: chains.draws_per_chain() })
}

/// Summary of one parameter given its per-chain draws.
pub fn summarize_chains(name: &str, chains: &[&[f64]]) -> Result<ParamSummary> {
    if chains.len() < MIN_CHAINS {
        return Err(Error::arg(format!("need at least {MIN_CHAINS} chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::arg("chains have unequal lengths"));
    }
    if n < MIN_DRAWS {
        return Err(Error::arg(format!("need at least {MIN_DRAWS} draws per chain, got {n}")));
    }
    let mut all: Vec<f64> = chains.concat();
    let total = all.len() as f64;
    let mean = all.iter().sum::<f64>() / total;
    let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (total - 1.0)).sqrt();
    all.sort_by(f64::total_cmp);
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: quantile_sorted(&all, 0.025),
        q50: quantile_sorted(&all, 0.5),
        q975: quantile_sorted(&all, 0.975),
        rhat: split_rhat(chains),
        ess_bulk: bulk_ess(chains),
    })
}

/// Linear interpolation between order statistics (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Halves of every chain; the middle draw of an odd-length chain is dropped.
fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

/// Potential scale reduction over split chains.
///
/// The estimate is floored at 1: values below 1 only arise from sampling
/// noise in the between-chain variance.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    let halves = split_halves(chains);
    let n = halves[0].len() as f64;
    let (means, vars): (Vec<f64>, Vec<f64>) = halves.iter().map(|h| mean_var(h)).unzip();
    let within = vars.iter().sum::<f64>() / vars.len() as f64;
    if !(within > 0.0) {
        return None;
    }
    let between = n * mean_var(&means).1;
    let var_plus = (n - 1.0) / n * within + between / n;
    Some((var_plus / within).sqrt().max(1.0))
}

/// Rank-normalised split-chain ESS (bulk ESS), capped at the number of draws.
pub fn bulk_ess(chains: &[&[f64]]) -> Option<f64> {
    let halves = split_halves(chains);
    let normalised = rank_normalise(&halves)?;
    let views: Vec<&[f64]> = normalised.iter().map(Vec::as_slice).collect();
    let total: usize = chains.iter().map(|c| c.len()).sum();
    geyer_ess(&views).map(|e| e.min(total as f64))
}

fn rank_normalise(chains: &[&[f64]]) -> Option<Vec<Vec<f64>>> {
    let n: usize = chains.iter().map(|c| c.len()).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, ch)| ch.iter().enumerate().map(move |(i, &v)| (v, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    if idx.first()?.0 == idx.last()?.0 {
        return None;
    }
    let std_normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // average 1-based rank across ties
        let rank = (start + end + 1) as f64 / 2.0;
        let z = std_normal.inverse_cdf((rank - 0.375) / (n as f64 + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    Some(out)
}

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial positive and monotone sequences.
fn geyer_ess(chains: &[&[f64]]) -> Option<f64> {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let chain_means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let mean_within = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let mut var_plus = mean_within * (nf - 1.0) / nf;
    if chains.len() > 1 {
        var_plus += mean_var(&chain_means).1;
    }
    if !(var_plus > 0.0) {
        return None;
    }
    let rho = |lag: usize| {
        let acov = chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m;
        1.0 - (mean_within - acov) / var_plus
    };

    let max_lag = n.saturating_sub(3);
    let mut pair_sums: Vec<f64> = Vec::new();
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    let mut t = 1;
    loop {
        let p = rho_even + rho_odd;
        if p <= 0.0 {
            break;
        }
        pair_sums.push(p);
        if t + 2 > max_lag {
            break;
        }
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        t += 2;
    }
    // Initial monotone sequence.
    for k in 1..pair_sums.len() {
        if pair_sums[k] > pair_sums[k - 1] {
            pair_sums[k] = pair_sums[k - 1];
        }
    }
    let tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    let tau = tau.max(1.0 / (m * nf).log10());
    Some(m * nf / tau)
}
