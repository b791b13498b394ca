//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use bookend::mcmc::{sample, ChainSet, ParameterSpace, SamplerConfig, Support};
use bookend::meta_core::{ArmData, Dataset, Treatment};

/// Rows of `(study, control events, control n, active events, active n)`.
pub fn dataset(rows: &[(&str, u64, u64, u64, u64)]) -> Dataset {
    let mut arms = Vec::new();
    for &(id, r1, n1, r2, n2) in rows {
        arms.push(ArmData::new(id, Treatment::Control, r1, n1).unwrap());
        arms.push(ArmData::new(id, Treatment::Active, r2, n2).unwrap());
    }
    Dataset::new(arms).unwrap()
}

/// The hypothetical lung-disease example: smokers, non-smokers, 50/50 mix.
pub fn table1() -> Dataset {
    dataset(&[("1", 514, 1000, 375, 1000), ("2", 118, 1000, 81, 1000), ("3", 304, 1000, 237, 1000)])
}

pub const TABLE1_CSV: &str =
    "study,treatment,events,n\n1,1,514,1000\n1,2,375,1000\n2,1,118,1000\n2,2,81,1000\n3,1,304,1000\n3,2,237,1000\n";

pub fn quick(seed: u64) -> SamplerConfig {
    SamplerConfig { burn_in: 1000, total_draws: 3000, thin: 1, ..SamplerConfig::default() }.with_seed(seed)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binomial kernel `r ln p + (n - r) ln(1 - p)`, written out directly.
fn binom_kernel(r: f64, n: f64, eta: f64) -> f64 {
    let p = logistic(eta);
    r * p.ln() + (n - r) * (1.0 - p).ln()
}

/// Single-study `(mu, d)` posterior with N(0, sd^2) priors, written without
/// the library's model code.
#[derive(Debug, Clone, Copy)]
pub struct SingleStudy {
    pub r1: f64,
    pub n1: f64,
    pub r2: f64,
    pub n2: f64,
    pub prior_sd: f64,
}

impl SingleStudy {
    pub fn log_post(&self, mu: f64, d: f64) -> f64 {
        let prior = -(mu * mu + d * d) / (2.0 * self.prior_sd * self.prior_sd);
        binom_kernel(self.r1, self.n1, mu) + binom_kernel(self.r2, self.n2, mu + d) + prior
    }

    /// Posterior means of `(mu, d)` by normalised integration on a
    /// `k x k` grid covering +-`half` around the empirical logits.
    pub fn grid_means(&self, k: usize, half: f64) -> (f64, f64) {
        let l1 = (self.r1 / (self.n1 - self.r1)).ln();
        let l2 = (self.r2 / (self.n2 - self.r2)).ln();
        let (mu0, d0) = (l1, l2 - l1);
        let step = 2.0 * half / (k - 1) as f64;
        let mut lp = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let mu = mu0 - half + i as f64 * step;
                let d = d0 - half + j as f64 * step;
                lp.push((mu, d, self.log_post(mu, d)));
            }
        }
        let max = lp.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m_mu, mut m_d) = (0.0, 0.0, 0.0);
        for (mu, d, l) in lp {
            let w = (l - max).exp();
            z += w;
            m_mu += w * mu;
            m_d += w * d;
        }
        (m_mu / z, m_d / z)
    }

    pub fn sample(&self, cfg: &SamplerConfig) -> ChainSet {
        let space = ParameterSpace::new(vec![("mu".into(), Support::Real), ("d".into(), Support::Real)]).unwrap();
        let init = [(self.r1 / (self.n1 - self.r1)).ln(), 0.0];
        sample(|t| self.log_post(t[0], t[1]), &space, &init, cfg).unwrap()
    }
}

pub fn grid_study() -> SingleStudy {
    SingleStudy { r1: 30.0, n1: 100.0, r2: 18.0, n2: 100.0, prior_sd: 10.0 }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Fixed-effect maximum likelihood `(mu_1..mu_J, d)` by Newton's method on
/// the profile in `d` (each `mu_j` solved by its own 1-D Newton step).
pub fn fe_mle(data: &Dataset) -> (Vec<f64>, f64) {
    let studies = data.studies();
    let mut mu: Vec<f64> = studies.iter().map(|s| s.empirical_control_logit()).collect();
    let mut d = 0.0;
    for _ in 0..200 {
        for (j, s) in studies.iter().enumerate() {
            for _ in 0..50 {
                let (p1, p2) = (logistic(mu[j]), logistic(mu[j] + d));
                let g = s.control.events as f64 - s.control.size as f64 * p1 + s.active.events as f64
                    - s.active.size as f64 * p2;
                let h = s.control.size as f64 * p1 * (1.0 - p1) + s.active.size as f64 * p2 * (1.0 - p2);
                mu[j] += g / h;
            }
        }
        let (mut g, mut h) = (0.0, 0.0);
        for (j, s) in studies.iter().enumerate() {
            let p2 = logistic(mu[j] + d);
            g += s.active.events as f64 - s.active.size as f64 * p2;
            h += s.active.size as f64 * p2 * (1.0 - p2);
        }
        d += g / h;
        if g.abs() < 1e-12 {
            break;
        }
    }
    (mu, d)
}
