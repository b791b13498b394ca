//! Seeded data generation from the two-population process, and Monte Carlo
//! bias sweeps comparing the standard and bookend estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::SamplerConfig;
use crate::meta_core::{exact_mixture_or, observed_log_or, sigmoid, ArmData, Dataset, ScenarioParams, Treatment};
use crate::models::{fit, ModelSpec};

pub const DEFAULT_REPLICATIONS: usize = 200;

/// Population a simulated study enrols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    Pop1,
    Pop2,
    /// Fraction `w` from population 1, the rest from population 2.
    Mixture(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimStudy {
    pub population: Population,
    pub arm_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub scenario: ScenarioParams,
    pub studies: Vec<SimStudy>,
    pub seed: u64,
}

impl SimDesign {
    /// Population 1, population 2 and one mixed study, all at the scenario's
    /// arm size and mixing proportion.
    pub fn three_study(scenario: ScenarioParams, seed: u64) -> Self {
        let n = scenario.arm_size;
        let studies = [Population::Pop1, Population::Pop2, Population::Mixture(scenario.w)]
            .map(|population| SimStudy { population, arm_size: n })
            .to_vec();
        Self { scenario, studies, seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.studies.is_empty() {
            return Err(Error::arg("design has no studies"));
        }
        for (i, s) in self.studies.iter().enumerate() {
            if s.arm_size == 0 {
                return Err(Error::arg(format!("study {} has arm size 0", i + 1)));
            }
            if let Population::Mixture(w) = s.population {
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::arg(format!("study {} mixing proportion {w} outside [0, 1]", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Exact event probabilities `(control, active)` for each study.
    pub fn probabilities(&self) -> Result<Vec<(f64, f64)>> {
        let sc = &self.scenario;
        self.studies
            .iter()
            .map(|s| match s.population {
                Population::Pop1 => Ok((sigmoid(sc.mu1), sigmoid(sc.mu1 + sc.d))),
                Population::Pop2 => Ok((sigmoid(sc.mu2), sigmoid(sc.mu2 + sc.d))),
                Population::Mixture(w) => {
                    let r = exact_mixture_or(&ScenarioParams { w, ..*sc })?;
                    Ok((r.p_mix_control, r.p_mix_active))
                }
            })
            .collect()
    }
}

/// Draws one dataset. Studies are labelled "1", "2", ... in design order.
pub fn simulate(design: &SimDesign) -> Result<Dataset> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut arms = Vec::with_capacity(2 * design.studies.len());
    for (i, (study, (pc, pa))) in design.studies.iter().zip(design.probabilities()?).enumerate() {
        let id = (i + 1).to_string();
        for (treatment, p) in [(Treatment::Control, pc), (Treatment::Active, pa)] {
            let n = study.arm_size;
            let r = Binomial::new(n, p).map_err(|e| Error::arg(e.to_string()))?.sample(&mut rng);
            arms.push(ArmData::new(id.clone(), treatment, r, n)?);
        }
    }
    Dataset::new(arms)
}

/// One point of a bias sweep: baseline gap `mu1 - mu2`, population-1
/// fraction of the mixed study, and conditional log-OR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gap: f64,
    pub w: f64,
    pub d: f64,
}

/// Fixed parts of every simulated dataset in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub mu1: f64,
    pub arm_size: u64,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub replications: usize,
    pub mean_standard_d: f64,
    pub se_standard_d: f64,
    pub mean_bookend_d: f64,
    pub se_bookend_d: f64,
    /// Woolf log-OR of the mixed study, averaged over replications.
    pub mean_mixed_observed_log_or: f64,
    pub se_mixed_observed_log_or: f64,
    pub exact_log_or_mix: f64,
    pub attenuation_factor: Option<f64>,
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Seed for one replication, mixing the sweep seed with cell and replication
/// indices (SplitMix64 finaliser).
fn replication_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    let mut z = seed ^ ((cell as u64) << 32) ^ rep as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo comparison of the standard FE and bookend estimates of `d`
/// over a grid of scenarios.
///
/// Each replication simulates population 1 (study "1"), population 2
/// (study "2", baseline `mu1 - gap`) and a mixed study ("3"), then fits
/// both models with the bookends fixed to the two homogeneous studies.
pub fn bias_sweep(cells: &[SweepCell], template: &SweepTemplate, replications: usize) -> Result<Vec<SweepRow>> {
    if replications == 0 {
        return Err(Error::arg("replications must be at least 1"));
    }
    template.sampler.validate()?;
    cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let scenario = ScenarioParams::new(template.mu1, template.mu1 - cell.gap, cell.d, cell.w, template.arm_size)?;
            let exact = exact_mixture_or(&scenario)?;
            let reps = (0..replications)
                .into_par_iter()
                .map(|rep| {
                    let seed = replication_seed(template.seed, ci, rep);
                    let data = simulate(&SimDesign::three_study(scenario, seed))?;
                    let cfg = template.sampler.clone().with_seed(seed);
                    let fe = fit(&data, &ModelSpec::standard_fe(), &cfg)?;
                    let bk = fit(&data, &ModelSpec::bookend("2", "1"), &cfg)?;
                    let mixed = observed_log_or(&data.studies()[2]).map_or(f64::NAN, |e| e.log_or);
                    Ok((fe.effect().mean, bk.effect().mean, mixed))
                })
                .collect::<Result<Vec<_>>>()?;
            let column = |f: fn(&(f64, f64, f64)) -> f64| -> Vec<f64> { reps.iter().map(f).filter(|v| v.is_finite()).collect() };
            let (mean_standard_d, se_standard_d) = mean_se(&column(|r| r.0));
            let (mean_bookend_d, se_bookend_d) = mean_se(&column(|r| r.1));
            let (mean_mixed_observed_log_or, se_mixed_observed_log_or) = mean_se(&column(|r| r.2));
            Ok(SweepRow {
                cell: *cell,
                replications,
                mean_standard_d,
                se_standard_d,
                mean_bookend_d,
                se_bookend_d,
                mean_mixed_observed_log_or,
                se_mixed_observed_log_or,
                exact_log_or_mix: exact.log_or_mix,
                attenuation_factor: exact.attenuation_factor,
            })
        })
        .collect()
}
