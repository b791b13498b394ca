//! Command-line arguments, mapped onto [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::mcmc::SamplerConfig;
use crate::meta_core::ScenarioParams;
use crate::models::ModelKind;
use crate::simulate::{Population, SimStudy};

use super::{Command, OutputFormat, PlotColors, RunConfig, SweepSettings};

#[derive(Debug, Parser)]
#[command(name = "bookend", version, about = "Bayesian pairwise meta-analysis with a bookend mixture correction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Fit one model to arm-level data.
    Fit(FitArgs),
    /// Fit the standard and bookend models and compare them.
    Diagnose(DiagnoseArgs),
    /// Simulate a dataset from the two-population process.
    Simulate(SimulateArgs),
    /// Monte Carlo bias sweep of the standard and bookend estimators.
    Sweep(SweepArgs),
    /// Exact marginal odds ratio of a probability-scale mixture.
    Attenuation(AttenuationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    StandardFe,
    StandardRe,
    Bookend,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::StandardFe => ModelKind::StandardFe,
            ModelArg::StandardRe => ModelKind::StandardRe,
            ModelArg::Bookend => ModelKind::Bookend,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Report,
    Text,
    Plot,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Report => OutputFormat::StructuredReport,
            FormatArg::Text => OutputFormat::TextSummary,
            FormatArg::Plot => OutputFormat::ForestPlot,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Number of chains.
    #[arg(long, default_value_t = 3)]
    pub chains: usize,
    /// Warm-up iterations per chain, discarded.
    #[arg(long, default_value_t = 2000)]
    pub burn_in: usize,
    /// Retained draws after thinning, summed over chains.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Keep every k-th post-warm-up draw.
    #[arg(long, default_value_t = 2)]
    pub thin: usize,
    /// Base seed; chain i uses seed XOR i. Recorded in every report.
    #[arg(long, default_value_t = 20_240_617)]
    pub seed: u64,
}

impl SamplerArgs {
    fn config(&self) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.chains,
            burn_in: self.burn_in,
            total_draws: self.samples,
            thin: self.thin,
            seed: self.seed,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = "bookend-out")]
    pub out: PathBuf,
    /// Artifacts to write.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [FormatArg::Report, FormatArg::Text, FormatArg::Plot])]
    pub formats: Vec<FormatArg>,
    /// Forest-plot colour of study rows (any SVG colour).
    #[arg(long)]
    pub color_study: Option<String>,
    /// Forest-plot colour of the standard fixed-effect row.
    #[arg(long)]
    pub color_fe: Option<String>,
    /// Forest-plot colour of the standard random-effects row.
    #[arg(long)]
    pub color_re: Option<String>,
    /// Forest-plot colour of the bookend row.
    #[arg(long)]
    pub color_bookend: Option<String>,
}

impl OutputArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.out_dir = self.out;
        cfg.formats = self.formats.into_iter().map(Into::into).collect();
        let mut colors = PlotColors::default();
        for (slot, value) in [
            (&mut colors.study, self.color_study),
            (&mut colors.standard_fe, self.color_fe),
            (&mut colors.standard_re, self.color_re),
            (&mut colors.bookend, self.color_bookend),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        cfg.colors = colors;
    }
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Prior sd of log-odds parameters.
    #[arg(long, default_value_t = 10.0)]
    pub prior_sd: f64,
    /// Half-normal scale of the heterogeneity sd (random-effects model).
    #[arg(long, default_value_t = 1.0)]
    pub tau_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV with header `study,treatment,events,n`.
    pub input: PathBuf,
    /// Model to fit.
    #[arg(long, value_enum, default_value_t = ModelArg::StandardFe)]
    pub model: ModelArg,
    /// Low-baseline bookend study (auto-selected if omitted).
    #[arg(long)]
    pub bookend_low: Option<String>,
    /// High-baseline bookend study (auto-selected if omitted).
    #[arg(long)]
    pub bookend_high: Option<String>,
    /// Baseline log-odds spread above which a warning is raised.
    #[arg(long, default_value_t = 1.0)]
    pub spread_threshold: f64,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// CSV with header `study,treatment,events,n`.
    pub input: PathBuf,
    /// Low-baseline bookend study (auto-selected if omitted).
    #[arg(long)]
    pub bookend_low: Option<String>,
    /// High-baseline bookend study (auto-selected if omitted).
    #[arg(long)]
    pub bookend_high: Option<String>,
    /// Baseline log-odds spread above which the spread flag is raised.
    #[arg(long, default_value_t = 1.0)]
    pub spread_threshold: f64,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Baseline log-odds of population 1.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu1: f64,
    /// Baseline log-odds of population 2.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub mu2: f64,
    /// Conditional log odds ratio.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub d: f64,
    /// Fraction of the mixed study drawn from population 1.
    #[arg(long, default_value_t = 0.5)]
    pub w: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Patients per arm.
    #[arg(long, default_value_t = 1000)]
    pub arm_size: u64,
    /// Comma-separated study populations: `1`, `2`, `mix` (uses --w) or
    /// `mix:<w>`.
    #[arg(long, value_delimiter = ',')]
    pub populations: Vec<String>,
    /// Simulation seed.
    #[arg(long, default_value_t = 20_240_617)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Baseline log-odds of population 1.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu1: f64,
    /// Baseline gaps mu1 - mu2.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 4.0])]
    pub gaps: Vec<f64>,
    /// Population-1 fractions of the mixed study.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5])]
    pub ws: Vec<f64>,
    /// Conditional log odds ratios.
    #[arg(long, value_delimiter = ',', default_values_t = [-0.5], allow_hyphen_values = true)]
    pub ds: Vec<f64>,
    /// Patients per arm.
    #[arg(long, default_value_t = 1000)]
    pub arm_size: u64,
    /// Simulated datasets per grid cell.
    #[arg(long, default_value_t = crate::simulate::DEFAULT_REPLICATIONS)]
    pub replications: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AttenuationArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn scenario(s: &ScenarioArgs, arm_size: u64) -> Result<ScenarioParams> {
    ScenarioParams::new(s.mu1, s.mu2, s.d, s.w, arm_size)
}

/// Parses a `--populations` token.
pub fn parse_population(token: &str, default_w: f64) -> Result<Population> {
    match token.trim() {
        "1" => Ok(Population::Pop1),
        "2" => Ok(Population::Pop2),
        "mix" => Ok(Population::Mixture(default_w)),
        t => t
            .strip_prefix("mix:")
            .and_then(|w| w.parse::<f64>().ok())
            .map(Population::Mixture)
            .ok_or_else(|| Error::arg(format!("unknown population {t:?}; expected 1, 2, mix or mix:<w>"))),
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        match self.command {
            CommandArgs::Fit(a) => {
                let mut cfg = RunConfig::new(Command::Fit, ".");
                cfg.input = Some(a.input);
                cfg.model = a.model.into();
                cfg.bookend_low = a.bookend_low;
                cfg.bookend_high = a.bookend_high;
                cfg.spread_threshold = a.spread_threshold;
                cfg.prior_sd_logodds = a.prior.prior_sd;
                cfg.tau_prior_scale = a.prior.tau_scale;
                cfg.sampler = a.sampler.config();
                a.output.apply(&mut cfg);
                Ok(cfg)
            }
            CommandArgs::Diagnose(a) => {
                let mut cfg = RunConfig::new(Command::Diagnose, ".");
                cfg.input = Some(a.input);
                cfg.model = ModelKind::Bookend;
                cfg.bookend_low = a.bookend_low;
                cfg.bookend_high = a.bookend_high;
                cfg.spread_threshold = a.spread_threshold;
                cfg.prior_sd_logodds = a.prior.prior_sd;
                cfg.tau_prior_scale = a.prior.tau_scale;
                cfg.sampler = a.sampler.config();
                a.output.apply(&mut cfg);
                Ok(cfg)
            }
            CommandArgs::Simulate(a) => {
                let mut cfg = RunConfig::new(Command::Simulate, ".");
                cfg.scenario = scenario(&a.scenario, a.arm_size)?;
                cfg.populations = a
                    .populations
                    .iter()
                    .map(|t| parse_population(t, a.scenario.w).map(|population| SimStudy { population, arm_size: a.arm_size }))
                    .collect::<Result<_>>()?;
                cfg.sampler.seed = a.seed;
                a.output.apply(&mut cfg);
                Ok(cfg)
            }
            CommandArgs::Sweep(a) => {
                let mut cfg = RunConfig::new(Command::Sweep, ".");
                cfg.scenario.mu1 = a.mu1;
                cfg.scenario.arm_size = a.arm_size;
                cfg.sweep = SweepSettings { gaps: a.gaps, ws: a.ws, ds: a.ds, replications: a.replications };
                cfg.sampler = a.sampler.config();
                a.output.apply(&mut cfg);
                Ok(cfg)
            }
            CommandArgs::Attenuation(a) => {
                let mut cfg = RunConfig::new(Command::Attenuation, ".");
                cfg.scenario = scenario(&a.scenario, 1)?;
                a.output.apply(&mut cfg);
                Ok(cfg)
            }
        }
    }
}
