use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laser_linewidth::models::{LaserModel, ModelKind};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "laserlw",
    version,
    about = "Laser linewidth simulator (times in 1/κ, rates in κ)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary photon-number distribution.
    Stationary {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Linewidth by the eigenvalue, spectrum and g1-fit routes against the closed form.
    Linewidth {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Linewidth over a list of φ or μ values, computed in parallel.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Micromaser φ values.
        #[arg(
            long,
            value_delimiter = ',',
            conflicts_with = "mus",
            required_unless_present = "mus"
        )]
        phis: Option<Vec<f64>>,
        /// Gain rates μ.
        #[arg(long, value_delimiter = ',')]
        mus: Option<Vec<f64>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Quantum-jump trajectories of the injection protocol and their ensemble statistics.
    Traj {
        #[command(flatten)]
        model: ModelArgs,
        /// Base seed; trajectory i uses stream i of this seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of trajectories.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, visible_alias = "tmax", default_value_t = 200.0)]
        duration: f64,
        /// Sampling interval.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Samples at t ≤ burn-in are discarded; defaults to duration/10.
        #[arg(long)]
        burn_in: Option<f64>,
        /// Per-pass atom coupling; defaults to 0.01 over the gain amplitude at n = μ.
        #[arg(long)]
        pass_epsilon: Option<f64>,
        /// Atom arrival rate; defaults to μ.
        #[arg(long)]
        atom_rate: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Schawlow–Townes refinement chain on SI inputs.
    Limits {
        /// Key-value file (`key = value` per line, `#` comments); flags override it.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Optical angular frequency, rad/s.
        #[arg(long)]
        omega: Option<f64>,
        /// Output power, W.
        #[arg(long)]
        p_out: Option<f64>,
        /// Atomic FWHM linewidth, rad/s.
        #[arg(long)]
        gamma: Option<f64>,
        /// Cavity FWHM linewidth, rad/s.
        #[arg(long)]
        kappa: Option<f64>,
        /// Mean photon number n̄.
        #[arg(long)]
        n_bar: Option<f64>,
        /// Stored coherent excitation number N̄.
        #[arg(long)]
        n_coh: Option<f64>,
        /// Bare linewidth, overriding the γ, κ combination.
        #[arg(long)]
        ell_bare: Option<f64>,
        #[arg(long)]
        hbar: Option<f64>,
        /// Quantities that must be computable (ell_ST, ell_bare, ell_ST1, ell_ST2, ell_st,
        /// ell_st_bound, ell_0); by default every computable one is reported.
        #[arg(long, value_delimiter = ',')]
        quantities: Option<Vec<String>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// First-order coherence g1(τ).
    G1 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Normalized power spectrum.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Standard,
    Unstimulated,
    Micromaser,
    Nonlinear,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Standard => ModelKind::Standard,
            KindArg::Unstimulated => ModelKind::Unstimulated,
            KindArg::Micromaser => ModelKind::Micromaser,
            KindArg::Nonlinear => ModelKind::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Standard)]
    pub model: KindArg,
    /// Gain rate in units of κ; required except for μ sweeps.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Micromaser per-pass interaction ε.
    #[arg(long, conflicts_with = "phi", allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Micromaser φ = ε√μ.
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    /// Truncation override.
    #[arg(long)]
    pub nmax: Option<usize>,
}

impl ModelArgs {
    pub fn mu(&self) -> Result<f64, CliError> {
        self.mu
            .ok_or_else(|| CliError::Validation("--mu is required".into()))
    }

    pub fn build(&self) -> Result<LaserModel, CliError> {
        self.build_with(self.mu()?, self.phi)
    }

    /// The model at gain rate `mu`, with φ (if any) taking precedence over ε.
    pub fn build_with(&self, mu: f64, phi: Option<f64>) -> Result<LaserModel, CliError> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(CliError::Validation(format!(
                "invalid value for --mu: gain rate must be positive, got {mu}"
            )));
        }
        let kind: ModelKind = self.model.into();
        let epsilon = match (phi, self.epsilon) {
            (Some(phi), _) => {
                if !(phi.is_finite() && phi > 0.0) {
                    return Err(CliError::Validation(format!(
                        "invalid value for --phi: must be positive, got {phi}"
                    )));
                }
                Some(phi / mu.sqrt())
            }
            (None, eps) => eps,
        };
        if kind == ModelKind::Micromaser && epsilon.is_none() {
            return Err(CliError::Validation(
                "the micromaser needs exactly one of --epsilon or --phi".into(),
            ));
        }
        if kind != ModelKind::Micromaser && epsilon.is_some() {
            return Err(CliError::Validation(format!(
                "--epsilon/--phi apply only to --model micromaser, not {kind}"
            )));
        }
        Ok(LaserModel::new(kind, mu, epsilon, self.nmax)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Correlation horizon; defaults to 8 coherence times.
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Correlation time step; defaults to 1/64 coherence time.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Spectrum half-width; defaults to 3 linewidths.
    #[arg(long)]
    pub wmax: Option<f64>,
    /// Number of spectrum points.
    #[arg(long, default_value_t = 1201)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}
