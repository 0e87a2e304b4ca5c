//! Quantum-jump Monte Carlo of the injection protocol: Poisson atom arrivals, each atom
//! measured repeatedly until it is found in the lower state, and photon-counting loss.
//!
//! A run of K upper outcomes followed by a lower one applies Ω_l Ω_u^K with
//! Ω_u = cos θ(aa†), Ω_l = e† sin θ(aa†). Both are diagonal up to the final shift, so K is
//! drawn in one step from its exact law, a mixture over n of geometric distributions with
//! success probability sin²θ_n, and the post-measurement state is written down directly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_state, norm, PureState};
use crate::models::{LaserModel, ModelKind};

/// Largest number of upper-state outcomes accepted for one atom.
pub const REPEAT_LIMIT: u64 = 1_000_000;
/// Largest mass allowed in the top [`TAIL_LEVELS`] levels after any event.
pub const TRAJECTORY_TAIL_TOLERANCE: f64 = 1e-8;
pub const TAIL_LEVELS: usize = 5;
/// Bins for the probability-integral-transform check of the repeat counts.
pub const PIT_BINS: usize = 20;

/// Per-pass coupling between one atom and the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomInteraction {
    kind: ModelKind,
    epsilon: f64,
    mu: f64,
}

impl AtomInteraction {
    pub fn new(kind: ModelKind, epsilon: f64, mu: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(
                "epsilon",
                format!("must be positive, got {epsilon}"),
            ));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        Ok(Self { kind, epsilon, mu })
    }

    /// Per-pass ε used when none is configured: 0.01/c at n = μ, or the model's own ε.
    pub fn default_epsilon(model: &LaserModel) -> f64 {
        let mu = model.mu();
        match model.kind() {
            ModelKind::Micromaser => model.epsilon().expect("micromaser carries epsilon"),
            ModelKind::Nonlinear => {
                let n = mu.round().max(1.0);
                0.01 / (n.sqrt() * (3.0 - n / mu))
            }
            ModelKind::Standard | ModelKind::Unstimulated => 0.01 / mu.sqrt(),
        }
    }

    pub fn for_model(model: &LaserModel, epsilon: Option<f64>) -> Result<Self> {
        let eps = epsilon.unwrap_or_else(|| Self::default_epsilon(model));
        Self::new(model.kind(), eps, model.mu())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Rabi angle θ_n of the |n⟩ → |n+1⟩ transition, ε times the gain amplitude at n + 1.
    pub fn angle(&self, n: usize) -> f64 {
        let x = (n + 1) as f64;
        match self.kind {
            ModelKind::Nonlinear => self.epsilon * x.sqrt() * (3.0 - x / self.mu).max(0.0),
            _ => self.epsilon * x.sqrt(),
        }
    }
}

/// Result of one atom: K upper outcomes, the PIT value of K under its own law, and the field.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomOutcome {
    pub repeats: u64,
    pub pit: f64,
    pub state: PureState,
}

/// Per-level pass quantities, fixed for a given interaction and truncation.
struct PassTable {
    sin: Vec<f64>,
    cos: Vec<f64>,
    ln_sin: Vec<f64>,
    ln_cos: Vec<f64>,
    success: Vec<f64>,
    /// ln(1 − sin²θ_n)
    ln_fail: Vec<f64>,
}

impl PassTable {
    fn new(interaction: &AtomInteraction, dim: usize) -> Self {
        let (sin, cos): (Vec<f64>, Vec<f64>) =
            (0..dim).map(|n| interaction.angle(n).sin_cos()).unzip();
        let success: Vec<f64> = sin.iter().map(|s| s * s).collect();
        Self {
            ln_sin: sin.iter().map(|s| s.abs().ln()).collect(),
            ln_cos: cos.iter().map(|c| c.abs().ln()).collect(),
            ln_fail: success.iter().map(|p| (-p).ln_1p()).collect(),
            sin,
            cos,
            success,
        }
    }

    /// P(K ≤ k) for the geometric mixture, or 0 for k < 0.
    fn repeat_cdf(&self, pops: &[f64], k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (n, &w) in pops.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            total += if self.success[n] >= 1.0 {
                w
            } else {
                -w * ((k + 1) as f64 * self.ln_fail[n]).exp_m1()
            };
        }
        total
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Resolve one atom by repeated measurement until the lower-state outcome.
pub fn atom_cycle<R: Rng>(
    state: &PureState,
    interaction: &AtomInteraction,
    rng: &mut R,
) -> Result<AtomOutcome> {
    let table = PassTable::new(interaction, state.dim());
    cycle_with(state, interaction, &table, rng)
}

fn cycle_with<R: Rng>(
    state: &PureState,
    interaction: &AtomInteraction,
    table: &PassTable,
    rng: &mut R,
) -> Result<AtomOutcome> {
    let psi = state.amplitudes();
    let dim = psi.len();
    if interaction.kind == ModelKind::Unstimulated {
        let mut shifted = vec![Complex64::new(0.0, 0.0); dim];
        shifted[1..].copy_from_slice(&psi[..dim - 1]);
        // Keep amplitudes bit-identical when nothing leaves the space.
        let state = if psi[dim - 1] == Complex64::new(0.0, 0.0) {
            PureState::from_normalized(shifted)
        } else {
            PureState::new(shifted).map_err(|_| truncation_error(1.0, dim - 1))?
        };
        return Ok(AtomOutcome {
            repeats: 0,
            pit: rng.random::<f64>(),
            state,
        });
    }

    let pops = state.populations();
    let n = sample_index(&pops, rng);
    let p = table.success[n];
    let repeats = if p >= 1.0 {
        0
    } else if p <= 0.0 {
        return Err(Error::NonTermination(REPEAT_LIMIT + 1));
    } else {
        let u = 1.0 - rng.random::<f64>();
        let k = (u.ln() / table.ln_fail[n]).floor();
        if !(k <= REPEAT_LIMIT as f64) {
            return Err(Error::NonTermination(if k.is_finite() {
                k as u64
            } else {
                u64::MAX
            }));
        }
        k as u64
    };

    let lo = table.repeat_cdf(&pops, repeats as i64 - 1);
    let hi = table.repeat_cdf(&pops, repeats as i64);
    let pit = lo + rng.random::<f64>() * (hi - lo);

    // Ω_l Ω_u^K ψ in log-magnitude form; the component pushed past n_max is dropped.
    let k = repeats as f64;
    let mut ln_mag = vec![f64::NEG_INFINITY; dim];
    let mut phase = vec![Complex64::new(0.0, 0.0); dim];
    for m in 0..dim - 1 {
        let (s, c) = (table.sin[m], table.cos[m]);
        let amp = psi[m].norm();
        if amp == 0.0 || s == 0.0 || (c == 0.0 && repeats > 0) {
            continue;
        }
        let cos_term = if repeats == 0 {
            0.0
        } else {
            k * table.ln_cos[m]
        };
        ln_mag[m + 1] = table.ln_sin[m] + cos_term + amp.ln();
        let sign = s.signum() * if repeats % 2 == 1 { c.signum() } else { 1.0 };
        phase[m + 1] = psi[m] / amp * sign;
    }
    let peak = ln_mag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(truncation_error(1.0, dim - 1));
    }
    let amps: Vec<Complex64> = ln_mag
        .iter()
        .zip(&phase)
        .map(|(l, ph)| ph * (l - peak).exp())
        .collect();
    Ok(AtomOutcome {
        repeats,
        pit,
        state: PureState::new(amps)?,
    })
}

fn truncation_error(mass: f64, n_max: usize) -> Error {
    Error::Truncation {
        what: "trajectory state",
        mass,
        tolerance: TRAJECTORY_TAIL_TOLERANCE,
        n_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    Fock(usize),
    /// Coherent state of mean photon number μ.
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub model: LaserModel,
    pub duration: f64,
    pub seed: u64,
    /// ChaCha stream; ensembles use one stream per trajectory.
    pub stream: u64,
    pub sample_dt: f64,
    /// Per-pass ε; `None` selects [`AtomInteraction::default_epsilon`].
    pub epsilon: Option<f64>,
    /// Atom arrival rate in units of κ; defaults to μ.
    pub atom_rate: f64,
    pub initial: InitialState,
}

impl TrajectoryConfig {
    pub fn new(model: LaserModel, duration: f64, seed: u64) -> Self {
        let atom_rate = model.mu() * model.kappa();
        Self {
            model,
            duration,
            seed,
            stream: 0,
            sample_dt: 1.0,
            epsilon: None,
            atom_rate,
            initial: InitialState::Coherent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid(
                "duration",
                format!("must be positive, got {}", self.duration),
            ));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(invalid(
                "sample_dt",
                format!("must be positive, got {}", self.sample_dt),
            ));
        }
        if !(self.atom_rate.is_finite() && self.atom_rate >= 0.0) {
            return Err(invalid(
                "atom_rate",
                format!("must be non-negative, got {}", self.atom_rate),
            ));
        }
        Ok(())
    }

    fn initial_state(&self) -> Result<PureState> {
        let space = self.model.space();
        match self.initial {
            InitialState::Fock(n) => PureState::fock(n, space),
            InitialState::Coherent => {
                coherent_state(Complex64::new(self.model.mu().sqrt(), 0.0), space)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub loss_times: Vec<f64>,
    pub atom_times: Vec<f64>,
    pub repeat_counts: Vec<u64>,
    /// Randomized PIT of each repeat count under its own conditional law; uniform if exact.
    pub repeat_pit: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// ⟨n⟩ at each sample time.
    pub n_samples: Vec<f64>,
    /// |ψ_n|² at each sample time.
    pub photon_distributions: Vec<Vec<f64>>,
    pub final_state: PureState,
}

/// Survival probability Σ p_n e^{−ns} of the no-jump evolution and its derivative.
fn survival(pops: &[f64], s: f64) -> (f64, f64) {
    let x = (-s).exp();
    let (mut value, mut slope, mut xn) = (0.0, 0.0, 1.0);
    for (n, p) in pops.iter().enumerate() {
        value += p * xn;
        slope -= n as f64 * p * xn;
        xn *= x;
    }
    (value, slope)
}

/// Time s in (0, h] at which the survival probability falls to r, given S(h) < r ≤ S(0).
fn jump_time(pops: &[f64], r: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    let mut s = 0.5 * h;
    for _ in 0..200 {
        let (value, slope) = survival(pops, s);
        let f = value - r;
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if f == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
            break;
        }
        let newton = s - f / slope;
        s = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    s
}

/// Populations after no-jump evolution for time s, renormalized.
fn decayed_populations(pops: &[f64], s: f64) -> Vec<f64> {
    let x = (-s).exp();
    let mut xn = 1.0;
    let mut out: Vec<f64> = pops
        .iter()
        .map(|p| {
            let v = p * xn;
            xn *= x;
            v
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn decay_state(psi: &PureState, s: f64) -> Result<PureState> {
    let x = (-0.5 * s).exp();
    let mut xn = 1.0;
    let amps = psi
        .amplitudes()
        .iter()
        .map(|c| {
            let v = c * xn;
            xn *= x;
            v
        })
        .collect();
    PureState::new(amps)
}

fn lower(psi: &PureState) -> Result<PureState> {
    let a = psi.amplitudes();
    let mut out = vec![Complex64::new(0.0, 0.0); a.len()];
    for n in 1..a.len() {
        out[n - 1] = a[n] * (n as f64).sqrt();
    }
    PureState::new(out)
}

fn check_tail(psi: &PureState) -> Result<()> {
    let pops = psi.populations();
    let top: f64 = pops[pops.len().saturating_sub(TAIL_LEVELS)..].iter().sum();
    if top > TRAJECTORY_TAIL_TOLERANCE {
        return Err(truncation_error(top, pops.len() - 1));
    }
    debug_assert!((norm(psi.amplitudes()) - 1.0).abs() < 1e-8);
    Ok(())
}

fn mean_of(pops: &[f64]) -> f64 {
    pops.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

pub fn run_trajectory(config: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    let interaction = AtomInteraction::for_model(&config.model, config.epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);

    let mut psi = config.initial_state()?;
    check_tail(&psi)?;
    let table = PassTable::new(&interaction, psi.dim());
    let sample_count = (config.duration / config.sample_dt * (1.0 + 1e-12)).floor() as usize + 1;
    let mut record = TrajectoryRecord {
        loss_times: Vec::new(),
        atom_times: Vec::new(),
        repeat_counts: Vec::new(),
        repeat_pit: Vec::new(),
        sample_times: Vec::with_capacity(sample_count),
        n_samples: Vec::with_capacity(sample_count),
        photon_distributions: Vec::with_capacity(sample_count),
        final_state: psi.clone(),
    };
    let mut t = 0.0;
    let mut next_sample = 0usize;

    loop {
        let wait = if config.atom_rate > 0.0 {
            -(1.0 - rng.random::<f64>()).ln() / config.atom_rate
        } else {
            f64::INFINITY
        };
        let horizon = (t + wait).min(config.duration);
        let atom_arrives = t + wait < config.duration;
        let h = horizon - t;
        let pops = psi.populations();
        let r = 1.0 - rng.random::<f64>();
        let jump = if survival(&pops, h).0 < r {
            Some(jump_time(&pops, r, h))
        } else {
            None
        };
        let step = jump.unwrap_or(h);
        let event_time = if jump.is_some() { t + step } else { horizon };

        while next_sample < sample_count {
            let ts = next_sample as f64 * config.sample_dt;
            if ts > event_time {
                break;
            }
            let p = decayed_populations(&pops, ts - t);
            record.sample_times.push(ts);
            record.n_samples.push(mean_of(&p));
            record.photon_distributions.push(p);
            next_sample += 1;
        }

        psi = decay_state(&psi, step)?;
        if jump.is_some() {
            psi = lower(&psi)?;
            record.loss_times.push(event_time);
        } else if atom_arrives {
            let outcome = cycle_with(&psi, &interaction, &table, &mut rng)?;
            psi = outcome.state;
            record.atom_times.push(event_time);
            record.repeat_counts.push(outcome.repeats);
            record.repeat_pit.push(outcome.pit);
        } else {
            break;
        }
        check_tail(&psi)?;
        t = event_time;
    }
    record.final_state = psi;
    Ok(record)
}

/// `count` trajectories on consecutive streams starting at `config.stream`, run in parallel.
pub fn run_ensemble(config: &TrajectoryConfig, count: usize) -> Result<Vec<TrajectoryRecord>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            run_trajectory(&TrajectoryConfig {
                stream: config.stream + i,
                ..config.clone()
            })
        })
        .collect()
}

/// Pooled post-burn-in statistics over trajectories. Standard errors treat each trajectory
/// as one independent sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub trajectories: usize,
    pub samples: usize,
    pub mean_n: f64,
    pub mean_n_se: f64,
    pub fano: f64,
    /// Jackknife over trajectories.
    pub fano_se: f64,
    pub distribution: Vec<f64>,
    pub distribution_se: Vec<f64>,
    pub atom_events: usize,
    pub mean_repeats: Option<f64>,
    /// Repeat-count PIT values binned into [`PIT_BINS`] equal bins.
    pub repeat_pit_histogram: Vec<u64>,
    pub repeat_chi_square: Option<f64>,
    pub repeat_p_value: Option<f64>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn ensemble_stats(records: &[TrajectoryRecord], burn_in: f64) -> Result<EnsembleStats> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 trajectories, got {}",
            records.len()
        )));
    }
    let dim = records[0].final_state.dim();
    let mut first = Vec::with_capacity(records.len());
    let mut second = Vec::with_capacity(records.len());
    let mut dists = Vec::with_capacity(records.len());
    let mut samples = 0;
    for rec in records {
        let kept: Vec<&Vec<f64>> = rec
            .sample_times
            .iter()
            .zip(&rec.photon_distributions)
            .filter(|(t, _)| **t > burn_in)
            .map(|(_, p)| p)
            .collect();
        if kept.is_empty() {
            return Err(Error::InsufficientData(format!(
                "a trajectory has no samples after burn-in {burn_in}"
            )));
        }
        samples += kept.len();
        let mut avg = vec![0.0; dim];
        for p in &kept {
            avg.iter_mut().zip(p.iter()).for_each(|(a, x)| *a += x);
        }
        avg.iter_mut().for_each(|a| *a /= kept.len() as f64);
        first.push(
            avg.iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum::<f64>(),
        );
        second.push(
            avg.iter()
                .enumerate()
                .map(|(n, p)| (n * n) as f64 * p)
                .sum::<f64>(),
        );
        dists.push(avg);
    }

    let count = records.len();
    let (mean_n, mean_n_se) = mean_and_se(&first);
    let fano_of = |m1: f64, m2: f64| (m2 - m1 * m1) / m1;
    let sum1: f64 = first.iter().sum();
    let sum2: f64 = second.iter().sum();
    let fano = fano_of(sum1 / count as f64, sum2 / count as f64);
    let leave_out: Vec<f64> = (0..count)
        .map(|i| {
            let k = (count - 1) as f64;
            fano_of((sum1 - first[i]) / k, (sum2 - second[i]) / k)
        })
        .collect();
    let jk_mean = leave_out.iter().sum::<f64>() / count as f64;
    let fano_se = ((count - 1) as f64 / count as f64
        * leave_out.iter().map(|f| (f - jk_mean).powi(2)).sum::<f64>())
    .sqrt();

    let mut distribution = vec![0.0; dim];
    let mut distribution_se = vec![0.0; dim];
    for n in 0..dim {
        let column: Vec<f64> = dists.iter().map(|d| d[n]).collect();
        let (m, se) = mean_and_se(&column);
        distribution[n] = m;
        distribution_se[n] = se;
    }

    let pits: Vec<f64> = records
        .iter()
        .flat_map(|r| r.repeat_pit.iter().copied())
        .collect();
    let repeats: Vec<u64> = records
        .iter()
        .flat_map(|r| r.repeat_counts.iter().copied())
        .collect();
    let mut histogram = vec![0u64; PIT_BINS];
    for u in &pits {
        histogram[((u * PIT_BINS as f64) as usize).min(PIT_BINS - 1)] += 1;
    }
    let (chi, p_value) = if pits.is_empty() {
        (None, None)
    } else {
        let expected = pits.len() as f64 / PIT_BINS as f64;
        let chi: f64 = histogram
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        let law = ChiSquared::new((PIT_BINS - 1) as f64).expect("positive degrees of freedom");
        (Some(chi), Some(law.sf(chi)))
    };

    Ok(EnsembleStats {
        trajectories: count,
        samples,
        mean_n,
        mean_n_se,
        fano,
        fano_se,
        distribution,
        distribution_se,
        atom_events: repeats.len(),
        mean_repeats: (!repeats.is_empty())
            .then(|| repeats.iter().map(|&k| k as f64).sum::<f64>() / repeats.len() as f64),
        repeat_pit_histogram: histogram,
        repeat_chi_square: chi,
        repeat_p_value: p_value,
    })
}
