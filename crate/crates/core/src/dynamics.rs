//! Stationary statistics, sideband evolution, first-order coherence and the power spectrum.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::predicted_linewidth;
use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_state, PhotonDistribution};
use crate::models::{LaserModel, ModelKind, Normalization, SidebandBlock};
use crate::ode::{integrate, OdeOptions};

pub use crate::eigen::slowest_decay_rate;

/// Largest allowed ‖G₀P‖∞ for the stationary distribution.
pub const STATIONARY_RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Number of top truncation levels watched during evolution.
pub const TAIL_LEVELS: usize = 5;
/// Largest allowed share of the state in the top [`TAIL_LEVELS`] levels.
pub const TAIL_MONITOR_TOLERANCE: f64 = 1e-8;
/// Default time resolution and horizon, in coherence times.
pub const POINTS_PER_COHERENCE_TIME: usize = 64;
pub const HORIZON_COHERENCE_TIMES: f64 = 8.0;
/// g1 must have decayed below this at the end of the series for the spectrum.
pub const SPECTRUM_TAIL_TOLERANCE: f64 = 1e-3;
/// Exponential-fit window, in coherence times.
pub const FIT_WINDOW: (f64, f64) = (0.5, 4.0);

/// Values of one sideband, v_i for photon number n = k + i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandVector {
    pub k: usize,
    pub values: Vec<Complex64>,
}

impl SidebandVector {
    pub fn new(k: usize, values: Vec<Complex64>) -> Self {
        Self { k, values }
    }

    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    /// Share of Σ|v| carried by the top `levels` entries.
    pub fn top_share(&self, levels: usize) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let start = self.values.len().saturating_sub(levels);
        self.values[start..].iter().map(|v| v.norm()).sum::<f64>() / total
    }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Null vector of the population block by detailed balance, P_i sup[i−1] = P_{i−1} sub[i].
pub fn stationary_distribution(model: &LaserModel) -> Result<PhotonDistribution> {
    let block = model.sideband_block(0)?;
    let dim = block.dim();
    let mut ln_p = vec![0.0; dim];
    for i in 1..dim {
        ln_p[i] = ln_p[i - 1] + ln_or_neg_inf(block.sub()[i]) - block.sup()[i - 1].ln();
    }
    let peak = ln_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = ln_p.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);

    let dist = PhotonDistribution::new(p)?;
    let top = dist.top_mass(TAIL_LEVELS);
    if top > TAIL_MONITOR_TOLERANCE {
        return Err(Error::Truncation {
            what: "stationary photon distribution",
            mass: top,
            tolerance: TAIL_MONITOR_TOLERANCE,
            n_max: model.n_max(),
        });
    }
    // Interior rows balance exactly; the top row carries the gain flux out of the truncation.
    let (interior, leak) = population_residual(&block, dist.probabilities());
    if leak > STATIONARY_RESIDUAL_TOLERANCE {
        return Err(Error::Truncation {
            what: "stationary flux through n_max",
            mass: leak,
            tolerance: STATIONARY_RESIDUAL_TOLERANCE,
            n_max: model.n_max(),
        });
    }
    if interior > STATIONARY_RESIDUAL_TOLERANCE {
        return Err(Error::Convergence(format!(
            "stationary residual {interior:e} exceeds {STATIONARY_RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(dist)
}

/// Largest residual over the interior rows, and the residual of the top row.
fn population_residual(block: &SidebandBlock, p: &[f64]) -> (f64, f64) {
    let v: Vec<Complex64> = p.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let r = block.apply(&v);
    let (last, rest) = r.split_last().expect("population block is non-empty");
    (
        rest.iter().map(|c| c.norm()).fold(0.0, f64::max),
        last.norm(),
    )
}

/// Solve v̇ = G v for one sideband, returning v at each time in `t_grid`.
pub fn evolve_sideband(
    block: &SidebandBlock,
    v0: &SidebandVector,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<SidebandVector>> {
    if v0.k != block.k() {
        return Err(invalid(
            "v0",
            format!(
                "sideband k = {} does not match block k = {}",
                v0.k,
                block.k()
            ),
        ));
    }
    let out = integrate(block, &v0.values, t_grid, opts)?;
    Ok(out
        .into_iter()
        .map(|values| SidebandVector::new(block.k(), values))
        .collect())
}

/// Sampled g1(τ), τ ascending from 0 in units of 1/κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub tau: Vec<f64>,
    pub g1: Vec<Complex64>,
}

/// Initial amplitude-normalized sideband f_n(0) = n|ψ_n|²/⟨n⟩ for the coherent state of mean μ.
fn coherence_initial_condition(model: &LaserModel) -> Result<SidebandVector> {
    let psi = coherent_state(Complex64::new(model.mu().sqrt(), 0.0), model.space())?;
    let pops = psi.populations();
    let mean = psi.mean_photon_number();
    let values = (1..pops.len())
        .map(|n| Complex64::new(n as f64 * pops[n] / mean, 0.0))
        .collect();
    Ok(SidebandVector::new(1, values))
}

/// g1(τ) = ⟨a†(τ)a(0)⟩/⟨a†a⟩ from the k = 1 sideband, f_n = √n ρ_{n−1,n}.
pub fn g1_series(model: &LaserModel, t_grid: &[f64]) -> Result<CorrelationSeries> {
    g1_series_with(model, t_grid, &OdeOptions::default()).map(|(series, _)| series)
}

/// As [`g1_series`], also returning the sideband at every grid time.
pub fn g1_series_with(
    model: &LaserModel,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<(CorrelationSeries, Vec<SidebandVector>)> {
    match t_grid.first() {
        Some(0.0) => {}
        _ => return Err(Error::Grid("correlation grid must start at τ = 0".into())),
    }
    let block = model.sideband_block_with(1, Normalization::Amplitude)?;
    let f0 = coherence_initial_condition(model)?;
    let states = evolve_sideband(&block, &f0, t_grid, opts)?;
    let norm = f0.sum();
    for s in &states {
        let share = s.top_share(TAIL_LEVELS);
        if share > TAIL_MONITOR_TOLERANCE {
            return Err(Error::Truncation {
                what: "coherence sideband",
                mass: share,
                tolerance: TAIL_MONITOR_TOLERANCE,
                n_max: model.n_max(),
            });
        }
    }
    let g1 = states.iter().map(|s| s.sum() / norm).collect();
    Ok((
        CorrelationSeries {
            tau: t_grid.to_vec(),
            g1,
        },
        states,
    ))
}

/// Coherence time used to size default grids: the larger of the predicted and eigenvalue values.
pub fn coherence_time(model: &LaserModel) -> Result<f64> {
    let block = model.sideband_block_with(1, Normalization::Amplitude)?;
    let lambda = slowest_decay_rate(&block)?;
    Ok((2.0 / predicted_linewidth(model)).max(1.0 / lambda))
}

/// 64 points per coherence time out to 8 coherence times.
pub fn default_time_grid(model: &LaserModel) -> Result<Vec<f64>> {
    Ok(uniform_grid(
        0.0,
        HORIZON_COHERENCE_TIMES * coherence_time(model)?,
        POINTS_PER_COHERENCE_TIME * HORIZON_COHERENCE_TIMES as usize + 1,
    ))
}

pub fn uniform_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![start];
    }
    let step = (end - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Symmetric frequency grid over ±3 linewidths.
pub fn default_omega_grid(linewidth: f64) -> Vec<f64> {
    uniform_grid(-3.0 * linewidth, 3.0 * linewidth, 1201)
}

/// Decay rate of |g1| by least squares on ln|g1| over 0.5 to 4 coherence times.
pub fn fit_decay_rate(series: &CorrelationSeries) -> Result<f64> {
    let mag: Vec<f64> = series.g1.iter().map(|g| g.norm()).collect();
    let target = (-1.0f64).exp();
    let cross = mag
        .windows(2)
        .position(|w| w[0] >= target && w[1] < target)
        .ok_or_else(|| Error::Grid("g1 never falls below 1/e on the grid".into()))?;
    let (t0, t1) = (series.tau[cross], series.tau[cross + 1]);
    let (m0, m1) = (mag[cross], mag[cross + 1]);
    let tau_c = t0 + (t1 - t0) * (m0 - target) / (m0 - m1);

    let (lo, hi) = (FIT_WINDOW.0 * tau_c, FIT_WINDOW.1 * tau_c);
    let pts: Vec<(f64, f64)> = series
        .tau
        .iter()
        .zip(&mag)
        .filter(|(t, m)| **t >= lo && **t <= hi && **m > 0.0)
        .map(|(t, m)| (*t, m.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Grid(format!(
            "only {} samples in the fit window [{lo}, {hi}]",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    Ok(-sxy / sxx)
}

/// Normalized power spectrum with its FWHM and the fitted g1 decay rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub power: Vec<f64>,
    pub fwhm: f64,
    pub fit_decay: f64,
}

/// ∫₀¹ e^{iθu} du and ∫₀¹ u e^{iθu} du.
fn filon_weights(theta: f64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    if theta.abs() < 1e-3 {
        let t2 = theta * theta;
        let a = Complex64::new(1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0);
        let b = Complex64::new(0.5 - t2 / 8.0, theta / 3.0 - theta * t2 / 30.0);
        return (a, b);
    }
    let e = (i * theta).exp();
    let a = (e - 1.0) / (i * theta);
    let b = e / (i * theta) + (e - 1.0) / (theta * theta);
    (a, b)
}

/// Re ∫ g1(τ) e^{iωτ} dτ with g1 linear between samples.
fn transform_at(series: &CorrelationSeries, omega: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..series.tau.len() - 1 {
        let (ta, tb) = (series.tau[j], series.tau[j + 1]);
        let h = tb - ta;
        if h <= 0.0 {
            continue;
        }
        let (ga, gb) = (series.g1[j], series.g1[j + 1]);
        let (a, b) = filon_weights(omega * h);
        acc += Complex64::from_polar(1.0, omega * ta) * h * (ga * a + (gb - ga) * b);
    }
    acc.re
}

/// Cosine transform of g1 on `omega_grid`, peak-normalized, with the FWHM by interpolation.
pub fn power_spectrum(series: &CorrelationSeries, omega_grid: &[f64]) -> Result<Spectrum> {
    if series.tau.len() < 3 || series.tau.len() != series.g1.len() {
        return Err(Error::Grid(
            "correlation series needs at least 3 matched samples".into(),
        ));
    }
    if series.tau[0] != 0.0 || series.tau.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Grid("τ must ascend from 0".into()));
    }
    let last = series.g1.last().expect("non-empty").norm();
    if last > SPECTRUM_TAIL_TOLERANCE {
        return Err(Error::Grid(format!(
            "|g1| = {last:e} at the end of the series; extend the horizon"
        )));
    }
    if omega_grid.len() < 3 || omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid(
            "ω grid must be strictly ascending with ≥ 3 points".into(),
        ));
    }
    let raw: Vec<f64> = omega_grid
        .par_iter()
        .map(|&w| transform_at(series, w))
        .collect();
    let (peak_idx, peak) =
        raw.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
        );
    if !(peak > 0.0) {
        return Err(Error::Grid("spectrum has no positive peak".into()));
    }
    // Negative lobes from the finite horizon are clipped; they are below the tail tolerance.
    let power: Vec<f64> = raw.iter().map(|p| (p / peak).max(0.0)).collect();

    let crossing = |a: usize, b: usize| -> f64 {
        let (pa, pb) = (power[a], power[b]);
        omega_grid[a] + (omega_grid[b] - omega_grid[a]) * (pa - 0.5) / (pa - pb)
    };
    let left = (1..=peak_idx)
        .rev()
        .find(|&i| power[i - 1] < 0.5)
        .map(|i| crossing(i, i - 1))
        .ok_or_else(|| Error::Grid("ω grid does not reach half maximum below the peak".into()))?;
    let right = (peak_idx..omega_grid.len() - 1)
        .find(|&i| power[i + 1] < 0.5)
        .map(|i| crossing(i, i + 1))
        .ok_or_else(|| Error::Grid("ω grid does not reach half maximum above the peak".into()))?;

    Ok(Spectrum {
        omega: omega_grid.to_vec(),
        power,
        fwhm: right - left,
        fit_decay: fit_decay_rate(series)?,
    })
}

/// The linewidth of one model by every route, all as FWHM in units of κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthReport {
    pub kind: ModelKind,
    pub mu: f64,
    pub phi: Option<f64>,
    pub n_max: usize,
    pub predicted: f64,
    /// 2λ₁ from the slowest eigenvalue.
    pub eigen: f64,
    pub spectrum: f64,
    /// Twice the fitted g1 decay rate.
    pub fit: f64,
}

impl LinewidthReport {
    /// value / predicted − 1.
    pub fn deviation(&self, value: f64) -> f64 {
        value / self.predicted - 1.0
    }

    /// Largest pairwise relative difference among the eigen, spectrum and fit routes.
    pub fn route_spread(&self) -> f64 {
        let r = [self.eigen, self.spectrum, self.fit];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max((r[i] - r[j]).abs() / r[i].min(r[j]));
            }
        }
        worst
    }
}

/// Default linewidth: 2λ₁ of the coherence sideband.
pub fn linewidth(model: &LaserModel) -> Result<f64> {
    let block = model.sideband_block_with(1, Normalization::Amplitude)?;
    Ok(2.0 * slowest_decay_rate(&block)?)
}

pub fn measure_linewidth(model: &LaserModel) -> Result<LinewidthReport> {
    let eigen = linewidth(model)?;
    let series = g1_series(model, &default_time_grid(model)?)?;
    let spectrum = power_spectrum(&series, &default_omega_grid(eigen))?;
    Ok(LinewidthReport {
        kind: model.kind(),
        mu: model.mu(),
        phi: model.phi(),
        n_max: model.n_max(),
        predicted: predicted_linewidth(model),
        eigen,
        spectrum: spectrum.fwhm,
        fit: 2.0 * spectrum.fit_decay,
    })
}

/// [`measure_linewidth`] over many models in parallel, in input order.
pub fn measure_many(models: &[LaserModel]) -> Vec<Result<LinewidthReport>> {
    models.par_iter().map(measure_linewidth).collect()
}
