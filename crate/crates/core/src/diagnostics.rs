//! Closed-form linewidth predictions and the diagnostics that explain them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{annihilation_op, creation_op, PureState};
use crate::models::{LaserModel, ModelKind};

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Leading-order FWHM linewidth in units of κ.
pub fn predicted_linewidth(model: &LaserModel) -> f64 {
    let mu = model.mu();
    let kappa = model.kappa();
    match model.kind() {
        ModelKind::Standard => kappa / (2.0 * mu),
        ModelKind::Unstimulated => kappa / (4.0 * mu),
        ModelKind::Nonlinear => 3.0 * kappa / (8.0 * mu),
        ModelKind::Micromaser => {
            let phi = model.phi().expect("micromaser carries epsilon");
            let r = (phi / mu).sin() / (phi.sin() / mu);
            kappa / (4.0 * mu) * (1.0 + r * r)
        }
    }
}

/// Off-diagonal gain ratio g(n, n+1) against its leading-order form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub n: usize,
    pub exact: f64,
    pub asymptotic: f64,
    /// exact − asymptotic, formed from the deficits to avoid cancellation.
    pub deviation: f64,
}

fn asymptotic_deficit(model: &LaserModel, n: usize) -> f64 {
    let n = n as f64;
    match model.kind() {
        ModelKind::Standard => 1.0 / (8.0 * n * n),
        ModelKind::Unstimulated => 0.0,
        ModelKind::Nonlinear => 1.0 / (16.0 * n * n),
        // Depends on φ and μ only (n replaced by μ).
        ModelKind::Micromaser => {
            let phi = model.phi().expect("micromaser carries epsilon");
            (phi / model.mu()).sin().powi(2) / (8.0 * phi.sin().powi(2))
        }
    }
}

pub fn gain_ratio(model: &LaserModel, n: usize) -> Result<RatioReport> {
    let deficit = model.gain_deficit(n, n + 1)?;
    let asym = asymptotic_deficit(model, n);
    Ok(RatioReport {
        n,
        exact: 1.0 - deficit,
        asymptotic: 1.0 - asym,
        deviation: asym - deficit,
    })
}

/// μ(1 − g(n̄, n̄+1)): the gain's share of the amplitude decay rate.
pub fn gain_decay_contribution(model: &LaserModel, n_bar: usize) -> Result<f64> {
    Ok(model.mu() * model.gain_deficit(n_bar, n_bar + 1)?)
}

/// SI inputs for the Schawlow–Townes refinement chain. Angular frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LimitInputs {
    pub omega: Option<f64>,
    pub p_out: Option<f64>,
    /// Atomic FWHM linewidth.
    pub gamma: Option<f64>,
    /// Cavity FWHM linewidth.
    pub kappa: Option<f64>,
    /// Mean intracavity photon number n̄.
    pub n_bar: Option<f64>,
    /// Stored coherent excitation number N̄ = Ē/ħω.
    pub n_coh: Option<f64>,
    /// Bare linewidth, overriding (γ⁻¹ + κ⁻¹)⁻¹ when given.
    pub ell_bare: Option<f64>,
    /// Defaults to [`HBAR`].
    pub hbar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitQuantity {
    /// (ħω/P_out) γ²
    SchawlowTownes,
    /// (γ⁻¹ + κ⁻¹)⁻¹
    Bare,
    /// (ħω/P_out) ℓ_bare²
    SchawlowTownesCorrected,
    /// ℓ_bare ħω / Ē
    SchawlowTownesDoubleCorrected,
    /// ℓ_bare / 2N̄
    Standard,
    /// (ħω / 2P_out) ℓ_bare², the output-power bound on ℓ_st
    StandardBound,
    /// κ / 2n̄
    Markovian,
}

impl LimitQuantity {
    pub const ALL: [LimitQuantity; 7] = [
        LimitQuantity::SchawlowTownes,
        LimitQuantity::Bare,
        LimitQuantity::SchawlowTownesCorrected,
        LimitQuantity::SchawlowTownesDoubleCorrected,
        LimitQuantity::Standard,
        LimitQuantity::StandardBound,
        LimitQuantity::Markovian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LimitQuantity::SchawlowTownes => "ell_ST",
            LimitQuantity::Bare => "ell_bare",
            LimitQuantity::SchawlowTownesCorrected => "ell_ST1",
            LimitQuantity::SchawlowTownesDoubleCorrected => "ell_ST2",
            LimitQuantity::Standard => "ell_st",
            LimitQuantity::StandardBound => "ell_st_bound",
            LimitQuantity::Markovian => "ell_0",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }
}

fn need(value: Option<f64>, field: &'static str) -> Result<f64> {
    match value {
        Some(v) if v.is_finite() && v > 0.0 => Ok(v),
        Some(v) => Err(invalid(field, format!("must be positive, got {v}"))),
        None => Err(Error::MissingField(field)),
    }
}

impl LimitInputs {
    fn hbar_omega(&self) -> Result<f64> {
        let hbar = match self.hbar {
            Some(h) => need(Some(h), "hbar")?,
            None => HBAR,
        };
        Ok(hbar * need(self.omega, "omega")?)
    }

    fn bare(&self) -> Result<f64> {
        if let Some(b) = self.ell_bare {
            return need(Some(b), "ell_bare");
        }
        let gamma = need(self.gamma, "gamma")?;
        let kappa = need(self.kappa, "kappa")?;
        Ok(gamma / (1.0 + gamma / kappa))
    }

    pub fn evaluate(&self, quantity: LimitQuantity) -> Result<f64> {
        match quantity {
            LimitQuantity::SchawlowTownes => {
                let gamma = need(self.gamma, "gamma")?;
                Ok(self.hbar_omega()? / need(self.p_out, "p_out")? * gamma * gamma)
            }
            LimitQuantity::Bare => self.bare(),
            LimitQuantity::SchawlowTownesCorrected => {
                let bare = self.bare()?;
                Ok(self.hbar_omega()? / need(self.p_out, "p_out")? * bare * bare)
            }
            // Ē = N̄ħω, so ħω cancels.
            LimitQuantity::SchawlowTownesDoubleCorrected => {
                Ok(self.bare()? / need(self.n_coh, "n_coh")?)
            }
            LimitQuantity::Standard => Ok(self.bare()? / (2.0 * need(self.n_coh, "n_coh")?)),
            LimitQuantity::StandardBound => {
                let bare = self.bare()?;
                Ok(self.hbar_omega()? / (2.0 * need(self.p_out, "p_out")?) * bare * bare)
            }
            LimitQuantity::Markovian => {
                Ok(need(self.kappa, "kappa")? / (2.0 * need(self.n_bar, "n_bar")?))
            }
        }
    }
}

/// Every quantity of the chain that the inputs determine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitChain {
    pub values: Vec<(LimitQuantity, f64)>,
    /// ℓ_st ≤ (ħω/2P_out)ℓ_bare², when both are available. Holds for coupling efficiency ≤ 1.
    pub st_within_bound: Option<bool>,
}

impl LimitChain {
    pub fn get(&self, quantity: LimitQuantity) -> Option<f64> {
        self.values
            .iter()
            .find(|(q, _)| *q == quantity)
            .map(|&(_, v)| v)
    }
}

pub fn schawlow_townes_chain(inputs: &LimitInputs) -> Result<LimitChain> {
    let mut values = Vec::new();
    for q in LimitQuantity::ALL {
        match inputs.evaluate(q) {
            Ok(v) => values.push((q, v)),
            Err(Error::MissingField(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let mut chain = LimitChain {
        values,
        st_within_bound: None,
    };
    if let (Some(st), Some(bound)) = (
        chain.get(LimitQuantity::Standard),
        chain.get(LimitQuantity::StandardBound),
    ) {
        chain.st_within_bound = Some(st <= bound);
    }
    Ok(chain)
}

/// Small-angle phase variance V(Y)/X̄² = 1/4n̄ of a coherent state.
pub fn phase_variance_coherent(n_bar: f64) -> Result<f64> {
    if !(n_bar >= 10.0 && n_bar.is_finite()) {
        return Err(Error::Domain(format!(
            "small-angle phase variance needs n̄ ≥ 10, got {n_bar}"
        )));
    }
    Ok(1.0 / (4.0 * n_bar))
}

/// Quadrature moments with X = a + a†, Y = −i(a − a†).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureStats {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

impl QuadratureStats {
    /// V(Y)/X̄², the phase variance for a state with real positive amplitude.
    pub fn phase_variance(&self) -> f64 {
        self.var_y / (self.mean_x * self.mean_x)
    }
}

pub fn quadrature_statistics(state: &PureState) -> QuadratureStats {
    let space = crate::fock::FockSpace::new(state.dim() - 1).expect("state has dim ≥ 2");
    let psi = state.amplitudes();
    let a_psi = annihilation_op(space).apply(psi);
    let ad_psi = creation_op(space).apply(psi);
    let x_psi: Vec<Complex64> = a_psi.iter().zip(&ad_psi).map(|(a, b)| a + b).collect();
    let y_psi: Vec<Complex64> = a_psi
        .iter()
        .zip(&ad_psi)
        .map(|(a, b)| (a - b) * Complex64::new(0.0, -1.0))
        .collect();
    let mean = |v: &[Complex64]| -> f64 {
        psi.iter()
            .zip(v)
            .map(|(p, q)| p.conj() * q)
            .sum::<Complex64>()
            .re
    };
    let second = |v: &[Complex64]| -> f64 { v.iter().map(|c| c.norm_sqr()).sum() };
    let mean_x = mean(&x_psi);
    let mean_y = mean(&y_psi);
    QuadratureStats {
        mean_x,
        mean_y,
        var_x: second(&x_psi) - mean_x * mean_x,
        var_y: second(&y_psi) - mean_y * mean_y,
    }
}

/// Intermediate steps from loss-induced phase diffusion to the ultimate linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltimateLimit {
    /// V(φ) = 1/4n̄ of the coherent state.
    pub phase_variance: f64,
    /// dV(φ)/dt = κ/4n̄ from damping n̄ → n̄(1 − κdt).
    pub variance_rate: f64,
    /// ⟨e^{iφ(t)}⟩ ~ e^{−V/2}: amplitude decay rate κ/8n̄.
    pub g1_decay_rate: f64,
    /// Lorentzian FWHM, twice the amplitude decay rate.
    pub fwhm: f64,
}

pub fn ultimate_linewidth_from_uncertainty(n_bar: f64, kappa: f64) -> UltimateLimit {
    let variance_rate = kappa / (4.0 * n_bar);
    let g1_decay_rate = variance_rate / 2.0;
    UltimateLimit {
        phase_variance: 1.0 / (4.0 * n_bar),
        variance_rate,
        g1_decay_rate,
        fwhm: 2.0 * g1_decay_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, FockSpace};

    #[test]
    fn predicted_values() {
        let mu = 100.0;
        assert_eq!(
            predicted_linewidth(&LaserModel::standard(mu).unwrap()),
            0.005
        );
        assert_eq!(
            predicted_linewidth(&LaserModel::unstimulated(mu).unwrap()),
            0.0025
        );
        assert!((predicted_linewidth(&LaserModel::nonlinear(mu).unwrap()) - 0.00375).abs() < 1e-18);
        let mm = LaserModel::micromaser_phi(mu, 1e-6).unwrap();
        assert!((predicted_linewidth(&mm) - 0.005).abs() < 1e-14);
    }

    #[test]
    fn micromaser_prediction_monotone_in_phi() {
        let mu = 100.0;
        let standard = predicted_linewidth(&LaserModel::standard(mu).unwrap());
        let mut prev = standard;
        for i in 1..=60 {
            let phi = i as f64 * std::f64::consts::FRAC_PI_2 / 60.0;
            let ell = predicted_linewidth(&LaserModel::micromaser_phi(mu, phi).unwrap());
            assert!(ell > prev, "phi {phi}");
            prev = ell;
        }
    }

    #[test]
    fn standard_ratio_examples() {
        let m = LaserModel::standard(100.0).unwrap();
        let r = gain_ratio(&m, 10).unwrap();
        assert!((r.exact - 2.0 * 110f64.sqrt() / 21.0).abs() < 1e-15);
        assert!((r.exact - 0.998866).abs() < 1e-6);
        assert!((r.asymptotic - 0.99875).abs() < 1e-15);
        assert!(r.deviation.abs() < 1e-3);

        let big = m.with_n_max(1500).unwrap();
        for n in 10..=1000 {
            let r = gain_ratio(&big, n).unwrap();
            assert!((n as f64).powi(3) * r.deviation.abs() <= 1.0, "n = {n}");
        }
    }

    #[test]
    fn unstimulated_ratio_is_unity() {
        let m = LaserModel::unstimulated(50.0).unwrap();
        for n in [1, 10, 60] {
            let r = gain_ratio(&m, n).unwrap();
            assert_eq!((r.exact, r.deviation), (1.0, 0.0));
        }
        assert_eq!(gain_decay_contribution(&m, 50).unwrap(), 0.0);
    }

    #[test]
    fn nonlinear_ratio() {
        let m = LaserModel::nonlinear(100.0).unwrap();
        let r = gain_ratio(&m, 100).unwrap();
        assert!((r.exact - (1.0 - 1.0 / (16.0 * 1e4))).abs() < 1e-5);
        // With c_n = √n(3 − n/μ), ln c_n is stationary at n = μ, so
        // 1 − g(μ, μ+1) ≈ ½(Δ ln c)² with Δ ln c ≈ −3/(8μ²).
        let expected = 0.5 * (3.0 / (8.0 * 1e4f64)).powi(2);
        assert!(((1.0 - r.exact) - expected).abs() < 0.05 * expected);
    }

    #[test]
    fn decay_contributions() {
        let s = LaserModel::standard(100.0).unwrap();
        let c = gain_decay_contribution(&s, 100).unwrap();
        assert!((c / (1.0 / 800.0) - 1.0).abs() < 0.02);
        let nl = LaserModel::nonlinear(100.0).unwrap();
        let c = gain_decay_contribution(&nl, 100).unwrap();
        // μ·½(3/8μ²)²: far below the standard gain contribution.
        let expected = 100.0 * 0.5 * (3.0 / 8e4f64).powi(2);
        assert!((c / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn micromaser_ratio_asymptotic() {
        let m = LaserModel::micromaser_phi(100.0, 1.0).unwrap();
        let r = gain_ratio(&m, 100).unwrap();
        let asym = 1.0 - (0.01f64).sin().powi(2) / (8.0 * 1f64.sin().powi(2));
        assert_eq!(r.asymptotic, asym);
        assert!(r.deviation.abs() < 0.05 * (1.0 - asym));
    }

    #[test]
    fn chain_bare_linewidth() {
        let kappa = 2.0e7;
        let inputs = LimitInputs {
            gamma: Some(kappa),
            kappa: Some(kappa),
            ..Default::default()
        };
        assert_eq!(inputs.evaluate(LimitQuantity::Bare).unwrap(), kappa / 2.0);
        let wide = LimitInputs {
            gamma: Some(1000.0 * kappa),
            kappa: Some(kappa),
            ..Default::default()
        };
        let bare = wide.evaluate(LimitQuantity::Bare).unwrap();
        assert!((bare / kappa - 1.0).abs() < 1e-3);
    }

    #[test]
    fn chain_standard_equals_markovian() {
        let kappa = 1.3e6;
        let n = 4.2e5;
        let inputs = LimitInputs {
            kappa: Some(kappa),
            ell_bare: Some(kappa),
            n_bar: Some(n),
            n_coh: Some(n),
            ..Default::default()
        };
        let chain = schawlow_townes_chain(&inputs).unwrap();
        assert_eq!(
            chain.get(LimitQuantity::Standard).unwrap(),
            chain.get(LimitQuantity::Markovian).unwrap()
        );
        assert_eq!(
            chain.get(LimitQuantity::Markovian).unwrap(),
            kappa / (2.0 * n)
        );
        assert!(chain.get(LimitQuantity::SchawlowTownes).is_none());
    }

    #[test]
    fn chain_missing_field() {
        let inputs = LimitInputs {
            omega: Some(3e15),
            gamma: Some(1e9),
            ..Default::default()
        };
        assert_eq!(
            inputs.evaluate(LimitQuantity::SchawlowTownes),
            Err(Error::MissingField("p_out"))
        );
        let bad = LimitInputs {
            gamma: Some(-1.0),
            kappa: Some(1.0),
            ..Default::default()
        };
        assert!(schawlow_townes_chain(&bad).is_err());
    }

    #[test]
    fn chain_bound_for_efficient_output() {
        // Perfect output coupling: P_out = ℓ_bare Ē, so ℓ_st equals its bound.
        let (omega, gamma, kappa, n_coh) = (2.0e15, 5.0e8, 3.0e7, 1.0e6);
        let base = LimitInputs {
            omega: Some(omega),
            gamma: Some(gamma),
            kappa: Some(kappa),
            n_coh: Some(n_coh),
            ..Default::default()
        };
        let bare = base.evaluate(LimitQuantity::Bare).unwrap();
        let p_ideal = bare * n_coh * HBAR * omega;
        let ideal = LimitInputs {
            p_out: Some(p_ideal),
            ..base
        };
        let st = ideal.evaluate(LimitQuantity::Standard).unwrap();
        let bound = ideal.evaluate(LimitQuantity::StandardBound).unwrap();
        assert!((st / bound - 1.0).abs() < 1e-12);
        // Lossy output (efficiency 0.3): the bound is looser.
        let lossy = LimitInputs {
            p_out: Some(0.3 * p_ideal),
            ..base
        };
        let chain = schawlow_townes_chain(&lossy).unwrap();
        assert_eq!(chain.st_within_bound, Some(true));
        let st2 = chain
            .get(LimitQuantity::SchawlowTownesDoubleCorrected)
            .unwrap();
        assert!((st2 - 2.0 * chain.get(LimitQuantity::Standard).unwrap()).abs() < 1e-6 * st2);
    }

    #[test]
    fn phase_variance_values() {
        assert_eq!(phase_variance_coherent(100.0).unwrap(), 0.0025);
        assert_eq!(phase_variance_coherent(25.0).unwrap(), 0.01);
        assert!(phase_variance_coherent(5.0).is_err());
    }

    #[test]
    fn coherent_quadratures() {
        let psi = coherent_state(
            Complex64::new(10.0, 0.0),
            FockSpace::for_mean(100.0).unwrap(),
        )
        .unwrap();
        let q = quadrature_statistics(&psi);
        assert!((q.var_y - 1.0).abs() < 1e-6);
        assert!((q.var_x - 1.0).abs() < 1e-6);
        assert!((q.mean_x - 20.0).abs() < 1e-6);
        assert!(q.mean_y.abs() < 1e-12);
        assert!((q.phase_variance() - phase_variance_coherent(100.0).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn ultimate_chain() {
        let u = ultimate_linewidth_from_uncertainty(100.0, 1.0);
        let uns = predicted_linewidth(&LaserModel::unstimulated(100.0).unwrap());
        assert_eq!(u.fwhm, uns);
        assert_eq!(u.fwhm, 0.0025);
        let std = predicted_linewidth(&LaserModel::standard(100.0).unwrap());
        assert_eq!(std, 2.0 * u.fwhm);
        // V/2 at τ equals the unstimulated g1 exponent τ/8μ.
        let tau = 321.0;
        assert!((u.variance_rate * tau / 2.0 - tau / 800.0).abs() < 1e-15);
        let q = ultimate_linewidth_from_uncertainty(400.0, 1.0);
        assert_eq!(q.fwhm * 4.0, u.fwhm);
    }
}
