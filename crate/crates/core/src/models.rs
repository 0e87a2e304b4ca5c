//! Gain mechanisms in the Fock basis and the sideband decomposition of the Liouvillian.
//!
//! All four models share the master-equation form (κ = 1)
//!
//! ρ̇_{n,m} = μ [g(n,m) ρ_{n−1,m−1} − ρ_{n,m}] − (n+m)/2 ρ_{n,m} + √((n+1)(m+1)) ρ_{n+1,m+1}
//!
//! and differ only in the gain coefficient g(n,m). For the three models of the form
//! μ 𝒟[c] 𝒜[c]⁻¹ with ⟨n|c|n−1⟩ = c_n, g(n,m) = 2 c_n c_m / (c_n² + c_m²). The repeated-injection
//! micromaser has g(n,m) = sin(ε√n) sin(ε√m) / [1 − cos(ε√n) cos(ε√m)].
//!
//! Since g only couples ρ_{n,m} to ρ_{n±1,m±1}, each diagonal k = m − n evolves on its own as a
//! tridiagonal system.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{FockSpace, PureState};

/// Below this the micromaser denominator 1 − cos(ε√n)cos(ε√m) is treated as singular.
pub const MICROMASER_DENOMINATOR_FLOOR: f64 = 1e-14;

/// Largest truncation accepted by [`full_generator`].
pub const FULL_GENERATOR_MAX_N: usize = 400;

/// √n − √m without cancellation.
fn sqrt_diff(n: usize, m: usize) -> f64 {
    let (x, y) = (n as f64, m as f64);
    (x - y) / (x.sqrt() + y.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Ideal laser, gain μ𝒟[a†]𝒜[a†]⁻¹.
    Standard,
    /// Gain without stimulated emission, μ𝒟[e†].
    Unstimulated,
    /// Jaynes–Cummings gain with finite interaction time ε and atom reinjection.
    Micromaser,
    /// Gain operator a†(3 − aa†/μ).
    Nonlinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Standard,
        ModelKind::Unstimulated,
        ModelKind::Micromaser,
        ModelKind::Nonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Standard => "standard",
            ModelKind::Unstimulated => "unstimulated",
            ModelKind::Micromaser => "micromaser",
            ModelKind::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("model", format!("unknown model `{s}`")))
    }
}

/// A gain mechanism together with its parameters and truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserModel {
    kind: ModelKind,
    mu: f64,
    epsilon: Option<f64>,
    kappa: f64,
    space: FockSpace,
}

impl LaserModel {
    /// Validated model. `epsilon` is required for (and only accepted by) the micromaser;
    /// `n_max = None` selects the default truncation.
    pub fn new(
        kind: ModelKind,
        mu: f64,
        epsilon: Option<f64>,
        n_max: Option<usize>,
    ) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid(
                "mu",
                format!("gain rate must be positive, got {mu}"),
            ));
        }
        match (kind, epsilon) {
            (ModelKind::Micromaser, Some(eps)) if eps.is_finite() && eps > 0.0 => {}
            (ModelKind::Micromaser, Some(eps)) => {
                return Err(invalid("epsilon", format!("must be positive, got {eps}")))
            }
            (ModelKind::Micromaser, None) => {
                return Err(invalid(
                    "epsilon",
                    "micromaser requires an interaction parameter",
                ))
            }
            (_, Some(_)) => {
                return Err(invalid(
                    "epsilon",
                    format!("only the micromaser takes an interaction parameter, not {kind}"),
                ))
            }
            (_, None) => {}
        }

        let nonlinear_limit = ((3.0 * mu).ceil() as usize).saturating_sub(1);
        let n_max = match n_max {
            Some(n) => n,
            None => {
                let default = FockSpace::for_mean(mu)?.n_max();
                if kind == ModelKind::Nonlinear {
                    default.min(nonlinear_limit)
                } else {
                    default
                }
            }
        };
        let space = FockSpace::new(n_max)?;

        if kind == ModelKind::Nonlinear && (n_max as f64) >= 3.0 * mu {
            return Err(Error::SizeGuard {
                n_max,
                limit: nonlinear_limit,
                reason: "nonlinear gain amplitude vanishes at n = 3μ",
            });
        }
        if let Some(eps) = epsilon {
            if eps * (n_max as f64).sqrt() >= std::f64::consts::PI {
                return Err(Error::Domain(format!(
                    "micromaser ε√n_max = {:.4} reaches the first Rabi zero π",
                    eps * (n_max as f64).sqrt()
                )));
            }
        }
        Ok(Self {
            kind,
            mu,
            epsilon,
            kappa: 1.0,
            space,
        })
    }

    pub fn standard(mu: f64) -> Result<Self> {
        Self::new(ModelKind::Standard, mu, None, None)
    }

    pub fn unstimulated(mu: f64) -> Result<Self> {
        Self::new(ModelKind::Unstimulated, mu, None, None)
    }

    pub fn nonlinear(mu: f64) -> Result<Self> {
        Self::new(ModelKind::Nonlinear, mu, None, None)
    }

    pub fn micromaser(mu: f64, epsilon: f64) -> Result<Self> {
        Self::new(ModelKind::Micromaser, mu, Some(epsilon), None)
    }

    /// Micromaser parameterized by φ = ε√μ.
    pub fn micromaser_phi(mu: f64, phi: f64) -> Result<Self> {
        if !(phi.is_finite() && phi > 0.0) {
            return Err(invalid("phi", format!("must be positive, got {phi}")));
        }
        Self::micromaser(mu, phi / mu.sqrt())
    }

    /// Same model on a different truncation.
    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        Self::new(self.kind, self.mu, self.epsilon, Some(n_max))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// φ = ε√μ for the micromaser.
    pub fn phi(&self) -> Option<f64> {
        self.epsilon.map(|e| e * self.mu.sqrt())
    }

    /// Loss rate; the simulator works in units where κ = 1.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn n_max(&self) -> usize {
        self.space.n_max()
    }

    fn check_index(&self, name: &'static str, n: usize) -> Result<()> {
        if n < 1 || n > self.n_max() {
            return Err(invalid(name, format!("{n} outside 1..={}", self.n_max())));
        }
        Ok(())
    }

    /// Gain matrix element c_n = ⟨n|c|n−1⟩ for the 𝒟[c]𝒜[c]⁻¹ models.
    pub fn gain_amplitude(&self, n: usize) -> Result<f64> {
        self.check_index("n", n)?;
        self.amplitude_unchecked(n)
    }

    fn amplitude_unchecked(&self, n: usize) -> Result<f64> {
        let x = n as f64;
        match self.kind {
            ModelKind::Standard => Ok(x.sqrt()),
            ModelKind::Unstimulated => Ok(1.0),
            ModelKind::Nonlinear => {
                let c = x.sqrt() * (3.0 - x / self.mu);
                if c <= 0.0 {
                    return Err(Error::Domain(format!(
                        "nonlinear gain amplitude c_{n} = {c} is not positive"
                    )));
                }
                Ok(c)
            }
            ModelKind::Micromaser => Err(Error::ModelMismatch {
                operation: "gain_amplitude",
                kind: "micromaser",
            }),
        }
    }

    fn micromaser_angles(&self, n: usize, m: usize) -> (f64, f64, f64) {
        let eps = self.epsilon.expect("micromaser carries epsilon");
        let a = eps * (n as f64).sqrt();
        let b = eps * (m as f64).sqrt();
        let half_diff = 0.5 * eps * sqrt_diff(n, m);
        // 1 − cos a cos b without cancellation for small angles.
        let denom = half_diff.sin().powi(2) + ((a + b) / 2.0).sin().powi(2);
        (a, b, denom)
    }

    /// g(n, m): multiplier of ρ_{n−1,m−1} in the gain term.
    pub fn gain_coefficient(&self, n: usize, m: usize) -> Result<f64> {
        self.check_index("n", n)?;
        self.check_index("m", m)?;
        self.coefficient_unchecked(n, m)
    }

    fn coefficient_unchecked(&self, n: usize, m: usize) -> Result<f64> {
        if self.kind == ModelKind::Micromaser {
            let (a, b, denom) = self.micromaser_angles(n, m);
            if denom < MICROMASER_DENOMINATOR_FLOOR {
                return Err(Error::Domain(format!(
                    "micromaser denominator vanishes at n = {n}, m = {m}"
                )));
            }
            return Ok(a.sin() * b.sin() / denom);
        }
        if n == m {
            self.amplitude_unchecked(n)?;
            return Ok(1.0);
        }
        let cn = self.amplitude_unchecked(n)?;
        let cm = self.amplitude_unchecked(m)?;
        Ok(2.0 * cn * cm / (cn * cn + cm * cm))
    }

    /// 1 − g(n, m), evaluated without cancellation.
    pub fn gain_deficit(&self, n: usize, m: usize) -> Result<f64> {
        self.check_index("n", n)?;
        self.check_index("m", m)?;
        if self.kind == ModelKind::Micromaser {
            let (_, _, denom) = self.micromaser_angles(n, m);
            if denom < MICROMASER_DENOMINATOR_FLOOR {
                return Err(Error::Domain(format!(
                    "micromaser denominator vanishes at n = {n}, m = {m}"
                )));
            }
            let half_diff =
                0.5 * self.epsilon.expect("micromaser carries epsilon") * sqrt_diff(n, m);
            return Ok(2.0 * half_diff.sin().powi(2) / denom);
        }
        let cn = self.amplitude_unchecked(n)?;
        let cm = self.amplitude_unchecked(m)?;
        let diff = match self.kind {
            ModelKind::Standard => sqrt_diff(n, m),
            ModelKind::Unstimulated => 0.0,
            // √n(3 − n/μ) − √m(3 − m/μ) = (√n − √m)(3 − (n + √(nm) + m)/μ)
            _ => {
                let (x, y) = (n as f64, m as f64);
                sqrt_diff(n, m) * (3.0 - (x + (x * y).sqrt() + y) / self.mu)
            }
        };
        Ok(diff * diff / (cn * cn + cm * cm))
    }

    /// Generator of the k-th sideband in the raw normalization v_n = ρ_{n−k,n}.
    pub fn sideband_block(&self, k: usize) -> Result<SidebandBlock> {
        self.sideband_block_with(k, Normalization::Raw)
    }

    pub fn sideband_block_with(
        &self,
        k: usize,
        normalization: Normalization,
    ) -> Result<SidebandBlock> {
        let n_max = self.n_max();
        if k > n_max {
            return Err(invalid("k", format!("{k} exceeds n_max = {n_max}")));
        }
        if normalization == Normalization::Amplitude && k != 1 {
            return Err(invalid(
                "k",
                "the f_n normalization is defined for k = 1 only",
            ));
        }
        let dim = n_max - k + 1;
        let mut sub = vec![0.0; dim];
        let mut diag = vec![0.0; dim];
        let mut sup = vec![0.0; dim];
        for i in 0..dim {
            let n = k + i;
            diag[i] = -self.mu - (2 * n - k) as f64 / 2.0;
            if i > 0 {
                sub[i] = self.mu * self.coefficient_unchecked(n - k, n)?;
            }
            if n < n_max {
                sup[i] = (((n + 1) * (n + 1 - k)) as f64).sqrt();
            }
        }
        if normalization == Normalization::Amplitude {
            // f_n = √n v_n up to the constant 1/α*.
            for i in 0..dim {
                let n = (k + i) as f64;
                if i > 0 {
                    sub[i] *= (n / (n - 1.0)).sqrt();
                }
                if i + 1 < dim {
                    sup[i] *= (n / (n + 1.0)).sqrt();
                }
            }
        }
        Ok(SidebandBlock {
            k,
            normalization,
            sub,
            diag,
            sup,
        })
    }
}

/// Scaling of sideband state vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// v_n = ρ_{n−k,n}.
    Raw,
    /// f_n = √n ρ_{n−1,n} / α* (k = 1 only); g⁽¹⁾ = Σ f_n.
    Amplitude,
}

/// Tridiagonal generator of one sideband. Row `i` corresponds to n = k + i;
/// `sub[i]` multiplies v_{n−1}, `sup[i]` multiplies v_{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandBlock {
    k: usize,
    normalization: Normalization,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl SidebandBlock {
    /// Block from explicit coefficients; `sub[0]` and the last `sup` entry must be zero.
    pub fn from_coefficients(
        k: usize,
        normalization: Normalization,
        sub: Vec<f64>,
        diag: Vec<f64>,
        sup: Vec<f64>,
    ) -> Result<Self> {
        let dim = diag.len();
        if dim == 0 || sub.len() != dim || sup.len() != dim {
            return Err(invalid(
                "block",
                "coefficient arrays must share a non-zero length",
            ));
        }
        if sub[0] != 0.0 || sup[dim - 1] != 0.0 {
            return Err(invalid("block", "couplings outside the block must be zero"));
        }
        Ok(Self {
            k,
            normalization,
            sub,
            diag,
            sup,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Photon number n labelling row `i`.
    pub fn photon_number(&self, i: usize) -> usize {
        self.k + i
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let dim = self.dim();
        assert_eq!(v.len(), dim, "sideband vector dimension mismatch");
        (0..dim)
            .map(|i| {
                let mut acc = v[i] * self.diag[i];
                if i > 0 {
                    acc += v[i - 1] * self.sub[i];
                }
                if i + 1 < dim {
                    acc += v[i + 1] * self.sup[i];
                }
                acc
            })
            .collect()
    }

    /// Dense row-major copy, for cross-checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        (0..dim)
            .map(|i| {
                let mut row = vec![0.0; dim];
                row[i] = self.diag[i];
                if i > 0 {
                    row[i - 1] = self.sub[i];
                }
                if i + 1 < dim {
                    row[i + 1] = self.sup[i];
                }
                row
            })
            .collect()
    }
}

/// Square density matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn from_diagonal(p: &[f64]) -> Self {
        let mut rho = Self::zeros(p.len());
        for (n, &x) in p.iter().enumerate() {
            rho.set(n, n, Complex64::new(x, 0.0));
        }
        rho
    }

    /// |ψ⟩⟨ψ|.
    pub fn from_pure(psi: &PureState) -> Self {
        let amps = psi.amplitudes();
        let dim = amps.len();
        let mut rho = Self::zeros(dim);
        for n in 0..dim {
            for m in 0..dim {
                rho.set(n, m, amps[n] * amps[m].conj());
            }
        }
        rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.dim + m]
    }

    pub fn set(&mut self, n: usize, m: usize, value: Complex64) {
        self.data[n * self.dim + m] = value;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|n| self.get(n, n)).sum()
    }

    /// Elements ρ_{n−k,n}, n = k..dim−1.
    pub fn sideband(&self, k: usize) -> Vec<Complex64> {
        (k..self.dim).map(|n| self.get(n - k, n)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Full master-equation action ρ → ρ̇ on density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    model: LaserModel,
    /// g(n, m) for n, m ≥ 1, stored at index (n−1)·n_max + (m−1).
    gain: Vec<f64>,
}

/// Build the full generator. Guarded to n_max ≤ 400 since storage is O(n_max²).
pub fn full_generator(model: &LaserModel) -> Result<Liouvillian> {
    let n_max = model.n_max();
    if n_max > FULL_GENERATOR_MAX_N {
        return Err(Error::SizeGuard {
            n_max,
            limit: FULL_GENERATOR_MAX_N,
            reason: "full density-matrix generator",
        });
    }
    let mut gain = Vec::with_capacity(n_max * n_max);
    for n in 1..=n_max {
        for m in 1..=n_max {
            gain.push(model.coefficient_unchecked(n, m)?);
        }
    }
    Ok(Liouvillian {
        model: *model,
        gain,
    })
}

impl Liouvillian {
    pub fn model(&self) -> &LaserModel {
        &self.model
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let n_max = self.model.n_max();
        let dim = n_max + 1;
        assert_eq!(rho.dim(), dim, "density matrix dimension mismatch");
        let mu = self.model.mu();
        let mut out = DensityMatrix::zeros(dim);
        for n in 0..dim {
            for m in 0..dim {
                let mut acc = -rho.get(n, m) * (mu + (n + m) as f64 / 2.0);
                if n >= 1 && m >= 1 {
                    acc += rho.get(n - 1, m - 1) * (mu * self.gain[(n - 1) * n_max + (m - 1)]);
                }
                if n < n_max && m < n_max {
                    acc += rho.get(n + 1, m + 1) * (((n + 1) * (m + 1)) as f64).sqrt();
                }
                out.set(n, m, acc);
            }
        }
        out
    }
}
