//! Truncated Fock space: banded operators, photon-number distributions and pure states.
//!
//! Every operator the laser models need is banded with offsets in {-1, 0, +1}, so
//! operators are stored band by band rather than as dense matrices. The entry at
//! row `n`, column `n + d` lives in band `d` at index `min(n, n + d)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tail mass allowed beyond the truncation for any state in use.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Tolerance on total probability / state norm.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Photon-number basis |0⟩ … |n_max⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(invalid("n_max", "truncation must be at least 1"));
        }
        Ok(Self { n_max })
    }

    /// Default truncation ⌈μ + 10√μ + 10⌉ for a state with mean photon number `mean`.
    pub fn for_mean(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(invalid(
                "mean",
                format!("must be finite and non-negative, got {mean}"),
            ));
        }
        Self::new((mean + 10.0 * mean.sqrt() + 10.0).ceil() as usize)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Sum of log(k) for k = 1..=n, for every n up to `n_max`.
pub(crate) fn ln_factorials(n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n_max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Poisson log-weights ln(e^{-μ} μⁿ / n!) for n = 0..=n_max.
pub(crate) fn poisson_ln_weights(mean: f64, n_max: usize) -> Vec<f64> {
    if mean == 0.0 {
        return (0..=n_max)
            .map(|n| if n == 0 { 0.0 } else { f64::NEG_INFINITY })
            .collect();
    }
    let ln_mean = mean.ln();
    ln_factorials(n_max)
        .into_iter()
        .enumerate()
        .map(|(n, lf)| -mean + n as f64 * ln_mean - lf)
        .collect()
}

/// Mass of Poisson(mean) strictly above `n_max`, summed term by term in log space.
pub fn poisson_tail_mass(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_fact: f64 = ln_factorials(n_max + 1).last().copied().unwrap_or(0.0);
    let mut n = n_max + 1;
    let mut total = 0.0;
    loop {
        let term = (-mean + n as f64 * ln_mean - ln_fact).exp();
        total += term;
        if n as f64 > mean && term <= total * 1e-17 {
            break;
        }
        n += 1;
        ln_fact += (n as f64).ln();
    }
    total
}

/// Exponentiate and normalize a vector of log-weights.
pub(crate) fn normalize_ln_weights(ln_w: &[f64]) -> Vec<f64> {
    let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ln_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Linear operator on the truncated space, stored by bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    space: FockSpace,
    bands: BTreeMap<isize, Vec<f64>>,
}

impl BandedOperator {
    pub fn zero(space: FockSpace) -> Self {
        Self {
            space,
            bands: BTreeMap::new(),
        }
    }

    /// Operator with a single band `offset`; `values[i]` is the entry at
    /// row `i`, column `i + offset` for offset ≥ 0 and row `i - offset`, column `i` otherwise.
    pub fn from_band(space: FockSpace, offset: isize, values: Vec<f64>) -> Result<Self> {
        let expected = band_len(space, offset)
            .ok_or_else(|| invalid("offset", format!("band {offset} lies outside the space")))?;
        if values.len() != expected {
            return Err(invalid(
                "values",
                format!(
                    "band {offset} needs {expected} entries, got {}",
                    values.len()
                ),
            ));
        }
        let mut op = Self::zero(space);
        op.bands.insert(offset, values);
        Ok(op)
    }

    /// Diagonal operator with entries `f(n)`.
    pub fn diagonal(space: FockSpace, f: impl Fn(usize) -> f64) -> Self {
        let mut op = Self::zero(space);
        op.bands.insert(0, (0..space.dim()).map(f).collect());
        op
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    /// Stored band offsets with their coefficient arrays.
    pub fn bands(&self) -> impl Iterator<Item = (isize, &[f64])> {
        self.bands.iter().map(|(&d, v)| (d, v.as_slice()))
    }

    pub fn band(&self, offset: isize) -> Option<&[f64]> {
        self.bands.get(&offset).map(Vec::as_slice)
    }

    /// Matrix element ⟨row|op|col⟩.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let d = col as isize - row as isize;
        self.bands
            .get(&d)
            .and_then(|v| v.get(row.min(col)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Transpose (the operators are real).
    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            bands: self.bands.iter().map(|(&d, v)| (-d, v.clone())).collect(),
        }
    }

    /// Operator product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(invalid("other", "operators act on different spaces"));
        }
        let dim = self.space.dim() as isize;
        let mut out = Self::zero(self.space);
        for (&da, va) in &self.bands {
            for (&db, vb) in &other.bands {
                let d = da + db;
                let Some(len) = band_len(self.space, d) else {
                    continue;
                };
                let target = out.bands.entry(d).or_insert_with(|| vec![0.0; len]);
                for row in 0..dim {
                    let mid = row + da;
                    let col = mid + db;
                    if !(0..dim).contains(&mid) || !(0..dim).contains(&col) {
                        continue;
                    }
                    let a = va[row.min(mid) as usize];
                    let b = vb[mid.min(col) as usize];
                    target[row.min(col) as usize] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Apply to a state vector.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let dim = self.space.dim();
        assert_eq!(psi.len(), dim, "state dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (&d, values) in &self.bands {
            for (i, &c) in values.iter().enumerate() {
                let (row, col) = if d >= 0 {
                    (i, i + d as usize)
                } else {
                    (i + (-d) as usize, i)
                };
                out[row] += psi[col] * c;
            }
        }
        out
    }
}

fn band_len(space: FockSpace, offset: isize) -> Option<usize> {
    let dim = space.dim();
    let abs = offset.unsigned_abs();
    (abs < dim).then(|| dim - abs)
}

/// a = Σ √n |n−1⟩⟨n|.
pub fn annihilation_op(space: FockSpace) -> BandedOperator {
    let values = (0..space.n_max())
        .map(|n| ((n + 1) as f64).sqrt())
        .collect();
    BandedOperator::from_band(space, 1, values).expect("band +1 always fits")
}

pub fn creation_op(space: FockSpace) -> BandedOperator {
    annihilation_op(space).adjoint()
}

/// Susskind–Glogower lowering operator e = Σ |n−1⟩⟨n|.
pub fn sg_lowering_op(space: FockSpace) -> BandedOperator {
    BandedOperator::from_band(space, 1, vec![1.0; space.n_max()]).expect("band +1 always fits")
}

/// Semi-unitary shift S = e† = Σ |n+1⟩⟨n|.
pub fn shift_up_op(space: FockSpace) -> BandedOperator {
    sg_lowering_op(space).adjoint()
}

pub fn number_op(space: FockSpace) -> BandedOperator {
    BandedOperator::diagonal(space, |n| n as f64)
}

/// f(aa†), diagonal with entries f(n + 1). Uses the untruncated eigenvalue n + 1
/// on every row, including n_max.
pub fn function_of_aadag(space: FockSpace, f: impl Fn(f64) -> f64) -> BandedOperator {
    BandedOperator::diagonal(space, |n| f((n + 1) as f64))
}

/// Photon-number probabilities P_n, n = 0..=n_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    p: Vec<f64>,
}

/// First and second moments of a photon distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn fano(&self) -> Result<f64> {
        if self.mean <= 0.0 {
            return Err(Error::DegenerateInput(
                "Fano factor undefined for zero mean".into(),
            ));
        }
        Ok(self.variance / self.mean)
    }
}

impl PhotonDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("p", "empty distribution"));
        }
        if let Some((n, &x)) = p
            .iter()
            .enumerate()
            .find(|(_, &x)| !(x >= 0.0 && x.is_finite()))
        {
            return Err(invalid("p", format!("P_{n} = {x} is not a probability")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid("p", format!("probabilities sum to {total}")));
        }
        Ok(Self { p })
    }

    /// Poisson(mean) renormalized on the truncated space.
    pub fn poisson(mean: f64, space: FockSpace) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(invalid("mean", format!("must be non-negative, got {mean}")));
        }
        Self::new(normalize_ln_weights(&poisson_ln_weights(
            mean,
            space.n_max(),
        )))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n_max(&self) -> usize {
        self.p.len() - 1
    }

    pub fn moments(&self) -> Moments {
        let mean: f64 = self.p.iter().enumerate().map(|(n, &p)| n as f64 * p).sum();
        let variance = self
            .p
            .iter()
            .enumerate()
            .map(|(n, &p)| (n as f64 - mean).powi(2) * p)
            .sum();
        Moments { mean, variance }
    }

    /// Total-variation distance ½ Σ |P_n − Q_n|, padding the shorter with zeros.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.p.len().max(other.p.len());
        let get = |v: &[f64], n: usize| v.get(n).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|n| (get(&self.p, n) - get(&other.p, n)).abs())
            .sum::<f64>()
    }

    /// Probability in the top `levels` truncation levels.
    pub fn top_mass(&self, levels: usize) -> f64 {
        let start = self.p.len().saturating_sub(levels);
        self.p[start..].iter().sum()
    }
}

/// Normalized pure state of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Normalizes `amplitudes`; fails on a zero vector.
    pub fn new(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = norm(&amplitudes);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("amplitudes", "state has zero or non-finite norm"));
        }
        amplitudes.iter_mut().for_each(|c| *c /= norm);
        Ok(Self { amplitudes })
    }

    /// Wraps amplitudes the caller has already normalized.
    pub(crate) fn from_normalized(amplitudes: Vec<Complex64>) -> Self {
        debug_assert!((norm(&amplitudes) - 1.0).abs() < NORM_TOLERANCE);
        Self { amplitudes }
    }

    /// Number state |n⟩.
    pub fn fock(n: usize, space: FockSpace) -> Result<Self> {
        if n > space.n_max() {
            return Err(invalid(
                "n",
                format!("{n} exceeds n_max = {}", space.n_max()),
            ));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); space.dim()];
        amplitudes[n] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// |ψ_n|² without renormalization.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn photon_distribution(&self) -> Result<PhotonDistribution> {
        PhotonDistribution::new(self.populations())
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// ⟨ψ|op|ψ⟩.
    pub fn expectation(&self, op: &BandedOperator) -> Complex64 {
        op.apply(&self.amplitudes)
            .iter()
            .zip(&self.amplitudes)
            .map(|(o, c)| c.conj() * o)
            .sum()
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Coherent state |α⟩ on the truncated space.
///
/// Amplitudes are built in log space so large |α| does not overflow n!.
pub fn coherent_state(alpha: Complex64, space: FockSpace) -> Result<PureState> {
    let mean = alpha.norm_sqr();
    let tail = poisson_tail_mass(mean, space.n_max());
    if tail > TAIL_TOLERANCE {
        return Err(Error::Truncation {
            what: "coherent state",
            mass: tail,
            tolerance: TAIL_TOLERANCE,
            n_max: space.n_max(),
        });
    }
    if mean == 0.0 {
        return PureState::fock(0, space);
    }
    let probs = normalize_ln_weights(&poisson_ln_weights(mean, space.n_max()));
    let phase = alpha.arg();
    let amplitudes = probs
        .iter()
        .enumerate()
        .map(|(n, p)| Complex64::from_polar(p.sqrt(), n as f64 * phase))
        .collect();
    PureState::new(amplitudes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> FockSpace {
        FockSpace::new(n).unwrap()
    }

    #[test]
    fn annihilation_entries() {
        let a = annihilation_op(space(10));
        assert_eq!(a.entry(0, 1), 1.0);
        assert_eq!(a.entry(3, 4), 2.0);
        let vac = PureState::fock(0, space(10)).unwrap();
        assert!(a.apply(vac.amplitudes()).iter().all(|c| c.norm() == 0.0));
        assert_eq!(a.bands().count(), 1);
    }

    #[test]
    fn sg_operator_and_shift() {
        let s = space(8);
        let e = sg_lowering_op(s);
        for n in 1..=8 {
            assert_eq!(e.entry(n - 1, n), 1.0);
        }
        let vac = PureState::fock(0, s).unwrap();
        assert!(e.apply(vac.amplitudes()).iter().all(|c| c.norm() == 0.0));

        let shift = shift_up_op(s);
        let sds = shift.adjoint().matmul(&shift).unwrap();
        let ssd = shift.matmul(&shift.adjoint()).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let id = if r == c { 1.0 } else { 0.0 };
                assert_eq!(sds.entry(r, c), id);
                let proj = if r == c && r != 0 { 1.0 } else { 0.0 };
                assert_eq!(ssd.entry(r, c), proj);
            }
        }
        assert_eq!(ssd.entry(0, 0), 0.0);
    }

    #[test]
    fn sg_is_inverse_sqrt_aadag_times_a() {
        let s = space(30);
        let lhs = function_of_aadag(s, |x| x.powf(-0.5))
            .matmul(&annihilation_op(s))
            .unwrap();
        let e = sg_lowering_op(s);
        for r in 0..=30 {
            for c in 0..=30 {
                assert!((lhs.entry(r, c) - e.entry(r, c)).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn double_adjoint_is_identity() {
        let s = space(12);
        for op in [
            annihilation_op(s),
            sg_lowering_op(s),
            number_op(s),
            function_of_aadag(s, |x| x.sqrt().cos()),
            annihilation_op(s).matmul(&creation_op(s)).unwrap(),
        ] {
            assert_eq!(op.adjoint().adjoint(), op);
        }
    }

    #[test]
    fn from_band_checks_length() {
        let s = space(4);
        assert!(BandedOperator::from_band(s, 1, vec![1.0; 3]).is_err());
        assert!(BandedOperator::from_band(s, 5, vec![]).is_err());
    }

    #[test]
    fn coherent_vacuum() {
        let psi = coherent_state(Complex64::new(0.0, 0.0), space(5)).unwrap();
        assert_eq!(psi.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(psi.mean_photon_number(), 0.0);
    }

    #[test]
    fn coherent_mode_and_mean() {
        let psi = coherent_state(Complex64::new(20f64.sqrt(), 0.0), space(80)).unwrap();
        let pops = psi.populations();
        let argmax = pops
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // Poisson(20) has a double mode at 19 and 20.
        assert!(argmax == 19 || argmax == 20);
        assert!((pops[20] - pops[19]).abs() < 1e-15);
        assert!((psi.mean_photon_number() - 20.0).abs() < 1e-8);
        assert!((psi.norm() - 1.0).abs() < NORM_TOLERANCE);
    }

    #[test]
    fn coherent_matches_untruncated_poisson() {
        // Independent route: Poisson weights by the multiplicative recursion.
        let mean: f64 = 30.0;
        let psi = coherent_state(Complex64::from_polar(mean.sqrt(), 0.7), space(120)).unwrap();
        let mut p = (-mean).exp();
        for (n, amp) in psi.amplitudes().iter().enumerate() {
            if n > 0 {
                p *= mean / n as f64;
            }
            assert!((amp.norm_sqr() - p).abs() < TAIL_TOLERANCE);
            if amp.norm() > 1e-6 {
                let expected = (n as f64 * 0.7).rem_euclid(std::f64::consts::TAU);
                let got = amp.arg().rem_euclid(std::f64::consts::TAU);
                let diff = (expected - got).abs();
                assert!(diff.min(std::f64::consts::TAU - diff) < 1e-9);
            }
        }
    }

    #[test]
    fn coherent_rejects_short_truncation() {
        let err = coherent_state(Complex64::new(5.0, 0.0), space(30)).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn coherent_large_amplitude_no_overflow() {
        let psi = coherent_state(
            Complex64::new(20.0, 0.0),
            FockSpace::for_mean(400.0).unwrap(),
        )
        .unwrap();
        assert!((psi.mean_photon_number() - 400.0).abs() < 1e-7);
    }

    #[test]
    fn moments_examples() {
        let poisson =
            PhotonDistribution::poisson(20.0, FockSpace::for_mean(20.0).unwrap()).unwrap();
        let m = poisson.moments();
        assert!((m.mean - 20.0).abs() < 1e-10);
        assert!((m.fano().unwrap() - 1.0).abs() < 1e-10);

        let mut p = vec![0.0; 8];
        p[5] = 1.0;
        let m = PhotonDistribution::new(p).unwrap().moments();
        assert_eq!((m.mean, m.variance), (5.0, 0.0));

        let m = PhotonDistribution::new(vec![0.5, 0.5]).unwrap().moments();
        assert_eq!((m.mean, m.variance), (0.5, 0.25));
    }

    #[test]
    fn fano_of_vacuum_is_degenerate() {
        let m = PhotonDistribution::new(vec![1.0, 0.0]).unwrap().moments();
        assert!(matches!(m.fano(), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn distribution_validation() {
        assert!(PhotonDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PhotonDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(PhotonDistribution::new(vec![]).is_err());
    }

    #[test]
    fn default_truncation_tail() {
        for mean in [1.0, 5.0, 20.0, 100.0, 400.0] {
            let s = FockSpace::for_mean(mean).unwrap();
            assert!(
                poisson_tail_mass(mean, s.n_max()) < TAIL_TOLERANCE,
                "mean {mean}"
            );
        }
        assert_eq!(FockSpace::for_mean(20.0).unwrap().n_max(), 75);
        assert!(FockSpace::new(0).is_err());
    }
}
