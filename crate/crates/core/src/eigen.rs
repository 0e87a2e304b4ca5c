//! Extreme eigenvalue of a sideband generator by Sturm-sequence bisection.
//!
//! A tridiagonal G whose couplings satisfy sub[i]·sup[i−1] ≥ 0 is similar to the symmetric
//! tridiagonal matrix with off-diagonals √(sub[i]·sup[i−1]), so its spectrum is real.

use crate::error::{Error, Result};
use crate::models::SidebandBlock;

const MAX_BISECTIONS: usize = 300;

/// Diagonal and squared off-diagonal of the symmetrized block.
fn symmetrized(block: &SidebandBlock) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = block.dim();
    let mut off_sq = vec![0.0; dim];
    for i in 1..dim {
        let p = block.sub()[i] * block.sup()[i - 1];
        if p < 0.0 || !p.is_finite() {
            return Err(Error::Convergence(format!(
                "couplings at row {i} have opposite signs; spectrum is not real"
            )));
        }
        off_sq[i] = p;
    }
    Ok((block.diag().to_vec(), off_sq))
}

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off_sq: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        q = if i == 0 {
            diag[0] - x
        } else {
            diag[i] - x - off_sq[i] / q
        };
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest (algebraically) eigenvalue of the block.
pub fn largest_eigenvalue(block: &SidebandBlock) -> Result<f64> {
    let (diag, off_sq) = symmetrized(block)?;
    let dim = diag.len();
    let off: Vec<f64> = off_sq.iter().map(|x| x.sqrt()).collect();
    let radius = |i: usize| off[i] + off.get(i + 1).copied().unwrap_or(0.0);
    let mut lo = (0..dim)
        .map(|i| diag[i] - radius(i))
        .fold(f64::INFINITY, f64::min);
    let mut hi = (0..dim)
        .map(|i| diag[i] + radius(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * scale);
    lo -= f64::EPSILON * scale;
    hi += f64::EPSILON * scale;

    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if sturm_count(&diag, &off_sq, mid, pivmin) == dim {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Convergence(format!(
        "bisection did not converge in {MAX_BISECTIONS} iterations"
    )))
}

/// Slowest decay rate λ₁ = −max Re(spec G) of a decaying sideband (k ≥ 1).
/// The corresponding Lorentzian FWHM is 2λ₁.
pub fn slowest_decay_rate(block: &SidebandBlock) -> Result<f64> {
    if block.k() == 0 {
        return Err(Error::Domain(
            "the population block has a stationary mode; use a sideband with k ≥ 1".into(),
        ));
    }
    Ok(-largest_eigenvalue(block)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LaserModel, Normalization};

    #[test]
    fn diagonal_block() {
        let block = SidebandBlock::from_coefficients(
            1,
            Normalization::Raw,
            vec![0.0; 3],
            vec![-1.0, -2.0, -3.0],
            vec![0.0; 3],
        )
        .unwrap();
        assert!((slowest_decay_rate(&block).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[−1, 2], [0.5, −3]] has eigenvalues −2 ± √2.
        let block = SidebandBlock::from_coefficients(
            2,
            Normalization::Raw,
            vec![0.0, 0.5],
            vec![-1.0, -3.0],
            vec![2.0, 0.0],
        )
        .unwrap();
        let expected = 2.0 - 2f64.sqrt();
        assert!((slowest_decay_rate(&block).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn rejects_population_block_and_mixed_signs() {
        let b0 = LaserModel::standard(10.0)
            .unwrap()
            .sideband_block(0)
            .unwrap();
        assert!(slowest_decay_rate(&b0).is_err());
        let block = SidebandBlock::from_coefficients(
            1,
            Normalization::Raw,
            vec![0.0, -1.0],
            vec![-1.0, -1.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!(matches!(
            slowest_decay_rate(&block),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn normalization_does_not_change_rate() {
        let model = LaserModel::standard(50.0).unwrap();
        let raw = slowest_decay_rate(&model.sideband_block(1).unwrap()).unwrap();
        let amp = slowest_decay_rate(
            &model
                .sideband_block_with(1, Normalization::Amplitude)
                .unwrap(),
        )
        .unwrap();
        assert!(((raw - amp) / raw).abs() < 1e-9);
    }
}
