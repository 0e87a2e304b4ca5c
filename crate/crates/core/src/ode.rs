//! Adaptive L-stable SDIRK integrator for v̇ = G v with tridiagonal G.
//!
//! Five-stage, stiffly accurate SDIRK of order 4 with an embedded order-3 solution
//! (γ = 1/4; Hairer & Wanner, Solving ODEs II, Table 6.5). Every stage shares the matrix
//! I − hγG, so one tridiagonal factorization per step serves all five stage solves.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::SidebandBlock;

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B: [f64; STAGES] = A[4];
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Steps below this size abort with [`Error::Stiffness`].
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            min_step: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

/// LU factors of I − hγG, no pivoting (the matrix is column diagonally dominant
/// for every generator built by `models`).
struct ShiftedLu {
    mult: Vec<f64>,
    pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl ShiftedLu {
    fn new(block: &SidebandBlock, hg: f64) -> Result<Self> {
        let dim = block.dim();
        let (sub, diag, sup) = (block.sub(), block.diag(), block.sup());
        let mut mult = vec![0.0; dim];
        let mut pivot = vec![0.0; dim];
        let upper: Vec<f64> = sup.iter().map(|&s| -hg * s).collect();
        pivot[0] = 1.0 - hg * diag[0];
        for i in 1..dim {
            mult[i] = -hg * sub[i] / pivot[i - 1];
            pivot[i] = 1.0 - hg * diag[i] - mult[i] * upper[i - 1];
        }
        if pivot.iter().any(|p| !p.is_finite() || *p == 0.0) {
            return Err(Error::Convergence("singular implicit stage matrix".into()));
        }
        Ok(Self { mult, pivot, upper })
    }

    fn solve(&self, rhs: &mut [Complex64]) {
        let dim = rhs.len();
        for i in 1..dim {
            let prev = rhs[i - 1];
            rhs[i] -= prev * self.mult[i];
        }
        rhs[dim - 1] /= self.pivot[dim - 1];
        for i in (0..dim - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] = (rhs[i] - next * self.upper[i]) / self.pivot[i];
        }
    }
}

/// One attempted step; returns the new state and the weighted RMS error estimate.
fn step(
    block: &SidebandBlock,
    y: &[Complex64],
    h: f64,
    opts: &OdeOptions,
) -> Result<(Vec<Complex64>, f64)> {
    let dim = y.len();
    let lu = ShiftedLu::new(block, h * GAMMA)?;
    let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(STAGES);
    let mut stage = vec![Complex64::new(0.0, 0.0); dim];
    for i in 0..STAGES {
        stage.copy_from_slice(y);
        for (j, kj) in k.iter().enumerate() {
            let w = h * A[i][j];
            if w != 0.0 {
                stage.iter_mut().zip(kj).for_each(|(s, kv)| *s += kv * w);
            }
        }
        let mut rhs = block.apply(&stage);
        lu.solve(&mut rhs);
        k.push(rhs);
    }
    let mut y_new = y.to_vec();
    let mut err = vec![Complex64::new(0.0, 0.0); dim];
    for (i, ki) in k.iter().enumerate() {
        let wb = h * B[i];
        let we = h * (B[i] - B_HAT[i]);
        for n in 0..dim {
            y_new[n] += ki[n] * wb;
            err[n] += ki[n] * we;
        }
    }
    let mut acc = 0.0;
    for n in 0..dim {
        let scale = opts.atol + opts.rtol * y[n].norm().max(y_new[n].norm());
        acc += (err[n].norm() / scale).powi(2);
    }
    Ok((y_new, (acc / dim as f64).sqrt()))
}

/// Integrate v̇ = G v from v(0) = `v0`, returning v at every time in `t_out`
/// (ascending, non-negative).
pub fn integrate(
    block: &SidebandBlock,
    v0: &[Complex64],
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<Complex64>>> {
    if v0.len() != block.dim() {
        return Err(invalid(
            "v0",
            format!(
                "dimension {} does not match block dimension {}",
                v0.len(),
                block.dim()
            ),
        ));
    }
    if t_out.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_out.windows(2).any(|w| w[1] < w[0])
    {
        return Err(invalid(
            "t_grid",
            "times must be finite, non-negative and ascending",
        ));
    }
    let stiffness = block
        .diag()
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut h = (1e-3 / stiffness).max(opts.min_step * 10.0);
    let mut t = 0.0;
    let mut y = v0.to_vec();
    let mut out = Vec::with_capacity(t_out.len());
    let mut steps = 0usize;

    for &target in t_out {
        while t < target {
            let remaining = target - t;
            let clipped = h >= remaining;
            let h_try = if clipped { remaining } else { h };
            let (y_new, err) = step(block, &y, h_try, opts)?;
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Convergence(format!(
                    "exceeded {} integration steps before t = {target}",
                    opts.max_steps
                )));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.25)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if clipped { target } else { t + h_try };
                y = y_new;
                // A step shortened to hit an output time says nothing about the next one.
                if !clipped || factor < 1.0 {
                    h = h_try * factor;
                }
            } else {
                h = h_try * factor;
                if h < opts.min_step {
                    return Err(Error::Stiffness { step: h, time: t });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
