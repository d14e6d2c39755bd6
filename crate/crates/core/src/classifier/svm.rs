//! Binary linear SVM by dual coordinate descent.
//!
//! Minimizes `0.5 |w~|^2 + C sum_i max(0, 1 - y_i w~.x~_i)` where `x~ = [x, 1]`,
//! so the bias is the last entry of `w~` and is regularized like the rest.

use rand::seq::SliceRandom;

use crate::encoder::Descriptors;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub max_epochs: usize,
    /// Stop once the spread of projected dual gradients drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, max_epochs: 1000, tol: 1e-3, seed: 0 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", self.c)));
        }
        if self.max_epochs == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("SVM needs max_epochs >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub epochs: usize,
    pub converged: bool,
}

fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

/// Primal objective of `(w, b)` on the data.
pub fn primal_objective(x: &Descriptors, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = x.rows().zip(y).map(|(r, &yi)| (1.0 - yi * (dot(w, r) + b)).max(0.0)).sum();
    reg + c * loss
}

/// Trains one binary SVM; `y` holds +1/-1.
pub fn train_binary(x: &Descriptors, y: &[f64], cfg: &SvmConfig, rng: &mut StreamRng) -> Result<BinarySvm> {
    cfg.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} samples, {} labels", y.len())));
    }
    let d = x.dim();
    let qii: Vec<f64> = x.rows().map(|r| r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = 0;
    let mut converged = false;
    while epochs < cfg.max_epochs {
        epochs += 1;
        order.shuffle(rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = x.row(i);
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cfg.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, cfg.c);
                let delta = (alpha[i] - old) * y[i];
                if delta != 0.0 {
                    for (wj, &v) in w.iter_mut().zip(xi) {
                        *wj += delta * v as f64;
                    }
                    b += delta;
                }
            }
        }
        if pg_max - pg_min < cfg.tol {
            converged = true;
            break;
        }
    }
    let primal = primal_objective(x, y, &w, b, cfg.c);
    let dual = alpha.iter().sum::<f64>() - 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    Ok(BinarySvm { w, b, alpha, primal, dual, epochs, converged })
}
