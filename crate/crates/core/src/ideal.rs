//! Closed-form lossless cycle: perfect, n-independent sideband transfers and
//! no dissipation besides the engine reset.
//!
//! The cycle is counted from the point just before the blue-sideband stroke,
//! starting from `|↓, 0⟩`. After `k` cycles the load at stage C is a binomial
//! walk on even levels; stage D (equivalently A) sits one level higher.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::{diagonal_entropy, ergotropy_diagonal};

/// Occupation probabilities `p_n` with optional per-level uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhononDistribution {
    probs: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

impl PhononDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| **p < -1e-12 || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!("probability {p} out of range")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs, sigma: None })
    }

    /// Clips round-off negatives and rescales to unit sum; rejects inputs
    /// that are off by more than 1e-6.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| **p < -1e-6 || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!("probability {p} out of range")));
        }
        probs.iter_mut().for_each(|p| *p = p.max(0.0));
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    /// Unvalidated; for tests of the validation paths downstream.
    #[doc(hidden)]
    pub fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs, sigma: None }
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.probs.len() {
            return Err(Error::InvalidArgument("sigma length differs from probability length".into()));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn delta(n: usize, len: usize) -> Result<Self> {
        if n >= len {
            return Err(Error::InvalidArgument(format!("level {n} outside length {len}")));
        }
        let mut probs = vec![0.0; len];
        probs[n] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs.iter().enumerate().map(|(n, p)| (n as f64 - m).powi(2) * p).sum()
    }

    /// Zero-padded (or tail-checked truncated) copy of length `len`.
    pub fn resized(&self, len: usize) -> Result<Self> {
        if len < self.probs.len() && self.probs[len..].iter().any(|p| *p > 1e-12) {
            return Err(Error::InvalidArgument(format!("cannot truncate to {len} levels without losing mass")));
        }
        let mut probs = self.probs.clone();
        probs.resize(len, 0.0);
        let sigma = self.sigma.as_ref().map(|s| {
            let mut s = s.clone();
            s.resize(len, 0.0);
            s
        });
        Ok(Self { probs, sigma })
    }

    /// `½ Σ |p_n − q_n|` over the longer of the two supports.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..len).map(|i| (get(&self.probs, i) - get(&other.probs, i)).abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdealStroke {
    /// AJC swap with the engine in `|↓⟩`: every level moves up by one.
    IvBlue,
    /// Reset to `p_D^A`, JC swap, then pump: up with `p`, down with `1 − p`.
    IiRedAfterReset { p_d_a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdealStage {
    /// After the pump stroke (engine `|↓⟩`); even support.
    C,
    /// After the blue stroke, and unchanged through the reset; odd support.
    DA,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p_D^A must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// One ideal stroke acting on the load distribution.
pub fn ideal_step_map(p: &PhononDistribution, stroke: IdealStroke) -> Result<PhononDistribution> {
    let len = p.len();
    let top = p.probs[len - 1];
    if top > 1e-9 {
        return Err(Error::FockOverflow { population: top, fock_dim: len });
    }
    let mut out = vec![0.0; len];
    match stroke {
        IdealStroke::IvBlue => {
            for n in 0..len - 1 {
                out[n + 1] += p.probs[n];
            }
        }
        IdealStroke::IiRedAfterReset { p_d_a } => {
            check_p(p_d_a)?;
            for n in 0..len - 1 {
                let w = p.probs[n];
                out[n + 1] += p_d_a * w;
                if n == 0 {
                    // |↓,0⟩ is dark under the JC coupling
                    out[0] += (1.0 - p_d_a) * w;
                } else {
                    out[n - 1] += (1.0 - p_d_a) * w;
                }
            }
        }
    }
    PhononDistribution::new(out)
}

/// Binomial weights `C(N, k) p^k (1 − p)^(N−k)` for `k = 0..=N`.
fn binomial_weights(n_cycles: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_cycles + 1);
    let mut coeff = 1.0f64;
    for k in 0..=n_cycles {
        if k > 0 {
            coeff *= (n_cycles - k + 1) as f64 / k as f64;
        }
        out.push(coeff * p.powi(k as i32) * (1.0 - p).powi((n_cycles - k) as i32));
    }
    out
}

/// Closed-form load distribution after `n_cycles` ideal cycles.
///
/// The returned vector has length `2·n_cycles + 2`, enough to hold both
/// stages; use [`PhononDistribution::resized`] to compare with simulations.
pub fn ideal_distribution(n_cycles: usize, p_d_a: f64, stage: IdealStage) -> Result<PhononDistribution> {
    check_p(p_d_a)?;
    let len = 2 * n_cycles + 2;
    let mut probs = vec![0.0; len];
    let offset = match stage {
        IdealStage::C => 0,
        IdealStage::DA => 1,
    };
    for (k, w) in binomial_weights(n_cycles, p_d_a).into_iter().enumerate() {
        probs[2 * k + offset] = w;
    }
    PhononDistribution::normalized(probs)
}

/// Least-squares fit of `y ≈ Σ_j coef_j · basis_j(x)` with the largest
/// relative residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub max_relative_residual: f64,
}

fn fit_linear(points: &[(f64, f64)], basis: &[&dyn Fn(f64) -> f64]) -> Result<LinearFit> {
    if points.len() < basis.len() {
        return Err(Error::InvalidArgument("not enough points for the fit".into()));
    }
    let a = DMatrix::from_fn(points.len(), basis.len(), |i, j| basis[j](points[i].0));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let ata = a.transpose() * &a;
    let aty = a.transpose() * &y;
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::ScalingUndefined("singular scaling fit".into()))?;
    let fitted = &a * &coef;
    let max_relative_residual = points
        .iter()
        .zip(fitted.iter())
        .map(|((_, y), f)| if *y != 0.0 { ((f - y) / y).abs() } else { (f - y).abs() })
        .fold(0.0, f64::max);
    Ok(LinearFit { coefficients: coef.iter().copied().collect(), max_relative_residual })
}

/// `S ≈ a + b ln N` over the given `(N, S)` points.
pub fn fit_entropy_log(points: &[(f64, f64)]) -> Result<LinearFit> {
    fit_linear(points, &[&|_| 1.0, &|n: f64| n.ln()])
}

/// `E ≈ c N − α √N`; the coefficients are reported as `[c, α]`.
pub fn fit_ergotropy_sqrt(points: &[(f64, f64)]) -> Result<LinearFit> {
    let mut fit = fit_linear(points, &[&|n| n, &|n: f64| -n.sqrt()])?;
    fit.coefficients = vec![fit.coefficients[0], fit.coefficients[1]];
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub p_d_a: f64,
    pub delta_n_per_cycle: f64,
    /// `(N_c, S_L)` for `N_c = 1..=max_cycles`.
    pub entropy_series: Vec<(usize, f64)>,
    /// `(N_c, ℰ_L)` for `N_c = 1..=max_cycles`.
    pub ergotropy_series: Vec<(usize, f64)>,
    pub entropy_fit: LinearFit,
    pub ergotropy_fit: LinearFit,
    pub alpha_fit: f64,
}

/// Growth laws of the ideal cycle at stage C. Fits use the last half of the
/// cycle range.
pub fn ideal_scaling_report(p_d_a: f64, max_cycles: usize) -> Result<ScalingReport> {
    check_p(p_d_a)?;
    if p_d_a == 0.0 || p_d_a == 1.0 {
        return Err(Error::ScalingUndefined(format!("p_D^A = {p_d_a} gives a deterministic walk")));
    }
    if max_cycles < 10 {
        return Err(Error::InvalidArgument(format!("max_cycles must be >= 10, got {max_cycles}")));
    }
    let mut means = Vec::with_capacity(max_cycles + 1);
    let mut entropy_series = Vec::with_capacity(max_cycles);
    let mut ergotropy_series = Vec::with_capacity(max_cycles);
    for n in 0..=max_cycles {
        let dist = ideal_distribution(n, p_d_a, IdealStage::C)?;
        means.push(dist.mean());
        if n > 0 {
            entropy_series.push((n, diagonal_entropy(&dist)));
            ergotropy_series.push((n, ergotropy_diagonal(&dist)?));
        }
    }
    let delta_n_per_cycle = (means[max_cycles] - means[0]) / max_cycles as f64;
    let drift = means.windows(2).map(|w| (w[1] - w[0] - delta_n_per_cycle).abs()).fold(0.0, f64::max);
    if drift > 1e-9 {
        return Err(Error::ScalingUndefined(format!("mean increments not uniform (spread {drift:.3e})")));
    }
    let lo = max_cycles / 2;
    let tail = |s: &[(usize, f64)]| -> Vec<(f64, f64)> {
        s.iter().filter(|(n, _)| *n >= lo).map(|(n, v)| (*n as f64, *v)).collect()
    };
    let entropy_fit = fit_entropy_log(&tail(&entropy_series))?;
    let ergotropy_fit = fit_ergotropy_sqrt(&tail(&ergotropy_series))?;
    let alpha_fit = ergotropy_fit.coefficients[1];
    Ok(ScalingReport {
        p_d_a,
        delta_n_per_cycle,
        entropy_series,
        ergotropy_series,
        entropy_fit,
        ergotropy_fit,
        alpha_fit,
    })
}
