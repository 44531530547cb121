//! Blue-sideband Rabi scans: synthesis, shot noise, and reconstruction of the
//! load occupation probabilities by box-constrained weighted least squares.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::cycle::{stroke_pump, CalibrationParams};
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::ideal::PhononDistribution;
use crate::thermo::{diagonal_entropy, ergotropy_diagonal, ThermoReport};

/// Default decay base for the scan model, equal to the load dephasing rate.
pub const DEFAULT_GAMMA_BASE: f64 = 318.0;
pub const DEFAULT_SHOTS: u32 = 150;
pub const DEFAULT_BOX_HALFWIDTH: f64 = 0.05;
pub const DEFAULT_FIT_LEVELS: usize = 14;

/// `0, 3, …, 102` µs.
pub fn default_grid() -> Vec<f64> {
    (0..35).map(|k| k as f64 * 3e-6).collect()
}

/// `points` evenly spaced times from 0 to `t_max` inclusive.
pub fn linear_grid(points: usize, t_max: f64) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect(),
    }
}

/// 200 points up to 600 µs.
pub fn reference_grid() -> Vec<f64> {
    linear_grid(200, 600e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiScan {
    pub times: Vec<f64>,
    pub p_s: Vec<f64>,
    pub sigma_p: Vec<f64>,
    pub shots_per_point: u32,
}

impl RabiScan {
    pub fn new(times: Vec<f64>, p_s: Vec<f64>, sigma_p: Vec<f64>, shots_per_point: u32) -> Result<Self> {
        let scan = Self { times, p_s, sigma_p, shots_per_point };
        scan.validate()?;
        Ok(scan)
    }

    /// Noise-free scan; every point gets the same nominal weight.
    pub fn noiseless(times: Vec<f64>, p_s: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(times, p_s, vec![1e-3; n], 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.p_s.len() || self.times.len() != self.sigma_p.len() {
            return Err(Error::InvalidArgument("scan vectors differ in length".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0] || w[1].is_nan()) {
            return Err(Error::InvalidArgument("scan times must be strictly increasing".into()));
        }
        if self.times.iter().any(|t| *t < 0.0 || !t.is_finite()) {
            return Err(Error::InvalidArgument("scan times must be finite and >= 0".into()));
        }
        if self.sigma_p.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidArgument("scan sigmas must be positive".into()));
        }
        if self.p_s.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("scan populations must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| **t < 0.0 || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("scan time {t} must be finite and >= 0")));
    }
    Ok(())
}

/// Response of level `n` at time `t`: `cos²(η√(n+1)Ω₀t) e^{−γ√(n+1)t}`.
fn level_response(n: usize, t: f64, calib: &CalibrationParams, gamma_base: f64) -> f64 {
    let root = ((n + 1) as f64).sqrt();
    let phase = calib.lamb_dicke * root * calib.carrier_rabi_rad_s * t;
    phase.cos().powi(2) * (-gamma_base * root * t).exp()
}

/// Rows are times, columns Fock levels.
pub fn design_matrix(times: &[f64], levels: usize, calib: &CalibrationParams, gamma_base: f64) -> Result<DMatrix<f64>> {
    check_times(times)?;
    if gamma_base.is_nan() || gamma_base < 0.0 {
        return Err(Error::InvalidArgument(format!("gamma_base must be >= 0, got {gamma_base}")));
    }
    Ok(DMatrix::from_fn(times.len(), levels, |i, n| level_response(n, times[i], calib, gamma_base)))
}

/// Probability of finding the engine in `|↓⟩` after a blue-sideband pulse of
/// each duration, for an engine prepared in `|↓⟩`.
pub fn rabi_signal(p: &PhononDistribution, times: &[f64], calib: &CalibrationParams, gamma_base: f64) -> Result<Vec<f64>> {
    let a = design_matrix(times, p.len(), calib, gamma_base)?;
    let probs = DVector::from_column_slice(p.probs());
    Ok((a * probs).iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Shot-noise emulation: each point is `Binomial(shots, p)/shots`.
pub fn sample_scan(ideal_p_s: &[f64], times: &[f64], shots: u32, seed: u64) -> Result<RabiScan> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be > 0".into()));
    }
    if ideal_p_s.len() != times.len() {
        return Err(Error::InvalidArgument("signal and times differ in length".into()));
    }
    if let Some(p) = ideal_p_s.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("population {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shots as f64;
    let floor = (0.25 / n).sqrt() / 10.0;
    let mut p_s = Vec::with_capacity(times.len());
    let mut sigma_p = Vec::with_capacity(times.len());
    for &p in ideal_p_s {
        let k = Binomial::new(shots as u64, p)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(&mut rng);
        let hat = k as f64 / n;
        p_s.push(hat);
        sigma_p.push((hat * (1.0 - hat) / n).sqrt().max(floor));
    }
    RabiScan::new(times.to_vec(), p_s, sigma_p, shots)
}

/// Load populations seen by a diagnostic scan: the engine is pumped to `|↓⟩`
/// first, which leaves the load populations unchanged.
pub fn measured_distribution(rho: &DensityMatrix, calib: &CalibrationParams) -> Result<PhononDistribution> {
    let pumped = stroke_pump(rho, calib)?;
    PhononDistribution::normalized(pumped.load_populations()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub box_halfwidth: f64,
    pub n_levels: usize,
    pub gamma_base: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { box_halfwidth: DEFAULT_BOX_HALFWIDTH, n_levels: DEFAULT_FIT_LEVELS, gamma_base: DEFAULT_GAMMA_BASE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted distribution; `sigma` holds the per-level 1-σ errors.
    pub p_fit: PhononDistribution,
    pub reduced_chi2: f64,
    pub chi2: f64,
    pub n_levels_used: usize,
    pub iterations: usize,
    pub prior: PhononDistribution,
}

impl FitResult {
    pub fn sigma(&self) -> &[f64] {
        self.p_fit.sigma().unwrap_or(&[])
    }
}

const MAX_ITER: usize = 500;

/// Minimum-norm least-squares solution of `m x ≈ rhs` via SVD.
fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(rhs, 1e-9 * smax.max(1e-300)).map_err(|e| Error::FitFailure(e.to_string()))
}

fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .pseudo_inverse(1e-12 * m.norm().max(1e-300))
        .map_err(|e| Error::FitFailure(e.to_string()))
}

/// Minimises `‖W^{1/2}(y − A x)‖²` subject to `lo ≤ x ≤ hi` with an
/// active-set method started at `x0` (feasible).
fn bounded_wls(
    a: &DMatrix<f64>,
    w: &DVector<f64>,
    y: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    x0: Vec<f64>,
) -> Result<(Vec<f64>, usize)> {
    let m = lo.len();
    let mut x = x0;
    let mut at_bound = vec![false; m];
    for j in 0..m {
        if lo[j] == hi[j] {
            at_bound[j] = true;
        }
    }
    let scale = w.iter().cloned().fold(0.0, f64::max).max(1e-300) * a.nrows() as f64;
    let kkt_tol = 1e-10 * scale;
    for iter in 0..MAX_ITER {
        let xv = DVector::from_column_slice(&x);
        let r = y - a * &xv;
        let free: Vec<usize> = (0..m).filter(|j| !at_bound[*j]).collect();
        if !free.is_empty() {
            let sw = w.map(f64::sqrt);
            let af = a.select_columns(&free);
            let awf = DMatrix::from_fn(af.nrows(), af.ncols(), |i, j| af[(i, j)] * sw[i]);
            let d = lstsq(&awf, &r.component_mul(&sw))?;
            // largest feasible fraction of the step
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (k, &j) in free.iter().enumerate() {
                let target = x[j] + d[k];
                if target < lo[j] && d[k] < 0.0 {
                    let s = (lo[j] - x[j]) / d[k];
                    if s < alpha {
                        alpha = s;
                        blocking = Some((j, lo[j]));
                    }
                } else if target > hi[j] && d[k] > 0.0 {
                    let s = (hi[j] - x[j]) / d[k];
                    if s < alpha {
                        alpha = s;
                        blocking = Some((j, hi[j]));
                    }
                }
            }
            let alpha = alpha.max(0.0);
            for (k, &j) in free.iter().enumerate() {
                x[j] = (x[j] + alpha * d[k]).clamp(lo[j], hi[j]);
            }
            if let Some((j, bound)) = blocking {
                x[j] = bound;
                at_bound[j] = true;
                continue;
            }
        }
        // KKT check on the bound variables
        let xv = DVector::from_column_slice(&x);
        let r = y - a * &xv;
        let wr = r.component_mul(w);
        let g = a.transpose() * wr;
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..m {
            if !at_bound[j] || lo[j] == hi[j] {
                continue;
            }
            let violation = if x[j] <= lo[j] { g[j] } else { -g[j] };
            if violation > kkt_tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((j, violation));
            }
        }
        match worst {
            Some((j, _)) => at_bound[j] = false,
            None => return Ok((x, iter + 1)),
        }
    }
    Err(Error::FitFailure(format!("active-set iteration did not converge in {MAX_ITER} steps")))
}

/// Euclidean projection onto `{Σ x = total, lo ≤ x ≤ hi}`.
fn project_box_simplex(x: &[f64], lo: &[f64], hi: &[f64], total: f64) -> Result<Vec<f64>> {
    let lo_sum: f64 = lo.iter().sum();
    let hi_sum: f64 = hi.iter().sum();
    if total < lo_sum - 1e-12 || total > hi_sum + 1e-12 {
        return Err(Error::FitFailure(format!("normalization {total} outside box range [{lo_sum}, {hi_sum}]")));
    }
    let eval = |lam: f64| -> f64 { x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| (v + lam).clamp(*l, *h)).sum() };
    let (mut a, mut b) = (-2.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if eval(mid) < total {
            a = mid;
        } else {
            b = mid;
        }
    }
    let lam = 0.5 * (a + b);
    Ok(x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| (v + lam).clamp(*l, *h)).collect())
}

/// Box-constrained weighted least-squares reconstruction of the first
/// `n_levels` occupation probabilities; higher levels stay at the prior.
pub fn fit_distribution(
    scan: &RabiScan,
    prior: &PhononDistribution,
    calib: &CalibrationParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    scan.validate()?;
    let levels = prior.len();
    let k = opts.n_levels;
    if k == 0 || k > levels {
        return Err(Error::InvalidArgument(format!("n_levels = {k} must lie in 1..={levels}")));
    }
    if opts.box_halfwidth.is_nan() || opts.box_halfwidth < 0.0 {
        return Err(Error::InvalidArgument("box_halfwidth must be >= 0".into()));
    }
    if scan.len() <= k {
        return Err(Error::Underdetermined { points: scan.len(), levels: k });
    }
    let a_full = design_matrix(&scan.times, levels, calib, opts.gamma_base)?;
    let a = a_full.columns(0, k).into_owned();
    let tail = DVector::from_iterator(levels - k, prior.probs()[k..].iter().copied());
    let tail_signal = a_full.columns(k, levels - k) * &tail;
    let y = DVector::from_column_slice(&scan.p_s) - tail_signal;
    let w = DVector::from_iterator(scan.len(), scan.sigma_p.iter().map(|s| 1.0 / (s * s)));

    let lo: Vec<f64> = prior.probs()[..k].iter().map(|p| (p - opts.box_halfwidth).max(0.0)).collect();
    let hi: Vec<f64> = prior.probs()[..k].iter().map(|p| (p + opts.box_halfwidth).min(1.0)).collect();
    let x0: Vec<f64> = prior.probs()[..k].iter().zip(lo.iter().zip(&hi)).map(|(p, (l, h))| p.clamp(*l, *h)).collect();
    let (x, iterations) = bounded_wls(&a, &w, &y, &lo, &hi, x0)?;

    let tail_mass: f64 = tail.iter().sum();
    let x = project_box_simplex(&x, &lo, &hi, 1.0 - tail_mass)?;
    let mut probs = x.clone();
    probs.extend(tail.iter());

    let xv = DVector::from_column_slice(&x);
    let resid = &y - &a * xv;
    let chi2: f64 = resid.iter().zip(w.iter()).map(|(r, wi)| r * r * wi).sum();
    let reduced_chi2 = chi2 / (scan.len() - k) as f64;

    let aw = DMatrix::from_fn(a.nrows(), k, |i, j| a[(i, j)] * w[i]);
    let cov = pinv(&(a.transpose() * aw))?;
    let mut sigma: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    sigma.resize(levels, 0.0);

    let p_fit = PhononDistribution::normalized(probs)?.with_sigma(sigma)?;
    Ok(FitResult { p_fit, reduced_chi2, chi2, n_levels_used: k, iterations, prior: prior.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedObservables {
    pub report: ThermoReport,
    pub mean_n_sigma: f64,
    pub entropy_sigma: f64,
    pub ergotropy_sigma: f64,
}

/// Diagonal functionals of the fitted distribution with first-order error
/// propagation from the per-level sigmas (levels treated as independent).
pub fn reconstruct_observables(fit: &FitResult) -> Result<ReconstructedObservables> {
    let p = &fit.p_fit;
    let probs = p.probs();
    let zeros = vec![0.0; probs.len()];
    let sigma = p.sigma().unwrap_or(&zeros);
    let ergotropy = ergotropy_diagonal(p)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|i, j| probs[*j].total_cmp(&probs[*i]));
    let mut rank = vec![0usize; probs.len()];
    for (r, &n) in order.iter().enumerate() {
        rank[n] = r;
    }
    let quad = |coef: &dyn Fn(usize) -> f64| -> f64 {
        (0..probs.len()).map(|n| (coef(n) * sigma[n]).powi(2)).sum::<f64>().sqrt()
    };
    let mean_n_sigma = quad(&|n| n as f64);
    let entropy_sigma = quad(&|n| if probs[n] > 0.0 { probs[n].ln() + 1.0 } else { 0.0 });
    let ergotropy_sigma = quad(&|n| n as f64 - rank[n] as f64);
    Ok(ReconstructedObservables {
        report: ThermoReport {
            mean_n: p.mean(),
            entropy_nats: diagonal_entropy(p),
            ergotropy_units_hw: ergotropy,
            ergotropy_diag_units_hw: ergotropy,
            mutual_info_nats: None,
        },
        mean_n_sigma,
        entropy_sigma,
        ergotropy_sigma,
    })
}
