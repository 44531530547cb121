//! Markovian master-equation integration for the joint engine ⊗ load state.
//!
//! All Hamiltonians are in angular-frequency units (`H/ħ`, rad/s) and are
//! expressed in the interaction picture of the bare engine and load
//! Hamiltonians, so optical and trap frequencies never appear explicitly.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    create, destroy, number, pauli, DensityMatrix, FactorTag, Operator, PauliKind, ENGINE_DIM,
};

/// Largest allowed trace deviation at the end of an evolution.
pub const TRACE_TOLERANCE: f64 = 1e-6;
/// Largest allowed population in the two highest Fock levels.
pub const TRUNCATION_GUARD: f64 = 1e-6;

/// One dissipative channel with its rate in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DissipatorSpec {
    /// `γ (n ρ n − ½{n², ρ})`
    LoadDephasing { rate: f64 },
    /// `γ n_m D[a†] + γ (1 + n_m) D[a]`
    LoadHeating { rate: f64, n_m: f64 },
    /// `γ D[σ⁻]`
    EngineDecay { rate: f64 },
}

impl DissipatorSpec {
    pub fn rate(&self) -> f64 {
        match *self {
            DissipatorSpec::LoadDephasing { rate }
            | DissipatorSpec::LoadHeating { rate, .. }
            | DissipatorSpec::EngineDecay { rate } => rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = self.rate();
        if rate < 0.0 || !rate.is_finite() {
            return Err(Error::InvalidConfig(format!("dissipator rate must be finite and >= 0, got {rate}")));
        }
        if let DissipatorSpec::LoadHeating { n_m, .. } = *self {
            if n_m < 0.0 || !n_m.is_finite() {
                return Err(Error::InvalidConfig(format!("heating target occupation must be >= 0, got {n_m}")));
            }
        }
        Ok(())
    }

    /// Jump operators on the joint space paired with their rates.
    fn jumps(&self, fock_dim: usize) -> Result<Vec<(f64, Operator)>> {
        self.validate()?;
        Ok(match *self {
            DissipatorSpec::LoadDephasing { rate } => vec![(rate, number(fock_dim)?.lift(fock_dim)?)],
            DissipatorSpec::LoadHeating { rate, n_m } => vec![
                (rate * n_m, create(fock_dim)?.lift(fock_dim)?),
                (rate * (1.0 + n_m), destroy(fock_dim)?.lift(fock_dim)?),
            ],
            DissipatorSpec::EngineDecay { rate } => vec![(rate, pauli(PauliKind::Minus).lift(fock_dim)?)],
        })
    }
}

/// Real, time-dependent scalar multiplying one Hamiltonian term.
#[derive(Clone)]
pub struct Coefficient(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Self(Arc::new(move |_| value))
    }

    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Coefficient(..)")
    }
}

/// `H(t) = Σ_k c_k(t) H_k` over `[0, duration]`.
#[derive(Debug, Clone)]
pub struct HamiltonianSchedule {
    terms: Vec<(Operator, Coefficient)>,
    duration: f64,
}

impl HamiltonianSchedule {
    pub fn new(duration: f64) -> Result<Self> {
        if duration < 0.0 || !duration.is_finite() {
            return Err(Error::InvalidArgument(format!("duration must be finite and >= 0, got {duration}")));
        }
        Ok(Self { terms: Vec::new(), duration })
    }

    /// Adds a joint-space term. Coefficients are sampled across the window to
    /// reject non-finite values early.
    pub fn with_term(mut self, op: Operator, coeff: Coefficient) -> Result<Self> {
        if op.tag() != FactorTag::Joint {
            return Err(Error::InvalidArgument(format!("hamiltonian terms must be joint operators, got {:?}", op.tag())));
        }
        if let Some((first, _)) = self.terms.first() {
            if first.dim() != op.dim() {
                return Err(Error::InvalidArgument("hamiltonian terms have different dimensions".into()));
            }
        }
        for t in sample_times(self.duration) {
            if !coeff.at(t).is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient not finite at t={t}")));
            }
        }
        self.terms.push((op, coeff));
        Ok(self)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn terms(&self) -> &[(Operator, Coefficient)] {
        &self.terms
    }

    /// Dense `H(t)`.
    pub fn at(&self, t: f64, dim: usize) -> Operator {
        let mut mat = DMatrix::zeros(dim, dim);
        for (op, c) in &self.terms {
            mat += op.matrix() * C64::new(c.at(t), 0.0);
        }
        Operator::from_parts(FactorTag::Joint, mat)
    }

    /// Upper bound on `‖H(t)‖` (row-sum norm) over the window.
    pub fn frequency_bound(&self) -> f64 {
        sample_times(self.duration)
            .map(|t| {
                self.terms
                    .iter()
                    .map(|(op, c)| c.at(t).abs() * row_sum_norm(op.matrix()))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

fn sample_times(duration: f64) -> impl Iterator<Item = f64> {
    const SAMPLES: usize = 64;
    (0..=SAMPLES).map(move |k| duration * k as f64 / SAMPLES as f64)
}

fn row_sum_norm(m: &DMatrix<C64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Result of one call to [`evolve`].
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub final_state: DensityMatrix,
    pub snapshots: Vec<(f64, DensityMatrix)>,
    pub step_count: usize,
    pub step: f64,
}

/// Sparse triplet storage; the operators here have O(dim) non-zeros.
#[derive(Debug, Clone)]
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.norm() > 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    /// `out += s · (A ρ)`
    fn left_mul_acc(&self, s: C64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let d = rho.nrows();
        let scaled: Vec<(usize, usize, C64)> = self.entries.iter().map(|&(i, k, v)| (i, k, s * v)).collect();
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for (col, oc) in src.chunks_exact(d).zip(dst.chunks_exact_mut(d)) {
            for &(i, k, sv) in &scaled {
                oc[i] += sv * col[k];
            }
        }
    }

    /// `out += s · (Y A†)` column by column.
    fn right_mul_adjoint_acc(&self, s: C64, y: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        for &(b, j, v) in &self.entries {
            let sv = s * v.conj();
            let src = y.column(j);
            let mut dst = out.column_mut(b);
            dst.axpy(sv, &src, C64::new(1.0, 0.0));
        }
    }
}

/// Precomputed Liouvillian pieces for one stroke.
struct Liouvillian {
    dim: usize,
    terms: Vec<(Sparse, Coefficient)>,
    /// `−(i/2) Σ γ L†L`, folded into the effective Hamiltonian.
    anti_hermitian: Sparse,
    jumps: Vec<(f64, Sparse)>,
    scratch: DMatrix<C64>,
}

impl Liouvillian {
    fn new(schedule: &HamiltonianSchedule, dissipators: &[DissipatorSpec], dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(ENGINE_DIM) {
            return Err(Error::InvalidArgument(format!("joint dimension {dim} is not even")));
        }
        let fock_dim = dim / ENGINE_DIM;
        let mut terms = Vec::new();
        for (op, c) in schedule.terms() {
            if op.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "hamiltonian dimension {} does not match state dimension {dim}",
                    op.dim()
                )));
            }
            terms.push((Sparse::from_dense(op.matrix()), c.clone()));
        }
        let mut decay = DMatrix::<C64>::zeros(dim, dim);
        let mut jumps = Vec::new();
        for spec in dissipators {
            for (rate, l) in spec.jumps(fock_dim)? {
                if rate == 0.0 {
                    continue;
                }
                decay += (l.matrix().adjoint() * l.matrix()) * C64::new(rate, 0.0);
                jumps.push((rate, Sparse::from_dense(l.matrix())));
            }
        }
        let anti_hermitian = Sparse::from_dense(&(decay * C64::new(0.0, -0.5)));
        Ok(Self { dim, terms, anti_hermitian, jumps, scratch: DMatrix::zeros(dim, dim) })
    }

    /// Writes `dρ/dt` at time `t` into `out`.
    fn apply(&mut self, t: f64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        // X = H_eff ρ, then −i(X − X†) covers the commutator and anticommutators
        let x = &mut self.scratch;
        x.fill(C64::new(0.0, 0.0));
        for (op, c) in &self.terms {
            let s = c.at(t);
            if s != 0.0 {
                op.left_mul_acc(C64::new(s, 0.0), rho, x);
            }
        }
        self.anti_hermitian.left_mul_acc(C64::new(1.0, 0.0), rho, x);
        let d = self.dim;
        let mi = C64::new(0.0, -1.0);
        for j in 0..d {
            for i in 0..d {
                out[(i, j)] = mi * (x[(i, j)] - x[(j, i)].conj());
            }
        }
        for (rate, l) in &self.jumps {
            x.fill(C64::new(0.0, 0.0));
            l.left_mul_acc(C64::new(1.0, 0.0), rho, x);
            l.right_mul_adjoint_acc(C64::new(*rate, 0.0), x, out);
        }
        // The X − X† form is only the Lindblad generator on Hermitian input;
        // round-off anti-Hermitian parts would grow at rate γn² under
        // dephasing. Keep every stage exactly Hermitian.
        for j in 0..d {
            out[(j, j)].im = 0.0;
            for i in 0..j {
                let v = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
    }

    fn max_decay_rate(&self) -> f64 {
        self.anti_hermitian
            .entries
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|(_, _, v)| 2.0 * v.im.abs())
            .fold(0.0, f64::max)
    }
}

/// `dρ/dt` for a fixed Hamiltonian (rad/s) and dissipator set.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &Operator, dissipators: &[DissipatorSpec]) -> Result<Operator> {
    if rho.tag() != FactorTag::Joint || h.tag() != FactorTag::Joint {
        return Err(Error::InvalidArgument("lindblad_rhs expects joint state and hamiltonian".into()));
    }
    if rho.dim() != h.dim() {
        return Err(Error::InvalidArgument(format!("dimension mismatch: state {} vs H {}", rho.dim(), h.dim())));
    }
    let schedule = HamiltonianSchedule::new(0.0)?.with_term(h.clone(), Coefficient::constant(1.0))?;
    let mut l = Liouvillian::new(&schedule, dissipators, rho.dim())?;
    let mut out = DMatrix::zeros(rho.dim(), rho.dim());
    l.apply(0.0, rho.matrix(), &mut out);
    Ok(Operator::from_parts(FactorTag::Joint, out))
}

/// Default RK4 step for a stroke.
///
/// `min(duration/200, 1/(50·r))` where `r` is the largest of the Hamiltonian
/// frequency bound and the bare dissipator rates, further clamped so that the
/// fastest decay mode stays inside the RK4 stability region.
pub fn default_step(schedule: &HamiltonianSchedule, dissipators: &[DissipatorSpec], dim: usize) -> Result<f64> {
    let duration = schedule.duration();
    if duration <= 0.0 {
        return Err(Error::InvalidArgument("cannot choose a step for a zero-length window".into()));
    }
    let bare = dissipators
        .iter()
        .map(|d| match *d {
            DissipatorSpec::LoadHeating { rate, n_m } => rate * (1.0 + n_m),
            other => other.rate(),
        })
        .fold(0.0, f64::max);
    let max_rate = schedule.frequency_bound().max(bare);
    let mut step = duration / 200.0;
    if max_rate > 0.0 {
        step = step.min(1.0 / (50.0 * max_rate));
    }
    let l = Liouvillian::new(schedule, dissipators, dim)?;
    let stiff = l.max_decay_rate();
    if stiff > 0.0 {
        step = step.min(2.0 / stiff);
    }
    Ok(step)
}

/// Fixed-step RK4 integration of the master equation over `schedule`.
///
/// The step is shrunk slightly so an integer number of steps lands exactly on
/// the end of the window. With `snapshot_every = k > 0` the state is recorded
/// at `t = 0`, every `k` steps, and at the end.
pub fn evolve(
    rho0: &DensityMatrix,
    schedule: &HamiltonianSchedule,
    dissipators: &[DissipatorSpec],
    step: f64,
    snapshot_every: usize,
) -> Result<EvolutionResult> {
    let duration = schedule.duration();
    if rho0.tag() != FactorTag::Joint {
        return Err(Error::InvalidArgument("evolve expects a joint state".into()));
    }
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    if step > duration * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("step {step} exceeds duration {duration}")));
    }
    let dim = rho0.dim();
    let mut liou = Liouvillian::new(schedule, dissipators, dim)?;
    let n_steps = ((duration / step) - 1e-9).ceil().max(1.0) as usize;
    let h = duration / n_steps as f64;

    let mut rho = rho0.matrix().clone();
    let mut k1 = DMatrix::zeros(dim, dim);
    let mut k2 = DMatrix::zeros(dim, dim);
    let mut k3 = DMatrix::zeros(dim, dim);
    let mut k4 = DMatrix::zeros(dim, dim);
    let mut tmp = DMatrix::zeros(dim, dim);
    let half_h = C64::new(h / 2.0, 0.0);
    let full_h = C64::new(h, 0.0);

    let mut snapshots = Vec::new();
    if snapshot_every > 0 {
        snapshots.push((0.0, rho0.clone()));
    }
    for s in 0..n_steps {
        let t = s as f64 * h;
        liou.apply(t, &rho, &mut k1);
        tmp.copy_from(&rho);
        axpy(&mut tmp, half_h, &k1);
        liou.apply(t + h / 2.0, &tmp, &mut k2);
        tmp.copy_from(&rho);
        axpy(&mut tmp, half_h, &k2);
        liou.apply(t + h / 2.0, &tmp, &mut k3);
        tmp.copy_from(&rho);
        axpy(&mut tmp, full_h, &k3);
        liou.apply(t + h, &tmp, &mut k4);

        k2 += &k3;
        k1 += &k4;
        axpy(&mut k1, C64::new(2.0, 0.0), &k2);
        axpy(&mut rho, C64::new(h / 6.0, 0.0), &k1);

        let done = s + 1;
        if snapshot_every > 0 && (done % snapshot_every == 0 || done == n_steps) {
            snapshots.push((done as f64 * h, finish(&rho, rho0.trace_tolerance(), h)?));
        }
    }
    let final_state = finish(&rho, rho0.trace_tolerance(), h)?;
    truncation_guard(&final_state)?;
    Ok(EvolutionResult { final_state, snapshots, step_count: n_steps, step: h })
}

/// `y += a·x` elementwise.
fn axpy(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    y.iter_mut().zip(x.iter()).for_each(|(yi, xi)| *yi += a * xi);
}

fn finish(rho: &DMatrix<C64>, trace_tolerance: f64, step: f64) -> Result<DensityMatrix> {
    let herm = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = herm.trace().re;
    let deviation = (tr - 1.0).abs();
    if !tr.is_finite() || deviation > TRACE_TOLERANCE {
        return Err(Error::IntegrationAccuracy { deviation, step });
    }
    // negative populations only appear once the integrator has gone unstable
    let lowest = (0..herm.nrows()).map(|i| herm[(i, i)].re).fold(f64::INFINITY, f64::min);
    if lowest < -TRACE_TOLERANCE {
        return Err(Error::IntegrationAccuracy { deviation: -lowest, step });
    }
    DensityMatrix::from_evolved(Operator::from_parts(FactorTag::Joint, herm), trace_tolerance)
}

/// Population in the two highest Fock levels of a joint or load state.
pub fn top_level_population(rho: &DensityMatrix) -> Result<f64> {
    let p = rho.load_populations()?;
    let f = p.len();
    Ok(p[f - 2..].iter().sum())
}

pub fn truncation_guard(rho: &DensityMatrix) -> Result<()> {
    let population = top_level_population(rho)?;
    if population > TRUNCATION_GUARD {
        return Err(Error::FockOverflow { population, fock_dim: rho.fock_dim().unwrap_or(0) });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{tensor, thermal_state, DOWN, UP};
    use approx::assert_abs_diff_eq;

    fn joint_zero(f: usize) -> Operator {
        Operator::zeros(FactorTag::Joint, f)
    }

    fn jc(f: usize, g: f64) -> Operator {
        let a = destroy(f).unwrap();
        let t = tensor(&pauli(PauliKind::Plus), &a).unwrap();
        t.add(&t.adjoint()).unwrap().scale(C64::new(g, 0.0))
    }

    #[test]
    fn decay_rhs_on_excited_state() {
        let f = 4;
        let rho = DensityMatrix::joint_basis(UP, 0, f).unwrap();
        let gamma = 3.0;
        let d = lindblad_rhs(&rho, &joint_zero(f), &[DissipatorSpec::EngineDecay { rate: gamma }]).unwrap();
        assert_abs_diff_eq!(d.entry(0, 0).re, -gamma, epsilon = 1e-12);
        assert_abs_diff_eq!(d.entry(DOWN * f, DOWN * f).re, gamma, epsilon = 1e-12);
        assert!(d.trace().norm() < 1e-12);
    }

    #[test]
    fn dephasing_leaves_diagonal_states_fixed() {
        let f = 6;
        let load = thermal_state(0.8, f).unwrap();
        let eng = DensityMatrix::from_probabilities(FactorTag::Engine, &[0.3, 0.7]).unwrap();
        let rho = DensityMatrix::product(&eng, &load).unwrap();
        let d = lindblad_rhs(&rho, &joint_zero(f), &[DissipatorSpec::LoadDephasing { rate: 318.0 }]).unwrap();
        assert!(d.matrix().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let f = 5;
        let mut ket = vec![C64::new(0.0, 0.0); 2 * f];
        ket[UP * f + 1] = C64::new(0.6, 0.0);
        ket[DOWN * f + 3] = C64::new(0.0, 0.8);
        let rho = DensityMatrix::pure(FactorTag::Joint, &ket).unwrap();
        let h = jc(f, 2.0).add(&pauli(PauliKind::Z).lift(f).unwrap()).unwrap();
        let diss = [
            DissipatorSpec::LoadDephasing { rate: 1.3 },
            DissipatorSpec::LoadHeating { rate: 0.4, n_m: 2.0 },
            DissipatorSpec::EngineDecay { rate: 5.0 },
        ];
        let d = lindblad_rhs(&rho, &h, &diss).unwrap();
        assert!(d.trace().norm() < 1e-12);
        assert!(d.hermiticity_error() < 1e-12);
    }

    #[test]
    fn sparse_rhs_matches_dense_formula() {
        let f = 4;
        let load = thermal_state(0.5, f).unwrap();
        let eng = DensityMatrix::pure(FactorTag::Engine, &[C64::new(0.8, 0.0), C64::new(0.0, 0.6)]).unwrap();
        let rho = DensityMatrix::product(&eng, &load).unwrap();
        let h = jc(f, 1.7);
        let diss = [
            DissipatorSpec::LoadDephasing { rate: 0.9 },
            DissipatorSpec::LoadHeating { rate: 0.3, n_m: 1.5 },
            DissipatorSpec::EngineDecay { rate: 2.0 },
        ];
        let got = lindblad_rhs(&rho, &h, &diss).unwrap();

        let r = rho.matrix();
        let i = C64::new(0.0, 1.0);
        let mut want = (h.matrix() * r - r * h.matrix()) * (-i);
        let mut add = |gamma: f64, l: &DMatrix<C64>| {
            let ld = l.adjoint();
            let ll = &ld * l;
            want += (l * r * &ld - (&ll * r + r * &ll) * C64::new(0.5, 0.0)) * C64::new(gamma, 0.0);
        };
        let n = number(f).unwrap().lift(f).unwrap();
        let a = destroy(f).unwrap().lift(f).unwrap();
        let sm = pauli(PauliKind::Minus).lift(f).unwrap();
        add(0.9, n.matrix());
        add(0.3 * 1.5, &a.matrix().adjoint());
        add(0.3 * 2.5, a.matrix());
        add(2.0, sm.matrix());
        let diff = (got.matrix() - want).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let f = 30;
        let rho = DensityMatrix::product(
            &DensityMatrix::from_probabilities(FactorTag::Engine, &[0.25, 0.75]).unwrap(),
            &thermal_state(0.5, f).unwrap(),
        )
        .unwrap();
        let sched = HamiltonianSchedule::new(1e-3).unwrap();
        let out = evolve(&rho, &sched, &[], 1e-5, 0).unwrap();
        assert_eq!(out.step_count, 100);
        assert!(out.final_state.op().max_abs_diff(rho.op()) < 1e-15);
    }

    #[test]
    fn single_excitation_rabi_flop() {
        let f = 4;
        let g = 2.0 * std::f64::consts::PI * 1e3;
        let rho = DensityMatrix::joint_basis(UP, 0, f).unwrap();
        let sched = HamiltonianSchedule::new(0.4e-3)
            .unwrap()
            .with_term(jc(f, 1.0), Coefficient::constant(g))
            .unwrap();
        let out = evolve(&rho, &sched, &[], 1e-7, 400).unwrap();
        for (t, s) in &out.snapshots {
            let p = s.matrix()[(0, 0)].re;
            assert_abs_diff_eq!(p, (g * t).cos().powi(2), epsilon = 1e-9);
        }
    }

    #[test]
    fn engine_decay_closed_form() {
        let f = 4;
        let rho = DensityMatrix::joint_basis(UP, 1, f).unwrap();
        let sched = HamiltonianSchedule::new(10e-6).unwrap();
        let diss = [DissipatorSpec::EngineDecay { rate: 7.0e5 }];
        let step = default_step(&sched, &diss, rho.dim()).unwrap();
        let out = evolve(&rho, &sched, &diss, step, 0).unwrap();
        let p = out.final_state.excited_population().unwrap();
        assert_abs_diff_eq!(p, (-7.0f64).exp(), epsilon = 1e-9);
        assert_abs_diff_eq!((-7.0f64).exp(), 9.1e-4, epsilon = 1e-5);
        // the load is untouched by an engine-only channel
        let pl = out.final_state.load_populations().unwrap();
        assert_abs_diff_eq!(pl[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        let f = 3;
        let rho = DensityMatrix::joint_basis(DOWN, 0, f).unwrap();
        let sched = HamiltonianSchedule::new(1e-3).unwrap();
        assert!(evolve(&rho, &sched, &[], 0.0, 0).is_err());
        assert!(evolve(&rho, &sched, &[], 2e-3, 0).is_err());
        assert!(evolve(&thermal_state(0.0, f).unwrap(), &sched, &[], 1e-4, 0).is_err());
        let bad = HamiltonianSchedule::new(1e-3).unwrap().with_term(number(f).unwrap(), Coefficient::constant(1.0));
        assert!(bad.is_err());
        let nan = HamiltonianSchedule::new(1e-3).unwrap().with_term(jc(f, 1.0), Coefficient::new(|_| f64::NAN));
        assert!(nan.is_err());
        assert!(DissipatorSpec::EngineDecay { rate: -1.0 }.validate().is_err());
        assert!(DissipatorSpec::LoadHeating { rate: 1.0, n_m: -1.0 }.validate().is_err());
        let mismatch = HamiltonianSchedule::new(1e-3).unwrap().with_term(jc(f + 1, 1.0), Coefficient::constant(1.0)).unwrap();
        assert!(evolve(&rho, &mismatch, &[], 1e-4, 0).is_err());
    }

    #[test]
    fn truncation_guard_trips() {
        let f = 4;
        let rho = DensityMatrix::joint_basis(DOWN, f - 1, f).unwrap();
        assert!(matches!(truncation_guard(&rho), Err(Error::FockOverflow { .. })));
        let sched = HamiltonianSchedule::new(1e-3).unwrap();
        assert!(matches!(evolve(&rho, &sched, &[], 1e-4, 0), Err(Error::FockOverflow { .. })));
    }

    #[test]
    fn runaway_step_reports_accuracy_loss() {
        let f = 3;
        let rho = DensityMatrix::joint_basis(UP, 0, f).unwrap();
        let sched = HamiltonianSchedule::new(1e-3).unwrap();
        // hγ = 100: far outside the RK4 stability region
        let diss = [DissipatorSpec::EngineDecay { rate: 1e6 }];
        let err = evolve(&rho, &sched, &diss, 1e-4, 0).unwrap_err();
        assert!(matches!(err, Error::IntegrationAccuracy { .. }), "{err:?}");
    }
}
