//! Truncated engine ⊗ load linear algebra.
//!
//! Conventions used everywhere in this crate:
//! - engine basis is `|↑⟩ = 0`, `|↓⟩ = 1`
//! - joint operators are Kronecker products with the engine factor leftmost,
//!   so the joint index of `|s, n⟩` is `s * fock_dim + n`
//! - the load is truncated to `fock_dim` Fock levels `0..fock_dim`

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENGINE_DIM: usize = 2;
pub const UP: usize = 0;
pub const DOWN: usize = 1;

/// Default Fock truncation.
pub const DEFAULT_FOCK_DIM: usize = 40;

const HERMITIAN_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub fock_dim: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self { fock_dim: DEFAULT_FOCK_DIM }
    }
}

impl SpaceConfig {
    pub fn new(fock_dim: usize) -> Result<Self> {
        if fock_dim < 2 {
            return Err(Error::InvalidConfig(format!("fock_dim must be >= 2, got {fock_dim}")));
        }
        Ok(Self { fock_dim })
    }

    pub fn joint_dim(&self) -> usize {
        ENGINE_DIM * self.fock_dim
    }
}

/// Which tensor factor an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorTag {
    Engine,
    Load,
    Joint,
}

impl FactorTag {
    fn expected_dim(self, fock_dim: usize) -> usize {
        match self {
            FactorTag::Engine => ENGINE_DIM,
            FactorTag::Load => fock_dim,
            FactorTag::Joint => ENGINE_DIM * fock_dim,
        }
    }
}

/// Square complex matrix tagged with the factor it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    tag: FactorTag,
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(tag: FactorTag, mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::InvalidArgument(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let dim = mat.nrows();
        let ok = match tag {
            FactorTag::Engine => dim == ENGINE_DIM,
            FactorTag::Load => dim >= 2,
            FactorTag::Joint => dim >= 2 * ENGINE_DIM && dim.is_multiple_of(ENGINE_DIM),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("dimension {dim} inconsistent with {tag:?} tag")));
        }
        Ok(Self { tag, mat })
    }

    pub(crate) fn from_parts(tag: FactorTag, mat: DMatrix<C64>) -> Self {
        debug_assert!(mat.is_square());
        Self { tag, mat }
    }

    pub fn identity(tag: FactorTag, fock_dim: usize) -> Self {
        let d = tag.expected_dim(fock_dim);
        Self::from_parts(tag, DMatrix::identity(d, d))
    }

    pub fn zeros(tag: FactorTag, fock_dim: usize) -> Self {
        let d = tag.expected_dim(fock_dim);
        Self::from_parts(tag, DMatrix::zeros(d, d))
    }

    /// Diagonal real operator.
    pub fn diagonal(tag: FactorTag, diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mat = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) });
        Self::new(tag, mat)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn tag(&self) -> FactorTag {
        self.tag
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    /// Fock dimension implied by the tag, when it can be inferred.
    pub fn fock_dim(&self) -> Option<usize> {
        match self.tag {
            FactorTag::Engine => None,
            FactorTag::Load => Some(self.dim()),
            FactorTag::Joint => Some(self.dim() / ENGINE_DIM),
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_parts(self.tag, self.mat.adjoint())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_parts(self.tag, &self.mat * factor)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.tag != other.tag || self.dim() != other.dim() {
            return Err(Error::InvalidArgument(format!(
                "operator mismatch: {:?}({}) vs {:?}({})",
                self.tag,
                self.dim(),
                other.tag,
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(self.tag, &self.mat * &other.mat))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(self.tag, &self.mat + &other.mat))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(self.tag, &self.mat - &other.mat))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Largest entrywise modulus of `A - A†`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest entrywise modulus of `A - B`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Lift an engine- or load-tagged operator to the joint space.
    pub fn lift(&self, fock_dim: usize) -> Result<Self> {
        match self.tag {
            FactorTag::Engine => tensor(self, &Operator::identity(FactorTag::Load, fock_dim)),
            FactorTag::Load => {
                if self.dim() != fock_dim {
                    return Err(Error::InvalidArgument(format!(
                        "load operator has dim {} but fock_dim is {fock_dim}",
                        self.dim()
                    )));
                }
                tensor(&Operator::identity(FactorTag::Engine, fock_dim), self)
            }
            FactorTag::Joint => Ok(self.clone()),
        }
    }
}

/// Truncated annihilation operator, `a[m, m+1] = √(m+1)`.
pub fn destroy(fock_dim: usize) -> Result<Operator> {
    if fock_dim < 2 {
        return Err(Error::InvalidConfig(format!("fock_dim must be >= 2, got {fock_dim}")));
    }
    let mut mat = DMatrix::zeros(fock_dim, fock_dim);
    for m in 0..fock_dim - 1 {
        mat[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    Ok(Operator::from_parts(FactorTag::Load, mat))
}

pub fn create(fock_dim: usize) -> Result<Operator> {
    Ok(destroy(fock_dim)?.adjoint())
}

/// Phonon number operator `diag(0, 1, ..., fock_dim-1)`.
pub fn number(fock_dim: usize) -> Result<Operator> {
    if fock_dim < 2 {
        return Err(Error::InvalidConfig(format!("fock_dim must be >= 2, got {fock_dim}")));
    }
    let diag: Vec<f64> = (0..fock_dim).map(|n| n as f64).collect();
    Operator::diagonal(FactorTag::Load, &diag)
}

/// Unit-amplitude lowering shift `Σ |n-1⟩⟨n|`, with no √n weighting.
///
/// Used for n-independent (perfect) sideband transfers.
pub fn shift_down(fock_dim: usize) -> Result<Operator> {
    if fock_dim < 2 {
        return Err(Error::InvalidConfig(format!("fock_dim must be >= 2, got {fock_dim}")));
    }
    let mut mat = DMatrix::zeros(fock_dim, fock_dim);
    for m in 0..fock_dim - 1 {
        mat[(m, m + 1)] = C64::new(1.0, 0.0);
    }
    Ok(Operator::from_parts(FactorTag::Load, mat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PauliKind {
    Z,
    Plus,
    Minus,
    X,
    Y,
}

/// Engine Pauli operators in the `(|↑⟩, |↓⟩)` basis.
pub fn pauli(kind: PauliKind) -> Operator {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let m = match kind {
        PauliKind::Z => [one, z, z, -one],
        PauliKind::Plus => [z, one, z, z],
        PauliKind::Minus => [z, z, one, z],
        PauliKind::X => [z, one, one, z],
        PauliKind::Y => [z, -i, i, z],
    };
    Operator::from_parts(FactorTag::Engine, DMatrix::from_row_slice(2, 2, &m))
}

/// Kronecker product with the engine factor leftmost.
pub fn tensor(engine_op: &Operator, load_op: &Operator) -> Result<Operator> {
    if engine_op.tag != FactorTag::Engine || load_op.tag != FactorTag::Load {
        return Err(Error::InvalidArgument(format!(
            "tensor expects (engine, load) operators, got ({:?}, {:?})",
            engine_op.tag, load_op.tag
        )));
    }
    Ok(Operator::from_parts(FactorTag::Joint, engine_op.mat.kronecker(&load_op.mat)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsystem {
    Engine,
    Load,
}

/// Positive, Hermitian, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
    trace_tolerance: f64,
}

impl DensityMatrix {
    pub const DEFAULT_TRACE_TOLERANCE: f64 = 1e-6;

    /// Validates hermiticity, unit trace and numerical positivity.
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerance(op, Self::DEFAULT_TRACE_TOLERANCE)
    }

    pub fn with_tolerance(op: Operator, trace_tolerance: f64) -> Result<Self> {
        let rho = Self { op, trace_tolerance };
        rho.check_cheap()?;
        let lowest = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if lowest < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {lowest:.3e}")));
        }
        Ok(rho)
    }

    /// Skips the eigenvalue check; hermiticity and trace are still verified.
    pub(crate) fn from_evolved(op: Operator, trace_tolerance: f64) -> Result<Self> {
        let rho = Self { op, trace_tolerance };
        rho.check_cheap()?;
        Ok(rho)
    }

    pub(crate) fn from_parts_unchecked(op: Operator) -> Self {
        Self { op, trace_tolerance: Self::DEFAULT_TRACE_TOLERANCE }
    }

    fn check_cheap(&self) -> Result<()> {
        let herm = self.op.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not hermitian (max |ρ-ρ†| = {herm:.3e})")));
        }
        let tr = self.op.trace();
        if (tr.re - 1.0).abs() > self.trace_tolerance || tr.im.abs() > self.trace_tolerance {
            return Err(Error::InvalidState(format!("trace {tr} deviates from 1")));
        }
        Ok(())
    }

    /// `|ψ⟩⟨ψ|` for a normalised ket.
    pub fn pure(tag: FactorTag, ket: &[C64]) -> Result<Self> {
        let norm: f64 = ket.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("ket norm² = {norm}")));
        }
        let d = ket.len();
        let mat = DMatrix::from_fn(d, d, |i, j| ket[i] * ket[j].conj());
        Self::new(Operator::new(tag, mat)?)
    }

    /// Diagonal state from probabilities (must be non-negative and sum to 1).
    pub fn from_probabilities(tag: FactorTag, probs: &[f64]) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| **p < -1e-12 || !p.is_finite()) {
            return Err(Error::InvalidState(format!("negative or non-finite probability {p}")));
        }
        Self::new(Operator::diagonal(tag, probs)?)
    }

    /// `|s, n⟩⟨s, n|` on the joint space.
    pub fn joint_basis(engine: usize, n: usize, fock_dim: usize) -> Result<Self> {
        if engine >= ENGINE_DIM || n >= fock_dim {
            return Err(Error::InvalidArgument(format!("basis state |{engine},{n}⟩ outside space")));
        }
        let d = ENGINE_DIM * fock_dim;
        let mut mat = DMatrix::zeros(d, d);
        mat[(engine * fock_dim + n, engine * fock_dim + n)] = C64::new(1.0, 0.0);
        Ok(Self::from_parts_unchecked(Operator::from_parts(FactorTag::Joint, mat)))
    }

    /// Product state `ρ_E ⊗ ρ_L`.
    pub fn product(engine: &DensityMatrix, load: &DensityMatrix) -> Result<Self> {
        let op = tensor(&engine.op, &load.op)?;
        Ok(Self::from_parts_unchecked(op))
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.op.mat
    }

    pub fn tag(&self) -> FactorTag {
        self.op.tag
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace_tolerance(&self) -> f64 {
        self.trace_tolerance
    }

    pub fn fock_dim(&self) -> Option<usize> {
        self.op.fock_dim()
    }

    /// Real diagonal of ρ.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.mat[(i, i)].re).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.op.mat.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Probability of the excited engine level `|↑⟩`.
    pub fn excited_population(&self) -> Result<f64> {
        match self.tag() {
            FactorTag::Engine => Ok(self.op.mat[(UP, UP)].re),
            FactorTag::Joint => {
                let f = self.dim() / ENGINE_DIM;
                Ok((0..f).map(|n| self.op.mat[(n, n)].re).sum())
            }
            FactorTag::Load => Err(Error::InvalidArgument("load state has no engine population".into())),
        }
    }

    /// Load occupation probabilities `p_n` (load or joint states).
    pub fn load_populations(&self) -> Result<Vec<f64>> {
        match self.tag() {
            FactorTag::Load => Ok(self.populations()),
            FactorTag::Joint => Ok(partial_trace(self, Subsystem::Load)?.populations()),
            FactorTag::Engine => Err(Error::InvalidArgument("engine state has no load populations".into())),
        }
    }

    pub fn mean_phonon(&self) -> Result<f64> {
        Ok(self.load_populations()?.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
    }
}

/// Reduced state on the kept subsystem of a joint state.
pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem) -> Result<DensityMatrix> {
    if rho.tag() != FactorTag::Joint {
        return Err(Error::InvalidArgument(format!("partial trace needs a joint state, got {:?}", rho.tag())));
    }
    let m = rho.matrix();
    let f = rho.dim() / ENGINE_DIM;
    let op = match keep {
        Subsystem::Load => {
            let mut out = DMatrix::zeros(f, f);
            for e in 0..ENGINE_DIM {
                out += m.view((e * f, e * f), (f, f));
            }
            Operator::from_parts(FactorTag::Load, out)
        }
        Subsystem::Engine => {
            let out = DMatrix::from_fn(ENGINE_DIM, ENGINE_DIM, |a, b| {
                (0..f).map(|n| m[(a * f + n, b * f + n)]).sum::<C64>()
            });
            Operator::from_parts(FactorTag::Engine, out)
        }
    };
    Ok(DensityMatrix { op, trace_tolerance: rho.trace_tolerance })
}

/// Geometric (Bose-Einstein) populations, renormalised over the truncation.
pub fn thermal_populations(nbar: f64, fock_dim: usize) -> Result<Vec<f64>> {
    if nbar < 0.0 || !nbar.is_finite() {
        return Err(Error::InvalidArgument(format!("nbar must be >= 0, got {nbar}")));
    }
    if fock_dim < 2 {
        return Err(Error::InvalidConfig(format!("fock_dim must be >= 2, got {fock_dim}")));
    }
    let ratio = nbar / (1.0 + nbar);
    let mut probs: Vec<f64> = (0..fock_dim).map(|n| ratio.powi(n as i32) / (1.0 + nbar)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

pub fn thermal_state(nbar: f64, fock_dim: usize) -> Result<DensityMatrix> {
    let probs = thermal_populations(nbar, fock_dim)?;
    Ok(DensityMatrix::from_parts_unchecked(Operator::diagonal(FactorTag::Load, &probs)?))
}

/// `tr(ρ·O)`.
pub fn expectation(rho: &DensityMatrix, obs: &Operator) -> Result<C64> {
    if rho.dim() != obs.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: state {} vs observable {}",
            rho.dim(),
            obs.dim()
        )));
    }
    let m = rho.matrix();
    let o = obs.matrix();
    let d = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += m[(i, k)] * o[(k, i)];
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn destroy_smallest_truncation() {
        let a = destroy(2).unwrap();
        assert_eq!(a.entry(0, 1), c(1.0));
        assert_eq!(a.entry(0, 0), c(0.0));
        assert_eq!(a.entry(1, 0), c(0.0));
        assert_eq!(a.entry(1, 1), c(0.0));
        assert_abs_diff_eq!(destroy(3).unwrap().entry(1, 2).re, 2f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(destroy(1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn number_from_ladder() {
        let a = destroy(6).unwrap();
        let n = a.adjoint().mul(&a).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(n.entry(k, k).re, k as f64, epsilon = 1e-14);
        }
        assert!(n.max_abs_diff(&number(6).unwrap()) < 1e-14);
    }

    #[test]
    fn ladder_commutator_below_top_level() {
        let f = 8;
        let a = destroy(f).unwrap();
        let comm = a.commutator(&a.adjoint()).unwrap();
        for i in 0..f {
            for j in 0..f {
                let expected = if i == j && i < f - 1 { 1.0 } else { 0.0 };
                if i == f - 1 && j == f - 1 {
                    // truncation artefact at the top level
                    assert_abs_diff_eq!(comm.entry(i, j).re, -((f - 1) as f64), epsilon = 1e-12);
                } else {
                    assert_abs_diff_eq!(comm.entry(i, j).norm(), expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn pauli_identities() {
        let z = pauli(PauliKind::Z);
        assert_eq!(z.entry(0, 0), c(1.0));
        assert_eq!(z.entry(1, 1), c(-1.0));
        let pm = pauli(PauliKind::Plus).mul(&pauli(PauliKind::Minus)).unwrap();
        assert_eq!(pm.matrix(), &DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]));
        let x = pauli(PauliKind::X);
        let x2 = x.mul(&x).unwrap();
        assert!(x2.max_abs_diff(&Operator::identity(FactorTag::Engine, 2)) < 1e-15);
        let y = pauli(PauliKind::Y);
        assert!(y.mul(&y).unwrap().max_abs_diff(&Operator::identity(FactorTag::Engine, 2)) < 1e-15);
    }

    #[test]
    fn tensor_conventions() {
        let f = 4;
        let id = tensor(&Operator::identity(FactorTag::Engine, f), &Operator::identity(FactorTag::Load, f)).unwrap();
        assert!(id.max_abs_diff(&Operator::identity(FactorTag::Joint, f)) < 1e-15);

        let zl = pauli(PauliKind::Z).lift(f).unwrap();
        let nl = number(f).unwrap().lift(f).unwrap();
        assert!(zl.commutator(&nl).unwrap().matrix().iter().all(|v| v.norm() < 1e-15));

        // σ⁺ ⊗ a maps |↓,1⟩ to |↑,0⟩
        let jc = tensor(&pauli(PauliKind::Plus), &destroy(f).unwrap()).unwrap();
        let src = DOWN * f + 1;
        let dst = UP * f;
        assert_abs_diff_eq!(jc.entry(dst, src).re, 1.0, epsilon = 1e-15);
        assert_eq!(jc.matrix().column(src).iter().filter(|v| v.norm() > 0.0).count(), 1);

        assert!(tensor(&destroy(f).unwrap(), &pauli(PauliKind::Z)).is_err());
    }

    #[test]
    fn partial_trace_of_product() {
        let f = 5;
        let re = DensityMatrix::pure(FactorTag::Engine, &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let rl = thermal_state(0.7, f).unwrap();
        let joint = DensityMatrix::product(&re, &rl).unwrap();
        let l = partial_trace(&joint, Subsystem::Load).unwrap();
        let e = partial_trace(&joint, Subsystem::Engine).unwrap();
        assert!(l.op().max_abs_diff(rl.op()) < 1e-12);
        assert!(e.op().max_abs_diff(re.op()) < 1e-12);
        assert!(partial_trace(&rl, Subsystem::Load).is_err());
    }

    #[test]
    fn partial_trace_of_entangled_state() {
        // ¼(|↓,2⟩ + √3|↑,0⟩)(h.c.)
        let f = 4;
        let mut ket = vec![C64::new(0.0, 0.0); 2 * f];
        ket[DOWN * f + 2] = c(0.5);
        ket[UP * f] = c(3f64.sqrt() / 2.0);
        let rho = DensityMatrix::pure(FactorTag::Joint, &ket).unwrap();
        let l = partial_trace(&rho, Subsystem::Load).unwrap();
        assert_abs_diff_eq!(l.matrix()[(0, 0)].re, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(l.matrix()[(2, 2)].re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(l.matrix()[(0, 2)].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.op().trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn thermal_state_properties() {
        let g = thermal_state(0.0, 10).unwrap();
        assert_eq!(g.populations()[0], 1.0);
        assert!(g.populations()[1..].iter().all(|p| *p == 0.0));

        // untruncated p₀ = 1/(1+n̄)
        assert_abs_diff_eq!(1.0 / 2.2, 0.454_545_454_545, epsilon = 1e-12);
        let t = thermal_state(1.2, 40).unwrap();
        assert_abs_diff_eq!(t.populations()[0], 1.0 / 2.2, epsilon = 1e-6);
        assert_abs_diff_eq!(t.mean_phonon().unwrap(), 1.2, epsilon = 1e-6);
        let p = t.populations();
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        assert!(thermal_state(-0.1, 10).is_err());
    }

    #[test]
    fn expectation_values() {
        let f = 40;
        let n = number(f).unwrap();
        let vac = thermal_state(0.0, f).unwrap();
        assert_abs_diff_eq!(expectation(&vac, &n).unwrap().re, 0.0);
        let t = thermal_state(1.2, f).unwrap();
        let e = expectation(&t, &n).unwrap();
        assert_abs_diff_eq!(e.re, 1.2, epsilon = 1e-6);
        assert!(e.im.abs() < 1e-9);
        assert_abs_diff_eq!(expectation(&t, &Operator::identity(FactorTag::Load, f)).unwrap().re, 1.0, epsilon = 1e-12);
        assert!(expectation(&t, &number(5).unwrap()).is_err());
    }

    #[test]
    fn density_matrix_rejects_invalid() {
        let bad = Operator::diagonal(FactorTag::Load, &[0.7, 0.7]).unwrap();
        assert!(DensityMatrix::new(bad).is_err());
        let neg = Operator::diagonal(FactorTag::Load, &[1.5, -0.5]).unwrap();
        assert!(DensityMatrix::new(neg).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = c(0.5);
        m[(1, 1)] = c(0.5);
        m[(0, 1)] = C64::new(0.1, 0.1);
        m[(1, 0)] = C64::new(0.1, 0.1);
        assert!(DensityMatrix::new(Operator::new(FactorTag::Load, m).unwrap()).is_err());
    }
}
