//! Thermodynamic and information functionals of load and joint states.
//!
//! Energies are in units of ħω (the zero-point offset cancels in every
//! difference computed here); entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::cycle::{Direction, SimulationTrace};
use crate::error::{Error, Result};
use crate::hilbert::{partial_trace, DensityMatrix, FactorTag, Subsystem};
use crate::ideal::PhononDistribution;
use crate::C64;

const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub mean_n: f64,
    pub entropy_nats: f64,
    pub ergotropy_units_hw: f64,
    pub ergotropy_diag_units_hw: f64,
    /// Only defined for joint states.
    pub mutual_info_nats: Option<f64>,
}

/// Passive energy of a probability vector: sorted descending against
/// ascending levels. The stable sort leaves ties in input order, which does
/// not change the sum.
fn passive_energy(weights: &[f64]) -> f64 {
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

fn mean_level(weights: &[f64]) -> f64 {
    weights.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

fn checked_spectrum(rho: &DensityMatrix) -> Result<Vec<f64>> {
    let ev = rho.eigenvalues();
    if let Some(lowest) = ev.first() {
        if *lowest < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("state not positive semidefinite (eigenvalue {lowest:.3e})")));
        }
    }
    Ok(ev)
}

/// `tr[H_L ρ] − tr[H_L ρ̃]` with ρ̃ the passive state sharing ρ's spectrum.
pub fn ergotropy(rho_l: &DensityMatrix) -> Result<f64> {
    if rho_l.tag() != FactorTag::Load {
        return Err(Error::InvalidArgument(format!("ergotropy expects a load state, got {:?}", rho_l.tag())));
    }
    let populations = rho_l.populations();
    // the spectrum of a diagonal state is its diagonal, exactly
    let m = rho_l.matrix();
    let diagonal = (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| i == j || m[(i, j)] == C64::new(0.0, 0.0)));
    let spectrum = if diagonal {
        if let Some(p) = populations.iter().find(|p| **p < -POSITIVITY_TOL) {
            return Err(Error::InvalidState(format!("state not positive semidefinite (population {p:.3e})")));
        }
        populations.clone()
    } else {
        checked_spectrum(rho_l)?
    };
    let energy = mean_level(&populations);
    Ok((energy - passive_energy(&spectrum)).max(0.0))
}

/// Ergotropy from occupation probabilities alone (coherences ignored).
pub fn ergotropy_diagonal(p: &PhononDistribution) -> Result<f64> {
    check_probabilities(p.probs())?;
    Ok((mean_level(p.probs()) - passive_energy(p.probs())).max(0.0))
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| **v < -1e-9 || !v.is_finite()) {
        return Err(Error::InvalidDistribution(format!("negative probability {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn shannon(weights: impl IntoIterator<Item = f64>) -> f64 {
    weights.into_iter().filter(|w| *w > 0.0).map(|w| -w * w.ln()).sum::<f64>().max(0.0)
}

/// `−tr ρ ln ρ` in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(shannon(checked_spectrum(rho)?))
}

/// `−Σ p ln p` of the occupation probabilities.
pub fn diagonal_entropy(p: &PhononDistribution) -> f64 {
    shannon(p.probs().iter().copied())
}

/// `S_E + S_L − S_{E+L}` for a joint state.
pub fn mutual_information(rho_joint: &DensityMatrix) -> Result<f64> {
    if rho_joint.tag() != FactorTag::Joint {
        return Err(Error::InvalidArgument("mutual information needs a joint state".into()));
    }
    let s_e = von_neumann_entropy(&partial_trace(rho_joint, Subsystem::Engine)?)?;
    let s_l = von_neumann_entropy(&partial_trace(rho_joint, Subsystem::Load)?)?;
    let s_j = von_neumann_entropy(rho_joint)?;
    Ok(s_e + s_l - s_j)
}

/// All load functionals of a load or joint state.
pub fn thermo_report(rho: &DensityMatrix) -> Result<ThermoReport> {
    let (load, mi) = match rho.tag() {
        FactorTag::Joint => (partial_trace(rho, Subsystem::Load)?, Some(mutual_information(rho)?)),
        FactorTag::Load => (rho.clone(), None),
        FactorTag::Engine => return Err(Error::InvalidArgument("thermo report needs a load or joint state".into())),
    };
    let diag = PhononDistribution::normalized(load.populations())?;
    Ok(ThermoReport {
        mean_n: mean_level(diag.probs()),
        entropy_nats: von_neumann_entropy(&load)?,
        ergotropy_units_hw: ergotropy(&load)?,
        ergotropy_diag_units_hw: ergotropy_diagonal(&diag)?,
        mutual_info_nats: mi,
    })
}

/// Net phonon gain per cycle divided by the mean photon input per cycle,
/// `p_D` after each of the two sideband strokes.
pub fn quanta_efficiency(trace: &SimulationTrace) -> Result<f64> {
    if trace.config.direction != Direction::Forward {
        return Err(Error::InvalidArgument("quanta efficiency is defined for forward cycles".into()));
    }
    let cycles = trace.boundaries();
    if cycles.is_empty() {
        return Err(Error::InvalidArgument("trace holds no complete cycle".into()));
    }
    let gain = trace.delta_n_per_cycle()?;
    let input = cycles.iter().map(|c| c.b.p_d + c.d.p_d).sum::<f64>() / cycles.len() as f64;
    if input <= 0.0 {
        return Ok(0.0);
    }
    Ok(gain / input)
}
