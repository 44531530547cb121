//! Simulation and analysis of a two-level engine coupled to a harmonic
//! oscillator load through four-stroke engine and refrigerator cycles.
//!
//! Module map:
//! - [`hilbert`]: truncated engine ⊗ load operators and states
//! - [`dynamics`]: Lindblad master-equation integration
//! - [`cycle`]: stroke scheduler for forward and reverse cycles
//! - [`thermo`]: ergotropy, entropy, mutual information, quanta efficiency
//! - [`ideal`]: closed-form lossless cycle used as an oracle
//! - [`tomography`]: blue-sideband scan emulation and constrained fitting

pub mod cycle;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod ideal;
pub mod thermo;
pub mod tomography;

pub use cycle::{
    run_cycles, CalibrationParams, CycleConfig, Direction, InitialState, Protocol,
    SidebandKind, SimulationTrace,
};
pub use dynamics::{evolve, DissipatorSpec, EvolutionResult, HamiltonianSchedule};
pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, FactorTag, Operator, SpaceConfig};
pub use ideal::PhononDistribution;
pub use thermo::ThermoReport;
pub use tomography::{FitResult, RabiScan};

pub use num_complex::Complex64 as C64;

/// Crate version recorded in run artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
