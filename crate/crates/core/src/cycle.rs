//! Four-stroke scheduler for the engine/load pair.
//!
//! Strokes: (I_a) optical pump to `|↓⟩`, (I_b) carrier pulse to `p_D^A`,
//! (II) red-sideband JC exchange, (III) optical pump, (IV) blue-sideband AJC
//! exchange. Forward cycles run I, II, III, IV; reverse cycles run I, IV, III,
//! II. Boundary points are labelled by position: A after I, B after the first
//! sideband stroke, C after the pump, D after the second sideband stroke.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{default_step, evolve, Coefficient, DissipatorSpec, EvolutionResult, HamiltonianSchedule};
use crate::error::{Error, Result};
use crate::hilbert::{
    create, destroy, pauli, shift_down, tensor, thermal_state, DensityMatrix, FactorTag, Operator, PauliKind,
    SpaceConfig, ENGINE_DIM, UP,
};
use crate::thermo::thermo_report;
use crate::C64;

const TWO_PI: f64 = 2.0 * PI;

/// Device calibration. Angular frequencies in rad/s, rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    pub trap_frequency_rad_s: f64,
    pub carrier_rabi_rad_s: f64,
    pub lamb_dicke: f64,
    pub pump_rate_per_s: f64,
    pub pump_duration_s: f64,
    pub dephasing_rate_per_s: f64,
    pub heating_rate_per_s: f64,
    /// Mean occupation the heating bath drives the load towards.
    pub heating_bath_occupation: f64,
    pub residual_engine_decay_per_s: f64,
    pub sideband_duration_s: f64,
    pub rap_half_span_rad_s: f64,
    pub rap_duration_s: f64,
    pub laser_phase_rad: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            trap_frequency_rad_s: TWO_PI * 1.7e6,
            carrier_rabi_rad_s: TWO_PI * 121.7e3,
            lamb_dicke: 0.012,
            pump_rate_per_s: 7.0e5,
            pump_duration_s: 20e-6,
            dephasing_rate_per_s: 318.0,
            heating_rate_per_s: 0.4,
            heating_bath_occupation: 100.0,
            residual_engine_decay_per_s: 0.4,
            sideband_duration_s: 180e-6,
            rap_half_span_rad_s: TWO_PI * 30e3,
            rap_duration_s: 4.0e-3,
            laser_phase_rad: 0.0,
        }
    }
}

impl CalibrationParams {
    /// No ambient dissipation. The pump keeps its rate but runs long enough
    /// that leftover engine population and coherence drop below 1e-7.
    pub fn lossless() -> Self {
        Self {
            dephasing_rate_per_s: 0.0,
            heating_rate_per_s: 0.0,
            residual_engine_decay_per_s: 0.0,
            pump_duration_s: 50e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("trap_frequency_rad_s", self.trap_frequency_rad_s),
            ("carrier_rabi_rad_s", self.carrier_rabi_rad_s),
            ("lamb_dicke", self.lamb_dicke),
            ("pump_rate_per_s", self.pump_rate_per_s),
            ("pump_duration_s", self.pump_duration_s),
            ("dephasing_rate_per_s", self.dephasing_rate_per_s),
            ("heating_rate_per_s", self.heating_rate_per_s),
            ("heating_bath_occupation", self.heating_bath_occupation),
            ("residual_engine_decay_per_s", self.residual_engine_decay_per_s),
            ("sideband_duration_s", self.sideband_duration_s),
            ("rap_half_span_rad_s", self.rap_half_span_rad_s),
            ("rap_duration_s", self.rap_duration_s),
        ];
        for (name, v) in nonneg {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.lamb_dicke >= 1.0 {
            return Err(Error::InvalidConfig(format!("lamb_dicke must be < 1, got {}", self.lamb_dicke)));
        }
        if !self.laser_phase_rad.is_finite() {
            return Err(Error::InvalidConfig("laser_phase_rad must be finite".into()));
        }
        Ok(())
    }

    /// Sideband coupling `g` with `t = π/(ηΩ₀)` the n = 0 π-time.
    pub fn sideband_coupling(&self) -> f64 {
        self.lamb_dicke * self.carrier_rabi_rad_s / 2.0
    }

    pub fn ideal_sideband_duration(&self) -> f64 {
        PI / (self.lamb_dicke * self.carrier_rabi_rad_s)
    }

    /// Dissipators active during every stroke.
    pub fn ambient_dissipators(&self) -> Vec<DissipatorSpec> {
        vec![
            DissipatorSpec::LoadDephasing { rate: self.dephasing_rate_per_s },
            DissipatorSpec::LoadHeating { rate: self.heating_rate_per_s, n_m: self.heating_bath_occupation },
            DissipatorSpec::EngineDecay { rate: self.residual_engine_decay_per_s },
        ]
    }

    fn pump_dissipators(&self) -> Vec<DissipatorSpec> {
        vec![
            DissipatorSpec::LoadDephasing { rate: self.dephasing_rate_per_s },
            DissipatorSpec::LoadHeating { rate: self.heating_rate_per_s, n_m: self.heating_bath_occupation },
            DissipatorSpec::EngineDecay { rate: self.pump_rate_per_s + self.residual_engine_decay_per_s },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Resonant,
    Rap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidebandKind {
    /// `σ⁺a + σ⁻a†`: `|↓,n⟩ ↔ |↑,n−1⟩`.
    RedJc,
    /// `σ⁺a† + σ⁻a`: `|↓,n⟩ ↔ |↑,n+1⟩`.
    BlueAjc,
}

/// Starting state of the pair. Thermal starts put the engine in `|↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    Thermal { nbar: f64 },
    Fock { excited: bool, n: usize },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Thermal { nbar: 1.2 }
    }
}

impl InitialState {
    pub fn prepare(&self, fock_dim: usize) -> Result<DensityMatrix> {
        match *self {
            InitialState::Thermal { nbar } => {
                let engine = DensityMatrix::from_probabilities(FactorTag::Engine, &[0.0, 1.0])?;
                DensityMatrix::product(&engine, &thermal_state(nbar, fock_dim)?)
            }
            InitialState::Fock { excited, n } => {
                let s = if excited { UP } else { 1 - UP };
                DensityMatrix::joint_basis(s, n, fock_dim)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    pub calib: CalibrationParams,
    pub p_d_a: f64,
    pub protocol: Protocol,
    pub direction: Direction,
    pub n_cycles: usize,
    pub initial: InitialState,
    pub fock_dim: usize,
    /// Use `t = π/(ηΩ₀)` for resonant sideband strokes.
    pub ideal_timing: bool,
    /// Replace the ladder operators by unit shifts so every level transfers
    /// at the same rate (the lossless reference cycle).
    pub uniform_coupling: bool,
    /// Dephase the engine after the carrier pulse (laser phase averaged).
    pub randomize_phase: bool,
    /// Observable samples per stroke, in addition to the stroke end.
    pub snapshots_per_stroke: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            calib: CalibrationParams::default(),
            p_d_a: 0.32,
            protocol: Protocol::Resonant,
            direction: Direction::Forward,
            n_cycles: 8,
            initial: InitialState::default(),
            fock_dim: crate::hilbert::DEFAULT_FOCK_DIM,
            ideal_timing: false,
            uniform_coupling: false,
            randomize_phase: false,
            snapshots_per_stroke: 4,
        }
    }
}

impl CycleConfig {
    /// Lossless cycle with perfect transfers, comparable with
    /// [`crate::ideal::ideal_distribution`].
    pub fn lossless(p_d_a: f64, n_cycles: usize) -> Self {
        Self {
            calib: CalibrationParams::lossless(),
            p_d_a,
            n_cycles,
            initial: InitialState::Fock { excited: true, n: 1 },
            fock_dim: 2 * n_cycles + 6,
            ideal_timing: true,
            uniform_coupling: true,
            snapshots_per_stroke: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.calib.validate()?;
        if !(0.0..=1.0).contains(&self.p_d_a) {
            return Err(Error::InvalidConfig(format!("p_d_a must lie in [0, 1], got {}", self.p_d_a)));
        }
        SpaceConfig::new(self.fock_dim)?;
        match self.initial {
            InitialState::Thermal { nbar } if nbar < 0.0 || !nbar.is_finite() => {
                return Err(Error::InvalidConfig(format!("initial nbar must be >= 0, got {nbar}")));
            }
            InitialState::Fock { n, .. } if n >= self.fock_dim => {
                return Err(Error::InvalidConfig(format!("initial Fock level {n} outside fock_dim")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Runs single strokes with a fixed calibration and coupling model.
#[derive(Debug, Clone, Copy)]
pub struct StrokeRunner {
    pub calib: CalibrationParams,
    pub ideal_timing: bool,
    pub uniform_coupling: bool,
    pub snapshots: usize,
}

impl StrokeRunner {
    pub fn new(calib: CalibrationParams) -> Self {
        Self { calib, ideal_timing: false, uniform_coupling: false, snapshots: 0 }
    }

    pub fn from_config(config: &CycleConfig) -> Self {
        Self {
            calib: config.calib,
            ideal_timing: config.ideal_timing,
            uniform_coupling: config.uniform_coupling,
            snapshots: config.snapshots_per_stroke,
        }
    }

    fn run(&self, rho: &DensityMatrix, schedule: HamiltonianSchedule, diss: &[DissipatorSpec]) -> Result<EvolutionResult> {
        if schedule.duration() == 0.0 {
            return Ok(EvolutionResult { final_state: rho.clone(), snapshots: Vec::new(), step_count: 0, step: 0.0 });
        }
        let step = default_step(&schedule, diss, rho.dim())?;
        let n_steps = ((schedule.duration() / step) - 1e-9).ceil().max(1.0) as usize;
        let every = n_steps.checked_div(self.snapshots).map_or(0, |k| k.max(1));
        evolve(rho, &schedule, diss, step, every)
    }

    /// Strokes I_a and III: engine decay at the pump rate, no Hamiltonian.
    pub fn pump(&self, rho: &DensityMatrix) -> Result<EvolutionResult> {
        joint_fock(rho)?;
        let schedule = HamiltonianSchedule::new(self.calib.pump_duration_s)?;
        self.run(rho, schedule, &self.calib.pump_dissipators())
    }

    /// Carrier pulse duration reaching `p_target` in the undamped model.
    pub fn reset_duration(&self, p_target: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p_target) {
            return Err(Error::InvalidArgument(format!("p_target must lie in [0, 1], got {p_target}")));
        }
        if p_target == 0.0 {
            return Ok(0.0);
        }
        let omega = self.calib.carrier_rabi_rad_s;
        if omega <= 0.0 {
            return Err(Error::UnreachableTarget { target: p_target, max_reachable: 0.0 });
        }
        let max_reachable = self.max_reachable_population();
        if p_target > max_reachable {
            return Err(Error::UnreachableTarget { target: p_target, max_reachable });
        }
        Ok(2.0 * p_target.sqrt().asin() / omega)
    }

    /// `max_t e^{−γt} sin²(Ω₀t/2)` over the first half period.
    pub fn max_reachable_population(&self) -> f64 {
        let omega = self.calib.carrier_rabi_rad_s;
        let gamma = self.calib.residual_engine_decay_per_s;
        let t_pi = PI / omega;
        (0..=2000)
            .map(|k| {
                let t = t_pi * k as f64 / 2000.0;
                (-gamma * t).exp() * (omega * t / 2.0).sin().powi(2)
            })
            .fold(0.0, f64::max)
    }

    /// Stroke I_b: carrier pulse `(Ω₀/2)(i e^{iφ} σ⁺ − i e^{−iφ} σ⁻)`, which
    /// takes `|↓⟩` to `sin θ e^{iφ}|↑⟩ + cos θ |↓⟩`.
    pub fn reset_superposition(&self, rho: &DensityMatrix, p_target: f64) -> Result<EvolutionResult> {
        let f = joint_fock(rho)?;
        let p_d = rho.excited_population()?;
        if p_d >= 0.01 {
            return Err(Error::InvalidState(format!("reset expects the engine near |↓⟩, p_D = {p_d:.3e}")));
        }
        let duration = self.reset_duration(p_target)?;
        let phase = C64::from_polar(1.0, self.calib.laser_phase_rad);
        let i = C64::new(0.0, 1.0);
        let engine = pauli(PauliKind::Plus)
            .scale(i * phase)
            .add(&pauli(PauliKind::Minus).scale(-i * phase.conj()))?;
        let h = engine.lift(f)?;
        let schedule = HamiltonianSchedule::new(duration)?
            .with_term(h, Coefficient::constant(self.calib.carrier_rabi_rad_s / 2.0))?;
        self.run(rho, schedule, &self.calib.ambient_dissipators())
    }

    fn coupling(&self, kind: SidebandKind, f: usize) -> Result<Operator> {
        let lower = if self.uniform_coupling { shift_down(f)? } else { destroy(f)? };
        let raise = if self.uniform_coupling { lower.adjoint() } else { create(f)? };
        let (with_plus, with_minus) = match kind {
            SidebandKind::RedJc => (lower, raise),
            SidebandKind::BlueAjc => (raise, lower),
        };
        tensor(&pauli(PauliKind::Plus), &with_plus)?.add(&tensor(&pauli(PauliKind::Minus), &with_minus)?)
    }

    pub fn resonant_duration(&self) -> f64 {
        if self.ideal_timing {
            self.calib.ideal_sideband_duration()
        } else {
            self.calib.sideband_duration_s
        }
    }

    /// Strokes II/IV, resonant protocol: `g (coupling)` for the sideband time.
    pub fn sideband_resonant(&self, rho: &DensityMatrix, kind: SidebandKind) -> Result<EvolutionResult> {
        let f = joint_fock(rho)?;
        let schedule = HamiltonianSchedule::new(self.resonant_duration())?
            .with_term(self.coupling(kind, f)?, Coefficient::constant(self.calib.sideband_coupling()))?;
        self.run(rho, schedule, &self.calib.ambient_dissipators())
    }

    /// Strokes II/IV, RAP protocol: `Δ(t) σz + ηΩ₀ (coupling)` with
    /// `Δ(t) = −Δ₀(1 − 2t/τ)`.
    pub fn sideband_rap(&self, rho: &DensityMatrix, kind: SidebandKind) -> Result<EvolutionResult> {
        let f = joint_fock(rho)?;
        let tau = self.calib.rap_duration_s;
        let span = self.calib.rap_half_span_rad_s;
        let sweep = Coefficient::new(move |t| if tau > 0.0 { -span * (1.0 - 2.0 * t / tau) } else { 0.0 });
        let strength = self.calib.lamb_dicke * self.calib.carrier_rabi_rad_s;
        let schedule = HamiltonianSchedule::new(tau)?
            .with_term(pauli(PauliKind::Z).lift(f)?, sweep)?
            .with_term(self.coupling(kind, f)?, Coefficient::constant(strength))?;
        self.run(rho, schedule, &self.calib.ambient_dissipators())
    }

    pub fn sideband(&self, rho: &DensityMatrix, kind: SidebandKind, protocol: Protocol) -> Result<EvolutionResult> {
        match protocol {
            Protocol::Resonant => self.sideband_resonant(rho, kind),
            Protocol::Rap => self.sideband_rap(rho, kind),
        }
    }
}

fn joint_fock(rho: &DensityMatrix) -> Result<usize> {
    if rho.tag() != FactorTag::Joint {
        return Err(Error::InvalidArgument(format!("strokes act on joint states, got {:?}", rho.tag())));
    }
    Ok(rho.dim() / ENGINE_DIM)
}

pub fn stroke_pump(rho: &DensityMatrix, calib: &CalibrationParams) -> Result<DensityMatrix> {
    Ok(StrokeRunner::new(*calib).pump(rho)?.final_state)
}

pub fn stroke_reset_superposition(rho: &DensityMatrix, p_target: f64, calib: &CalibrationParams) -> Result<DensityMatrix> {
    Ok(StrokeRunner::new(*calib).reset_superposition(rho, p_target)?.final_state)
}

pub fn stroke_sideband_resonant(rho: &DensityMatrix, kind: SidebandKind, calib: &CalibrationParams) -> Result<DensityMatrix> {
    Ok(StrokeRunner::new(*calib).sideband_resonant(rho, kind)?.final_state)
}

pub fn stroke_sideband_rap(rho: &DensityMatrix, kind: SidebandKind, calib: &CalibrationParams) -> Result<DensityMatrix> {
    Ok(StrokeRunner::new(*calib).sideband_rap(rho, kind)?.final_state)
}

/// Zeroes the engine coherences `⟨↑,n|ρ|↓,m⟩`.
pub fn dephase_engine(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let f = joint_fock(rho)?;
    let mut m: DMatrix<C64> = rho.matrix().clone();
    for i in 0..f {
        for j in f..2 * f {
            m[(i, j)] = C64::new(0.0, 0.0);
            m[(j, i)] = C64::new(0.0, 0.0);
        }
    }
    DensityMatrix::with_tolerance(Operator::new(FactorTag::Joint, m)?, rho.trace_tolerance())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrokeLabel {
    Initial,
    Ia,
    Ib,
    II,
    III,
    IV,
}

impl StrokeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrokeLabel::Initial => "init",
            StrokeLabel::Ia => "I_a",
            StrokeLabel::Ib => "I_b",
            StrokeLabel::II => "II",
            StrokeLabel::III => "III",
            StrokeLabel::IV => "IV",
        }
    }
}

impl fmt::Display for StrokeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryLabel {
    A,
    B,
    C,
    D,
}

impl BoundaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryLabel::A => "A",
            BoundaryLabel::B => "B",
            BoundaryLabel::C => "C",
            BoundaryLabel::D => "D",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub label: BoundaryLabel,
    pub time_s: f64,
    pub p_d: f64,
    pub mean_n: f64,
    pub state: DensityMatrix,
}

impl BoundaryPoint {
    fn new(label: BoundaryLabel, time_s: f64, state: DensityMatrix) -> Result<Self> {
        Ok(Self { label, time_s, p_d: state.excited_population()?, mean_n: state.mean_phonon()?, state })
    }
}

#[derive(Debug, Clone)]
pub struct CycleBoundaries {
    /// 1-based cycle number.
    pub cycle: usize,
    pub a: BoundaryPoint,
    pub b: BoundaryPoint,
    pub c: BoundaryPoint,
    pub d: BoundaryPoint,
}

impl CycleBoundaries {
    pub fn points(&self) -> [&BoundaryPoint; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub time_s: f64,
    pub stroke: StrokeLabel,
    /// 0 for the initial state, then 1-based.
    pub cycle_index: usize,
    pub p_d: f64,
    pub mean_n: f64,
    pub entropy_nats: f64,
    pub ergotropy_hw: f64,
    pub mutual_info_nats: f64,
}

impl ObservableSample {
    fn measure(time_s: f64, stroke: StrokeLabel, cycle_index: usize, rho: &DensityMatrix) -> Result<Self> {
        let report = thermo_report(rho)?;
        Ok(Self {
            time_s,
            stroke,
            cycle_index,
            p_d: rho.excited_population()?,
            mean_n: report.mean_n,
            entropy_nats: report.entropy_nats,
            ergotropy_hw: report.ergotropy_units_hw,
            mutual_info_nats: report.mutual_info_nats.unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub config: CycleConfig,
    pub initial_state: DensityMatrix,
    pub cycles: Vec<CycleBoundaries>,
    pub series: Vec<ObservableSample>,
}

impl SimulationTrace {
    pub fn boundaries(&self) -> &[CycleBoundaries] {
        &self.cycles
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.cycles.last().map(|c| &c.d.state).unwrap_or(&self.initial_state)
    }

    /// `⟨n⟩` of the initial state followed by the end of every cycle.
    pub fn cycle_end_means(&self) -> Result<Vec<f64>> {
        let mut out = vec![self.initial_state.mean_phonon()?];
        out.extend(self.cycles.iter().map(|c| c.d.mean_n));
        Ok(out)
    }

    pub fn delta_n_per_cycle(&self) -> Result<f64> {
        if self.cycles.is_empty() {
            return Err(Error::InvalidArgument("trace holds no complete cycle".into()));
        }
        let means = self.cycle_end_means()?;
        Ok((means[means.len() - 1] - means[0]) / self.cycles.len() as f64)
    }
}

struct Recorder<'a> {
    series: &'a mut Vec<ObservableSample>,
    clock: f64,
}

impl Recorder<'_> {
    /// Appends the stroke's snapshots (excluding its start) and advances the
    /// clock. Zero-length strokes record nothing.
    fn stroke(&mut self, res: &EvolutionResult, label: StrokeLabel, cycle: usize, sample: bool) -> Result<f64> {
        let start = self.clock;
        if res.step_count == 0 {
            return Ok(start);
        }
        let end = start + res.step * res.step_count as f64;
        if sample {
            for (t, rho) in res.snapshots.iter().filter(|(t, _)| *t > 0.0) {
                self.series.push(ObservableSample::measure(start + t, label, cycle, rho)?);
            }
            if res.snapshots.is_empty() {
                self.series.push(ObservableSample::measure(end, label, cycle, &res.final_state)?);
            }
        }
        self.clock = end;
        Ok(end)
    }
}

/// Runs `n_cycles` cycles from the configured initial state.
pub fn run_cycles(config: &CycleConfig) -> Result<SimulationTrace> {
    config.validate()?;
    let runner = StrokeRunner::from_config(config);
    let initial_state = config.initial.prepare(config.fock_dim)?;
    let mut series = vec![ObservableSample::measure(0.0, StrokeLabel::Initial, 0, &initial_state)?];
    let sample = config.snapshots_per_stroke > 0;
    let mut rec = Recorder { series: &mut series, clock: 0.0 };
    let mut cycles = Vec::with_capacity(config.n_cycles);
    let mut rho = initial_state.clone();
    let (first, second) = match config.direction {
        Direction::Forward => ((SidebandKind::RedJc, StrokeLabel::II), (SidebandKind::BlueAjc, StrokeLabel::IV)),
        Direction::Reverse => ((SidebandKind::BlueAjc, StrokeLabel::IV), (SidebandKind::RedJc, StrokeLabel::II)),
    };
    for k in 1..=config.n_cycles {
        let res = runner.pump(&rho)?;
        rec.stroke(&res, StrokeLabel::Ia, k, sample)?;
        let res = runner.reset_superposition(&res.final_state, config.p_d_a)?;
        let t_a = rec.stroke(&res, StrokeLabel::Ib, k, sample)?;
        let mut state = res.final_state;
        if config.randomize_phase {
            state = dephase_engine(&state)?;
        }
        let a = BoundaryPoint::new(BoundaryLabel::A, t_a, state)?;

        let res = runner.sideband(&a.state, first.0, config.protocol)?;
        let t_b = rec.stroke(&res, first.1, k, sample)?;
        let b = BoundaryPoint::new(BoundaryLabel::B, t_b, res.final_state)?;

        let res = runner.pump(&b.state)?;
        let t_c = rec.stroke(&res, StrokeLabel::III, k, sample)?;
        let c = BoundaryPoint::new(BoundaryLabel::C, t_c, res.final_state)?;

        let res = runner.sideband(&c.state, second.0, config.protocol)?;
        let t_d = rec.stroke(&res, second.1, k, sample)?;
        let d = BoundaryPoint::new(BoundaryLabel::D, t_d, res.final_state)?;
        rho = d.state.clone();
        cycles.push(CycleBoundaries { cycle: k, a, b, c, d });
    }
    Ok(SimulationTrace { config: config.clone(), initial_state, cycles, series })
}
