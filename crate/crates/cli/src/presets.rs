//! Named experiments.

use std::path::PathBuf;

use serde_json::json;

use ioncycle::{CycleConfig, Direction, InitialState};

use crate::spec::{ExperimentSpec, GridKind, SweepAxis, SweepSpec, TomographySpec};
use crate::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig1c", "forward engine, p_D^A = 0.32, resonant transfer, 8 cycles"),
    ("fig2a", "forward engine, p_D^A = 0.5, 8 cycles from a thermal load"),
    ("fig2a_reverse", "refrigerator, p_D^A = 0.5, 8 cycles from a hot thermal load"),
    ("fig2b", "sweep of p_D^A over 0.15, 0.32, 0.5"),
    ("fig2c", "resonant versus adiabatic-passage transfer at p_D^A = 0.32"),
    ("fig3", "forward engine, p_D^A = 0.5, 8 cycles, with emulated load tomography"),
    ("refrigerator15", "refrigerator, p_D^A = 0.5, 15 cycles"),
    ("ideal_oracle", "lossless cycle with perfect transfers, p_D^A = 0.25, 10 cycles"),
];

/// Hot start for refrigerator runs; the larger space keeps the thermal tail
/// above the truncation guard.
const HOT_NBAR: f64 = 3.0;
const HOT_FOCK_DIM: usize = 60;

fn base(name: &str, cycle: CycleConfig) -> ExperimentSpec {
    ExperimentSpec {
        name: name.to_string(),
        seed: 0,
        outputs: PathBuf::from("out").join(name),
        emit_snapshots: true,
        cycle,
        tomography: None,
        sweep: None,
    }
}

fn reverse(n_cycles: usize) -> CycleConfig {
    CycleConfig {
        p_d_a: 0.5,
        direction: Direction::Reverse,
        n_cycles,
        initial: InitialState::Thermal { nbar: HOT_NBAR },
        fock_dim: HOT_FOCK_DIM,
        ..CycleConfig::default()
    }
}

pub fn preset(name: &str) -> Result<ExperimentSpec, CliError> {
    let spec = match name {
        "fig1c" => base(name, CycleConfig::default()),
        "fig2a" => base(name, CycleConfig { p_d_a: 0.5, ..CycleConfig::default() }),
        "fig2a_reverse" => base(name, reverse(8)),
        "fig2b" => ExperimentSpec {
            sweep: Some(SweepSpec {
                axes: vec![SweepAxis { field: "p_d_a".into(), values: vec![json!(0.15), json!(0.32), json!(0.5)] }],
            }),
            ..base(name, CycleConfig::default())
        },
        "fig2c" => ExperimentSpec {
            sweep: Some(SweepSpec {
                axes: vec![SweepAxis { field: "protocol".into(), values: vec![json!("resonant"), json!("rap")] }],
            }),
            // adiabatic passage heats about twice as fast; 40 levels overflow by cycle 8
            ..base(name, CycleConfig { fock_dim: 72, ..CycleConfig::default() })
        },
        "fig3" => ExperimentSpec {
            tomography: Some(TomographySpec { grid: GridKind::Reference, ..TomographySpec::default() }),
            ..base(name, CycleConfig { p_d_a: 0.5, ..CycleConfig::default() })
        },
        "refrigerator15" => base(name, reverse(15)),
        "ideal_oracle" => ExperimentSpec {
            emit_snapshots: false,
            ..base(name, CycleConfig::lossless(0.25, 10))
        },
        other => {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(CliError::Validation(format!("unknown preset '{other}' (known: {})", known.join(", "))));
        }
    };
    Ok(spec)
}
