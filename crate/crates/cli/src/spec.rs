//! Experiment definition files and override handling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ioncycle::tomography::{
    default_grid, linear_grid, reference_grid, DEFAULT_BOX_HALFWIDTH, DEFAULT_FIT_LEVELS, DEFAULT_GAMMA_BASE,
    DEFAULT_SHOTS,
};
use ioncycle::CycleConfig;

use crate::CliError;

/// Environment variables of the form `IONCYCLE__CYCLE__N_CYCLES=2` set
/// `cycle.n_cycles = 2` on the loaded spec.
pub const ENV_OVERRIDE_PREFIX: &str = "IONCYCLE__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Record intermediate samples within strokes in trace.csv.
    #[serde(default = "default_true")]
    pub emit_snapshots: bool,
    #[serde(default)]
    pub cycle: CycleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// 3 µs spacing up to 102 µs.
    Default,
    /// 200 points up to 600 µs.
    Reference,
    /// `grid_points` points up to `grid_t_max_s`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySpec {
    pub shots: u32,
    pub grid: GridKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_t_max_s: Option<f64>,
    pub gamma_base_per_s: f64,
    pub box_halfwidth: f64,
    pub n_levels: usize,
    /// Falls back to the experiment seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TomographySpec {
    fn default() -> Self {
        Self {
            shots: DEFAULT_SHOTS,
            grid: GridKind::Default,
            grid_points: None,
            grid_t_max_s: None,
            gamma_base_per_s: DEFAULT_GAMMA_BASE,
            box_halfwidth: DEFAULT_BOX_HALFWIDTH,
            n_levels: DEFAULT_FIT_LEVELS,
            seed: None,
        }
    }
}

impl TomographySpec {
    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        match self.grid {
            GridKind::Default => Ok(default_grid()),
            GridKind::Reference => Ok(reference_grid()),
            GridKind::Linear => match (self.grid_points, self.grid_t_max_s) {
                (Some(n), Some(t)) if n >= 2 && t > 0.0 => Ok(linear_grid(n, t)),
                _ => Err(CliError::Validation(
                    "linear grid needs grid_points >= 2 and grid_t_max_s > 0".into(),
                )),
            },
        }
    }
}

/// Cartesian grid over `CycleConfig` fields, addressed by dotted path
/// (`p_d_a`, `calib.dephasing_rate_per_s`, `initial.nbar`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: String,
    pub values: Vec<Value>,
}

impl SweepSpec {
    /// Every grid point as `(field, value)` assignments. No axes, or any
    /// empty axis, gives no points.
    pub fn points(&self) -> Vec<Vec<(String, Value)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((axis.field.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        out
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::Validation("name must be non-empty".into()));
        }
        self.cycle.validate().map_err(|e| CliError::Validation(format!("cycle: {e}")))?;
        if let Some(t) = &self.tomography {
            if t.shots == 0 {
                return Err(CliError::Validation("tomography.shots must be > 0".into()));
            }
            if t.gamma_base_per_s.is_nan() || t.gamma_base_per_s < 0.0 {
                return Err(CliError::Validation("tomography.gamma_base_per_s must be >= 0".into()));
            }
            if t.box_halfwidth.is_nan() || t.box_halfwidth < 0.0 {
                return Err(CliError::Validation("tomography.box_halfwidth must be >= 0".into()));
            }
            if t.n_levels == 0 || t.n_levels > self.cycle.fock_dim {
                return Err(CliError::Validation(format!(
                    "tomography.n_levels must lie in 1..={}",
                    self.cycle.fock_dim
                )));
            }
            let times = t.times()?;
            if times.len() <= t.n_levels {
                return Err(CliError::Validation(format!(
                    "scan grid has {} points, fewer than n_levels + 1",
                    times.len()
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            for point in sweep.points() {
                self.cycle_at(&point)?.validate().map_err(|e| CliError::Validation(format!("sweep: {e}")))?;
            }
        }
        Ok(())
    }

    /// Cycle configuration with the given field assignments applied.
    pub fn cycle_at(&self, assignments: &[(String, Value)]) -> Result<CycleConfig, CliError> {
        let mut v = serde_json::to_value(&self.cycle).map_err(|e| CliError::Validation(e.to_string()))?;
        for (field, value) in assignments {
            set_path(&mut v, field, value.clone())?;
        }
        serde_json::from_value(v).map_err(|e| CliError::Validation(format!("sweep value rejected: {e}")))
    }
}

/// Sets a dotted path inside a JSON object, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Validation(format!("bad field path '{path}'")));
    }
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("'{path}' descends into a non-table value")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses an override value: JSON literal if possible, bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// `key=value` assignment as given to `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

/// Overrides from `IONCYCLE__A__B=v` environment variables, sorted by name.
pub fn env_overrides() -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = std::env::vars()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_OVERRIDE_PREFIX)?;
            let path = rest.split("__").map(|s| s.to_lowercase()).collect::<Vec<_>>().join(".");
            Some((path, parse_value(&v)))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Reads a spec as a generic value. TOML unless the extension is `.json`;
/// a run.json record is unwrapped to the spec it echoes.
pub fn read_spec_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
    };
    match value.get("spec") {
        Some(inner) if value.get("versions").is_some() => Ok(inner.clone()),
        _ => Ok(value),
    }
}

pub fn from_value(value: Value) -> Result<ExperimentSpec, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn to_toml(spec: &ExperimentSpec) -> Result<String, CliError> {
    toml::to_string_pretty(spec).map_err(|e| CliError::Validation(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_toml_takes_defaults() {
        let spec: ExperimentSpec = toml::from_str("name = \"x\"").unwrap();
        assert_eq!(spec.cycle, CycleConfig::default());
        assert!(spec.emit_snapshots);
        assert!(spec.tomography.is_none());
        spec.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentSpec>("name = \"x\"\nbogus = 1").is_err());
        assert!(toml::from_str::<ExperimentSpec>("name = \"x\"\n[cycle]\np_da = 0.3").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut spec: ExperimentSpec = toml::from_str("name = \"x\"").unwrap();
        spec.tomography = Some(TomographySpec::default());
        spec.sweep = Some(SweepSpec {
            axes: vec![SweepAxis { field: "protocol".into(), values: vec![json!("resonant"), json!("rap")] }],
        });
        let text = to_toml(&spec).unwrap();
        let back: ExperimentSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn sweep_points_are_cartesian() {
        let sweep = SweepSpec {
            axes: vec![
                SweepAxis { field: "p_d_a".into(), values: vec![json!(0.1), json!(0.2)] },
                SweepAxis { field: "n_cycles".into(), values: vec![json!(1), json!(2), json!(3)] },
            ],
        };
        assert_eq!(sweep.points().len(), 6);
        assert!(SweepSpec::default().points().is_empty());
        let empty_axis = SweepSpec { axes: vec![SweepAxis { field: "p_d_a".into(), values: vec![] }] };
        assert!(empty_axis.points().is_empty());
    }

    #[test]
    fn nested_assignment() {
        let spec: ExperimentSpec = toml::from_str("name = \"x\"").unwrap();
        let cfg = spec
            .cycle_at(&[("calib.dephasing_rate_per_s".into(), json!(0.0)), ("protocol".into(), json!("rap"))])
            .unwrap();
        assert_eq!(cfg.calib.dephasing_rate_per_s, 0.0);
        assert_eq!(cfg.protocol, ioncycle::Protocol::Rap);
        assert!(spec.cycle_at(&[("nonexistent".into(), json!(1))]).is_err());
    }

    #[test]
    fn values_parse_as_json_or_string() {
        assert_eq!(parse_value("2"), json!(2));
        assert_eq!(parse_value("0.5"), json!(0.5));
        assert_eq!(parse_value("true"), json!(true));
        assert_eq!(parse_value("rap"), json!("rap"));
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut spec: ExperimentSpec = toml::from_str("name = \" \"").unwrap();
        assert!(spec.validate().is_err());
        spec.name = "ok".into();
        spec.cycle.p_d_a = 1.5;
        assert!(spec.validate().is_err());
        spec.cycle.p_d_a = 0.3;
        spec.tomography = Some(TomographySpec { shots: 0, ..TomographySpec::default() });
        assert!(spec.validate().is_err());
        spec.tomography = Some(TomographySpec { grid: GridKind::Linear, ..TomographySpec::default() });
        assert!(spec.validate().is_err());
    }
}
