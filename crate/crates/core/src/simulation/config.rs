//! JSON scenario files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{random_trips, Mode, Scenario, SimParams};
use crate::coordination::{CavId, CoordinationParams, SafetyParams};
use crate::network::{build_grid_network, GridGeometry, NodeId};
use crate::routing::TripRequest;
use crate::trajectory::MotionLimits;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripEntry {
    pub origin: u32,
    pub destination: u32,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TripSpec {
    Random {
        count: usize,
        seed: u64,
        /// Start-time window `[from, to)` in seconds.
        window: [f64; 2],
    },
    List(Vec<TripEntry>),
}

fn default_limits() -> MotionLimits<f64> {
    SimParams::<f64>::default().coordination.limits
}
fn default_safety() -> SafetyParams<f64> {
    SimParams::<f64>::default().coordination.safety
}
fn default_kappa() -> f64 {
    0.5
}
fn default_m() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_departure_factor() -> f64 {
    0.8
}
fn default_search_step() -> f64 {
    0.05
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_hold_step() -> f64 {
    0.5
}
fn default_max_holds() -> u32 {
    200
}
fn default_budget() -> u64 {
    19_683
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridDims,
    #[serde(default)]
    pub geometry: GridGeometry<f64>,
    #[serde(default = "default_limits")]
    pub limits: MotionLimits<f64>,
    #[serde(default = "default_safety")]
    pub safety: SafetyParams<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    pub trips: TripSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub delayed_only_rerouting: bool,
    /// Departure speed as a fraction of `v_max`.
    #[serde(default = "default_departure_factor")]
    pub departure_speed_factor: f64,
    #[serde(default = "default_search_step")]
    pub search_step: f64,
    #[serde(default = "default_tolerance")]
    pub search_tolerance: f64,
    #[serde(default = "default_hold_step")]
    pub hold_step: f64,
    #[serde(default = "default_max_holds")]
    pub max_holds: u32,
    #[serde(default = "default_budget")]
    pub oracle_budget: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.params().validate().map_err(ConfigError::Invalid)?;
        cfg.geometry.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if cfg.grid.rows == 0 || cfg.grid.cols == 0 {
            return Err(ConfigError::Invalid("grid needs at least one row and column".into()));
        }
        if let TripSpec::Random { window, .. } = &cfg.trips {
            if !(window[0] >= 0.0 && window[1] >= window[0] && window[1].is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "trip window [{}, {}] must be finite, non-negative and ordered",
                    window[0], window[1]
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn params(&self) -> SimParams<f64> {
        let mut coordination = CoordinationParams::new(self.limits, self.safety);
        coordination.search_step = self.search_step;
        coordination.tolerance = self.search_tolerance;
        SimParams {
            coordination,
            kappa: self.kappa,
            m: self.m,
            departure_speed: self.departure_speed_factor * self.limits.v_max,
            delayed_only: self.delayed_only_rerouting,
            hold_step: self.hold_step,
            max_holds: self.max_holds,
            oracle_budget: self.oracle_budget,
        }
    }

    pub fn trip_count(&self) -> usize {
        match &self.trips {
            TripSpec::Random { count, .. } => *count,
            TripSpec::List(list) => list.len(),
        }
    }

    /// Builds the network and the trip list.
    pub fn to_scenario(&self) -> Result<Scenario<f64>, ConfigError> {
        let graph = build_grid_network(self.grid.rows, self.grid.cols, &self.geometry)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let trips = match &self.trips {
            TripSpec::Random { count, seed, window } => {
                random_trips(&graph, *count, *seed, (window[0], window[1]))
            }
            TripSpec::List(list) => {
                let mut entries = list.clone();
                entries.sort_by(|a, b| a.start.total_cmp(&b.start));
                let n = graph.nodes().len() as u32;
                entries
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        if t.origin >= n || t.destination >= n {
                            return Err(ConfigError::Invalid(format!(
                                "trip {i} references a node outside 0..{n}"
                            )));
                        }
                        Ok(TripRequest {
                            cav: CavId(i as u32),
                            origin: NodeId(t.origin),
                            destination: NodeId(t.destination),
                            start: t.start,
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        Ok(Scenario {
            graph: Arc::new(graph),
            params: self.params(),
            trips,
            mode: self.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ScenarioConfig::from_json_str(
            r#"{"grid": {"rows": 2, "cols": 2}, "trips": {"random": {"count": 5, "seed": 1, "window": [0, 10]}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.m, 3);
        assert_eq!(cfg.mode, Mode::Proposed);
        assert_eq!(cfg.params().departure_speed, 12.0);
        let s = cfg.to_scenario().unwrap();
        assert_eq!(s.trips.len(), 5);
        let again = ScenarioConfig::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "{\n  \"grid\": {\"rows\": 1, \"cols\": 1},\n  \"trips\": {\"list\": []},\n  \"speed\": 3\n}";
        match ScenarioConfig::from_json_str(text) {
            Err(ConfigError::Syntax { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("speed"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_rejected() {
        let bad_m = r#"{"grid": {"rows": 1, "cols": 1}, "trips": {"list": []}, "m": 5}"#;
        assert!(matches!(ScenarioConfig::from_json_str(bad_m), Err(ConfigError::Invalid(_))));
        let bad_window = r#"{"grid": {"rows": 1, "cols": 1}, "trips": {"random": {"count": 1, "seed": 0, "window": [5, 1]}}}"#;
        assert!(matches!(ScenarioConfig::from_json_str(bad_window), Err(ConfigError::Invalid(_))));
    }
}
