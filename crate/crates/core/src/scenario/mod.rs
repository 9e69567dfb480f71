//! Scenario description: topology, placement, traffic, protocol selection
//! and every tunable of the radio, MAC, energy and routing layers.
//!
//! Scenario files are TOML. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.

pub mod sweep;
pub mod topology;

use serde::{Deserialize, Serialize};

use crate::energy::PowerProfile;
use crate::error::{invalid, Error, Result};
use crate::mac::CsmaConfig;
use crate::protocol::{OpserParams, ProtocolKind};
use crate::radio::PropagationParams;

pub use topology::{build_topology, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    Grid {
        rows: u16,
        cols: u16,
        spacing_m: f64,
    },
    Random {
        n: u16,
        width_m: f64,
        height_m: f64,
    },
}

impl Topology {
    pub fn node_count(&self) -> usize {
        match *self {
            Topology::Grid { rows, cols, .. } => rows as usize * cols as usize,
            Topology::Random { n, .. } => n as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkPlacement {
    /// Node nearest the origin corner.
    Corner,
    /// Node nearest the field centre.
    Center,
    /// Node nearest `sink_xy`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRule {
    /// The `source_count` nodes farthest from the sink.
    Extreme,
    /// Every node except the sink.
    All,
    /// Exactly `source_ids`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Placement {
    pub sink: SinkPlacement,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink_xy: Option<[f64; 2]>,
    pub sources: SourceRule,
    pub source_count: u16,
    pub source_ids: Vec<u16>,
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            sink: SinkPlacement::Corner,
            sink_xy: None,
            sources: SourceRule::Extreme,
            source_count: 4,
            source_ids: Vec::new(),
        }
    }
}

/// Constant-bit-rate traffic from every source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Traffic {
    pub rate_pps: f64,
    /// Data frame length on the air.
    pub payload_bytes: u32,
    pub start_s: f64,
    /// Defaults to the end of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_s: Option<f64>,
}

impl Default for Traffic {
    fn default() -> Self {
        Traffic {
            rate_pps: 5.0,
            payload_bytes: 70,
            start_s: 2.0,
            stop_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub protocol: ProtocolKind,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    pub topology: Topology,
    pub placement: Placement,
    pub traffic: Traffic,
    pub params: OpserParams,
    pub propagation: PropagationParams,
    pub mac: CsmaConfig,
    pub energy: PowerProfile,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            protocol: ProtocolKind::Opser,
            duration_s: 100.0,
            seeds: vec![1],
            topology: Topology::Grid {
                rows: 11,
                cols: 11,
                spacing_m: 10.0,
            },
            placement: Placement::default(),
            traffic: Traffic::default(),
            params: OpserParams::default(),
            propagation: PropagationParams::default(),
            mac: CsmaConfig::default(),
            energy: PowerProfile::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn traffic_stop_s(&self) -> f64 {
        self.traffic.stop_s.unwrap_or(self.duration_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(invalid("duration_s must be positive"));
        }
        match self.topology {
            Topology::Grid { spacing_m, .. } if !(spacing_m > 0.0) => {
                return Err(invalid("grid spacing must be positive"));
            }
            Topology::Random {
                width_m, height_m, ..
            } if !(width_m > 0.0 && height_m > 0.0) => {
                return Err(invalid("random field dimensions must be positive"));
            }
            _ => {}
        }
        if self.topology.node_count() > u16::MAX as usize {
            return Err(invalid("too many nodes"));
        }
        if self.placement.sink == SinkPlacement::Explicit && self.placement.sink_xy.is_none() {
            return Err(invalid("explicit sink placement needs sink_xy"));
        }
        let n = self.topology.node_count();
        if self.placement.sources == SourceRule::Explicit {
            if let Some(bad) = self
                .placement
                .source_ids
                .iter()
                .find(|&&id| id as usize >= n)
            {
                return Err(invalid(format!(
                    "source id {bad} does not exist ({n} nodes)"
                )));
            }
        }
        if !(self.traffic.rate_pps > 0.0) || self.traffic.payload_bytes == 0 {
            return Err(invalid("traffic needs a positive rate and payload"));
        }
        if !(self.traffic.start_s >= 0.0) || self.traffic.stop_s.is_some_and(|s| !(s >= 0.0)) {
            return Err(invalid("traffic times must be non-negative"));
        }
        self.params.validate()?;
        self.propagation.validate()?;
        self.mac.validate()?;
        self.energy.validate()?;
        Ok(())
    }
}
