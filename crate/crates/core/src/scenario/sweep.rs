//! Parameter sweeps: the cartesian product of swept scenario keys, each run
//! under every seed, plus per-point aggregation across seeds.
//!
//! A sweep file names a base scenario (a path or an inline `[scenario]`
//! table), an optional seed list and a `[sweep]` table mapping dotted
//! scenario keys to value lists. Two virtual keys are understood:
//! `topology.side` sets both grid dimensions and `mac.be_bounds` takes a
//! `[min, max]` pair.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use toml::{Table, Value};

use super::Scenario;
use crate::error::{invalid, Error, Result};
use crate::metrics::MetricsRecord;
use crate::protocol::{DropReason, ProtocolKind};
use crate::sim::{run_scenario, RunOptions};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    /// Base scenario file, relative to the sweep file.
    #[serde(default)]
    pub base: Option<String>,
    /// Inline overrides applied on top of `base`.
    #[serde(default)]
    pub scenario: Option<Table>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `key=value` pairs joined by `;`, empty for an unswept run.
    pub label: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub name: String,
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    pub fn run_count(&self) -> usize {
        self.points.len() * self.seeds.len()
    }
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn merge(into: &mut Table, from: &Table) {
    for (k, v) in from {
        match (into.get_mut(k), v) {
            // A tagged table naming its variant replaces the old one whole.
            (Some(Value::Table(dst)), Value::Table(src)) if !src.contains_key("kind") => {
                merge(dst, src)
            }
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("malformed sweep key '{key}'")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(invalid(format!(
                    "sweep key '{key}' descends into a non-table"
                )))
            }
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn apply(root: &mut Table, key: &str, value: &Value) -> Result<()> {
    match key {
        "topology.side" => {
            set_path(root, "topology.rows", value.clone())?;
            set_path(root, "topology.cols", value.clone())
        }
        "mac.be_bounds" => match value.as_array().map(|a| a.as_slice()) {
            Some([lo, hi]) => {
                set_path(root, "mac.mac_min_be", lo.clone())?;
                set_path(root, "mac.mac_max_be", hi.clone())
            }
            _ => Err(invalid("mac.be_bounds values must be [min, max] pairs")),
        },
        _ => set_path(root, key, value.clone()),
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_toml(&text)?, dir))
    }

    /// Expands and validates every point. Nothing runs if any point is
    /// invalid.
    pub fn plan(&self, base_dir: &Path) -> Result<SweepPlan> {
        let mut base =
            Table::try_from(Scenario::default()).map_err(|e| Error::Parse(e.to_string()))?;
        base.remove("name");
        if let Some(p) = &self.base {
            let path = base_dir.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let file = toml::from_str::<Table>(&text).map_err(|e| Error::Parse(e.to_string()))?;
            merge(&mut base, &file);
        }
        if let Some(inline) = &self.scenario {
            merge(&mut base, inline);
        }
        if !base.contains_key("name") {
            base.insert("name".into(), Value::String(self.name.clone()));
        }

        for (k, vals) in &self.sweep {
            if vals.is_empty() {
                return Err(invalid(format!("sweep key '{k}' has no values")));
            }
        }
        let keys: Vec<(&String, &Vec<Value>)> = self.sweep.iter().collect();
        let total: usize = keys.iter().map(|(_, v)| v.len()).product();
        let mut points = Vec::with_capacity(total);
        for index in 0..total {
            let mut t = base.clone();
            let mut rem = index;
            let mut label = Vec::new();
            // Last key varies fastest.
            let mut choice = vec![0; keys.len()];
            for (slot, (_, vals)) in keys.iter().enumerate().rev() {
                choice[slot] = rem % vals.len();
                rem /= vals.len();
            }
            for ((k, vals), &c) in keys.iter().zip(&choice) {
                apply(&mut t, k, &vals[c]).map_err(|e| invalid(format!("sweep key '{k}': {e}")))?;
                label.push(format!("{k}={}", value_label(&vals[c])));
            }
            let scenario: Scenario = Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| invalid(format!("sweep point {index}: {e}")))?;
            scenario
                .validate()
                .map_err(|e| invalid(format!("sweep point {index}: {e}")))?;
            points.push(SweepPoint {
                index,
                label: label.join(";"),
                scenario,
            });
        }

        let seeds = match &self.seeds {
            Some(s) => s.clone(),
            None => points
                .first()
                .map(|p| p.scenario.seeds.clone())
                .unwrap_or_default(),
        };
        if seeds.is_empty() {
            return Err(invalid("sweep has an empty seed list"));
        }
        Ok(SweepPlan {
            name: self.name.clone(),
            points,
            seeds,
        })
    }
}

/// One finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub point: usize,
    pub label: String,
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub n_nodes: usize,
    pub packet_rate: f64,
    pub metrics: MetricsRecord,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = [
            "scenario",
            "point",
            "label",
            "seed",
            "protocol",
            "n_nodes",
            "packet_rate",
            "sent",
            "received",
            "pdr",
            "avg_delay_s",
            "tec_j",
            "avg_energy_j",
            "nec_j",
            "duplicates",
            "duplicates_at_sink",
            "data_transmissions",
            "caf_count",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(DropReason::ALL.iter().map(|r| format!("drop_{}", r.name())));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let m = &self.metrics;
        let (avg, nec) = m.energy_metrics();
        let mut row = vec![
            self.scenario.clone(),
            self.point.to_string(),
            self.label.clone(),
            self.seed.to_string(),
            self.protocol.to_string(),
            self.n_nodes.to_string(),
            self.packet_rate.to_string(),
            m.sent_by_sources.to_string(),
            m.received_at_sink.to_string(),
            opt(m.pdr()),
            opt(m.avg_e2e_delay()),
            m.tec_j.to_string(),
            opt(avg),
            opt(nec),
            m.duplicate_transmissions.to_string(),
            m.duplicates_at_sink.to_string(),
            m.data_transmissions.to_string(),
            m.caf_count.to_string(),
        ];
        row.extend(
            DropReason::ALL
                .iter()
                .map(|r| m.drops(r.name()).to_string()),
        );
        row
    }
}

pub fn run_one(point: &SweepPoint, seed: u64) -> Result<RunRecord> {
    let out = run_scenario(&point.scenario, seed, RunOptions::default())?;
    Ok(RunRecord {
        scenario: point.scenario.name.clone(),
        point: point.index,
        label: point.label.clone(),
        seed,
        protocol: point.scenario.protocol,
        n_nodes: out.layout.len(),
        packet_rate: point.scenario.traffic.rate_pps,
        metrics: out.metrics,
    })
}

/// Runs every (point, seed) pair in parallel. Results come back in plan
/// order: points outer, seeds inner.
pub fn run_plan(plan: &SweepPlan) -> Result<Vec<RunRecord>> {
    let jobs: Vec<(&SweepPoint, u64)> = plan
        .points
        .iter()
        .flat_map(|p| plan.seeds.iter().map(move |&s| (p, s)))
        .collect();
    jobs.par_iter().map(|(p, s)| run_one(p, *s)).collect()
}

/// Mean and sample standard deviation over the runs where a value exists.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat::default();
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub label: String,
    pub protocol: ProtocolKind,
    pub n_nodes: usize,
    pub packet_rate: f64,
    pub runs: usize,
    pub stats: Vec<(&'static str, Stat)>,
}

pub const AGGREGATE_METRICS: [&str; 7] = [
    "pdr",
    "avg_delay_s",
    "tec_j",
    "avg_energy_j",
    "nec_j",
    "duplicates",
    "caf_count",
];

fn metric_value(m: &MetricsRecord, name: &str) -> Option<f64> {
    let (avg, nec) = m.energy_metrics();
    match name {
        "pdr" => m.pdr(),
        "avg_delay_s" => m.avg_e2e_delay(),
        "tec_j" => Some(m.tec_j),
        "avg_energy_j" => avg,
        "nec_j" => nec,
        "duplicates" => Some(m.duplicate_transmissions as f64),
        "caf_count" => Some(m.caf_count as f64),
        _ => None,
    }
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut by_point: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_point.entry(r.point).or_default().push(r);
    }
    by_point
        .into_values()
        .map(|runs| {
            let first = runs[0];
            AggregateRow {
                point: first.point,
                label: first.label.clone(),
                protocol: first.protocol,
                n_nodes: first.n_nodes,
                packet_rate: first.packet_rate,
                runs: runs.len(),
                stats: AGGREGATE_METRICS
                    .iter()
                    .map(|&name| {
                        (
                            name,
                            Stat::of(runs.iter().filter_map(|r| metric_value(&r.metrics, name))),
                        )
                    })
                    .collect(),
            }
        })
        .collect()
}

impl AggregateRow {
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = [
            "point",
            "label",
            "protocol",
            "n_nodes",
            "packet_rate",
            "runs",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for m in AGGREGATE_METRICS {
            h.push(format!("{m}_mean"));
            h.push(format!("{m}_std"));
        }
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.point.to_string(),
            self.label.clone(),
            self.protocol.to_string(),
            self.n_nodes.to_string(),
            self.packet_rate.to_string(),
            self.runs.to_string(),
        ];
        for (_, s) in &self.stats {
            if s.n == 0 {
                row.push(String::new());
                row.push(String::new());
            } else {
                row.push(s.mean.to_string());
                row.push(s.std.to_string());
            }
        }
        row
    }
}
