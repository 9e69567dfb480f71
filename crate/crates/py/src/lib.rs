//! Python bindings: scenarios, runs, trace validation and the closed-form
//! analysis helpers.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use opser_core::analysis::{self, HopLinkProfile, LogBase};
use opser_core::engine::{Purpose, RngStream};
use opser_core::radio::PropagationParams;
use opser_core::trace::{parse_trace, render_trace};
use opser_core::{MetricsRecord, ProtocolKind, RunOptions, SimTime, ValidateOptions};

fn py_err(e: opser_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Scenario", module = "opser", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: opser_core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Default 11x11 grid scenario.
    #[new]
    fn new() -> Self {
        PyScenario {
            inner: opser_core::Scenario::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = opser_core::Scenario::from_toml(text).map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = opser_core::Scenario::load(path.as_ref()).map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn protocol(&self) -> String {
        self.inner.protocol.to_string()
    }

    #[setter]
    fn set_protocol(&mut self, value: &str) -> PyResult<()> {
        self.inner.protocol = value.parse::<ProtocolKind>().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s
    }

    #[setter]
    fn set_duration_s(&mut self, value: f64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.duration_s = value;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.topology.node_count()
    }

    /// Runs one seed; `trace=True` keeps the rendered event trace.
    #[pyo3(signature = (seed, trace = false))]
    fn run(&self, py: Python<'_>, seed: u64, trace: bool) -> PyResult<RunResult> {
        let sc = self.inner.clone();
        let out = py
            .detach(move || opser_core::run_scenario(&sc, seed, RunOptions { trace }))
            .map_err(py_err)?;
        Ok(RunResult {
            metrics: Metrics { inner: out.metrics },
            corona_levels: out.corona_levels,
            positions: out.layout.positions,
            sink: out.layout.sink.0,
            sources: out.layout.sources.iter().map(|n| n.0).collect(),
            trace: out.trace.as_deref().map(render_trace),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, protocol={}, nodes={}, duration_s={})",
            self.inner.name,
            self.inner.protocol,
            self.inner.topology.node_count(),
            self.inner.duration_s
        )
    }
}

#[pyclass(module = "opser", skip_from_py_object)]
#[derive(Clone)]
struct Metrics {
    inner: MetricsRecord,
}

#[pymethods]
impl Metrics {
    #[getter]
    fn pdr(&self) -> Option<f64> {
        self.inner.pdr()
    }

    #[getter]
    fn avg_delay_s(&self) -> Option<f64> {
        self.inner.avg_e2e_delay()
    }

    #[getter]
    fn tec_j(&self) -> f64 {
        self.inner.tec_j
    }

    #[getter]
    fn avg_energy_j(&self) -> Option<f64> {
        self.inner.energy_metrics().0
    }

    #[getter]
    fn nec_j(&self) -> Option<f64> {
        self.inner.energy_metrics().1
    }

    #[getter]
    fn sent(&self) -> u64 {
        self.inner.sent_by_sources
    }

    #[getter]
    fn received(&self) -> u64 {
        self.inner.received_at_sink
    }

    #[getter]
    fn n_nodes(&self) -> u64 {
        self.inner.n_nodes
    }

    #[getter]
    fn duplicates_at_sink(&self) -> u64 {
        self.inner.duplicates_at_sink
    }

    #[getter]
    fn duplicate_transmissions(&self) -> u64 {
        self.inner.duplicate_transmissions
    }

    #[getter]
    fn data_transmissions(&self) -> u64 {
        self.inner.data_transmissions
    }

    #[getter]
    fn caf_count(&self) -> u64 {
        self.inner.caf_count
    }

    #[getter]
    fn drops(&self) -> BTreeMap<String, u64> {
        self.inner.drops_by_reason.clone()
    }

    #[getter]
    fn per_packet_delay_s(&self) -> Vec<f64> {
        self.inner.per_packet_delay_s.clone()
    }

    fn __eq__(&self, other: PyRef<'_, Metrics>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let f = |v: Option<f64>| {
            v.map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "None".into())
        };
        format!(
            "Metrics(pdr={}, avg_delay_s={}, tec_j={:.4}, sent={}, received={})",
            f(self.inner.pdr()),
            f(self.inner.avg_e2e_delay()),
            self.inner.tec_j,
            self.inner.sent_by_sources,
            self.inner.received_at_sink
        )
    }
}

#[pyclass(module = "opser", skip_from_py_object)]
struct RunResult {
    #[pyo3(get)]
    metrics: Metrics,
    #[pyo3(get)]
    corona_levels: Vec<Option<u16>>,
    #[pyo3(get)]
    positions: Vec<(f64, f64)>,
    #[pyo3(get)]
    sink: u16,
    #[pyo3(get)]
    sources: Vec<u16>,
    /// Rendered trace text, `None` unless the run was traced.
    #[pyo3(get)]
    trace: Option<String>,
}

#[pyclass(module = "opser", skip_from_py_object)]
struct ValidationReport {
    #[pyo3(get)]
    records: usize,
    /// `(record index, check, message)` triples.
    #[pyo3(get)]
    violations: Vec<(usize, String, String)>,
    #[pyo3(get)]
    metrics: Metrics,
}

#[pymethods]
impl ValidationReport {
    #[getter]
    fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parses trace text and checks it against the protocol invariants.
#[pyfunction]
#[pyo3(signature = (text, hold_t = 0.005, window = 0.005))]
fn validate_trace(text: &str, hold_t: f64, window: f64) -> PyResult<ValidationReport> {
    let records = parse_trace(text).map_err(py_err)?;
    let opts = ValidateOptions {
        hold_t: SimTime::from_secs(hold_t),
        oppbcast_window: SimTime::from_secs(window),
    };
    let r = opser_core::validate_trace(&records, &opts);
    Ok(ValidationReport {
        records: r.records,
        violations: r
            .violations
            .into_iter()
            .map(|v| (v.index, v.check.to_string(), v.message))
            .collect(),
        metrics: Metrics { inner: r.metrics },
    })
}

/// End-to-end delivery probability when any candidate of a hop may forward.
#[pyfunction]
fn opportunistic_delivery_prob(per_hop: Vec<Vec<f64>>) -> PyResult<f64> {
    let prof = HopLinkProfile::new(per_hop).map_err(py_err)?;
    analysis::opportunistic_delivery_prob(&prof).map_err(py_err)
}

#[pyfunction]
fn unicast_delivery_prob(p: f64, n_hops: u32) -> PyResult<f64> {
    analysis::unicast_delivery_prob(p, n_hops).map_err(py_err)
}

/// Flood cost; returns `(total_j, bound_j)`.
#[pyfunction]
#[pyo3(signature = (degrees, e_tx_j, e_rx_j, rounds = 1))]
fn cid_energy_cost(
    degrees: Vec<f64>,
    e_tx_j: f64,
    e_rx_j: f64,
    rounds: u32,
) -> PyResult<(f64, f64)> {
    let c = analysis::cid_energy_cost(&degrees, e_tx_j, e_rx_j, rounds, LogBase::Natural)
        .map_err(py_err)?;
    Ok((c.total_j, c.bound_j))
}

/// Monte Carlo reception rate at a distance under log-normal shadowing.
#[pyfunction]
#[pyo3(signature = (distance_m, trials = 10_000, seed = 1, beta = 4.5, sigma_db = 4.0))]
fn prr_vs_distance(
    distance_m: f64,
    trials: u32,
    seed: u64,
    beta: f64,
    sigma_db: f64,
) -> PyResult<f64> {
    let pp = PropagationParams {
        beta,
        sigma_db,
        ..Default::default()
    };
    pp.validate().map_err(py_err)?;
    let mut rng = RngStream::global(seed, Purpose::Analysis);
    opser_core::radio::prr_vs_distance(&pp, distance_m, trials, &mut rng).map_err(py_err)
}

#[pymodule]
pub fn opser(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<Metrics>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<ValidationReport>()?;
    m.add_function(wrap_pyfunction!(validate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(opportunistic_delivery_prob, m)?)?;
    m.add_function(wrap_pyfunction!(unicast_delivery_prob, m)?)?;
    m.add_function(wrap_pyfunction!(cid_energy_cost, m)?)?;
    m.add_function(wrap_pyfunction!(prr_vs_distance, m)?)?;
    Ok(())
}
