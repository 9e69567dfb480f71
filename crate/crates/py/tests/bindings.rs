use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::opser::opser;

fn run_py(code: &str) -> PyResult<()> {
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(&CString::new(code).unwrap(), Some(&globals), None)
    })
}

fn init() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        pyo3::append_to_inittab!(opser);
        Python::initialize();
    });
}

#[test]
fn run_and_validate_from_python() {
    init();
    run_py(
        r#"
import opser
sc = opser.Scenario.from_toml('duration_s = 5.0\n[topology]\nkind = "grid"\nrows = 3\ncols = 3\nspacing_m = 10.0\n')
r = sc.run(2, trace=True)
assert r.metrics.sent > 0
assert r.metrics == sc.run(2).metrics
rep = opser.validate_trace(r.trace)
assert rep.ok and rep.metrics == r.metrics
assert r.corona_levels[r.sink] == 1
"#,
    )
    .unwrap();
}

#[test]
fn errors_become_value_errors() {
    init();
    let err = run_py("import opser\nopser.Scenario.from_toml('bogus = 1')").unwrap_err();
    Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
    let err = run_py("import opser\nopser.validate_trace('t=oops')").unwrap_err();
    Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
}

#[test]
fn analysis_helpers_agree_with_closed_forms() {
    init();
    run_py(
        r#"
import opser
assert opser.opportunistic_delivery_prob([[0.5]] * 3) == opser.unicast_delivery_prob(0.5, 3)
assert opser.opportunistic_delivery_prob([[0.5, 0.5]] * 2) == 0.75 ** 2
total, bound = opser.cid_energy_cost([0.0, 0.0], 2.0, 1.0, rounds=2)
assert total == 8.0
"#,
    )
    .unwrap();
}
