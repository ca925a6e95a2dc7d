use bgsim_python::bgsim_module;
use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "bgsim").unwrap();
        bgsim_module(&m).unwrap();
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("bgsim", m).unwrap();
        py.run(code, Some(&globals), None).unwrap();
    });
}

#[test]
fn configuration_round() {
    with_module(
        c"
c = bgsim.Configuration([(0, 0), (0, 0), (1, 0), ('1/2', 3)])
assert c.n == 3
nxt = c.step([2])
assert nxt.is_legitimate() and nxt.locations()[3] == ('1/2', '3/1')
assert c.check_step(nxt, 2) == (True, None)
ok, why = c.check_step(c, 2)
assert not ok and why.startswith('entry 2')
",
    );
}

#[test]
fn reduction_and_verification() {
    with_module(
        c"
import json
t = bgsim.run_consensus((0, 1), 3, seed=5, max_burst=4)
r = json.loads(t.verify())
assert r['pass']
assert t.decisions[0] == t.decisions[1]
assert bgsim.ReductionTrace.from_json(t.to_json()).to_json() == t.to_json()
try:
    bgsim.run_consensus((0, 1), 3, formation='2-gathering')
    raise AssertionError('accepted')
except ValueError:
    pass
",
    );
}
