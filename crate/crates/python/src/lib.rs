//! Python bindings. Coordinates are exact rationals exchanged as strings
//! (`"3/4"`) or integers; reports come back as JSON strings.

use std::path::Path;

use bgsim::analysis;
use bgsim::commands::{self, ScenarioConfig};
use bgsim::engine::{self, Schedule};
use bgsim::formations::{FormationKind, WitnessOptions};
use bgsim::geometry::{format_rational, parse_rational, BigRational, LocationMultiset, Point};
use bgsim::memory::CrashPoint;
use bgsim::model;
use bgsim::reduction;
use bgsim::slot::StatusRule;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: bgsim::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    commands::to_json(v).map_err(err)
}

fn coord(v: &Bound<'_, PyAny>) -> PyResult<BigRational> {
    if let Ok(i) = v.extract::<i64>() {
        return Ok(bgsim::geometry::rat(i));
    }
    let s: String = v.extract()?;
    parse_rational(&s).map_err(err)
}

fn point(v: &Bound<'_, PyAny>) -> PyResult<Point> {
    let (x, y): (Bound<'_, PyAny>, Bound<'_, PyAny>) = v.extract()?;
    Ok(Point::new(coord(&x)?, coord(&y)?))
}

fn points(v: &Bound<'_, PyAny>) -> PyResult<Vec<Point>> {
    v.try_iter()?.map(|p| point(&p?)).collect()
}

fn out(p: &Point) -> (String, String) {
    (format_rational(&p.x), format_rational(&p.y))
}

/// Robot positions; the last entry is the Byzantine robot.
#[pyclass(name = "Configuration", module = "bgsim", from_py_object)]
#[derive(Clone)]
struct PyConfiguration {
    inner: model::Configuration,
}

#[pymethods]
impl PyConfiguration {
    #[new]
    fn new(locations: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner = model::Configuration::from_points(points(locations)?).map_err(err)?;
        Ok(PyConfiguration { inner })
    }

    /// Number of correct robots.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn locations(&self) -> Vec<(String, String)> {
        self.inner
            .robots()
            .iter()
            .map(|r| out(&r.location))
            .collect()
    }

    fn is_legitimate(&self) -> bool {
        model::is_legitimate_now(&self.inner)
    }

    fn is_semi_legitimate(&self) -> bool {
        model::is_semi_legitimate(&self.inner)
    }

    fn swap(&self, k: usize) -> PyResult<Self> {
        Ok(PyConfiguration {
            inner: model::swap(&self.inner, k).map_err(err)?,
        })
    }

    /// Point of highest multiplicity among all robots and its count.
    fn max_multiplicity(&self) -> PyResult<((String, String), usize)> {
        let (p, c) = model::max_multiplicity(&self.inner.locations()).map_err(err)?;
        Ok((out(&p), c))
    }

    /// One round: `activated` robots move; index `n` is the Byzantine robot
    /// and needs `byzantine`.
    #[pyo3(signature = (activated, algorithm="move-to-max", byzantine=None))]
    fn step(
        &self,
        activated: Vec<usize>,
        algorithm: &str,
        byzantine: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let alg = bgsim::algorithms::algorithm_by_name(algorithm).map_err(err)?;
        let byz = byzantine.map(point).transpose()?;
        let inner =
            engine::step(&self.inner, &activated, byz.as_ref(), alg.as_ref()).map_err(err)?;
        Ok(PyConfiguration { inner })
    }

    /// Whether `next` follows from this configuration when robot `x` moves.
    #[pyo3(signature = (next, x, algorithm="move-to-max"))]
    fn check_step(
        &self,
        next: &PyConfiguration,
        x: usize,
        algorithm: &str,
    ) -> PyResult<(bool, Option<String>)> {
        let alg = bgsim::algorithms::algorithm_by_name(algorithm).map_err(err)?;
        let r = engine::check_step(&self.inner, &next.inner, x, alg.as_ref());
        Ok((r.ok, r.diagnostic))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let locs: Vec<String> = self
            .locations()
            .into_iter()
            .map(|(x, y)| format!("({x}, {y})"))
            .collect();
        format!("Configuration([{}])", locs.join(", "))
    }
}

/// A finished run of the two-process reduction.
#[pyclass(name = "ReductionTrace", module = "bgsim", from_py_object)]
#[derive(Clone)]
struct PyTrace {
    inner: reduction::ReductionTrace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyTrace { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        commands::to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn decisions(&self) -> [Option<u8>; 2] {
        self.inner.decision_values()
    }

    #[getter]
    fn crashed(&self) -> Option<usize> {
        self.inner.crashed
    }

    #[getter]
    fn exhausted(&self) -> [bool; 2] {
        self.inner.exhausted
    }

    #[getter]
    fn num_events(&self) -> usize {
        self.inner.events.len()
    }

    #[getter]
    fn num_slots(&self) -> usize {
        self.inner.slots.len()
    }

    /// Committer of each slot, `None` where nobody finished a submission.
    fn committers(&self) -> Vec<Option<usize>> {
        self.inner.slots.iter().map(|s| s.committer).collect()
    }

    /// Full verification report as JSON.
    fn verify(&self) -> PyResult<String> {
        json(&analysis::verify_trace(&self.inner).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "ReductionTrace(decisions={:?}, slots={}, events={})",
            self.inner.decision_values(),
            self.inner.slots.len(),
            self.inner.events.len()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (proposals, n, algorithm="move-to-max", seed=0, crash=None, max_burst=None, formation=None, max_slots=None))]
#[allow(clippy::too_many_arguments)]
fn run_consensus(
    proposals: [u8; 2],
    n: usize,
    algorithm: &str,
    seed: u64,
    crash: Option<(usize, usize)>,
    max_burst: Option<usize>,
    formation: Option<&str>,
    max_slots: Option<usize>,
) -> PyResult<PyTrace> {
    let cfg = ScenarioConfig {
        n,
        proposals,
        algorithm: algorithm.to_string(),
        seed,
        max_burst,
        crash: crash.map(|(process, after)| CrashPoint { process, after }),
        formation: formation
            .map(str::parse::<FormationKind>)
            .transpose()
            .map_err(err)?,
        max_slots,
    };
    Ok(PyTrace {
        inner: cfg.run().map_err(err)?,
    })
}

/// Verifies a trace file and writes the report next to it; returns the exit
/// code the CLI would use.
#[pyfunction]
fn verify_trace_file(path: &str) -> u8 {
    commands::cmd_verify_trace(Path::new(path), None).exit
}

#[pyfunction]
#[pyo3(signature = (values=vec![(5, 7), (9, 9)], max_events=24, mutant=false))]
fn check_slot(values: Vec<(i64, i64)>, max_events: usize, mutant: bool) -> PyResult<String> {
    let rule = if mutant {
        StatusRule::NoClaimCommit
    } else {
        StatusRule::Standard
    };
    json(&bgsim::slot::check_slot_exhaustive(&values, max_events, rule).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, algorithm="move-to-max", seed=0, max_rounds=1000))]
fn simulate(n: usize, algorithm: &str, seed: u64, max_rounds: usize) -> PyResult<String> {
    json(&commands::simulate(n, algorithm, seed, max_rounds).map_err(err)?)
}

/// Smallest k for which the schedule is k-bounded; `rounds[r]` lists the
/// robots activated in round r and `byzantine[r]` the Byzantine target.
#[pyfunction]
fn check_k_bounded(
    rounds: Vec<Vec<usize>>,
    byzantine: &Bound<'_, PyAny>,
    n: usize,
) -> PyResult<usize> {
    let mut moves = Vec::new();
    for b in byzantine.try_iter()? {
        let b = b?;
        moves.push(if b.is_none() { None } else { Some(point(&b)?) });
    }
    if moves.len() != rounds.len() {
        return Err(PyValueError::new_err("need one Byzantine entry per round"));
    }
    Ok(engine::check_k_bounded(
        &Schedule {
            rounds,
            byzantine_moves: moves,
        },
        n,
    ))
}

#[pyfunction]
#[pyo3(signature = (formation, n, samples=10_000, seed=0, grid=Some(5)))]
fn check_bivalency(
    formation: &str,
    n: usize,
    samples: usize,
    seed: u64,
    grid: Option<usize>,
) -> PyResult<String> {
    let kind: FormationKind = formation.parse().map_err(err)?;
    let spec = bgsim::formations::FormationSpec::new(kind, n + 1).map_err(err)?;
    let (p, x) = commands::default_witness(kind, n + 1).map_err(err)?;
    let opts = WitnessOptions {
        fuzz_samples: samples,
        seed,
        grid,
    };
    json(&bgsim::formations::check_bivalency_witness(&spec, &p, &x, &opts).map_err(err)?)
}

/// Best-fitting pattern of the family for the given points.
#[pyfunction]
fn best_fit(
    formation: &str,
    locations: &Bound<'_, PyAny>,
) -> PyResult<(Vec<(String, String)>, usize)> {
    let kind: FormationKind = formation.parse().map_err(err)?;
    let l = LocationMultiset::new(points(locations)?);
    let fit = bgsim::formations::best_fit(kind, &l).map_err(err)?;
    Ok((fit.pattern.iter().map(out).collect(), fit.count))
}

#[pyfunction]
fn algorithm_names() -> Vec<&'static str> {
    bgsim::algorithms::ALGORITHM_NAMES.to_vec()
}

#[pymodule]
#[pyo3(name = "bgsim")]
pub fn bgsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfiguration>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(run_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(verify_trace_file, m)?)?;
    m.add_function(wrap_pyfunction!(check_slot, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(check_k_bounded, m)?)?;
    m.add_function(wrap_pyfunction!(check_bivalency, m)?)?;
    m.add_function(wrap_pyfunction!(best_fit, m)?)?;
    m.add_function(wrap_pyfunction!(algorithm_names, m)?)?;
    Ok(())
}
