//! Python bindings. The module is importable as `mgconfig`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mgconfig::analysis;
use mgconfig::feeder::{Phase, PhaseSet};
use mgconfig::fixtures;
use mgconfig::hazard::{annotated_blocks, load_risk_csv, load_svi_csv};
use mgconfig::lindistflow::build_sensitivity_matrices;
use mgconfig::omcp::export_milp;
use mgconfig::solver::{enumerate_all_with, solve_with, LpCache, SolveOptions, SolveReport};
use mgconfig::{identify_blocks, reduce_feeder, BlockGraph, Controllability, NetworkModel, Objective, OmcpInstance, RiskPolicy};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_phases(s: &str) -> PyResult<PhaseSet> {
    let mut out = Vec::new();
    for c in s.chars() {
        out.push(match c.to_ascii_lowercase() {
            'a' => Phase::A,
            'b' => Phase::B,
            'c' => Phase::C,
            _ => return Err(value_err(format!("unknown phase {c:?}"))),
        });
    }
    PhaseSet::new(out).ok_or_else(|| value_err("empty phase set"))
}

/// A validated feeder model.
#[pyclass(name = "Network", frozen)]
struct PyNetwork(NetworkModel);

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        mgconfig::parse_network(path).map(PyNetwork).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NetworkModel::from_json(text).map(PyNetwork).map_err(value_err)
    }

    /// The bundled IEEE 13-bus fixture; `widespread` selects the variant
    /// with grid-forming units in every block.
    #[staticmethod]
    #[pyo3(signature = (widespread = false))]
    fn ieee13(widespread: bool) -> Self {
        PyNetwork(if widespread { fixtures::ieee13_widespread() } else { fixtures::ieee13_network() })
    }

    #[staticmethod]
    fn secondary_feeder() -> Self {
        PyNetwork(fixtures::secondary_feeder())
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn bus_count(&self) -> usize {
        self.0.buses.len()
    }

    #[getter]
    fn total_kw(&self) -> f64 {
        self.0.total_pd()
    }

    #[getter]
    fn total_kvar(&self) -> f64 {
        self.0.total_qd()
    }

    #[getter]
    fn total_svi(&self) -> f64 {
        self.0.total_svi()
    }

    /// Collapses distribution-transformer secondaries onto their primary bus.
    fn reduce(&self) -> PyResult<PyNetwork> {
        reduce_feeder(&self.0).map(|r| PyNetwork(r.network)).map_err(value_err)
    }

    /// Load blocks using risk and SVI values carried in the network file.
    fn blocks(&self) -> PyBlocks {
        PyBlocks(identify_blocks(&self.0))
    }

    fn __repr__(&self) -> String {
        format!("Network(buses={}, loads={}, switches={})", self.0.buses.len(), self.0.loads.len(), self.0.switches.len())
    }
}

#[pyclass(name = "Blocks", frozen)]
struct PyBlocks(BlockGraph);

#[pymethods]
impl PyBlocks {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// One dict per block: id, buses, kw, v, risk, substation.
    fn table(&self, py: Python<'_>) -> PyResult<Vec<Py<pyo3::types::PyDict>>> {
        self.0
            .blocks
            .iter()
            .map(|b| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("id", b.id)?;
                d.set_item("buses", b.bus_ids.iter().cloned().collect::<Vec<_>>())?;
                d.set_item("kw", b.total_pd)?;
                d.set_item("v", b.total_svi)?;
                d.set_item("risk", b.risk)?;
                d.set_item("substation", b.contains_substation)?;
                Ok(d.unbind())
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Outcome of one exact solve.
#[pyclass(name = "Solution", frozen)]
struct PySolution(SolveReport);

#[pymethods]
impl PySolution {
    #[getter]
    fn energized_blocks(&self) -> Vec<usize> {
        self.0.configuration.energized_blocks()
    }

    #[getter]
    fn closed_switches(&self) -> Vec<String> {
        self.0.configuration.closed_switches().iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn forming_sources(&self) -> Vec<String> {
        let c = &self.0.configuration;
        c.inverter_ids.iter().zip(&c.inverter_forming).filter(|(_, &f)| f).map(|(id, _)| id.clone()).collect()
    }

    #[getter]
    fn shed_cost(&self) -> f64 {
        self.0.shed_cost()
    }

    #[getter]
    fn risk(&self) -> f64 {
        self.0.risk
    }

    #[getter]
    fn risk_fraction(&self) -> f64 {
        self.0.risk_fraction
    }

    /// Served percentage under each metric, keyed `lo`, `vo`, `vl`.
    #[getter]
    fn served_pct(&self) -> BTreeMap<&'static str, f64> {
        Objective::ALL.iter().map(|&o| (o.short_name(), self.0.report.metric(o).served_pct)).collect()
    }

    #[getter]
    fn topologies_evaluated(&self) -> usize {
        self.0.stats.topologies_evaluated
    }

    #[getter]
    fn optimal(&self) -> bool {
        self.0.optimal
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("report serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(blocks={:?}, switches={:?}, shed={}, risk={:.4})",
            self.energized_blocks(),
            self.closed_switches(),
            self.shed_cost(),
            self.0.risk_fraction
        )
    }
}

/// A posed configuration problem. Dispatch results are cached across calls
/// on the same instance.
#[pyclass(name = "Instance")]
struct PyInstance {
    inner: OmcpInstance,
    cache: LpCache,
}

fn pose(
    net: NetworkModel,
    bg: BlockGraph,
    objective: &str,
    controllability: &str,
    threshold: f64,
    include_switch_risk: bool,
    substation_off: bool,
) -> PyResult<PyInstance> {
    let obj: Objective = objective.parse().map_err(value_err)?;
    let ctrl: Controllability = controllability.parse().map_err(value_err)?;
    let policy = RiskPolicy::new(&bg, threshold, include_switch_risk).map_err(value_err)?;
    let inner = OmcpInstance::new(net, bg, obj, ctrl, policy).with_substation_off(substation_off);
    Ok(PyInstance { inner, cache: LpCache::new() })
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (network, risk, svi, objective = "vl", controllability = "networking", threshold = 0.5, include_switch_risk = true, substation_off = false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        network: &str,
        risk: &str,
        svi: &str,
        objective: &str,
        controllability: &str,
        threshold: f64,
        include_switch_risk: bool,
        substation_off: bool,
    ) -> PyResult<Self> {
        let net = mgconfig::parse_network(network).map_err(value_err)?;
        let rt = load_risk_csv(risk, &net).map_err(value_err)?;
        let st = load_svi_csv(svi, &net).map_err(value_err)?;
        let bg = annotated_blocks(&net, &rt, &st).map_err(value_err)?;
        pose(net, bg, objective, controllability, threshold, include_switch_risk, substation_off)
    }

    /// The bundled IEEE 13-bus instance with its risk and SVI tables.
    #[staticmethod]
    #[pyo3(signature = (objective = "vl", controllability = "networking", threshold = 0.5, widespread = false, substation_off = false))]
    fn ieee13(objective: &str, controllability: &str, threshold: f64, widespread: bool, substation_off: bool) -> PyResult<Self> {
        let net = if widespread { fixtures::ieee13_widespread() } else { fixtures::ieee13_network() };
        let bg = annotated_blocks(&net, &fixtures::ieee13_risk(), &fixtures::ieee13_svi()).map_err(value_err)?;
        pose(net, bg, objective, controllability, threshold, true, substation_off)
    }

    #[getter]
    fn blocks(&self) -> PyBlocks {
        PyBlocks(self.inner.blocks.clone())
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.policy.threshold
    }

    #[setter]
    fn set_threshold(&mut self, t: f64) -> PyResult<()> {
        self.inner = self.inner.with_threshold(t).map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn objective(&self) -> &'static str {
        self.inner.objective.short_name()
    }

    #[setter]
    fn set_objective(&mut self, o: &str) -> PyResult<()> {
        self.inner.objective = o.parse().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn controllability(&self) -> &'static str {
        self.inner.controllability.short_name()
    }

    #[setter]
    fn set_controllability(&mut self, c: &str) -> PyResult<()> {
        self.inner.controllability = c.parse().map_err(value_err)?;
        Ok(())
    }

    fn solve(&self, py: Python<'_>) -> PyResult<PySolution> {
        let (inst, cache) = (&self.inner, &self.cache);
        py.detach(|| solve_with(inst, SolveOptions::default(), cache)).map(PySolution).map_err(value_err)
    }

    /// Every admissible assignment as `(energized_blocks, closed_switches, shed_cost, risk)`,
    /// best first.
    #[allow(clippy::type_complexity)]
    fn enumerate_all(&self, py: Python<'_>) -> PyResult<Vec<(Vec<usize>, Vec<String>, f64, f64)>> {
        let (inst, cache) = (&self.inner, &self.cache);
        let all = py.detach(|| enumerate_all_with(inst, cache)).map_err(value_err)?;
        Ok(all
            .into_iter()
            .map(|e| {
                let sw = e.configuration.closed_switches().iter().map(|s| s.to_string()).collect();
                (e.configuration.energized_blocks(), sw, e.shed_cost, e.risk)
            })
            .collect())
    }

    /// Threshold sweep as `(threshold, shed_cost, served_pct, risk_pct, config_hash)` rows.
    #[pyo3(signature = (start = 0.0, stop = 1.0, step = 0.01))]
    fn sweep(&self, py: Python<'_>, start: f64, stop: f64, step: f64) -> PyResult<Vec<(f64, f64, f64, f64, String)>> {
        let (inst, cache) = (&self.inner, &self.cache);
        let res = py.detach(|| analysis::sweep(inst, start, stop, step, cache)).map_err(value_err)?;
        Ok(res.rows.into_iter().map(|r| (r.threshold, r.shed_cost, r.served_pct, r.risk_pct, r.config_hash)).collect())
    }

    /// Block order per objective, keyed `lo`, `vo`, `vl`.
    #[pyo3(signature = (start = 0.0, stop = 1.0, step = 0.001))]
    fn priority(&self, py: Python<'_>, start: f64, stop: f64, step: f64) -> PyResult<BTreeMap<&'static str, Vec<usize>>> {
        let (inst, cache) = (&self.inner, &self.cache);
        let t = py.detach(|| analysis::priority(inst, start, stop, step, cache)).map_err(value_err)?;
        Ok(Objective::ALL.iter().map(|&o| (o.short_name(), t.order(o))).collect())
    }

    /// Writes the MILP as MPS; returns `(columns, rows)`.
    fn export_mps(&self, path: &str) -> PyResult<(usize, usize)> {
        let m = export_milp(&self.inner, path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok((m.vars.len(), m.rows.len()))
    }
}

/// Voltage-drop sensitivity matrices `(M_P, M_Q)` of a line from per-unit
/// `r` and `x` over the given phases, e.g. `"abc"` or `"ac"`.
#[pyfunction]
fn sensitivity_matrices(r: Vec<Vec<f64>>, x: Vec<Vec<f64>>, phases: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    build_sensitivity_matrices(&r, &x, parse_phases(phases)?).map_err(value_err)
}

#[pymodule(name = "mgconfig")]
fn mgconfig_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyBlocks>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(sensitivity_matrices, m)?)?;
    Ok(())
}
