//! Three-phase feeder description: domain types, JSON schema I/O, validation,
//! and the secondary-circuit reduction.

mod phase;
mod reduce;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use phase::{Phase, PerPhase, PhaseSet};
pub use reduce::{reduce_feeder, Reduction, RetainedTransformer};

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("cannot read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema violation: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation in `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{element}` references unknown bus `{bus}`")]
    DanglingBus { element: String, bus: String },
    #[error("expected exactly one substation bus, found {0}")]
    SubstationCount(usize),
    #[error("expected exactly one substation source at the substation bus, found {0}")]
    SubstationSourceCount(usize),
    #[error("network is not connected; unreachable buses: {0:?}")]
    Disconnected(Vec<String>),
    #[error("load block is not radial: `{0}` closes a loop with all switches open")]
    NonRadialBlock(String),
    #[error("switch `{0}` has both ends in the same load block")]
    SelfLoopSwitch(String),
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> FeederError {
    FeederError::Schema { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Per-unit voltage magnitude bounds, applied to every phase.
    pub vmin: f64,
    pub vmax: f64,
    #[serde(default)]
    pub is_substation: bool,
    /// Opaque geographic metadata, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: PhaseSet,
    /// Series resistance in ohms, dense over `phases`, row-major.
    pub r: Vec<Vec<f64>>,
    /// Series reactance in ohms, dense over `phases`, row-major.
    pub x: Vec<Vec<f64>>,
    /// Thermal limit in kVA per phase.
    pub s_max: f64,
    #[serde(default)]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchElement {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: PhaseSet,
    #[serde(default)]
    pub normally_open: bool,
    #[serde(default)]
    pub risk: f64,
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: String,
    pub bus: String,
    /// kW per connected phase; the keys define the load's phase connection.
    pub pd: PerPhase,
    /// kvar per connected phase.
    #[serde(default)]
    pub qd: PerPhase,
    #[serde(default)]
    pub svi: f64,
}

impl LoadPoint {
    pub fn phases(&self) -> PhaseSet {
        self.pd.phases().expect("validated load has at least one phase")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Solar,
    Storage,
    Generator,
    SubstationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedSource {
    pub id: String,
    pub bus: String,
    /// kW rating per connected phase; keys define the phase connection.
    pub pmax: PerPhase,
    pub qmin: PerPhase,
    pub qmax: PerPhase,
    #[serde(default)]
    pub can_grid_form: bool,
    pub kind: SourceKind,
}

impl DistributedSource {
    pub fn phases(&self) -> PhaseSet {
        self.pmax.phases().expect("validated source has at least one phase")
    }

    pub fn is_substation(&self) -> bool {
        self.kind == SourceKind::SubstationSource
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerElement {
    pub id: String,
    /// Primary side.
    pub from_bus: String,
    /// Secondary side.
    pub to_bus: String,
    #[serde(default)]
    pub is_distribution_xfmr: bool,
}

/// The feeder graph with electrical parameters. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_kv: f64,
    pub base_kva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<LineSegment>,
    #[serde(default)]
    pub switches: Vec<SwitchElement>,
    #[serde(default)]
    pub loads: Vec<LoadPoint>,
    #[serde(default)]
    pub sources: Vec<DistributedSource>,
    #[serde(default)]
    pub transformers: Vec<TransformerElement>,
}

/// Kind of a two-terminal element in the feeder graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Line,
    Switch,
    Transformer,
}

/// Reads and validates a network description.
pub fn parse_network(path: impl AsRef<Path>) -> Result<NetworkModel, FeederError> {
    let text = std::fs::read_to_string(path)?;
    NetworkModel::from_json(&text)
}

impl NetworkModel {
    pub fn from_json(text: &str) -> Result<NetworkModel, FeederError> {
        let net: NetworkModel = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn substation_bus(&self) -> &Bus {
        self.buses.iter().find(|b| b.is_substation).expect("validated network has a substation")
    }

    pub fn substation_source(&self) -> &DistributedSource {
        self.sources.iter().find(|s| s.is_substation()).expect("validated network has a substation source")
    }

    /// All two-terminal elements as `(kind, id, from, to)`.
    pub fn branches(&self) -> impl Iterator<Item = (BranchKind, &str, &str, &str)> {
        let lines = self.lines.iter().map(|l| (BranchKind::Line, l.id.as_str(), l.from_bus.as_str(), l.to_bus.as_str()));
        let switches = self
            .switches
            .iter()
            .map(|s| (BranchKind::Switch, s.id.as_str(), s.from_bus.as_str(), s.to_bus.as_str()));
        let xfmrs = self
            .transformers
            .iter()
            .map(|t| (BranchKind::Transformer, t.id.as_str(), t.from_bus.as_str(), t.to_bus.as_str()));
        lines.chain(switches).chain(xfmrs)
    }

    /// Phases carried by a transformer: those common to both terminals.
    pub fn transformer_phases(&self, t: &TransformerElement) -> PhaseSet {
        let from = self.bus(&t.from_bus).expect("validated").phases;
        let to = self.bus(&t.to_bus).expect("validated").phases;
        from.intersection(to).expect("validated transformer shares a phase")
    }

    pub fn total_pd(&self) -> f64 {
        self.loads.iter().map(|l| l.pd.total()).sum()
    }

    pub fn total_qd(&self) -> f64 {
        self.loads.iter().map(|l| l.qd.total()).sum()
    }

    pub fn total_svi(&self) -> f64 {
        self.loads.iter().map(|l| l.svi).sum()
    }

    /// Checks every structural and numeric invariant of the model.
    pub fn validate(&self) -> Result<(), FeederError> {
        if !(self.base_kv > 0.0) {
            return Err(schema("base_kv", "must be positive"));
        }
        if !(self.base_kva > 0.0) {
            return Err(schema("base_kva", "must be positive"));
        }

        let mut component_ids = BTreeSet::new();
        for id in self
            .buses
            .iter()
            .map(|b| b.id.as_str())
            .chain(self.branches().map(|(_, id, _, _)| id))
        {
            if !component_ids.insert(id) {
                return Err(FeederError::DuplicateId(id.to_string()));
            }
        }
        let mut seen = BTreeSet::new();
        for id in self.loads.iter().map(|l| &l.id) {
            if !seen.insert(id) {
                return Err(FeederError::DuplicateId(id.clone()));
            }
        }
        seen.clear();
        for id in self.sources.iter().map(|s| &s.id) {
            if !seen.insert(id) {
                return Err(FeederError::DuplicateId(id.clone()));
            }
        }

        for b in &self.buses {
            if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
                return Err(schema(format!("buses[{}].vmin", b.id), "require 0 < vmin <= vmax"));
            }
        }
        let n_sub = self.buses.iter().filter(|b| b.is_substation).count();
        if n_sub != 1 {
            return Err(FeederError::SubstationCount(n_sub));
        }

        let buses: HashMap<&str, &Bus> = self.buses.iter().map(|b| (b.id.as_str(), b)).collect();
        let lookup = |element: &str, bus: &str| {
            buses.get(bus).copied().ok_or_else(|| FeederError::DanglingBus {
                element: element.to_string(),
                bus: bus.to_string(),
            })
        };

        for l in &self.lines {
            let from = lookup(&l.id, &l.from_bus)?;
            let to = lookup(&l.id, &l.to_bus)?;
            check_branch_phases(&l.id, l.phases, from, to)?;
            check_matrix(&format!("lines[{}].r", l.id), &l.r, l.phases.len())?;
            check_matrix(&format!("lines[{}].x", l.id), &l.x, l.phases.len())?;
            if !(l.s_max >= 0.0) {
                return Err(schema(format!("lines[{}].s_max", l.id), "must be >= 0"));
            }
        }
        for s in &self.switches {
            let from = lookup(&s.id, &s.from_bus)?;
            let to = lookup(&s.id, &s.to_bus)?;
            check_branch_phases(&s.id, s.phases, from, to)?;
            if !(s.risk >= 0.0) {
                return Err(schema(format!("switches[{}].risk", s.id), "must be >= 0"));
            }
            if !(s.s_max >= 0.0) {
                return Err(schema(format!("switches[{}].s_max", s.id), "must be >= 0"));
            }
        }
        for t in &self.transformers {
            let from = lookup(&t.id, &t.from_bus)?;
            let to = lookup(&t.id, &t.to_bus)?;
            if t.from_bus == t.to_bus {
                return Err(schema(format!("transformers[{}]", t.id), "terminals must differ"));
            }
            if from.phases.intersection(to.phases).is_none() {
                return Err(schema(format!("transformers[{}]", t.id), "terminals share no phase"));
            }
        }
        for l in &self.loads {
            let bus = lookup(&l.id, &l.bus)?;
            let phases = l.pd.phases().ok_or_else(|| schema(format!("loads[{}].pd", l.id), "no phases"))?;
            if !phases.is_subset(bus.phases) {
                return Err(schema(format!("loads[{}].pd", l.id), "phase not present at bus"));
            }
            if l.pd.values().any(|v| !(v >= 0.0)) {
                return Err(schema(format!("loads[{}].pd", l.id), "must be >= 0"));
            }
            if l.qd.0.keys().any(|p| !phases.contains(*p)) || l.qd.values().any(|v| !v.is_finite()) {
                return Err(schema(format!("loads[{}].qd", l.id), "phases must match pd"));
            }
            if !(l.svi >= 0.0) {
                return Err(schema(format!("loads[{}].svi", l.id), "must be >= 0"));
            }
        }
        for s in &self.sources {
            let bus = lookup(&s.id, &s.bus)?;
            let phases = s.pmax.phases().ok_or_else(|| schema(format!("sources[{}].pmax", s.id), "no phases"))?;
            if !phases.is_subset(bus.phases) {
                return Err(schema(format!("sources[{}].pmax", s.id), "phase not present at bus"));
            }
            if s.pmax.values().any(|v| !(v >= 0.0)) {
                return Err(schema(format!("sources[{}].pmax", s.id), "must be >= 0"));
            }
            for p in phases.iter() {
                if !(s.qmin.get(p) <= s.qmax.get(p)) {
                    return Err(schema(format!("sources[{}].qmin", s.id), "require qmin <= qmax"));
                }
            }
            if s.qmin.0.keys().chain(s.qmax.0.keys()).any(|p| !phases.contains(*p)) {
                return Err(schema(format!("sources[{}].qmax", s.id), "phases must match pmax"));
            }
        }
        let sub_sources: Vec<_> = self.sources.iter().filter(|s| s.is_substation()).collect();
        let sub_bus = &self.substation_bus().id;
        if sub_sources.len() != 1 || &sub_sources[0].bus != sub_bus {
            return Err(FeederError::SubstationSourceCount(sub_sources.len()));
        }

        self.check_topology()
    }

    fn check_topology(&self) -> Result<(), FeederError> {
        let idx = self.bus_index();
        let mut all = UnionFind::<usize>::new(self.buses.len());
        let mut blocks = UnionFind::<usize>::new(self.buses.len());
        for (kind, id, from, to) in self.branches() {
            let (a, b) = (idx[from], idx[to]);
            all.union(a, b);
            if kind != BranchKind::Switch && !blocks.union(a, b) {
                return Err(FeederError::NonRadialBlock(id.to_string()));
            }
        }
        for s in &self.switches {
            if blocks.equiv(idx[s.from_bus.as_str()], idx[s.to_bus.as_str()]) {
                return Err(FeederError::SelfLoopSwitch(s.id.clone()));
            }
        }
        let root = idx[self.substation_bus().id.as_str()];
        let unreachable: Vec<String> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(i, _)| !all.equiv(*i, root))
            .map(|(_, b)| b.id.clone())
            .collect();
        if !unreachable.is_empty() {
            return Err(FeederError::Disconnected(unreachable));
        }
        Ok(())
    }

    /// Loads grouped by bus id.
    pub fn loads_by_bus(&self) -> BTreeMap<&str, Vec<&LoadPoint>> {
        let mut m: BTreeMap<&str, Vec<&LoadPoint>> = BTreeMap::new();
        for l in &self.loads {
            m.entry(l.bus.as_str()).or_default().push(l);
        }
        m
    }
}

fn check_branch_phases(id: &str, phases: PhaseSet, from: &Bus, to: &Bus) -> Result<(), FeederError> {
    if !phases.is_subset(from.phases) || !phases.is_subset(to.phases) {
        return Err(schema(format!("{id}.phases"), "phase not present at a terminal bus"));
    }
    Ok(())
}

fn check_matrix(field: &str, m: &[Vec<f64>], n: usize) -> Result<(), FeederError> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(schema(field, format!("expected a {n}x{n} matrix")));
    }
    for i in 0..n {
        for j in 0..n {
            if !m[i][j].is_finite() {
                return Err(schema(field, "non-finite entry"));
            }
            if m[i][j] != m[j][i] {
                return Err(schema(field, "matrix must be symmetric"));
            }
        }
    }
    Ok(())
}
