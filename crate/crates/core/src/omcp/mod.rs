//! The optimal microgrid configuration problem: controllability regimes,
//! the wildfire-risk budget, shed-cost objectives, and MILP export.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::blocks::{BlockGraph, Island};
use crate::feeder::NetworkModel;
use crate::lindistflow::{DispatchOptions, DispatchSolution};

mod milp;

pub use milp::{export_milp, write_mps, MilpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Controllability {
    NoMicrogrids,
    StaticMicrogrids,
    ExpandingMicrogrids,
    NetworkingMicrogrids,
}

impl Controllability {
    pub const ALL: [Controllability; 4] = [
        Controllability::NoMicrogrids,
        Controllability::StaticMicrogrids,
        Controllability::ExpandingMicrogrids,
        Controllability::NetworkingMicrogrids,
    ];

    pub fn switches_free(self) -> bool {
        self != Controllability::StaticMicrogrids
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Controllability::NoMicrogrids => "none",
            Controllability::StaticMicrogrids => "static",
            Controllability::ExpandingMicrogrids => "expanding",
            Controllability::NetworkingMicrogrids => "networking",
        }
    }
}

impl fmt::Display for Controllability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown value `{0}`")]
pub struct ParseEnumError(pub String);

impl FromStr for Controllability {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Controllability::NoMicrogrids),
            "static" => Ok(Controllability::StaticMicrogrids),
            "expanding" => Ok(Controllability::ExpandingMicrogrids),
            "networking" => Ok(Controllability::NetworkingMicrogrids),
            _ => Err(ParseEnumError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Objective {
    LoadOnly,
    VulnerabilityOnly,
    VulnerabilityWeighted,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::LoadOnly, Objective::VulnerabilityOnly, Objective::VulnerabilityWeighted];

    pub fn short_name(self) -> &'static str {
        match self {
            Objective::LoadOnly => "lo",
            Objective::VulnerabilityOnly => "vo",
            Objective::VulnerabilityWeighted => "vl",
        }
    }

    /// Cost coefficient of shedding `block`, before the weighted objective's
    /// division by 1000.
    fn raw_weight(self, bg: &BlockGraph, block: usize) -> f64 {
        let b = bg.block(block);
        match self {
            Objective::LoadOnly => b.total_pd,
            Objective::VulnerabilityOnly => b.total_svi,
            Objective::VulnerabilityWeighted => b.total_pd * b.total_svi,
        }
    }

    fn scale(self, raw: f64) -> f64 {
        match self {
            Objective::VulnerabilityWeighted => raw / 1000.0,
            _ => raw,
        }
    }

    /// Per-block value under this metric: kW, `v`, or MW times `v`.
    pub fn block_value(self, bg: &BlockGraph, block: usize) -> f64 {
        self.scale(self.raw_weight(bg, block))
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Objective {
    type Err = ParseEnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lo" => Ok(Objective::LoadOnly),
            "vo" => Ok(Objective::VulnerabilityOnly),
            "vl" | "vw" => Ok(Objective::VulnerabilityWeighted),
            _ => Err(ParseEnumError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OmcpError {
    #[error("risk threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error("total risk is zero; the risk budget is undefined")]
    ZeroTotalRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskPolicy {
    pub threshold: f64,
    pub include_switch_risk: bool,
    pub total: f64,
}

impl RiskPolicy {
    pub fn new(bg: &BlockGraph, threshold: f64, include_switch_risk: bool) -> Result<RiskPolicy, OmcpError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(OmcpError::Threshold(threshold));
        }
        let total = bg.total_risk(include_switch_risk);
        if !(total > 0.0) {
            return Err(OmcpError::ZeroTotalRisk);
        }
        Ok(RiskPolicy { threshold, include_switch_risk, total })
    }

    /// Absolute risk budget `threshold * total`.
    pub fn budget(&self) -> f64 {
        self.threshold * self.total
    }

    /// Whether an absolute risk value fits the budget.
    pub fn admits(&self, risk: f64) -> bool {
        risk / self.total <= self.threshold + 1e-12
    }
}

/// Admissible values of one binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domain {
    Free,
    Fixed(bool),
}

/// A fully posed instance. Immutable; share by reference across workers.
#[derive(Debug, Clone)]
pub struct OmcpInstance {
    pub network: NetworkModel,
    pub blocks: BlockGraph,
    pub policy: RiskPolicy,
    pub objective: Objective,
    pub controllability: Controllability,
    /// De-energizes the substation source: it neither forms nor injects.
    pub substation_off: bool,
    /// Forming-capable sources other than the substation, in network order.
    pub inverters: Vec<String>,
    /// Designated forming source of each block under static and expanding regimes.
    pub designated: Vec<Option<String>>,
}

impl OmcpInstance {
    pub fn new(
        network: NetworkModel,
        blocks: BlockGraph,
        objective: Objective,
        controllability: Controllability,
        policy: RiskPolicy,
    ) -> OmcpInstance {
        let inverters: Vec<String> =
            network.sources.iter().filter(|s| s.can_grid_form && !s.is_substation()).map(|s| s.id.clone()).collect();
        let designated = blocks
            .blocks
            .iter()
            .map(|b| {
                if b.contains_substation {
                    return Some(network.substation_source().id.clone());
                }
                // Largest rating, then smallest id.
                network
                    .sources
                    .iter()
                    .filter(|s| inverters.contains(&s.id) && b.sources.contains(&s.id))
                    .max_by(|x, y| x.pmax.total().total_cmp(&y.pmax.total()).then_with(|| y.id.cmp(&x.id)))
                    .map(|s| s.id.clone())
            })
            .collect();
        OmcpInstance { network, blocks, policy, objective, controllability, substation_off: false, inverters, designated }
    }

    pub fn with_substation_off(mut self, off: bool) -> OmcpInstance {
        self.substation_off = off;
        self
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<OmcpInstance, OmcpError> {
        let mut inst = self.clone();
        inst.policy = RiskPolicy::new(&self.blocks, threshold, self.policy.include_switch_risk)?;
        Ok(inst)
    }

    pub fn dispatch_options(&self) -> DispatchOptions {
        DispatchOptions { substation_enabled: !self.substation_off }
    }

    pub fn switch_domains(&self) -> Vec<Domain> {
        let d = if self.controllability.switches_free() { Domain::Free } else { Domain::Fixed(false) };
        vec![d; self.blocks.edges.len()]
    }

    /// Domain of each entry of [`Self::inverters`].
    pub fn inverter_domains(&self) -> Vec<Domain> {
        self.inverters
            .iter()
            .map(|id| match self.controllability {
                Controllability::NoMicrogrids => Domain::Fixed(false),
                Controllability::NetworkingMicrogrids => Domain::Free,
                Controllability::StaticMicrogrids | Controllability::ExpandingMicrogrids => {
                    Domain::Fixed(self.designated.iter().any(|d| d.as_deref() == Some(id.as_str())))
                }
            })
            .collect()
    }

    /// Number of free binaries.
    pub fn free_binaries(&self) -> usize {
        self.switch_domains().iter().chain(&self.inverter_domains()).filter(|d| **d == Domain::Free).count()
    }
}

/// Shed cost under each metric for a block energization vector.
///
/// Always sums in block order so that identical vectors give bit-identical
/// values; the weighted metric divides once at the end. Folding from `0.0`
/// rather than calling `sum` keeps an empty selection at `+0.0`.
pub fn shed_cost(bg: &BlockGraph, energized: &[bool], obj: Objective) -> f64 {
    let raw: f64 = bg.blocks.iter().zip(energized).filter(|(_, &on)| !on).map(|(b, _)| obj.raw_weight(bg, b.id)).fold(0.0, |a, w| a + w);
    obj.scale(raw)
}

/// Served amount under each metric.
pub fn served_value(bg: &BlockGraph, energized: &[bool], obj: Objective) -> f64 {
    let raw: f64 = bg.blocks.iter().zip(energized).filter(|(_, &on)| on).map(|(b, _)| obj.raw_weight(bg, b.id)).fold(0.0, |a, w| a + w);
    obj.scale(raw)
}

pub fn total_value(bg: &BlockGraph, obj: Objective) -> f64 {
    served_value(bg, &vec![true; bg.len()], obj)
}

/// Absolute risk of an energization and switch pattern.
pub fn risk_value(bg: &BlockGraph, energized: &[bool], switch_closed: &[bool], include_switch_risk: bool) -> f64 {
    let blocks: f64 = bg.blocks.iter().zip(energized).filter(|(_, &on)| on).map(|(b, _)| b.risk).fold(0.0, |a, r| a + r);
    if !include_switch_risk {
        return blocks;
    }
    let sw: f64 = bg.edges.iter().zip(switch_closed).filter(|(_, &c)| c).map(|(e, _)| e.risk).fold(0.0, |a, r| a + r);
    blocks + sw
}

/// A complete decision: switch and inverter states, the resulting islands
/// and energization, and the dispatch that makes it feasible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Configuration {
    /// Aligned with the block graph's edges.
    pub switch_closed: Vec<bool>,
    pub switch_ids: Vec<String>,
    /// Aligned with the instance's inverter list.
    pub inverter_forming: Vec<bool>,
    pub inverter_ids: Vec<String>,
    /// Per block, index `i` is block `i + 1`.
    pub energized: Vec<bool>,
    pub islands: Vec<Island>,
    pub dispatch: DispatchSolution,
}

impl Configuration {
    pub fn energized_blocks(&self) -> Vec<usize> {
        self.energized.iter().enumerate().filter(|(_, &e)| e).map(|(i, _)| i + 1).collect()
    }

    pub fn closed_switches(&self) -> Vec<&str> {
        self.switch_ids.iter().zip(&self.switch_closed).filter(|(_, &c)| c).map(|(s, _)| s.as_str()).collect()
    }

    pub fn switch_states(&self) -> BTreeMap<String, bool> {
        self.switch_ids.iter().cloned().zip(self.switch_closed.iter().copied()).collect()
    }
}

/// `R / R_total` for a configuration.
pub fn risk_of(config: &Configuration, bg: &BlockGraph, policy: &RiskPolicy) -> f64 {
    risk_value(bg, &config.energized, &config.switch_closed, policy.include_switch_risk) / policy.total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub shed: f64,
    pub served: f64,
    pub total: f64,
    pub served_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveReport {
    /// Shed cost of the selected objective.
    pub shed_cost: f64,
    pub load_only: MetricReport,
    pub vulnerability_only: MetricReport,
    pub vulnerability_weighted: MetricReport,
}

impl ObjectiveReport {
    pub fn metric(&self, obj: Objective) -> &MetricReport {
        match obj {
            Objective::LoadOnly => &self.load_only,
            Objective::VulnerabilityOnly => &self.vulnerability_only,
            Objective::VulnerabilityWeighted => &self.vulnerability_weighted,
        }
    }
}

fn metric(bg: &BlockGraph, energized: &[bool], obj: Objective) -> MetricReport {
    let total = total_value(bg, obj);
    let served = served_value(bg, energized, obj);
    MetricReport {
        shed: shed_cost(bg, energized, obj),
        served,
        total,
        served_pct: if total > 0.0 { 100.0 * served / total } else { 100.0 },
    }
}

/// Shed cost under `obj` plus served/total under every metric.
pub fn objective_value(energized: &[bool], obj: Objective, bg: &BlockGraph) -> ObjectiveReport {
    ObjectiveReport {
        shed_cost: shed_cost(bg, energized, obj),
        load_only: metric(bg, energized, Objective::LoadOnly),
        vulnerability_only: metric(bg, energized, Objective::VulnerabilityOnly),
        vulnerability_weighted: metric(bg, energized, Objective::VulnerabilityWeighted),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VulnerabilityStats {
    pub mean_served: Option<f64>,
    pub mean_shed: Option<f64>,
}

/// Mean block vulnerability among served and among shed blocks.
pub fn vulnerability_stats(energized: &[bool], bg: &BlockGraph) -> VulnerabilityStats {
    let mean = |want: bool| {
        let v: Vec<f64> =
            bg.blocks.iter().zip(energized).filter(|(_, &on)| on == want).map(|(b, _)| b.total_svi).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    VulnerabilityStats { mean_served: mean(true), mean_shed: mean(false) }
}
