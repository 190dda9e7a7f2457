//! Exact solution of small instances by branch-and-bound over switch and
//! inverter binaries, with islands derived combinatorially and each island's
//! dispatch checked by the LP.
//!
//! Leaves are ranked by a single total order: shed cost, then number of
//! closed switches, then the switch vector (open before closed), then risk,
//! then the inverter vector, then the energization vector (energized first).
//! [`solve`] and [`enumerate_all`] share that order, so their optima agree.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::debug;
use serde::Serialize;
use thiserror::Error;

use crate::blocks::{Island, TopologyError};
use crate::lindistflow::{assemble_dispatch_lp, DispatchSolution};
use crate::lp::LpStatus;
use crate::omcp::{
    objective_value, risk_value, shed_cost, Configuration, Controllability, Domain, Objective, ObjectiveReport,
    OmcpInstance, VulnerabilityStats,
};

pub const DEFAULT_MAX_BINARIES: usize = 40;
pub const ENUMERATION_MAX_BINARIES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("{count} free binaries exceed the exact-solver limit of {limit}; export the MILP instead")]
    TooManyBinaries { count: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub max_binaries: usize,
    /// Disabling pruning explores the full tree; used to check pruning soundness.
    pub prune: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_binaries: DEFAULT_MAX_BINARIES, prune: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct IslandKey {
    blocks: Vec<usize>,
    closed: Vec<String>,
    former: String,
    substation_enabled: bool,
}

/// Island dispatch results shared between solves on the same network and
/// block graph. Keyed by island content only, so it is valid across
/// thresholds, objectives and regimes.
#[derive(Debug, Default, Clone)]
pub struct LpCache {
    inner: Arc<Mutex<HashMap<IslandKey, Arc<DispatchSolution>>>>,
}

impl LpCache {
    pub fn new() -> LpCache {
        LpCache::default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of evaluating one complete switch and inverter assignment.
#[derive(Debug, Clone, PartialEq)]
struct Leaf {
    sw: Vec<bool>,
    inv: Vec<bool>,
    energized: Vec<bool>,
    islands: Vec<Island>,
    island_on: Vec<bool>,
    risk: f64,
    shed: f64,
}

fn cmp_bool_desc(a: &[bool], b: &[bool]) -> Ordering {
    b.cmp(a)
}

impl Leaf {
    fn closed(&self) -> usize {
        self.sw.iter().filter(|&&c| c).count()
    }

    fn rank(&self, other: &Leaf) -> Ordering {
        self.shed
            .total_cmp(&other.shed)
            .then_with(|| self.closed().cmp(&other.closed()))
            .then_with(|| self.sw.cmp(&other.sw))
            .then_with(|| self.risk.total_cmp(&other.risk))
            .then_with(|| self.inv.cmp(&other.inv))
            .then_with(|| cmp_bool_desc(&self.energized, &other.energized))
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes: usize,
    /// Complete (switch, inverter) assignments evaluated.
    pub topologies_evaluated: usize,
    pub pruned_by_bound: usize,
    pub pruned_infeasible: usize,
    pub lp_solves: usize,
    pub lp_failures: usize,
}

struct Evaluator<'a> {
    inst: &'a OmcpInstance,
    cache: &'a LpCache,
    stats: SearchStats,
    diagnostics: Vec<String>,
}

impl<'a> Evaluator<'a> {
    fn forming_set(&self, inv: &[bool]) -> BTreeSet<String> {
        let mut f: BTreeSet<String> =
            self.inst.inverters.iter().zip(inv).filter(|(_, &on)| on).map(|(s, _)| s.clone()).collect();
        if !self.inst.substation_off {
            f.insert(self.inst.network.substation_source().id.clone());
        }
        f
    }

    fn island_dispatch(&mut self, isl: &Island) -> Arc<DispatchSolution> {
        let key = IslandKey {
            blocks: isl.blocks.clone(),
            closed: isl.closed_switches.clone(),
            former: isl.forming_source.clone().unwrap_or_default(),
            substation_enabled: !self.inst.substation_off,
        };
        if let Some(hit) = self.cache.inner.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let lp = assemble_dispatch_lp(
            &self.inst.network,
            &self.inst.blocks,
            std::slice::from_ref(isl),
            &[true],
            self.inst.dispatch_options(),
        );
        let (_, ds) = lp.solve();
        self.stats.lp_solves += 1;
        if ds.status == LpStatus::NumericalFailure {
            self.stats.lp_failures += 1;
            self.diagnostics.push(format!("numerical failure on island {:?}; treated as infeasible", isl.blocks));
        }
        let ds = Arc::new(ds);
        self.cache.inner.lock().unwrap().entry(key).or_insert(ds).clone()
    }

    fn eval_leaf(&mut self, sw: &[bool], inv: &[bool]) -> Option<Leaf> {
        self.stats.topologies_evaluated += 1;
        let inst = self.inst;
        let bg = &inst.blocks;
        let islands = match bg.islands_for(sw, &self.forming_set(inv)) {
            Ok(i) => i,
            Err(TopologyError::Cycle(_)) | Err(TopologyError::MultipleForming { .. }) => return None,
            Err(e) => panic!("inconsistent instance: {e}"),
        };
        let sw_risk = if inst.policy.include_switch_risk {
            bg.edges.iter().zip(sw).filter(|(_, &c)| c).map(|(e, _)| e.risk).sum()
        } else {
            0.0
        };
        if !inst.policy.admits(sw_risk) {
            return None;
        }

        let mut candidates: Vec<usize> = Vec::new();
        for (k, isl) in islands.iter().enumerate() {
            if !isl.is_energized() {
                continue;
            }
            let block_risk: f64 = isl.blocks.iter().map(|&b| bg.block(b).risk).sum();
            if !inst.policy.admits(sw_risk + block_risk) {
                continue;
            }
            if self.island_dispatch(isl).feasible {
                candidates.push(k);
            }
        }

        let mut best: Option<(Vec<bool>, Vec<bool>, f64, f64)> = None;
        for mask in 0u64..(1u64 << candidates.len()) {
            let mut energized = vec![false; bg.len()];
            let mut island_on = vec![false; islands.len()];
            for (bit, &k) in candidates.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    island_on[k] = true;
                    for &b in &islands[k].blocks {
                        energized[b - 1] = true;
                    }
                }
            }
            let risk = risk_value(bg, &energized, sw, inst.policy.include_switch_risk);
            if !inst.policy.admits(risk) {
                continue;
            }
            let shed = shed_cost(bg, &energized, inst.objective);
            let better = match &best {
                None => true,
                Some((be, _, bs, br)) => shed
                    .total_cmp(bs)
                    .then_with(|| risk.total_cmp(br))
                    .then_with(|| cmp_bool_desc(&energized, be))
                    .is_lt(),
            };
            if better {
                best = Some((energized, island_on, shed, risk));
            }
        }
        let (energized, island_on, shed, risk) = best.expect("the empty selection fits any budget");
        Some(Leaf { sw: sw.to_vec(), inv: inv.to_vec(), energized, islands, island_on, risk, shed })
    }

    fn configuration(&mut self, leaf: &Leaf) -> Configuration {
        let mut dispatch = DispatchSolution::empty();
        let on: Vec<Island> =
            leaf.islands.iter().zip(&leaf.island_on).filter(|(_, &on)| on).map(|(i, _)| i.clone()).collect();
        for isl in &on {
            dispatch.merge((*self.island_dispatch(isl)).clone());
        }
        Configuration {
            switch_closed: leaf.sw.clone(),
            switch_ids: self.inst.blocks.edges.iter().map(|e| e.switch_id.clone()).collect(),
            inverter_forming: leaf.inv.clone(),
            inverter_ids: self.inst.inverters.clone(),
            energized: leaf.energized.clone(),
            islands: leaf.islands.clone(),
            dispatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Switch(usize),
    Inverter(usize),
}

struct Search<'a> {
    ev: Evaluator<'a>,
    order: Vec<Var>,
    sw: Vec<Option<bool>>,
    inv: Vec<Option<bool>>,
    home: Vec<usize>,
    incumbent: Option<Leaf>,
    prune: bool,
}

impl Search<'_> {
    /// Cheap infeasibility tests on the decided part of the assignment.
    fn node_infeasible(&self) -> bool {
        let inst = self.ev.inst;
        let bg = &inst.blocks;
        let n = bg.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut sw_risk = 0.0;
        for (e, s) in bg.edges.iter().zip(&self.sw) {
            if *s == Some(true) {
                let (a, b) = (find(&mut parent, e.a - 1), find(&mut parent, e.b - 1));
                if a == b {
                    return true;
                }
                parent[a] = b;
                sw_risk += e.risk;
            }
        }
        if inst.policy.include_switch_risk && !inst.policy.admits(sw_risk) {
            return true;
        }
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut formers: Vec<usize> = self.inv.iter().enumerate().filter(|(_, v)| **v == Some(true)).map(|(k, _)| self.home[k]).collect();
        if !inst.substation_off {
            formers.push(bg.substation_block());
        }
        for blk in formers {
            let r = find(&mut parent, blk - 1);
            *seen.entry(r).or_default() += 1;
            if seen[&r] >= 2 {
                return true;
            }
        }
        false
    }

    /// Shed cost of the blocks that no completion can energize.
    fn lower_bound(&self) -> f64 {
        let inst = self.ev.inst;
        let bg = &inst.blocks;
        let closed_risk: f64 = if inst.policy.include_switch_risk {
            bg.edges.iter().zip(&self.sw).filter(|(_, s)| **s == Some(true)).map(|(e, _)| e.risk).sum()
        } else {
            0.0
        };
        let mut reach = vec![false; bg.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut start: Vec<usize> =
            self.inv.iter().enumerate().filter(|(_, v)| **v != Some(false)).map(|(k, _)| self.home[k]).collect();
        if !inst.substation_off {
            start.push(bg.substation_block());
        }
        for b in start {
            if !reach[b - 1] {
                reach[b - 1] = true;
                queue.push_back(b);
            }
        }
        while let Some(b) = queue.pop_front() {
            for (e, s) in bg.edges.iter().zip(&self.sw) {
                if *s == Some(false) {
                    continue;
                }
                let other = if e.a == b {
                    e.b
                } else if e.b == b {
                    e.a
                } else {
                    continue;
                };
                if !reach[other - 1] {
                    reach[other - 1] = true;
                    queue.push_back(other);
                }
            }
        }
        let possible: Vec<bool> = bg
            .blocks
            .iter()
            .zip(&reach)
            .map(|(blk, &r)| r && inst.policy.admits(closed_risk + blk.risk))
            .collect();
        shed_cost(bg, &possible, inst.objective)
    }

    fn dfs(&mut self, depth: usize) {
        self.ev.stats.nodes += 1;
        if self.node_infeasible() {
            self.ev.stats.pruned_infeasible += 1;
            return;
        }
        if self.prune {
            if let Some(inc) = &self.incumbent {
                if self.lower_bound() > inc.shed {
                    self.ev.stats.pruned_by_bound += 1;
                    return;
                }
            }
        }
        if depth == self.order.len() {
            let sw: Vec<bool> = self.sw.iter().map(|v| v.unwrap()).collect();
            let inv: Vec<bool> = self.inv.iter().map(|v| v.unwrap()).collect();
            if let Some(leaf) = self.ev.eval_leaf(&sw, &inv) {
                let better = self.incumbent.as_ref().is_none_or(|inc| leaf.rank(inc).is_lt());
                if better {
                    self.incumbent = Some(leaf);
                }
            }
            return;
        }
        let var = self.order[depth];
        for value in [false, true] {
            match var {
                Var::Switch(k) => self.sw[k] = Some(value),
                Var::Inverter(k) => self.inv[k] = Some(value),
            }
            self.dfs(depth + 1);
        }
        match var {
            Var::Switch(k) => self.sw[k] = None,
            Var::Inverter(k) => self.inv[k] = None,
        }
    }
}

/// Result of an exact solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub objective: Objective,
    pub controllability: Controllability,
    pub threshold: f64,
    pub include_switch_risk: bool,
    pub substation_off: bool,
    pub configuration: Configuration,
    pub risk: f64,
    pub total_risk: f64,
    pub risk_fraction: f64,
    pub report: ObjectiveReport,
    pub vulnerability: VulnerabilityStats,
    /// True when the tree was exhausted with sound pruning only.
    pub optimal: bool,
    pub stats: SearchStats,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

impl SolveReport {
    pub fn shed_cost(&self) -> f64 {
        self.report.shed_cost
    }
}

fn home_blocks(inst: &OmcpInstance) -> Vec<usize> {
    inst.inverters
        .iter()
        .map(|id| {
            let src = inst.network.sources.iter().find(|s| &s.id == id).expect("inverter exists");
            inst.blocks.block_of(&src.bus).expect("source bus in a block")
        })
        .collect()
}

fn branch_order(inst: &OmcpInstance) -> Vec<Var> {
    let bg = &inst.blocks;
    let mut sw: Vec<usize> = inst
        .switch_domains()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == Domain::Free)
        .map(|(k, _)| k)
        .collect();
    let adj_load = |k: usize| bg.block(bg.edges[k].a).total_pd + bg.block(bg.edges[k].b).total_pd;
    sw.sort_by(|&x, &y| adj_load(y).total_cmp(&adj_load(x)).then(x.cmp(&y)));
    let mut order: Vec<Var> = sw.into_iter().map(Var::Switch).collect();
    order.extend(
        inst.inverter_domains().iter().enumerate().filter(|(_, d)| **d == Domain::Free).map(|(k, _)| Var::Inverter(k)),
    );
    order
}

fn fixed_start(inst: &OmcpInstance) -> (Vec<Option<bool>>, Vec<Option<bool>>) {
    let conv = |d: &Domain| match d {
        Domain::Free => None,
        Domain::Fixed(v) => Some(*v),
    };
    (inst.switch_domains().iter().map(conv).collect(), inst.inverter_domains().iter().map(conv).collect())
}

fn report(inst: &OmcpInstance, ev: &mut Evaluator, leaf: &Leaf, optimal: bool, start: Instant) -> SolveReport {
    let configuration = ev.configuration(leaf);
    SolveReport {
        objective: inst.objective,
        controllability: inst.controllability,
        threshold: inst.policy.threshold,
        include_switch_risk: inst.policy.include_switch_risk,
        substation_off: inst.substation_off,
        risk: leaf.risk,
        total_risk: inst.policy.total,
        risk_fraction: leaf.risk / inst.policy.total,
        report: objective_value(&leaf.energized, inst.objective, &inst.blocks),
        vulnerability: crate::omcp::vulnerability_stats(&leaf.energized, &inst.blocks),
        configuration,
        optimal,
        stats: ev.stats,
        diagnostics: ev.diagnostics.clone(),
        wall_time: start.elapsed(),
    }
}

/// Solves `inst` to proven optimality with default options and a private cache.
pub fn solve(inst: &OmcpInstance) -> Result<SolveReport, SolveError> {
    solve_with(inst, SolveOptions::default(), &LpCache::new())
}

pub fn solve_with(inst: &OmcpInstance, opts: SolveOptions, cache: &LpCache) -> Result<SolveReport, SolveError> {
    let count = inst.free_binaries();
    if count > opts.max_binaries {
        return Err(SolveError::TooManyBinaries { count, limit: opts.max_binaries });
    }
    let start = Instant::now();
    let (sw, inv) = fixed_start(inst);
    let mut search = Search {
        ev: Evaluator { inst, cache, stats: SearchStats::default(), diagnostics: Vec::new() },
        order: branch_order(inst),
        sw,
        inv,
        home: home_blocks(inst),
        incumbent: None,
        prune: opts.prune,
    };
    search.dfs(0);
    // the all-open, all-following assignment is only infeasible when fixed
    // domains forbid it; energizing nothing is then still available
    let leaf = search.incumbent.take().unwrap_or_else(|| {
        let (sw, inv) = fixed_start(inst);
        let bg = &inst.blocks;
        Leaf {
            sw: sw.iter().map(|v| v.unwrap_or(false)).collect(),
            inv: inv.iter().map(|v| v.unwrap_or(false)).collect(),
            energized: vec![false; bg.len()],
            islands: Vec::new(),
            island_on: Vec::new(),
            risk: 0.0,
            shed: shed_cost(bg, &vec![false; bg.len()], inst.objective),
        }
    });
    debug!("solve: {:?}", search.ev.stats);
    Ok(report(inst, &mut search.ev, &leaf, true, start))
}

/// One feasible assignment found by [`enumerate_all`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumeratedConfiguration {
    pub configuration: Configuration,
    pub shed_cost: f64,
    pub risk: f64,
}

/// Evaluates every admissible assignment. Infeasible topologies are omitted.
/// Entries are sorted by the solver's ranking, so the first is the optimum.
pub fn enumerate_all(inst: &OmcpInstance) -> Result<Vec<EnumeratedConfiguration>, SolveError> {
    enumerate_all_with(inst, &LpCache::new())
}

pub fn enumerate_all_with(inst: &OmcpInstance, cache: &LpCache) -> Result<Vec<EnumeratedConfiguration>, SolveError> {
    let count = inst.free_binaries();
    if count > ENUMERATION_MAX_BINARIES {
        return Err(SolveError::TooManyBinaries { count, limit: ENUMERATION_MAX_BINARIES });
    }
    let (sw0, inv0) = fixed_start(inst);
    let free: Vec<Var> = sw0
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| Var::Switch(k))
        .chain(inv0.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(k, _)| Var::Inverter(k)))
        .collect();
    let mut ev = Evaluator { inst, cache, stats: SearchStats::default(), diagnostics: Vec::new() };
    let mut leaves: Vec<Leaf> = Vec::new();
    for mask in 0u64..(1u64 << free.len()) {
        let mut sw: Vec<bool> = sw0.iter().map(|v| v.unwrap_or(false)).collect();
        let mut inv: Vec<bool> = inv0.iter().map(|v| v.unwrap_or(false)).collect();
        for (bit, var) in free.iter().enumerate() {
            let v = mask & (1 << bit) != 0;
            match *var {
                Var::Switch(k) => sw[k] = v,
                Var::Inverter(k) => inv[k] = v,
            }
        }
        if let Some(leaf) = ev.eval_leaf(&sw, &inv) {
            leaves.push(leaf);
        }
    }
    leaves.sort_by(|a, b| a.rank(b));
    Ok(leaves
        .iter()
        .map(|l| EnumeratedConfiguration { configuration: ev.configuration(l), shed_cost: l.shed, risk: l.risk })
        .collect())
}
