//! Linearized unbalanced three-phase power flow and the single-period
//! dispatch LP for a fixed set of energized islands.
//!
//! Every branch is oriented `from_bus -> to_bus`, and `P`, `Q` are the flows
//! leaving `from_bus`. Along a line the squared voltage changes as
//! `W_to = W_from + M_P * P + M_Q * Q` (phase-wise, per unit). Switches and
//! transformers are zero-impedance connections.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::blocks::{BlockGraph, Island};
use crate::feeder::{BranchKind, LineSegment, NetworkModel, PerPhase, Phase, PhaseSet, SourceKind};
use crate::lp::{solve_lp, LpProblem, LpSolution, LpStatus, RowKind, Sense};

pub type Mat = Vec<Vec<f64>>;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SensitivityError {
    #[error("impedance matrix is {rows}x{cols}, expected {n}x{n}")]
    Dimension { rows: usize, cols: usize, n: usize },
    #[error("impedance matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
}

fn check_square_symmetric(m: &Mat, n: usize) -> Result<(), SensitivityError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(SensitivityError::Dimension { rows: m.len(), cols: m.first().map_or(0, Vec::len), n });
    }
    for i in 0..n {
        for k in i + 1..n {
            if (m[i][k] - m[k][i]).abs() > 1e-12 * (1.0 + m[i][k].abs()) {
                return Err(SensitivityError::Asymmetric(i, k));
            }
        }
    }
    Ok(())
}

/// Sensitivity matrices of a line from per-unit `r`, `x` restricted to `phases`.
///
/// Diagonals are `-2r` and `-2x`. Off the diagonal, for phases `(p, q)` where
/// `q` follows `p` in the cyclic order a -> b -> c -> a, `M_P = r - sqrt3 x`
/// and `M_Q = x + sqrt3 r`; for the reverse order the signs flip.
pub fn build_sensitivity_matrices(r: &Mat, x: &Mat, phases: PhaseSet) -> Result<(Mat, Mat), SensitivityError> {
    let n = phases.len();
    check_square_symmetric(r, n)?;
    check_square_symmetric(x, n)?;
    let ph: Vec<Phase> = phases.iter().collect();
    let mut mp = vec![vec![0.0; n]; n];
    let mut mq = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if i == k {
                mp[i][k] = -2.0 * r[i][k];
                mq[i][k] = -2.0 * x[i][k];
            } else {
                let leads = (ph[k].index() + 3 - ph[i].index()) % 3 == 1;
                let s = if leads { -1.0 } else { 1.0 };
                mp[i][k] = r[i][k] + s * SQRT3 * x[i][k];
                mq[i][k] = x[i][k] - s * SQRT3 * r[i][k];
            }
        }
    }
    Ok((mp, mq))
}

/// Impedance base in ohms.
pub fn z_base(net: &NetworkModel) -> f64 {
    net.base_kv * net.base_kv * 1000.0 / net.base_kva
}

/// Per-phase power base in kW (or kvar, kVA).
pub fn s_base_phase(net: &NetworkModel) -> f64 {
    net.base_kva / 3.0
}

/// The line's `r`, `x` matrices converted from ohms to per unit.
pub fn per_unit_impedance(net: &NetworkModel, line: &LineSegment) -> (Mat, Mat) {
    let zb = z_base(net);
    let conv = |m: &Mat| m.iter().map(|row| row.iter().map(|v| v / zb).collect()).collect();
    (conv(&line.r), conv(&line.x))
}

pub fn line_sensitivity(net: &NetworkModel, line: &LineSegment) -> Result<(Mat, Mat), SensitivityError> {
    let (r, x) = per_unit_impedance(net, line);
    build_sensitivity_matrices(&r, &x, line.phases)
}

/// Dispatch cost per per-unit of injection; only used to pick one point among
/// feasible dispatches.
pub fn source_cost(kind: SourceKind) -> f64 {
    match kind {
        SourceKind::SubstationSource => 1.0,
        SourceKind::Generator => 0.5,
        SourceKind::Storage => 0.2,
        SourceKind::Solar => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchOptions {
    /// When false the substation source neither forms nor injects.
    pub substation_enabled: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions { substation_enabled: true }
    }
}

#[derive(Debug, Clone)]
pub struct DispatchBranch {
    pub id: String,
    pub kind: BranchKind,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    /// Empty for zero-impedance branches.
    pub mp: Mat,
    pub mq: Mat,
    /// Per-phase box half-width in per unit, infinite when unlimited.
    pub limit: f64,
}

/// An assembled dispatch LP together with the index maps needed to read it.
#[derive(Debug, Clone)]
pub struct DispatchLp {
    pub problem: LpProblem,
    pub s_base: f64,
    pub buses: Vec<(String, PhaseSet)>,
    pub branches: Vec<DispatchBranch>,
    pub w: HashMap<(String, Phase), usize>,
    pub p: HashMap<(String, Phase), usize>,
    pub q: HashMap<(String, Phase), usize>,
    pub pg: HashMap<(String, Phase), usize>,
    pub qg: HashMap<(String, Phase), usize>,
    /// Per-unit demand on energized bus phases.
    pub pd: HashMap<(String, Phase), f64>,
    pub qd: HashMap<(String, Phase), f64>,
    /// Source id -> bus.
    pub source_bus: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSolution {
    pub feasible: bool,
    pub status: LpStatus,
    /// Squared voltage, per unit squared.
    pub w: BTreeMap<String, PerPhase>,
    /// Branch flows leaving `from_bus`, kW and kvar.
    pub p_flow: BTreeMap<String, PerPhase>,
    pub q_flow: BTreeMap<String, PerPhase>,
    /// Source injections, kW and kvar.
    pub pg: BTreeMap<String, PerPhase>,
    pub qg: BTreeMap<String, PerPhase>,
}

impl DispatchSolution {
    /// The trivially feasible dispatch with nothing energized.
    pub fn empty() -> DispatchSolution {
        DispatchSolution {
            feasible: true,
            status: LpStatus::Optimal,
            w: BTreeMap::new(),
            p_flow: BTreeMap::new(),
            q_flow: BTreeMap::new(),
            pg: BTreeMap::new(),
            qg: BTreeMap::new(),
        }
    }

    /// Combines dispatches of disjoint islands.
    pub fn merge(&mut self, other: DispatchSolution) {
        self.feasible &= other.feasible;
        if other.status != LpStatus::Optimal {
            self.status = other.status;
        }
        self.w.extend(other.w);
        self.p_flow.extend(other.p_flow);
        self.q_flow.extend(other.q_flow);
        self.pg.extend(other.pg);
        self.qg.extend(other.qg);
    }
}

/// Builds the dispatch LP for the islands flagged in `energized`.
///
/// Buses and branches of de-energized islands are left out entirely, which
/// is the same as fixing their flows and injections to zero and relaxing
/// their voltages.
pub fn assemble_dispatch_lp(
    net: &NetworkModel,
    bg: &BlockGraph,
    islands: &[Island],
    energized: &[bool],
    opts: DispatchOptions,
) -> DispatchLp {
    let sb = s_base_phase(net);
    let sub_src = net.substation_source();

    let mut live_blocks: BTreeSet<usize> = BTreeSet::new();
    let mut live_switches: BTreeSet<&str> = BTreeSet::new();
    let mut fixed_buses: BTreeSet<String> = BTreeSet::new();
    for (isl, &on) in islands.iter().zip(energized) {
        if !on {
            continue;
        }
        live_blocks.extend(isl.blocks.iter().copied());
        live_switches.extend(isl.closed_switches.iter().map(String::as_str));
        if opts.substation_enabled && isl.forming_source.as_deref() == Some(sub_src.id.as_str()) {
            fixed_buses.insert(sub_src.bus.clone());
        }
    }
    let bus_live = |b: &str| bg.block_of(b).is_some_and(|k| live_blocks.contains(&k));

    let mut lp = DispatchLp {
        problem: LpProblem::new(Sense::Minimize),
        s_base: sb,
        buses: Vec::new(),
        branches: Vec::new(),
        w: HashMap::new(),
        p: HashMap::new(),
        q: HashMap::new(),
        pg: HashMap::new(),
        qg: HashMap::new(),
        pd: HashMap::new(),
        qd: HashMap::new(),
        source_bus: BTreeMap::new(),
    };

    for b in net.buses.iter().filter(|b| bus_live(&b.id)) {
        lp.buses.push((b.id.clone(), b.phases));
        for ph in b.phases.iter() {
            let (lo, hi) = if fixed_buses.contains(&b.id) { (1.0, 1.0) } else { (b.vmin * b.vmin, b.vmax * b.vmax) };
            let j = lp.problem.add_var(format!("w_{}_{ph}", b.id), lo, hi, 0.0);
            lp.w.insert((b.id.clone(), ph), j);
        }
    }

    for l in net.lines.iter().filter(|l| bus_live(&l.from_bus)) {
        let (mp, mq) = line_sensitivity(net, l).expect("validated network");
        lp.branches.push(DispatchBranch {
            id: l.id.clone(),
            kind: BranchKind::Line,
            from: l.from_bus.clone(),
            to: l.to_bus.clone(),
            phases: l.phases,
            mp,
            mq,
            limit: l.s_max / sb / std::f64::consts::SQRT_2,
        });
    }
    for s in net.switches.iter().filter(|s| live_switches.contains(s.id.as_str())) {
        lp.branches.push(DispatchBranch {
            id: s.id.clone(),
            kind: BranchKind::Switch,
            from: s.from_bus.clone(),
            to: s.to_bus.clone(),
            phases: s.phases,
            mp: Vec::new(),
            mq: Vec::new(),
            limit: s.s_max / sb / std::f64::consts::SQRT_2,
        });
    }
    for t in net.transformers.iter().filter(|t| bus_live(&t.from_bus)) {
        lp.branches.push(DispatchBranch {
            id: t.id.clone(),
            kind: BranchKind::Transformer,
            from: t.from_bus.clone(),
            to: t.to_bus.clone(),
            phases: net.transformer_phases(t),
            mp: Vec::new(),
            mq: Vec::new(),
            limit: f64::INFINITY,
        });
    }

    for br in &lp.branches {
        for ph in br.phases.iter() {
            let jp = lp.problem.add_var(format!("p_{}_{ph}", br.id), -br.limit, br.limit, 0.0);
            let jq = lp.problem.add_var(format!("q_{}_{ph}", br.id), -br.limit, br.limit, 0.0);
            lp.p.insert((br.id.clone(), ph), jp);
            lp.q.insert((br.id.clone(), ph), jq);
        }
    }

    for s in net.sources.iter().filter(|s| bus_live(&s.bus)) {
        if s.is_substation() && !opts.substation_enabled {
            continue;
        }
        lp.source_bus.insert(s.id.clone(), s.bus.clone());
        let cost = source_cost(s.kind);
        for (&ph, &pmax) in &s.pmax.0 {
            let pmin = if s.kind == SourceKind::Storage { -pmax } else { 0.0 };
            let jp = lp.problem.add_var(format!("pg_{}_{ph}", s.id), pmin / sb, pmax / sb, cost);
            let jq = lp.problem.add_var(format!("qg_{}_{ph}", s.id), s.qmin.get(ph) / sb, s.qmax.get(ph) / sb, 0.0);
            lp.pg.insert((s.id.clone(), ph), jp);
            lp.qg.insert((s.id.clone(), ph), jq);
        }
    }

    for l in net.loads.iter().filter(|l| bus_live(&l.bus)) {
        for (&ph, &v) in &l.pd.0 {
            *lp.pd.entry((l.bus.clone(), ph)).or_insert(0.0) += v / sb;
        }
        for (&ph, &v) in &l.qd.0 {
            *lp.qd.entry((l.bus.clone(), ph)).or_insert(0.0) += v / sb;
        }
    }

    // Voltage relations.
    for br in &lp.branches {
        let ph: Vec<Phase> = br.phases.iter().collect();
        for (i, &pi) in ph.iter().enumerate() {
            let mut coeffs = vec![(lp.w[&(br.to.clone(), pi)], 1.0), (lp.w[&(br.from.clone(), pi)], -1.0)];
            if br.kind == BranchKind::Line {
                for (k, &pk) in ph.iter().enumerate() {
                    coeffs.push((lp.p[&(br.id.clone(), pk)], -br.mp[i][k]));
                    coeffs.push((lp.q[&(br.id.clone(), pk)], -br.mq[i][k]));
                }
            }
            lp.problem.add_row(format!("v_{}_{pi}", br.id), coeffs, RowKind::Eq, 0.0);
        }
    }

    // Nodal balance: inflow - outflow + generation = demand.
    let mut pbal: BTreeMap<(String, Phase), Vec<(usize, f64)>> = BTreeMap::new();
    let mut qbal: BTreeMap<(String, Phase), Vec<(usize, f64)>> = BTreeMap::new();
    for (bus, phases) in &lp.buses {
        for ph in phases.iter() {
            pbal.insert((bus.clone(), ph), Vec::new());
            qbal.insert((bus.clone(), ph), Vec::new());
        }
    }
    for br in &lp.branches {
        for ph in br.phases.iter() {
            let key = (br.id.clone(), ph);
            pbal.get_mut(&(br.from.clone(), ph)).unwrap().push((lp.p[&key], -1.0));
            pbal.get_mut(&(br.to.clone(), ph)).unwrap().push((lp.p[&key], 1.0));
            qbal.get_mut(&(br.from.clone(), ph)).unwrap().push((lp.q[&key], -1.0));
            qbal.get_mut(&(br.to.clone(), ph)).unwrap().push((lp.q[&key], 1.0));
        }
    }
    for ((src, ph), &j) in &lp.pg {
        pbal.get_mut(&(lp.source_bus[src].clone(), *ph)).unwrap().push((j, 1.0));
    }
    for ((src, ph), &j) in &lp.qg {
        qbal.get_mut(&(lp.source_bus[src].clone(), *ph)).unwrap().push((j, 1.0));
    }
    for (key, mut coeffs) in pbal {
        coeffs.sort_by_key(|c| c.0);
        let rhs = lp.pd.get(&key).copied().unwrap_or(0.0);
        lp.problem.add_row(format!("pbal_{}_{}", key.0, key.1), coeffs, RowKind::Eq, rhs);
    }
    for (key, mut coeffs) in qbal {
        coeffs.sort_by_key(|c| c.0);
        let rhs = lp.qd.get(&key).copied().unwrap_or(0.0);
        lp.problem.add_row(format!("qbal_{}_{}", key.0, key.1), coeffs, RowKind::Eq, rhs);
    }
    lp
}

/// Residuals of a dispatch, both in per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub voltage: f64,
    pub balance: f64,
}

impl DispatchLp {
    pub fn solve(&self) -> (LpSolution, DispatchSolution) {
        let sol = solve_lp(&self.problem);
        let ds = self.read(&sol);
        (sol, ds)
    }

    pub fn read(&self, sol: &LpSolution) -> DispatchSolution {
        let feasible = sol.status == LpStatus::Optimal;
        let mut out = DispatchSolution { feasible, status: sol.status, ..DispatchSolution::empty() };
        if !feasible {
            return out;
        }
        let gather = |idx: &HashMap<(String, Phase), usize>, scale: f64| {
            let mut m: BTreeMap<String, PerPhase> = BTreeMap::new();
            for ((id, ph), &j) in idx {
                m.entry(id.clone()).or_default().0.insert(*ph, sol.x[j] * scale);
            }
            m
        };
        out.w = gather(&self.w, 1.0);
        out.p_flow = gather(&self.p, self.s_base);
        out.q_flow = gather(&self.q, self.s_base);
        out.pg = gather(&self.pg, self.s_base);
        out.qg = gather(&self.qg, self.s_base);
        out
    }

    /// Recomputes the voltage-drop and nodal-balance residuals at `x`.
    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let mut voltage = 0.0f64;
        for br in &self.branches {
            let ph: Vec<Phase> = br.phases.iter().collect();
            for (i, &pi) in ph.iter().enumerate() {
                let mut drop = 0.0;
                if br.kind == BranchKind::Line {
                    for (k, &pk) in ph.iter().enumerate() {
                        drop += br.mp[i][k] * x[self.p[&(br.id.clone(), pk)]] + br.mq[i][k] * x[self.q[&(br.id.clone(), pk)]];
                    }
                }
                let r = x[self.w[&(br.to.clone(), pi)]] - x[self.w[&(br.from.clone(), pi)]] - drop;
                voltage = voltage.max(r.abs());
            }
        }
        let mut pnet: HashMap<(String, Phase), f64> = HashMap::new();
        let mut qnet: HashMap<(String, Phase), f64> = HashMap::new();
        for (bus, phases) in &self.buses {
            for ph in phases.iter() {
                let k = (bus.clone(), ph);
                pnet.insert(k.clone(), -self.pd.get(&k).copied().unwrap_or(0.0));
                qnet.insert(k.clone(), -self.qd.get(&k).copied().unwrap_or(0.0));
            }
        }
        for br in &self.branches {
            for ph in br.phases.iter() {
                let (pv, qv) = (x[self.p[&(br.id.clone(), ph)]], x[self.q[&(br.id.clone(), ph)]]);
                *pnet.get_mut(&(br.from.clone(), ph)).unwrap() -= pv;
                *pnet.get_mut(&(br.to.clone(), ph)).unwrap() += pv;
                *qnet.get_mut(&(br.from.clone(), ph)).unwrap() -= qv;
                *qnet.get_mut(&(br.to.clone(), ph)).unwrap() += qv;
            }
        }
        for ((src, ph), &j) in &self.pg {
            *pnet.get_mut(&(self.source_bus[src].clone(), *ph)).unwrap() += x[j];
        }
        for ((src, ph), &j) in &self.qg {
            *qnet.get_mut(&(self.source_bus[src].clone(), *ph)).unwrap() += x[j];
        }
        let balance = pnet.values().chain(qnet.values()).fold(0.0f64, |m, v| m.max(v.abs()));
        Residuals { voltage, balance }
    }
}

/// Assembles and solves the dispatch for `islands`.
pub fn solve_dispatch(
    net: &NetworkModel,
    bg: &BlockGraph,
    islands: &[Island],
    energized: &[bool],
    opts: DispatchOptions,
) -> DispatchSolution {
    if !energized.iter().any(|&e| e) {
        return DispatchSolution::empty();
    }
    assemble_dispatch_lp(net, bg, islands, energized, opts).solve().1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::identify_blocks;
    use crate::fixtures;

    fn m(rows: &[&[f64]]) -> Mat {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn decoupled_phases() {
        let r = m(&[&[0.1, 0.0, 0.0], &[0.0, 0.1, 0.0], &[0.0, 0.0, 0.1]]);
        let x = vec![vec![0.0; 3]; 3];
        let (mp, mq) = build_sensitivity_matrices(&r, &x, PhaseSet::ABC).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(mp[i][k], if i == k { -0.2 } else { 0.0 });
                assert_eq!(mq[i][k], 0.0);
            }
        }
    }

    #[test]
    fn off_diagonal_entry() {
        let r = m(&[&[0.1, 0.03, 0.0], &[0.03, 0.1, 0.0], &[0.0, 0.0, 0.1]]);
        let x = m(&[&[0.2, 0.02, 0.0], &[0.02, 0.2, 0.0], &[0.0, 0.0, 0.2]]);
        let (mp, mq) = build_sensitivity_matrices(&r, &x, PhaseSet::ABC).unwrap();
        assert!((mp[0][1] - (0.03 - 3f64.sqrt() * 0.02)).abs() < 1e-15);
        assert!((mp[0][1] + 0.004641).abs() < 1e-6);
        assert!((mp[1][0] - (0.03 + 3f64.sqrt() * 0.02)).abs() < 1e-15);
        assert!((mq[0][1] - (0.02 + 3f64.sqrt() * 0.03)).abs() < 1e-15);
    }

    #[test]
    fn two_phase_line_uses_cyclic_order() {
        // On phases {a, c}, c -> a is the leading pair.
        let ac = PhaseSet::new([Phase::A, Phase::C]).unwrap();
        let r = m(&[&[0.1, 0.03], &[0.03, 0.1]]);
        let x = m(&[&[0.2, 0.02], &[0.02, 0.2]]);
        let (mp, _) = build_sensitivity_matrices(&r, &x, ac).unwrap();
        assert!((mp[0][1] - (0.03 + 3f64.sqrt() * 0.02)).abs() < 1e-15);
        assert!((mp[1][0] - (0.03 - 3f64.sqrt() * 0.02)).abs() < 1e-15);
    }

    #[test]
    fn single_phase_is_scalar() {
        let (mp, mq) = build_sensitivity_matrices(&m(&[&[0.05]]), &m(&[&[0.07]]), PhaseSet::single(Phase::B)).unwrap();
        assert_eq!(mp, vec![vec![-0.1]]);
        assert_eq!(mq, vec![vec![-0.14]]);
    }

    #[test]
    fn asymmetric_rejected() {
        let r = m(&[&[0.1, 0.03], &[0.01, 0.1]]);
        let x = m(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let ab = PhaseSet::new([Phase::A, Phase::B]).unwrap();
        assert_eq!(build_sensitivity_matrices(&r, &x, ab), Err(SensitivityError::Asymmetric(0, 1)));
        assert!(matches!(build_sensitivity_matrices(&r, &x, PhaseSet::ABC), Err(SensitivityError::Dimension { .. })));
    }

    fn whole_network(net: &NetworkModel) -> DispatchSolution {
        let bg = identify_blocks(net);
        let sub = net.substation_source().id.clone();
        let islands = bg.islands_for(&vec![false; bg.edges.len()], &BTreeSet::from([sub])).unwrap();
        let on: Vec<bool> = islands.iter().map(Island::is_energized).collect();
        solve_dispatch(net, &bg, &islands, &on, DispatchOptions::default())
    }

    #[test]
    fn supply_short_is_infeasible() {
        let mut net = fixtures::two_bus_network();
        net.loads[0].pd = PerPhase::uniform(PhaseSet::single(Phase::A), 100.0);
        net.sources[0].pmax = PerPhase::uniform(PhaseSet::single(Phase::A), 50.0);
        let ds = whole_network(&net);
        assert!(!ds.feasible);
        assert_eq!(ds.status, LpStatus::Infeasible);
    }

    #[test]
    fn zero_demand_is_flat() {
        let mut net = fixtures::two_bus_network();
        net.loads[0].pd = PerPhase::uniform(PhaseSet::single(Phase::A), 0.0);
        net.loads[0].qd = PerPhase::uniform(PhaseSet::single(Phase::A), 0.0);
        let ds = whole_network(&net);
        assert!(ds.feasible);
        assert_eq!(ds.p_flow["l1"].get(Phase::A), 0.0);
        assert_eq!(ds.w["load"].get(Phase::A), 1.0);
    }
}
