//! Complete mixed-integer formulation of an instance, written as MPS.
//!
//! Binaries are `zbl_<block>`, `zsw_<switch>`, `zinv_<source>` and the
//! colour indicators `y_<block>_<source>`. Every forming source (the
//! substation included) owns one colour; a block takes exactly one colour
//! when energized, closed switches force equal colours, and a per-colour
//! flow `f_<source>_<switch>` proves each coloured block is connected to its
//! source's home block. The forest count
//! `sum zsw = sum zbl - sum y_home(s),s` then rules out cycles.
//! Power flow uses the same per-unit LinDist3Flow rows as the dispatch LP,
//! with big-M relaxations on switches and generation scaled by `zbl`.
//!
//! The objective is the shed cost `sum c_i (1 - zbl_i)`, written as
//! `-sum c_i zbl_i` with the constant `sum c_i` stored as the negated RHS of
//! the objective row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::feeder::{BranchKind, Phase, SourceKind};
use crate::lindistflow::{line_sensitivity, s_base_phase};
use crate::lp::RowKind;

use super::{Domain, OmcpInstance};

const BIG_M_VOLTAGE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpVar {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpRow {
    pub name: String,
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<MilpVar>,
    pub rows: Vec<MilpRow>,
    /// Constant term of the objective.
    pub objective_offset: f64,
    index: BTreeMap<String, usize>,
}

impl MilpModel {
    fn var(&mut self, name: String, lower: f64, upper: f64, integer: bool, cost: f64) -> usize {
        let j = self.vars.len();
        self.index.insert(name.clone(), j);
        self.vars.push(MilpVar { name, lower, upper, integer, cost });
        j
    }

    fn binary(&mut self, name: String, domain: Domain) -> usize {
        let (lo, hi) = match domain {
            Domain::Free => (0.0, 1.0),
            Domain::Fixed(v) => (f64::from(u8::from(v)), f64::from(u8::from(v))),
        };
        self.var(name, lo, hi, true, 0.0)
    }

    fn row(&mut self, name: String, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(MilpRow { name, kind, coeffs, rhs });
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    /// Builds the formulation of `inst`.
    pub fn build(inst: &OmcpInstance) -> MilpModel {
        let net = &inst.network;
        let bg = &inst.blocks;
        let sb = s_base_phase(net);
        let nb = bg.len();
        let mut m = MilpModel { name: "OMCP".into(), ..MilpModel::default() };

        let sub = net.substation_source();
        let mut formers: Vec<(String, usize, Domain)> = vec![(
            sub.id.clone(),
            bg.block_of(&sub.bus).expect("substation bus in a block"),
            Domain::Fixed(!inst.substation_off),
        )];
        for (id, d) in inst.inverters.iter().zip(inst.inverter_domains()) {
            let src = net.sources.iter().find(|s| &s.id == id).expect("inverter exists");
            formers.push((id.clone(), bg.block_of(&src.bus).expect("source bus in a block"), d));
        }

        let zbl: Vec<usize> = (1..=nb)
            .map(|i| {
                let j = m.binary(format!("zbl_{i}"), Domain::Free);
                m.vars[j].cost = -inst.objective.block_value(bg, i);
                j
            })
            .collect();
        m.objective_offset = (1..=nb).map(|i| inst.objective.block_value(bg, i)).sum();
        let zsw: Vec<usize> =
            bg.edges.iter().zip(inst.switch_domains()).map(|(e, d)| m.binary(format!("zsw_{}", e.switch_id), d)).collect();
        let zinv: Vec<usize> = formers.iter().map(|(id, _, d)| m.binary(format!("zinv_{id}"), *d)).collect();
        let y: Vec<Vec<usize>> = (1..=nb)
            .map(|i| formers.iter().map(|(id, _, _)| m.binary(format!("y_{i}_{id}"), Domain::Free)).collect())
            .collect();

        // Colouring.
        for i in 0..nb {
            let mut c: Vec<(usize, f64)> = y[i].iter().map(|&j| (j, 1.0)).collect();
            c.push((zbl[i], -1.0));
            m.row(format!("colour_{}", i + 1), c, RowKind::Eq, 0.0);
        }
        for (s, (id, home, _)) in formers.iter().enumerate() {
            let h = home - 1;
            m.row(format!("home_{id}"), vec![(y[h][s], 1.0), (zinv[s], -1.0)], RowKind::Le, 0.0);
            // an active former in an energized block colours its own block
            m.row(format!("own_{id}"), vec![(y[h][s], 1.0), (zinv[s], -1.0), (zbl[h], -1.0)], RowKind::Ge, -1.0);
        }
        for (k, e) in bg.edges.iter().enumerate() {
            let (a, b) = (e.a - 1, e.b - 1);
            let id = &e.switch_id;
            m.row(format!("swa_{id}"), vec![(zsw[k], 1.0), (zbl[a], -1.0)], RowKind::Le, 0.0);
            m.row(format!("swb_{id}"), vec![(zsw[k], 1.0), (zbl[b], -1.0)], RowKind::Le, 0.0);
            for (s, (src, _, _)) in formers.iter().enumerate() {
                m.row(format!("eqa_{id}_{src}"), vec![(y[a][s], 1.0), (y[b][s], -1.0), (zsw[k], 1.0)], RowKind::Le, 1.0);
                m.row(format!("eqb_{id}_{src}"), vec![(y[b][s], 1.0), (y[a][s], -1.0), (zsw[k], 1.0)], RowKind::Le, 1.0);
            }
        }

        // Connectivity flow per colour.
        let cap = (nb.max(2) - 1) as f64;
        for (s, (src, home, _)) in formers.iter().enumerate() {
            let f: Vec<usize> = bg
                .edges
                .iter()
                .map(|e| m.var(format!("f_{src}_{}", e.switch_id), -cap, cap, false, 0.0))
                .collect();
            for (k, e) in bg.edges.iter().enumerate() {
                m.row(format!("fcap+_{src}_{}", e.switch_id), vec![(f[k], 1.0), (zsw[k], -cap)], RowKind::Le, 0.0);
                m.row(format!("fcap-_{src}_{}", e.switch_id), vec![(f[k], 1.0), (zsw[k], cap)], RowKind::Ge, 0.0);
                m.row(format!("fcol_{src}_{}", e.switch_id), vec![(f[k], 1.0), (y[e.a - 1][s], -cap)], RowKind::Le, 0.0);
                m.row(format!("fcol-_{src}_{}", e.switch_id), vec![(f[k], 1.0), (y[e.a - 1][s], cap)], RowKind::Ge, 0.0);
            }
            for i in 0..nb {
                // inflow - outflow = y (demand of one unit per coloured block), home excepted
                let mut c: Vec<(usize, f64)> = Vec::new();
                for (k, e) in bg.edges.iter().enumerate() {
                    if e.b - 1 == i {
                        c.push((f[k], 1.0));
                    }
                    if e.a - 1 == i {
                        c.push((f[k], -1.0));
                    }
                }
                if i == home - 1 {
                    for (k, _) in y.iter().enumerate().filter(|(k, _)| *k != i) {
                        c.push((y[k][s], 1.0));
                    }
                    m.row(format!("fsrc_{src}"), c, RowKind::Eq, 0.0);
                } else {
                    c.push((y[i][s], -1.0));
                    m.row(format!("fbal_{src}_{}", i + 1), c, RowKind::Eq, 0.0);
                }
            }
        }

        // Forest count.
        let mut c: Vec<(usize, f64)> = zsw.iter().map(|&j| (j, 1.0)).collect();
        c.extend(zbl.iter().map(|&j| (j, -1.0)));
        for (s, (_, home, _)) in formers.iter().enumerate() {
            c.push((y[home - 1][s], 1.0));
        }
        m.row("forest".into(), c, RowKind::Eq, 0.0);

        // Risk budget.
        let mut c: Vec<(usize, f64)> = bg.blocks.iter().map(|b| (zbl[b.id - 1], b.risk)).collect();
        if inst.policy.include_switch_risk {
            c.extend(bg.edges.iter().enumerate().map(|(k, e)| (zsw[k], e.risk)));
        }
        m.row("risk".into(), c, RowKind::Le, inst.policy.budget());

        // Power flow.
        let block_of = |bus: &str| zbl[bg.block_of(bus).expect("bus in a block") - 1];
        let mut w: BTreeMap<(String, Phase), usize> = BTreeMap::new();
        for b in &net.buses {
            let zb = block_of(&b.id);
            for ph in b.phases.iter() {
                let j = m.var(format!("w_{}_{ph}", b.id), 0.0, b.vmax * b.vmax, false, 0.0);
                m.row(format!("vlo_{}_{ph}", b.id), vec![(j, 1.0), (zb, -b.vmin * b.vmin)], RowKind::Ge, 0.0);
                if b.id == sub.bus && !inst.substation_off {
                    m.row(format!("vset+_{}_{ph}", b.id), vec![(j, 1.0), (zb, BIG_M_VOLTAGE)], RowKind::Le, 1.0 + BIG_M_VOLTAGE);
                    m.row(format!("vset-_{}_{ph}", b.id), vec![(j, 1.0), (zb, -BIG_M_VOLTAGE)], RowKind::Ge, 1.0 - BIG_M_VOLTAGE);
                }
                w.insert((b.id.clone(), ph), j);
            }
        }

        let mut bal_p: BTreeMap<(String, Phase), Vec<(usize, f64)>> = BTreeMap::new();
        let mut bal_q: BTreeMap<(String, Phase), Vec<(usize, f64)>> = BTreeMap::new();
        for b in &net.buses {
            for ph in b.phases.iter() {
                bal_p.insert((b.id.clone(), ph), Vec::new());
                bal_q.insert((b.id.clone(), ph), Vec::new());
            }
        }
        let sw_index: BTreeMap<&str, usize> = bg.edges.iter().enumerate().map(|(k, e)| (e.switch_id.as_str(), k)).collect();
        for (kind, id, from, to) in net.branches() {
            let (phases, limit, gate, sens) = match kind {
                BranchKind::Line => {
                    let l = net.lines.iter().find(|l| l.id == id).unwrap();
                    let s = line_sensitivity(net, l).expect("validated network");
                    (l.phases, l.s_max / sb / std::f64::consts::SQRT_2, block_of(from), Some(s))
                }
                BranchKind::Switch => {
                    let s = net.switches.iter().find(|s| s.id == id).unwrap();
                    (s.phases, s.s_max / sb / std::f64::consts::SQRT_2, zsw[sw_index[id]], None)
                }
                BranchKind::Transformer => {
                    let t = net.transformers.iter().find(|t| t.id == id).unwrap();
                    // zero impedance; bounded by the largest demand it could carry
                    (net.transformer_phases(t), 3.0 * net.total_pd().max(net.total_qd()) / sb + 1.0, block_of(from), None)
                }
            };
            let ph: Vec<Phase> = phases.iter().collect();
            let mut pv = Vec::new();
            let mut qv = Vec::new();
            for &p in &ph {
                let jp = m.var(format!("p_{id}_{p}"), -limit, limit, false, 0.0);
                let jq = m.var(format!("q_{id}_{p}"), -limit, limit, false, 0.0);
                for (j, tag) in [(jp, "p"), (jq, "q")] {
                    m.row(format!("{tag}cap+_{id}_{p}"), vec![(j, 1.0), (gate, -limit)], RowKind::Le, 0.0);
                    m.row(format!("{tag}cap-_{id}_{p}"), vec![(j, 1.0), (gate, limit)], RowKind::Ge, 0.0);
                }
                bal_p.get_mut(&(from.to_string(), p)).unwrap().push((jp, -1.0));
                bal_p.get_mut(&(to.to_string(), p)).unwrap().push((jp, 1.0));
                bal_q.get_mut(&(from.to_string(), p)).unwrap().push((jq, -1.0));
                bal_q.get_mut(&(to.to_string(), p)).unwrap().push((jq, 1.0));
                pv.push(jp);
                qv.push(jq);
            }
            for (i, &p) in ph.iter().enumerate() {
                let wt = w[&(to.to_string(), p)];
                let wf = w[&(from.to_string(), p)];
                match (&sens, kind) {
                    (Some((mp, mq)), _) => {
                        let mut c = vec![(wt, 1.0), (wf, -1.0)];
                        for k in 0..ph.len() {
                            c.push((pv[k], -mp[i][k]));
                            c.push((qv[k], -mq[i][k]));
                        }
                        m.row(format!("vdrop_{id}_{p}"), c, RowKind::Eq, 0.0);
                    }
                    (None, BranchKind::Switch) => {
                        m.row(format!("vsw+_{id}_{p}"), vec![(wt, 1.0), (wf, -1.0), (gate, BIG_M_VOLTAGE)], RowKind::Le, BIG_M_VOLTAGE);
                        m.row(format!("vsw-_{id}_{p}"), vec![(wt, 1.0), (wf, -1.0), (gate, -BIG_M_VOLTAGE)], RowKind::Ge, -BIG_M_VOLTAGE);
                    }
                    _ => m.row(format!("vx_{id}_{p}"), vec![(wt, 1.0), (wf, -1.0)], RowKind::Eq, 0.0),
                }
            }
        }

        for s in &net.sources {
            let zb = block_of(&s.bus);
            let off = s.is_substation() && inst.substation_off;
            for (&p, &pmax) in &s.pmax.0 {
                let pmin = if s.kind == SourceKind::Storage { -pmax } else { 0.0 };
                let (plo, phi) = if off { (0.0, 0.0) } else { (pmin / sb, pmax / sb) };
                let (qlo, qhi) = if off { (0.0, 0.0) } else { (s.qmin.get(p) / sb, s.qmax.get(p) / sb) };
                let jp = m.var(format!("pg_{}_{p}", s.id), plo, phi, false, 0.0);
                let jq = m.var(format!("qg_{}_{p}", s.id), qlo, qhi, false, 0.0);
                for (j, lo, hi, tag) in [(jp, plo, phi, "pg"), (jq, qlo, qhi, "qg")] {
                    m.row(format!("{tag}hi_{}_{p}", s.id), vec![(j, 1.0), (zb, -hi)], RowKind::Le, 0.0);
                    m.row(format!("{tag}lo_{}_{p}", s.id), vec![(j, 1.0), (zb, -lo)], RowKind::Ge, 0.0);
                }
                bal_p.get_mut(&(s.bus.clone(), p)).unwrap().push((jp, 1.0));
                bal_q.get_mut(&(s.bus.clone(), p)).unwrap().push((jq, 1.0));
            }
        }
        for l in &net.loads {
            let zb = block_of(&l.bus);
            for (&p, &v) in &l.pd.0 {
                bal_p.get_mut(&(l.bus.clone(), p)).unwrap().push((zb, -v / sb));
            }
            for (&p, &v) in &l.qd.0 {
                bal_q.get_mut(&(l.bus.clone(), p)).unwrap().push((zb, -v / sb));
            }
        }
        for (tag, bal) in [("pbal", bal_p), ("qbal", bal_q)] {
            for ((bus, p), c) in bal {
                m.row(format!("{tag}_{bus}_{p}"), merge_terms(c), RowKind::Eq, 0.0);
            }
        }
        m
    }

    /// Renders the model as MPS. Names longer than eight characters are
    /// allowed; fields are separated by whitespace.
    pub fn to_mps(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME          {}", self.name);
        out.push_str("ROWS\n N  obj\n");
        for r in &self.rows {
            let t = match r.kind {
                RowKind::Le => "L",
                RowKind::Ge => "G",
                RowKind::Eq => "E",
            };
            let _ = writeln!(out, " {t}  {}", r.name);
        }

        let mut cols: Vec<Vec<(&str, f64)>> = vec![Vec::new(); self.vars.len()];
        for (j, v) in self.vars.iter().enumerate() {
            if v.cost != 0.0 {
                cols[j].push(("obj", v.cost));
            }
        }
        for r in &self.rows {
            for &(j, a) in &r.coeffs {
                if a != 0.0 {
                    cols[j].push((&r.name, a));
                }
            }
        }
        out.push_str("COLUMNS\n");
        let mut in_int = false;
        let mut marker = 0;
        for (j, v) in self.vars.iter().enumerate() {
            if v.integer != in_int {
                let tag = if v.integer { "INTORG" } else { "INTEND" };
                let _ = writeln!(out, "    M{marker:07}  'MARKER'                 '{tag}'");
                marker += 1;
                in_int = v.integer;
            }
            if cols[j].is_empty() {
                // keep the column declared
                let _ = writeln!(out, "    {:<8}  {:<8}  {}", v.name, "obj", fmt_num(0.0));
            }
            for (row, a) in &cols[j] {
                let _ = writeln!(out, "    {:<8}  {:<8}  {}", v.name, row, fmt_num(*a));
            }
        }
        if in_int {
            let _ = writeln!(out, "    M{marker:07}  'MARKER'                 'INTEND'");
        }

        out.push_str("RHS\n");
        if self.objective_offset != 0.0 {
            let _ = writeln!(out, "    RHS       {:<8}  {}", "obj", fmt_num(-self.objective_offset));
        }
        for r in &self.rows {
            if r.rhs != 0.0 {
                let _ = writeln!(out, "    RHS       {:<8}  {}", r.name, fmt_num(r.rhs));
            }
        }

        out.push_str("BOUNDS\n");
        for v in &self.vars {
            let n = &v.name;
            if v.lower == v.upper {
                let _ = writeln!(out, " FX BND       {n:<8}  {}", fmt_num(v.lower));
                continue;
            }
            if v.integer && v.lower == 0.0 && v.upper == 1.0 {
                let _ = writeln!(out, " UP BND       {n:<8}  1");
                continue;
            }
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " FR BND       {n}");
                }
                (false, true) => {
                    let _ = writeln!(out, " MI BND       {n}");
                    let _ = writeln!(out, " UP BND       {n:<8}  {}", fmt_num(v.upper));
                }
                (true, up) => {
                    if v.lower != 0.0 {
                        let _ = writeln!(out, " LO BND       {n:<8}  {}", fmt_num(v.lower));
                    }
                    if up {
                        let _ = writeln!(out, " UP BND       {n:<8}  {}", fmt_num(v.upper));
                    }
                }
            }
        }
        out.push_str("ENDATA\n");
        out
    }
}

fn merge_terms(mut c: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    c.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(c.len());
    for (j, a) in c {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out
}

fn fmt_num(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

/// Writes `model` to `path` in MPS format.
pub fn write_mps(model: &MilpModel, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, model.to_mps())
}

/// Builds the formulation of `inst`, writes it to `path` and returns it.
pub fn export_milp(inst: &OmcpInstance, path: impl AsRef<Path>) -> io::Result<MilpModel> {
    let m = MilpModel::build(inst);
    write_mps(&m, path)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::hazard::annotated_blocks;
    use crate::omcp::{Controllability, Objective, RiskPolicy};

    fn inst(c: Controllability, t: f64) -> OmcpInstance {
        let net = fixtures::ieee13_network();
        let bg = annotated_blocks(&net, &fixtures::ieee13_risk(), &fixtures::ieee13_svi()).unwrap();
        let pol = RiskPolicy::new(&bg, t, true).unwrap();
        OmcpInstance::new(net, bg, Objective::VulnerabilityWeighted, c, pol)
    }

    #[test]
    fn risk_row_rhs() {
        let m = MilpModel::build(&inst(Controllability::NetworkingMicrogrids, 0.5));
        let r = m.rows.iter().find(|r| r.name == "risk").unwrap();
        assert_eq!(r.rhs, 427.0);
        let m = MilpModel::build(&inst(Controllability::NetworkingMicrogrids, 1.0));
        assert_eq!(m.rows.iter().find(|r| r.name == "risk").unwrap().rhs, 854.0);
    }

    #[test]
    fn static_fixes_switches() {
        let m = MilpModel::build(&inst(Controllability::StaticMicrogrids, 0.5));
        let text = m.to_mps();
        for k in 1..=6 {
            let name = format!("zsw_sw{k}");
            let fixed = text.lines().any(|l| {
                let t: Vec<&str> = l.split_whitespace().collect();
                t.len() == 4 && t[0] == "FX" && t[2] == name && t[3].parse::<f64>() == Ok(0.0)
            });
            assert!(fixed, "{name}");
        }
    }

    #[test]
    fn terms_merge() {
        assert_eq!(merge_terms(vec![(3, 1.0), (1, 2.0), (3, -0.5)]), vec![(1, 2.0), (3, 0.5)]);
    }
}
