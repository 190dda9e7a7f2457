//! Load blocks, the switch-level quotient graph, and island derivation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::unionfind::UnionFind;
use serde::Serialize;
use thiserror::Error;

use crate::feeder::{BranchKind, NetworkModel};
use crate::hazard::Hazards;

/// A connected component of the feeder with every switch open.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadBlock {
    /// 1-based; the substation block is always 1.
    pub id: usize,
    pub bus_ids: BTreeSet<String>,
    /// Total demand over all phases, kW.
    pub total_pd: f64,
    /// Aggregated vulnerability `v_i`.
    pub total_svi: f64,
    /// Aggregated wildfire risk `rho_i`.
    pub risk: f64,
    pub contains_substation: bool,
    pub forming_capable_sources: Vec<String>,
    pub sources: Vec<String>,
    pub loads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEdge {
    pub switch_id: String,
    /// Block ids (1-based).
    pub a: usize,
    pub b: usize,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockGraph {
    pub blocks: Vec<LoadBlock>,
    /// One edge per switch, in network switch order.
    pub edges: Vec<BlockEdge>,
    #[serde(skip)]
    bus_block: HashMap<String, usize>,
}

/// A set of blocks joined by closed switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Island {
    pub blocks: Vec<usize>,
    pub closed_switches: Vec<String>,
    pub forming_source: Option<String>,
}

impl Island {
    pub fn is_energized(&self) -> bool {
        self.forming_source.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("island {blocks:?} contains {count} grid-forming sources")]
    MultipleForming { blocks: Vec<usize>, count: usize },
    #[error("closed switches form a cycle through blocks {0:?}")]
    Cycle(Vec<usize>),
    #[error("unknown switch `{0}`")]
    UnknownSwitch(String),
    #[error("source `{0}` is not forming-capable or does not exist")]
    NotFormingCapable(String),
}

/// Identifies load blocks using the network's own switch risks and load SVI values.
pub fn identify_blocks(net: &NetworkModel) -> BlockGraph {
    identify_blocks_with(net, &Hazards::from_network(net))
}

/// Identifies load blocks and annotates them with the given hazard data.
///
/// Blocks are numbered with the substation block first, then by the smallest
/// bus id they contain, so numbering does not depend on element order.
pub fn identify_blocks_with(net: &NetworkModel, hazards: &Hazards) -> BlockGraph {
    let idx = net.bus_index();
    let mut uf = UnionFind::<usize>::new(net.buses.len());
    for (kind, _, from, to) in net.branches() {
        if kind != BranchKind::Switch {
            uf.union(idx[from], idx[to]);
        }
    }

    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, b) in net.buses.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(b.id.clone());
    }
    let sub = net.substation_bus().id.clone();
    let mut sets: Vec<BTreeSet<String>> = groups.into_values().collect();
    sets.sort_by(|x, y| {
        let xs = x.contains(&sub);
        let ys = y.contains(&sub);
        ys.cmp(&xs).then_with(|| x.iter().next().cmp(&y.iter().next()))
    });

    let mut bus_block = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        for b in set {
            bus_block.insert(b.clone(), i + 1);
        }
    }

    let mut blocks: Vec<LoadBlock> = sets
        .into_iter()
        .enumerate()
        .map(|(i, bus_ids)| LoadBlock {
            id: i + 1,
            contains_substation: bus_ids.contains(&sub),
            bus_ids,
            total_pd: 0.0,
            total_svi: 0.0,
            risk: 0.0,
            forming_capable_sources: Vec::new(),
            sources: Vec::new(),
            loads: Vec::new(),
        })
        .collect();

    for l in &net.loads {
        let blk = &mut blocks[bus_block[&l.bus] - 1];
        blk.total_pd += l.pd.total();
        blk.total_svi += hazards.load_svi(&l.id, l.svi);
        blk.loads.push(l.id.clone());
    }
    for s in &net.sources {
        let blk = &mut blocks[bus_block[&s.bus] - 1];
        blk.sources.push(s.id.clone());
        if s.can_grid_form || s.is_substation() {
            blk.forming_capable_sources.push(s.id.clone());
        }
    }
    for (kind, id, from, _) in net.branches() {
        if kind == BranchKind::Switch {
            continue;
        }
        let blk = &mut blocks[bus_block[from] - 1];
        blk.risk = blk.risk.max(hazards.component_risk(id));
    }
    for b in &net.buses {
        let blk = &mut blocks[bus_block[&b.id] - 1];
        blk.risk = blk.risk.max(hazards.component_risk(&b.id));
    }

    let edges = net
        .switches
        .iter()
        .map(|s| BlockEdge {
            switch_id: s.id.clone(),
            a: bus_block[&s.from_bus],
            b: bus_block[&s.to_bus],
            risk: hazards.switch_risk(&s.id, s.risk),
        })
        .collect();

    BlockGraph { blocks, edges, bus_block }
}

impl BlockGraph {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: usize) -> &LoadBlock {
        &self.blocks[id - 1]
    }

    /// Block id containing `bus`.
    pub fn block_of(&self, bus: &str) -> Option<usize> {
        self.bus_block.get(bus).copied()
    }

    pub fn substation_block(&self) -> usize {
        self.blocks.iter().find(|b| b.contains_substation).map(|b| b.id).expect("substation block")
    }

    pub fn switch_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.switch_id == id)
    }

    /// Returns a copy with block vulnerabilities replaced (index `i` is block `i + 1`).
    pub fn with_vulnerability(&self, v: &[f64]) -> BlockGraph {
        let mut bg = self.clone();
        for (blk, &val) in bg.blocks.iter_mut().zip(v) {
            blk.total_svi = val;
        }
        bg
    }

    /// Sum of block and switch risks: the normalizer of the risk budget.
    pub fn total_risk(&self, include_switch_risk: bool) -> f64 {
        let blocks: f64 = self.blocks.iter().map(|b| b.risk).sum();
        if include_switch_risk {
            blocks + self.edges.iter().map(|e| e.risk).sum::<f64>()
        } else {
            blocks
        }
    }

    /// Islands for a switch assignment and a set of active grid-forming sources.
    ///
    /// `switch_closed[k]` refers to `self.edges[k]`. An island is energized when it
    /// holds exactly one forming source; two or more is an infeasible topology, as
    /// is any cycle of closed switches.
    pub fn islands_for(&self, switch_closed: &[bool], forming: &BTreeSet<String>) -> Result<Vec<Island>, TopologyError> {
        let mut former_block: Vec<(usize, &str)> = Vec::new();
        for f in forming {
            let blk = self
                .blocks
                .iter()
                .find(|b| b.forming_capable_sources.iter().any(|s| s == f))
                .ok_or_else(|| TopologyError::NotFormingCapable(f.clone()))?;
            former_block.push((blk.id, f.as_str()));
        }

        let n = self.blocks.len();
        let mut uf = UnionFind::<usize>::new(n);
        let mut cyclic = None;
        for (e, &closed) in self.edges.iter().zip(switch_closed) {
            if closed && !uf.union(e.a - 1, e.b - 1) && cyclic.is_none() {
                cyclic = Some(e.a - 1);
            }
        }

        let mut by_root: BTreeMap<usize, Island> = BTreeMap::new();
        for i in 0..n {
            by_root.entry(uf.find(i)).or_insert_with(|| Island {
                blocks: Vec::new(),
                closed_switches: Vec::new(),
                forming_source: None,
            });
            by_root.get_mut(&uf.find(i)).unwrap().blocks.push(i + 1);
        }
        if let Some(start) = cyclic {
            return Err(TopologyError::Cycle(by_root[&uf.find(start)].blocks.clone()));
        }
        for (e, &closed) in self.edges.iter().zip(switch_closed) {
            if closed {
                by_root.get_mut(&uf.find(e.a - 1)).unwrap().closed_switches.push(e.switch_id.clone());
            }
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &(blk, src) in &former_block {
            let root = uf.find(blk - 1);
            *counts.entry(root).or_default() += 1;
            by_root.get_mut(&root).unwrap().forming_source = Some(src.to_string());
        }
        for (root, count) in counts {
            if count >= 2 {
                return Err(TopologyError::MultipleForming { blocks: by_root[&root].blocks.clone(), count });
            }
        }
        Ok(by_root.into_values().collect())
    }

    /// Convenience wrapper keyed by switch id; unlisted switches are open.
    pub fn islands_for_states(
        &self,
        states: &BTreeMap<String, bool>,
        forming: &BTreeSet<String>,
    ) -> Result<Vec<Island>, TopologyError> {
        let mut closed = vec![false; self.edges.len()];
        for (id, &c) in states {
            let k = self.switch_index(id).ok_or_else(|| TopologyError::UnknownSwitch(id.clone()))?;
            closed[k] = c;
        }
        self.islands_for(&closed, forming)
    }

    /// The block table as CSV: `id,buses,kw,v,rho`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,buses,kw,v,rho\n");
        for b in &self.blocks {
            let buses: Vec<&str> = b.bus_ids.iter().map(String::as_str).collect();
            out.push_str(&format!("{},{},{},{},{}\n", b.id, buses.join(" "), b.total_pd, b.total_svi, b.risk));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn ieee13_has_six_blocks_with_substation_first() {
        let bg = identify_blocks(&fixtures::ieee13_network());
        assert_eq!(bg.len(), 6);
        assert!(bg.block(1).contains_substation);
        assert_eq!(bg.blocks.iter().filter(|b| b.contains_substation).count(), 1);
        let kw: Vec<f64> = bg.blocks.iter().map(|b| b.total_pd).collect();
        assert_eq!(kw, vec![2453.0, 185.0, 0.0, 1013.0, 25.0, 200.0]);
        let v: Vec<f64> = bg.blocks.iter().map(|b| b.total_svi).collect();
        assert_eq!(v, vec![2.0, 9.0, 2.0, 4.0, 6.0, 3.0]);
    }

    #[test]
    fn no_switches_means_one_block() {
        let net = fixtures::two_bus_network();
        let bg = identify_blocks(&net);
        assert_eq!(bg.len(), 1);
        assert!(bg.edges.is_empty());
        assert_eq!(bg.block(1).bus_ids.len(), 2);
    }

    #[test]
    fn all_open_only_substation_island_energized() {
        let net = fixtures::ieee13_network();
        let bg = identify_blocks(&net);
        let forming = BTreeSet::from(["vsource".to_string()]);
        let islands = bg.islands_for(&[false; 6], &forming).unwrap();
        assert_eq!(islands.len(), 6);
        let energized: Vec<_> = islands.iter().filter(|i| i.is_energized()).collect();
        assert_eq!(energized.len(), 1);
        assert_eq!(energized[0].blocks, vec![1]);
    }

    #[test]
    fn closing_sw2_joins_blocks_one_and_four() {
        let bg = identify_blocks(&fixtures::ieee13_network());
        let k = bg.switch_index("sw2").unwrap();
        assert_eq!((bg.edges[k].a, bg.edges[k].b), (1, 4));
        let mut closed = vec![false; 6];
        closed[k] = true;
        let islands = bg.islands_for(&closed, &BTreeSet::from(["vsource".to_string()])).unwrap();
        let main = islands.iter().find(|i| i.is_energized()).unwrap();
        assert_eq!(main.blocks, vec![1, 4]);
        assert_eq!(main.closed_switches, vec!["sw2".to_string()]);
    }

    #[test]
    fn two_formers_in_one_island_is_infeasible() {
        let bg = identify_blocks(&fixtures::ieee13_network());
        let mut closed = vec![false; 6];
        closed[bg.switch_index("sw2").unwrap()] = true;
        let forming = BTreeSet::from(["vsource".to_string(), "storage_671".to_string()]);
        assert!(matches!(bg.islands_for(&closed, &forming), Err(TopologyError::MultipleForming { count: 2, .. })));
    }

    #[test]
    fn cycle_is_rejected() {
        let bg = identify_blocks(&fixtures::ieee13_network());
        // sw3 (2-3), sw4 (3-5), sw6 (2-5) form a triangle
        let mut closed = vec![false; 6];
        for id in ["sw3", "sw4", "sw6"] {
            closed[bg.switch_index(id).unwrap()] = true;
        }
        assert!(matches!(bg.islands_for(&closed, &BTreeSet::new()), Err(TopologyError::Cycle(_))));
    }
}
