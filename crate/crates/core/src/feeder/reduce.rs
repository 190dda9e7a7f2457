//! Secondary-circuit reduction.
//!
//! Each distribution transformer is removed in turn. The buses that become
//! disconnected from the substation form the secondary sub-graph: its loads and
//! solar units are summed per phase onto the primary-side bus, storage units
//! (and other dispatchable sources) are moved to that bus unaggregated, and the
//! secondary buses, lines, switches and transformers are dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use super::{DistributedSource, FeederError, LoadPoint, NetworkModel, PerPhase, SourceKind};

/// A distribution transformer that could not be reduced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetainedTransformer {
    pub id: String,
    pub reason: String,
}

/// Outcome of [`reduce_feeder`].
#[derive(Debug, Clone, Serialize)]
pub struct Reduction {
    pub network: NetworkModel,
    /// Transformers left in place because their secondary side loops back.
    pub retained: Vec<RetainedTransformer>,
    /// Primary bus id -> ids of the removed secondary buses, lines, switches and transformers.
    pub absorbed: BTreeMap<String, BTreeSet<String>>,
}

struct Adjacency<'a> {
    // bus -> (neighbor, element id)
    edges: HashMap<&'a str, Vec<(&'a str, &'a str)>>,
}

impl<'a> Adjacency<'a> {
    fn new(net: &'a NetworkModel) -> Self {
        let mut edges: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
        for (_, id, from, to) in net.branches() {
            edges.entry(from).or_default().push((to, id));
            edges.entry(to).or_default().push((from, id));
        }
        Adjacency { edges }
    }

    /// Buses reachable from `start` without traversing `skip` or any removed element.
    fn reach(&self, start: &'a str, skip: &str, removed: &BTreeSet<String>) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for &(nb, id) in self.edges.get(b).map(Vec::as_slice).unwrap_or(&[]) {
                if id == skip || removed.contains(id) {
                    continue;
                }
                if seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        seen
    }
}

/// Collapses every distribution transformer's secondary circuit onto its primary bus.
pub fn reduce_feeder(net: &NetworkModel) -> Result<Reduction, FeederError> {
    net.validate()?;
    let adj = Adjacency::new(net);
    let substation = net.substation_bus().id.as_str();

    let mut removed_elements: BTreeSet<String> = BTreeSet::new();
    let mut removed_buses: BTreeSet<String> = BTreeSet::new();
    let mut element_owner: Vec<(String, &str)> = Vec::new();
    let mut retained = Vec::new();
    // secondary bus -> transformer whose removal separated it
    let mut owner: HashMap<String, &str> = HashMap::new();
    let primary_of: HashMap<&str, &str> =
        net.transformers.iter().map(|t| (t.id.as_str(), t.from_bus.as_str())).collect();

    for t in net.transformers.iter().filter(|t| t.is_distribution_xfmr) {
        if removed_elements.contains(&t.id) {
            continue;
        }
        let side = adj.reach(&t.to_bus, &t.id, &removed_elements);
        if side.contains(substation) || side.contains(t.from_bus.as_str()) {
            retained.push(RetainedTransformer {
                id: t.id.clone(),
                reason: "secondary side is not separated by removing the transformer".into(),
            });
            continue;
        }
        removed_elements.insert(t.id.clone());
        element_owner.push((t.id.clone(), t.id.as_str()));
        for (_, id, from, to) in net.branches() {
            if side.contains(from) && side.contains(to) && removed_elements.insert(id.to_string()) {
                element_owner.push((id.to_string(), t.id.as_str()));
            }
        }
        for b in &side {
            removed_buses.insert(b.to_string());
            element_owner.push((b.to_string(), t.id.as_str()));
            owner.insert(b.to_string(), t.id.as_str());
        }
    }

    // Nested secondaries: follow the chain up to a surviving primary bus.
    let resolve = |bus: &str| -> (String, String) {
        let mut xfmr = owner[bus];
        while let Some(outer) = owner.get(primary_of[xfmr]) {
            xfmr = outer;
        }
        (xfmr.to_string(), primary_of[xfmr].to_string())
    };

    let mut absorbed: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (id, xfmr) in &element_owner {
        let mut x = *xfmr;
        while let Some(outer) = owner.get(primary_of[x]) {
            x = outer;
        }
        absorbed.entry(primary_of[x].to_string()).or_default().insert(id.clone());
    }

    let primary_phases: HashMap<&str, _> = net.buses.iter().map(|b| (b.id.as_str(), b.phases)).collect();

    let mut loads: Vec<LoadPoint> = Vec::new();
    let mut agg_loads: BTreeMap<String, LoadPoint> = BTreeMap::new();
    for l in &net.loads {
        if !removed_buses.contains(&l.bus) {
            loads.push(l.clone());
            continue;
        }
        let (xfmr, target) = resolve(&l.bus);
        check_phases(&l.id, &l.pd, primary_phases[target.as_str()])?;
        let agg = agg_loads.entry(xfmr.clone()).or_insert_with(|| LoadPoint {
            id: format!("{xfmr}_load"),
            bus: target.clone(),
            pd: PerPhase::default(),
            qd: PerPhase::default(),
            svi: 0.0,
        });
        agg.pd.add_assign(&l.pd);
        agg.qd.add_assign(&l.qd);
        agg.svi += l.svi;
    }
    loads.extend(agg_loads.into_values());

    let mut sources: Vec<DistributedSource> = Vec::new();
    let mut agg_solar: BTreeMap<String, DistributedSource> = BTreeMap::new();
    for s in &net.sources {
        if !removed_buses.contains(&s.bus) {
            sources.push(s.clone());
            continue;
        }
        let (xfmr, target) = resolve(&s.bus);
        check_phases(&s.id, &s.pmax, primary_phases[target.as_str()])?;
        if s.kind == SourceKind::Solar {
            let agg = agg_solar.entry(xfmr.clone()).or_insert_with(|| DistributedSource {
                id: format!("{xfmr}_solar"),
                bus: target.clone(),
                pmax: PerPhase::default(),
                qmin: PerPhase::default(),
                qmax: PerPhase::default(),
                can_grid_form: false,
                kind: SourceKind::Solar,
            });
            agg.pmax.add_assign(&s.pmax);
            agg.qmin.add_assign(&s.qmin);
            agg.qmax.add_assign(&s.qmax);
            agg.can_grid_form |= s.can_grid_form;
        } else {
            let mut moved = s.clone();
            moved.bus = target;
            sources.push(moved);
        }
    }
    sources.extend(agg_solar.into_values());

    let network = NetworkModel {
        base_kv: net.base_kv,
        base_kva: net.base_kva,
        buses: net.buses.iter().filter(|b| !removed_buses.contains(&b.id)).cloned().collect(),
        lines: net.lines.iter().filter(|l| !removed_elements.contains(&l.id)).cloned().collect(),
        switches: net.switches.iter().filter(|s| !removed_elements.contains(&s.id)).cloned().collect(),
        loads,
        sources,
        transformers: net.transformers.iter().filter(|t| !removed_elements.contains(&t.id)).cloned().collect(),
    };
    network.validate()?;
    Ok(Reduction { network, retained, absorbed })
}

fn check_phases(id: &str, values: &PerPhase, primary: super::PhaseSet) -> Result<(), FeederError> {
    match values.phases() {
        Some(p) if p.is_subset(primary) => Ok(()),
        _ => Err(FeederError::Schema {
            field: id.to_string(),
            message: "secondary phase connection is not available at the primary bus".into(),
        }),
    }
}
