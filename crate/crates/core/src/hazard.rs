//! Wildfire-risk and social-vulnerability tables and their aggregation onto
//! buses and load blocks.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::blocks::{identify_blocks_with, BlockGraph};
use crate::feeder::{BranchKind, NetworkModel, Reduction};

/// Upper end of the fire-potential index scale. Values above it are kept.
pub const RISK_SCALE_MAX: f64 = 150.0;

#[derive(Debug, Error)]
pub enum HazardError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `id,value`, found `{0}`")]
    Header(String),
    #[error("line {line}: cannot parse value `{value}`")]
    Value { line: u64, value: String },
    #[error("`{0}` has a negative value")]
    Negative(String),
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("ids not present in the network: {0:?}")]
    Unknown(Vec<String>),
    #[error("missing entries for: {0:?}")]
    Missing(Vec<String>),
}

/// Component id -> risk index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RiskTable {
    pub values: BTreeMap<String, f64>,
    /// Ids whose value lies above [`RISK_SCALE_MAX`].
    pub out_of_range: Vec<String>,
}

/// Load id -> SVI contribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SviTable {
    pub values: BTreeMap<String, f64>,
}

fn read_pairs<R: Read>(rdr: R) -> Result<BTreeMap<String, f64>, HazardError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "value" {
        return Err(HazardError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        let value: f64 = rec[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| HazardError::Value { line, value: rec[1].to_string() })?;
        if value < 0.0 {
            return Err(HazardError::Negative(id));
        }
        if out.insert(id.clone(), value).is_some() {
            return Err(HazardError::Duplicate(id));
        }
    }
    Ok(out)
}

impl RiskTable {
    pub fn from_reader<R: Read>(rdr: R) -> Result<RiskTable, HazardError> {
        let values = read_pairs(rdr)?;
        let out_of_range: Vec<String> =
            values.iter().filter(|(_, &v)| v > RISK_SCALE_MAX).map(|(k, _)| k.clone()).collect();
        for id in &out_of_range {
            warn!("risk value for `{id}` exceeds {RISK_SCALE_MAX}; keeping it");
        }
        Ok(RiskTable { values, out_of_range })
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    /// Rejects ids that name no bus, line, switch or transformer of `net`.
    pub fn check_ids(&self, net: &NetworkModel) -> Result<(), HazardError> {
        let mut known: Vec<&str> = net.buses.iter().map(|b| b.id.as_str()).collect();
        known.extend(net.branches().map(|(_, id, _, _)| id));
        let unknown: Vec<String> = self.values.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(HazardError::Unknown(unknown))
        }
    }

    /// Rejects a table lacking an entry for some line or switch. Buses and
    /// transformers default to zero.
    pub fn check_complete(&self, net: &NetworkModel) -> Result<(), HazardError> {
        let missing: Vec<String> = net
            .branches()
            .filter(|(k, id, _, _)| *k != BranchKind::Transformer && !self.values.contains_key(*id))
            .map(|(_, id, _, _)| id.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(HazardError::Missing(missing))
        }
    }
}

impl SviTable {
    pub fn from_reader<R: Read>(rdr: R) -> Result<SviTable, HazardError> {
        Ok(SviTable { values: read_pairs(rdr)? })
    }

    pub fn check_ids(&self, net: &NetworkModel) -> Result<(), HazardError> {
        let unknown: Vec<String> =
            self.values.keys().filter(|k| !net.loads.iter().any(|l| &l.id == *k)).cloned().collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(HazardError::Unknown(unknown))
        }
    }

    pub fn check_complete(&self, net: &NetworkModel) -> Result<(), HazardError> {
        let missing: Vec<String> =
            net.loads.iter().filter(|l| !self.values.contains_key(&l.id)).map(|l| l.id.clone()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(HazardError::Missing(missing))
        }
    }
}

/// Reads a risk CSV and checks its ids against `net`.
pub fn load_risk_csv(path: impl AsRef<Path>, net: &NetworkModel) -> Result<RiskTable, HazardError> {
    let t = RiskTable::from_reader(std::fs::File::open(path)?)?;
    t.check_ids(net)?;
    Ok(t)
}

/// Reads an SVI CSV and checks its ids against `net`.
pub fn load_svi_csv(path: impl AsRef<Path>, net: &NetworkModel) -> Result<SviTable, HazardError> {
    let t = SviTable::from_reader(std::fs::File::open(path)?)?;
    t.check_ids(net)?;
    Ok(t)
}

/// Resolved hazard data used to annotate blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hazards {
    component: HashMap<String, f64>,
    switch: HashMap<String, f64>,
    svi: HashMap<String, f64>,
}

impl Hazards {
    /// Switch risks and SVI values taken from the network file itself; no
    /// line or bus risk.
    pub fn from_network(net: &NetworkModel) -> Hazards {
        Hazards {
            component: HashMap::new(),
            switch: net.switches.iter().map(|s| (s.id.clone(), s.risk)).collect(),
            svi: net.loads.iter().map(|l| (l.id.clone(), l.svi)).collect(),
        }
    }

    /// Checks both tables for completeness against `net` and merges them.
    /// Switch entries in the risk table override the network's switch risk.
    pub fn from_tables(net: &NetworkModel, risk: &RiskTable, svi: &SviTable) -> Result<Hazards, HazardError> {
        risk.check_ids(net)?;
        risk.check_complete(net)?;
        svi.check_ids(net)?;
        svi.check_complete(net)?;
        let mut h = Hazards::from_network(net);
        for (id, &v) in &risk.values {
            if h.switch.contains_key(id) {
                h.switch.insert(id.clone(), v);
            } else {
                h.component.insert(id.clone(), v);
            }
        }
        h.svi.extend(svi.values.iter().map(|(k, &v)| (k.clone(), v)));
        Ok(h)
    }

    pub fn component_risk(&self, id: &str) -> f64 {
        self.component.get(id).copied().unwrap_or(0.0)
    }

    pub fn switch_risk(&self, id: &str, default: f64) -> f64 {
        self.switch.get(id).copied().unwrap_or(default)
    }

    pub fn load_svi(&self, id: &str, default: f64) -> f64 {
        self.svi.get(id).copied().unwrap_or(default)
    }
}

/// Bus-level and block-level risk.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskAggregation {
    pub bus: BTreeMap<String, f64>,
    /// Index `i` is block `i + 1`.
    pub block: Vec<f64>,
    /// Index `k` is the `k`-th switch of the network.
    pub switch: Vec<f64>,
}

/// Block risk is the maximum over every line, transformer and bus it contains.
pub fn aggregate_risk(net: &NetworkModel, rt: &RiskTable) -> Result<RiskAggregation, HazardError> {
    rt.check_ids(net)?;
    rt.check_complete(net)?;
    let h = Hazards::from_tables(net, rt, &SviTable { values: net.loads.iter().map(|l| (l.id.clone(), l.svi)).collect() })?;
    let bg = identify_blocks_with(net, &h);
    Ok(RiskAggregation {
        bus: net.buses.iter().map(|b| (b.id.clone(), h.component_risk(&b.id))).collect(),
        block: bg.blocks.iter().map(|b| b.risk).collect(),
        switch: bg.edges.iter().map(|e| e.risk).collect(),
    })
}

/// Block vulnerability is the sum of the SVI values of its loads.
pub fn aggregate_svi(net: &NetworkModel, st: &SviTable) -> Result<Vec<f64>, HazardError> {
    st.check_ids(net)?;
    st.check_complete(net)?;
    let h = Hazards { svi: st.values.iter().map(|(k, &v)| (k.clone(), v)).collect(), ..Hazards::default() };
    Ok(identify_blocks_with(net, &h).blocks.iter().map(|b| b.total_svi).collect())
}

/// Moves risk from removed secondary circuits onto the primary bus that absorbed
/// them: each primary bus takes the maximum of its own value and every removed
/// element's value.
pub fn fold_secondary_risk(reduction: &Reduction, rt: &RiskTable) -> RiskTable {
    let mut values: BTreeMap<String, f64> = rt
        .values
        .iter()
        .filter(|(k, _)| !reduction.absorbed.values().any(|s| s.contains(*k)))
        .map(|(k, &v)| (k.clone(), v))
        .collect();
    for (primary, removed) in &reduction.absorbed {
        let folded = removed.iter().filter_map(|id| rt.get(id)).fold(rt.get(primary).unwrap_or(0.0), f64::max);
        values.insert(primary.clone(), folded);
    }
    let out_of_range = values.iter().filter(|(_, &v)| v > RISK_SCALE_MAX).map(|(k, _)| k.clone()).collect();
    RiskTable { values, out_of_range }
}

/// Annotates a block graph from the two tables in one step.
pub fn annotated_blocks(net: &NetworkModel, rt: &RiskTable, st: &SviTable) -> Result<BlockGraph, HazardError> {
    Ok(identify_blocks_with(net, &Hazards::from_tables(net, rt, st)?))
}
