//! Batch studies on one instance: risk-threshold sweeps, shutoff priority
//! ranking and controllability comparisons.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::omcp::{Controllability, Objective, OmcpError, OmcpInstance};
use crate::solver::{solve_with, LpCache, SolveError, SolveOptions, SolveReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("sweep range must satisfy 0 <= from < to <= 1 and step > 0 (got from={from}, to={to}, step={step})")]
    Range { from: f64, to: f64, step: f64 },
    #[error(transparent)]
    Omcp(#[from] OmcpError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// `from, from + step, ...` up to `to`, rounded to 1e-12.
pub fn thresholds(from: f64, to: f64, step: f64) -> Result<Vec<f64>, AnalysisError> {
    if !(0.0..1.0).contains(&from) || !(to > from && to <= 1.0) || !(step > 0.0) {
        return Err(AnalysisError::Range { from, to, step });
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((from + k as f64 * step) * 1e12).round() / 1e12).map(|t| t.min(to)).collect())
}

fn pct(x: f64) -> String {
    format!("{x:.4}")
}

/// Short stable digest of the decision part of a solution.
pub fn config_hash(report: &SolveReport) -> String {
    let c = &report.configuration;
    let bits = |v: &[bool]| v.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>();
    let text = format!("sw:{};inv:{};on:{}", bits(&c.switch_closed), bits(&c.inverter_forming), bits(&c.energized));
    Sha256::digest(text.as_bytes()).iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub shed_cost: f64,
    pub served_pct: f64,
    pub risk_pct: f64,
    pub config_hash: String,
    pub energized: Vec<bool>,
    pub closed_switches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub objective: Objective,
    pub controllability: Controllability,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Number of distinct configurations across the sweep.
    pub fn distinct(&self) -> usize {
        self.rows.iter().map(|r| r.config_hash.as_str()).collect::<BTreeSet<_>>().len()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["threshold", "shed_cost", "served_pct", "risk_pct", "config_hash"]).unwrap();
        for r in &self.rows {
            w.write_record([
                r.threshold.to_string(),
                r.shed_cost.to_string(),
                pct(r.served_pct),
                pct(r.risk_pct),
                r.config_hash.clone(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Solves `base` at every threshold in parallel; rows come back in threshold order.
pub fn sweep(base: &OmcpInstance, from: f64, to: f64, step: f64, cache: &LpCache) -> Result<SweepResult, AnalysisError> {
    let ts = thresholds(from, to, step)?;
    let rows: Result<Vec<SweepRow>, AnalysisError> = ts
        .par_iter()
        .map(|&t| {
            let inst = base.with_threshold(t)?;
            let rep = solve_with(&inst, SolveOptions::default(), cache)?;
            Ok(SweepRow {
                threshold: t,
                shed_cost: rep.shed_cost(),
                served_pct: rep.report.metric(base.objective).served_pct,
                risk_pct: 100.0 * rep.risk_fraction,
                config_hash: config_hash(&rep),
                energized: rep.configuration.energized.clone(),
                closed_switches: rep.configuration.closed_switches().iter().map(|s| s.to_string()).collect(),
            })
        })
        .collect();
    Ok(SweepResult { objective: base.objective, controllability: base.controllability, rows: rows? })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorityEntry {
    pub block: usize,
    /// Steps energized under each objective, in `Objective::ALL` order.
    pub counts: [usize; 3],
    pub ranks: [usize; 3],
    /// Rank under load-only minus rank under each objective; positive means promoted.
    pub deltas: [i64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorityTable {
    pub steps: usize,
    pub entries: Vec<PriorityEntry>,
    pub distinct: [usize; 3],
}

impl PriorityTable {
    /// Blocks in rank order for one objective.
    pub fn order(&self, obj: Objective) -> Vec<usize> {
        let k = Objective::ALL.iter().position(|&o| o == obj).unwrap();
        let mut v: Vec<(usize, usize)> = self.entries.iter().map(|e| (e.ranks[k], e.block)).collect();
        v.sort();
        v.into_iter().map(|(_, b)| b).collect()
    }

    pub fn rank(&self, block: usize, obj: Objective) -> Option<usize> {
        let k = Objective::ALL.iter().position(|&o| o == obj).unwrap();
        self.entries.iter().find(|e| e.block == block).map(|e| e.ranks[k])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["block", "lo_rank", "lo_steps", "vo_rank", "vo_delta", "vo_steps", "vl_rank", "vl_delta", "vl_steps"])
            .unwrap();
        for e in &self.entries {
            w.write_record([
                e.block.to_string(),
                e.ranks[0].to_string(),
                e.counts[0].to_string(),
                e.ranks[1].to_string(),
                format!("{:+}", e.deltas[1]),
                e.counts[1].to_string(),
                e.ranks[2].to_string(),
                format!("{:+}", e.deltas[2]),
                e.counts[2].to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Ranks blocks by how many sweep steps they stay energized, per objective.
/// The substation block is excluded; ties go to the smaller block id.
pub fn priority(base: &OmcpInstance, from: f64, to: f64, step: f64, cache: &LpCache) -> Result<PriorityTable, AnalysisError> {
    let sub = base.blocks.substation_block();
    let blocks: Vec<usize> = (1..=base.blocks.len()).filter(|&b| b != sub).collect();
    let mut counts: Vec<BTreeMap<usize, usize>> = Vec::new();
    let mut distinct = [0; 3];
    let mut steps = 0;
    for (k, obj) in Objective::ALL.into_iter().enumerate() {
        let mut inst = base.clone();
        inst.objective = obj;
        let sw = sweep(&inst, from, to, step, cache)?;
        steps = sw.rows.len();
        distinct[k] = sw.distinct();
        let mut c: BTreeMap<usize, usize> = blocks.iter().map(|&b| (b, 0)).collect();
        for row in &sw.rows {
            for &b in &blocks {
                if row.energized[b - 1] {
                    *c.get_mut(&b).unwrap() += 1;
                }
            }
        }
        counts.push(c);
    }
    let ranks: Vec<BTreeMap<usize, usize>> = counts
        .iter()
        .map(|c| {
            let mut order = blocks.clone();
            order.sort_by(|a, b| c[b].cmp(&c[a]).then(a.cmp(b)));
            order.into_iter().enumerate().map(|(i, b)| (b, i + 1)).collect()
        })
        .collect();
    let entries = blocks
        .iter()
        .map(|&b| {
            let r = [ranks[0][&b], ranks[1][&b], ranks[2][&b]];
            PriorityEntry {
                block: b,
                counts: [counts[0][&b], counts[1][&b], counts[2][&b]],
                ranks: r,
                deltas: [0, r[0] as i64 - r[1] as i64, r[0] as i64 - r[2] as i64],
            }
        })
        .collect();
    Ok(PriorityTable { steps, entries, distinct })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub controllability: Controllability,
    pub blocks_on: Vec<usize>,
    pub switches_closed: Vec<String>,
    pub risk_pct: f64,
    pub served_pct: f64,
    pub shed_cost: f64,
    pub mean_v_served: Option<f64>,
    pub mean_v_shed: Option<f64>,
}

/// Solves `base` under each regime in the order given.
pub fn compare(base: &OmcpInstance, regimes: &[Controllability], cache: &LpCache) -> Result<Vec<CompareRow>, AnalysisError> {
    regimes
        .iter()
        .map(|&c| {
            let mut inst = base.clone();
            inst.controllability = c;
            let rep = solve_with(&inst, SolveOptions::default(), cache)?;
            Ok(CompareRow {
                controllability: c,
                blocks_on: rep.configuration.energized_blocks(),
                switches_closed: rep.configuration.closed_switches().iter().map(|s| s.to_string()).collect(),
                risk_pct: 100.0 * rep.risk_fraction,
                served_pct: rep.report.metric(base.objective).served_pct,
                shed_cost: rep.shed_cost(),
                mean_v_served: rep.vulnerability.mean_served,
                mean_v_shed: rep.vulnerability.mean_shed,
            })
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow], total_blocks: usize) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "controllability",
        "blocks_on",
        "blocks_total",
        "blocks",
        "switches_closed",
        "switches",
        "risk_pct",
        "served_pct",
        "mean_v_served",
        "mean_v_shed",
    ])
    .unwrap();
    for r in rows {
        let blocks: Vec<String> = r.blocks_on.iter().map(|b| b.to_string()).collect();
        w.write_record([
            r.controllability.short_name().to_string(),
            r.blocks_on.len().to_string(),
            total_blocks.to_string(),
            blocks.join(" "),
            r.switches_closed.len().to_string(),
            r.switches_closed.join(" "),
            pct(r.risk_pct),
            pct(r.served_pct),
            opt(r.mean_v_served),
            opt(r.mean_v_shed),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
