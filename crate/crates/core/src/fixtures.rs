//! Built-in networks: the 13-bus study feeder, small analytic cases, a
//! secondary-circuit feeder for the reduction procedure, and seeded random
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feeder::{
    Bus, DistributedSource, LineSegment, LoadPoint, NetworkModel, PerPhase, Phase, PhaseSet, SourceKind,
    SwitchElement, TransformerElement,
};
use crate::hazard::{RiskTable, SviTable};

pub const IEEE13_NETWORK: &str = include_str!("../fixtures/ieee13/network.json");
pub const IEEE13_WIDESPREAD: &str = include_str!("../fixtures/ieee13/network_widespread.json");
pub const IEEE13_RISK: &str = include_str!("../fixtures/ieee13/risk.csv");
pub const IEEE13_SVI: &str = include_str!("../fixtures/ieee13/svi.csv");

pub fn ieee13_network() -> NetworkModel {
    NetworkModel::from_json(IEEE13_NETWORK).expect("bundled fixture")
}

/// Same topology with demand spread more evenly over the blocks.
pub fn ieee13_widespread() -> NetworkModel {
    NetworkModel::from_json(IEEE13_WIDESPREAD).expect("bundled fixture")
}

pub fn ieee13_risk() -> RiskTable {
    RiskTable::from_reader(IEEE13_RISK.as_bytes()).expect("bundled fixture")
}

pub fn ieee13_svi() -> SviTable {
    SviTable::from_reader(IEEE13_SVI.as_bytes()).expect("bundled fixture")
}

/// Incremental construction of small networks in code.
#[derive(Debug, Clone)]
pub struct NetBuilder {
    net: NetworkModel,
}

impl NetBuilder {
    pub fn new(base_kv: f64, base_kva: f64) -> NetBuilder {
        NetBuilder {
            net: NetworkModel {
                base_kv,
                base_kva,
                buses: Vec::new(),
                lines: Vec::new(),
                switches: Vec::new(),
                loads: Vec::new(),
                sources: Vec::new(),
                transformers: Vec::new(),
            },
        }
    }

    pub fn bus(mut self, id: &str, phases: PhaseSet, substation: bool) -> Self {
        self.net.buses.push(Bus {
            id: id.into(),
            phases,
            vmin: 0.95,
            vmax: 1.05,
            is_substation: substation,
            coords: None,
        });
        self
    }

    /// Line with self impedance `r`, `x` ohms and mutual terms at 40% of self.
    pub fn line(mut self, id: &str, from: &str, to: &str, phases: PhaseSet, r: f64, x: f64, s_max: f64) -> Self {
        let n = phases.len();
        let mat = |v: f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|k| if i == k { v } else { 0.4 * v }).collect()).collect()
        };
        self.net.lines.push(LineSegment {
            id: id.into(),
            from_bus: from.into(),
            to_bus: to.into(),
            phases,
            r: mat(r),
            x: mat(x),
            s_max,
            length: 100.0,
        });
        self
    }

    pub fn switch(mut self, id: &str, from: &str, to: &str, phases: PhaseSet, risk: f64) -> Self {
        self.net.switches.push(SwitchElement {
            id: id.into(),
            from_bus: from.into(),
            to_bus: to.into(),
            phases,
            normally_open: false,
            risk,
            s_max: 5000.0,
        });
        self
    }

    pub fn load(mut self, id: &str, bus: &str, pd: PerPhase, svi: f64) -> Self {
        let qd = PerPhase(pd.0.iter().map(|(&p, &v)| (p, 0.3 * v)).collect());
        self.net.loads.push(LoadPoint { id: id.into(), bus: bus.into(), pd, qd, svi });
        self
    }

    pub fn source(mut self, id: &str, bus: &str, phases: PhaseSet, pmax: f64, kind: SourceKind, forming: bool) -> Self {
        self.net.sources.push(DistributedSource {
            id: id.into(),
            bus: bus.into(),
            pmax: PerPhase::uniform(phases, pmax),
            qmin: PerPhase::uniform(phases, -pmax),
            qmax: PerPhase::uniform(phases, pmax),
            can_grid_form: forming || kind == SourceKind::SubstationSource,
            kind,
        });
        self
    }

    pub fn transformer(mut self, id: &str, from: &str, to: &str, distribution: bool) -> Self {
        self.net.transformers.push(TransformerElement {
            id: id.into(),
            from_bus: from.into(),
            to_bus: to.into(),
            is_distribution_xfmr: distribution,
        });
        self
    }

    pub fn build(self) -> NetworkModel {
        self.net
    }
}

fn pa() -> PhaseSet {
    PhaseSet::single(Phase::A)
}

/// Single-phase `src -> load` feeder. With a 3000 kVA base the per-phase
/// power base is 1000 kW and the impedance base is 1/3 ohm, so line `l1` has
/// r = 0.01 pu and x = 0, and load `ld` draws exactly 1 pu.
pub fn two_bus_network() -> NetworkModel {
    let zb = 1.0 / 3.0;
    NetBuilder::new(1.0, 3000.0)
        .bus("src", pa(), true)
        .bus("load", pa(), false)
        .line("l1", "src", "load", pa(), 0.01 * zb, 0.0, 5000.0)
        .load("ld", "load", PerPhase::uniform(pa(), 1000.0), 1.0)
        .source("vsrc", "src", pa(), 5000.0, SourceKind::SubstationSource, true)
        .build()
}

/// Primary feeder of six buses with three distribution transformers, each
/// serving a three-bus secondary circuit (15 buses in total).
pub fn secondary_feeder() -> NetworkModel {
    let abc = PhaseSet::ABC;
    let ab = PhaseSet::new([Phase::A, Phase::B]).unwrap();
    let mut b = NetBuilder::new(12.47, 10000.0)
        .bus("sub", abc, true)
        .bus("p1", abc, false)
        .bus("p2", abc, false)
        .bus("p3", abc, false)
        .bus("p4", ab, false)
        .bus("p5", abc, false)
        .line("lp01", "sub", "p1", abc, 0.2, 0.6, 8000.0)
        .line("lp12", "p1", "p2", abc, 0.3, 0.7, 6000.0)
        .line("lp23", "p2", "p3", abc, 0.2, 0.5, 6000.0)
        .line("lp14", "p1", "p4", ab, 0.4, 0.8, 3000.0)
        .switch("swp35", "p3", "p5", abc, 10.0)
        .source("grid", "sub", abc, 8000.0, SourceKind::SubstationSource, true);
    // t1 behind p2: single-phase a secondary
    b = b
        .transformer("t1", "p2", "s1a", true)
        .bus("s1a", pa(), false)
        .bus("s1b", pa(), false)
        .bus("s1c", pa(), false)
        .line("ls1ab", "s1a", "s1b", pa(), 0.01, 0.01, 100.0)
        .line("ls1bc", "s1b", "s1c", pa(), 0.01, 0.01, 100.0)
        .load("h1", "s1b", PerPhase::uniform(pa(), 3.0), 0.4)
        .load("h2", "s1c", PerPhase::uniform(pa(), 4.0), 0.6)
        .source("pv1", "s1c", pa(), 2.5, SourceKind::Solar, false);
    // t2 behind p4: two-phase secondary with two storage units
    b = b
        .transformer("t2", "p4", "s2a", true)
        .bus("s2a", ab, false)
        .bus("s2b", ab, false)
        .bus("s2c", ab, false)
        .line("ls2ab", "s2a", "s2b", ab, 0.01, 0.01, 100.0)
        .line("ls2ac", "s2a", "s2c", ab, 0.01, 0.01, 100.0)
        .load("h3", "s2b", PerPhase(vec![(Phase::A, 5.5), (Phase::B, 1.25)].into_iter().collect()), 0.3)
        .load("h4", "s2c", PerPhase::uniform(PhaseSet::single(Phase::B), 6.0), 0.2)
        .source("es1", "s2b", ab, 5.0, SourceKind::Storage, true)
        .source("es2", "s2c", ab, 7.0, SourceKind::Storage, false);
    // t3 behind p5: three-phase secondary
    b = b
        .transformer("t3", "p5", "s3a", true)
        .bus("s3a", abc, false)
        .bus("s3b", abc, false)
        .bus("s3c", abc, false)
        .line("ls3ab", "s3a", "s3b", abc, 0.01, 0.01, 200.0)
        .line("ls3bc", "s3b", "s3c", abc, 0.01, 0.01, 200.0)
        .load("h5", "s3b", PerPhase::uniform(abc, 10.0), 0.75)
        .load("h6", "s3c", PerPhase::uniform(PhaseSet::single(Phase::C), 8.125), 0.125)
        .source("pv2", "s3b", abc, 3.0, SourceKind::Solar, false)
        .source("pv3", "s3c", abc, 2.0, SourceKind::Solar, false);
    b.load("lp3", "p3", PerPhase::uniform(abc, 120.0), 1.5).build()
}

/// A seeded random instance with hazard tables.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub seed: u64,
    pub network: NetworkModel,
    pub risk: RiskTable,
    pub svi: SviTable,
}

/// Limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub max_blocks: usize,
    pub max_switches: usize,
    pub max_buses_per_block: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec { max_blocks: 5, max_switches: 4, max_buses_per_block: 3 }
    }
}

/// Random feeder of radial blocks joined by switches. Component risks are drawn
/// from [0, 150], switch risks from [0, 100] and load SVI so that each block's
/// vulnerability lies in [0, 10].
pub fn random_instance(seed: u64, spec: RandomSpec) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abc = PhaseSet::ABC;
    let nblocks = rng.gen_range(2..=spec.max_blocks.max(2));
    let mut b = NetBuilder::new(4.16, 3000.0);
    let mut risk = RiskTable::default();
    let mut svi = SviTable::default();
    let mut block_buses: Vec<Vec<String>> = Vec::new();

    for k in 0..nblocks {
        let nb = rng.gen_range(1..=spec.max_buses_per_block.max(1));
        let mut buses: Vec<String> = Vec::new();
        for i in 0..nb {
            let id = format!("b{k}_{i}");
            b = b.bus(&id, abc, k == 0 && i == 0);
            risk.values.insert(id.clone(), round2(rng.gen_range(0.0..=150.0)));
            if i > 0 {
                let parent = buses[rng.gen_range(0..i)].clone();
                let lid = format!("l{k}_{i}");
                b = b.line(&lid, &parent, &id, abc, rng.gen_range(0.05..0.5), rng.gen_range(0.1..1.0), rng.gen_range(600.0..3000.0));
                risk.values.insert(lid, round2(rng.gen_range(0.0..=150.0)));
            }
            buses.push(id);
        }
        if k == 0 {
            b = b.source("grid", &buses[0], abc, 10_000.0, SourceKind::SubstationSource, true);
        }
        let nloads = rng.gen_range(0..=2usize);
        let v_block = rng.gen_range(0.0..=10.0f64);
        for i in 0..nloads {
            let id = format!("ld{k}_{i}");
            let bus = buses[rng.gen_range(0..buses.len())].clone();
            let pd = PerPhase(Phase::ALL.iter().map(|&p| (p, rng.gen_range(0..=300) as f64)).collect());
            let v = round2(v_block / nloads as f64);
            b = b.load(&id, &bus, pd, v);
            svi.values.insert(id, v);
        }
        if k > 0 {
            if rng.gen_bool(0.6) {
                let kind = if rng.gen_bool(0.5) { SourceKind::Storage } else { SourceKind::Generator };
                let bus = buses[rng.gen_range(0..buses.len())].clone();
                b = b.source(&format!("f{k}"), &bus, abc, rng.gen_range(0..=400) as f64, kind, true);
            }
            if rng.gen_bool(0.3) {
                let bus = buses[rng.gen_range(0..buses.len())].clone();
                b = b.source(&format!("pv{k}"), &bus, abc, rng.gen_range(0..=200) as f64, SourceKind::Solar, false);
            }
        }
        block_buses.push(buses);
    }

    // Spanning tree over blocks first, then extra switches, up to the limit.
    let mut pairs: Vec<(usize, usize)> = (1..nblocks).map(|k| (rng.gen_range(0..k), k)).collect();
    let extra = spec.max_switches.saturating_sub(pairs.len());
    for _ in 0..rng.gen_range(0..=extra) {
        let a = rng.gen_range(0..nblocks);
        let c = rng.gen_range(0..nblocks);
        if a != c {
            pairs.push((a.min(c), a.max(c)));
        }
    }
    pairs.truncate(spec.max_switches.max(nblocks - 1));
    for (n, (a, c)) in pairs.into_iter().enumerate() {
        let fa = block_buses[a][rng.gen_range(0..block_buses[a].len())].clone();
        let fc = block_buses[c][rng.gen_range(0..block_buses[c].len())].clone();
        let id = format!("sw{}", n + 1);
        let r = round2(rng.gen_range(0.0..=100.0));
        b = b.switch(&id, &fa, &fc, abc, r);
        risk.values.insert(id, r);
    }

    let network = b.build();
    RandomInstance { seed, network, risk, svi }
}

/// Random radial single-block feeder of `nbus` three-phase buses, a few of
/// them with single- or two-phase laterals.
pub fn random_radial_feeder(seed: u64, nbus: usize) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetBuilder::new(4.16, 3000.0).bus("n0", PhaseSet::ABC, true);
    let mut phases = vec![PhaseSet::ABC];
    for i in 1..nbus.max(2) {
        let parent = rng.gen_range(0..i);
        let pp = phases[parent];
        let ph = if rng.gen_bool(0.3) {
            let subs: Vec<PhaseSet> = (1u8..8)
                .filter_map(|m| PhaseSet::new(Phase::ALL.into_iter().filter(move |p| m & (1 << p.index()) != 0)))
                .filter(|s| s.is_subset(pp))
                .collect();
            subs[rng.gen_range(0..subs.len())]
        } else {
            pp
        };
        let id = format!("n{i}");
        b = b
            .bus(&id, ph, false)
            .line(&format!("l{i}"), &format!("n{parent}"), &id, ph, rng.gen_range(0.05..0.4), rng.gen_range(0.1..0.8), 4000.0);
        if rng.gen_bool(0.7) {
            let pd = PerPhase(ph.iter().map(|p| (p, rng.gen_range(0..=150) as f64)).collect());
            b = b.load(&format!("ld{i}"), &id, pd, 1.0);
        }
        if rng.gen_bool(0.2) {
            b = b.source(&format!("pv{i}"), &id, ph, rng.gen_range(0..=80) as f64, SourceKind::Solar, false);
        }
        phases.push(ph);
    }
    b.source("grid", "n0", PhaseSet::ABC, 10_000.0, SourceKind::SubstationSource, true).build()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
