use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mgconfig::feeder::SourceKind;
use mgconfig::fixtures::{self, random_instance, random_radial_feeder, RandomSpec};
use mgconfig::hazard::{annotated_blocks, fold_secondary_risk, RiskTable, SviTable};
use mgconfig::solver::{solve_with, LpCache, SolveOptions};
use mgconfig::{identify_blocks, reduce_feeder, Controllability, NetworkModel, Objective, OmcpInstance, RiskPolicy};

fn instance(seed: u64, ctrl: Controllability, threshold: f64) -> OmcpInstance {
    let ri = random_instance(seed, RandomSpec::default());
    let bg = annotated_blocks(&ri.network, &ri.risk, &ri.svi).unwrap();
    let policy = RiskPolicy::new(&bg, threshold, true).unwrap();
    OmcpInstance::new(ri.network, bg, Objective::ALL[seed as usize % 3], ctrl, policy)
}

#[test]
fn pruning_does_not_change_the_answer() {
    for seed in 0..40 {
        for ctrl in Controllability::ALL {
            let inst = instance(seed, ctrl, 0.2 + 0.15 * (seed % 5) as f64);
            let cache = LpCache::new();
            let pruned = solve_with(&inst, SolveOptions::default(), &cache).unwrap();
            let full = solve_with(&inst, SolveOptions { prune: false, ..SolveOptions::default() }, &cache).unwrap();
            assert_eq!(pruned.configuration.energized, full.configuration.energized, "seed {seed} {ctrl:?}");
            assert_eq!(pruned.configuration.switch_closed, full.configuration.switch_closed, "seed {seed} {ctrl:?}");
            assert_eq!(pruned.configuration.inverter_forming, full.configuration.inverter_forming, "seed {seed} {ctrl:?}");
            assert!(full.stats.nodes >= pruned.stats.nodes);
        }
    }
}

#[test]
fn repeated_solves_are_identical() {
    let inst = instance(7, Controllability::NetworkingMicrogrids, 0.6);
    let a = solve_with(&inst, SolveOptions::default(), &LpCache::new()).unwrap();
    let b = solve_with(&inst, SolveOptions::default(), &LpCache::new()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn block_numbering_ignores_element_order() {
    for seed in 0..30 {
        let net = random_instance(seed, RandomSpec::default()).network;
        let mut shuffled = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.buses.shuffle(&mut rng);
        shuffled.lines.shuffle(&mut rng);
        shuffled.loads.shuffle(&mut rng);
        shuffled.sources.shuffle(&mut rng);
        let (a, b) = (identify_blocks(&net), identify_blocks(&shuffled));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            let xs: BTreeSet<_> = x.bus_ids.iter().collect();
            let ys: BTreeSet<_> = y.bus_ids.iter().collect();
            assert_eq!(xs, ys, "seed {seed} block {}", x.id);
            assert_eq!(x.total_pd, y.total_pd);
        }
    }
}

#[test]
fn reduction_folds_secondaries() {
    let net = fixtures::secondary_feeder();
    let red = reduce_feeder(&net).unwrap();
    let out = &red.network;
    assert_eq!(out.buses.len(), 6);
    assert!(red.retained.is_empty());
    assert!(out.transformers.is_empty());

    // the two loads behind t1 carry svi 0.4 and 0.6
    let t1 = out.loads.iter().find(|l| l.id == "t1_load").unwrap();
    assert_eq!(t1.bus, "p2");
    assert_eq!(t1.svi, 1.0);
    assert_eq!(t1.pd.total(), 7.0);

    // storage keeps its identity and moves to the primary bus
    let es: Vec<_> = out.sources.iter().filter(|s| s.kind == SourceKind::Storage).collect();
    assert_eq!(es.len(), 2);
    assert!(es.iter().all(|s| s.bus == "p4"));
    assert!(out.sources.iter().any(|s| s.id == "es1" && s.can_grid_form));

    // reducing again changes nothing
    assert_eq!(&reduce_feeder(out).unwrap().network, out);
}

#[test]
fn secondary_risk_moves_to_primary_bus() {
    let net = fixtures::secondary_feeder();
    let red = reduce_feeder(&net).unwrap();
    let mut rt = RiskTable::default();
    rt.values.insert("ls1ab".into(), 30.0);
    rt.values.insert("ls1bc".into(), 70.0);
    rt.values.insert("p2".into(), 20.0);
    let folded = fold_secondary_risk(&red, &rt);
    assert_eq!(folded.get("p2"), Some(70.0));
    assert_eq!(folded.get("ls1ab"), None);
}

#[test]
fn reduced_feeder_still_solves() {
    let net = fixtures::secondary_feeder();
    let red = reduce_feeder(&net).unwrap().network;
    let mut rt = RiskTable::default();
    for l in &red.lines {
        rt.values.insert(l.id.clone(), 10.0);
    }
    rt.values.insert("swp35".into(), 5.0);
    let st = SviTable { values: red.loads.iter().map(|l| (l.id.clone(), l.svi)).collect() };
    let bg = annotated_blocks(&red, &rt, &st).unwrap();
    let policy = RiskPolicy::new(&bg, 1.0, true).unwrap();
    let inst = OmcpInstance::new(red, bg, Objective::LoadOnly, Controllability::NetworkingMicrogrids, policy);
    let rep = solve_with(&inst, SolveOptions::default(), &LpCache::new()).unwrap();
    assert_eq!(rep.shed_cost(), 0.0);
    assert!(rep.configuration.dispatch.feasible);
}

fn round_trip(net: &NetworkModel) -> NetworkModel {
    NetworkModel::from_json(&net.to_json()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_json_round_trip(seed in 0u64..10_000, nbus in 2usize..12) {
        let net = random_radial_feeder(seed, nbus);
        prop_assert_eq!(round_trip(&net), net);
    }

    #[test]
    fn random_instance_json_round_trip(seed in 0u64..10_000) {
        let net = random_instance(seed, RandomSpec::default()).network;
        prop_assert_eq!(round_trip(&net), net);
    }
}

#[test]
fn scaling_vulnerability_keeps_the_optimum() {
    // A power-of-two factor scales every sum exactly, so ties stay ties.
    for seed in 0..30 {
        for obj in [Objective::VulnerabilityOnly, Objective::VulnerabilityWeighted] {
            let mut inst = instance(seed, Controllability::NetworkingMicrogrids, 0.5);
            inst.objective = obj;
            let v: Vec<f64> = inst.blocks.blocks.iter().map(|b| 4.0 * b.total_svi).collect();
            let mut scaled = inst.clone();
            scaled.blocks = inst.blocks.with_vulnerability(&v);
            let cache = LpCache::new();
            let a = solve_with(&inst, SolveOptions::default(), &cache).unwrap();
            let b = solve_with(&scaled, SolveOptions::default(), &cache).unwrap();
            assert_eq!(a.configuration.energized, b.configuration.energized, "seed {seed} {obj:?}");
            assert_eq!(b.shed_cost(), 4.0 * a.shed_cost());
        }
    }
}

#[test]
fn shed_is_zero_only_when_every_loaded_block_is_on() {
    let inst = instance(3, Controllability::NetworkingMicrogrids, 1.0);
    let bg = &inst.blocks;
    let n = bg.len();
    for mask in 0u32..(1 << n) {
        let on: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let all_loaded_on = bg.blocks.iter().zip(&on).all(|(b, &e)| e || b.total_pd == 0.0);
        let shed = mgconfig::omcp::shed_cost(bg, &on, Objective::LoadOnly);
        assert_eq!(shed == 0.0, all_loaded_on, "mask {mask:b}");
    }
}
