//! Cross-checks of the optimized operations against the brute-force
//! oracles on randomized desk-scale instances.

mod common;

use common::*;
use fpp_core::geodesics::{
    attached_first_passage_time, count_geodesics_dp, enumerate_geodesics, first_passage_time,
    pivotal_edges, union_edges, GeodesicCount,
};
use fpp_core::paths::{attached_path_time, classify_turns, AttachedParams};
use fpp_core::weight::{rat, Rat};
use fpp_core::{FppError, Region, Vertex};
use num::bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn label_setting_matches_the_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..40u64 {
        let (env, region) = if i % 2 == 0 {
            let spec = if i % 4 == 0 { spec_12(2) } else { spec_01(2) };
            (
                env_on(&spec, vec![0, 0], vec![4, 4], 500 + i),
                Region::new(vec![0, 0], vec![4, 4]).unwrap(),
            )
        } else {
            let spec = if i % 4 == 1 { spec_12(3) } else { spec_01(3) };
            (
                env_on(&spec, vec![0, 0, 0], vec![2, 2, 2], 500 + i),
                Region::new(vec![0, 0, 0], vec![2, 2, 2]).unwrap(),
            )
        };
        let (v, w) = random_pair(&mut rng, &region);
        let oracle = exhaustive_geodesics(&env, &v, &w);
        let fast = first_passage_time(&env, &v, &w).unwrap();
        assert_eq!(fast.value, oracle.min_time, "instance {i} ({v} -> {w})");
        // the reported geodesic really is one
        assert!(oracle.geodesics.contains(&fast.one_geodesic));
    }
}

#[test]
fn enumeration_matches_the_unpruned_search_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for i in 0..30u64 {
        let spec = if i % 2 == 0 { spec_12(2) } else { spec_01(2) };
        let env = env_on(&spec, vec![0, 0], vec![4, 4], 900 + i);
        let region = Region::new(vec![0, 0], vec![4, 4]).unwrap();
        let (v, w) = random_pair(&mut rng, &region);
        let oracle = exhaustive_geodesics(&env, &v, &w);
        let set = enumerate_geodesics(&env, &v, &w, 1_000_000).unwrap();
        assert_eq!(
            set.count,
            GeodesicCount::Exact(BigUint::from(oracle.geodesics.len()))
        );
        let mut ours: Vec<_> = set.sample_paths.clone();
        let mut theirs = oracle.geodesics.clone();
        ours.sort_by_key(|p| p.to_string());
        theirs.sort_by_key(|p| p.to_string());
        assert_eq!(ours, theirs, "instance {i}");
        assert_eq!(set.union_edges, oracle.union_edges());
        assert_eq!(set.pivotal_edges, oracle.pivotal_edges());
    }
}

#[test]
fn dag_count_union_and_pivotal_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for i in 0..60u64 {
        let env = env_on(&spec_12(2), vec![0, 0], vec![5, 4], 1300 + i);
        let region = Region::new(vec![0, 0], vec![5, 4]).unwrap();
        let (v, w) = random_pair(&mut rng, &region);
        let set = enumerate_geodesics(&env, &v, &w, 1_000_000).unwrap();
        let dp = count_geodesics_dp(&env, &v, &w).unwrap();
        assert_eq!(GeodesicCount::Exact(dp), set.count, "instance {i}");
        assert_eq!(union_edges(&env, &v, &w).unwrap(), set.union_edges);
        assert_eq!(pivotal_edges(&env, &v, &w).unwrap(), set.pivotal_edges);
    }
}

#[test]
fn zero_atoms_take_the_enumeration_fallback() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for i in 0..15u64 {
        let env = env_on(&spec_01(2), vec![0, 0], vec![4, 4], 1700 + i);
        let region = Region::new(vec![0, 0], vec![4, 4]).unwrap();
        let (v, w) = random_pair(&mut rng, &region);
        assert_eq!(
            count_geodesics_dp(&env, &v, &w),
            Err(FppError::ZeroWeightPresent)
        );
        let set = enumerate_geodesics(&env, &v, &w, 1_000_000).unwrap();
        assert_eq!(union_edges(&env, &v, &w).unwrap(), set.union_edges);
        assert_eq!(pivotal_edges(&env, &v, &w).unwrap(), set.pivotal_edges);
        let oracle = exhaustive_geodesics(&env, &v, &w);
        assert_eq!(set.union_edges, oracle.union_edges());
    }
}

#[test]
fn branch_and_bound_matches_the_exhaustive_attached_minimum() {
    let beta = rat(1, 100);
    let params = AttachedParams::new(beta.clone());
    for i in 0..25u64 {
        let n = 3 + (i % 4) as i64; // spans 3..=6
        let env = env_on(&spec_12(2), vec![-1, -2], vec![n + 1, 2], 2100 + i);
        let v = Vertex::origin(2);
        let w = Vertex::axis_point(2, 0, n);
        let (oracle_value, oracle_opts) = exhaustive_attached(&env, &v, &w, &beta);
        let res = attached_first_passage_time(&env, &v, &w, &params, 10_000_000).unwrap();
        assert!(!res.cap_hit);
        assert_eq!(res.value, oracle_value, "instance {i}");
        let mut ours: Vec<String> = res.optimizers.iter().map(|p| p.to_string()).collect();
        let mut theirs: Vec<String> = oracle_opts.iter().map(|p| p.to_string()).collect();
        ours.sort();
        theirs.sort();
        assert_eq!(ours, theirs, "instance {i}");
    }
}

#[test]
fn corner_tallies_agree_between_library_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for i in 0..30u64 {
        let env = env_on(&spec_12(2), vec![0, 0], vec![5, 5], 2600 + i);
        let region = Region::new(vec![0, 0], vec![5, 5]).unwrap();
        let (v, w) = random_pair(&mut rng, &region);
        let set = enumerate_geodesics(&env, &v, &w, 10_000).unwrap();
        for p in set.sample_paths.iter().take(20) {
            let lib = classify_turns(&env, p).unwrap().g_turn_count();
            assert_eq!(lib, oracle_g_turn_count(&env, p));
            // attached path time is plain time plus beta per corner
            let t = fpp_core::paths::passage_time(&env, p).unwrap();
            let tp = attached_path_time(&env, p, &AttachedParams::new(rat(1, 7))).unwrap();
            let expect = t + fpp_core::Weight::Finite(
                Rat::from_integer(lib.into()) * rat(1, 7),
            );
            assert_eq!(tp, expect);
        }
    }
}

#[test]
fn replica_statistics_match_the_oracle_pipeline() {
    use fpp_core::experiments::{
        replica_environment, run_replica, Caps, CountStat, ExperimentConfig, MarginPolicy, Toggles,
    };
    use num::Zero;
    let cfg = ExperimentConfig {
        spec: spec_12(2),
        n_grid: vec![6],
        replicas: 1,
        seed: 424242,
        beta: rat(1, 100),
        alpha: None,
        box_scale: 4,
        m_bound: fpp_core::weight::rat_int(10),
        delta1: Rat::zero(),
        coarse_k: 2,
        margin_policy: MarginPolicy::Auto { cap: 64 },
        caps: Caps::default(),
        toggles: Toggles::default(),
        threads: None,
    };
    let stats = run_replica(&cfg, 6, 0).unwrap();
    let env = replica_environment(&cfg, 6, 0).unwrap();
    let v = Vertex::origin(2);
    let w = Vertex::axis_point(2, 0, 6);
    let oracle = exhaustive_geodesics(&env, &v, &w);
    assert_eq!(fpp_core::Weight::Finite(stats.t.clone()), oracle.min_time);
    assert_eq!(
        stats.count,
        CountStat::Exact(BigUint::from(oracle.geodesics.len()))
    );
    assert_eq!(stats.union_size, oracle.union_edges().len());
    assert_eq!(stats.pivotal_size, oracle.pivotal_edges().len());
    let min_g = oracle
        .geodesics
        .iter()
        .map(|p| oracle_g_turn_count(&env, p) as u64)
        .min();
    assert_eq!(stats.g_turn_min_o, min_g);
    let (t_plus, _) = exhaustive_attached(&env, &v, &w, &rat(1, 100));
    assert_eq!(
        stats.t_plus.map(fpp_core::Weight::Finite),
        Some(t_plus)
    );
    assert_eq!(
        stats.longest_geodesic.unwrap() as usize,
        oracle.geodesics.iter().map(|p| p.len()).max().unwrap()
    );
}

#[test]
fn chain_inequality_holds_on_fully_enumerated_instances() {
    let beta = rat(1, 100);
    let params = AttachedParams::new(beta.clone());
    for i in 0..20u64 {
        let n = 4 + (i % 3) as i64;
        let env = env_on(&spec_12(2), vec![-2, -3], vec![n + 2, 3], 3000 + i);
        let v = Vertex::origin(2);
        let w = Vertex::axis_point(2, 0, n);
        let t = first_passage_time(&env, &v, &w).unwrap().value;
        let set = enumerate_geodesics(&env, &v, &w, 1_000_000).unwrap();
        assert!(set.count.exact().is_some());
        let res = attached_first_passage_time(&env, &v, &w, &params, 10_000_000).unwrap();
        assert!(!res.cap_hit);
        let min_g_plain = set
            .sample_paths
            .iter()
            .map(|p| oracle_g_turn_count(&env, p))
            .min()
            .unwrap();
        let min_g_attached = res
            .optimizers
            .iter()
            .map(|p| oracle_g_turn_count(&env, p))
            .min()
            .unwrap();
        let (Some(tp), Some(tv)) = (res.value.finite(), t.finite()) else {
            unreachable!("finite instance");
        };
        let gap = tp - tv;
        let lo = Rat::from_integer(min_g_attached.into()) * &beta;
        let hi = Rat::from_integer(min_g_plain.into()) * &beta;
        assert!(lo <= gap && gap <= hi, "instance {i}: {lo} <= {gap} <= {hi}");
    }
}
