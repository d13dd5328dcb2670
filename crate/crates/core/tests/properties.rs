use rann::budgeted_index::admissible_nn;
use rann::ds_lsh::hamming;
use rann::eval::{gen_adversarial, gen_planted, gen_planted_budgeted, BudgetedPlantedParams, CostProfile, PlantedParams};
use rann::{
    robust_nn_bruteforce, BudgetedConfig, BudgetedIndex, CostVector, DsLshConfig, DsLshIndex, NormParams,
    RobustIndex, RobustIndexConfig,
};

fn planted(seed: u64, k: usize) -> rann::eval::PlantedInstance {
    gen_planted(&PlantedParams { n: 200, d: 32, queries: 20, k, r: 1.0, noise_mag: 10.0, p: 1.0, seed }).unwrap()
}

#[test]
fn more_substructures_never_hurt() {
    // projections are keyed by substructure number, so a smaller index is a
    // prefix of a larger one with the same seed
    for seed in 0..4 {
        let inst = planted(seed, 3);
        let cfg = |l_scale| RobustIndexConfig { k: 3, l_scale, seed, ..Default::default() };
        let small = RobustIndex::build(&inst.data, cfg(0.02)).unwrap();
        let large = RobustIndex::build(&inst.data, cfg(0.3)).unwrap();
        assert!(small.len() < large.len());
        assert_eq!(small.projections(), &large.projections()[..small.len()]);
        for q in inst.queries.rows() {
            assert!(large.query(q).unwrap().distance <= small.query(q).unwrap().distance);
        }
    }
}

#[test]
fn uniform_costs_reduce_to_robust_l1() {
    let k = 3;
    for seed in 0..3 {
        let inst = planted(seed, k);
        let costs = CostVector::uniform(32, 1.0 / k as f64).unwrap();
        for (j, q) in inst.queries.rows().enumerate() {
            let (robust, dist) = robust_nn_bruteforce(&inst.data, q, NormParams { p: 1.0, k }).unwrap();
            let (budgeted, adm) = admissible_nn(&inst.data, q, &costs, 0.1).unwrap();
            assert_eq!(robust, inst.truth[j].neighbor);
            assert_eq!(budgeted, robust);
            assert!(adm.distance >= dist - 1e-9 && adm.distance <= 1.1 * dist + 1e-9);
            assert!(adm.ignored.len() <= k);
        }
    }
}

#[test]
fn budgeted_index_recovers_planted_neighbors_with_uniform_costs() {
    let inst = gen_planted_budgeted(&BudgetedPlantedParams {
        n: 300,
        d: 32,
        queries: 30,
        profile: CostProfile::Uniform { k: 4 },
        r: 1.0,
        noise_mag: 10.0,
        seed: 8,
    })
    .unwrap();
    let idx = BudgetedIndex::build(&inst.data, inst.costs.clone(), BudgetedConfig { seed: 3, ..Default::default() })
        .unwrap();
    let hits = inst
        .queries
        .rows()
        .zip(&inst.truth)
        .filter(|(q, t)| idx.query(q).unwrap().index == t.neighbor)
        .count();
    assert!(hits >= 27, "{hits}/30");
}

#[test]
fn ds_lsh_answers_are_consistent() {
    let inst = rann::eval::gen_hamming_planted(600, 128, 40, 8, 21).unwrap();
    let idx = DsLshIndex::build(&inst.points, DsLshConfig { r: 8, seed: 4, ..Default::default() }).unwrap();
    let c3 = idx.config().c3;
    for j in 0..inst.queries.len() {
        let q = inst.queries.row(j);
        let ans = idx.query(q).unwrap();
        let s = &ans.stats;
        assert_eq!(s.collisions.len(), s.level);
        if let Some(w) = ans.witness {
            assert_eq!(w.distance, hamming(inst.points.row(w.index), q));
            assert_eq!(ans.outcome == rann::Outcome::Near, w.distance <= idx.near_radius());
        }
        if !s.block_scan {
            let x = *s.collisions.last().unwrap();
            assert_eq!(s.entries_scanned, x);
            assert!(x as f64 <= c3 * idx.layout().tables[s.level - 1] as f64);
        }
        assert!(s.bad_collisions <= s.entries_scanned);
        assert!(s.distinct_scanned as u64 <= s.entries_scanned);
    }
}

#[test]
fn last_level_scan_is_bounded_by_light_blocks() {
    // at the final level a block is light when its bad collisions stay within
    // twice their mean; the scan should read at most a constant times the
    // light size per block it opens (all T blocks when the level is cheap
    // enough to scan whole)
    let trials = 30;
    let mut reached = 0;
    let mut within = 0;
    for seed in 0..trials {
        let inst = gen_adversarial(1000, 256, 16, 0.5, seed).unwrap();
        let idx = DsLshIndex::build(&inst.points, DsLshConfig { r: 16, seed, ..Default::default() }).unwrap();
        let q = inst.queries.row(0);
        let ans = idx.query(q).unwrap();
        let layout = idx.layout();
        if ans.stats.level != layout.levels {
            continue;
        }
        reached += 1;
        let level = layout.levels as u32;
        let bad_rate: f64 = (0..inst.points.len())
            .map(|i| hamming(inst.points.row(i), q))
            .filter(|&dist| dist > idx.near_radius())
            .map(|dist| layout.collision(f64::from(dist), level))
            .sum();
        let block = layout.block_ranges().iter().map(|r| r.len()).max().unwrap() as f64;
        let light = 2.0 * bad_rate * block;
        let opened = if ans.stats.block_scan { ans.stats.blocks_scanned } else { layout.blocks };
        let bound = 10.0 * opened as f64 * light.max(1.0);
        within += usize::from(ans.stats.bad_collisions as f64 <= bound);
    }
    assert!(reached >= trials as usize / 2, "only {reached} trials reached the last level");
    assert!(within * 10 >= reached * 9, "{within}/{reached}");
}
