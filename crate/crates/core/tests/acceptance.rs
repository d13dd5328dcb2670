//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rann::budgeted_index::{
    admissible_distance_approx, admissible_distance_exact, admissible_nn, build_budgeted_index, is_light_weighted,
    BudgetedConfig, CostVector,
};
use rann::ds_lsh::{build_ds_lsh, hamming, DsLshConfig, Outcome};
use rann::eval::{
    check_block_moments, check_collision_rate, check_miss_probability, gen_adversarial, gen_grid, gen_hamming_planted,
    gen_planted, gen_planted_budgeted, BudgetedPlantedParams, CostProfile, LemmaConfig, PlantedParams,
};
use rann::norms::{is_light, sub, tail, LightHeavyParams};
use rann::robust_index::{build_robust_index, RobustIndexConfig, RobustMode};
use rann::{robust_nn_bruteforce, Dataset, NormParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Sort-based robust distance: sum the `d - k` smallest `|a_i - b_i|^p`.
fn sorted_robust(a: &[f64], b: &[f64], k: usize, p: f64) -> f64 {
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).collect();
    v.sort_by(f64::total_cmp);
    v[..v.len() - k].iter().sum::<f64>().powf(1.0 / p)
}

fn c1_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut max_rel = 0.0f64;
    for trial in 0..1000 {
        let k = [0, 1, 3, 9][trial % 4];
        let p = if trial % 2 == 0 { 1.0 } else { 2.0 };
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..10).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let q: Vec<f64> = (0..10).map(|_| rng.random_range(-10.0..10.0)).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let (idx, dist) = robust_nn_bruteforce(&ds, &q, NormParams { p, k }).unwrap();
        let mut want = (usize::MAX, f64::INFINITY);
        for (i, row) in rows.iter().enumerate() {
            let d = sorted_robust(row, &q, k, p);
            if d < want.1 {
                want = (i, d);
            }
        }
        if idx != want.0 {
            mismatches += 1;
        }
        max_rel = max_rel.max((dist - want.1).abs() / want.1.max(1e-300));
    }
    verdict(
        mismatches == 0 && max_rel <= 1e-12,
        format!("1000 instances, index mismatches {mismatches}, max relative distance gap {max_rel:.1e}"),
    )
}

fn c2_block_moments() -> Verdict {
    let cfg = LemmaConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1.0, 2.0] {
        for rec in check_block_moments(&cfg, 200, 0.1, p, 100_000).unwrap() {
            pass &= rec.pass;
            parts.push(format!(
                "{} predicted {:.4} measured {:.4} (se {:.4})",
                rec.name, rec.predicted, rec.measured, rec.stderr
            ));
        }
    }
    verdict(pass, parts.join("; "))
}

fn c3_miss_probability() -> Verdict {
    let cfg = RobustIndexConfig { k: 8, delta: 0.5, ..RobustIndexConfig::default() };
    let derived = cfg.derive(1000);
    let constants_ok = derived.c2 == 16.0
        && derived.c1 == 32.0
        && derived.pr == 1.0 / 256.0
        && derived.t == (16.0 * 1000f64.ln()).ceil() as u32;
    let rec = check_miss_probability(&LemmaConfig::default(), 1000, 8, 0.5, 100_000);
    verdict(
        constants_ok && rec.pass,
        format!(
            "t = {}, predicted n^-1/2 = {:.4}, measured {:.4} (se {:.4})",
            derived.t, rec.predicted, rec.measured, rec.stderr
        ),
    )
}

fn c4_bicriterion() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1.0, 2.0] {
        let k = 4;
        let r = 1.0;
        let inst = gen_planted(&PlantedParams {
            n: 500,
            d: 64,
            queries: 50,
            k,
            r,
            noise_mag: 10.0 * r,
            p,
            seed: 11,
        })
        .unwrap();
        let cfg = RobustIndexConfig { k, p, delta: 0.5, seed: 4, ..RobustIndexConfig::default() };
        let idx = build_robust_index(&inst.data, cfg).unwrap();
        let lambda = cfg.lambda();
        let mut hits = 0;
        let mut light = 0;
        for (j, t) in inst.truth.iter().enumerate() {
            let q = inst.queries.row(j);
            let ans = idx.query(q).unwrap();
            hits += usize::from(ans.index == t.neighbor);
            let rnn = t.clean_distance;
            let lh = LightHeavyParams::new(rnn / (k as f64).powf(1.0 / p), (lambda + 1.0).powf(1.0 / p) * rnn).unwrap();
            light += usize::from(is_light(&sub(q, inst.data.row(ans.index)), lh, p).unwrap());
        }
        let recall = hits as f64 / 50.0;
        pass &= recall >= 0.9 && light == 50;
        parts.push(format!("p={p}: L = {}, recall {recall:.2}, light {light}/50", idx.len()));
    }
    verdict(pass, parts.join("; "))
}

fn c5_eps_mode() -> Verdict {
    let (k, r, eps, delta) = (4, 1.0, 0.5, 0.5);
    let inst = gen_planted(&PlantedParams { n: 500, d: 64, queries: 50, k, r, noise_mag: 10.0, p: 1.0, seed: 12 }).unwrap();
    let cfg = RobustIndexConfig {
        k,
        p: 1.0,
        delta,
        mode: RobustMode::EpsApprox { eps },
        seed: 5,
        ..RobustIndexConfig::default()
    };
    let idx = build_robust_index(&inst.data, cfg).unwrap();
    let relaxed = ((k as f64 / (delta * eps.powi(5))).ceil() as usize).min(64);
    let mut ok_relaxed = 0;
    let mut ok_k = 0;
    for (j, t) in inst.truth.iter().enumerate() {
        let q = inst.queries.row(j);
        let ans = idx.query(q).unwrap();
        let diff = sub(q, inst.data.row(ans.index));
        let bound = (1.0 + 2.0 * eps) * t.clean_distance;
        ok_relaxed += usize::from(tail(&diff, relaxed, 1.0).unwrap() <= bound);
        ok_k += usize::from(tail(&diff, k, 1.0).unwrap() <= bound);
    }
    verdict(
        ok_relaxed as f64 >= 0.95 * 50.0 && ok_k as f64 >= 0.95 * 50.0,
        format!(
            "L = {}, within (1+2eps)r ignoring {relaxed} coords: {ok_relaxed}/50, ignoring k = {k}: {ok_k}/50",
            idx.len()
        ),
    )
}

fn c6_knapsack_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    let mut worst = 1.0f64;
    for trial in 0..500 {
        let eps = if trial % 2 == 0 { 0.1 } else { 0.5 };
        let d = rng.random_range(1..=12);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0..50) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(0..50) as f64 * 0.5).collect();
        let w: Vec<f64> = (0..d)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.05..=1.0) })
            .collect();
        let costs = CostVector::new(w).unwrap();
        let exact = admissible_distance_exact(&x, &y, &costs).unwrap();
        let approx = admissible_distance_approx(&x, &y, &costs, eps).unwrap();
        let sandwiched = exact.distance <= approx.distance && approx.distance <= (1.0 + eps) * exact.distance;
        if !(sandwiched && costs.admissible(&approx.ignored) && costs.admissible(&exact.ignored)) {
            bad += 1;
        }
        if exact.distance > 0.0 {
            worst = worst.max(approx.distance / exact.distance);
        }
    }
    verdict(bad == 0, format!("500 instances, violations {bad}, worst approx/exact {worst:.4}"))
}

fn c7_budgeted_recovery() -> Verdict {
    let eps = 0.5;
    let inst = gen_planted_budgeted(&BudgetedPlantedParams {
        n: 500,
        d: 64,
        queries: 50,
        profile: CostProfile::Random { lo: 0.05, hi: 0.5 },
        r: 1.0,
        noise_mag: 10.0,
        seed: 13,
    })
    .unwrap();
    let cfg = BudgetedConfig { delta: 0.5, eps, seed: 6, ..BudgetedConfig::default() };
    let idx = build_budgeted_index(&inst.data, inst.costs.clone(), cfg).unwrap();
    let c1 = idx.derived().c1;
    let mut hits = 0;
    let mut light = 0;
    let mut admissible = 0;
    for (j, t) in inst.truth.iter().enumerate() {
        let q = inst.queries.row(j);
        let ans = idx.query(q).unwrap();
        hits += usize::from(ans.index == t.neighbor);
        admissible += usize::from(inst.costs.admissible(&ans.ignored));
        // lower bound on the robust nearest-neighbor distance; lightness at a
        // smaller radius implies lightness at the true one
        let oracle_eps = 0.01;
        let r_lb = admissible_nn(&inst.data, q, &inst.costs, oracle_eps).unwrap().1.distance / (1.0 + oracle_eps);
        let diff = sub(q, inst.data.row(ans.index));
        light += usize::from(is_light_weighted(&diff, r_lb, &inst.costs, c1, cfg.light_level(r_lb)).unwrap());
    }
    let recall = hits as f64 / 50.0;
    verdict(
        recall >= 0.9 && light == 50 && admissible == 50,
        format!("L = {}, recall {recall:.2}, light {light}/50, admissible ignored sets {admissible}/50", idx.len()),
    )
}

fn c8_ds_lsh_correctness() -> Verdict {
    let (r, eps) = (16usize, 0.5);
    let mut near = 0;
    let mut early = 0;
    let mut early_exact = 0;
    let mut trials = 0;
    for s in 0..10u64 {
        let inst = gen_hamming_planted(1000, 256, 10, r, 100 + s).unwrap();
        let cfg = DsLshConfig { r: r as u32, eps, seed: s, ..DsLshConfig::default() };
        let idx = build_ds_lsh(&inst.points, cfg).unwrap();
        for j in 0..inst.queries.len() {
            trials += 1;
            let q = inst.queries.row(j);
            let ans = idx.query(q).unwrap();
            let w = ans.witness;
            if ans.outcome == Outcome::Near && w.is_some_and(|w| w.distance as f64 <= (1.0 + eps) * r as f64) {
                near += 1;
            }
            if ans.stats.level < ans.stats.levels {
                early += 1;
                let nn = (0..inst.points.len()).map(|i| hamming(inst.points.row(i), q)).min().unwrap();
                early_exact += usize::from(w.is_some_and(|w| w.distance == nn));
            }
        }
    }
    verdict(
        near >= 95 && early_exact == early,
        format!("{trials} trials, near {near}, stopped before level N {early}, exact among those {early_exact}"),
    )
}

fn c9_data_sensitivity() -> Verdict {
    let (r, eps) = (16usize, 0.5);
    let grid = gen_grid(32, r, 50, r / 2, 9).unwrap();
    let n = grid.points.len();
    let cfg = DsLshConfig { r: r as u32, eps, seed: 9, ..DsLshConfig::default() };
    let idx = build_ds_lsh(&grid.points, cfg).unwrap();
    let levels = idx.layout().levels;
    let (mut level_sum, mut scanned_sum) = (0usize, 0usize);
    for j in 0..grid.queries.len() {
        let ans = idx.query(grid.queries.row(j)).unwrap();
        level_sum += ans.stats.level;
        scanned_sum += ans.stats.distinct_scanned;
    }
    let mean_level = level_sum as f64 / 50.0;
    let mean_scanned = scanned_sum as f64 / 50.0;
    let scan_cap = 50.0 * (n as f64).ln();

    let mut adv_levels = Vec::new();
    let mut adv_n_levels = 0;
    for s in 0..10u64 {
        let adv = gen_adversarial(1000, 256, r, eps, 200 + s).unwrap();
        let idx = build_ds_lsh(&adv.points, DsLshConfig { seed: s, ..cfg }).unwrap();
        adv_n_levels = idx.layout().levels;
        adv_levels.push(idx.query(adv.queries.row(0)).unwrap().stats.level);
    }
    let adv_mean = adv_levels.iter().sum::<usize>() as f64 / adv_levels.len() as f64;
    verdict(
        mean_level <= 4.0 && mean_scanned <= scan_cap && adv_mean >= adv_n_levels as f64 - 1.0,
        format!(
            "grid n={n} (N={levels}): mean level {mean_level:.2}, mean scanned {mean_scanned:.1} (cap {scan_cap:.0}); \
             adversarial (N={adv_n_levels}): mean level {adv_mean:.2}"
        ),
    )
}

fn c10_collision_law() -> Verdict {
    let cfg = LemmaConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for ell in [4, 16, 64] {
        for i in [1, 3, 5] {
            let rec = check_collision_rate(&cfg, 16, 256, ell, i, 10_000);
            pass &= rec.pass;
            parts.push(format!("l={ell},i={i}: {:.4}/{:.4}", rec.measured, rec.predicted));
        }
    }
    verdict(pass, format!("measured/predicted {}", parts.join(" ")))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Verdict); 10] = [
        ("oracle equivalence", Duration::from_secs(10), c1_oracle_equivalence),
        ("single-block projection moments", Duration::from_secs(30), c2_block_moments),
        ("bad-set miss probability", Duration::from_secs(60), c3_miss_probability),
        ("bi-criterion recovery", Duration::from_secs(120), c4_bicriterion),
        ("(1+eps) mode recovery", Duration::from_secs(180), c5_eps_mode),
        ("admissible distance sandwich", Duration::from_secs(30), c6_knapsack_sandwich),
        ("budgeted recovery", Duration::from_secs(180), c7_budgeted_recovery),
        ("data-sensitive LSH correctness", Duration::from_secs(120), c8_ds_lsh_correctness),
        ("data-sensitive LSH adaptivity", Duration::from_secs(120), c9_data_sensitivity),
        ("collision probability law", Duration::from_secs(30), c10_collision_law),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && elapsed <= *limit, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {:<4} {name}: {detail} [{:.1}s / limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
