//! Shared fixtures for the benchmarks.

use rann::eval::{
    gen_hamming_planted, gen_planted, gen_planted_budgeted, BudgetedInstance, BudgetedPlantedParams, CostProfile,
    HammingInstance, PlantedInstance, PlantedParams,
};

/// Planted robust instance at the desk scale used by the acceptance tests.
pub fn robust_instance(n: usize, d: usize, k: usize) -> PlantedInstance {
    gen_planted(&PlantedParams { n, d, queries: 20, k, r: 1.0, noise_mag: 10.0, p: 1.0, seed: 11 })
        .expect("valid planted parameters")
}

pub fn budgeted_instance(n: usize, d: usize) -> BudgetedInstance {
    gen_planted_budgeted(&BudgetedPlantedParams {
        n,
        d,
        queries: 20,
        profile: CostProfile::Random { lo: 0.05, hi: 0.5 },
        r: 1.0,
        noise_mag: 10.0,
        seed: 12,
    })
    .expect("valid planted parameters")
}

pub fn hamming_instance(n: usize, d: usize, r: usize) -> HammingInstance {
    gen_hamming_planted(n, d, 20, r, 13).expect("valid planted parameters")
}

/// Deterministic pseudo-random vector for micro benchmarks.
pub fn vector(d: usize, seed: u64) -> Vec<f64> {
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..d)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        })
        .collect()
}
