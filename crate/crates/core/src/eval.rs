//! Planted-corruption generators, ground-truth oracles, recovery metrics and
//! the statistical lemma checks.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budgeted_index::{admissible_lower_bound, CostVector};
use crate::ds_lsh::{self, hamming, BitMatrix};
use crate::error::{invalid, Result};
use crate::norms::{check_p, is_light, robust_distance, robust_nn_bruteforce, tail, Dataset, LightHeavyParams, NormParams};
use crate::projections::{sample_projection, sample_weighted_projection, SamplingConfig};
use crate::rng;

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    pub n: usize,
    pub d: usize,
    pub queries: usize,
    pub k: usize,
    /// Clean L_p distance between a query and its planted neighbor.
    pub r: f64,
    /// Minimum magnitude of a corrupted coordinate.
    pub noise_mag: f64,
    pub p: f64,
    pub seed: u64,
}

impl PlantedParams {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        if self.k >= self.d {
            return Err(invalid(format!("k = {} must be below d = {}", self.k, self.d)));
        }
        if self.queries > self.n {
            return Err(invalid("every query needs its own planted neighbor: queries <= n"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(invalid("r must be positive"));
        }
        if self.k > 0 && self.noise_mag < 10.0 * self.r / self.k as f64 {
            return Err(invalid(format!("noise must be >= 10 r / k = {}", 10.0 * self.r / self.k as f64)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub neighbor: usize,
    /// Sorted corrupted coordinates.
    pub corrupted: Vec<usize>,
    /// Distance to the neighbor once the corrupted coordinates are ignored.
    pub clean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub data: Dataset,
    pub queries: Dataset,
    pub truth: Vec<GroundTruth>,
    pub params: PlantedParams,
}

/// Random signs and magnitudes on `coords`, scaled to L_p norm `r`.
fn clean_offset(rng: &mut ChaCha8Rng, d: usize, coords: &[usize], r: f64, p: f64) -> Vec<f64> {
    let mut off = vec![0.0; d];
    for &c in coords {
        let mag: f64 = rng.random_range(0.1..1.0);
        off[c] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let norm = crate::norms::norm(&off, p);
    off.iter_mut().for_each(|x| *x *= r / norm);
    off
}

fn noise(rng: &mut ChaCha8Rng, mag: f64) -> f64 {
    let v = mag * (1.0 + rng.random::<f64>());
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

fn uniform_row(rng: &mut ChaCha8Rng, d: usize, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(0.0..hi)).collect()
}

/// Queries whose planted neighbor sits at clean distance `r` once `k`
/// corrupted coordinates are ignored. Every other point is at robust
/// distance at least `4r` from every query even when `2k` coordinates are
/// ignored; offending points are redrawn until this holds.
pub fn gen_planted(params: &PlantedParams) -> Result<PlantedInstance> {
    params.validate()?;
    let PlantedParams { n, d, queries: m, k, r, noise_mag, p, seed } = *params;
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 1);
    let spread = 8.0 * r;
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| uniform_row(&mut rng, d, spread)).collect();
    let neighbors: Vec<usize> = sample(&mut rng, n, m).into_vec();

    let mut queries = Vec::with_capacity(m);
    let mut truth = Vec::with_capacity(m);
    for &nb in &neighbors {
        let mut corrupted = sample(&mut rng, d, k).into_vec();
        corrupted.sort_unstable();
        let clean: Vec<usize> = (0..d).filter(|c| corrupted.binary_search(c).is_err()).collect();
        let off = clean_offset(&mut rng, d, &clean, r, p);
        let mut q: Vec<f64> = rows[nb].iter().zip(&off).map(|(x, o)| x + o).collect();
        for &c in &corrupted {
            q[c] += noise(&mut rng, noise_mag);
        }
        let clean_distance = tail(&crate::norms::sub(&q, &rows[nb]), k, p)?;
        queries.push(q);
        truth.push(GroundTruth { neighbor: nb, corrupted, clean_distance });
    }

    let planted: std::collections::HashSet<usize> = neighbors.iter().copied().collect();
    for i in 0..n {
        let mut attempts = 0;
        loop {
            let ok = queries.iter().zip(&truth).all(|(q, t)| {
                t.neighbor == i || tail(&crate::norms::sub(q, &rows[i]), 2 * k, p).expect("valid") >= 4.0 * r
            });
            if ok {
                break;
            }
            if planted.contains(&i) || attempts == MAX_REDRAWS {
                return Err(invalid("could not place decoys at robust distance >= 4r; increase d or lower k"));
            }
            rows[i] = uniform_row(&mut rng, d, spread);
            attempts += 1;
        }
    }

    let data = Dataset::from_rows(&rows)?;
    let queries = Dataset::from_flat(d, queries.concat())?;
    let inst = PlantedInstance { data, queries, truth, params: *params };
    let norm = NormParams { p, k };
    for (j, t) in inst.truth.iter().enumerate() {
        let (idx, _) = robust_nn_bruteforce(&inst.data, inst.queries.row(j), norm)?;
        debug_assert_eq!(idx, t.neighbor);
        if idx != t.neighbor {
            return Err(invalid("planted neighbor is not the robust nearest neighbor"));
        }
    }
    Ok(inst)
}

/// Robust nearest neighbor of every query by exhaustive search.
pub fn oracle_answers(data: &Dataset, queries: &Dataset, params: NormParams) -> Result<Vec<(usize, f64)>> {
    (0..queries.len())
        .into_par_iter()
        .map(|j| robust_nn_bruteforce(data, queries.row(j), params))
        .collect()
}

/// How ignore costs are assigned in budgeted instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum CostProfile {
    /// Every coordinate costs `1/k`.
    Uniform { k: usize },
    /// Costs drawn uniformly from `[lo, hi]`.
    Random { lo: f64, hi: f64 },
    Given { costs: Vec<f64> },
}

impl CostProfile {
    pub fn costs(&self, d: usize, rng: &mut ChaCha8Rng) -> Result<CostVector> {
        match self {
            CostProfile::Uniform { k } => {
                if *k == 0 {
                    return Err(invalid("uniform cost profile needs k >= 1"));
                }
                CostVector::uniform(d, 1.0 / *k as f64)
            }
            CostProfile::Random { lo, hi } => {
                if !(0.0 < *lo && lo <= hi && *hi <= 1.0) {
                    return Err(invalid("random cost range must satisfy 0 < lo <= hi <= 1"));
                }
                CostVector::new((0..d).map(|_| rng.random_range(*lo..=*hi)).collect())
            }
            CostProfile::Given { costs } => {
                if costs.len() != d {
                    return Err(invalid(format!("cost file has {} entries, expected {d}", costs.len())));
                }
                CostVector::new(costs.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetedPlantedParams {
    pub n: usize,
    pub d: usize,
    pub queries: usize,
    pub profile: CostProfile,
    /// Clean L1 distance between a query and its planted neighbor.
    pub r: f64,
    pub noise_mag: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedInstance {
    pub data: Dataset,
    pub queries: Dataset,
    pub costs: CostVector,
    pub truth: Vec<GroundTruth>,
    pub params: BudgetedPlantedParams,
}

/// Budgeted analogue of [`gen_planted`]: each query is corrupted on a random
/// coordinate set of total cost at most 1, and every other point has
/// admissible distance (by the fractional lower bound) at least `4r`.
pub fn gen_planted_budgeted(params: &BudgetedPlantedParams) -> Result<BudgetedInstance> {
    let BudgetedPlantedParams { n, d, queries: m, r, noise_mag, seed, .. } = *params;
    if n == 0 || d == 0 || m > n {
        return Err(invalid("need n, d >= 1 and queries <= n"));
    }
    if !(r > 0.0 && r.is_finite()) || noise_mag < 10.0 * r {
        return Err(invalid("need r > 0 and noise >= 10 r"));
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 2);
    let costs = params.profile.costs(d, &mut rng)?;
    let spread = 8.0 * r;
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| uniform_row(&mut rng, d, spread)).collect();
    let neighbors: Vec<usize> = sample(&mut rng, n, m).into_vec();

    let mut queries = Vec::with_capacity(m);
    let mut truth = Vec::with_capacity(m);
    for &nb in &neighbors {
        let mut corrupted = Vec::new();
        let mut spent = 0.0;
        for c in sample(&mut rng, d, d).into_iter() {
            let w = costs.costs()[c];
            if w > 0.0 && spent + w <= 1.0 {
                spent += w;
                corrupted.push(c);
            }
        }
        corrupted.sort_unstable();
        if !costs.admissible(&corrupted) {
            corrupted.pop();
        }
        let clean: Vec<usize> = (0..d).filter(|c| corrupted.binary_search(c).is_err()).collect();
        let off = clean_offset(&mut rng, d, &clean, r, 1.0);
        let mut q: Vec<f64> = rows[nb].iter().zip(&off).map(|(x, o)| x + o).collect();
        for &c in &corrupted {
            q[c] += noise(&mut rng, noise_mag);
        }
        let clean_distance = clean.iter().map(|&c| (q[c] - rows[nb][c]).abs()).sum();
        queries.push(q);
        truth.push(GroundTruth { neighbor: nb, corrupted, clean_distance });
    }

    let planted: std::collections::HashSet<usize> = neighbors.iter().copied().collect();
    for i in 0..n {
        let mut attempts = 0;
        loop {
            let ok = queries.iter().zip(&truth).all(|(q, t)| {
                t.neighbor == i || admissible_lower_bound(q, &rows[i], &costs).expect("valid") >= 4.0 * r
            });
            if ok {
                break;
            }
            if planted.contains(&i) || attempts == MAX_REDRAWS {
                return Err(invalid("could not place decoys at admissible distance >= 4r"));
            }
            rows[i] = uniform_row(&mut rng, d, spread);
            attempts += 1;
        }
    }
    Ok(BudgetedInstance {
        data: Dataset::from_rows(&rows)?,
        queries: Dataset::from_flat(d, queries.concat())?,
        costs,
        truth,
        params: params.clone(),
    })
}

/// Binary points with one planted neighbor per query.
#[derive(Debug, Clone, PartialEq)]
pub struct HammingInstance {
    pub points: BitMatrix,
    pub queries: BitMatrix,
    /// Planted neighbor of each query.
    pub planted: Vec<usize>,
    /// Hamming distance from each query to its planted neighbor.
    pub planted_distance: Vec<u32>,
}

fn random_bits(rng: &mut ChaCha8Rng, m: &mut BitMatrix, i: usize) {
    for j in 0..m.dim() {
        m.set(i, j, rng.random_bool(0.5));
    }
}

fn flip_random(rng: &mut ChaCha8Rng, row: &mut [u64], d: usize, count: usize) {
    for j in sample(rng, d, count) {
        row[j / 64] ^= 1 << (j % 64);
    }
}

/// Uniform random points; each query is a planted point with exactly `r`
/// bits flipped, and every other point is at distance at least `4r`.
pub fn gen_hamming_planted(n: usize, d: usize, queries: usize, r: usize, seed: u64) -> Result<HammingInstance> {
    if n == 0 || queries > n || r > d {
        return Err(invalid("need n >= 1, queries <= n and r <= d"));
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 3);
    let mut points = BitMatrix::zeros(n, d);
    for i in 0..n {
        random_bits(&mut rng, &mut points, i);
    }
    let planted = sample(&mut rng, n, queries).into_vec();
    let mut qs = BitMatrix::zeros(queries, d);
    for (j, &nb) in planted.iter().enumerate() {
        qs.row_mut(j).copy_from_slice(points.row(nb));
        flip_random(&mut rng, qs.row_mut(j), d, r);
    }
    for i in 0..n {
        let mut attempts = 0;
        while (0..queries).any(|j| planted[j] != i && (hamming(points.row(i), qs.row(j)) as usize) < 4 * r) {
            if planted.contains(&i) || attempts == MAX_REDRAWS {
                return Err(invalid("could not keep decoys at distance >= 4r"));
            }
            random_bits(&mut rng, &mut points, i);
            attempts += 1;
        }
    }
    Ok(HammingInstance { points, queries: qs, planted, planted_distance: vec![r as u32; queries] })
}

/// Points of a `side x side` grid encoded in unary with every bit repeated
/// `step` times, so Hamming distance is `step` times grid L1 distance and the
/// number of points within distance `ell` grows like `(ell / step)^2`.
/// Queries are random grid points with `flips` random bits flipped; the
/// planted neighbor is the grid point itself.
pub fn gen_grid(side: usize, step: usize, queries: usize, flips: usize, seed: u64) -> Result<HammingInstance> {
    if side < 2 || step == 0 || queries > side * side {
        return Err(invalid("need side >= 2, step >= 1 and queries <= side^2"));
    }
    let unary = (side - 1) * step;
    let d = 2 * unary;
    let n = side * side;
    let mut points = BitMatrix::zeros(n, d);
    for i in 0..n {
        let (x, y) = (i / side, i % side);
        for b in 0..x * step {
            points.set(i, b, true);
        }
        for b in 0..y * step {
            points.set(i, unary + b, true);
        }
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 4);
    let planted = sample(&mut rng, n, queries).into_vec();
    let mut qs = BitMatrix::zeros(queries, d);
    for (j, &nb) in planted.iter().enumerate() {
        qs.row_mut(j).copy_from_slice(points.row(nb));
        flip_random(&mut rng, qs.row_mut(j), d, flips);
    }
    let planted_distance = planted.iter().enumerate().map(|(j, &nb)| hamming(points.row(nb), qs.row(j))).collect();
    Ok(HammingInstance { points, queries: qs, planted, planted_distance })
}

/// One query with a planted neighbor at distance `r`, `n/2` points just
/// outside the near radius at `floor((1 + eps) r) + 1`, and the rest
/// uniform at distance at least `4r`.
pub fn gen_adversarial(n: usize, d: usize, r: usize, eps: f64, seed: u64) -> Result<HammingInstance> {
    let shell = ((1.0 + eps) * r as f64 + 1e-9).floor() as usize + 1;
    if n < 2 || shell > d {
        return Err(invalid("need n >= 2 and (1 + eps) r < d"));
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 5);
    let mut qs = BitMatrix::zeros(1, d);
    random_bits(&mut rng, &mut qs, 0);
    let center = qs.row(0).to_vec();
    let mut points = BitMatrix::zeros(n, d);
    let planted = rng.random_range(0..n);
    let mut shell_ids: Vec<usize> = (0..n).filter(|&i| i != planted).collect();
    let shell_count = n / 2;
    shell_ids.truncate(shell_count);
    for i in 0..n {
        let flips = if i == planted {
            r
        } else if shell_ids.binary_search(&i).is_ok() {
            shell
        } else {
            loop {
                random_bits(&mut rng, &mut points, i);
                if hamming(points.row(i), &center) as usize >= 4 * r {
                    break;
                }
            }
            continue;
        };
        points.row_mut(i).copy_from_slice(&center);
        flip_random(&mut rng, points.row_mut(i), d, flips);
    }
    Ok(HammingInstance { points, queries: qs, planted: vec![planted], planted_distance: vec![r as u32] })
}

/// Recovery metrics of robust answers against a planted instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicriterionReport {
    pub answered: usize,
    pub recall: f64,
    /// Fraction of answers `a` with `q - a` light at the given parameters.
    pub light_fraction: f64,
    /// Mean of robust distance to the answer over robust distance to the
    /// planted neighbor.
    pub mean_ratio: f64,
}

/// Scores `answers[j]` (None when query `j` was not answered) over the
/// answered queries only.
pub fn bicriterion_report(
    answers: &[Option<usize>],
    inst: &PlantedInstance,
    lh: LightHeavyParams,
) -> Result<BicriterionReport> {
    let norm = NormParams { p: inst.params.p, k: inst.params.k };
    let mut answered = 0;
    let mut hits = 0;
    let mut light = 0;
    let mut ratio_sum = 0.0;
    for (j, ans) in answers.iter().enumerate() {
        let Some(a) = *ans else { continue };
        answered += 1;
        let q = inst.queries.row(j);
        let t = &inst.truth[j];
        hits += usize::from(a == t.neighbor);
        let diff = crate::norms::sub(q, inst.data.row(a));
        light += usize::from(is_light(&diff, lh, inst.params.p)?);
        let got = robust_distance(inst.data.row(a), q, norm)?;
        let best = robust_distance(inst.data.row(t.neighbor), q, norm)?;
        ratio_sum += if best == 0.0 {
            if got == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            got / best
        };
    }
    let frac = |x: usize| if answered == 0 { 0.0 } else { x as f64 / answered as f64 };
    Ok(BicriterionReport {
        answered,
        recall: frac(hits),
        light_fraction: frac(light),
        mean_ratio: if answered == 0 { 0.0 } else { ratio_sum / answered as f64 },
    })
}

/// One line of the lemma suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRecord {
    pub name: String,
    pub predicted: f64,
    pub measured: f64,
    pub stderr: f64,
    /// Acceptance rule applied to the numbers above.
    pub rule: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub seed: u64,
    /// Multiplier on every sample size.
    pub scale: f64,
    /// Factor applied to the sampling probability actually used, while the
    /// predictions keep the nominal one. Anything but 1 should fail.
    pub bias: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig { seed: 42, scale: 1.0, bias: 1.0 }
    }
}

/// Running mean and variance of a sample.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + delta * b.n / n,
            m2: a.m2 + b.m2 + delta * delta * a.n * b.n / n,
        }
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    fn stderr(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }
}

/// Draws `samples` values in parallel chunks, each chunk on its own stream.
fn collect_moments(samples: usize, seed: u64, tag: u64, f: impl Fn(u64) -> f64 + Sync) -> Moments {
    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            let lo = c * CHUNK;
            for s in lo..(lo + CHUNK).min(samples) {
                m.push(f(rng::mix64(seed ^ tag.rotate_left(32)) ^ s as u64));
            }
            m
        })
        .reduce(Moments::default, Moments::merge)
}

fn mean_record(name: String, predicted: f64, m: &Moments) -> LemmaRecord {
    let se = m.stderr();
    LemmaRecord {
        name,
        predicted,
        measured: m.mean,
        stderr: se,
        rule: "|measured - predicted| <= 4 stderr".into(),
        pass: (m.mean - predicted).abs() <= 4.0 * se,
    }
}

fn variance_record(name: String, predicted: f64, m: &Moments) -> LemmaRecord {
    let var = m.variance();
    LemmaRecord {
        name,
        predicted,
        measured: var,
        stderr: var * (2.0 / (m.n - 1.0)).sqrt(),
        rule: "|measured - predicted| <= 0.1 predicted".into(),
        pass: (var - predicted).abs() <= 0.1 * predicted,
    }
}

fn fixed_point(seed: u64, d: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 100);
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Mean and variance of `||s pt||_p^p` for a single block `s` from D_pr.
pub fn check_block_moments(cfg: &LemmaConfig, d: usize, pr: f64, p: f64, samples: usize) -> Result<[LemmaRecord; 2]> {
    let pt = fixed_point(cfg.seed, d);
    let used = (pr * cfg.bias).min(1.0);
    let m = collect_moments(samples, cfg.seed, 1 + p.to_bits(), |s| {
        let sc = SamplingConfig { pr: used, t: 1, seed: s, stream_id: 0 };
        sample_projection(d, &sc).expect("valid").norm_pow(&pt, p).expect("valid")
    });
    let np = crate::norms::norm_pow(&pt, p);
    let n2p = crate::norms::norm_pow(&pt, 2.0 * p);
    Ok([
        mean_record(format!("block_mean_p{p}"), pr * np, &m),
        variance_record(format!("block_variance_p{p}"), pr * (1.0 - pr) * n2p, &m),
    ])
}

/// Probability that `t = ceil(c2 ln n)` blocks of D_pr with
/// `pr = 1/(c1 k)` all miss a fixed set of `k` coordinates, against
/// `n^(-delta)`.
pub fn check_miss_probability(cfg: &LemmaConfig, n: usize, k: usize, delta: f64, samples: usize) -> LemmaRecord {
    let c2 = 16.0;
    let c1 = c2 / delta;
    let pr = 1.0 / (c1 * k as f64);
    let t = (c2 * (n as f64).ln()).ceil() as u32;
    let d = 4 * k;
    let bad: Vec<usize> = (0..k).map(|i| i * 4 + 1).collect();
    let used = (pr * cfg.bias).min(1.0);
    let m = collect_moments(samples, cfg.seed, 2, |s| {
        let sc = SamplingConfig { pr: used, t, seed: s, stream_id: 0 };
        f64::from(u8::from(sample_projection(d, &sc).expect("valid").misses(&bad)))
    });
    let predicted = (n as f64).powf(-delta);
    LemmaRecord {
        name: "miss_probability".into(),
        predicted,
        measured: m.mean,
        stderr: m.stderr(),
        rule: "predicted / 2 <= measured <= 2 predicted".into(),
        pass: m.mean >= predicted / 2.0 && m.mean <= 2.0 * predicted,
    }
}

fn random_costs(seed: u64, d: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::DOMAIN_EVAL, 101);
    (0..d).map(|_| rng.random_range(0.05..=1.0)).collect()
}

/// Weighted projections: single block with `c1 = 1` has mean `||pt||_1`;
/// `t` blocks have mean `t ||pt||_1` and variance
/// `t sum_i pt_i^2 (c1 / w_i - 1)`.
pub fn check_weighted_moments(cfg: &LemmaConfig, d: usize, c1: f64, t: u32, samples: usize) -> Result<[LemmaRecord; 3]> {
    let pt = fixed_point(cfg.seed ^ 1, d);
    let w = random_costs(cfg.seed, d);
    let biased: Vec<f64> = w.iter().map(|x| (x * cfg.bias).min(1.0)).collect();
    let l1: f64 = pt.iter().map(|x| x.abs()).sum();
    // the sampler keeps with probability w'/c1 but scales by c1/w' for the
    // biased w'; rescale entries back to c1/w so only the rate is off
    let draw = |s: u64, c1: f64, t: u32| -> f64 {
        let proj = sample_weighted_projection(&biased, c1, t, s, 0).expect("valid");
        proj.entries()
            .iter()
            .map(|e| {
                let i = e.index as usize;
                e.count as f64 * (c1 / w[i]) * pt[i].abs()
            })
            .sum()
    };
    let single = collect_moments(samples, cfg.seed, 3, |s| draw(s, 1.0, 1));
    let blocks = collect_moments(samples, cfg.seed, 4, |s| draw(s, c1, t));
    let var: f64 = t as f64 * pt.iter().zip(&w).map(|(x, wi)| x * x * (c1 / wi - 1.0)).sum::<f64>();
    Ok([
        mean_record("weighted_single_block_mean".into(), l1, &single),
        mean_record("weighted_blocks_mean".into(), t as f64 * l1, &blocks),
        variance_record("weighted_blocks_variance".into(), var, &blocks),
    ])
}

/// Probability that a weighted projection misses a fixed coordinate set of
/// total cost at most 1, against the lower bound `n^(-2 c2 / c1)`.
pub fn check_budget_miss(cfg: &LemmaConfig, n: usize, delta: f64, samples: usize) -> LemmaRecord {
    let c2 = 4.0;
    let c1 = 2.0 * c2 / delta;
    let t = (c2 * (n as f64).ln()).ceil() as u32;
    let mut w = random_costs(cfg.seed ^ 2, 40);
    // a bad set of cost exactly 1 spread over five coordinates
    for c in w.iter_mut().take(5) {
        *c = 0.2;
    }
    let bad: Vec<usize> = (0..5).collect();
    let used: Vec<f64> = w.iter().map(|x| (x * cfg.bias).min(1.0)).collect();
    let m = collect_moments(samples, cfg.seed, 5, |s| {
        let proj = sample_weighted_projection(&used, c1, t, s, 0).expect("valid");
        f64::from(u8::from(proj.misses(&bad)))
    });
    let bound = (n as f64).powf(-2.0 * c2 / c1);
    LemmaRecord {
        name: "budget_miss_probability".into(),
        predicted: bound,
        measured: m.mean,
        stderr: m.stderr(),
        rule: "measured >= predicted / 2".into(),
        pass: m.mean >= bound / 2.0,
    }
}

/// Collision rate of two points at Hamming distance `ell` under level-`i`
/// masks against `(1 - 1/r)^(ell i)`.
pub fn check_collision_rate(cfg: &LemmaConfig, r: u32, d: usize, ell: usize, i: u32, samples: usize) -> LemmaRecord {
    let words = ds_lsh::words_for(d);
    let a = vec![0u64; words];
    let mut b = vec![0u64; words];
    for j in 0..ell {
        b[j / 64] |= 1 << (j % 64);
    }
    let p = (ds_lsh::inclusion_probability(r as f64, i) * cfg.bias).min(1.0);
    let m = collect_moments(samples, cfg.seed, 6 + ((ell as u64) << 8) + ((i as u64) << 20), |s| {
        let mask = ds_lsh::sample_mask(d, p, s, 0);
        f64::from(u8::from(ds_lsh::agree_on(&a, &b, &mask)))
    });
    let predicted = ds_lsh::collision_probability(r as f64, ell as f64, i);
    // binomial standard error at the predicted rate; the empirical one
    // degenerates to 0 when no collision is observed
    let se = (predicted * (1.0 - predicted) / m.n).sqrt();
    LemmaRecord {
        name: format!("collision_rate_l{ell}_i{i}"),
        predicted,
        measured: m.mean,
        stderr: se,
        rule: "|measured - predicted| <= 4 stderr".into(),
        pass: (m.mean - predicted).abs() <= 4.0 * se,
    }
}

fn scaled(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(2)
}

/// Runs every statistical check with fixed sample sizes.
pub fn lemma_suite(cfg: &LemmaConfig) -> Result<Vec<LemmaRecord>> {
    let mut out = Vec::new();
    for p in [1.0, 2.0] {
        out.extend(check_block_moments(cfg, 200, 0.1, p, scaled(100_000, cfg.scale))?);
    }
    out.push(check_miss_probability(cfg, 1000, 8, 0.5, scaled(100_000, cfg.scale)));
    out.extend(check_weighted_moments(cfg, 50, 16.0, 28, scaled(50_000, cfg.scale))?);
    out.push(check_budget_miss(cfg, 1000, 0.5, scaled(20_000, cfg.scale)));
    for ell in [4, 16, 64] {
        for i in [1, 3, 5] {
            out.push(check_collision_rate(cfg, 16, 256, ell, i, scaled(10_000, cfg.scale)));
        }
    }
    Ok(out)
}
