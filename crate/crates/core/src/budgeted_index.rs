//! Robust ANN under per-coordinate ignore costs with a total budget of 1.
//!
//! Distances are L1. Preprocessing samples cost-weighted projections (each
//! block keeps coordinate `i` with probability `w_i / c1` and scales it by
//! `c1 / w_i`) and builds a base 2-ANN structure per projected copy. Queries
//! re-rank the returned candidates by a (1+eps)-approximation of the
//! admissible distance, computed by a min-knapsack scaling DP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_ann::{build_backend, AnnBackend, AnnBackendSpec, BackendKind, WeightedRows};
use crate::codec::{self, Decode, Encode, IndexKind, Reader};
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::Dataset;
use crate::projections::{sample_weighted_projection, Entry, Projection};
use crate::robust_index::SubqueryStat;
use crate::rng;

/// Largest dimension accepted by [`admissible_distance_exact`].
pub const EXACT_MAX_DIM: usize = 24;

/// Total cost that may be spent on ignored coordinates.
pub const BUDGET: f64 = 1.0;

/// Per-coordinate ignore costs in `[0, 1]`.
///
/// Zero-cost coordinates can always be dropped for free; they are stripped
/// from sampling and distance computations, and `support` maps the remaining
/// coordinates back to their original indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector {
    costs: Vec<f64>,
    support: Vec<usize>,
}

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(invalid("cost vector is empty"));
        }
        for (i, &w) in costs.iter().enumerate() {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(format!("cost {w} of coordinate {i} outside [0, 1]")));
            }
        }
        let support = (0..costs.len()).filter(|&i| costs[i] > 0.0).collect();
        Ok(CostVector { costs, support })
    }

    /// Every coordinate gets cost `w`.
    pub fn uniform(d: usize, w: f64) -> Result<Self> {
        Self::new(vec![w; d])
    }

    pub fn dim(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Original indices of the positive-cost coordinates.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Total cost of `set`.
    pub fn cost_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.costs[i]).sum()
    }

    /// Whether ignoring `set` stays within the budget.
    pub fn admissible(&self, set: &[usize]) -> bool {
        self.cost_of(set) <= BUDGET
    }
}

/// An admissible distance together with the ignored coordinates realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissible {
    pub distance: f64,
    /// Sorted 0-based coordinates. Zero-cost coordinates with a nonzero
    /// difference are always included.
    pub ignored: Vec<usize>,
}

/// Coordinates that matter for the knapsack: positive cost and nonzero gap.
struct Items {
    index: Vec<usize>,
    value: Vec<f64>,
    cost: Vec<f64>,
    free: Vec<usize>,
}

fn items(a: &[f64], b: &[f64], costs: &CostVector) -> Result<Items> {
    check_dim(costs.dim(), a.len())?;
    check_dim(costs.dim(), b.len())?;
    let mut it = Items { index: Vec::new(), value: Vec::new(), cost: Vec::new(), free: Vec::new() };
    for i in 0..a.len() {
        let v = (a[i] - b[i]).abs();
        if v == 0.0 {
            continue;
        }
        if costs.costs[i] == 0.0 {
            it.free.push(i);
        } else {
            it.index.push(i);
            it.value.push(v);
            it.cost.push(costs.costs[i]);
        }
    }
    Ok(it)
}

impl Items {
    fn len(&self) -> usize {
        self.index.len()
    }

    /// Kept value and dropped cost of `drop`, summed in item order.
    fn evaluate(&self, drop: &[bool]) -> (f64, f64) {
        let mut kept = 0.0;
        let mut spent = 0.0;
        for j in 0..self.len() {
            if drop[j] {
                spent += self.cost[j];
            } else {
                kept += self.value[j];
            }
        }
        (kept, spent)
    }

    fn answer(&self, distance: f64, drop: &[bool]) -> Admissible {
        let mut ignored: Vec<usize> = self.free.clone();
        ignored.extend((0..self.len()).filter(|&j| drop[j]).map(|j| self.index[j]));
        ignored.sort_unstable();
        Admissible { distance, ignored }
    }
}

/// Exact admissible L1 distance by enumerating every ignored set.
pub fn admissible_distance_exact(a: &[f64], b: &[f64], costs: &CostVector) -> Result<Admissible> {
    if costs.dim() > EXACT_MAX_DIM {
        return Err(invalid(format!(
            "exact admissible distance is limited to d <= {EXACT_MAX_DIM}, got {}; use the approximation",
            costs.dim()
        )));
    }
    let it = items(a, b, costs)?;
    let m = it.len();
    let mut best = (f64::INFINITY, 0u32);
    let mut drop = vec![false; m];
    for mask in 0u32..(1u32 << m) {
        for (j, d) in drop.iter_mut().enumerate() {
            *d = mask >> j & 1 == 1;
        }
        let (kept, spent) = it.evaluate(&drop);
        if spent <= BUDGET && kept < best.0 {
            best = (kept, mask);
        }
    }
    for (j, d) in drop.iter_mut().enumerate() {
        *d = best.1 >> j & 1 == 1;
    }
    Ok(it.answer(best.0, &drop))
}

/// Fractional-knapsack lower bound on the admissible distance.
pub fn admissible_lower_bound(a: &[f64], b: &[f64], costs: &CostVector) -> Result<f64> {
    let it = items(a, b, costs)?;
    let total: f64 = it.value.iter().sum();
    let mut order: Vec<usize> = (0..it.len()).collect();
    order.sort_by(|&x, &y| (it.value[y] / it.cost[y]).total_cmp(&(it.value[x] / it.cost[x])));
    let mut left = BUDGET;
    let mut removed = 0.0;
    for j in order {
        if it.cost[j] <= left {
            left -= it.cost[j];
            removed += it.value[j];
        } else {
            removed += it.value[j] * left / it.cost[j];
            break;
        }
    }
    Ok((total - removed).max(0.0))
}

/// (1+eps)-approximate admissible L1 distance.
///
/// Guesses the largest kept value `v_g`, forces every larger item into the
/// ignored set, rounds kept values down to multiples of `eps * v_g / m` and
/// runs a DP from rounded kept value to minimum ignored cost. Returns a value
/// `v` with `exact <= v <= (1 + eps) * exact` and an admissible ignored set.
pub fn admissible_distance_approx(
    a: &[f64],
    b: &[f64],
    costs: &CostVector,
    eps: f64,
) -> Result<Admissible> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must be in (0, 1), got {eps}")));
    }
    let it = items(a, b, costs)?;
    Ok(knapsack(&it, eps, f64::INFINITY).expect("keeping every coordinate is admissible"))
}

/// Returns the best admissible set with value below `cutoff`, if any.
fn knapsack(it: &Items, eps: f64, cutoff: f64) -> Option<Admissible> {
    let m = it.len();
    let all_drop = vec![true; m];
    let (_, spent) = it.evaluate(&all_drop);
    if spent <= BUDGET {
        return Some(it.answer(0.0, &all_drop));
    }
    let mut guesses: Vec<usize> = (0..m).collect();
    guesses.sort_by(|&x, &y| it.value[x].total_cmp(&it.value[y]).then(x.cmp(&y)));

    let mut by_ratio: Vec<usize> = (0..m).collect();
    by_ratio.sort_by(|&x, &y| (it.value[y] / it.cost[y]).total_cmp(&(it.value[x] / it.cost[x])));

    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut bound = cutoff;
    // greedy by value density gives a feasible starting bound
    let mut drop = vec![false; m];
    let mut left = BUDGET;
    for &j in &by_ratio {
        if it.cost[j] <= left {
            left -= it.cost[j];
            drop[j] = true;
        }
    }
    let (kept, spent) = it.evaluate(&drop);
    if spent <= BUDGET && kept < bound {
        bound = kept;
        best = Some((kept, drop));
    }

    let mut dp: Vec<f64> = Vec::new();
    let mut keep_bits: Vec<Vec<bool>> = vec![Vec::new(); m];
    let mut rounded = vec![0usize; m];
    for &g in &guesses {
        let vg = it.value[g];
        if vg >= bound {
            break;
        }
        if guess_lower_bound(it, &by_ratio, g) >= bound {
            continue;
        }
        let mu = eps * vg / m as f64;
        // rounded kept values beyond this cannot beat the current bound
        let cap = if bound.is_finite() { (bound / mu).floor() as usize } else { usize::MAX };
        let mut smax = 0usize;
        for j in 0..m {
            rounded[j] = if it.value[j] > vg { 0 } else { (it.value[j] / mu).floor() as usize };
            if it.value[j] <= vg {
                smax += rounded[j];
            }
        }
        let smax = smax.min(cap);
        dp.clear();
        dp.resize(smax + 1, f64::INFINITY);
        dp[0] = 0.0;
        for j in 0..m {
            let bits = &mut keep_bits[j];
            bits.clear();
            bits.resize(smax + 1, false);
            let w = it.cost[j];
            let forced_drop = it.value[j] > vg;
            let forced_keep = j == g;
            let vj = rounded[j];
            for s in (0..=smax).rev() {
                let drop_cost = if forced_keep { f64::INFINITY } else { dp[s] + w };
                let keep_cost = if forced_drop || s < vj { f64::INFINITY } else { dp[s - vj] };
                if keep_cost <= drop_cost {
                    dp[s] = keep_cost;
                    bits[s] = true;
                } else {
                    dp[s] = drop_cost;
                }
            }
        }
        let Some(s) = (0..=smax).find(|&s| dp[s] <= BUDGET) else {
            continue;
        };
        let mut drop = vec![false; m];
        let mut cur = s;
        for j in (0..m).rev() {
            if keep_bits[j][cur] {
                cur -= rounded[j];
            } else {
                drop[j] = true;
            }
        }
        let (kept, spent) = it.evaluate(&drop);
        debug_assert!(spent <= BUDGET);
        if kept < bound {
            bound = kept;
            best = Some((kept, drop));
        }
    }
    best.map(|(kept, drop)| it.answer(kept, &drop))
}

/// Fractional lower bound on the kept value when `g` is the largest kept item.
/// Infinite when the forced drops alone exceed the budget.
fn guess_lower_bound(it: &Items, by_ratio: &[usize], g: usize) -> f64 {
    let vg = it.value[g];
    let forced = (0..it.len()).filter(|&j| it.value[j] > vg).map(|j| it.cost[j]).sum::<f64>();
    if forced > BUDGET {
        return f64::INFINITY;
    }
    let mut left = BUDGET - forced;
    let mut kept = vg;
    for &j in by_ratio {
        if j == g || it.value[j] > vg {
            continue;
        }
        if it.cost[j] <= left {
            left -= it.cost[j];
        } else {
            kept += it.value[j] * (1.0 - left / it.cost[j]);
            left = 0.0;
        }
    }
    kept
}

/// Caps coordinate `i` at `r / (c1 / w_i - 1)`; zero-cost coordinates become 0.
pub fn trunc_weighted(pt: &[f64], r: f64, costs: &CostVector, c1: f64) -> Result<Vec<f64>> {
    check_dim(costs.dim(), pt.len())?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be >= 0, got {r}")));
    }
    if let Some(i) = costs.costs.iter().position(|&w| c1 <= w) {
        return Err(invalid(format!("c1 = {c1} must exceed every cost (coordinate {i})")));
    }
    Ok(pt
        .iter()
        .zip(&costs.costs)
        .map(|(&x, &w)| if w == 0.0 { 0.0 } else { x.abs().min(r / (c1 / w - 1.0)) })
        .collect())
}

/// Whether the weighted truncation of `pt` has L1 norm at most `level`.
pub fn is_light_weighted(pt: &[f64], r: f64, costs: &CostVector, c1: f64, level: f64) -> Result<bool> {
    Ok(trunc_weighted(pt, r, costs, c1)?.iter().sum::<f64>() <= level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetedConfig {
    pub delta: f64,
    /// Accuracy of the admissible-distance approximation used for re-ranking.
    pub eps: f64,
    pub l_scale: f64,
    pub seed: u64,
    pub backend: BackendKind,
}

impl Default for BudgetedConfig {
    fn default() -> Self {
        BudgetedConfig { delta: 0.5, eps: 0.5, l_scale: 1.0, seed: 0, backend: BackendKind::ExactScan }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetedParams {
    pub c1: f64,
    pub c2: f64,
    pub t: u32,
    pub l: usize,
}

impl BudgetedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid(format!("eps must be in (0, 1), got {}", self.eps)));
        }
        if !(self.l_scale > 0.0 && self.l_scale.is_finite()) {
            return Err(invalid("l_scale must be positive"));
        }
        Ok(())
    }

    /// `c2 = 4`, `c1 = 2 c2 / delta`, `t = ceil(c2 ln n)`,
    /// `L = ceil(l_scale n^delta ln n)`, each floored at 1.
    pub fn derive(&self, n: usize) -> BudgetedParams {
        let ln_n = (n.max(1) as f64).ln();
        let c2 = 4.0;
        BudgetedParams {
            c1: 2.0 * c2 / self.delta,
            c2,
            t: (c2 * ln_n).ceil().max(1.0) as u32,
            l: ((self.l_scale * (n as f64).powf(self.delta) * ln_n).ceil() as usize).max(1),
        }
    }

    /// Lightness level `33 (1 + eps) r` met by the answer.
    pub fn light_level(&self, r: f64) -> f64 {
        33.0 * (1.0 + self.eps) * r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedIndex {
    config: BudgetedConfig,
    derived: BudgetedParams,
    data: Dataset,
    costs: CostVector,
    projections: Vec<Projection>,
    backends: Vec<AnnBackend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetedAnswer {
    pub index: usize,
    /// Approximate admissible distance to the returned point.
    pub distance: f64,
    pub ignored: Vec<usize>,
    pub stats: Vec<SubqueryStat>,
}

pub fn build_budgeted_index(
    points: &Dataset,
    costs: CostVector,
    cfg: BudgetedConfig,
) -> Result<BudgetedIndex> {
    BudgetedIndex::build(points, costs, cfg)
}

pub fn query_budgeted(idx: &BudgetedIndex, q: &[f64]) -> Result<BudgetedAnswer> {
    idx.query(q)
}

/// Weighted projection over the positive-cost support, re-indexed to the
/// original coordinates.
fn sample_on_support(costs: &CostVector, c1: f64, t: u32, seed: u64, stream_id: u64) -> Result<Projection> {
    let d = costs.dim();
    if costs.support.is_empty() {
        return Projection::from_entries(d, Vec::new());
    }
    let stripped: Vec<f64> = costs.support.iter().map(|&i| costs.costs[i]).collect();
    let proj = sample_weighted_projection(&stripped, c1, t, seed, stream_id)?;
    let entries = proj
        .entries()
        .iter()
        .map(|e| Entry { index: costs.support[e.index as usize] as u32, ..*e })
        .collect();
    Projection::from_entries(d, entries)
}

impl BudgetedIndex {
    pub fn build(points: &Dataset, costs: CostVector, cfg: BudgetedConfig) -> Result<Self> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_dim(points.dim(), costs.dim())?;
        let derived = cfg.derive(points.len());
        let projections = (1..=derived.l as u64)
            .into_par_iter()
            .map(|stream_id| sample_on_support(&costs, derived.c1, derived.t, cfg.seed, stream_id))
            .collect::<Result<Vec<_>>>()?;
        Self::from_projections(points, costs, cfg, projections)
    }

    /// Builds backends over caller-supplied projections.
    pub fn from_projections(
        points: &Dataset,
        costs: CostVector,
        cfg: BudgetedConfig,
        projections: Vec<Projection>,
    ) -> Result<Self> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if projections.is_empty() {
            return Err(invalid("at least one projection is required"));
        }
        check_dim(points.dim(), costs.dim())?;
        let derived = cfg.derive(points.len());
        let backends = projections
            .par_iter()
            .enumerate()
            .map(|(j, proj)| {
                let rows = WeightedRows::project(points, proj)?;
                build_backend(rows, backend_spec(&cfg, j))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BudgetedIndex { config: cfg, derived, data: points.clone(), costs, projections, backends })
    }

    pub fn config(&self) -> &BudgetedConfig {
        &self.config
    }

    pub fn derived(&self) -> &BudgetedParams {
        &self.derived
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn costs(&self) -> &CostVector {
        &self.costs
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn len(&self) -> usize {
        self.backends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backends.is_empty()
    }

    pub fn query(&self, q: &[f64]) -> Result<BudgetedAnswer> {
        check_dim(self.data.dim(), q.len())?;
        let stats = self
            .projections
            .par_iter()
            .zip(&self.backends)
            .map(|(proj, backend)| {
                let res = backend.query(&proj.apply(q)?)?;
                Ok(SubqueryStat {
                    candidate: res.index,
                    projected_distance: res.distance,
                    fallback: res.fallback,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut candidates: Vec<usize> = stats.iter().map(|s| s.candidate).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let (index, adm) = admissible_nn_among(&self.data, &candidates, q, &self.costs, self.config.eps)?;
        Ok(BudgetedAnswer { index, distance: adm.distance, ignored: adm.ignored, stats })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        codec::put_index_header(&mut w, IndexKind::Budgeted);
        self.encode(&mut w);
        w
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        codec::expect_index(&mut r, IndexKind::Budgeted)?;
        let idx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(idx)
    }
}

/// Point of `points` minimizing the approximate admissible distance to `q`,
/// ties going to the smaller index.
pub fn admissible_nn(points: &Dataset, q: &[f64], costs: &CostVector, eps: f64) -> Result<(usize, Admissible)> {
    let all: Vec<usize> = (0..points.len()).collect();
    admissible_nn_among(points, &all, q, costs, eps)
}

/// [`admissible_nn`] restricted to `candidates`.
pub fn admissible_nn_among(
    points: &Dataset,
    candidates: &[usize],
    q: &[f64],
    costs: &CostVector,
    eps: f64,
) -> Result<(usize, Admissible)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must be in (0, 1), got {eps}")));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // visit candidates by lower bound; one whose bound exceeds the best value
    // so far cannot win
    let mut ranked = candidates
        .iter()
        .map(|&i| Ok((admissible_lower_bound(points.row(i), q, costs)?, i)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut best: Option<(usize, Admissible)> = None;
    for (lb, i) in ranked {
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.1.distance);
        if lb * (1.0 - 1e-12) > cutoff {
            break;
        }
        let it = items(points.row(i), q, costs)?;
        // allow ties so the smaller index can win
        let Some(ans) = knapsack(&it, eps, next_up(cutoff)) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((bi, b)) => ans.distance < b.distance || (ans.distance == b.distance && i < *bi),
        };
        if better {
            best = Some((i, ans));
        }
    }
    Ok(best.expect("the first candidate is always evaluated"))
}

fn next_up(x: f64) -> f64 {
    if x.is_finite() {
        x + x.abs() * f64::EPSILON + f64::MIN_POSITIVE
    } else {
        x
    }
}

fn backend_spec(cfg: &BudgetedConfig, j: usize) -> AnnBackendSpec {
    match cfg.backend {
        BackendKind::ExactScan => AnnBackendSpec::exact(1.0),
        BackendKind::BitSampleLsh(mut params) => {
            params.seed ^= rng::mix64(cfg.seed ^ rng::mix64(j as u64 + 1));
            AnnBackendSpec { kind: BackendKind::BitSampleLsh(params), c: 2.0, p: 1.0 }
        }
    }
}

impl Encode for BudgetedIndex {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_json(w, &self.config);
        self.data.encode(w);
        codec::put_f64s(w, &self.costs.costs);
        self.projections.encode(w);
        self.backends.encode(w);
    }
}

impl Decode for BudgetedIndex {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let fmt = |e: Error| Error::Format(e.to_string());
        let config: BudgetedConfig = codec::read_json(r)?;
        config.validate().map_err(fmt)?;
        let data = Dataset::decode(r)?;
        let costs = CostVector::new(r.f64s()?).map_err(fmt)?;
        let projections: Vec<Projection> = Vec::decode(r)?;
        let backends: Vec<AnnBackend> = Vec::decode(r)?;
        if costs.dim() != data.dim() || projections.len() != backends.len() || projections.is_empty() {
            return Err(Error::Format("budgeted index parts do not match".into()));
        }
        for (proj, b) in projections.iter().zip(&backends) {
            if proj.source_dim() != data.dim() || b.len() != data.len() || b.rows().dim() != proj.support() {
                return Err(Error::Format("substructure does not match the dataset".into()));
            }
        }
        let derived = config.derive(data.len());
        Ok(BudgetedIndex { config, derived, data, costs, projections, backends })
    }
}
