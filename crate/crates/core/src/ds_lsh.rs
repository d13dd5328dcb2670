//! Data-sensitive near-neighbor search on the Hamming cube.
//!
//! Level `i` holds `N_i = ceil(alpha ln n / cp_i(r))` hash tables, each keyed
//! by a random coordinate subset that includes every coordinate with
//! probability `1 - (1 - 1/r)^i`. A query walks the levels in order and stops
//! at the first level whose total collision count `X_i` is at most `c3 N_i`,
//! returning the closest colliding point. If even the last level is crowded,
//! its tables are grouped into blocks that are scanned from the least crowded
//! up until a point within `(1 + eps) r` turns up.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Decode, Encode, IndexKind, Reader};
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::Dataset;
use crate::rng;

/// Binary points packed row-major into little-endian 64-bit words.
/// Coordinate `j` of a row is bit `j % 64` of word `j / 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    dim: usize,
    words: usize,
    data: Vec<u64>,
}

pub fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

impl BitMatrix {
    pub fn zeros(n: usize, dim: usize) -> Self {
        let words = words_for(dim);
        BitMatrix { n, dim, words, data: vec![0; n * words] }
    }

    /// Wraps packed words; bits past `dim` in each row must be clear.
    pub fn from_words(n: usize, dim: usize, data: Vec<u64>) -> Result<Self> {
        let words = words_for(dim);
        if data.len() != n * words {
            return Err(invalid(format!("expected {} words for {n} x {dim} bits, got {}", n * words, data.len())));
        }
        let m = Self { n, dim, words, data };
        if !dim.is_multiple_of(64) {
            let spill = !0u64 << (dim % 64);
            if (0..n).any(|i| m.row(i)[words - 1] & spill != 0) {
                return Err(Error::Format("bits set past the row dimension".into()));
            }
        }
        Ok(m)
    }

    /// Converts a dataset whose entries are all 0 or 1.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut m = Self::zeros(ds.len(), ds.dim());
        for (i, row) in ds.rows().enumerate() {
            let packed = pack(row)?;
            m.row_mut(i).copy_from_slice(&packed);
        }
        Ok(m)
    }

    pub fn from_bools<R: AsRef<[bool]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            check_dim(dim, r.as_ref().len())?;
            for (j, &b) in r.as_ref().iter().enumerate() {
                m.set(i, j, b);
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    pub fn as_words(&self) -> &[u64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.words..(i + 1) * self.words]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, bit: bool) {
        let w = &mut self.row_mut(i)[j / 64];
        if bit {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn to_dataset(&self) -> Dataset {
        let flat = (0..self.n)
            .flat_map(|i| (0..self.dim).map(move |j| if self.get(i, j) { 1.0 } else { 0.0 }))
            .collect();
        Dataset::from_flat(self.dim, flat).expect("shape is consistent")
    }
}

/// Packs a 0/1 vector into words.
pub fn pack(x: &[f64]) -> Result<Vec<u64>> {
    let mut out = vec![0u64; words_for(x.len())];
    for (j, &v) in x.iter().enumerate() {
        if v == 1.0 {
            out[j / 64] |= 1 << (j % 64);
        } else if v != 0.0 {
            return Err(Error::NotBinary { coord: j, value: v });
        }
    }
    Ok(out)
}

pub fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Whether `a` and `b` agree on every coordinate selected by `mask`.
pub fn agree_on(a: &[u64], b: &[u64], mask: &[u64]) -> bool {
    a.iter().zip(b).zip(mask).all(|((x, y), m)| (x ^ y) & m == 0)
}

impl Encode for BitMatrix {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_u64(w, self.n as u64);
        codec::put_u64(w, self.dim as u64);
        codec::put_u64s(w, &self.data);
    }
}

impl Decode for BitMatrix {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let data = r.u64s()?;
        BitMatrix::from_words(n, dim, data).map_err(|e| Error::Format(e.to_string()))
    }
}

/// `cp_i(ell) = (1 - 1/r)^(ell * i)`: probability that two points at Hamming
/// distance `ell` collide under a level-`i` projection.
pub fn collision_probability(r: f64, ell: f64, i: u32) -> f64 {
    (1.0 - 1.0 / r).powf(ell * i as f64)
}

/// Per-coordinate inclusion probability of a level-`i` projection.
pub fn inclusion_probability(r: f64, i: u32) -> f64 {
    1.0 - (1.0 - 1.0 / r).powi(i as i32)
}

/// Samples a coordinate mask keeping each of `dim` coordinates with
/// probability `p`.
pub fn sample_mask(dim: usize, p: f64, seed: u64, stream_id: u64) -> Vec<u64> {
    let mut rng = rng::stream(seed, rng::DOMAIN_DSLSH, stream_id);
    let mut mask = vec![0u64; words_for(dim)];
    for j in 0..dim {
        if rng.random_bool(p) {
            mask[j / 64] |= 1 << (j % 64);
        }
    }
    mask
}

fn key_of(row: &[u64], mask: &[u64]) -> u64 {
    let mut h = 0x6a09_e667_f3bc_c909u64;
    for (w, m) in row.iter().zip(mask) {
        h = rng::mix64(h ^ (w & m));
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsLshConfig {
    pub r: u32,
    pub eps: f64,
    /// Multiplier in `N_i`.
    pub alpha: f64,
    /// Collision threshold constant; must exceed e.
    pub c3: f64,
    pub seed: u64,
    /// Coordinate duplication factor. `None` duplicates automatically when
    /// `r <= ln n`.
    pub dup_factor: Option<u32>,
    /// Probe one list element per lookup and stop at the first near point.
    /// Gives up the exact-nearest-neighbor property of early levels.
    pub early_exit: bool,
}

impl Default for DsLshConfig {
    fn default() -> Self {
        DsLshConfig { r: 16, eps: 0.5, alpha: 8.0, c3: 3.0, seed: 0, dup_factor: None, early_exit: false }
    }
}

impl DsLshConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(invalid("r must be >= 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be positive"));
        }
        if !(self.c3 > std::f64::consts::E && self.c3.is_finite()) {
            return Err(invalid(format!("c3 must exceed e, got {}", self.c3)));
        }
        if self.dup_factor == Some(0) {
            return Err(invalid("dup_factor must be >= 1"));
        }
        Ok(())
    }

    /// Shape of the index for `n` points.
    pub fn layout(&self, n: usize) -> Result<Layout> {
        self.validate()?;
        let ln_n = (n.max(2) as f64).ln();
        let r = self.r as f64;
        let dup = match self.dup_factor {
            Some(f) => f,
            None if r <= ln_n => ((ln_n + 1.0) / r).ceil() as u32,
            None => 1,
        };
        let r_eff = r * dup as f64;
        if r_eff <= ln_n {
            return Err(invalid(format!("r * dup_factor = {r_eff} must exceed ln n = {ln_n:.3}")));
        }
        let levels = ((ln_n / (1.0 + self.eps)).floor() as usize).max(1);
        let tables = (1..=levels as u32)
            .map(|i| (self.alpha * ln_n / collision_probability(r_eff, r_eff, i)).ceil() as usize)
            .collect();
        let blocks = ((self.alpha * ln_n).ceil() as usize).max(1);
        Ok(Layout { dup, r_eff, levels, tables, blocks })
    }
}

/// Derived sizes: duplication, level count `N`, `N_i` and the block count `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub dup: u32,
    /// Radius in duplicated coordinates.
    pub r_eff: f64,
    pub levels: usize,
    /// `N_i` for `i = 1..=levels`.
    pub tables: Vec<usize>,
    pub blocks: usize,
}

impl Layout {
    /// Inclusion probability per original coordinate at level `i`. With
    /// duplication a coordinate is kept if any of its copies is.
    pub fn inclusion(&self, i: u32) -> f64 {
        inclusion_probability(self.r_eff, i * self.dup)
    }

    /// Collision probability at original distance `ell` on level `i`.
    pub fn collision(&self, ell: f64, i: u32) -> f64 {
        collision_probability(self.r_eff, ell * self.dup as f64, i)
    }

    /// Table ranges of the blocks at the last level.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let total = *self.tables.last().expect("at least one level");
        let t = self.blocks.min(total);
        (0..t).map(|b| b * total / t..(b + 1) * total / t).collect()
    }
}

/// One hash table stored as `(key, point)` pairs sorted by key.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    mask: Vec<u64>,
    keys: Vec<u64>,
    ids: Vec<u32>,
}

impl Table {
    fn build(points: &BitMatrix, mask: Vec<u64>) -> Self {
        let mut pairs: Vec<(u64, u32)> = (0..points.len()).map(|i| (key_of(points.row(i), &mask), i as u32)).collect();
        pairs.sort_unstable();
        let (keys, ids) = pairs.into_iter().unzip();
        Table { mask, keys, ids }
    }

    fn bucket(&self, key: u64) -> &[u32] {
        let lo = self.keys.partition_point(|&k| k < key);
        let hi = lo + self.keys[lo..].partition_point(|&k| k == key);
        &self.ids[lo..hi]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsLshIndex {
    config: DsLshConfig,
    layout: Layout,
    points: BitMatrix,
    levels: Vec<Vec<Table>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// A witness within `(1 + eps) r` was found.
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub index: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DsLshStats {
    /// 1-based level the query stopped at.
    pub level: usize,
    pub levels: usize,
    /// `X_i` for every visited level.
    pub collisions: Vec<u64>,
    /// Whether the last level was scanned block by block.
    pub block_scan: bool,
    pub blocks_scanned: usize,
    /// Tables in the scanned blocks.
    pub block_tables_scanned: usize,
    /// List entries visited, repeats included.
    pub entries_scanned: u64,
    /// Distinct points whose distance was computed.
    pub distinct_scanned: usize,
    /// List entries pointing to points farther than `(1 + eps) r`.
    pub bad_collisions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsLshAnswer {
    pub outcome: Outcome,
    /// Closest point scanned; within `(1 + eps) r` exactly when `outcome` is
    /// `Near`.
    pub witness: Option<Witness>,
    pub stats: DsLshStats,
}

pub fn build_ds_lsh(points: &BitMatrix, cfg: DsLshConfig) -> Result<DsLshIndex> {
    DsLshIndex::build(points, cfg)
}

pub fn query_ds_lsh(idx: &DsLshIndex, q: &[u64]) -> Result<DsLshAnswer> {
    idx.query(q)
}

fn stream_id(level: usize, table: usize) -> u64 {
    (level as u64) << 32 | table as u64
}

impl DsLshIndex {
    pub fn build(points: &BitMatrix, cfg: DsLshConfig) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("at least two points are required"));
        }
        if points.dim() == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let layout = cfg.layout(points.len())?;
        let masks = (1..=layout.levels)
            .map(|i| {
                let p = layout.inclusion(i as u32);
                (0..layout.tables[i - 1])
                    .into_par_iter()
                    .map(|j| sample_mask(points.dim(), p, cfg.seed, stream_id(i, j)))
                    .collect()
            })
            .collect();
        Self::from_masks(points, cfg, layout, masks)
    }

    fn from_masks(points: &BitMatrix, cfg: DsLshConfig, layout: Layout, masks: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        let levels = masks
            .into_iter()
            .map(|level| level.into_par_iter().map(|m| Table::build(points, m)).collect())
            .collect();
        Ok(DsLshIndex { config: cfg, layout, points: points.clone(), levels })
    }

    pub fn config(&self) -> &DsLshConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn points(&self) -> &BitMatrix {
        &self.points
    }

    /// Mask of table `table` on 1-based level `level`.
    pub fn mask(&self, level: usize, table: usize) -> &[u64] {
        &self.levels[level - 1][table].mask
    }

    /// Points colliding with `q` in one table, in increasing index order.
    pub fn collision_list(&self, level: usize, table: usize, q: &[u64]) -> &[u32] {
        let t = &self.levels[level - 1][table];
        t.bucket(key_of(q, &t.mask))
    }

    /// Largest distance reported as near: `floor((1 + eps) r)`.
    pub fn near_radius(&self) -> u32 {
        ((1.0 + self.config.eps) * self.config.r as f64 + 1e-9).floor() as u32
    }

    pub fn query(&self, q: &[u64]) -> Result<DsLshAnswer> {
        check_dim(self.points.words_per_row(), q.len())?;
        let mut scan = Scan::new(self, q);
        let last = self.layout.levels;
        for level in 1..=last {
            let tables = &self.levels[level - 1];
            let buckets: Vec<&[u32]> = tables.iter().map(|t| t.bucket(key_of(q, &t.mask))).collect();
            let x: u64 = buckets.iter().map(|b| b.len() as u64).sum();
            scan.stats.collisions.push(x);
            scan.stats.level = level;
            if self.config.early_exit {
                if let Some(ans) = scan.probe(&buckets) {
                    return Ok(ans);
                }
            }
            if x as f64 <= self.config.c3 * tables.len() as f64 {
                for b in &buckets {
                    scan.visit_all(b);
                }
                return Ok(scan.finish());
            }
            if level == last {
                return Ok(self.block_scan(scan, &buckets));
            }
        }
        unreachable!("the last level always returns")
    }

    fn block_scan<'a>(&'a self, mut scan: Scan<'a>, buckets: &[&[u32]]) -> DsLshAnswer {
        scan.stats.block_scan = true;
        let mut blocks: Vec<(u64, std::ops::Range<usize>)> = self
            .layout
            .block_ranges()
            .into_iter()
            .map(|range| (buckets[range.clone()].iter().map(|b| b.len() as u64).sum(), range))
            .collect();
        blocks.sort_by_key(|(size, range)| (*size, range.start));
        for (_, range) in blocks {
            scan.stats.blocks_scanned += 1;
            scan.stats.block_tables_scanned += range.len();
            for b in &buckets[range] {
                if scan.visit_until_near(b) {
                    return scan.finish();
                }
            }
        }
        scan.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        codec::put_index_header(&mut w, IndexKind::DsLsh);
        self.encode(&mut w);
        w
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        codec::expect_index(&mut r, IndexKind::DsLsh)?;
        let idx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(idx)
    }
}

struct Scan<'a> {
    idx: &'a DsLshIndex,
    q: &'a [u64],
    near: u32,
    seen: HashSet<u32>,
    best: Option<Witness>,
    stats: DsLshStats,
}

impl<'a> Scan<'a> {
    fn new(idx: &'a DsLshIndex, q: &'a [u64]) -> Self {
        Scan {
            idx,
            q,
            near: idx.near_radius(),
            seen: HashSet::new(),
            best: None,
            stats: DsLshStats { levels: idx.layout.levels, ..DsLshStats::default() },
        }
    }

    /// Visits one list entry and returns its distance.
    fn visit(&mut self, id: u32) -> u32 {
        self.stats.entries_scanned += 1;
        let d = hamming(self.idx.points.row(id as usize), self.q);
        if d > self.near {
            self.stats.bad_collisions += 1;
        }
        if self.seen.insert(id) {
            self.stats.distinct_scanned += 1;
            let better = match self.best {
                None => true,
                Some(w) => d < w.distance || (d == w.distance && (id as usize) < w.index),
            };
            if better {
                self.best = Some(Witness { index: id as usize, distance: d });
            }
        }
        d
    }

    fn visit_all(&mut self, bucket: &[u32]) {
        for &id in bucket {
            self.visit(id);
        }
    }

    fn visit_until_near(&mut self, bucket: &[u32]) -> bool {
        bucket.iter().any(|&id| self.visit(id) <= self.near)
    }

    /// Checks one pseudo-random element per nonempty list.
    fn probe(&mut self, buckets: &[&[u32]]) -> Option<DsLshAnswer> {
        let qh = self.q.iter().fold(self.idx.config.seed, |h, &w| rng::mix64(h ^ w));
        for (t, b) in buckets.iter().enumerate() {
            if b.is_empty() {
                continue;
            }
            let id = b[rng::mix64(qh ^ t as u64) as usize % b.len()];
            let distance = self.visit(id);
            if distance <= self.near {
                return Some(self.finish_with(Some(Witness { index: id as usize, distance })));
            }
        }
        None
    }

    fn finish_with(&mut self, witness: Option<Witness>) -> DsLshAnswer {
        let outcome = match witness {
            Some(w) if w.distance <= self.near => Outcome::Near,
            _ => Outcome::Far,
        };
        DsLshAnswer { outcome, witness, stats: std::mem::take(&mut self.stats) }
    }

    fn finish(&mut self) -> DsLshAnswer {
        self.finish_with(self.best)
    }
}

impl Encode for DsLshIndex {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_json(w, &self.config);
        self.points.encode(w);
        for level in &self.levels {
            codec::put_len(w, level.len());
            for t in level {
                codec::put_u64s(w, &t.mask);
            }
        }
    }
}

impl Decode for DsLshIndex {
    /// Reads the config, points and masks; hash tables are rebuilt.
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let fmt = |e: Error| Error::Format(e.to_string());
        let config: DsLshConfig = codec::read_json(r)?;
        let points = BitMatrix::decode(r)?;
        if points.len() < 2 {
            return Err(Error::Format("index holds fewer than two points".into()));
        }
        let layout = config.layout(points.len()).map_err(fmt)?;
        let mut masks = Vec::with_capacity(layout.levels);
        for &expected in &layout.tables {
            let count = r.len()?;
            if count != expected {
                return Err(Error::Format(format!("level holds {count} tables, expected {expected}")));
            }
            let level = (0..count)
                .map(|_| {
                    let m = r.u64s()?;
                    if m.len() != points.words_per_row() {
                        return Err(Error::Format("mask width does not match the points".into()));
                    }
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            masks.push(level);
        }
        DsLshIndex::from_masks(&points, config, layout, masks)
    }
}

/// Smallest `Delta >= 0` with `sum_i exp(-Delta * dist(q, p_i) / r) <= 1`,
/// to within `1e-6`. Infinite when some point coincides with `q`.
pub fn density_parameter(points: &BitMatrix, q: &[u64], r: f64) -> f64 {
    let dists: Vec<f64> = (0..points.len()).map(|i| hamming(points.row(i), q) as f64 / r).collect();
    density_from_scaled(&dists)
}

fn density_from_scaled(dists: &[f64]) -> f64 {
    if dists.contains(&0.0) {
        return f64::INFINITY;
    }
    let f = |delta: f64| dists.iter().map(|&d| (-delta * d).exp()).sum::<f64>();
    if f(0.0) <= 1.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
