//! Black-box c-ANN backends queried by the robust reductions.
//!
//! Backends index a [`WeightedRows`] set: rows share one weight per column
//! and distances are `(Σ w_i |a_i - b_i|^p)^(1/p)`. Unit weights give plain
//! L_p; projection multiplicities as weights give the distance between the
//! expanded projected points.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Decode, Encode, Reader};
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::{check_p, pow_abs, root, Dataset};
use crate::projections::Projection;
use crate::rng;

/// Row-major point set whose columns carry a shared non-negative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRows {
    dim: usize,
    n: usize,
    weights: Vec<f64>,
    data: Vec<f64>,
}

impl WeightedRows {
    pub fn new(weights: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        let dim = weights.len();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("column weights must be finite and non-negative"));
        }
        if dim == 0 {
            return Err(invalid("rows need at least one column; use WeightedRows::empty_columns"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(invalid("data length is not a multiple of the row width"));
        }
        let n = data.len() / dim;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(WeightedRows { dim, n, weights, data })
    }

    /// `n` rows with no columns: every pairwise distance is zero.
    pub fn empty_columns(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(WeightedRows { dim: 0, n, weights: Vec::new(), data: Vec::new() })
    }

    pub fn unweighted(ds: &Dataset) -> Self {
        WeightedRows {
            dim: ds.dim(),
            n: ds.len(),
            weights: vec![1.0; ds.dim()],
            data: ds.as_flat().to_vec(),
        }
    }

    /// The dataset mapped through `proj`, weighted by multiplicity.
    pub fn project(ds: &Dataset, proj: &Projection) -> Result<Self> {
        check_dim(proj.source_dim(), ds.dim())?;
        if proj.support() == 0 {
            return Self::empty_columns(ds.len());
        }
        let mut data = Vec::with_capacity(ds.len() * proj.support());
        for row in ds.rows() {
            data.extend(proj.entries().iter().map(|e| e.scale * row[e.index as usize]));
        }
        Ok(WeightedRows { dim: proj.support(), n: ds.len(), weights: proj.weights(), data })
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

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `Σ w_i |row_i - q_i|^p`.
    pub fn distance_pow(&self, i: usize, q: &[f64], p: f64) -> f64 {
        self.row(i)
            .iter()
            .zip(q)
            .zip(&self.weights)
            .map(|((a, b), w)| w * pow_abs(a - b, p))
            .sum()
    }
}

impl Encode for WeightedRows {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_u64(w, self.n as u64);
        codec::put_f64s(w, &self.weights);
        codec::put_f64s(w, &self.data);
    }
}

impl Decode for WeightedRows {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.u64()? as usize;
        let weights = r.f64s()?;
        let data = r.f64s()?;
        let rows = if weights.is_empty() {
            if !data.is_empty() {
                return Err(Error::Format("zero-width rows carry data".into()));
            }
            WeightedRows::empty_columns(n)
        } else {
            WeightedRows::new(weights, data)
        }
        .map_err(|e| Error::Format(e.to_string()))?;
        if rows.n != n {
            return Err(Error::Format(format!("row count {} does not match header {n}", rows.n)));
        }
        Ok(rows)
    }
}

/// Bit-sampling LSH parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub tables: u32,
    pub bits_per_hash: u32,
    /// Discretization levels per real coordinate.
    pub buckets: u32,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams { tables: 24, bits_per_hash: 16, buckets: 32, seed: 0 }
    }
}

impl LshParams {
    /// Classic bit-sampling tuning for a near radius that is `near_fraction`
    /// of the total (weighted, discretized) coordinate mass, at
    /// approximation `c`: `bits = ln n / ln(1/p2)` and `tables = 5 n^rho`.
    pub fn tuned(n: usize, near_fraction: f64, c: f64, seed: u64) -> Result<Self> {
        if !(near_fraction > 0.0 && near_fraction < 1.0) {
            return Err(invalid("near_fraction must be in (0, 1)"));
        }
        if c < 1.0 {
            return Err(invalid("c must be >= 1"));
        }
        let p1 = 1.0 - near_fraction;
        let p2 = (1.0 - c * near_fraction).max(0.01);
        let ln_n = (n.max(2) as f64).ln();
        let bits = (ln_n / (1.0 / p2).ln()).ceil().clamp(1.0, 64.0) as u32;
        let rho = (1.0 / p1).ln() / (1.0 / p2).ln();
        let tables = (5.0 * (n.max(2) as f64).powf(rho)).ceil().max(1.0) as u32;
        Ok(LshParams { tables, bits_per_hash: bits, buckets: 32, seed })
    }

    fn validate(&self) -> Result<()> {
        if self.tables == 0 {
            return Err(invalid("LSH needs at least one table"));
        }
        if !(1..=64).contains(&self.bits_per_hash) {
            return Err(invalid("bits_per_hash must be in 1..=64"));
        }
        if self.buckets == 0 {
            return Err(invalid("buckets must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    ExactScan,
    BitSampleLsh(LshParams),
}

/// Which backend to build, its approximation contract `c`, and the norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnBackendSpec {
    pub kind: BackendKind,
    pub c: f64,
    pub p: f64,
}

impl AnnBackendSpec {
    pub fn exact(p: f64) -> Self {
        AnnBackendSpec { kind: BackendKind::ExactScan, c: 1.0, p }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(invalid(format!("approximation factor c must be >= 1, got {}", self.c)));
        }
        match self.kind {
            BackendKind::ExactScan if self.c != 1.0 => {
                Err(invalid("exact_scan is a 1-ANN; c must be 1"))
            }
            BackendKind::BitSampleLsh(params) => params.validate(),
            _ => Ok(()),
        }
    }
}

/// One sampled bit: `value(coord) > threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BitProbe {
    coord: u32,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct LshTables {
    params: LshParams,
    /// `tables * bits_per_hash` probes, table-major.
    probes: Vec<BitProbe>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshTables {
    fn key(&self, table: usize, q: &[f64]) -> u64 {
        let b = self.params.bits_per_hash as usize;
        self.probes[table * b..(table + 1) * b]
            .iter()
            .fold(0u64, |acc, pr| (acc << 1) | (q[pr.coord as usize] > pr.threshold) as u64)
    }

    fn build(rows: &WeightedRows, params: LshParams) -> Result<Self> {
        params.validate()?;
        let dim = rows.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for i in 0..rows.len() {
            for (j, &v) in rows.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        // coordinates are chosen in proportion to their weighted range, which
        // is bit sampling on the unary (thermometer) code of the rows
        let mass: Vec<f64> = (0..dim).map(|j| rows.weights()[j] * (hi[j] - lo[j])).collect();
        let total: f64 = mass.iter().sum();
        let mut cumulative = Vec::with_capacity(dim);
        let mut acc = 0.0;
        for m in &mass {
            acc += m;
            cumulative.push(acc);
        }

        let mut rng = rng::stream(params.seed, rng::DOMAIN_LSH, 0);
        let n_probes = (params.tables * params.bits_per_hash) as usize;
        let mut probes = Vec::with_capacity(n_probes);
        for _ in 0..n_probes {
            let probe = if dim == 0 || total <= 0.0 {
                BitProbe { coord: 0, threshold: f64::INFINITY }
            } else {
                let x = rng.random::<f64>() * total;
                let coord = cumulative.partition_point(|&c| c <= x).min(dim - 1);
                let level = rng.random_range(0..params.buckets) as f64;
                let width = (hi[coord] - lo[coord]) / params.buckets as f64;
                BitProbe { coord: coord as u32, threshold: lo[coord] + (level + 0.5) * width }
            };
            probes.push(probe);
        }

        let mut tables = LshTables { params, probes, buckets: Vec::new() };
        let buckets = (0..params.tables as usize)
            .map(|t| {
                let mut map: HashMap<u64, Vec<u32>> = HashMap::new();
                for i in 0..rows.len() {
                    let key = if dim == 0 { 0 } else { tables.key(t, rows.row(i)) };
                    map.entry(key).or_default().push(i as u32);
                }
                map
            })
            .collect();
        tables.buckets = buckets;
        Ok(tables)
    }
}

/// An immutable, queryable c-ANN structure.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnBackend {
    spec: AnnBackendSpec,
    rows: WeightedRows,
    lsh: Option<LshTables>,
}

/// Result of one backend query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnResult {
    pub index: usize,
    pub distance: f64,
    /// Number of distinct rows whose distance was evaluated.
    pub candidates: usize,
    /// The LSH tables produced no candidate and a random sample was scanned.
    pub fallback: bool,
}

/// Builds a backend over `rows`.
pub fn build_backend(rows: WeightedRows, spec: AnnBackendSpec) -> Result<AnnBackend> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lsh = match spec.kind {
        BackendKind::ExactScan => None,
        BackendKind::BitSampleLsh(params) => Some(LshTables::build(&rows, params)?),
    };
    Ok(AnnBackend { spec, rows, lsh })
}

impl AnnBackend {
    pub fn spec(&self) -> &AnnBackendSpec {
        &self.spec
    }

    pub fn rows(&self) -> &WeightedRows {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Nearest row to `q` under the backend contract: exact for
    /// `exact_scan`, c-approximate with high probability for LSH.
    pub fn query(&self, q: &[f64]) -> Result<AnnResult> {
        check_dim(self.rows.dim(), q.len())?;
        let p = self.spec.p;
        let scan = |it: &mut dyn Iterator<Item = usize>| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut count = 0;
            for i in it {
                count += 1;
                let d = self.rows.distance_pow(i, q, p);
                if d < best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            }
            (best, count)
        };
        let Some(lsh) = &self.lsh else {
            let ((index, dist), candidates) = scan(&mut (0..self.rows.len()));
            return Ok(AnnResult { index, distance: root(dist, p), candidates, fallback: false });
        };

        let mut seen = vec![false; self.rows.len()];
        let mut cands = Vec::new();
        for (t, map) in lsh.buckets.iter().enumerate() {
            let key = if self.rows.dim() == 0 { 0 } else { lsh.key(t, q) };
            if let Some(bucket) = map.get(&key) {
                for &i in bucket {
                    if !std::mem::replace(&mut seen[i as usize], true) {
                        cands.push(i as usize);
                    }
                }
            }
        }
        let fallback = cands.is_empty();
        if fallback {
            let n = self.rows.len();
            let m = ((n as f64).sqrt().ceil() as usize).clamp(1, n);
            let qhash = q.iter().fold(0u64, |h, x| rng::mix64(h ^ x.to_bits()));
            let mut rng = rng::stream(lsh.params.seed ^ qhash, rng::DOMAIN_FALLBACK, 0);
            cands = index::sample(&mut rng, n, m).into_vec();
        }
        let ((index, dist), candidates) = scan(&mut cands.into_iter());
        Ok(AnnResult { index, distance: root(dist, p), candidates, fallback })
    }
}

/// Free-function form of [`AnnBackend::query`].
pub fn ann_query(backend: &AnnBackend, q: &[f64]) -> Result<AnnResult> {
    backend.query(q)
}

const KIND_EXACT: u8 = 0;
const KIND_LSH: u8 = 1;

impl Encode for AnnBackend {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_f64(w, self.spec.c);
        codec::put_f64(w, self.spec.p);
        match self.spec.kind {
            BackendKind::ExactScan => codec::put_u8(w, KIND_EXACT),
            BackendKind::BitSampleLsh(params) => {
                codec::put_u8(w, KIND_LSH);
                codec::put_u32(w, params.tables);
                codec::put_u32(w, params.bits_per_hash);
                codec::put_u32(w, params.buckets);
                codec::put_u64(w, params.seed);
            }
        }
        self.rows.encode(w);
        if let Some(lsh) = &self.lsh {
            codec::put_len(w, lsh.probes.len());
            for pr in &lsh.probes {
                codec::put_u32(w, pr.coord);
                codec::put_f64(w, pr.threshold);
            }
            for map in &lsh.buckets {
                let mut keys: Vec<&u64> = map.keys().collect();
                keys.sort_unstable();
                codec::put_len(w, keys.len());
                for k in keys {
                    codec::put_u64(w, *k);
                    codec::put_u32s(w, &map[k]);
                }
            }
        }
    }
}

impl Decode for AnnBackend {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let c = r.f64()?;
        let p = r.f64()?;
        let kind = match r.u8()? {
            KIND_EXACT => BackendKind::ExactScan,
            KIND_LSH => BackendKind::BitSampleLsh(LshParams {
                tables: r.u32()?,
                bits_per_hash: r.u32()?,
                buckets: r.u32()?,
                seed: r.u64()?,
            }),
            other => return Err(Error::Format(format!("unknown backend kind {other}"))),
        };
        let spec = AnnBackendSpec { kind, c, p };
        spec.validate().map_err(|e| Error::Format(e.to_string()))?;
        let rows = WeightedRows::decode(r)?;
        let lsh = match kind {
            BackendKind::ExactScan => None,
            BackendKind::BitSampleLsh(params) => {
                let n = r.len()?;
                if n != (params.tables * params.bits_per_hash) as usize {
                    return Err(Error::Format("probe count does not match LSH parameters".into()));
                }
                let mut probes = Vec::with_capacity(n);
                for _ in 0..n {
                    probes.push(BitProbe { coord: r.u32()?, threshold: r.f64()? });
                }
                let mut buckets = Vec::with_capacity(params.tables as usize);
                for _ in 0..params.tables {
                    let m = r.len()?;
                    let mut map = HashMap::with_capacity(m);
                    for _ in 0..m {
                        let key = r.u64()?;
                        let members = r.u32s()?;
                        if members.iter().any(|&i| i as usize >= rows.len()) {
                            return Err(Error::Format("bucket member out of range".into()));
                        }
                        map.insert(key, members);
                    }
                    buckets.push(map);
                }
                Some(LshTables { params, probes, buckets })
            }
        };
        Ok(AnnBackend { spec, rows, lsh })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::norm;
    use rand::Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng::stream(seed, 1, 0);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn exhaustive(rows: &[Vec<f64>], q: &[f64], p: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, r) in rows.iter().enumerate() {
            let diff: Vec<f64> = r.iter().zip(q).map(|(a, b)| a - b).collect();
            let d = norm(&diff, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn single_point_always_returned() {
        let ds = Dataset::from_rows(&[[1.0, 2.0]]).unwrap();
        for spec in [
            AnnBackendSpec::exact(1.0),
            AnnBackendSpec { kind: BackendKind::BitSampleLsh(LshParams::default()), c: 2.0, p: 1.0 },
        ] {
            let b = build_backend(WeightedRows::unweighted(&ds), spec).unwrap();
            for q in [[0.0, 0.0], [100.0, -3.0]] {
                assert_eq!(b.query(&q).unwrap().index, 0);
            }
        }
    }

    #[test]
    fn exact_scan_matches_exhaustive_loop() {
        let rows = random_rows(200, 12, 3);
        let ds = Dataset::from_rows(&rows).unwrap();
        for p in [1.0, 2.0] {
            let b = build_backend(WeightedRows::unweighted(&ds), AnnBackendSpec::exact(p)).unwrap();
            for q in random_rows(30, 12, 4) {
                let got = b.query(&q).unwrap();
                let (i, d) = exhaustive(&rows, &q, p);
                assert_eq!(got.index, i);
                assert!((got.distance - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dataset_point_query_returns_itself() {
        let rows = random_rows(100, 8, 5);
        let ds = Dataset::from_rows(&rows).unwrap();
        let lsh = AnnBackendSpec {
            kind: BackendKind::BitSampleLsh(LshParams { seed: 9, ..LshParams::default() }),
            c: 2.0,
            p: 1.0,
        };
        for spec in [AnnBackendSpec::exact(1.0), lsh] {
            let b = build_backend(WeightedRows::unweighted(&ds), spec).unwrap();
            for (i, r) in rows.iter().enumerate().step_by(7) {
                let got = b.query(r).unwrap();
                assert_eq!((got.index, got.distance), (i, 0.0));
            }
        }
    }

    #[test]
    fn separation_dominates_approximation() {
        let ds = Dataset::from_rows(&[[1.0, 0.0], [100.0, 0.0]]).unwrap();
        let lsh = AnnBackendSpec { kind: BackendKind::BitSampleLsh(LshParams::default()), c: 50.0, p: 1.0 };
        for spec in [AnnBackendSpec::exact(1.0), lsh] {
            let b = build_backend(WeightedRows::unweighted(&ds), spec).unwrap();
            assert_eq!(b.query(&[0.0, 0.0]).unwrap().index, 0);
        }
    }

    #[test]
    fn weighted_rows_use_multiplicities() {
        let proj = Projection::from_entries(
            3,
            vec![
                crate::projections::Entry { index: 0, count: 3, scale: 1.0 },
                crate::projections::Entry { index: 2, count: 1, scale: 2.0 },
            ],
        )
        .unwrap();
        let ds = Dataset::from_rows(&[[1.0, 50.0, 1.0], [0.0, 0.0, 0.0]]).unwrap();
        let rows = WeightedRows::project(&ds, &proj).unwrap();
        let q = proj.apply(&[0.0, 0.0, 0.0]).unwrap();
        // row 0: 3*1 + 1*2 = 5
        assert_eq!(rows.distance_pow(0, &q, 1.0), 5.0);
        assert_eq!(rows.distance_pow(0, &q, 1.0), proj.projected_distance(ds.row(0), ds.row(1), 1.0).unwrap());
    }

    #[test]
    fn empty_projection_has_zero_distances() {
        let ds = Dataset::from_rows(&[[1.0], [2.0]]).unwrap();
        let proj = Projection::from_entries(1, vec![]).unwrap();
        let rows = WeightedRows::project(&ds, &proj).unwrap();
        let b = build_backend(rows, AnnBackendSpec::exact(1.0)).unwrap();
        let got = b.query(&[]).unwrap();
        assert_eq!((got.index, got.distance), (0, 0.0));
    }

    #[test]
    fn spec_validation() {
        assert!(AnnBackendSpec { kind: BackendKind::ExactScan, c: 2.0, p: 1.0 }.validate().is_err());
        assert!(AnnBackendSpec { kind: BackendKind::ExactScan, c: 1.0, p: 0.0 }.validate().is_err());
        let bad = LshParams { bits_per_hash: 65, ..LshParams::default() };
        assert!(AnnBackendSpec { kind: BackendKind::BitSampleLsh(bad), c: 2.0, p: 1.0 }.validate().is_err());
    }

    #[test]
    fn backend_codec_roundtrip() {
        let rows = random_rows(40, 6, 8);
        let ds = Dataset::from_rows(&rows).unwrap();
        let lsh = AnnBackendSpec { kind: BackendKind::BitSampleLsh(LshParams::default()), c: 2.0, p: 2.0 };
        for spec in [AnnBackendSpec::exact(2.0), lsh] {
            let b = build_backend(WeightedRows::unweighted(&ds), spec).unwrap();
            let bytes = codec::to_bytes(&b);
            let back: AnnBackend = codec::from_bytes(&bytes).unwrap();
            assert_eq!(back, b);
            assert_eq!(codec::to_bytes(&back), bytes);
        }
    }
}
