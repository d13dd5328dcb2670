//! Coordinate-sampling projections in compressed form.
//!
//! A projection copies (and optionally scales) original coordinates, possibly
//! several times each. Coordinate order in the projected space is irrelevant
//! for norms, so a projection is stored as one `(index, multiplicity, scale)`
//! entry per sampled coordinate. Applying it to a point yields one value per
//! entry; norms weight each value by its multiplicity.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::codec::{self, Decode, Encode, Reader};
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::{check_p, pow_abs, root};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// 0-based source coordinate.
    pub index: u32,
    pub count: u32,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    source_dim: usize,
    entries: Vec<Entry>,
}

/// Unweighted sampling: every coordinate is kept with probability `pr` in
/// each of `t` independent blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub pr: f64,
    pub t: u32,
    pub seed: u64,
    pub stream_id: u64,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pr > 0.0 && self.pr <= 1.0) {
            return Err(invalid(format!("sampling probability must be in (0, 1], got {}", self.pr)));
        }
        if self.t == 0 {
            return Err(invalid("block count t must be >= 1"));
        }
        Ok(())
    }
}

impl Projection {
    /// Builds a projection from explicit entries. Entries are sorted by index;
    /// duplicate indices, zero counts and non-positive scales are rejected.
    pub fn from_entries(source_dim: usize, mut entries: Vec<Entry>) -> Result<Self> {
        entries.sort_by_key(|e| e.index);
        for w in entries.windows(2) {
            if w[0].index == w[1].index {
                return Err(invalid(format!("duplicate coordinate {}", w[0].index)));
            }
        }
        for e in &entries {
            if e.index as usize >= source_dim {
                return Err(invalid(format!("coordinate {} out of range {source_dim}", e.index)));
            }
            if e.count == 0 {
                return Err(invalid("multiplicities must be >= 1"));
            }
            if !(e.scale > 0.0 && e.scale.is_finite()) {
                return Err(invalid(format!("scale must be positive, got {}", e.scale)));
            }
        }
        Ok(Projection { source_dim, entries })
    }

    /// Every coordinate exactly once, unscaled.
    pub fn identity(source_dim: usize) -> Self {
        let entries = (0..source_dim as u32)
            .map(|index| Entry { index, count: 1, scale: 1.0 })
            .collect();
        Projection { source_dim, entries }
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Number of distinct sampled coordinates.
    pub fn support(&self) -> usize {
        self.entries.len()
    }

    /// Dimension of the fully expanded projected point.
    pub fn projected_dim(&self) -> u64 {
        self.entries.iter().map(|e| e.count as u64).sum()
    }

    pub fn count_of(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(index as u32), |e| e.index)
            .map(|i| self.entries[i].count)
            .unwrap_or(0)
    }

    /// True when none of `coords` is sampled.
    pub fn misses(&self, coords: &[usize]) -> bool {
        coords.iter().all(|&c| self.count_of(c) == 0)
    }

    /// Per-entry multiplicities as norm weights.
    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.count as f64).collect()
    }

    /// Scaled sampled values, one per entry.
    pub fn apply(&self, pt: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.source_dim, pt.len())?;
        Ok(self.entries.iter().map(|e| e.scale * pt[e.index as usize]).collect())
    }

    /// `||S pt||_p^p` of the expanded projected point.
    pub fn norm_pow(&self, pt: &[f64], p: f64) -> Result<f64> {
        check_dim(self.source_dim, pt.len())?;
        check_p(p)?;
        Ok(self
            .entries
            .iter()
            .map(|e| e.count as f64 * pow_abs(e.scale * pt[e.index as usize], p))
            .sum())
    }

    /// `||S a - S b||_p` without materializing either projection.
    pub fn projected_distance(&self, a: &[f64], b: &[f64], p: f64) -> Result<f64> {
        check_dim(self.source_dim, a.len())?;
        check_dim(self.source_dim, b.len())?;
        check_p(p)?;
        let sum = self
            .entries
            .iter()
            .map(|e| {
                let i = e.index as usize;
                e.count as f64 * pow_abs(e.scale * (a[i] - b[i]), p)
            })
            .sum();
        Ok(root(sum, p))
    }
}

/// Draws `t` concatenated blocks from D_pr: coordinate `i` gets multiplicity
/// `Binomial(t, pr)`, independently per coordinate. Deterministic in
/// `(seed, stream_id)`.
pub fn sample_projection(d: usize, cfg: &SamplingConfig) -> Result<Projection> {
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::DOMAIN_PROJECTION, cfg.stream_id);
    let binom = Binomial::new(cfg.t as u64, cfg.pr).map_err(|e| invalid(e.to_string()))?;
    let entries = (0..d as u32)
        .filter_map(|index| {
            let count = binom.sample(&mut rng) as u32;
            (count > 0).then_some(Entry { index, count, scale: 1.0 })
        })
        .collect();
    Ok(Projection { source_dim: d, entries })
}

/// Draws `t` blocks of the cost-weighted distribution: in each block
/// coordinate `i` is kept with probability `costs[i] / c1` and scaled by
/// `c1 / costs[i]`.
///
/// The expected L1 norm of a projected point is `t * ||pt||_1` (no division
/// by `t`).
pub fn sample_weighted_projection(
    costs: &[f64],
    c1: f64,
    t: u32,
    seed: u64,
    stream_id: u64,
) -> Result<Projection> {
    if costs.is_empty() {
        return Err(invalid("cost vector is empty"));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(invalid(format!("c1 must be positive, got {c1}")));
    }
    if t == 0 {
        return Err(invalid("block count t must be >= 1"));
    }
    for (i, &w) in costs.iter().enumerate() {
        if w == 0.0 {
            return Err(invalid(format!("coordinate {i} has zero cost; strip it first")));
        }
        if !(w > 0.0 && w <= 1.0) {
            return Err(invalid(format!("cost {w} of coordinate {i} outside (0, 1]")));
        }
        if w > c1 {
            return Err(invalid(format!("cost {w} of coordinate {i} exceeds c1 = {c1}")));
        }
    }
    let mut rng = rng::stream(seed, rng::DOMAIN_WEIGHTED, stream_id);
    let mut entries = Vec::new();
    for (i, &w) in costs.iter().enumerate() {
        let pr = w / c1;
        let count = if pr >= 1.0 {
            t as u64
        } else {
            Binomial::new(t as u64, pr)
                .map_err(|e| invalid(e.to_string()))?
                .sample(&mut rng)
        };
        if count > 0 {
            entries.push(Entry { index: i as u32, count: count as u32, scale: c1 / w });
        }
    }
    Ok(Projection { source_dim: costs.len(), entries })
}

impl Encode for Projection {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_u64(w, self.source_dim as u64);
        codec::put_len(w, self.entries.len());
        for e in &self.entries {
            codec::put_u32(w, e.index);
            codec::put_u32(w, e.count);
            codec::put_f64(w, e.scale);
        }
    }
}

impl Decode for Projection {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let source_dim = r.u64()? as usize;
        let n = r.len()?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push(Entry { index: r.u32()?, count: r.u32()?, scale: r.f64()? });
        }
        Projection::from_entries(source_dim, entries).map_err(|e| Error::Format(e.to_string()))
    }
}
