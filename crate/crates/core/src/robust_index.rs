//! k-robust ANN by reduction to ordinary ANN.
//!
//! Preprocessing samples `L` projections from D_pr^t with `pr = 1/(c1 k)` and
//! `t = c2 ln n`, and builds one base ANN structure per projected copy of the
//! data. A query asks every structure for its ANN in projected space and
//! re-ranks the returned points by their exact k-robust distance.
//!
//! Two parameter bindings are supported: the constant-factor mode
//! (`c2 = 16`, `c1 = c2/delta`) and the (1+eps) mode for L1
//! (`c2 = 512/eps^2`, `c1 = c2/delta`, base quality `1 + eps/64`,
//! `L ~ n^delta ln(n) / eps`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_ann::{build_backend, AnnBackend, AnnBackendSpec, BackendKind, WeightedRows};
use crate::codec::{self, Decode, Encode, IndexKind, Reader};
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::{check_p, robust_distance_with, Dataset, NormParams};
use crate::projections::{sample_projection, Projection, SamplingConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RobustMode {
    ConstantFactor,
    EpsApprox { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustIndexConfig {
    pub k: usize,
    pub p: f64,
    /// Query-time exponent: the index holds about `n^delta ln n` structures.
    pub delta: f64,
    /// Approximation factor of the base ANN structures.
    pub c: f64,
    pub mode: RobustMode,
    /// Multiplier on the number of structures `L`.
    pub l_scale: f64,
    pub seed: u64,
    pub backend: BackendKind,
}

impl Default for RobustIndexConfig {
    fn default() -> Self {
        RobustIndexConfig {
            k: 1,
            p: 1.0,
            delta: 0.5,
            c: 1.0,
            mode: RobustMode::ConstantFactor,
            l_scale: 1.0,
            seed: 0,
            backend: BackendKind::ExactScan,
        }
    }
}

/// Constants bound from the config for a dataset of `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub c1: f64,
    pub c2: f64,
    pub pr: f64,
    pub t: u32,
    pub l: usize,
    /// Approximation factor handed to each base structure.
    pub base_c: f64,
}

impl RobustIndexConfig {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(invalid(format!("c must be >= 1, got {}", self.c)));
        }
        if !(self.l_scale > 0.0 && self.l_scale.is_finite()) {
            return Err(invalid("l_scale must be positive"));
        }
        if let RobustMode::EpsApprox { eps } = self.mode {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(invalid(format!("eps must be in (0, 1), got {eps}")));
            }
        }
        Ok(())
    }

    /// `c2`, `c1 = c2/delta`, `pr = 1/(c1 k)`, `t = ceil(c2 ln n)` and the
    /// structure count `L`, each floored at 1.
    pub fn derive(&self, n: usize) -> DerivedParams {
        let ln_n = (n.max(1) as f64).ln();
        let (c2, l_raw, base_c) = match self.mode {
            RobustMode::ConstantFactor => {
                (16.0, self.l_scale * (n as f64).powf(self.delta) * ln_n, self.c)
            }
            RobustMode::EpsApprox { eps } => (
                512.0 / (eps * eps),
                self.l_scale * (n as f64).powf(self.delta) * ln_n / eps,
                1.0 + eps / 64.0,
            ),
        };
        let c1 = c2 / self.delta;
        let pr = if self.k == 0 { 1.0 } else { 1.0 / (c1 * self.k as f64) };
        let t = (c2 * ln_n).ceil().max(1.0) as u32;
        let l = if self.k == 0 { 1 } else { (l_raw.ceil() as usize).max(1) };
        DerivedParams { c1, c2, pr, t, l, base_c }
    }

    /// `lambda = max(128/delta, 16c)`.
    pub fn lambda(&self) -> f64 {
        (128.0 / self.delta).max(16.0 * self.c)
    }

    /// Truncation factor of the (1+eps) mode: `eps^5 delta / (90 * 512 * k)`.
    pub fn xi(&self) -> Option<f64> {
        match self.mode {
            RobustMode::EpsApprox { eps } => {
                Some(eps.powi(5) * self.delta / (90.0 * 512.0 * self.k.max(1) as f64))
            }
            RobustMode::ConstantFactor => None,
        }
    }

    fn backend_spec(&self, derived: &DerivedParams, j: usize) -> AnnBackendSpec {
        match self.backend {
            BackendKind::ExactScan => AnnBackendSpec::exact(self.p),
            BackendKind::BitSampleLsh(mut params) => {
                params.seed ^= rng::mix64(self.seed ^ rng::mix64(j as u64 + 1));
                AnnBackendSpec { kind: BackendKind::BitSampleLsh(params), c: derived.base_c, p: self.p }
            }
        }
    }
}

/// `L` projected copies of the dataset, each behind a base ANN structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustIndex {
    config: RobustIndexConfig,
    derived: DerivedParams,
    data: Dataset,
    projections: Vec<Projection>,
    backends: Vec<AnnBackend>,
}

/// What one substructure contributed to a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubqueryStat {
    pub candidate: usize,
    pub projected_distance: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustAnswer {
    pub index: usize,
    /// k-robust distance to the returned point.
    pub distance: f64,
    pub stats: Vec<SubqueryStat>,
}

/// Samples the projections and builds one backend per projected copy.
pub fn build_robust_index(points: &Dataset, cfg: RobustIndexConfig) -> Result<RobustIndex> {
    RobustIndex::build(points, cfg)
}

/// Answers a k-robust ANN query.
pub fn query_robust(idx: &RobustIndex, q: &[f64]) -> Result<RobustAnswer> {
    idx.query(q)
}

impl RobustIndex {
    pub fn build(points: &Dataset, cfg: RobustIndexConfig) -> Result<Self> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if cfg.k > points.dim() {
            return Err(invalid(format!("k = {} exceeds dimension {}", cfg.k, points.dim())));
        }
        let derived = cfg.derive(points.len());
        let projections = if cfg.k == 0 {
            log::warn!("k = 0: robust index degrades to a single plain ANN structure");
            vec![Projection::identity(points.dim())]
        } else {
            (1..=derived.l as u64)
                .into_par_iter()
                .map(|stream_id| {
                    let sc = SamplingConfig { pr: derived.pr, t: derived.t, seed: cfg.seed, stream_id };
                    sample_projection(points.dim(), &sc)
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::from_projections(points, cfg, projections)
    }

    /// Builds backends over caller-supplied projections.
    pub fn from_projections(
        points: &Dataset,
        cfg: RobustIndexConfig,
        projections: Vec<Projection>,
    ) -> Result<Self> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if projections.is_empty() {
            return Err(invalid("at least one projection is required"));
        }
        let derived = cfg.derive(points.len());
        let backends = projections
            .par_iter()
            .enumerate()
            .map(|(j, proj)| {
                let rows = WeightedRows::project(points, proj)?;
                build_backend(rows, cfg.backend_spec(&derived, j))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RobustIndex { config: cfg, derived, data: points.clone(), projections, backends })
    }

    pub fn config(&self) -> &RobustIndexConfig {
        &self.config
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.derived
    }

    pub fn data(&self) -> &Dataset {
        &self.data
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

    pub fn norm_params(&self) -> NormParams {
        NormParams { p: self.config.p, k: self.config.k }
    }

    pub fn query(&self, q: &[f64]) -> Result<RobustAnswer> {
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
        let params = self.norm_params();
        let mut scratch = Vec::with_capacity(q.len());
        let mut best = (usize::MAX, f64::INFINITY);
        for i in candidates {
            let d = robust_distance_with(self.data.row(i), q, params, &mut scratch);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(RobustAnswer { index: best.0, distance: best.1, stats })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        codec::put_index_header(&mut w, IndexKind::Robust);
        self.encode(&mut w);
        w
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        codec::expect_index(&mut r, IndexKind::Robust)?;
        let idx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(idx)
    }
}

impl Encode for RobustIndex {
    fn encode(&self, w: &mut Vec<u8>) {
        codec::put_json(w, &self.config);
        self.data.encode(w);
        self.projections.encode(w);
        self.backends.encode(w);
    }
}

impl Decode for RobustIndex {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let config: RobustIndexConfig = codec::read_json(r)?;
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let data = Dataset::decode(r)?;
        let projections: Vec<Projection> = Vec::decode(r)?;
        let backends: Vec<AnnBackend> = Vec::decode(r)?;
        if projections.len() != backends.len() || projections.is_empty() {
            return Err(Error::Format("projection and backend counts differ".into()));
        }
        for (proj, b) in projections.iter().zip(&backends) {
            if proj.source_dim() != data.dim() || b.len() != data.len() || b.rows().dim() != proj.support() {
                return Err(Error::Format("substructure does not match the dataset".into()));
            }
        }
        let derived = config.derive(data.len());
        Ok(RobustIndex { config, derived, data, projections, backends })
    }
}
