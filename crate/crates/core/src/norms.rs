//! Points, tails and truncated norms.
//!
//! The robust distance between `u` and `v` is the L_p norm of `u - v` after
//! the `k` largest-magnitude coordinates are zeroed (the k-tail). Everything
//! else in the crate is validated against [`robust_nn_bruteforce`].

use std::cmp::Ordering;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

/// A dense point with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major collection of points sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from rows; rejects ragged or non-finite input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            check_dim(dim, row.len())?;
            if let Some(i) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            data.extend_from_slice(row);
        }
        Ok(Dataset { dim, data })
    }

    /// Builds a dataset from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i % dim));
        }
        Ok(Dataset { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// L_p exponent and the number of coordinates a robust distance may ignore.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub p: f64,
    pub k: usize,
}

impl NormParams {
    pub fn new(p: f64, k: usize) -> Result<Self> {
        check_p(p)?;
        Ok(NormParams { p, k })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_p(self.p)?;
        check_k(self.k, dim)
    }
}

/// Per-coordinate truncation threshold and the norm level it is compared to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightHeavyParams {
    pub psi: f64,
    pub level: f64,
}

impl LightHeavyParams {
    pub fn new(psi: f64, level: f64) -> Result<Self> {
        if psi.is_nan() || psi < 0.0 {
            return Err(invalid(format!("psi must be >= 0, got {psi}")));
        }
        if level.is_nan() || level < 0.0 {
            return Err(invalid(format!("level must be >= 0, got {level}")));
        }
        Ok(LightHeavyParams { psi, level })
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("norm exponent p must be positive, got {p}")));
    }
    Ok(())
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k > dim {
        return Err(invalid(format!("k = {k} exceeds dimension {dim}")));
    }
    Ok(())
}

/// `|x|^p` with fast paths for p = 1 and p = 2.
#[inline]
pub fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

/// Inverse of [`pow_abs`] applied to a sum of powers.
#[inline]
pub fn root(sum: f64, p: f64) -> f64 {
    if p == 1.0 {
        sum
    } else if p == 2.0 {
        sum.sqrt()
    } else {
        sum.powf(1.0 / p)
    }
}

/// `||x||_p^p`.
pub fn norm_pow(x: &[f64], p: f64) -> f64 {
    x.iter().map(|&v| pow_abs(v, p)).sum()
}

/// `||x||_p`.
pub fn norm(x: &[f64], p: f64) -> f64 {
    root(norm_pow(x, p), p)
}

/// Sum of `|x_i|^p` over all but the `k` largest-magnitude entries.
///
/// Uses selection, so it runs in expected linear time. `scratch` is reused
/// to avoid an allocation per call.
fn tail_pow_with(x: impl Iterator<Item = f64>, k: usize, p: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(x.map(f64::abs));
    let d = scratch.len();
    if k >= d {
        return 0.0;
    }
    if k > 0 {
        // descending: indices [0, k) end up holding the k largest
        scratch.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    }
    scratch[k..].iter().map(|&a| pow_abs(a, p)).sum()
}

/// `||tail_k(pt)||_p`: the L_p norm after zeroing the `k` largest-magnitude
/// coordinates.
pub fn tail(pt: &[f64], k: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    check_k(k, pt.len())?;
    let mut scratch = Vec::with_capacity(pt.len());
    Ok(root(tail_pow_with(pt.iter().copied(), k, p, &mut scratch), p))
}

/// Robust distance `||tail_k(a - b)||_p`.
pub fn robust_distance(a: &[f64], b: &[f64], params: NormParams) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    params.validate(a.len())?;
    let mut scratch = Vec::with_capacity(a.len());
    Ok(robust_distance_with(a, b, params, &mut scratch))
}

pub(crate) fn robust_distance_with(
    a: &[f64],
    b: &[f64],
    params: NormParams,
    scratch: &mut Vec<f64>,
) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| x - y);
    root(tail_pow_with(diff, params.k, params.p, scratch), params.p)
}

/// The k-robust nearest neighbor of `q` by exhaustive scan.
///
/// Ties go to the smallest dataset index. With `k >= d` every distance is 0
/// and index 0 is returned.
pub fn robust_nn_bruteforce(points: &Dataset, q: &[f64], params: NormParams) -> Result<(usize, f64)> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(points.dim(), q.len())?;
    params.validate(q.len())?;
    let mut scratch = Vec::with_capacity(q.len());
    let mut best = (0, f64::INFINITY);
    for (i, row) in points.rows().enumerate() {
        let dist = robust_distance_with(row, q, params, &mut scratch);
        if dist < best.1 {
            best = (i, dist);
        }
    }
    Ok(best)
}

/// Deletes the coordinates in `remove` (0-based), keeping survivor order.
pub fn remove_coords(pt: &[f64], remove: &[usize]) -> Result<Vec<f64>> {
    let mut drop = vec![false; pt.len()];
    for &i in remove {
        if i >= pt.len() {
            return Err(invalid(format!("coordinate {i} out of range for dimension {}", pt.len())));
        }
        drop[i] = true;
    }
    Ok(pt
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(&x, _)| x)
        .collect())
}

/// `(Σ min(|x_i|, psi)^p)^(1/p)`. `psi = +inf` disables truncation.
pub fn truncated_norm(pt: &[f64], psi: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if psi.is_nan() || psi < 0.0 {
        return Err(invalid(format!("psi must be >= 0, got {psi}")));
    }
    Ok(root(pt.iter().map(|&x| pow_abs(x.abs().min(psi), p)).sum(), p))
}

/// True iff the psi-truncated norm is at most `level`. A point exactly at the
/// level is both light and heavy.
pub fn is_light(pt: &[f64], lh: LightHeavyParams, p: f64) -> Result<bool> {
    Ok(truncated_norm(pt, lh.psi, p)? <= lh.level)
}

/// True iff the psi-truncated norm is at least `level`.
pub fn is_heavy(pt: &[f64], lh: LightHeavyParams, p: f64) -> Result<bool> {
    Ok(truncated_norm(pt, lh.psi, p)? >= lh.level)
}

/// Coordinate-wise `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted_tail(pt: &[f64], k: usize, p: f64) -> f64 {
        let mut a: Vec<f64> = pt.iter().map(|x| x.abs()).collect();
        a.sort_by(|x, y| y.partial_cmp(x).unwrap());
        root(a[k..].iter().map(|&v| pow_abs(v, p)).sum(), p)
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail(&[0.0; 6], 3, 1.0).unwrap(), 0.0);
        let pt = [3.0, -1.0, 5.0, 0.0, 2.0];
        assert_eq!(tail(&pt, 0, 1.0).unwrap(), 11.0);
        assert_eq!(tail(&pt, 2, 1.0).unwrap(), sorted_tail(&pt, 2, 1.0));
        assert_eq!(tail(&pt, 2, 1.0).unwrap(), 3.0);
        assert_eq!(tail(&pt, 5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn tail_rejects_bad_params() {
        assert!(matches!(tail(&[1.0, 2.0], 3, 1.0), Err(Error::InvalidParameter(_))));
        assert!(tail(&[1.0], 0, 0.0).is_err());
        assert!(tail(&[1.0], 0, -1.0).is_err());
    }

    #[test]
    fn bruteforce_examples() {
        let q = [1.0, 2.0, 3.0];
        let ds = Dataset::from_rows(&[q]).unwrap();
        assert_eq!(robust_nn_bruteforce(&ds, &q, NormParams::new(1.0, 0).unwrap()).unwrap(), (0, 0.0));

        let ds = Dataset::from_rows(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]).unwrap();
        let got = robust_nn_bruteforce(&ds, &[0.0; 3], NormParams::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(got, (0, 0.0));

        // k >= d: everything at distance 0, first index wins
        let ds = Dataset::from_rows(&[[5.0, 1.0], [0.0, 0.0]]).unwrap();
        let got = robust_nn_bruteforce(&ds, &[0.0; 2], NormParams::new(2.0, 2).unwrap()).unwrap();
        assert_eq!(got, (0, 0.0));
    }

    #[test]
    fn dataset_rejects_bad_input() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(Dataset::from_rows(&empty), Err(Error::EmptyDataset)));
        assert!(matches!(
            Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(Dataset::from_rows(&[[1.0, f64::NAN]]), Err(Error::NonFinite(1))));
        assert!(matches!(Point::new(vec![f64::INFINITY]), Err(Error::NonFinite(0))));
    }

    #[test]
    fn remove_coords_examples() {
        let pt = [1.0, 2.0, 3.0];
        assert_eq!(remove_coords(&pt, &[]).unwrap(), pt.to_vec());
        assert_eq!(remove_coords(&pt, &[1]).unwrap(), vec![1.0, 3.0]);
        assert!(remove_coords(&pt, &[0, 1, 2]).unwrap().is_empty());
        assert!(remove_coords(&pt, &[3]).is_err());
    }

    #[test]
    fn truncation_examples() {
        let pt = [5.0, 1.0, 2.0];
        assert_eq!(truncated_norm(&pt, f64::INFINITY, 1.0).unwrap(), 8.0);
        assert_eq!(truncated_norm(&pt, 2.0, 1.0).unwrap(), 5.0);
        assert_eq!(truncated_norm(&pt, 0.0, 2.0).unwrap(), 0.0);
        assert!(truncated_norm(&pt, -1.0, 1.0).is_err());

        assert!(is_light(&[0.0; 3], LightHeavyParams::new(1.0, 0.0).unwrap(), 1.0).unwrap());
        let lh = LightHeavyParams::new(2.0, 4.0).unwrap();
        assert!(!is_light(&pt, lh, 1.0).unwrap());
        let boundary = LightHeavyParams::new(2.0, 5.0).unwrap();
        assert!(is_light(&pt, boundary, 1.0).unwrap());
        assert!(is_heavy(&pt, boundary, 1.0).unwrap());
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..40)
    }

    proptest! {
        #[test]
        fn tail_matches_sort(pt in vec_strategy(), k_frac in 0.0f64..=1.0, p in prop::sample::select(vec![1.0, 2.0, 1.5])) {
            let k = ((pt.len() as f64) * k_frac) as usize;
            let got = tail(&pt, k, p).unwrap();
            let want = sorted_tail(&pt, k, p);
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want));
        }

        #[test]
        fn tail_monotone_in_k(pt in vec_strategy(), p in prop::sample::select(vec![1.0, 2.0])) {
            let d = pt.len();
            prop_assert!((tail(&pt, 0, p).unwrap() - norm(&pt, p)).abs() < 1e-9);
            prop_assert_eq!(tail(&pt, d, p).unwrap(), 0.0);
            for k in 1..=d {
                prop_assert!(tail(&pt, k, p).unwrap() <= tail(&pt, k - 1, p).unwrap() + 1e-12);
            }
        }

        #[test]
        fn truncation_monotone_in_psi(pt in vec_strategy(), a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(truncated_norm(&pt, lo, 1.0).unwrap() <= truncated_norm(&pt, hi, 1.0).unwrap() + 1e-12);
            let max = pt.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!((truncated_norm(&pt, max, 2.0).unwrap() - norm(&pt, 2.0)).abs() < 1e-9);
        }

        // light at (r / k^(1/p), r) implies a k-tail of at most r
        #[test]
        fn light_implies_small_tail(pt in vec_strategy(), r in 0.1f64..500.0, k_frac in 0.0f64..1.0, p in prop::sample::select(vec![1.0, 2.0])) {
            let k = 1 + ((pt.len() - 1) as f64 * k_frac) as usize;
            let lh = LightHeavyParams::new(r / (k as f64).powf(1.0 / p), r).unwrap();
            if is_light(&pt, lh, p).unwrap() {
                prop_assert!(tail(&pt, k, p).unwrap() <= r * (1.0 + 1e-12));
            }
        }
    }
}
