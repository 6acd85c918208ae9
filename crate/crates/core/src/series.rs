//! Descriptor series and ground truth containers.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Rows with a norm below this are treated as zero vectors.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// An ordered stream of `T` descriptors of dimension `D`, one row per frame.
///
/// `valid_range` is a half-open frame range `[start, end)` of rows that are
/// not influenced by boundary padding. Transforms set it; evaluation may use
/// it to exclude edge frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSeries {
    data: Array2<f64>,
    positions: Option<Array2<f64>>,
    valid_range: Option<(usize, usize)>,
}

impl DescriptorSeries {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (t, d) = data.dim();
        if t == 0 || d == 0 {
            return Err(Error::InvalidSeries(format!(
                "series must have at least one frame and one dimension, got {t}x{d}"
            )));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            data,
            positions: None,
            valid_range: None,
        })
    }

    /// Builds a series from row vectors. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidSeries(format!(
                "row {i} has {} values, expected {d}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((t, d), flat)
            .map_err(|e| Error::InvalidSeries(e.to_string()))?;
        Self::new(data)
    }

    pub fn with_positions(mut self, positions: Array2<f64>) -> Result<Self> {
        if positions.nrows() != self.frame_count() || positions.ncols() != 2 {
            return Err(Error::InvalidSeries(format!(
                "positions must be {}x2, got {}x{}",
                self.frame_count(),
                positions.nrows(),
                positions.ncols()
            )));
        }
        if let Some(((row, col), _)) = positions.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn with_valid_range(mut self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.frame_count() {
            return Err(Error::InvalidSeries(format!(
                "valid range [{start}, {end}) outside 0..={}",
                self.frame_count()
            )));
        }
        self.valid_range = Some((start, end));
        Ok(self)
    }

    /// Replaces the descriptor values, keeping positions and valid range.
    /// The frame count must not change.
    pub(crate) fn map_data(&self, data: Array2<f64>) -> Result<Self> {
        debug_assert_eq!(data.nrows(), self.frame_count());
        let mut out = Self::new(data)?;
        out.positions = self.positions.clone();
        out.valid_range = self.valid_range;
        Ok(out)
    }

    pub(crate) fn set_valid_range(&mut self, range: Option<(usize, usize)>) {
        self.valid_range = range;
    }

    pub fn frame_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.data.row(t)
    }

    pub fn positions(&self) -> Option<ArrayView2<'_, f64>> {
        self.positions.as_ref().map(|p| p.view())
    }

    pub fn valid_range(&self) -> Option<(usize, usize)> {
        self.valid_range
    }

    /// Stacks several series with equal dimension along the time axis.
    /// Positions and valid ranges are dropped.
    pub fn concat(parts: &[&DescriptorSeries]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidSeries("nothing to concatenate".into()))?;
        for p in parts {
            if p.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    actual: p.dim(),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::InvalidSeries(e.to_string()))?;
        Self::new(data)
    }
}

/// How the localization radius is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    Frames,
    Meters,
}

impl std::fmt::Display for RadiusMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RadiusMode::Frames => "frames",
            RadiusMode::Meters => "meters",
        })
    }
}

impl std::str::FromStr for RadiusMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frames" => Ok(RadiusMode::Frames),
            "meters" => Ok(RadiusMode::Meters),
            other => Err(Error::Config(format!("unknown radius mode {other:?}"))),
        }
    }
}

/// True reference frame for every query frame, plus the tolerance within
/// which a retrieved match counts as correct.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pairs: Vec<usize>,
    radius_mode: RadiusMode,
    radius: f64,
}

impl GroundTruth {
    pub fn new(
        pairs: Vec<usize>,
        ref_count: usize,
        radius_mode: RadiusMode,
        radius: f64,
    ) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGroundTruth(format!(
                "radius must be finite and non-negative, got {radius}"
            )));
        }
        if let Some((q, &r)) = pairs.iter().enumerate().find(|(_, &r)| r >= ref_count) {
            return Err(Error::InvalidGroundTruth(format!(
                "query {q} maps to reference {r}, but only {ref_count} reference frames exist"
            )));
        }
        Ok(Self {
            pairs,
            radius_mode,
            radius,
        })
    }

    /// Query `i` corresponds to reference `i`.
    pub fn identity(frames: usize, radius_mode: RadiusMode, radius: f64) -> Result<Self> {
        Self::new((0..frames).collect(), frames, radius_mode, radius)
    }

    pub fn pairs(&self) -> &[usize] {
        &self.pairs
    }

    pub fn query_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn radius_mode(&self) -> RadiusMode {
        self.radius_mode
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same pairs, different tolerance.
    pub fn with_radius(&self, radius_mode: RadiusMode, radius: f64) -> Result<Self> {
        let max = self.pairs.iter().max().map_or(0, |m| m + 1);
        Self::new(self.pairs.clone(), max, radius_mode, radius)
    }
}

/// Scales every row to unit Euclidean norm. Rows with (near) zero norm are
/// returned unchanged.
pub fn l2_normalize(series: &DescriptorSeries) -> DescriptorSeries {
    let mut data = series.data.clone();
    for mut row in data.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm >= ZERO_NORM_EPS {
            row.mapv_inplace(|v| v / norm);
        }
    }
    DescriptorSeries {
        data,
        positions: series.positions.clone(),
        valid_range: series.valid_range,
    }
}

/// Seeded random permutation of `0..n`. Output row `i` of a permuted series
/// is input row `perm[i]`.
pub fn permutation_from_seed(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Inverse of a permutation: `inv[perm[i]] == i`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

fn permute_rows(series: &DescriptorSeries, perm: &[usize]) -> DescriptorSeries {
    DescriptorSeries {
        data: series.data.select(Axis(0), perm),
        positions: series.positions.as_ref().map(|p| p.select(Axis(0), perm)),
        valid_range: None,
    }
}

/// Shuffles reference and query with the same permutation so that the
/// cross-traverse correspondence survives while within-traverse adjacency
/// is destroyed.
pub fn apply_permutation_with(
    reference: &DescriptorSeries,
    query: &DescriptorSeries,
    gt: &GroundTruth,
    perm: &[usize],
) -> Result<(DescriptorSeries, DescriptorSeries, GroundTruth)> {
    let n = reference.frame_count();
    if query.frame_count() != n {
        return Err(Error::LengthMismatch(format!(
            "reference has {n} frames, query has {}",
            query.frame_count()
        )));
    }
    if gt.query_count() != n {
        return Err(Error::LengthMismatch(format!(
            "ground truth covers {} queries, series have {n} frames",
            gt.query_count()
        )));
    }
    if perm.len() != n || !is_permutation(perm) {
        return Err(Error::InvalidParameter(format!(
            "not a permutation of 0..{n}"
        )));
    }
    let inv = invert_permutation(perm);
    let pairs = perm.iter().map(|&old_q| inv[gt.pairs[old_q]]).collect();
    let gt = GroundTruth::new(pairs, n, gt.radius_mode, gt.radius)?;
    Ok((permute_rows(reference, perm), permute_rows(query, perm), gt))
}

/// [`apply_permutation_with`] using [`permutation_from_seed`].
pub fn apply_permutation(
    reference: &DescriptorSeries,
    query: &DescriptorSeries,
    gt: &GroundTruth,
    seed: u64,
) -> Result<(DescriptorSeries, DescriptorSeries, GroundTruth)> {
    let perm = permutation_from_seed(reference.frame_count(), seed);
    apply_permutation_with(reference, query, gt, &perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn series(rows: &[Vec<f64>]) -> DescriptorSeries {
        DescriptorSeries::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(DescriptorSeries::new(Array2::zeros((0, 3))).is_err());
        assert!(DescriptorSeries::new(Array2::zeros((3, 0))).is_err());
        let err = DescriptorSeries::new(array![[1.0, 2.0], [f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn positions_and_range_validated() {
        let s = series(&[vec![1.0], vec![2.0]]);
        assert!(s.clone().with_positions(Array2::zeros((3, 2))).is_err());
        assert!(s.clone().with_positions(Array2::zeros((2, 2))).is_ok());
        assert!(s.clone().with_valid_range(1, 3).is_err());
        assert!(s.with_valid_range(0, 2).is_ok());
    }

    #[test]
    fn normalize_examples() {
        let s = series(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
        let n = l2_normalize(&s);
        assert_eq!(n.row(0).to_vec(), vec![0.6, 0.8]);
        assert_eq!(n.row(1).to_vec(), vec![0.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n.row(2)[0] - h).abs() < 1e-15 && (n.row(2)[1] - h).abs() < 1e-15);
    }

    #[test]
    fn permutation_hand_trace() {
        let r = series(&[vec![0.0], vec![1.0], vec![2.0]]);
        let q = series(&[vec![10.0], vec![11.0], vec![12.0]]);
        let gt = GroundTruth::identity(3, RadiusMode::Frames, 0.0).unwrap();
        let (r2, q2, gt2) = apply_permutation_with(&r, &q, &gt, &[2, 0, 1]).unwrap();
        // old frame 0 now sits at index 1 in both traverses
        assert_eq!(gt2.pairs()[1], 1);
        assert_eq!(r2.row(1)[0], 0.0);
        assert_eq!(q2.row(1)[0], 10.0);
        assert_eq!(r2.data().column(0).to_vec(), vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_permutation_is_noop() {
        let r = series(&[vec![0.0], vec![1.0], vec![2.0]]);
        let q = series(&[vec![5.0], vec![6.0], vec![7.0]]);
        let gt = GroundTruth::new(vec![1, 0, 2], 3, RadiusMode::Frames, 1.0).unwrap();
        let (r2, q2, gt2) = apply_permutation_with(&r, &q, &gt, &[0, 1, 2]).unwrap();
        assert_eq!((r2, q2, gt2), (r, q, gt));
    }

    #[test]
    fn permutation_errors() {
        let r = series(&[vec![0.0], vec![1.0]]);
        let q = series(&[vec![0.0]]);
        let gt = GroundTruth::identity(1, RadiusMode::Frames, 0.0).unwrap();
        assert!(matches!(
            apply_permutation(&r, &q, &gt, 1),
            Err(Error::LengthMismatch(_))
        ));
        let gt2 = GroundTruth::identity(2, RadiusMode::Frames, 0.0).unwrap();
        assert!(apply_permutation_with(&r, &r, &gt2, &[0, 0]).is_err());
    }

    #[test]
    fn ground_truth_range_checked() {
        assert!(GroundTruth::new(vec![0, 3], 3, RadiusMode::Frames, 1.0).is_err());
        assert!(GroundTruth::new(vec![0, 2], 3, RadiusMode::Frames, -1.0).is_err());
    }

    fn arb_series() -> impl Strategy<Value = DescriptorSeries> {
        (1usize..12, 1usize..6).prop_flat_map(|(t, d)| {
            proptest::collection::vec(-10.0f64..10.0, t * d)
                .prop_map(move |v| DescriptorSeries::new(Array2::from_shape_vec((t, d), v).unwrap()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in arb_series()) {
            let once = l2_normalize(&s);
            let twice = l2_normalize(&once);
            for (a, b) in once.data().iter().zip(twice.data().iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_matches_half_squared_euclidean(s in arb_series()) {
            let n = l2_normalize(&s);
            for i in 0..s.frame_count() {
                for j in 0..s.frame_count() {
                    let (a, b) = (s.row(i), s.row(j));
                    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
                    if na < 1e-6 || nb < 1e-6 { continue; }
                    let cos = 1.0 - a.dot(&b) / (na * nb);
                    let diff = &n.row(i) - &n.row(j);
                    prop_assert!((cos - 0.5 * diff.dot(&diff)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn permutation_preserves_rows_and_inverts(t in 1usize..20, seed in any::<u64>()) {
            let r = DescriptorSeries::new(Array2::from_shape_fn((t, 2), |(i, j)| (i * 2 + j) as f64)).unwrap();
            let q = DescriptorSeries::new(Array2::from_shape_fn((t, 2), |(i, j)| -((i * 2 + j) as f64))).unwrap();
            let gt = GroundTruth::identity(t, RadiusMode::Frames, 0.0).unwrap();
            let (r2, q2, gt2) = apply_permutation(&r, &q, &gt, seed).unwrap();
            let mut a: Vec<f64> = r2.data().iter().copied().collect();
            a.sort_by(f64::total_cmp);
            let mut b: Vec<f64> = r.data().iter().copied().collect();
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            let inv = invert_permutation(&permutation_from_seed(t, seed));
            let (r3, q3, gt3) = apply_permutation_with(&r2, &q2, &gt2, &inv).unwrap();
            prop_assert_eq!(r3.data(), r.data());
            prop_assert_eq!(q3.data(), q.data());
            prop_assert_eq!(&gt3, &gt);
            // cross-traverse correspondence preserved
            for (qi, &ri) in gt2.pairs().iter().enumerate() {
                prop_assert_eq!(q2.row(qi)[0], -r2.row(ri)[0]);
            }
            prop_assert_eq!(apply_permutation(&r, &q, &gt, seed).unwrap().0, r2);
        }
    }
}
