//! Precision-recall evaluation against ground truth, and the dimension
//! ranking diagnostic.
//!
//! Every query has a true match, so recall is `correct retrieved / Q`. A
//! query is retrieved at threshold `th` when its best-match distance is
//! `<= th`. Thresholds sweep the observed best-match distances, preceded by
//! a point at `-inf` where nothing is retrieved (precision 1, recall 0).

use ndarray::ArrayView2;

use crate::calibration::median;
use crate::matching::MatchSet;
use crate::series::{DescriptorSeries, GroundTruth, RadiusMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        let s = self.precision + self.recall;
        if s == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    points: Vec<PrPoint>,
    radius: f64,
    radius_mode: RadiusMode,
}

impl PrCurve {
    /// Builds a curve from precomputed points, ordered by threshold.
    pub fn from_points(points: Vec<PrPoint>, radius_mode: RadiusMode, radius: f64) -> Self {
        Self {
            points,
            radius,
            radius_mode,
        }
    }

    pub fn points(&self) -> &[PrPoint] {
        &self.points
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn radius_mode(&self) -> RadiusMode {
        self.radius_mode
    }

    pub fn precision_at_full_recall(&self) -> f64 {
        precision_at_full_recall(self)
    }

    pub fn max_f1(&self) -> f64 {
        max_f1(self)
    }
}

/// Whether each query's best match lies within the localization radius of
/// its true reference frame.
///
/// In meters mode the distance is measured between the positions of the
/// matched reference frame and the true reference frame.
pub fn correctness(
    matches: &MatchSet,
    gt: &GroundTruth,
    ref_positions: Option<ArrayView2<'_, f64>>,
) -> Result<Vec<bool>> {
    if matches.len() != gt.query_count() {
        return Err(Error::LengthMismatch(format!(
            "{} matches but ground truth covers {} queries",
            matches.len(),
            gt.query_count()
        )));
    }
    let radius = gt.radius();
    match gt.radius_mode() {
        RadiusMode::Frames => Ok(matches
            .iter()
            .zip(gt.pairs())
            .map(|(m, &t)| (m.ref_index.abs_diff(t) as f64) <= radius)
            .collect()),
        RadiusMode::Meters => {
            let pos = ref_positions.ok_or(Error::MissingPositions)?;
            matches
                .iter()
                .zip(gt.pairs())
                .map(|(m, &t)| {
                    if m.ref_index >= pos.nrows() || t >= pos.nrows() {
                        return Err(Error::LengthMismatch(format!(
                            "reference index {} outside {} positions",
                            m.ref_index.max(t),
                            pos.nrows()
                        )));
                    }
                    let dx = pos[(m.ref_index, 0)] - pos[(t, 0)];
                    let dy = pos[(m.ref_index, 1)] - pos[(t, 1)];
                    Ok(dx.hypot(dy) <= radius)
                })
                .collect()
        }
    }
}

pub fn evaluate_pr(
    matches: &MatchSet,
    gt: &GroundTruth,
    ref_positions: Option<ArrayView2<'_, f64>>,
) -> Result<PrCurve> {
    let correct = correctness(matches, gt, ref_positions)?;
    Ok(curve_from_scores(
        matches.iter().map(|m| m.distance).zip(correct),
        gt.radius_mode(),
        gt.radius(),
    ))
}

fn curve_from_scores(
    scored: impl Iterator<Item = (f64, bool)>,
    radius_mode: RadiusMode,
    radius: f64,
) -> PrCurve {
    let mut scored: Vec<(f64, bool)> = scored.collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q = scored.len() as f64;

    let mut points = vec![PrPoint {
        threshold: f64::NEG_INFINITY,
        precision: 1.0,
        recall: 0.0,
    }];
    let (mut retrieved, mut hits) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let th = scored[i].0;
        while i < scored.len() && scored[i].0 == th {
            retrieved += 1;
            hits += usize::from(scored[i].1);
            i += 1;
        }
        points.push(PrPoint {
            threshold: th,
            precision: hits as f64 / retrieved as f64,
            recall: hits as f64 / q,
        });
    }
    PrCurve {
        points,
        radius,
        radius_mode,
    }
}

/// Precision once every query is retrieved (the largest threshold).
pub fn precision_at_full_recall(curve: &PrCurve) -> f64 {
    curve.points.last().map_or(1.0, |p| p.precision)
}

pub fn max_f1(curve: &PrCurve) -> f64 {
    curve.points.iter().map(PrPoint::f1).fold(0.0, f64::max)
}

/// Ranks descriptor dimensions by how strongly they agree across known
/// matching pairs.
///
/// For each ground-truth pair the element-wise product of the two rows is
/// taken; dimensions are sorted by the median product across pairs,
/// descending, ties to the lower index. Returns the first `top_k`.
pub fn rank_dimensions(
    reference: &DescriptorSeries,
    query: &DescriptorSeries,
    gt: &GroundTruth,
    top_k: usize,
) -> Result<Vec<usize>> {
    let d = reference.dim();
    if query.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: query.dim(),
        });
    }
    if top_k == 0 || top_k > d {
        return Err(Error::InvalidParameter(format!(
            "top_k must be in 1..={d}, got {top_k}"
        )));
    }
    if gt.query_count() != query.frame_count() {
        return Err(Error::LengthMismatch(format!(
            "ground truth covers {} queries, query has {} frames",
            gt.query_count(),
            query.frame_count()
        )));
    }
    if let Some(&r) = gt.pairs().iter().find(|&&r| r >= reference.frame_count()) {
        return Err(Error::InvalidGroundTruth(format!(
            "reference index {r} outside {} frames",
            reference.frame_count()
        )));
    }
    let mut scores = Vec::with_capacity(d);
    let mut column = Vec::with_capacity(gt.query_count());
    for dim in 0..d {
        column.clear();
        column.extend(
            gt.pairs()
                .iter()
                .enumerate()
                .map(|(q, &r)| query.row(q)[dim] * reference.row(r)[dim]),
        );
        scores.push(median(&mut column));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    Ok(order)
}
