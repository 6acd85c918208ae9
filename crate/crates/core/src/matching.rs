//! Cosine distance matrices, straight-line sequence aggregation and
//! best-match retrieval.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::series::{DescriptorSeries, ZERO_NORM_EPS};
use crate::transform::DeltaBank;
use crate::{Error, Result};

/// Distance assigned when either vector has zero norm.
pub const ZERO_VECTOR_DISTANCE: f64 = 1.0;

/// `1 - cos(a, b)`, clamped to `[0, 2]`. Returns [`ZERO_VECTOR_DISTANCE`]
/// if either vector is (numerically) zero.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    Ok(cosine_with_norms(a, b, na, nb))
}

#[inline]
fn cosine_with_norms(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, na: f64, nb: f64) -> f64 {
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return ZERO_VECTOR_DISTANCE;
    }
    (1.0 - a.dot(&b) / (na * nb)).clamp(0.0, 2.0)
}

/// `Q x R` matrix of distances between query frames (rows) and reference
/// frames (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("distance matrix must be non-empty".into()));
        }
        if let Some(((row, col), _)) = values
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && (0.0..=2.0).contains(*v)))
        {
            return Err(Error::InvalidParameter(format!(
                "distance at ({row}, {col}) = {} outside [0, 2]",
                values[(row, col)]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn query_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn ref_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, q: usize, r: usize) -> f64 {
        self.values[(q, r)]
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Cosine distance between every query row and every reference row.
pub fn distance_matrix(query: &DescriptorSeries, reference: &DescriptorSeries) -> Result<DistanceMatrix> {
    if query.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            actual: query.dim(),
        });
    }
    let (qd, rd) = (query.data(), reference.data());
    let ref_norms: Vec<f64> = rd.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let r_count = reference.frame_count();

    let mut values = vec![0.0; query.frame_count() * r_count];
    values
        .par_chunks_mut(r_count)
        .enumerate()
        .for_each(|(qi, out)| {
            let a = qd.row(qi);
            let na = a.dot(&a).sqrt();
            for (ri, o) in out.iter_mut().enumerate() {
                *o = cosine_with_norms(a, rd.row(ri), na, ref_norms[ri]);
            }
        });
    let values = Array2::from_shape_vec((query.frame_count(), r_count), values)
        .expect("shape matches buffer");
    Ok(DistanceMatrix { values })
}

/// Averages each cell with its neighbours along the main diagonal direction
/// (constant velocity, no velocity search).
///
/// Cell `(q, r)` becomes the mean of `m[q+k][r+k]` for
/// `k in [-floor(L/2), ceil(L/2) - 1]`, over in-bounds cells only.
pub fn seq_match(m: &DistanceMatrix, length: usize) -> Result<DistanceMatrix> {
    if length == 0 {
        return Err(Error::InvalidParameter("sequence length must be >= 1".into()));
    }
    if length == 1 {
        return Ok(m.clone());
    }
    let (qn, rn) = m.values.dim();
    let lo = -((length / 2) as isize);
    let hi = length.div_ceil(2) as isize - 1;
    let v = m.values.view();

    let mut out = vec![0.0; qn * rn];
    out.par_chunks_mut(rn).enumerate().for_each(|(q, row)| {
        for (r, o) in row.iter_mut().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for k in lo..=hi {
                let (qq, rr) = (q as isize + k, r as isize + k);
                if qq >= 0 && rr >= 0 && (qq as usize) < qn && (rr as usize) < rn {
                    sum += v[(qq as usize, rr as usize)];
                    n += 1;
                }
            }
            // k = 0 is always in range, so n >= 1
            *o = sum / n as f64;
        }
    });
    DistanceMatrix::new(Array2::from_shape_vec((qn, rn), out).expect("shape matches buffer"))
}

/// Per cell, the minimum distance over every (query span, reference span)
/// combination of the two banks.
pub fn multi_delta_distance(query_bank: &DeltaBank, ref_bank: &DeltaBank) -> Result<DistanceMatrix> {
    if query_bank.is_empty() || ref_bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let mut best: Option<Array2<f64>> = None;
    for (_, q) in query_bank.members() {
        for (_, r) in ref_bank.members() {
            let d = distance_matrix(q, r)?.into_values();
            best = Some(match best {
                None => d,
                Some(mut b) => {
                    b.zip_mut_with(&d, |x, &y| *x = x.min(y));
                    b
                }
            });
        }
    }
    DistanceMatrix::new(best.expect("banks are non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub ref_index: usize,
    pub distance: f64,
}

/// Best reference match for every query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    matches: Vec<Match>,
}

impl MatchSet {
    pub fn new(matches: Vec<Match>) -> Self {
        Self { matches }
    }

    pub fn as_slice(&self) -> &[Match] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }
}

/// Row-wise argmin. Ties go to the smallest reference index.
pub fn retrieve_best(m: &DistanceMatrix) -> MatchSet {
    let matches = m
        .values
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = Match {
                ref_index: 0,
                distance: row[0],
            };
            for (i, &d) in row.iter().enumerate().skip(1) {
                if d < best.distance {
                    best = Match {
                        ref_index: i,
                        distance: d,
                    };
                }
            }
            best
        })
        .collect();
    MatchSet { matches }
}
