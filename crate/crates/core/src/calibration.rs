//! Sequence-length estimation from a traverse's self-distance profile.
//!
//! For each frame offset `d`, the profile holds the median cosine distance
//! between frames `t` and `t + d` over the whole traverse. The first offset
//! at which it reaches a threshold (0.7 by default) is a lower bound on the
//! span needed for the observed place to have changed enough.

use rayon::prelude::*;

use crate::matching::cosine_distance;
use crate::series::DescriptorSeries;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Largest offset used when none is given: `T / 4`, capped at 512, at least 1.
pub fn default_max_offset(frames: usize) -> usize {
    (frames / 4).clamp(1, 512)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfDistanceProfile {
    /// `median_distance[i]` belongs to offset `i + 1`.
    median_distance: Vec<f64>,
}

impl SelfDistanceProfile {
    pub fn from_medians(median_distance: Vec<f64>) -> Self {
        Self { median_distance }
    }

    pub fn offsets(&self) -> impl Iterator<Item = usize> {
        1..=self.median_distance.len()
    }

    pub fn median_distance(&self) -> &[f64] {
        &self.median_distance
    }

    pub fn at(&self, offset: usize) -> Option<f64> {
        offset.checked_sub(1).and_then(|i| self.median_distance.get(i).copied())
    }

    pub fn len(&self) -> usize {
        self.median_distance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median_distance.is_empty()
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn self_distance_profile(series: &DescriptorSeries, max_offset: usize) -> Result<SelfDistanceProfile> {
    let t = series.frame_count();
    if max_offset == 0 || max_offset >= t {
        return Err(Error::InvalidParameter(format!(
            "max offset must be in 1..{t}, got {max_offset}"
        )));
    }
    let medians = (1..=max_offset)
        .into_par_iter()
        .map(|d| {
            let mut dists: Vec<f64> = (0..t - d)
                .map(|i| cosine_distance(series.row(i), series.row(i + d)).expect("same series"))
                .collect();
            median(&mut dists)
        })
        .collect();
    Ok(SelfDistanceProfile {
        median_distance: medians,
    })
}

/// Smallest offset whose median distance reaches `threshold`.
pub fn estimate_span(profile: &SelfDistanceProfile, threshold: f64) -> Result<usize> {
    if profile.is_empty() {
        return Err(Error::InvalidParameter("empty profile".into()));
    }
    if !(threshold > 0.0 && threshold < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be in (0, 2), got {threshold}"
        )));
    }
    profile
        .median_distance
        .iter()
        .position(|&m| m >= threshold)
        .map(|i| i + 1)
        .ok_or(Error::ThresholdNotReached { threshold })
}

/// Span to use given an estimated lower bound and a safety multiplier,
/// rounded up and at least 1.
pub fn scaled_span(lower_bound: usize, multiplier: f64) -> Result<usize> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "multiplier must be positive, got {multiplier}"
        )));
    }
    Ok(((lower_bound as f64 * multiplier).ceil() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_series_profile_zero_and_errors() {
        let s = DescriptorSeries::new(Array2::from_elem((20, 3), 1.5)).unwrap();
        let p = self_distance_profile(&s, 5).unwrap();
        assert!(p.median_distance().iter().all(|&m| m.abs() < 1e-12));
        assert!(matches!(
            estimate_span(&p, DEFAULT_THRESHOLD),
            Err(Error::ThresholdNotReached { .. })
        ));
    }

    #[test]
    fn alternating_one_hot() {
        let s = DescriptorSeries::new(Array2::from_shape_fn((12, 2), |(i, j)| if i % 2 == j { 1.0 } else { 0.0 })).unwrap();
        let p = self_distance_profile(&s, 6).unwrap();
        for (d, m) in p.offsets().zip(p.median_distance()) {
            assert_eq!(*m, if d % 2 == 1 { 1.0 } else { 0.0 });
        }
        assert_eq!(estimate_span(&p, 0.7).unwrap(), 1);
    }

    #[test]
    fn brute_force_median_of_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = DescriptorSeries::new(Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0))).unwrap();
        let p = self_distance_profile(&s, 3).unwrap();
        // 7 pairs at offset 3; median is the 4th smallest
        let mut pairs: Vec<f64> = (0..7)
            .map(|i| {
                let (a, b) = (s.row(i), s.row(i + 3));
                1.0 - a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
            })
            .collect();
        pairs.sort_by(f64::total_cmp);
        assert!((p.at(3).unwrap() - pairs[3]).abs() < 1e-12);
    }

    #[test]
    fn constructed_crossing_at_five() {
        // rotate a unit vector in a plane by a fixed angle per frame so the
        // distance at offset d is exactly 1 - cos(d * step)
        let step = 0.27f64;
        let s = DescriptorSeries::new(Array2::from_shape_fn((60, 2), |(i, j)| {
            let a = i as f64 * step;
            if j == 0 { a.cos() } else { a.sin() }
        }))
        .unwrap();
        let p = self_distance_profile(&s, 10).unwrap();
        // 1 - cos(4 * 0.27) = 0.528..., 1 - cos(5 * 0.27) = 0.781...
        assert!(p.at(4).unwrap() < 0.7 && p.at(5).unwrap() >= 0.7);
        assert_eq!(estimate_span(&p, 0.7).unwrap(), 5);
    }

    #[test]
    fn parameter_errors() {
        let s = DescriptorSeries::new(Array2::from_elem((5, 1), 1.0)).unwrap();
        assert!(self_distance_profile(&s, 5).is_err());
        assert!(self_distance_profile(&s, 0).is_err());
        let p = SelfDistanceProfile::from_medians(vec![0.1, 0.9]);
        assert!(estimate_span(&p, 0.0).is_err());
        assert!(estimate_span(&p, 2.0).is_err());
        assert!(estimate_span(&SelfDistanceProfile::from_medians(vec![]), 0.5).is_err());
        assert_eq!(estimate_span(&p, 0.9).unwrap(), 2);
    }

    #[test]
    fn span_helpers() {
        assert_eq!(default_max_offset(10), 2);
        assert_eq!(default_max_offset(3), 1);
        assert_eq!(default_max_offset(100_000), 512);
        assert_eq!(scaled_span(38, 1.0).unwrap(), 38);
        assert_eq!(scaled_span(38, 1.5).unwrap(), 57);
        assert!(scaled_span(3, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(m in proptest::collection::vec(0.0f64..2.0, 1..20), a in 0.01f64..1.99, b in 0.01f64..1.99) {
            let p = SelfDistanceProfile::from_medians(m);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if let Ok(s_hi) = estimate_span(&p, hi) {
                prop_assert!(estimate_span(&p, lo).unwrap() <= s_hi);
            }
        }

        #[test]
        fn raw_profile_scale_invariant(seed in 0u64..50, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((15, 3), |_| rng.random_range(0.1..1.0));
            let a = self_distance_profile(&DescriptorSeries::new(x.clone()).unwrap(), 5).unwrap();
            let b = self_distance_profile(&DescriptorSeries::new(x * scale).unwrap(), 5).unwrap();
            for (p, q) in a.median_distance().iter().zip(b.median_distance()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
