//! Smoothed and delta descriptors.
//!
//! A delta descriptor at frame `t` with span `l` is the mean of the `l`
//! frames after `t` minus the mean of the `l` frames ending at `t`:
//!
//! ```text
//! delta_t = (1/l) * (sum_{k=1..l} X_{t+k} - sum_{k=0..l-1} X_{t-k})
//! ```
//!
//! It is computed as a sliding dot product along time with the `2l`-tap
//! step filter returned by [`delta_filter`]. Any per-traverse constant
//! offset in the input cancels exactly.

use ndarray::Array2;

use crate::series::DescriptorSeries;
use crate::{Error, Result};

/// Boundary handling for [`delta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Repeat the first/last frame; output has the input's length.
    #[default]
    EdgeReplicate,
    /// Only frames whose full window lies inside the series; output has
    /// `T - 2l + 1` frames.
    ValidOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaConfig {
    window: usize,
    padding: Padding,
    spans: Vec<usize>,
}

impl DeltaConfig {
    /// Edge-replicate config with a single span `window`.
    pub fn new(window: usize) -> Self {
        Self {
            window,
            padding: Padding::EdgeReplicate,
            spans: Vec::new(),
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    /// Span set for [`delta_bank`]. Spans are sorted; zeros and duplicates
    /// are rejected.
    pub fn with_spans(mut self, spans: &[usize]) -> Result<Self> {
        let mut spans = spans.to_vec();
        spans.sort_unstable();
        if spans.first() == Some(&0) {
            return Err(Error::InvalidParameter("spans must be positive".into()));
        }
        if spans.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "spans must be distinct, got {spans:?}"
            )));
        }
        self.spans = spans;
        Ok(self)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn spans(&self) -> &[usize] {
        &self.spans
    }
}

/// Delta series for several spans, aligned frame-for-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBank {
    members: Vec<(usize, DescriptorSeries)>,
}

impl DeltaBank {
    pub fn new(members: Vec<(usize, DescriptorSeries)>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyBank)?;
        let (t, d) = (first.1.frame_count(), first.1.dim());
        for (span, s) in &members {
            if s.frame_count() != t || s.dim() != d {
                return Err(Error::InvalidParameter(format!(
                    "bank member for span {span} is {}x{}, expected {t}x{d}",
                    s.frame_count(),
                    s.dim()
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[(usize, DescriptorSeries)] {
        &self.members
    }

    pub fn spans(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|(s, _)| *s)
    }

    pub fn get(&self, span: usize) -> Option<&DescriptorSeries> {
        self.members.iter().find(|(s, _)| *s == span).map(|(_, m)| m)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.members[0].1.frame_count()
    }

    pub fn dim(&self) -> usize {
        self.members[0].1.dim()
    }

    /// Applies `f` to every member, keeping span tags.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&DescriptorSeries) -> Result<DescriptorSeries>,
    {
        let members = self
            .members
            .iter()
            .map(|(span, s)| Ok((*span, f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

/// The `2l`-tap filter: `-1/l` on the first half, `+1/l` on the second.
pub fn delta_filter(span: usize) -> Vec<f64> {
    let w = 1.0 / span as f64;
    (0..2 * span).map(|i| if i < span { -w } else { w }).collect()
}

/// Centered moving average over `[t - floor(l/2), t + ceil(l/2)]`, divided by
/// the number of in-range samples.
///
/// The output has the input's length; frames whose window is clipped by a
/// boundary fall outside the returned series' valid range.
pub fn smooth(series: &DescriptorSeries, window: usize) -> Result<DescriptorSeries> {
    let t = series.frame_count();
    if window == 0 {
        return Err(Error::InvalidParameter("window must be >= 1".into()));
    }
    if window > t {
        return Err(Error::WindowExceedsSeries { window, frames: t });
    }
    let before = window / 2;
    let after = window.div_ceil(2);
    let x = series.data();
    let d = series.dim();

    // prefix[i] = sum of rows 0..i
    let mut prefix = Array2::<f64>::zeros((t + 1, d));
    for i in 0..t {
        let next = &prefix.row(i) + &x.row(i);
        prefix.row_mut(i + 1).assign(&next);
    }
    let mut out = Array2::<f64>::zeros((t, d));
    for i in 0..t {
        let lo = i.saturating_sub(before);
        let hi = (i + after).min(t - 1);
        let n = (hi - lo + 1) as f64;
        let mean = (&prefix.row(hi + 1) - &prefix.row(lo)) / n;
        out.row_mut(i).assign(&mean);
    }
    let mut s = series.map_data(out)?;
    let end = t.saturating_sub(after).max(before.min(t));
    s.set_valid_range(Some((before.min(t), end)));
    Ok(s)
}

/// Delta descriptors for a single span (`cfg.window()`), see module docs.
pub fn delta(series: &DescriptorSeries, cfg: &DeltaConfig) -> Result<DescriptorSeries> {
    let span = cfg.window;
    if span == 0 {
        return Err(Error::InvalidParameter("span must be >= 1".into()));
    }
    let t = series.frame_count();
    let filter = delta_filter(span);
    let x = series.data();

    match cfg.padding {
        Padding::ValidOnly => {
            if t < 2 * span {
                return Err(Error::SeriesTooShort {
                    span,
                    needed: 2 * span,
                    frames: t,
                });
            }
            let n = t - 2 * span + 1;
            let mut out = Array2::<f64>::zeros((n, series.dim()));
            for (o, mut row) in out.rows_mut().into_iter().enumerate() {
                // output o is centered at frame o + span - 1
                for (i, w) in filter.iter().enumerate() {
                    row.scaled_add(*w, &x.row(o + i));
                }
            }
            let mut s = DescriptorSeries::new(out)?;
            s.set_valid_range(Some((0, n)));
            Ok(s)
        }
        Padding::EdgeReplicate => {
            let mut out = Array2::<f64>::zeros((t, series.dim()));
            for (c, mut row) in out.rows_mut().into_iter().enumerate() {
                for (i, w) in filter.iter().enumerate() {
                    // tap i reads frame c - span + 1 + i, clamped to the series
                    let src = (c + 1 + i).saturating_sub(span).min(t - 1);
                    row.scaled_add(*w, &x.row(src));
                }
            }
            let mut s = series.map_data(out)?;
            let start = (span - 1).min(t);
            s.set_valid_range(Some((start, t.saturating_sub(span).max(start))));
            Ok(s)
        }
    }
}

/// One edge-replicated delta series per span in `cfg.spans()`.
pub fn delta_bank(series: &DescriptorSeries, cfg: &DeltaConfig) -> Result<DeltaBank> {
    if cfg.spans.is_empty() {
        return Err(Error::EmptyBank);
    }
    let members = cfg
        .spans
        .iter()
        .map(|&span| {
            let c = DeltaConfig::new(span);
            Ok((span, delta(series, &c)?))
        })
        .collect::<Result<Vec<_>>>()?;
    DeltaBank::new(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    fn column(v: &[f64]) -> DescriptorSeries {
        DescriptorSeries::new(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()).unwrap()
    }

    // Direct oracle: mean of the leading l frames minus mean of trailing l.
    fn oracle(x: &DescriptorSeries, l: usize) -> Array2<f64> {
        let t = x.frame_count();
        let mut out = Array2::zeros((t - 2 * l + 1, x.dim()));
        for (o, c) in (l - 1..=t - l - 1).enumerate() {
            let mut lead = Array1::<f64>::zeros(x.dim());
            let mut trail = Array1::<f64>::zeros(x.dim());
            for k in 1..=l {
                lead += &x.row(c + k);
            }
            for k in 0..l {
                trail += &x.row(c - k);
            }
            out.row_mut(o).assign(&((lead - trail) / l as f64));
        }
        out
    }

    #[test]
    fn filter_shape() {
        assert_eq!(delta_filter(2), vec![-0.5, -0.5, 0.5, 0.5]);
        assert_eq!(delta_filter(1), vec![-1.0, 1.0]);
    }

    #[test]
    fn smooth_examples() {
        let c = column(&[5.0; 6]);
        for l in 1..=6 {
            assert!(smooth(&c, l).unwrap().data().iter().all(|v| (v - 5.0).abs() < 1e-12));
        }
        let s = smooth(&column(&[0.0, 3.0, 6.0]), 2).unwrap();
        assert_eq!(s.row(1)[0], 3.0);
        assert_eq!(s.valid_range(), Some((1, 2)));
        let s = smooth(&column(&[2.0, 4.0]), 1).unwrap();
        assert_eq!(s.row(0)[0], 3.0);
        assert_eq!(s.row(1)[0], 4.0);
    }

    #[test]
    fn smooth_errors() {
        assert!(matches!(
            smooth(&column(&[1.0, 2.0]), 3),
            Err(Error::WindowExceedsSeries { window: 3, frames: 2 })
        ));
        assert!(smooth(&column(&[1.0]), 0).is_err());
    }

    #[test]
    fn smooth_full_window_is_column_mean() {
        let x4 = DescriptorSeries::new(array![[1.0, -2.0], [4.0, 0.0], [7.0, 5.0], [0.0, 1.0]]).unwrap();
        let s = smooth(&x4, 4).unwrap();
        // [t-2, t+2] covers 0..4 for t = 1, 2
        assert_eq!(s.row(1).to_vec(), vec![3.0, 1.0]);
        assert_eq!(s.row(2).to_vec(), vec![3.0, 1.0]);
        let x8 = DescriptorSeries::new(Array2::from_shape_fn((8, 2), |(i, j)| (i * i + j) as f64)).unwrap();
        let s = smooth(&x8, 8).unwrap();
        // window [t-4, t+4] covers 0..8 only at t = 3, 4
        let mean = x8.data().mean_axis(ndarray::Axis(0)).unwrap();
        for t in [3, 4] {
            for d in 0..2 {
                assert!((s.row(t)[d] - mean[d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn delta_constant_is_zero() {
        let c = DescriptorSeries::new(Array2::from_elem((10, 3), 2.5)).unwrap();
        for l in 1..=5 {
            let d = delta(&c, &DeltaConfig::new(l)).unwrap();
            assert!(d.data().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn delta_ramp_slope_times_span() {
        let ramp: Vec<f64> = (0..12).map(f64::from).collect();
        let d = delta(&column(&ramp), &DeltaConfig::new(2)).unwrap();
        let (lo, hi) = d.valid_range().unwrap();
        assert_eq!((lo, hi), (1, 10));
        for t in lo..hi {
            assert!((d.row(t)[0] - 2.0).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn delta_valid_only_example() {
        let cfg = DeltaConfig::new(1).with_padding(Padding::ValidOnly);
        let d = delta(&column(&[1.0, 2.0, 3.0, 4.0]), &cfg).unwrap();
        assert_eq!(d.data().column(0).to_vec(), vec![1.0, 1.0, 1.0]);
        let cfg = DeltaConfig::new(3).with_padding(Padding::ValidOnly);
        assert!(matches!(
            delta(&column(&[1.0, 2.0, 3.0, 4.0, 5.0]), &cfg),
            Err(Error::SeriesTooShort { span: 3, needed: 6, frames: 5 })
        ));
    }

    #[test]
    fn edge_replicate_interior_matches_valid_only() {
        let x = DescriptorSeries::new(Array2::from_shape_fn((20, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64)).unwrap();
        for l in [1, 2, 4] {
            let e = delta(&x, &DeltaConfig::new(l)).unwrap();
            let v = delta(&x, &DeltaConfig::new(l).with_padding(Padding::ValidOnly)).unwrap();
            let (lo, hi) = e.valid_range().unwrap();
            assert_eq!(hi - lo, v.frame_count());
            for (o, t) in (lo..hi).enumerate() {
                assert_eq!(e.row(t), v.row(o));
            }
        }
    }

    #[test]
    fn bank_examples() {
        let x = DescriptorSeries::new(Array2::from_shape_fn((40, 2), |(i, j)| ((i * 13 + j) % 7) as f64)).unwrap();
        let bank = delta_bank(&x, &DeltaConfig::new(16).with_spans(&[16]).unwrap()).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.get(16).unwrap(), &delta(&x, &DeltaConfig::new(16)).unwrap());

        let c = DescriptorSeries::new(Array2::from_elem((10, 2), 1.0)).unwrap();
        let bank = delta_bank(&c, &DeltaConfig::new(2).with_spans(&[4, 2]).unwrap()).unwrap();
        assert_eq!(bank.spans().collect::<Vec<_>>(), vec![2, 4]);
        assert!(bank.members().iter().all(|(_, s)| s.data().iter().all(|v| v.abs() < 1e-12)));

        assert!(matches!(delta_bank(&c, &DeltaConfig::new(2)), Err(Error::EmptyBank)));
        assert!(DeltaConfig::new(2).with_spans(&[2, 2]).is_err());
        assert!(DeltaConfig::new(2).with_spans(&[0, 2]).is_err());
    }

    fn arb_series(t: usize, d: usize) -> impl Strategy<Value = DescriptorSeries> {
        proptest::collection::vec(-5.0f64..5.0, t * d)
            .prop_map(move |v| DescriptorSeries::new(Array2::from_shape_vec((t, d), v).unwrap()).unwrap())
    }

    proptest! {
        #[test]
        fn convolution_equals_oracle(x in arb_series(30, 3), l in 1usize..8) {
            let v = delta(&x, &DeltaConfig::new(l).with_padding(Padding::ValidOnly)).unwrap();
            let o = oracle(&x, l);
            for (a, b) in v.data().iter().zip(o.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn offset_invariance(x in arb_series(25, 4), c in proptest::collection::vec(-50.0f64..50.0, 4), l in 1usize..6) {
            let c = Array1::from(c);
            let y = DescriptorSeries::new(&x.data() + &c).unwrap();
            let cfg = DeltaConfig::new(l);
            let (dx, dy) = (delta(&x, &cfg).unwrap(), delta(&y, &cfg).unwrap());
            for (a, b) in dx.data().iter().zip(dy.data().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn linearity(x in arb_series(20, 2), y in arb_series(20, 2), a in -3.0f64..3.0, b in -3.0f64..3.0, l in 1usize..5) {
            let cfg = DeltaConfig::new(l);
            let z = DescriptorSeries::new(&x.data() * a + &y.data() * b).unwrap();
            let lhs = delta(&z, &cfg).unwrap();
            let rhs = &delta(&x, &cfg).unwrap().data() * a + &delta(&y, &cfg).unwrap().data() * b;
            for (p, q) in lhs.data().iter().zip(rhs.iter()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn time_reversal_antisymmetry(x in arb_series(24, 2), l in 1usize..6) {
            let cfg = DeltaConfig::new(l).with_padding(Padding::ValidOnly);
            let mut rev = x.data().to_owned();
            rev.invert_axis(ndarray::Axis(0));
            let dr = delta(&DescriptorSeries::new(rev).unwrap(), &cfg).unwrap();
            let mut d = delta(&x, &cfg).unwrap().into_data();
            d.invert_axis(ndarray::Axis(0));
            for (a, b) in dr.data().iter().zip(d.iter()) {
                prop_assert!((a + b).abs() < 1e-9);
            }
        }

        #[test]
        fn smooth_whole_window_gives_column_mean(x in arb_series(9, 3)) {
            // with l = T the window at the center frame spans the whole series
            let t = x.frame_count();
            let s = smooth(&x, t).unwrap();
            let mean = x.data().mean_axis(ndarray::Axis(0)).unwrap();
            let c = t / 2;
            for d in 0..x.dim() {
                prop_assert!((s.row(c)[d] - mean[d]).abs() < 1e-9);
            }
        }
    }
}
