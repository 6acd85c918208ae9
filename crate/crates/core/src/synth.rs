//! Seeded synthetic traverse pairs with known ground truth.
//!
//! A latent route signal is white Gaussian noise smoothed along time with a
//! box window, so adjacent frames overlap visually and decorrelate over
//! roughly `latent_smooth_window` frames. The reference traverse is the
//! latent signal plus a constant per-traverse offset plus per-frame noise.
//! The query traverse is the (optionally time-warped) latent signal plus its
//! own offset and noise. Offsets and noise are scaled relative to the latent
//! RMS.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::series::{DescriptorSeries, GroundTruth, RadiusMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub frames: usize,
    pub dim: usize,
    pub latent_smooth_window: usize,
    /// Scale of the non-negative per-dimension mean added to the latent
    /// signal, in units of the smoothed noise standard deviation.
    pub latent_mean_scale: f64,
    /// Per-element standard deviation of each traverse's offset, as a
    /// fraction of the latent RMS.
    pub offset_scale: f64,
    /// Per-element standard deviation of frame noise, as a fraction of the
    /// latent RMS.
    pub noise_scale: f64,
    /// Piecewise-linear query time warp; see [`time_warp`].
    pub warp: Option<Vec<(f64, f64)>>,
    /// Number of equal-length segments with independent offsets. `1` gives
    /// the constant per-traverse offset.
    pub offset_segments: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            frames: 2000,
            dim: 128,
            latent_smooth_window: 20,
            latent_mean_scale: 4.0,
            offset_scale: 0.5,
            noise_scale: 0.1,
            warp: None,
            offset_segments: 1,
            seed: 7,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.dim == 0 || self.latent_smooth_window == 0 {
            return Err(Error::InvalidParameter(format!(
                "need frames >= 2, dim >= 1, latent_smooth_window >= 1; got {}, {}, {}",
                self.frames, self.dim, self.latent_smooth_window
            )));
        }
        for (name, v) in [
            ("latent_mean_scale", self.latent_mean_scale),
            ("offset_scale", self.offset_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.offset_segments == 0 || self.offset_segments > self.frames {
            return Err(Error::InvalidParameter(format!(
                "offset_segments must be in 1..={}, got {}",
                self.frames, self.offset_segments
            )));
        }
        if let Some(w) = &self.warp {
            validate_warp(w)?;
        }
        Ok(())
    }
}

fn validate_warp(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidWarp("need at least two control points".into()));
    }
    if points[0] != (0.0, 0.0) || points[points.len() - 1] != (1.0, 1.0) {
        return Err(Error::InvalidWarp("control points must start at (0, 0) and end at (1, 1)".into()));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
        return Err(Error::InvalidWarp("control points must be strictly increasing in both coordinates".into()));
    }
    Ok(())
}

fn interp_warp(points: &[(f64, f64)], u: f64) -> f64 {
    let seg = points
        .windows(2)
        .find(|w| u <= w[1].0)
        .unwrap_or(&points[points.len() - 2..]);
    let (a, b) = (seg[0], seg[1]);
    a.1 + (u - a.0) / (b.0 - a.0) * (b.1 - a.1)
}

/// Fractional source frame sampled by each of `frames` output frames.
fn warped_sources(points: &[(f64, f64)], frames: usize) -> Vec<f64> {
    if frames == 1 {
        return vec![0.0];
    }
    let last = (frames - 1) as f64;
    (0..frames)
        .map(|i| (interp_warp(points, i as f64 / last) * last).clamp(0.0, last))
        .collect()
}

fn resample(data: &Array2<f64>, sources: &[f64]) -> Array2<f64> {
    let last = data.nrows() - 1;
    let mut out = Array2::zeros((sources.len(), data.ncols()));
    for (mut row, &s) in out.rows_mut().into_iter().zip(sources) {
        let lo = (s.floor() as usize).min(last);
        let hi = (lo + 1).min(last);
        let frac = s - lo as f64;
        row.assign(&data.row(lo));
        if frac > 0.0 {
            row *= 1.0 - frac;
            row.scaled_add(frac, &data.row(hi));
        }
    }
    out
}

/// Resamples a series along time with a piecewise-linear warp.
///
/// Each control point `(u, v)` says output time fraction `u` samples input
/// time fraction `v`; in between, rows are linearly interpolated. Points must
/// start at `(0, 0)`, end at `(1, 1)` and increase strictly in both
/// coordinates. Length is preserved and positions are warped the same way.
pub fn time_warp(series: &DescriptorSeries, control_points: &[(f64, f64)]) -> Result<DescriptorSeries> {
    validate_warp(control_points)?;
    let sources = warped_sources(control_points, series.frame_count());
    let data = resample(&series.data().to_owned(), &sources);
    let mut out = DescriptorSeries::new(data)?;
    if let Some(p) = series.positions() {
        out = out.with_positions(resample(&p.to_owned(), &sources))?;
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

/// Box-smooths white noise, generating `window - 1` extra frames so every
/// output frame averages exactly `window` samples.
fn latent_signal(rng: &mut ChaCha8Rng, frames: usize, dim: usize, window: usize) -> Array2<f64> {
    let raw = gaussian(rng, (frames + window - 1, dim));
    let mut out = Array2::zeros((frames, dim));
    let mut acc = Array1::<f64>::zeros(dim);
    for i in 0..window {
        acc += &raw.row(i);
    }
    out.row_mut(0).assign(&(&acc / window as f64));
    for t in 1..frames {
        acc += &raw.row(t + window - 1);
        acc -= &raw.row(t - 1);
        out.row_mut(t).assign(&(&acc / window as f64));
    }
    out
}

fn offsets(rng: &mut ChaCha8Rng, frames: usize, dim: usize, segments: usize, scale: f64) -> Array2<f64> {
    let per_segment = gaussian(rng, (segments, dim)) * scale;
    Array2::from_shape_fn((frames, dim), |(t, d)| per_segment[(t * segments / frames, d)])
}

/// Returns `(reference, query, ground_truth)`. The ground truth maps each
/// query frame to the rounded reference frame its latent sample came from,
/// with a 0-frame radius (callers typically reset it with
/// [`GroundTruth::with_radius`]).
pub fn generate_traverse_pair(params: &SynthParams) -> Result<(DescriptorSeries, DescriptorSeries, GroundTruth)> {
    params.validate()?;
    let (t, d) = (params.frames, params.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut latent = latent_signal(&mut rng, t, d, params.latent_smooth_window);
    let noise_std = (params.latent_smooth_window as f64).sqrt().recip();
    let mean: Array1<f64> = (0..d)
        .map(|_| StandardNormal.sample(&mut rng))
        .map(|v: f64| v.abs() * params.latent_mean_scale * noise_std)
        .collect();
    latent += &mean;
    let rms = (latent.mapv(|v| v * v).sum() / latent.len() as f64).sqrt();

    let offset_ref = offsets(&mut rng, t, d, params.offset_segments, params.offset_scale * rms);
    let offset_query = offsets(&mut rng, t, d, params.offset_segments, params.offset_scale * rms);
    let noise_ref = gaussian(&mut rng, (t, d)) * (params.noise_scale * rms);
    let noise_query = gaussian(&mut rng, (t, d)) * (params.noise_scale * rms);

    let sources: Vec<f64> = match &params.warp {
        Some(w) => warped_sources(w, t),
        None => (0..t).map(|i| i as f64).collect(),
    };
    let warped = match &params.warp {
        Some(_) => resample(&latent, &sources),
        None => latent.clone(),
    };

    let reference = DescriptorSeries::new(latent + offset_ref + noise_ref)?;
    let query = DescriptorSeries::new(warped + offset_query + noise_query)?;
    let pairs = sources.iter().map(|s| (s.round() as usize).min(t - 1)).collect();
    let gt = GroundTruth::new(pairs, t, RadiusMode::Frames, 0.0)?;
    Ok((reference, query, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::evaluate_pr;
    use crate::matching::{distance_matrix, retrieve_best};
    use crate::transform::{delta, DeltaConfig};

    fn small(offset: f64, noise: f64) -> SynthParams {
        SynthParams {
            frames: 300,
            dim: 16,
            latent_smooth_window: 10,
            offset_scale: offset,
            noise_scale: noise,
            seed: 3,
            ..SynthParams::default()
        }
    }

    fn mean_diag(a: &DescriptorSeries, b: &DescriptorSeries) -> f64 {
        let m = distance_matrix(a, b).unwrap();
        (0..a.frame_count()).map(|i| m.get(i, i)).sum::<f64>() / a.frame_count() as f64
    }

    #[test]
    fn warp_examples() {
        let ramp = DescriptorSeries::new(Array2::from_shape_fn((4, 1), |(i, _)| i as f64)).unwrap();
        let same = time_warp(&ramp, &[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!(same.data().iter().zip(ramp.data().iter()).all(|(a, b)| (a - b).abs() < 1e-12));

        // first half of the output covers only the first quarter of input time
        let w = time_warp(&ramp, &[(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        let got: Vec<f64> = w.data().column(0).to_vec();
        let expected = [0.0, 0.5, 1.5, 3.0];
        assert!(got.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12), "{got:?}");

        let c = DescriptorSeries::new(Array2::from_elem((7, 2), 4.0)).unwrap();
        let w = time_warp(&c, &[(0.0, 0.0), (0.3, 0.6), (1.0, 1.0)]).unwrap();
        assert!(w.data().iter().all(|v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn warp_carries_positions() {
        let s = DescriptorSeries::new(Array2::zeros((5, 1)))
            .unwrap()
            .with_positions(Array2::from_shape_fn((5, 2), |(i, j)| (i * (j + 1)) as f64))
            .unwrap();
        let w = time_warp(&s, &[(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        assert_eq!(w.positions().unwrap()[(1, 0)], 0.5);
        assert_eq!(w.positions().unwrap()[(1, 1)], 1.0);
    }

    #[test]
    fn warp_validation() {
        let s = DescriptorSeries::new(Array2::zeros((3, 1))).unwrap();
        for bad in [
            vec![(0.0, 0.0)],
            vec![(0.0, 0.1), (1.0, 1.0)],
            vec![(0.0, 0.0), (0.5, 0.5), (0.5, 0.7), (1.0, 1.0)],
            vec![(0.0, 0.0), (0.5, 0.6), (0.7, 0.5), (1.0, 1.0)],
        ] {
            assert!(matches!(time_warp(&s, &bad), Err(Error::InvalidWarp(_))));
        }
        let p = SynthParams { warp: Some(vec![(0.0, 0.0)]), ..small(0.0, 0.0) };
        assert!(generate_traverse_pair(&p).is_err());
    }

    #[test]
    fn clean_pair_is_identical() {
        let (r, q, gt) = generate_traverse_pair(&small(0.0, 0.0)).unwrap();
        assert_eq!(r, q);
        assert_eq!(gt.pairs(), (0..300).collect::<Vec<_>>().as_slice());
        let m = retrieve_best(&distance_matrix(&q, &r).unwrap());
        let c = evaluate_pr(&m, &gt, None).unwrap();
        assert_eq!(c.precision_at_full_recall(), 1.0);

        let cfg = DeltaConfig::new(5);
        let md = retrieve_best(&distance_matrix(&delta(&q, &cfg).unwrap(), &delta(&r, &cfg).unwrap()).unwrap());
        for (a, b) in m.iter().zip(md.iter()) {
            assert_eq!(a.ref_index, b.ref_index);
            assert!((a.distance - b.distance).abs() < 1e-12);
        }
    }

    #[test]
    fn offsets_hurt_raw_but_not_delta() {
        let (r, q, _) = generate_traverse_pair(&small(0.5, 0.0)).unwrap();
        let cfg = DeltaConfig::new(5);
        let (dr, dq) = (delta(&r, &cfg).unwrap(), delta(&q, &cfg).unwrap());
        let m = distance_matrix(&dq, &dr).unwrap();
        assert!((0..300).all(|i| m.get(i, i) < 1e-6));
        let raw = distance_matrix(&q, &r).unwrap();
        assert!((0..300).all(|i| raw.get(i, i) > 0.0));
    }

    #[test]
    fn offset_scale_monotone_family() {
        let scales = [0.0, 0.25, 0.5, 1.0, 2.0];
        let mut raw = Vec::new();
        let mut del = Vec::new();
        let cfg = DeltaConfig::new(5);
        for s in scales {
            let (r, q, _) = generate_traverse_pair(&small(s, 0.0)).unwrap();
            raw.push(mean_diag(&q, &r));
            del.push(mean_diag(&delta(&q, &cfg).unwrap(), &delta(&r, &cfg).unwrap()));
        }
        assert!(raw.windows(2).all(|w| w[1] > w[0]), "{raw:?}");
        assert!(del.iter().all(|d| (d - del[0]).abs() < 1e-6), "{del:?}");
    }

    #[test]
    fn deterministic_and_valid_gt() {
        let p = SynthParams {
            warp: Some(vec![(0.0, 0.0), (0.4, 0.6), (1.0, 1.0)]),
            ..small(0.3, 0.1)
        };
        let a = generate_traverse_pair(&p).unwrap();
        let b = generate_traverse_pair(&p).unwrap();
        assert_eq!(a, b);
        let gt = &a.2;
        assert_eq!(gt.query_count(), 300);
        assert!(gt.pairs().iter().all(|&r| r < 300));
        assert!(gt.pairs().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(gt.pairs()[0], 0);
        assert_eq!(gt.pairs()[299], 299);
    }

    #[test]
    fn segmented_offsets() {
        let p = SynthParams { offset_segments: 3, ..small(1.0, 0.0) };
        let (r, q, _) = generate_traverse_pair(&p).unwrap();
        assert_eq!(r.frame_count(), q.frame_count());
        assert!(generate_traverse_pair(&SynthParams { offset_segments: 0, ..small(1.0, 0.0) }).is_err());
    }
}
