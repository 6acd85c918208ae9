//! PCA fitting and projection.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::series::DescriptorSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcaOptions {
    /// Subtract the fitting data's column means. When off, the model mean is
    /// zero and components come from the uncentered second moment.
    pub center: bool,
    /// Scale projected coordinates to unit variance.
    pub whiten: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            center: true,
            whiten: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// `D x k`, orthonormal columns.
    components: Array2<f64>,
    explained_variance: Array1<f64>,
    whiten: bool,
}

impl PcaModel {
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> ArrayView2<'_, f64> {
        self.components.view()
    }

    pub fn explained_variance(&self) -> &Array1<f64> {
        &self.explained_variance
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn whiten(&self) -> bool {
        self.whiten
    }

    /// Rebuilds a model from stored parts (e.g. loaded from disk).
    pub fn from_parts(
        mean: Array1<f64>,
        components: Array2<f64>,
        explained_variance: Array1<f64>,
        whiten: bool,
    ) -> Result<Self> {
        if mean.len() != components.nrows() || explained_variance.len() != components.ncols() {
            return Err(Error::InvalidParameter(format!(
                "inconsistent PCA parts: mean {}, components {}x{}, variances {}",
                mean.len(),
                components.nrows(),
                components.ncols(),
                explained_variance.len()
            )));
        }
        Ok(Self {
            mean,
            components,
            explained_variance,
            whiten,
        })
    }
}

pub fn pca_fit(series: &DescriptorSeries, k: usize) -> Result<PcaModel> {
    pca_fit_with(series, k, PcaOptions::default())
}

/// Fits `k` principal components via a thin SVD of the (centered) data.
///
/// Each component is sign-fixed so its largest-magnitude entry is positive.
pub fn pca_fit_with(series: &DescriptorSeries, k: usize, opts: PcaOptions) -> Result<PcaModel> {
    let (t, d) = (series.frame_count(), series.dim());
    if t < 2 {
        return Err(Error::Degenerate(format!("PCA needs at least 2 frames, got {t}")));
    }
    if k == 0 || k > t.min(d) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} out of range 1..={}",
            t.min(d)
        )));
    }
    let x = series.data();
    let mean = if opts.center {
        x.mean_axis(ndarray::Axis(0)).expect("t >= 2")
    } else {
        Array1::zeros(d)
    };
    let centered = DMatrix::from_fn(t, d, |i, j| x[(i, j)] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // stable: equal singular values keep SVD order
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = Array2::<f64>::zeros((d, k));
    let mut variance = Array1::<f64>::zeros(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let row = v_t.row(idx);
        let pivot = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(j, c)] = sign * row[j];
        }
        let s = svd.singular_values[idx];
        variance[c] = s * s / (t - 1) as f64;
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: variance,
        whiten: opts.whiten,
    })
}

/// Projects rows onto the model's components. Positions and valid range are
/// carried over.
pub fn pca_transform(model: &PcaModel, series: &DescriptorSeries) -> Result<DescriptorSeries> {
    if series.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: series.dim(),
        });
    }
    let centered = &series.data() - &model.mean;
    let mut z = centered.dot(&model.components);
    if model.whiten {
        for (mut col, &var) in z.columns_mut().into_iter().zip(model.explained_variance.iter()) {
            if var > 0.0 {
                col /= var.sqrt();
            }
        }
    }
    series.map_data(z)
}

/// Maps projected coordinates back to descriptor space.
pub fn pca_reconstruct(model: &PcaModel, coords: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if coords.ncols() != model.k() {
        return Err(Error::DimensionMismatch {
            expected: model.k(),
            actual: coords.ncols(),
        });
    }
    let mut z = coords.to_owned();
    if model.whiten {
        for (mut col, &var) in z.columns_mut().into_iter().zip(model.explained_variance.iter()) {
            col *= var.sqrt();
        }
    }
    Ok(z.dot(&model.components.t()) + &model.mean)
}
