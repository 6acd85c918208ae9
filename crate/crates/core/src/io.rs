//! Descriptor files and plot-data outputs.
//!
//! Binary descriptor file (little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `DVPR`                   |
//! | 4      | 4    | format version (u32, `1`)      |
//! | 8      | 8    | frame count `T` (u64)          |
//! | 16     | 8    | dimension `D` (u64)            |
//! | 24     | 4    | dtype (u32: 1 = f32, 2 = f64)  |
//! | 28     | ...  | `T * D` values, row-major      |
//!
//! Files ending in `.csv` are read as one frame per line instead.
//!
//! CSV outputs use a header row, `,` separators, `.` decimals and `\n` line
//! endings. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::calibration::SelfDistanceProfile;
use crate::evaluation::PrCurve;
use crate::matching::{Match, MatchSet};
use crate::reduction::PcaModel;
use crate::series::{DescriptorSeries, GroundTruth, RadiusMode};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DVPR";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a binary descriptor file, or a CSV file if the extension is `.csv`.
pub fn read_descriptors(path: impl AsRef<Path>) -> Result<DescriptorSeries> {
    let path = path.as_ref();
    if is_csv(path) {
        return DescriptorSeries::new(read_csv_matrix(path)?);
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_descriptors(&bytes, path)
}

fn decode_descriptors(bytes: &[u8], path: &Path) -> Result<DescriptorSeries> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (t, d) = (u64_at(8), u64_at(16));
    let dtype = Dtype::from_code(u32_at(24))?;
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Parse {
            path: path.into(),
            msg: format!("header size {t}x{d} overflows"),
        })?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("{} trailing bytes after payload", actual - expected),
        });
    }
    let (t, d) = (t as usize, d as usize);
    let payload = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let data = Array2::from_shape_vec((t, d), values).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })?;
    DescriptorSeries::new(data)
}

/// Writes the binary format with 32-bit floats.
pub fn write_descriptors(path: impl AsRef<Path>, series: &DescriptorSeries) -> Result<()> {
    write_descriptors_as(path, series, Dtype::F32)
}

pub fn write_descriptors_as(path: impl AsRef<Path>, series: &DescriptorSeries, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(series.data(), dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_matrix(data: ndarray::ArrayView2<'_, f64>, dtype: Dtype) -> Result<Vec<u8>> {
    let (t, d) = data.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + t * d * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(t as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    for ((row, col), &v) in data.indexed_iter() {
        match dtype {
            Dtype::F32 => {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
                out.extend_from_slice(&narrow.to_le_bytes());
            }
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Reads a numeric CSV matrix. A first line that does not parse as numbers
/// is treated as a header.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.into(),
            msg: e.to_string(),
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            msg: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push(values),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.into(),
                    msg: format!("line {}: {e}", line + 1),
                })
            }
        }
    }
    let d = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("row {i} has {} columns, expected {d}", rows[i].len()),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Planar positions, one `x,y` row per frame.
pub fn read_positions(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let m = read_csv_matrix(path)?;
    if m.ncols() != 2 {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("positions need 2 columns, found {}", m.ncols()),
        });
    }
    Ok(m)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>, body: std::io::Result<()>) -> Result<()> {
    body.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Ground truth as `query_idx,ref_idx` rows, one per query in order.
pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let body = (|| {
        writeln!(w, "query_idx,ref_idx")?;
        for (q, r) in gt.pairs().iter().enumerate() {
            writeln!(w, "{q},{r}")?;
        }
        Ok(())
    })();
    finish(path, w, body)
}

pub fn read_ground_truth(
    path: impl AsRef<Path>,
    ref_count: usize,
    radius_mode: RadiusMode,
    radius: f64,
) -> Result<GroundTruth> {
    let path = path.as_ref();
    let m = read_csv_matrix(path)?;
    if m.ncols() != 2 {
        return Err(Error::Parse {
            path: path.into(),
            msg: "ground truth needs columns query_idx,ref_idx".into(),
        });
    }
    let mut pairs = vec![usize::MAX; m.nrows()];
    for row in m.rows() {
        let (q, r) = (row[0], row[1]);
        let valid = |v: f64| v >= 0.0 && v.fract() == 0.0;
        if !valid(q) || !valid(r) || q as usize >= pairs.len() {
            return Err(Error::InvalidGroundTruth(format!("bad row {q},{r} in {}", path.display())));
        }
        pairs[q as usize] = r as usize;
    }
    if let Some(q) = pairs.iter().position(|&r| r == usize::MAX) {
        return Err(Error::InvalidGroundTruth(format!("query {q} has no entry in {}", path.display())));
    }
    GroundTruth::new(pairs, ref_count, radius_mode, radius)
}

/// `query_idx,ref_idx,distance[,correct]`.
pub fn write_matches(path: impl AsRef<Path>, matches: &MatchSet, correct: Option<&[bool]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let body = (|| {
        match correct {
            Some(_) => writeln!(w, "query_idx,ref_idx,distance,correct")?,
            None => writeln!(w, "query_idx,ref_idx,distance")?,
        }
        for (q, m) in matches.iter().enumerate() {
            write!(w, "{q},{},{}", m.ref_index, m.distance)?;
            if let Some(c) = correct {
                write!(w, ",{}", u8::from(c[q]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })();
    finish(path, w, body)
}

pub fn read_matches(path: impl AsRef<Path>) -> Result<MatchSet> {
    let path = path.as_ref();
    let m = read_csv_matrix(path)?;
    if m.ncols() < 3 {
        return Err(Error::Parse {
            path: path.into(),
            msg: "matches need columns query_idx,ref_idx,distance".into(),
        });
    }
    let matches = m
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row[0] != i as f64 || row[1] < 0.0 || row[1].fract() != 0.0 {
                return Err(Error::Parse {
                    path: path.into(),
                    msg: format!("row {i}: expected query_idx {i} and an integer ref_idx"),
                });
            }
            Ok(Match {
                ref_index: row[1] as usize,
                distance: row[2],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchSet::new(matches))
}

/// `threshold,precision,recall`; the leading nothing-retrieved point has
/// threshold `-inf`.
pub fn write_pr_curve(path: impl AsRef<Path>, curve: &PrCurve) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let body = (|| {
        writeln!(w, "threshold,precision,recall")?;
        for p in curve.points() {
            writeln!(w, "{},{},{}", p.threshold, p.precision, p.recall)?;
        }
        Ok(())
    })();
    finish(path, w, body)
}

/// `offset,median_distance`.
pub fn write_profile(path: impl AsRef<Path>, profile: &SelfDistanceProfile) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let body = (|| {
        writeln!(w, "offset,median_distance")?;
        for (d, m) in profile.offsets().zip(profile.median_distance()) {
            writeln!(w, "{d},{m}")?;
        }
        Ok(())
    })();
    finish(path, w, body)
}

/// Run summary written as JSON with fixed key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision_at_full_recall: f64,
    pub max_f1: f64,
    pub radius: f64,
    pub radius_mode: RadiusMode,
    pub transform: Option<String>,
    pub window: Option<usize>,
    pub seqmatch_length: Option<usize>,
    pub pca_k: Option<usize>,
}

pub fn write_summary(path: impl AsRef<Path>, summary: &Summary) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Stores a PCA model as an f64 descriptor file with `k + 2` rows of width
/// `D`: the mean, the explained variances (first `k` entries, rest zero),
/// then the `k` components.
pub fn write_pca_model(path: impl AsRef<Path>, model: &PcaModel) -> Result<()> {
    let path = path.as_ref();
    let (d, k) = (model.input_dim(), model.k());
    let mut m = Array2::<f64>::zeros((k + 2, d));
    m.row_mut(0).assign(model.mean());
    for (i, v) in model.explained_variance().iter().enumerate() {
        m[(1, i)] = *v;
    }
    m.slice_mut(ndarray::s![2.., ..]).assign(&model.components().t());
    let bytes = encode_matrix(m.view(), Dtype::F64)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pca_model(path: impl AsRef<Path>, whiten: bool) -> Result<PcaModel> {
    let path = path.as_ref();
    let m = read_descriptors(path)?.into_data();
    let (rows, d) = m.dim();
    if rows < 3 || rows - 2 > d {
        return Err(Error::Parse {
            path: path.into(),
            msg: format!("{rows}x{d} is not a PCA model layout"),
        });
    }
    let k = rows - 2;
    PcaModel::from_parts(
        m.row(0).to_owned(),
        m.slice(ndarray::s![2.., ..]).t().to_owned(),
        m.row(1).slice(ndarray::s![..k]).to_owned(),
        whiten,
    )
}
