//! End-to-end runs: transform, optional PCA, distance matrix, optional
//! sequence matching, retrieval and evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::{correctness, evaluate_pr, PrCurve};
use crate::io::{self, Summary};
use crate::matching::{distance_matrix, multi_delta_distance, retrieve_best, seq_match, DistanceMatrix, MatchSet};
use crate::reduction::{pca_fit_with, pca_transform, PcaOptions};
use crate::series::{l2_normalize, DescriptorSeries, GroundTruth, RadiusMode};
use crate::transform::{delta, delta_bank, smooth, DeltaBank, DeltaConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Raw,
    Smooth,
    Delta,
    MultiDelta,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Raw => "raw",
            TransformKind::Smooth => "smooth",
            TransformKind::Delta => "delta",
            TransformKind::MultiDelta => "multi-delta",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(TransformKind::Raw),
            "smooth" => Ok(TransformKind::Smooth),
            "delta" => Ok(TransformKind::Delta),
            "multi-delta" => Ok(TransformKind::MultiDelta),
            other => Err(Error::Config(format!("unknown transform {other:?}"))),
        }
    }
}

/// Which data the PCA model is fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaFitSource {
    #[default]
    Reference,
    Concatenated,
}

fn default_window() -> usize {
    16
}

fn default_true() -> bool {
    true
}

/// Configuration of one run; deserializable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub reference: PathBuf,
    pub query: PathBuf,
    #[serde(default)]
    pub reference_positions: Option<PathBuf>,
    /// `query_idx,ref_idx` CSV; identity correspondence when absent.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    pub transform: TransformKind,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub spans: Vec<usize>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub seqmatch_length: Option<usize>,
    #[serde(default)]
    pub pca_k: Option<usize>,
    #[serde(default)]
    pub pca_fit: PcaFitSource,
    #[serde(default = "default_true")]
    pub pca_center: bool,
    #[serde(default)]
    pub pca_whiten: bool,
    pub radius: f64,
    pub radius_mode: RadiusMode,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.radius_mode == RadiusMode::Meters && self.reference_positions.is_none() {
            return Err(Error::Config("meters radius mode requires reference_positions".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> RunParams {
        RunParams {
            transform: self.transform,
            window: self.window,
            spans: self.spans.clone(),
            normalize: self.normalize,
            seqmatch_length: self.seqmatch_length,
            pca_k: self.pca_k,
            pca_fit: self.pca_fit,
            pca_options: PcaOptions {
                center: self.pca_center,
                whiten: self.pca_whiten,
            },
        }
    }
}

/// The data-independent part of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub transform: TransformKind,
    pub window: usize,
    pub spans: Vec<usize>,
    pub normalize: bool,
    pub seqmatch_length: Option<usize>,
    pub pca_k: Option<usize>,
    pub pca_fit: PcaFitSource,
    pub pca_options: PcaOptions,
}

impl RunParams {
    pub fn new(transform: TransformKind, window: usize) -> Self {
        Self {
            transform,
            window,
            spans: Vec::new(),
            normalize: false,
            seqmatch_length: None,
            pca_k: None,
            pca_fit: PcaFitSource::Reference,
            pca_options: PcaOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.transform == TransformKind::MultiDelta && self.spans.is_empty() {
            return Err(Error::Config("multi-delta needs a non-empty span list".into()));
        }
        if self.seqmatch_length == Some(0) {
            return Err(Error::Config("seqmatch length must be >= 1".into()));
        }
        if self.pca_k == Some(0) {
            return Err(Error::Config("pca_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output of [`apply_transform`]: one series, or one per span.
#[derive(Debug, Clone, PartialEq)]
pub enum Transformed {
    Single(DescriptorSeries),
    Bank(DeltaBank),
}

impl Transformed {
    fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&DescriptorSeries) -> Result<DescriptorSeries>,
    {
        Ok(match self {
            Transformed::Single(s) => Transformed::Single(f(s)?),
            Transformed::Bank(b) => Transformed::Bank(b.try_map(f)?),
        })
    }

    fn parts(&self) -> Vec<&DescriptorSeries> {
        match self {
            Transformed::Single(s) => vec![s],
            Transformed::Bank(b) => b.members().iter().map(|(_, s)| s).collect(),
        }
    }
}

pub fn apply_transform(series: &DescriptorSeries, params: &RunParams) -> Result<Transformed> {
    let out = match params.transform {
        TransformKind::Raw => Transformed::Single(series.clone()),
        TransformKind::Smooth => Transformed::Single(smooth(series, params.window)?),
        TransformKind::Delta => Transformed::Single(delta(series, &DeltaConfig::new(params.window))?),
        TransformKind::MultiDelta => {
            let cfg = DeltaConfig::new(params.window).with_spans(&params.spans)?;
            Transformed::Bank(delta_bank(series, &cfg)?)
        }
    };
    if params.normalize {
        out.try_map(|s| Ok(l2_normalize(s)))
    } else {
        Ok(out)
    }
}

/// Fits PCA per the run parameters and projects both traverses.
pub fn apply_pca(reference: &Transformed, query: &Transformed, params: &RunParams) -> Result<(Transformed, Transformed)> {
    let Some(k) = params.pca_k else {
        return Ok((reference.clone(), query.clone()));
    };
    let mut fit_parts = reference.parts();
    if params.pca_fit == PcaFitSource::Concatenated {
        fit_parts.extend(query.parts());
    }
    let fit_data = DescriptorSeries::concat(&fit_parts)?;
    let model = pca_fit_with(&fit_data, k, params.pca_options)?;
    Ok((
        reference.try_map(|s| pca_transform(&model, s))?,
        query.try_map(|s| pca_transform(&model, s))?,
    ))
}

pub fn match_transformed(query: &Transformed, reference: &Transformed, seqmatch_length: Option<usize>) -> Result<DistanceMatrix> {
    let m = match (query, reference) {
        (Transformed::Single(q), Transformed::Single(r)) => distance_matrix(q, r)?,
        (Transformed::Bank(q), Transformed::Bank(r)) => multi_delta_distance(q, r)?,
        _ => return Err(Error::Config("query and reference transforms differ".into())),
    };
    match seqmatch_length {
        Some(l) => seq_match(&m, l),
        None => Ok(m),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub matches: MatchSet,
    pub correct: Vec<bool>,
    pub curve: PrCurve,
    pub summary: Summary,
}

/// Runs every stage on in-memory data. Errors are tagged with the stage.
pub fn run_on_series(
    reference: &DescriptorSeries,
    query: &DescriptorSeries,
    gt: &GroundTruth,
    params: &RunParams,
) -> Result<RunOutput> {
    params.validate()?;
    let tr = apply_transform(reference, params).map_err(|e| e.in_stage("transform reference"))?;
    let tq = apply_transform(query, params).map_err(|e| e.in_stage("transform query"))?;
    let (tr, tq) = apply_pca(&tr, &tq, params).map_err(|e| e.in_stage("pca"))?;
    let m = match_transformed(&tq, &tr, params.seqmatch_length).map_err(|e| e.in_stage("match"))?;
    let matches = retrieve_best(&m);
    let positions = reference.positions();
    let correct = correctness(&matches, gt, positions).map_err(|e| e.in_stage("evaluate"))?;
    let curve = evaluate_pr(&matches, gt, positions).map_err(|e| e.in_stage("evaluate"))?;
    let summary = Summary {
        precision_at_full_recall: curve.precision_at_full_recall(),
        max_f1: curve.max_f1(),
        radius: gt.radius(),
        radius_mode: gt.radius_mode(),
        transform: Some(params.transform.name().to_string()),
        window: (params.transform != TransformKind::Raw).then_some(params.window),
        seqmatch_length: params.seqmatch_length,
        pca_k: params.pca_k,
    };
    Ok(RunOutput {
        matches,
        correct,
        curve,
        summary,
    })
}

pub const MATCHES_FILE: &str = "matches.csv";
pub const PR_FILE: &str = "pr.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `matches.csv`, `pr.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, out: &RunOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_matches(dir.join(MATCHES_FILE), &out.matches, Some(&out.correct))?;
    io::write_pr_curve(dir.join(PR_FILE), &out.curve)?;
    io::write_summary(dir.join(SUMMARY_FILE), &out.summary)
}

/// Loads inputs named in `cfg`, runs every stage and writes outputs.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let load = |stage| move |e: Error| e.in_stage(stage);
    let mut reference = io::read_descriptors(&cfg.reference).map_err(load("load reference"))?;
    let query = io::read_descriptors(&cfg.query).map_err(load("load query"))?;
    if let Some(p) = &cfg.reference_positions {
        let pos = io::read_positions(p).map_err(load("load positions"))?;
        reference = reference.with_positions(pos).map_err(load("load positions"))?;
    }
    let gt = match &cfg.ground_truth {
        Some(p) => io::read_ground_truth(p, reference.frame_count(), cfg.radius_mode, cfg.radius),
        None if query.frame_count() == reference.frame_count() => {
            GroundTruth::identity(query.frame_count(), cfg.radius_mode, cfg.radius)
        }
        None => Err(Error::Config(format!(
            "no ground truth given and traverse lengths differ ({} vs {})",
            query.frame_count(),
            reference.frame_count()
        ))),
    }
    .map_err(load("load ground truth"))?;

    let out = run_on_series(&reference, &query, &gt, &cfg.params())?;
    write_outputs(&cfg.output_dir, &out).map_err(load("write outputs"))?;
    Ok(out)
}
