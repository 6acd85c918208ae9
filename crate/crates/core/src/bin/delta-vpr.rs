use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use delta_vpr::calibration::{default_max_offset, estimate_span, scaled_span, self_distance_profile, DEFAULT_THRESHOLD};
use delta_vpr::evaluation::{correctness, evaluate_pr, rank_dimensions};
use delta_vpr::io::{self, Dtype, Summary};
use delta_vpr::pipeline::{
    apply_pca, apply_transform, match_transformed, run_pipeline, PcaFitSource, RunConfig, RunParams,
    Transformed, TransformKind, MATCHES_FILE, PR_FILE, SUMMARY_FILE,
};
use delta_vpr::reduction::PcaOptions;
use delta_vpr::series::{apply_permutation, DescriptorSeries, GroundTruth, RadiusMode};
use delta_vpr::synth::{generate_traverse_pair, SynthParams};
use delta_vpr::transform::{delta, DeltaConfig, Padding};
use delta_vpr::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "delta-vpr", version, about = "Delta descriptors for sequence-based place recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute smoothed or delta descriptors from a descriptor file.
    Transform(TransformArgs),
    /// Match a query traverse against a reference and write best matches.
    Match(MatchArgs),
    /// Score best matches against ground truth.
    Evaluate(EvaluateArgs),
    /// Estimate the sequence length from a traverse's self-distance profile.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic reference/query pair with ground truth.
    Synth(SynthArgs),
    /// Rank descriptor dimensions by agreement across true matches.
    RankDims(RankDimsArgs),
    /// Shuffle both traverses with one permutation, preserving correspondence.
    Shuffle(ShuffleArgs),
    /// Run transform, matching and evaluation end to end.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Raw,
    Smooth,
    Delta,
    MultiDelta,
}

impl From<Kind> for TransformKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Raw => TransformKind::Raw,
            Kind::Smooth => TransformKind::Smooth,
            Kind::Delta => TransformKind::Delta,
            Kind::MultiDelta => TransformKind::MultiDelta,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PadArg {
    Edge,
    Valid,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frames,
    Meters,
}

impl From<ModeArg> for RadiusMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Frames => RadiusMode::Frames,
            ModeArg::Meters => RadiusMode::Meters,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FitArg {
    Reference,
    Concatenated,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output file. For multi-delta, one file per span is written with a
    /// `_l<span>` suffix before the extension.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "delta")]
    kind: Kind,
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[arg(long, value_delimiter = ',')]
    spans: Vec<usize>,
    #[arg(long, value_enum, default_value = "edge")]
    padding: PadArg,
    /// L2-normalize every output row.
    #[arg(long)]
    normalize: bool,
    /// f64 keeps intermediate files lossless.
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeArg,
}

#[derive(Args)]
struct MatchArgs {
    /// Query descriptor file; repeat to match delta banks (multi-delta).
    #[arg(long, required = true)]
    query: Vec<PathBuf>,
    /// Reference descriptor file; repeat to match delta banks (multi-delta).
    #[arg(long, required = true)]
    reference: Vec<PathBuf>,
    #[arg(long)]
    seqmatch: Option<usize>,
    #[arg(long)]
    pca_k: Option<usize>,
    #[arg(long, value_enum, default_value = "reference")]
    pca_fit: FitArg,
    #[arg(long)]
    pca_no_center: bool,
    #[arg(long)]
    pca_whiten: bool,
    /// Best-match CSV (query_idx,ref_idx,distance).
    #[arg(long)]
    output: PathBuf,
    /// Also write the full distance matrix as an f64 descriptor file.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct GtArgs {
    /// query_idx,ref_idx CSV; identity correspondence when absent.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    radius: f64,
    #[arg(long, value_enum, default_value = "frames")]
    radius_mode: ModeArg,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    matches: PathBuf,
    /// Reference frame count, needed to validate ground truth indices.
    #[arg(long)]
    ref_count: Option<usize>,
    #[command(flatten)]
    gt: GtArgs,
    /// Reference positions CSV (x,y per frame) for meters mode.
    #[arg(long)]
    reference_positions: Option<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
    /// Labels copied into summary.json.
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seqmatch_length: Option<usize>,
    #[arg(long)]
    pca_k: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Largest frame offset to profile (default T/4, capped at 512).
    #[arg(long)]
    max_offset: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Factor applied to the estimated lower bound.
    #[arg(long, default_value_t = 1.0)]
    multiplier: f64,
    /// Write the profile as offset,median_distance CSV.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    frames: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    latent_smooth_window: usize,
    #[arg(long, default_value_t = 4.0)]
    latent_mean_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    offset_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_scale: f64,
    /// Query time warp as u:v control points, e.g. 0:0,0.5:0.25,1:1
    #[arg(long, value_delimiter = ',')]
    warp: Vec<String>,
    #[arg(long, default_value_t = 1)]
    offset_segments: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DtypeArg,
}

#[derive(Args)]
struct RankDimsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct ShuffleArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; other flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    reference: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    query: Option<PathBuf>,
    #[arg(long)]
    reference_positions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "delta")]
    transform: Kind,
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[arg(long, value_delimiter = ',')]
    spans: Vec<usize>,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    seqmatch: Option<usize>,
    #[arg(long)]
    pca_k: Option<usize>,
    #[arg(long, value_enum, default_value = "reference")]
    pca_fit: FitArg,
    #[arg(long)]
    pca_no_center: bool,
    #[arg(long)]
    pca_whiten: bool,
    #[command(flatten)]
    gt: GtArgs,
    #[arg(long, required_unless_present = "config")]
    output_dir: Option<PathBuf>,
}

fn dtype(d: DtypeArg) -> Dtype {
    match d {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    }
}

fn fit_source(f: FitArg) -> PcaFitSource {
    match f {
        FitArg::Reference => PcaFitSource::Reference,
        FitArg::Concatenated => PcaFitSource::Concatenated,
    }
}

fn span_path(base: &Path, span: usize) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("delta");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_l{span}.{ext}"),
        None => format!("{stem}_l{span}"),
    };
    base.with_file_name(name)
}

fn load_gt(args: &GtArgs, query_count: usize, ref_count: usize) -> Result<GroundTruth> {
    let mode = args.radius_mode.into();
    match &args.ground_truth {
        Some(p) => io::read_ground_truth(p, ref_count, mode, args.radius),
        None if query_count == ref_count => GroundTruth::identity(query_count, mode, args.radius),
        None => Err(Error::Config(format!(
            "no ground truth given and traverse lengths differ ({query_count} vs {ref_count})"
        ))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let series = io::read_descriptors(&a.input).map_err(|e| e.in_stage("load"))?;
    let dt = dtype(a.dtype);
    if matches!(a.padding, PadArg::Valid) {
        if !matches!(a.kind, Kind::Delta) {
            return Err(Error::Config("valid padding only applies to delta".into()));
        }
        let cfg = DeltaConfig::new(a.window).with_padding(Padding::ValidOnly);
        let mut out = delta(&series, &cfg).map_err(|e| e.in_stage("transform"))?;
        if a.normalize {
            out = delta_vpr::series::l2_normalize(&out);
        }
        return io::write_descriptors_as(&a.output, &out, dt);
    }
    let mut params = RunParams::new(a.kind.into(), a.window);
    params.spans = a.spans;
    params.normalize = a.normalize;
    params.validate()?;
    match apply_transform(&series, &params).map_err(|e| e.in_stage("transform"))? {
        Transformed::Single(s) => io::write_descriptors_as(&a.output, &s, dt),
        Transformed::Bank(bank) => {
            for (span, s) in bank.members() {
                let p = span_path(&a.output, *span);
                io::write_descriptors_as(&p, s, dt)?;
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn load_side(paths: &[PathBuf]) -> Result<Transformed> {
    let series = paths
        .iter()
        .map(io::read_descriptors)
        .collect::<Result<Vec<DescriptorSeries>>>()?;
    if series.len() == 1 {
        return Ok(Transformed::Single(series.into_iter().next().expect("one")));
    }
    // span tags are positional; only their count matters for matching
    let members = series.into_iter().enumerate().map(|(i, s)| (i + 1, s)).collect();
    Ok(Transformed::Bank(delta_vpr::DeltaBank::new(members)?))
}

fn cmd_match(a: MatchArgs) -> Result<()> {
    let q = load_side(&a.query).map_err(|e| e.in_stage("load query"))?;
    let r = load_side(&a.reference).map_err(|e| e.in_stage("load reference"))?;
    let mut params = RunParams::new(TransformKind::Raw, 1);
    params.pca_k = a.pca_k;
    params.pca_fit = fit_source(a.pca_fit);
    params.pca_options = PcaOptions {
        center: !a.pca_no_center,
        whiten: a.pca_whiten,
    };
    params.seqmatch_length = a.seqmatch;
    params.validate()?;
    let (r, q) = apply_pca(&r, &q, &params).map_err(|e| e.in_stage("pca"))?;
    let m = match_transformed(&q, &r, a.seqmatch).map_err(|e| e.in_stage("match"))?;
    if let Some(p) = &a.matrix {
        let s = DescriptorSeries::new(m.values().to_owned())?;
        io::write_descriptors_as(p, &s, Dtype::F64)?;
    }
    io::write_matches(&a.output, &delta_vpr::matching::retrieve_best(&m), None)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let matches = io::read_matches(&a.matches).map_err(|e| e.in_stage("load matches"))?;
    let positions = a.reference_positions.as_ref().map(io::read_positions).transpose()?;
    let ref_count = a
        .ref_count
        .or_else(|| positions.as_ref().map(|p| p.nrows()))
        .unwrap_or(usize::MAX);
    let gt = load_gt(&a.gt, matches.len(), if a.gt.ground_truth.is_some() { ref_count } else { matches.len() })
        .map_err(|e| e.in_stage("load ground truth"))?;
    let pv = positions.as_ref().map(|p| p.view());
    let correct = correctness(&matches, &gt, pv).map_err(|e| e.in_stage("evaluate"))?;
    let curve = evaluate_pr(&matches, &gt, pv).map_err(|e| e.in_stage("evaluate"))?;
    create_dir(&a.output_dir)?;
    io::write_matches(a.output_dir.join(MATCHES_FILE), &matches, Some(&correct))?;
    io::write_pr_curve(a.output_dir.join(PR_FILE), &curve)?;
    let summary = Summary {
        precision_at_full_recall: curve.precision_at_full_recall(),
        max_f1: curve.max_f1(),
        radius: gt.radius(),
        radius_mode: gt.radius_mode(),
        transform: a.transform,
        window: a.window,
        seqmatch_length: a.seqmatch_length,
        pca_k: a.pca_k,
    };
    io::write_summary(a.output_dir.join(SUMMARY_FILE), &summary)?;
    print_summary(&summary);
    Ok(())
}

fn print_summary(s: &Summary) {
    println!(
        "precision_at_full_recall={} max_f1={} radius={} {}",
        s.precision_at_full_recall, s.max_f1, s.radius, s.radius_mode
    );
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let series = io::read_descriptors(&a.input).map_err(|e| e.in_stage("load"))?;
    let max_offset = a
        .max_offset
        .unwrap_or_else(|| default_max_offset(series.frame_count()).min(series.frame_count() - 1));
    let profile = self_distance_profile(&series, max_offset).map_err(|e| e.in_stage("profile"))?;
    if let Some(p) = &a.profile {
        io::write_profile(p, &profile)?;
    }
    let lower = estimate_span(&profile, a.threshold).map_err(|e| e.in_stage("estimate"))?;
    let span = scaled_span(lower, a.multiplier)?;
    println!("lower_bound={lower} span={span}");
    Ok(())
}

fn parse_warp(points: &[String]) -> Result<Option<Vec<(f64, f64)>>> {
    if points.is_empty() {
        return Ok(None);
    }
    points
        .iter()
        .map(|p| {
            let (u, v) = p
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("warp point {p:?} is not u:v")))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("warp point {p:?}: {e}")));
            Ok((num(u)?, num(v)?))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let params = SynthParams {
        frames: a.frames,
        dim: a.dim,
        latent_smooth_window: a.latent_smooth_window,
        latent_mean_scale: a.latent_mean_scale,
        offset_scale: a.offset_scale,
        noise_scale: a.noise_scale,
        warp: parse_warp(&a.warp)?,
        offset_segments: a.offset_segments,
        seed: a.seed,
    };
    let (r, q, gt) = generate_traverse_pair(&params)?;
    create_dir(&a.output_dir)?;
    let dt = dtype(a.dtype);
    io::write_descriptors_as(a.output_dir.join("reference.dvpr"), &r, dt)?;
    io::write_descriptors_as(a.output_dir.join("query.dvpr"), &q, dt)?;
    io::write_ground_truth(a.output_dir.join("gt.csv"), &gt)
}

fn cmd_rank_dims(a: RankDimsArgs) -> Result<()> {
    let r = io::read_descriptors(&a.reference)?;
    let q = io::read_descriptors(&a.query)?;
    let gt_args = GtArgs {
        ground_truth: a.ground_truth,
        radius: 0.0,
        radius_mode: ModeArg::Frames,
    };
    let gt = load_gt(&gt_args, q.frame_count(), r.frame_count())?;
    let dims = rank_dimensions(&r, &q, &gt, a.top_k)?;
    println!("rank,dimension");
    for (i, d) in dims.iter().enumerate() {
        println!("{i},{d}");
    }
    Ok(())
}

fn cmd_shuffle(a: ShuffleArgs) -> Result<()> {
    let r = io::read_descriptors(&a.reference)?;
    let q = io::read_descriptors(&a.query)?;
    let gt_args = GtArgs {
        ground_truth: a.ground_truth,
        radius: 0.0,
        radius_mode: ModeArg::Frames,
    };
    let gt = load_gt(&gt_args, q.frame_count(), r.frame_count())?;
    let (r, q, gt) = apply_permutation(&r, &q, &gt, a.seed)?;
    create_dir(&a.output_dir)?;
    io::write_descriptors_as(a.output_dir.join("reference.dvpr"), &r, Dtype::F64)?;
    io::write_descriptors_as(a.output_dir.join("query.dvpr"), &q, Dtype::F64)?;
    io::write_ground_truth(a.output_dir.join("gt.csv"), &gt)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig {
            reference: a.reference.expect("required by clap"),
            query: a.query.expect("required by clap"),
            reference_positions: a.reference_positions,
            ground_truth: a.gt.ground_truth,
            transform: a.transform.into(),
            window: a.window,
            spans: a.spans,
            normalize: a.normalize,
            seqmatch_length: a.seqmatch,
            pca_k: a.pca_k,
            pca_fit: fit_source(a.pca_fit),
            pca_center: !a.pca_no_center,
            pca_whiten: a.pca_whiten,
            radius: a.gt.radius,
            radius_mode: a.gt.radius_mode.into(),
            output_dir: a.output_dir.expect("required by clap"),
        },
    };
    let out = run_pipeline(&cfg)?;
    print_summary(&out.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform(a) => cmd_transform(a),
        Command::Match(a) => cmd_match(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::RankDims(a) => cmd_rank_dims(a),
        Command::Shuffle(a) => cmd_shuffle(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
            })
        }
    }
}
