//! Command-line front-end wiring the pipeline for batch use.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (parse/validation),
//! 3 internal invariant violation. All randomness enters through explicit
//! `--seed` flags; per-case work parallelizes behind `--jobs` without
//! changing any output byte.

use crate::augment::{apply_pipeline, AugmentError, AugmentSpec};
use crate::metrics::{evaluate_case, ClassMetrics, MetricsError, MetricsRecord};
use crate::nifti::{read_labels, read_volume, write_labels, write_volume, NiftiError};
use crate::phantom::{generate, PhantomError, PhantomSpec};
use crate::preprocess::{
    emit_training_protocol, preprocess_case, PreprocessError, DEFAULT_CLIP_PERCENTILE,
};
use crate::report::{
    aggregate, compare_methods, parse_json_report, render, MetricKind, Report, ReportError,
    ReportFormat,
};
use crate::stats::{Adjustment, StatsError};
use crate::volume::{resample_intensity, resample_labels, TissueClass, VolumeError};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Errors surfaced by the CLI, bucketed by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<NiftiError> for CliError {
    fn from(e: NiftiError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<VolumeError> for CliError {
    fn from(e: VolumeError) -> Self {
        match e {
            // Post-condition breakage inside the pipeline, not bad input.
            VolumeError::NonFinite(_) | VolumeError::DegenerateOutput => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn parse_triple_f64(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got '{s}'"));
    }
    let mut out = [0.0; 3];
    for (dst, part) in out.iter_mut().zip(parts) {
        *dst = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad component '{part}': {e}"))?;
    }
    Ok(out)
}

fn parse_triple_usize(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got '{s}'"));
    }
    let mut out = [0; 3];
    for (dst, part) in out.iter_mut().zip(parts) {
        *dst = part
            .trim()
            .parse::<usize>()
            .map_err(|e| format!("bad component '{part}': {e}"))?;
    }
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(
    name = "voxmetrics",
    version,
    about = "Volumetric segmentation evaluation and preprocessing toolkit"
)]
struct Cli {
    /// Worker threads for per-case work; never changes results.
    #[arg(long, global = true, env = "VOXMETRICS_JOBS", default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clip at a percentile and min-max scale an intensity volume.
    Preprocess(PreprocessArgs),
    /// Resample a volume to a new voxel spacing.
    Resample(ResampleArgs),
    /// Write augmented copies of an image/label pair.
    Augment(AugmentArgs),
    /// Evaluate predicted label maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Kruskal-Wallis and Dunn comparison of methods from records files.
    Compare(CompareArgs),
    /// Aggregate records into a per-method summary table.
    Report(ReportArgs),
    /// Generate a synthetic phantom image/label pair.
    Phantom(PhantomArgs),
    /// Write the training-protocol manifest.
    Protocol(ProtocolArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CLIP_PERCENTILE)]
    clip_percentile: f64,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Target spacing in mm as sx,sy,sz.
    #[arg(long, value_parser = parse_triple_f64)]
    spacing: [f64; 3],
    /// Treat the input as a label map (nearest-neighbor sampling).
    #[arg(long)]
    labels: bool,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    /// JSON augmentation config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of augmented pairs to write.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    method: String,
    /// Output records file; .csv extension selects CSV, anything else JSON.
    #[arg(long = "out")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long = "records", required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long)]
    metric: MetricKindArg,
    #[arg(long, default_value = "bonferroni")]
    adjust: String,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "records", required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_parser = parse_triple_usize, default_value = "64,64,64")]
    dims: [usize; 3],
    #[arg(long, value_parser = parse_triple_f64, default_value = "1,1,1")]
    spacing: [f64; 3],
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    #[arg(long = "out")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy)]
struct MetricKindArg(MetricKind);

impl std::str::FromStr for MetricKindArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<MetricKind>().map(MetricKindArg)
    }
}

/// Run the CLI and return the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return 1;
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Resample(args) => cmd_resample(args),
        Command::Augment(args) => cmd_augment(args, cli.jobs),
        Command::Evaluate(args) => cmd_evaluate(args, cli.jobs),
        Command::Compare(args) => cmd_compare(args),
        Command::Report(args) => cmd_report(args),
        Command::Phantom(args) => cmd_phantom(args),
        Command::Protocol(args) => cmd_protocol(args),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "input file '{}' does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if !path.is_dir() {
        return Err(CliError::Data(format!(
            "directory '{}' does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<(), CliError> {
    require_file(&args.input)?;
    let vol = read_volume(&args.input)?;
    let out = preprocess_case(&vol, args.clip_percentile)?;
    write_volume(&out, &args.output)?;
    Ok(())
}

fn cmd_resample(args: &ResampleArgs) -> Result<(), CliError> {
    require_file(&args.input)?;
    if args.labels {
        let labels = read_labels(&args.input)?;
        let out = resample_labels(&labels, args.spacing)?;
        write_labels(&out, &args.output)?;
    } else {
        let vol = read_volume(&args.input)?;
        let out = resample_intensity(&vol, args.spacing)?;
        write_volume(&out, &args.output)?;
    }
    Ok(())
}

fn cmd_augment(args: &AugmentArgs, jobs: usize) -> Result<(), CliError> {
    require_file(&args.image)?;
    require_file(&args.labels)?;
    let mut spec = match &args.config {
        Some(path) => {
            require_file(path)?;
            let json = std::fs::read_to_string(path)?;
            AugmentSpec::from_json(&json)?
        }
        None => AugmentSpec::default(),
    };
    spec.seed = args.seed;
    spec.validate()?;

    let vol = read_volume(&args.image)?;
    let labels = read_labels(&args.labels)?;
    let image_dir = args.out_dir.join("images");
    let label_dir = args.out_dir.join("labels");
    std::fs::create_dir_all(&image_dir)?;
    std::fs::create_dir_all(&label_dir)?;

    let pool = thread_pool(jobs)?;
    pool.install(|| {
        (0..args.count)
            .into_par_iter()
            .map(|i| -> Result<(), CliError> {
                let (v, l) = apply_pipeline(&spec, i as u64, &vol, &labels)?;
                let name = format!("aug_{i:03}.nii.gz");
                write_volume(&v, image_dir.join(&name))?;
                write_labels(&l, label_dir.join(&name))?;
                Ok(())
            })
            .collect::<Result<Vec<()>, CliError>>()
    })?;
    println!(
        "wrote {} augmented pair(s) under {}",
        args.count,
        args.out_dir.display()
    );
    Ok(())
}

/// Map of case id (file name without .nii/.nii.gz) to path.
fn list_nifti_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    require_dir(dir)?;
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        let case = if let Some(stem) = name.strip_suffix(".nii.gz") {
            stem.to_string()
        } else if let Some(stem) = name.strip_suffix(".nii") {
            stem.to_string()
        } else {
            continue;
        };
        out.insert(case, entry.path());
    }
    Ok(out)
}

fn cmd_evaluate(args: &EvaluateArgs, jobs: usize) -> Result<(), CliError> {
    let pred = list_nifti_files(&args.pred_dir)?;
    let gt = list_nifti_files(&args.gt_dir)?;

    let only_pred: Vec<&String> = pred.keys().filter(|k| !gt.contains_key(*k)).collect();
    let only_gt: Vec<&String> = gt.keys().filter(|k| !pred.contains_key(*k)).collect();
    if !only_pred.is_empty() || !only_gt.is_empty() {
        return Err(CliError::Data(format!(
            "prediction and ground-truth case sets differ; only in pred: {only_pred:?}, only in gt: {only_gt:?}"
        )));
    }
    if pred.is_empty() {
        return Err(CliError::Data(format!(
            "no NIfTI files found in '{}'",
            args.pred_dir.display()
        )));
    }

    let cases: Vec<(&String, &PathBuf)> = pred.iter().collect();
    let pool = thread_pool(jobs)?;
    let mut records = pool.install(|| {
        cases
            .par_iter()
            .map(|(case, pred_path)| -> Result<MetricsRecord, CliError> {
                let pred_labels = read_labels(pred_path)?;
                let gt_labels = read_labels(&gt[*case])?;
                Ok(evaluate_case(
                    &pred_labels,
                    &gt_labels,
                    case,
                    &args.method,
                )?)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    write_records_file(&records, &args.output)?;
    println!(
        "evaluated {} case(s) -> {}",
        records.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let records = read_records_files(&args.records)?;
    let adjustment: Adjustment = args.adjust.parse()?;
    let comparison = compare_methods(&records, args.metric.0, adjustment)?;
    println!(
        "Kruskal-Wallis ({}): H = {:.4}, df = {}, p = {:.6e} (tie correction {:.4})",
        comparison.metric,
        comparison.kruskal.h,
        comparison.kruskal.df,
        comparison.kruskal.p,
        comparison.kruskal.tie_correction
    );
    println!(
        "sample unit: per-case overall mean | adjustment: {}",
        comparison.dunn.adjustment
    );
    println!("Dunn post-hoc:");
    for pair in &comparison.dunn.pairs {
        println!(
            "  {} vs {}: z = {:+.4}, p_raw = {:.6e}, p_adj = {:.6e}",
            pair.method_a, pair.method_b, pair.z, pair.p_raw, pair.p_adjusted
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let records = read_records_files(&args.records)?;
    let format: ReportFormat = args
        .format
        .parse()
        .map_err(CliError::Usage)?;
    let summaries = aggregate(&records)?;
    let rendered = render(&summaries, &[], format)?;
    print!("{rendered}");
    Ok(())
}

fn cmd_phantom(args: &PhantomArgs) -> Result<(), CliError> {
    let spec = PhantomSpec::new(args.dims, args.spacing, args.seed);
    let (volume, labels) = generate(&spec)?;
    let image_dir = args.out_dir.join("images");
    let label_dir = args.out_dir.join("labels");
    std::fs::create_dir_all(&image_dir)?;
    std::fs::create_dir_all(&label_dir)?;
    write_volume(&volume, image_dir.join("phantom.nii.gz"))?;
    write_labels(&labels, label_dir.join("phantom.nii.gz"))?;
    println!("wrote phantom pair under {}", args.out_dir.display());
    Ok(())
}

fn cmd_protocol(args: &ProtocolArgs) -> Result<(), CliError> {
    let manifest = emit_training_protocol();
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    json.push('\n');
    std::fs::write(&args.output, json)?;
    Ok(())
}

/// Pinned CSV header for per-case records files.
pub const RECORDS_CSV_HEADER: [&str; 6] = ["case_id", "method", "class", "dsc", "iou", "hd95"];

fn metric_cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) if v.is_infinite() => "inf".to_string(),
        Some(v) => v.to_string(),
    }
}

fn parse_metric_cell(s: &str, context: &str) -> Result<Option<f64>, CliError> {
    match s {
        "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        other => other
            .parse::<f64>()
            .map(Some)
            .map_err(|e| CliError::Data(format!("{context}: bad value '{other}': {e}"))),
    }
}

/// Write records as CSV (one row per case and class) or a JSON array,
/// selected by the `.csv` extension.
pub fn write_records_file(records: &[MetricsRecord], path: &Path) -> Result<(), CliError> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(RECORDS_CSV_HEADER)
            .map_err(|e| CliError::Data(e.to_string()))?;
        for record in records {
            for cm in &record.per_class {
                writer
                    .write_record([
                        record.case_id.as_str(),
                        record.method.as_str(),
                        cm.class.tag(),
                        &metric_cell(cm.dsc),
                        &metric_cell(cm.iou),
                        &metric_cell(cm.hd95),
                    ])
                    .map_err(|e| CliError::Data(e.to_string()))?;
            }
        }
        let bytes = writer.into_inner().expect("in-memory writer");
        std::fs::write(path, bytes)?;
    } else {
        let mut json = serde_json::to_string_pretty(records)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        json.push('\n');
        std::fs::write(path, json)?;
    }
    Ok(())
}

/// Read one records file (CSV or JSON by extension).
pub fn read_records_file(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    require_file(path)?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if !is_csv {
        let json = std::fs::read_to_string(path)?;
        return serde_json::from_str(&json)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }

    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    let mut grouped: BTreeMap<(String, String), Vec<ClassMetrics>> = BTreeMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::Data(e.to_string()))?;
        if row.len() != RECORDS_CSV_HEADER.len() {
            return Err(CliError::Data(format!(
                "{}: expected {} columns, got {}",
                path.display(),
                RECORDS_CSV_HEADER.len(),
                row.len()
            )));
        }
        let case_id = row[0].to_string();
        let method = row[1].to_string();
        let class = TissueClass::from_tag(&row[2]).ok_or_else(|| {
            CliError::Data(format!("{}: unknown class '{}'", path.display(), &row[2]))
        })?;
        let context = format!("{} case {case_id}", path.display());
        let cm = ClassMetrics {
            class,
            dsc: parse_metric_cell(&row[3], &context)?,
            iou: parse_metric_cell(&row[4], &context)?,
            hd95: parse_metric_cell(&row[5], &context)?,
        };
        let key = (case_id, method);
        if !grouped.contains_key(&key) {
            order.push(key.clone());
        }
        grouped.entry(key).or_default().push(cm);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let per_class = grouped.remove(&key).expect("key recorded");
            MetricsRecord {
                case_id: key.0,
                method: key.1,
                per_class,
            }
        })
        .collect())
}

/// Read and merge several records files.
pub fn read_records_files(paths: &[PathBuf]) -> Result<Vec<MetricsRecord>, CliError> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(read_records_file(path)?);
    }
    Ok(records)
}

/// Parse a JSON report back into summaries (round-trip surface for tests
/// and downstream tooling).
pub fn parse_report(json: &str) -> Result<Report, ReportError> {
    parse_json_report(json)
}
