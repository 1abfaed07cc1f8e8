//! The `symmatch` command line: synth, train, match, symmetrize, eval.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the inputs cannot
//! be read or processed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::error::Error;
use crate::eval::{self, TargetGeometry};
use crate::geom::{self, load_shape, read_map, write_map, write_ply_colored, Axis, Shape};
use crate::infer;
use crate::losses::LossMode;
use crate::train::{self, synth, Dataset, TrainConfig, TrainOutputs};

const FORMATS: &str = "\
FILE FORMATS
  Shapes      .off, .ply (ascii or binary little-endian) and .obj. Files
              without faces are read as bare point clouds.
  Maps        one target vertex index per line, line i for source vertex i.
              Indices are 1-based unless --zero-indexed is given.
  Dataset     index.toml: `pairing` (to_template | all_pairs | explicit),
              `template`, and [[shape]] tables with name, path and optional
              gt (map to the template), sym (self-symmetry) and mesh;
              explicit pairings list [[pair]] tables with source, target, map.
  Config      TOML with optional [arch], [loss], [train] and [data] sections.
  Checkpoint  text header starting with SYMMATCH-CKPT, then raw tensors.
  Report      JSON summary plus <stem>.errors.csv and <stem>.curve.csv.";

#[derive(Parser, Debug)]
#[command(name = "symmatch", version, about = "Learned-embedding shape matching and self-symmetry detection", after_help = FORMATS)]
struct Cli {
    /// Read and write 0-based map files.
    #[arg(long, global = true)]
    zero_indexed: bool,
    /// Use a single worker thread so runs repeat exactly.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset: a symmetric template and warped copies.
    Synth(SynthArgs),
    /// Train an encoder on a dataset index.
    Train(TrainArgs),
    /// Map every point of a source shape to the target shape.
    Match(MatchArgs),
    /// Estimate a shape's self-symmetry map.
    Symmetrize(SymArgs),
    /// Score a predicted map against ground truth by geodesic error.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of warped shapes besides the template.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    /// Points per shape (even). The default equals the training sample
    /// count, so default runs can train on the output.
    #[arg(long, default_value_t = 3000)]
    points: usize,
    #[arg(long, default_value_t = 0.2)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory holding index.toml, or an index file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<LossMode>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV; defaults to the checkpoint path with `.metrics.csv`.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the source as PLY colored by the target's coordinates.
    #[arg(long)]
    colors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SymArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    shape: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_axis, default_value = "x")]
    axis: Axis,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Target surface (or cloud) on which distances are measured.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replaces the geometry's own scale normalizer.
    #[arg(long)]
    normalizer: Option<f64>,
    /// Neighbours per point when the target has no faces.
    #[arg(long, default_value_t = eval::DEFAULT_CLOUD_K)]
    knn: usize,
    /// Seed of the random-map baseline reported next to the score.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mode(s: &str) -> Result<LossMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    match s {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        _ => Err(format!("axis must be x, y or z, got '{s}'")),
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs the command line with `args` (including the program name) and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Train(a) => train_cmd(a, cli.deterministic),
        Command::Match(a) => match_cmd(a, cli.zero_indexed),
        Command::Symmetrize(a) => symmetrize_cmd(a, cli.zero_indexed),
        Command::Eval(a) => eval_cmd(a, cli.zero_indexed),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn synth_cmd(a: &SynthArgs) -> CliResult {
    if a.points == 0 || !a.points.is_multiple_of(2) {
        return Err(Failure::Usage(format!("--points must be even and positive, got {}", a.points)));
    }
    if !(a.amplitude >= 0.0 && a.amplitude.is_finite()) {
        return Err(Failure::Usage(format!("--amplitude must be non-negative, got {}", a.amplitude)));
    }
    let index = synth::write_synthetic_dataset(
        &a.out,
        &synth::SynthOptions {
            shapes: a.pairs,
            points: a.points,
            amplitude: a.amplitude,
            seed: a.seed,
        },
    )?;
    println!("wrote {} shapes and {}", a.pairs + 1, index.display());
    Ok(())
}

fn index_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("index.toml")
    } else {
        data.to_path_buf()
    }
}

fn train_cmd(a: &TrainArgs, deterministic: bool) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.loss.mode = m;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.train.deterministic |= deterministic;
    let data = match (&a.data, &cfg.data.index) {
        (Some(d), _) => index_path(d),
        (None, Some(p)) => match &a.config {
            Some(c) if p.is_relative() => c.parent().unwrap_or(Path::new(".")).join(p),
            _ => p.clone(),
        },
        (None, None) => return Err(Failure::Usage("no dataset: pass --data or set [data] index".into())),
    };
    let ds = Dataset::load(&data)?;
    let metrics = a.metrics.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".metrics.csv");
        PathBuf::from(s)
    });
    let run = train::train(
        &ds,
        &cfg,
        TrainOutputs {
            checkpoint: Some(&a.out),
            metrics: Some(&metrics),
        },
    )?;
    match run.metrics.last() {
        Some(m) => println!(
            "trained {} steps ({}): L_NN {:.4e}, L_comm {:.4e}, L_total {:.4e}",
            m.step,
            cfg.loss.mode.name(),
            m.l_nn,
            m.l_comm,
            m.l_total
        ),
        None => println!("no training steps run; wrote the initial weights"),
    }
    println!("checkpoint {}, metrics {}", a.out.display(), metrics.display());
    Ok(())
}

fn normalized(path: &Path) -> Result<(Shape, geom::PointCloud), Error> {
    let shape = load_shape(path, None)?;
    let cloud = geom::normalize(&shape.cloud())?.cloud;
    Ok((shape, cloud))
}

fn match_cmd(a: &MatchArgs, zero_indexed: bool) -> CliResult {
    let ck = checkpoint::load(&a.ckpt)?;
    let (src_shape, src) = normalized(&a.source)?;
    let (tgt_shape, tgt) = normalized(&a.target)?;
    let result = infer::match_clouds(&ck.params, &src, &tgt)?;
    write_map(&a.out, &result.map, zero_indexed)?;
    if let Some(ply) = &a.colors {
        let colors = infer::transfer_colors(&result.map, &infer::coordinate_colors(&tgt_shape.cloud()))?;
        let faces = src_shape.mesh().map(|m| m.faces().to_vec()).unwrap_or_default();
        write_ply_colored(ply, src_shape.cloud().positions(), &faces, &colors)?;
    }
    println!("matched {} points in {:.1} ms", result.map.source_size(), result.elapsed_ms);
    Ok(())
}

fn symmetrize_cmd(a: &SymArgs, zero_indexed: bool) -> CliResult {
    let ck = checkpoint::load(&a.ckpt)?;
    let (_, cloud) = normalized(&a.shape)?;
    let result = infer::self_symmetry(&ck.params, &cloud, a.axis)?;
    write_map(&a.out, &result.map, zero_indexed)?;
    let fixed = result.map.targets().iter().enumerate().filter(|(i, t)| i == *t).count();
    println!("symmetry map of {} points ({} fixed) in {:.1} ms", result.map.source_size(), fixed, result.elapsed_ms);
    Ok(())
}

fn eval_cmd(a: &EvalArgs, zero_indexed: bool) -> CliResult {
    if let Some(v) = a.normalizer {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::Usage(format!("--normalizer must be positive, got {v}")));
        }
    }
    if a.knn == 0 {
        return Err(Failure::Usage("--knn must be at least 1".into()));
    }
    let pred = read_map(&a.pred, zero_indexed)?;
    let gt = read_map(&a.gt, zero_indexed)?;
    let shape = load_shape(&a.target, None)?;
    let cloud = shape.cloud();
    let target = match &shape {
        Shape::Mesh(m) => TargetGeometry::Mesh(m),
        Shape::Cloud(_) => TargetGeometry::Cloud { cloud: &cloud, k: a.knn },
    };
    let report = eval::geodesic_error(&pred, &gt, target, a.normalizer)?;
    let baseline = eval::random_baseline(&gt, target, a.seed, a.normalizer)?;
    eval::write_report_with_baseline(&a.out, &report, Some(baseline.mean_geo_err_x100))?;
    println!(
        "mean geodesic error x100: {:.4} (random baseline {:.4}, normalizer {} = {:.6})",
        report.mean_geo_err_x100, baseline.mean_geo_err_x100, report.normalizer_kind, report.normalizer
    );
    Ok(())
}
