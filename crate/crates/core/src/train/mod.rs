//! Training: pair batches, per-pair losses and gradients, Adam updates,
//! metrics and checkpoints.
//!
//! Every pair of a batch gets its own tape. Gradients are summed in pair
//! order and divided by the batch size, so the update does not depend on
//! how many worker threads computed the pairs.

mod adam;
mod config;
pub mod dataset;
pub mod synth;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{DataConfig, TrainConfig, TrainSettings};
pub use dataset::{DataShape, Dataset, DatasetIndex, PairSpec, Pairing};

use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::geom::{self, Axis, Point3, PointCloud, PointMap};
use crate::losses::{self, LossConfig, LossMode};
use crate::model::{embed, EncoderParams};

/// One sampled training pair.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub x: PointCloud,
    pub y: PointCloud,
    /// Ground-truth image on the full target of each sampled source point.
    pub gt: Vec<Point3>,
    /// Symmetry maps restricted to the samples, when the data has them.
    pub sym_x: Option<PointMap>,
    pub sym_y: Option<PointMap>,
}

/// Samples the listed pairs, source then target, in order. Sampling does
/// not depend on the loss mode.
pub fn make_batch(ds: &Dataset, pair_ids: &[usize], sample_count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<TrainPair>> {
    pair_ids
        .iter()
        .map(|&p| {
            let spec = ds.pairs.get(p).ok_or_else(|| Error::IndexOutOfRange {
                index: p,
                size: ds.pairs.len(),
                context: "pair id".into(),
            })?;
            let (src, tgt) = (&ds.shapes[spec.source], &ds.shapes[spec.target]);
            let x = geom::sample_with_rng(&src.cloud, sample_count, rng)?;
            let y = geom::sample_with_rng(&tgt.cloud, sample_count, rng)?;
            let gt = geom::restrict_map(&spec.map, x.ids(), &tgt.cloud)?;
            let sym_x = src.sym.as_ref().map(|s| geom::restrict_sym_map(s, &x, &src.cloud)).transpose()?;
            let sym_y = tgt.sym.as_ref().map(|s| geom::restrict_sym_map(s, &y, &tgt.cloud)).transpose()?;
            Ok(TrainPair { x, y, gt, sym_x, sym_y })
        })
        .collect()
}

fn points_tensor(points: &[Point3]) -> Result<Tensor> {
    Tensor::new(points.len(), 3, points.iter().flatten().copied().collect())
}

/// Loss values of one pair and, when requested, the gradient of its total
/// with respect to every parameter tensor.
#[derive(Clone, Debug)]
pub struct PairLoss {
    pub nn: f64,
    /// Second term of the mode before weighting; 0 for `nn_only`.
    pub comm: f64,
    pub total: f64,
    pub grads: Option<Vec<Tensor>>,
}

/// Builds the selected objective for one pair on a fresh tape.
pub fn pair_loss(params: &EncoderParams, loss: &LossConfig, flip_axis: Axis, pair: &TrainPair, with_grad: bool) -> Result<PairLoss> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, with_grad);
    let arch = params.arch();
    let embed_cloud = |tape: &mut Tape, c: &PointCloud| embed(tape, arch, &bound, c);

    let ex = embed_cloud(&mut tape, &pair.x)?;
    let ey = embed_cloud(&mut tape, &pair.y)?;
    let s = losses::soft_correspondence(&mut tape, ex, ey, loss.tau)?;
    let p_y = tape.constant(points_tensor(pair.y.positions())?);
    let gt = tape.constant(points_tensor(&pair.gt)?);
    let nn = losses::nn_loss(&mut tape, s, p_y, gt)?;

    let missing = |which: &str| Error::Config(format!("mode {} needs the symmetry map of {which}", loss.mode.name()));
    let comm: Option<Var> = match loss.mode {
        LossMode::NnOnly => None,
        LossMode::SupervisedComm => {
            let sx = pair.sym_x.as_ref().ok_or_else(|| missing("the source"))?;
            let sy = pair.sym_y.as_ref().ok_or_else(|| missing("the target"))?;
            Some(losses::comm_loss_supervised(&mut tape, s, sx, sy, loss.comm_norm)?)
        }
        LossMode::NnPlusSymNn => {
            let sx = pair.sym_x.as_ref().ok_or_else(|| missing("the source"))?;
            let sy = pair.sym_y.as_ref().ok_or_else(|| missing("the target"))?;
            let exf = embed_cloud(&mut tape, &geom::flip(&pair.x, flip_axis))?;
            let eyf = embed_cloud(&mut tape, &geom::flip(&pair.y, flip_axis))?;
            let s_xxf = losses::soft_correspondence(&mut tape, ex, exf, loss.tau)?;
            let s_yyf = losses::soft_correspondence(&mut tape, ey, eyf, loss.tau)?;
            let p_x = tape.constant(points_tensor(pair.x.positions())?);
            let a = losses::nn_sym_loss(&mut tape, s_xxf, p_x, sx)?;
            let b = losses::nn_sym_loss(&mut tape, s_yyf, p_y, sy)?;
            Some(tape.add(a, b)?)
        }
        LossMode::UnsupervisedComm => {
            let exf = embed_cloud(&mut tape, &geom::flip(&pair.x, flip_axis))?;
            let eyf = embed_cloud(&mut tape, &geom::flip(&pair.y, flip_axis))?;
            let s_xfx = losses::soft_correspondence(&mut tape, exf, ex, loss.tau)?;
            let s_yyf = losses::soft_correspondence(&mut tape, ey, eyf, loss.tau)?;
            Some(losses::comm_loss_unsupervised(&mut tape, s_xfx, s, s_yyf, loss.comm_norm)?)
        }
    };
    let total = losses::total_loss(&mut tape, loss, nn, comm)?;
    let values = PairLoss {
        nn: tape.value(nn).item(),
        comm: comm.map_or(0.0, |c| tape.value(c).item()),
        total: tape.value(total).item(),
        grads: None,
    };
    if !values.total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    if !with_grad {
        return Ok(values);
    }
    tape.backward(total)?;
    let grads = bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, p)| tape.take_grad(v).unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();
    Ok(PairLoss {
        grads: Some(grads),
        ..values
    })
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub l_nn: f64,
    pub l_comm: f64,
    pub l_total: f64,
    pub wall_ms: f64,
}

pub const METRICS_HEADER: &str = "step,L_NN,L_comm,L_total,wall_ms";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e},{:.3}", self.step, self.l_nn, self.l_comm, self.l_total, self.wall_ms)
    }
}

/// Where a run writes its artifacts. `None` skips that output.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOutputs<'a> {
    pub checkpoint: Option<&'a Path>,
    pub metrics: Option<&'a Path>,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub metrics: Vec<StepMetrics>,
}

fn worker_pool(settings: &TrainSettings) -> Result<rayon::ThreadPool> {
    let threads = if settings.deterministic { 1 } else { settings.threads };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Trains from a fresh initialization seeded by `train.seed`.
pub fn train(ds: &Dataset, cfg: &TrainConfig, out: TrainOutputs) -> Result<TrainResult> {
    let params = EncoderParams::init(&cfg.arch, cfg.train.seed)?;
    train_from(ds, cfg, Checkpoint { params, adam: None }, out)
}

/// Continues training from `start`. The data stream is seeded by
/// `train.seed` alone.
pub fn train_from(ds: &Dataset, cfg: &TrainConfig, start: Checkpoint, out: TrainOutputs) -> Result<TrainResult> {
    cfg.validate()?;
    ds.validate_for(cfg.loss.mode, cfg.train.sample_count)?;
    if start.params.arch() != &cfg.arch {
        return Err(Error::Config("checkpoint architecture differs from the run config".into()));
    }
    let settings = &cfg.train;
    let mut params = start.params;
    let mut adam = start.adam.unwrap_or_else(|| AdamState::new(&params));
    adam.check_matches(&params)?;
    let adam_cfg = settings.adam();
    let pool = worker_pool(settings)?;

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(1);

    let mut log = match out.metrics {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{METRICS_HEADER}").map_err(|e| Error::io(p, e))?;
            Some((p, w))
        }
        None => None,
    };

    let n_pairs = ds.pairs.len();
    let limit = settings.max_steps.unwrap_or(usize::MAX);
    let mut metrics = Vec::new();
    // `max_steps` counts this call's steps; logged steps continue the
    // checkpoint's count.
    let offset = adam.step as usize;
    let mut step = 0;
    let mut order: Vec<usize> = (0..n_pairs).collect();
    'epochs: for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_pairs) {
            if step >= limit {
                break 'epochs;
            }
            let started = Instant::now();
            let batch = make_batch(ds, chunk, settings.sample_count, &mut rng)?;
            let results: Vec<Result<PairLoss>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|pair| pair_loss(&params, &cfg.loss, cfg.data.flip_axis, pair, true))
                    .collect()
            });
            let inv = 1.0 / batch.len() as f64;
            let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
            let (mut l_nn, mut l_comm, mut l_total) = (0.0, 0.0, 0.0);
            for r in results {
                let r = r?;
                l_nn += r.nn * inv;
                l_comm += r.comm * inv;
                l_total += r.total * inv;
                for (acc, g) in grads.iter_mut().zip(r.grads.expect("requested")) {
                    acc.add_assign(&g);
                }
            }
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
            step += 1;
            let m = StepMetrics {
                step: offset + step,
                l_nn,
                l_comm,
                l_total,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            };
            if let Some((p, w)) = &mut log {
                writeln!(w, "{}", m.csv_row()).and_then(|_| w.flush()).map_err(|e| Error::io(*p, e))?;
            }
            metrics.push(m);
            if let Some(path) = out.checkpoint {
                if settings.checkpoint_every > 0 && (offset + step).is_multiple_of(settings.checkpoint_every) {
                    checkpoint::save(path, &params, Some(&adam))?;
                }
            }
        }
    }
    if let Some(path) = out.checkpoint {
        checkpoint::save(path, &params, Some(&adam))?;
    }
    Ok(TrainResult { params, adam, metrics })
}

/// Parses a metrics log written by [`train`].
pub fn read_metrics(path: &Path) -> Result<Vec<StepMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing metrics header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |k: usize| -> Result<f64> {
                f.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(path, i + 1, format!("bad field {k}")))
            };
            Ok(StepMetrics {
                step: num(0)? as usize,
                l_nn: num(1)?,
                l_comm: num(2)?,
                l_total: num(3)?,
                wall_ms: num(4)?,
            })
        })
        .collect()
}
