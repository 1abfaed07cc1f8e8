//! Trains nn_only, supervised_comm and unsupervised_comm on synthetic warps
//! of one template, then scores held-out warps: pairwise maps against a
//! random baseline and self-symmetry maps against the identity.
//!
//! cargo run --release --example generalization -- [steps] [train_shapes]

use symmatch::eval::{self, TargetGeometry};
use symmatch::geom::{self, Axis, PointMap};
use symmatch::infer;
use symmatch::losses::LossMode;
use symmatch::model::EncoderParams;
use symmatch::train::{self, synth, Dataset, TrainConfig, TrainOutputs};

const POINTS: usize = 300;
const AMPLITUDE: f64 = 0.2;
const HELD_OUT: u64 = 5;

fn main() -> symmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let shapes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let dir = tempfile::tempdir().expect("temp dir");
    let index = synth::write_synthetic_dataset(
        dir.path(),
        &synth::SynthOptions { shapes, points: POINTS, amplitude: AMPLITUDE, seed: 0 },
    )?;
    let ds = Dataset::load(&index)?;
    let held_out: Vec<_> = (0..HELD_OUT)
        .map(|i| synth::generate_synthetic_pair(10_000 + i, POINTS, AMPLITUDE))
        .collect::<symmatch::Result<_>>()?;

    for mode in [LossMode::NnOnly, LossMode::SupervisedComm, LossMode::UnsupervisedComm] {
        let mut cfg = TrainConfig::default();
        cfg.loss.mode = mode;
        cfg.train.sample_count = POINTS;
        cfg.train.epochs = usize::MAX;
        cfg.train.max_steps = Some(steps);
        cfg.train.deterministic = true;
        let start = std::time::Instant::now();
        let run = train::train(&ds, &cfg, TrainOutputs::default())?;
        let last = run.metrics.last().expect("at least one step");
        let (pair, random, sym, identity) = score(&run.params, &held_out)?;
        println!(
            "{:<18} {:4} steps {:6.1}s  L_NN {:.3e}  pair {:6.2} (random {:6.2})  sym {:6.2} (identity {:6.2})",
            mode.name(),
            run.metrics.len(),
            start.elapsed().as_secs_f64(),
            last.l_nn,
            pair,
            random,
            sym,
            identity
        );
    }
    Ok(())
}

/// Mean ×100 errors over the held-out shapes.
fn score(params: &EncoderParams, held_out: &[synth::SyntheticPair]) -> symmatch::Result<(f64, f64, f64, f64)> {
    let mut sums = [0.0; 4];
    for (i, p) in held_out.iter().enumerate() {
        let tpl_mesh = p.template_mesh.as_ref().expect("synthetic template has faces");
        let def_mesh = p.deformed_mesh.as_ref().expect("synthetic shapes have faces");
        let x = geom::normalize(&p.deformed)?.cloud;
        let y = geom::normalize(&p.template)?.cloud;
        let pred = infer::match_clouds(params, &x, &y)?.map;
        sums[0] += eval::geodesic_error(&pred, &p.gt, TargetGeometry::Mesh(tpl_mesh), None)?.mean_geo_err_x100;
        sums[1] += eval::random_baseline(&p.gt, TargetGeometry::Mesh(tpl_mesh), i as u64, None)?.mean_geo_err_x100;
        let sym = infer::self_symmetry(params, &x, Axis::X)?.map;
        sums[2] += eval::geodesic_error(&sym, &p.symmetry, TargetGeometry::Mesh(def_mesh), None)?.mean_geo_err_x100;
        let id = PointMap::identity(x.len());
        sums[3] += eval::geodesic_error(&id, &p.symmetry, TargetGeometry::Mesh(def_mesh), None)?.mean_geo_err_x100;
    }
    let n = held_out.len() as f64;
    Ok((sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n))
}
