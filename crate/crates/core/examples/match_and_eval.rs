//! Briefly trains an encoder, matches a held-out warp to the template and
//! scores the map by geodesic error, next to a random map.
//!
//! cargo run --release --example match_and_eval -- [steps]

use symmatch::eval::{self, TargetGeometry};
use symmatch::geom;
use symmatch::infer;
use symmatch::train::{self, synth, Dataset, TrainConfig, TrainOutputs};

fn main() -> symmatch::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let dir = tempfile::tempdir().expect("temp dir");
    let opts = synth::SynthOptions { shapes: 8, points: 300, amplitude: 0.2, seed: 0 };
    let ds = Dataset::load(&synth::write_synthetic_dataset(dir.path(), &opts)?)?;

    let mut cfg = TrainConfig::default();
    cfg.train.sample_count = 300;
    cfg.train.epochs = usize::MAX;
    cfg.train.max_steps = Some(steps);
    let run = train::train(&ds, &cfg, TrainOutputs::default())?;
    println!("trained {steps} steps, final L_NN {:.4}", run.metrics.last().unwrap().l_nn);

    let held_out = synth::generate_synthetic_pair(999, 300, 0.2)?;
    let x = geom::normalize(&held_out.deformed)?.cloud;
    let y = geom::normalize(&held_out.template)?.cloud;
    let result = infer::match_clouds(&run.params, &x, &y)?;
    let mesh = held_out.template_mesh.as_ref().unwrap();
    let report = eval::geodesic_error(&result.map, &held_out.gt, TargetGeometry::Mesh(mesh), None)?;
    let random = eval::random_baseline(&held_out.gt, TargetGeometry::Mesh(mesh), 0, None)?;
    println!("matched {} points in {:.1} ms", x.len(), result.elapsed_ms);
    println!("mean geodesic error x100: {:.2} (random map {:.2})", report.mean_geo_err_x100, random.mean_geo_err_x100);
    let within = report.curve.iter().find(|(t, _)| *t >= 5.0).map_or(1.0, |c| c.1);
    println!("fraction of points within 5 units: {within:.2}");
    Ok(())
}
