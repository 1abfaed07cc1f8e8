//! Trains with the unsupervised commutativity loss, which never sees a
//! symmetry map, then reads a shape's left/right symmetry off the learned
//! embedding and scores it.
//!
//! cargo run --release --example self_symmetry -- [steps]

use symmatch::eval::{self, TargetGeometry};
use symmatch::geom::{self, Axis, PointMap};
use symmatch::infer;
use symmatch::losses::LossMode;
use symmatch::train::{self, synth, Dataset, TrainConfig, TrainOutputs};

fn main() -> symmatch::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let dir = tempfile::tempdir().expect("temp dir");
    let opts = synth::SynthOptions { shapes: 8, points: 300, amplitude: 0.2, seed: 0 };
    let ds = Dataset::load(&synth::write_synthetic_dataset(dir.path(), &opts)?)?;

    let mut cfg = TrainConfig::default();
    cfg.loss.mode = LossMode::UnsupervisedComm;
    cfg.train.sample_count = 300;
    cfg.train.epochs = usize::MAX;
    cfg.train.max_steps = Some(steps);
    let run = train::train(&ds, &cfg, TrainOutputs::default())?;

    let shape = synth::generate_synthetic_pair(4242, 300, 0.2)?;
    let x = geom::normalize(&shape.deformed)?.cloud;
    let sym = infer::self_symmetry(&run.params, &x, Axis::X)?.map;
    let mesh = TargetGeometry::Mesh(shape.deformed_mesh.as_ref().unwrap());
    let err = eval::geodesic_error(&sym, &shape.symmetry, mesh, None)?;
    let id = eval::geodesic_error(&PointMap::identity(x.len()), &shape.symmetry, mesh, None)?;
    let exact = sym.targets().iter().zip(shape.symmetry.targets()).filter(|(a, b)| a == b).count();
    println!("symmetry map: mean error x100 {:.2} (identity map {:.2})", err.mean_geo_err_x100, id.mean_geo_err_x100);
    println!("{exact} of {} points hit their exact twin; involution: {}", x.len(), sym.is_involution());
    Ok(())
}
