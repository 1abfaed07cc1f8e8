//! Overfits the default encoder on two synthetic pairs and prints the NN
//! loss trajectory.
//!
//! cargo run --release --example train_overfit -- [steps] [lr]

use symmatch::losses::LossMode;
use symmatch::train::{self, synth, Dataset, TrainConfig, TrainOutputs};

fn main() -> symmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-4);

    let dir = tempfile::tempdir().expect("temp dir");
    let index = synth::write_synthetic_dataset(
        dir.path(),
        &synth::SynthOptions { shapes: 2, points: 300, amplitude: 0.2, seed: 0 },
    )?;
    let ds = Dataset::load(&index)?;

    let mut cfg = TrainConfig::default();
    cfg.loss.mode = LossMode::SupervisedComm;
    cfg.train.sample_count = 300;
    cfg.train.epochs = steps;
    cfg.train.lr = lr;
    cfg.train.deterministic = true;

    let start = std::time::Instant::now();
    let run = train::train(&ds, &cfg, TrainOutputs::default())?;
    let first = run.metrics[0].l_nn;
    for m in run.metrics.iter().filter(|m| m.step == 1 || m.step % 100 == 0) {
        println!("step {:5}  L_NN {:.5e}  L_comm {:.5e}  ratio {:.4}", m.step, m.l_nn, m.l_comm, m.l_nn / first);
    }
    println!("{} steps in {:.1}s", run.metrics.len(), start.elapsed().as_secs_f64());
    Ok(())
}
