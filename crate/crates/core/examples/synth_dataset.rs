//! Writes a synthetic dataset (a mirror-symmetric tube template and warped
//! copies) and reports what it contains.
//!
//! cargo run --example synth_dataset -- <out_dir> [shapes] [points]

use symmatch::geom::{load_shape, read_map};
use symmatch::train::{synth, Dataset};

fn main() -> symmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic".into());
    let shapes = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let points = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let opts = synth::SynthOptions { shapes, points, amplitude: 0.2, seed: 0 };
    let index = synth::write_synthetic_dataset(out.as_ref(), &opts)?;
    let ds = Dataset::load(&index)?;
    println!("{} shapes, {} training pairs, index {}", ds.shapes.len(), ds.pairs.len(), index.display());

    let dir = index.parent().unwrap();
    let template = load_shape(dir.join("template.off"), None)?;
    let sym = read_map(dir.join("template.sym"), false)?;
    let (rings, per_ring) = synth::tube_layout(points)?;
    println!(
        "template: {} vertices on {rings} rings of {per_ring}, symmetry is an involution: {}",
        template.vertex_count(),
        sym.is_involution()
    );

    for i in 0..shapes.min(3) {
        let pair = synth::generate_synthetic_pair(i as u64, points, opts.amplitude)?;
        let mean = pair
            .template
            .positions()
            .iter()
            .zip(pair.deformed.positions())
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
            .sum::<f64>()
            / points as f64;
        println!("shape_{i:03}: mean displacement {mean:.4}");
    }
    Ok(())
}
