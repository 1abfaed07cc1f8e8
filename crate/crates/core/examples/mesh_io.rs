//! Writes one shape as OFF, PLY and OBJ, reads each back and reports the
//! largest coordinate difference. Also writes a colored PLY.
//!
//! cargo run --example mesh_io -- [out_dir]

use symmatch::geom::{load_shape, save_shape, write_ply_colored, Shape};
use symmatch::infer::coordinate_colors;
use symmatch::train::synth;

fn main() -> symmatch::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mesh_io_out".into());
    std::fs::create_dir_all(&out).map_err(|source| symmatch::Error::Io { path: out.clone().into(), source })?;
    let pair = synth::generate_synthetic_pair(3, 300, 0.3)?;
    let shape = Shape::Mesh(pair.deformed_mesh.expect("synthetic shapes have faces"));

    for ext in ["off", "ply", "obj"] {
        let path = std::path::Path::new(&out).join(format!("shape.{ext}"));
        save_shape(&path, &shape)?;
        let back = load_shape(&path, None)?;
        let worst = shape
            .cloud()
            .positions()
            .iter()
            .zip(back.cloud().positions())
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max);
        let faces = back.mesh().map_or(0, |m| m.faces().len());
        println!("{ext}: {} vertices, {faces} faces, max coordinate error {worst:.1e}", back.vertex_count());
    }

    let mesh = shape.mesh().unwrap();
    let colors = coordinate_colors(&shape.cloud());
    let path = std::path::Path::new(&out).join("colored.ply");
    write_ply_colored(&path, mesh.positions(), mesh.faces(), &colors)?;
    println!("wrote {}", path.display());
    Ok(())
}
