//! Geodesic distances on a mesh (edge graph) and on a bare point cloud
//! (k-nearest-neighbour graph), compared with straight-line distances.

use symmatch::geom::{geodesic_distances, knn_graph_geodesics};
use symmatch::train::synth;

fn main() -> symmatch::Result<()> {
    let (cloud, sym, mesh) = synth::template(300)?;
    let mesh = mesh.expect("template has faces");
    let p = cloud.positions();
    let source = 0;
    let twin = sym.targets()[source];

    let on_mesh = geodesic_distances(&mesh, &[source])?;
    let on_cloud = knn_graph_geodesics(&cloud, 8, &[source])?;
    let d = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();

    println!("vertex {source} to its mirror twin {twin}:");
    println!("  euclidean  {:.4}", d(p[source], p[twin]));
    println!("  mesh       {:.4}", on_mesh[0][twin]);
    println!("  knn graph  {:.4}", on_cloud[0][twin]);
    let far = (0..p.len()).max_by(|&a, &b| on_mesh[0][a].total_cmp(&on_mesh[0][b])).unwrap();
    println!("farthest vertex on the surface: {far} at {:.4}", on_mesh[0][far]);
    println!("surface area {:.4}", mesh.surface_area());
    Ok(())
}
