//! Geodesic error of vertex maps, normalized by the target's scale and
//! reported ×100.
//!
//! Meshes are normalized by the square root of their surface area. Bare
//! clouds use half the square root of their bounding-box surface area and
//! a k-nearest-neighbour graph for geodesics. Neither normalizer is
//! guaranteed to match the one behind published numbers, so absolute values
//! should only be compared within this tool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{EdgeGraph, Mesh, PointCloud, PointMap, Shape};

/// Neighbours per point for cloud geodesics.
pub const DEFAULT_CLOUD_K: usize = 8;

/// Number of thresholds on the cumulative curve.
pub const CURVE_SAMPLES: usize = 101;

#[derive(Clone, Copy, Debug)]
pub enum TargetGeometry<'a> {
    Mesh(&'a Mesh),
    Cloud { cloud: &'a PointCloud, k: usize },
}

impl<'a> TargetGeometry<'a> {
    pub fn from_shape(shape: &'a Shape, cloud: &'a PointCloud) -> Self {
        match shape {
            Shape::Mesh(m) => TargetGeometry::Mesh(m),
            Shape::Cloud(_) => TargetGeometry::Cloud { cloud, k: DEFAULT_CLOUD_K },
        }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            TargetGeometry::Mesh(m) => m.vertex_count(),
            TargetGeometry::Cloud { cloud, .. } => cloud.len(),
        }
    }

    fn graph(&self) -> EdgeGraph {
        match self {
            TargetGeometry::Mesh(m) => EdgeGraph::from_mesh(m),
            TargetGeometry::Cloud { cloud, k } => EdgeGraph::knn(cloud.positions(), *k),
        }
    }

    /// Scale used to normalize distances, and how it was obtained.
    pub fn normalizer(&self) -> (f64, &'static str) {
        match self {
            TargetGeometry::Mesh(m) => (m.surface_area().sqrt(), "sqrt_surface_area"),
            TargetGeometry::Cloud { cloud, .. } => {
                let (lo, hi) = cloud.bounds();
                let [a, b, c] = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
                ((2.0 * (a * b + b * c + c * a)).sqrt() / 2.0, "half_sqrt_bounding_box_area")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean_geo_err_x100: f64,
    /// Normalized geodesic error ×100 of every source point.
    pub per_point_errors: Vec<f64>,
    /// `(threshold, fraction of points with error ≤ threshold)`, in the
    /// same ×100 units.
    pub curve: Vec<(f64, f64)>,
    pub normalizer: f64,
    pub normalizer_kind: String,
}

/// Thresholds spread evenly from 0 to the largest error.
pub fn cumulative_curve(errors: &[f64]) -> Vec<(f64, f64)> {
    if errors.is_empty() {
        return vec![];
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().unwrap();
    let n = sorted.len() as f64;
    (0..CURVE_SAMPLES)
        .map(|q| {
            let t = if q + 1 == CURVE_SAMPLES { max } else { max * q as f64 / (CURVE_SAMPLES - 1) as f64 };
            let below = sorted.partition_point(|&e| e <= t);
            (t, below as f64 / n)
        })
        .collect()
}

/// Geodesic distances `d(a_i, b_i)` on `graph`, one Dijkstra per distinct
/// first endpoint.
fn paired_distances(graph: &EdgeGraph, a: &[usize], b: &[usize]) -> Result<Vec<f64>> {
    let comps = graph.component_count();
    if comps != 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in a.iter().enumerate() {
        by_source.entry(s).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_source.into_iter().collect();
    let parts: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(s, idx)| {
            let dist = graph.dijkstra(*s);
            idx.iter().map(|&i| (i, dist[b[i]])).collect()
        })
        .collect();
    let mut out = vec![0.0; a.len()];
    for (i, d) in parts.into_iter().flatten() {
        out[i] = d;
    }
    Ok(out)
}

/// Mean normalized geodesic distance ×100 between `pred` and `gt` images on
/// the target. `normalizer` overrides the geometry's own scale.
pub fn geodesic_error(pred: &PointMap, gt: &PointMap, target: TargetGeometry, normalizer: Option<f64>) -> Result<EvalReport> {
    if pred.source_size() != gt.source_size() {
        return Err(Error::shape(
            "geodesic_error",
            format!("prediction has {} entries, ground truth {}", pred.source_size(), gt.source_size()),
        ));
    }
    if pred.source_size() == 0 {
        return Err(Error::InvalidArgument("cannot evaluate an empty map".into()));
    }
    let n = target.vertex_count();
    pred.validate(n)?;
    gt.validate(n)?;
    let (norm, kind) = match normalizer {
        Some(v) => (v, "override"),
        None => target.normalizer(),
    };
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument(format!("normalizer must be positive, got {norm}")));
    }
    let dist = paired_distances(&target.graph(), gt.targets(), pred.targets())?;
    let errors: Vec<f64> = dist.iter().map(|d| d / norm * 100.0).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(EvalReport {
        mean_geo_err_x100: mean,
        curve: cumulative_curve(&errors),
        per_point_errors: errors,
        normalizer: norm,
        normalizer_kind: kind.to_string(),
    })
}

/// Uniformly random total map over the target's vertices.
pub fn random_map(source_size: usize, target_size: usize, seed: u64) -> PointMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointMap::new((0..source_size).map(|_| rng.gen_range(0..target_size)).collect())
}

/// Scores a uniformly random map against `gt` with the same protocol.
pub fn random_baseline(gt: &PointMap, target: TargetGeometry, seed: u64, normalizer: Option<f64>) -> Result<EvalReport> {
    let pred = random_map(gt.source_size(), target.vertex_count(), seed);
    geodesic_error(&pred, gt, target, normalizer)
}

#[derive(Serialize)]
struct Summary<'a> {
    mean_geo_err_x100: f64,
    points: usize,
    max_geo_err_x100: f64,
    normalizer: f64,
    normalizer_kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    random_baseline_x100: Option<f64>,
    note: &'a str,
    errors_csv: String,
    curve_csv: String,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes a JSON summary at `path` plus `<stem>.errors.csv` and
/// `<stem>.curve.csv` next to it. Returns the two CSV paths.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<(PathBuf, PathBuf)> {
    write_report_with_baseline(path, report, None)
}

/// Like [`write_report`], also recording a random-map baseline score.
pub fn write_report_with_baseline(path: &Path, report: &EvalReport, baseline: Option<f64>) -> Result<(PathBuf, PathBuf)> {
    let errors_path = sibling(path, "errors.csv");
    let curve_path = sibling(path, "curve.csv");
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let summary = Summary {
        mean_geo_err_x100: report.mean_geo_err_x100,
        points: report.per_point_errors.len(),
        max_geo_err_x100: report.per_point_errors.iter().copied().fold(0.0, f64::max),
        normalizer: report.normalizer,
        normalizer_kind: &report.normalizer_kind,
        random_baseline_x100: baseline,
        note: "errors are geodesic distances divided by the normalizer, times 100; normalizers differ between benchmarks",
        errors_csv: name(&errors_path),
        curve_csv: name(&curve_path),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;

    let mut errors = String::from("point,error_x100\n");
    for (i, e) in report.per_point_errors.iter().enumerate() {
        errors.push_str(&format!("{i},{e}\n"));
    }
    std::fs::write(&errors_path, errors).map_err(|e| Error::io(&errors_path, e))?;
    let mut curve = String::from("threshold_x100,fraction\n");
    for (t, f) in &report.curve {
        curve.push_str(&format!("{t},{f}\n"));
    }
    std::fs::write(&curve_path, curve).map_err(|e| Error::io(&curve_path, e))?;
    Ok((errors_path, curve_path))
}
