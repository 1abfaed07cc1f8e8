//! Shape representation: point clouds, triangle meshes, vertex-to-vertex
//! maps, and the preprocessing steps applied before a shape reaches the
//! encoder (normalization, sampling, reflection).

mod geodesic;
mod io;

pub use geodesic::{geodesic_distances, knn_graph_geodesics, EdgeGraph};
pub use io::{load_shape, read_map, save_shape, write_map, write_ply_colored, ShapeFormat};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Coordinate axis used for reflections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A set of 3D points. `ids` holds, for each point, its index in the shape
/// it was sampled from (the identity for freshly loaded shapes).
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3>,
    ids: Vec<usize>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3>) -> Result<Self> {
        let ids = (0..positions.len()).collect();
        Self::with_ids(positions, ids)
    }

    pub fn with_ids(positions: Vec<Point3>, ids: Vec<usize>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("point cloud must contain at least one point".into()));
        }
        if ids.len() != positions.len() {
            return Err(Error::shape(
                "PointCloud::with_ids",
                format!("{} ids for {} points", ids.len(), positions.len()),
            ));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("point cloud coordinate at vertex {i}")));
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("point ids must be distinct".into()));
        }
        Ok(Self { positions, ids })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Row-major n×3 copy of the coordinates.
    pub fn flat(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.positions {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        let n = self.positions.len() as f64;
        c.map(|v| v / n)
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Same points, reindexed so that `ids` is the identity.
    pub fn detached(&self) -> PointCloud {
        PointCloud {
            positions: self.positions.clone(),
            ids: (0..self.positions.len()).collect(),
        }
    }

    /// Applies `perm` to the point order: output point `i` is input point `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<PointCloud> {
        if perm.len() != self.len() {
            return Err(Error::shape("PointCloud::permuted", "permutation length differs from point count"));
        }
        let positions = perm.iter().map(|&i| self.positions[i]).collect();
        let ids = perm.iter().map(|&i| self.ids[i]).collect();
        PointCloud::with_ids(positions, ids)
    }
}

/// Triangle mesh. Faces reference vertices by index.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    positions: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(positions: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("mesh must contain at least one vertex".into()));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("mesh coordinate at vertex {i}")));
        }
        let n = positions.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        size: n,
                        context: format!("face {fi}"),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidArgument(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        Ok(Self { positions, faces })
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud {
            positions: self.positions.clone(),
            ids: (0..self.positions.len()).collect(),
        }
    }

    /// Sum of triangle areas.
    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.positions[f[0]];
                let b = self.positions[f[1]];
                let c = self.positions[f[2]];
                0.5 * norm(cross(sub(b, a), sub(c, a)))
            })
            .sum()
    }

    /// Number of connected components of the edge graph (isolated vertices count).
    pub fn component_count(&self) -> usize {
        EdgeGraph::from_mesh(self).component_count()
    }

    /// Uniformly rescaled copy.
    pub fn scaled(&self, s: f64) -> Mesh {
        Mesh {
            positions: self.positions.iter().map(|p| p.map(|c| c * s)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// A loaded shape: either a mesh (faces available) or a bare cloud.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Mesh(Mesh),
    Cloud(PointCloud),
}

impl Shape {
    pub fn cloud(&self) -> PointCloud {
        match self {
            Shape::Mesh(m) => m.to_cloud(),
            Shape::Cloud(c) => c.clone(),
        }
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        match self {
            Shape::Mesh(m) => Some(m),
            Shape::Cloud(_) => None,
        }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            Shape::Mesh(m) => m.vertex_count(),
            Shape::Cloud(c) => c.len(),
        }
    }
}

/// Hard vertex-to-vertex map: `targets[i]` is the image of source vertex `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointMap {
    targets: Vec<usize>,
}

impl PointMap {
    pub fn new(targets: Vec<usize>) -> Self {
        Self { targets }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).collect(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn source_size(&self) -> usize {
        self.targets.len()
    }

    pub fn into_targets(self) -> Vec<usize> {
        self.targets
    }

    /// Checks every image against the size of the target shape.
    pub fn validate(&self, target_size: usize) -> Result<()> {
        match self.targets.iter().position(|&t| t >= target_size) {
            Some(i) => Err(Error::IndexOutOfRange {
                index: self.targets[i],
                size: target_size,
                context: format!("map entry for source vertex {i}"),
            }),
            None => Ok(()),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &PointMap) -> Result<PointMap> {
        next.validate_sources_cover(&self.targets)?;
        Ok(PointMap::new(self.targets.iter().map(|&t| next.targets[t]).collect()))
    }

    fn validate_sources_cover(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.targets.len()) {
            Some(&i) => Err(Error::IndexOutOfRange {
                index: i,
                size: self.targets.len(),
                context: "map composition".into(),
            }),
            None => Ok(()),
        }
    }

    /// True when the map is a self-map with `map(map(i)) == i` for every `i`.
    pub fn is_involution(&self) -> bool {
        let n = self.targets.len();
        self.targets.iter().enumerate().all(|(i, &t)| t < n && self.targets[t] == i)
    }
}

/// Result of [`normalize`]: `original = cloud * scale + translation`.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub cloud: PointCloud,
    pub scale: f64,
    pub translation: Point3,
}

/// Centers the cloud at its centroid and scales it so the largest vertex
/// norm is 1.
pub fn normalize(shape: &PointCloud) -> Result<Normalized> {
    let c = shape.centroid();
    let centered: Vec<Point3> = shape.positions.iter().map(|p| sub(*p, c)).collect();
    let scale = centered.iter().map(|p| norm(*p)).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot normalize a cloud whose points all coincide".into(),
        ));
    }
    let positions = centered.iter().map(|p| p.map(|v| v / scale)).collect();
    Ok(Normalized {
        cloud: PointCloud {
            positions,
            ids: shape.ids.clone(),
        },
        scale,
        translation: c,
    })
}

/// Reflects every point across the plane orthogonal to `axis` through the
/// origin. Vertex order is preserved, so point `i` of the output is the
/// mirror image of point `i` of the input.
pub fn flip(shape: &PointCloud, axis: Axis) -> PointCloud {
    let a = axis.index();
    let positions = shape
        .positions
        .iter()
        .map(|p| {
            let mut q = *p;
            q[a] = -q[a];
            q
        })
        .collect();
    PointCloud {
        positions,
        ids: shape.ids.clone(),
    }
}

pub fn flip_x(shape: &PointCloud) -> PointCloud {
    flip(shape, Axis::X)
}

/// Uniform sampling without replacement, seeded.
pub fn sample(shape: &PointCloud, count: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(shape, count, &mut rng)
}

pub fn sample_with_rng<R: Rng + ?Sized>(shape: &PointCloud, count: usize, rng: &mut R) -> Result<PointCloud> {
    let n = shape.len();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {count} points from a cloud of {n}"
        )));
    }
    let picked = rand::seq::index::sample(rng, n, count);
    let positions = picked.iter().map(|i| shape.positions[i]).collect();
    let ids = picked.iter().map(|i| shape.ids[i]).collect();
    Ok(PointCloud { positions, ids })
}

/// Full-resolution target coordinates for the sampled source points:
/// row `i` is the position of `map.targets[source_ids[i]]` on `target_full`.
pub fn restrict_map(map: &PointMap, source_ids: &[usize], target_full: &PointCloud) -> Result<Vec<Point3>> {
    let n_src = map.source_size();
    let n_tgt = target_full.len();
    source_ids
        .iter()
        .map(|&s| {
            if s >= n_src {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    size: n_src,
                    context: "sampled source id".into(),
                });
            }
            let t = map.targets[s];
            if t >= n_tgt {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    size: n_tgt,
                    context: format!("map image of source vertex {s}"),
                });
            }
            Ok(target_full.positions[t])
        })
        .collect()
}

/// Restricts a self-map of `full` to the points of `sampled`: each sampled
/// point maps to the sampled point closest to its full-resolution image.
/// Ties resolve to the lowest sampled index.
pub fn restrict_sym_map(sym: &PointMap, sampled: &PointCloud, full: &PointCloud) -> Result<PointMap> {
    if sampled.is_empty() {
        return Err(Error::InvalidArgument("cannot restrict a map to an empty sample".into()));
    }
    if sym.source_size() != full.len() {
        return Err(Error::shape(
            "restrict_sym_map",
            format!("map over {} vertices, shape has {}", sym.source_size(), full.len()),
        ));
    }
    sym.validate(full.len())?;
    let targets = sampled
        .ids
        .iter()
        .map(|&id| {
            if id >= full.len() {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    size: full.len(),
                    context: "sampled point id".into(),
                });
            }
            let q = full.positions[sym.targets[id]];
            Ok(nearest_index(&sampled.positions, q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointMap::new(targets))
}

/// Index of the point closest to `q`; lowest index wins ties.
pub(crate) fn nearest_index(points: &[Point3], q: Point3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, p) in points.iter().enumerate() {
        let d = dist_sq(*p, q);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn dist_sq(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}
