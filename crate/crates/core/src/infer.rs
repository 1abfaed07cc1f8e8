//! Test-time map extraction by nearest-neighbour search in embedding space.
//!
//! Distances are Euclidean. Squared distances are accumulated dimension by
//! dimension in order, and equal distances resolve to the lowest target
//! index, so every search method returns the same map.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geom::{self, Axis, PointCloud, PointMap};
use crate::model::{embed_values, EncoderParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SearchMethod {
    /// Full scan over every target row.
    #[default]
    Exact,
    /// Uniform grid over the first (up to) three embedding dimensions with
    /// distance-bounded pruning.
    GridBucket,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub map: PointMap,
    /// Embedding-space distance from each source row to its match.
    pub distances: Vec<f64>,
    pub elapsed_ms: f64,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn better(d: f64, j: usize, best_d: f64, best_j: usize) -> bool {
    d < best_d || (d == best_d && j < best_j)
}

fn scan(q: &[f64], reference: &Tensor) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..reference.rows() {
        let d = dist_sq(q, reference.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

struct Grid {
    dims: usize,
    origin: Vec<f64>,
    cell: f64,
    /// Per-dimension count of occupied cell indices, `0..extent[d]`.
    extent: Vec<i64>,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn build(reference: &Tensor) -> Grid {
        let n = reference.rows();
        let dims = reference.cols().min(3);
        let mut lo = vec![f64::INFINITY; dims];
        let mut hi = vec![f64::NEG_INFINITY; dims];
        for j in 0..n {
            for d in 0..dims {
                lo[d] = lo[d].min(reference.get(j, d));
                hi[d] = hi[d].max(reference.get(j, d));
            }
        }
        let span = (0..dims).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        // About two reference rows per cell along the projected dimensions.
        let per_dim = ((n as f64 / 2.0).max(1.0)).powf(1.0 / dims.max(1) as f64).ceil();
        let cell = if span > 0.0 { span / per_dim } else { 1.0 };
        let mut grid = Grid {
            dims,
            origin: lo,
            cell,
            extent: vec![1; dims],
            buckets: HashMap::new(),
        };
        for j in 0..n {
            let key = grid.key(reference.row(j));
            for d in 0..dims {
                grid.extent[d] = grid.extent[d].max(key[d] + 1);
            }
            grid.buckets.entry(key).or_default().push(j);
        }
        grid
    }

    fn key(&self, v: &[f64]) -> Vec<i64> {
        (0..self.dims).map(|d| ((v[d] - self.origin[d]) / self.cell).floor() as i64).collect()
    }

    /// Visits every cell at Chebyshev distance exactly `r` from `center`.
    fn shell(&self, center: &[i64], r: i64, mut f: impl FnMut(&[usize])) {
        let side = 2 * r + 1;
        let total = side.pow(self.dims as u32);
        let mut offset = vec![0i64; self.dims];
        for code in 0..total {
            let mut c = code;
            let mut on_shell = false;
            for o in offset.iter_mut() {
                *o = c % side - r;
                c /= side;
                on_shell |= o.abs() == r;
            }
            if !on_shell {
                continue;
            }
            let key: Vec<i64> = center.iter().zip(&offset).map(|(a, b)| a + b).collect();
            if let Some(b) = self.buckets.get(&key) {
                f(b);
            }
        }
    }

    fn query(&self, q: &[f64], reference: &Tensor) -> (usize, f64) {
        if self.dims == 0 || reference.rows() == 0 {
            return scan(q, reference);
        }
        let center = self.key(q);
        let r_max = (0..self.dims)
            .map(|d| center[d].abs().max((center[d] - (self.extent[d] - 1)).abs()))
            .max()
            .unwrap_or(0);
        let mut best = (usize::MAX, f64::INFINITY);
        for r in 0..=r_max {
            self.shell(&center, r, |bucket| {
                for &j in bucket {
                    let d = dist_sq(q, reference.row(j));
                    if better(d, j, best.1, best.0) {
                        best = (j, d);
                    }
                }
            });
            // Any row in shell r + 1 or further is at least r cells away in
            // one projected coordinate. The slack keeps rounding from
            // pruning a row whose computed distance ties the best.
            let gap = (r as f64 * self.cell) * (1.0 - 1e-9);
            if gap > 0.0 && gap * gap > best.1 {
                break;
            }
        }
        best
    }
}

/// Prepared reference embeddings.
pub struct SearchIndex<'a> {
    reference: &'a Tensor,
    grid: Option<Grid>,
}

impl<'a> SearchIndex<'a> {
    pub fn build(reference: &'a Tensor, method: SearchMethod) -> Self {
        let grid = match method {
            SearchMethod::Exact => None,
            SearchMethod::GridBucket => Some(Grid::build(reference)),
        };
        Self { reference, grid }
    }

    /// Nearest reference row and its distance for every query row.
    pub fn query(&self, queries: &Tensor) -> Result<(Vec<usize>, Vec<f64>)> {
        if queries.rows() == 0 {
            return Ok((vec![], vec![]));
        }
        if self.reference.rows() == 0 {
            return Err(Error::InvalidArgument("nearest-neighbour search over an empty set".into()));
        }
        if queries.cols() != self.reference.cols() {
            return Err(Error::shape(
                "nearest_neighbors",
                format!("query width {} vs reference width {}", queries.cols(), self.reference.cols()),
            ));
        }
        let found: Vec<(usize, f64)> = (0..queries.rows())
            .into_par_iter()
            .map(|i| {
                let q = queries.row(i);
                match &self.grid {
                    None => scan(q, self.reference),
                    Some(g) => g.query(q, self.reference),
                }
            })
            .collect();
        Ok(found.into_iter().map(|(j, d)| (j, d.sqrt())).unzip())
    }
}

pub fn nearest_neighbors(queries: &Tensor, reference: &Tensor, method: SearchMethod) -> Result<(Vec<usize>, Vec<f64>)> {
    SearchIndex::build(reference, method).query(queries)
}

fn timed(start: Instant, (targets, distances): (Vec<usize>, Vec<f64>)) -> MatchResult {
    MatchResult {
        map: PointMap::new(targets),
        distances,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Pairwise map `X → Y` from already computed embeddings.
pub fn match_embeddings(phi_x: &Tensor, phi_y: &Tensor, method: SearchMethod) -> Result<MatchResult> {
    let start = Instant::now();
    Ok(timed(start, nearest_neighbors(phi_x, phi_y, method)?))
}

/// Embeds both (normalized) clouds and maps each point of `x` to a point
/// of `y`.
pub fn match_clouds(params: &EncoderParams, x: &PointCloud, y: &PointCloud) -> Result<MatchResult> {
    let start = Instant::now();
    let phi_x = embed_values(params, x)?;
    let phi_y = embed_values(params, y)?;
    Ok(timed(start, nearest_neighbors(&phi_x, &phi_y, SearchMethod::Exact)?))
}

/// Self-symmetry of `x`: each point's match in the reflected copy. The
/// reflection keeps point order, so the indices are read on `x` directly.
pub fn self_symmetry(params: &EncoderParams, x: &PointCloud, axis: Axis) -> Result<MatchResult> {
    let start = Instant::now();
    let phi = embed_values(params, x)?;
    let phi_f = embed_values(params, &geom::flip(x, axis))?;
    Ok(timed(start, nearest_neighbors(&phi, &phi_f, SearchMethod::Exact)?))
}

/// Color per point from its position in the bounding box.
pub fn coordinate_colors(cloud: &PointCloud) -> Vec<[u8; 3]> {
    let (lo, hi) = cloud.bounds();
    cloud
        .positions()
        .iter()
        .map(|p| {
            std::array::from_fn(|d| {
                let span = hi[d] - lo[d];
                let t = if span > 0.0 { (p[d] - lo[d]) / span } else { 0.5 };
                (t * 255.0).round() as u8
            })
        })
        .collect()
}

/// Pulls target colors back to the source: source point `i` takes the color
/// of `map[i]`.
pub fn transfer_colors(map: &PointMap, target_colors: &[[u8; 3]]) -> Result<Vec<[u8; 3]>> {
    map.validate(target_colors.len())?;
    Ok(map.targets().iter().map(|&t| target_colors[t]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn brute(q: &Tensor, r: &Tensor) -> Vec<usize> {
        (0..q.rows())
            .map(|i| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for j in 0..r.rows() {
                    let mut d = 0.0;
                    for c in 0..q.cols() {
                        d += (q.get(i, c) - r.get(j, c)).powi(2);
                    }
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn exact_and_grid_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 2, 3, 5, 20] {
            let q = random(&mut rng, 200, k);
            let r = random(&mut rng, 200, k);
            let oracle = brute(&q, &r);
            for m in [SearchMethod::Exact, SearchMethod::GridBucket] {
                assert_eq!(nearest_neighbors(&q, &r, m).unwrap().0, oracle, "k={k} {m:?}");
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // Integer lattice with duplicates gives many exact ties.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lattice = |rng: &mut ChaCha8Rng, n: usize| {
            Tensor::new(n, 3, (0..n * 3).map(|_| rng.gen_range(0..4) as f64).collect()).unwrap()
        };
        let q = lattice(&mut rng, 60);
        let r = lattice(&mut rng, 80);
        let oracle = brute(&q, &r);
        assert_eq!(nearest_neighbors(&q, &r, SearchMethod::Exact).unwrap().0, oracle);
        assert_eq!(nearest_neighbors(&q, &r, SearchMethod::GridBucket).unwrap().0, oracle);
    }

    #[test]
    fn permutation_is_recovered() {
        let phi = Tensor::identity(6);
        let perm = [4, 0, 5, 1, 3, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&p| phi.row(p).to_vec()).collect();
        let permuted = Tensor::from_rows(&rows).unwrap();
        // Row i of phi is row j of permuted where perm[j] = i.
        let m = match_embeddings(&phi, &permuted, SearchMethod::Exact).unwrap();
        for (i, &j) in m.map.targets().iter().enumerate() {
            assert_eq!(perm[j], i);
        }
        assert!(m.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn empty_queries_and_shape_errors() {
        let r = Tensor::identity(3);
        assert_eq!(nearest_neighbors(&Tensor::zeros(0, 3), &r, SearchMethod::GridBucket).unwrap().0, Vec::<usize>::new());
        assert!(nearest_neighbors(&Tensor::zeros(2, 2), &r, SearchMethod::Exact).is_err());
        assert!(nearest_neighbors(&r, &Tensor::zeros(0, 3), SearchMethod::Exact).is_err());
    }

    #[test]
    fn self_match_is_identity_and_symmetry_is_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = (0..50).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let x = PointCloud::new(pts).unwrap();
        let params = EncoderParams::init(&ArchConfig::tiny(6), 4).unwrap();
        let m = match_clouds(&params, &x, &x).unwrap();
        assert_eq!(m.map, PointMap::identity(50));
        let s1 = self_symmetry(&params, &x, Axis::X).unwrap();
        let s2 = self_symmetry(&params, &x, Axis::X).unwrap();
        assert_eq!(s1.map, s2.map);
        assert!(s1.map.validate(50).is_ok());
    }

    #[test]
    fn mirror_symmetric_cloud_recovers_twins() {
        // A mirror-closed point set: the reflected copy is a reordering, so
        // any permutation-equivariant encoder matches twins at distance 0.
        let (cloud, sym, _) = crate::train::synth::template(60).unwrap();
        let params = EncoderParams::init(&ArchConfig::tiny(6), 2).unwrap();
        let s = self_symmetry(&params, &cloud, Axis::X).unwrap();
        assert_eq!(s.map, sym);
    }

    #[test]
    fn colors_follow_the_map() {
        let colors = [[1, 2, 3], [4, 5, 6], [7, 8, 9]];
        let out = transfer_colors(&PointMap::new(vec![2, 2, 0, 1]), &colors).unwrap();
        assert_eq!(out, vec![[7, 8, 9], [7, 8, 9], [1, 2, 3], [4, 5, 6]]);
        assert!(transfer_colors(&PointMap::new(vec![3]), &colors).is_err());
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]]).unwrap();
        assert_eq!(coordinate_colors(&c), vec![[0, 0, 128], [255, 255, 128]]);
    }
}
