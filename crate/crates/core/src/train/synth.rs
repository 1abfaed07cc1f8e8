//! Desk-scale synthetic data: a bilaterally symmetric open tube and smooth
//! sinusoidal warps of it.
//!
//! The template is built from `L` rings of `M` points along the x axis with
//! `L` even, so ring `a` and ring `L-1-a` sit at mirrored x positions and
//! vertex `(a, b)` has the exact twin `(L-1-a, b)`. Warps keep vertex order,
//! so the ground-truth map between any two shapes is the identity and the
//! twin pairing stays the self-symmetry of every deformed shape.
//!
//! A warp is the sum of a mirror-equivariant field and a weaker
//! symmetry-breaking field. Without the second part every deformed shape
//! would remain an exact mirror image of itself and any point-set encoder
//! would recover the symmetry for free.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{save_shape, write_map, Mesh, Point3, PointCloud, PointMap, Shape};

/// Weight of the symmetry-breaking field relative to the equivariant one.
pub const SYMMETRY_BREAKING: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub template: PointCloud,
    pub deformed: PointCloud,
    /// Deformed vertex → template vertex.
    pub gt: PointMap,
    /// Self-symmetry shared by both shapes.
    pub symmetry: PointMap,
    pub template_mesh: Option<Mesh>,
    pub deformed_mesh: Option<Mesh>,
}

/// Rings and points per ring for `n` points: `L` even, `L·M = n`, closest
/// to `M ≈ 1.25·L`.
pub fn tube_layout(n: usize) -> Result<(usize, usize)> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("point count must be even and positive, got {n}")));
    }
    let mut best: Option<(usize, usize)> = None;
    for l in (2..=n).step_by(2) {
        if !n.is_multiple_of(l) {
            continue;
        }
        let m = n / l;
        let score = (m as f64 - 1.25 * l as f64).abs();
        if best.is_none_or(|(bl, bm)| score < (bm as f64 - 1.25 * bl as f64).abs()) {
            best = Some((l, m));
        }
    }
    Ok(best.expect("l = n always divides n"))
}

fn ring_t(a: usize, l: usize) -> f64 {
    -1.0 + (2 * a + 1) as f64 / l as f64
}

/// Position of ring parameter `t ∈ (-1, 1)` and angle `phi` on the template.
fn tube_point(t: f64, phi: f64) -> Point3 {
    let r = (0.22 + 0.1 * (PI * t).cos().powi(2) + 0.06 * (3.0 * PI * t).cos())
        * (1.0 + 0.25 * phi.cos() + 0.1 * (2.0 * phi + 0.5).sin());
    let yc = 0.35 * t * t;
    let zc = 0.1 * (2.0 * PI * t).cos();
    [t, yc + r * phi.cos(), zc + r * phi.sin()]
}

/// The symmetric template with `n` points, its twin map, and a triangulated
/// surface when every ring has at least 3 points.
pub fn template(n: usize) -> Result<(PointCloud, PointMap, Option<Mesh>)> {
    let (l, m) = tube_layout(n)?;
    let mut positions = Vec::with_capacity(n);
    let mut sym = Vec::with_capacity(n);
    for a in 0..l {
        let t = ring_t(a, l);
        for b in 0..m {
            let phi = 2.0 * PI * b as f64 / m as f64;
            positions.push(tube_point(t, phi));
            sym.push((l - 1 - a) * m + b);
        }
    }
    // Evaluating at -t is not bit-identical to mirroring t; copy the left
    // half so twins are exact mirrors.
    for a in l / 2..l {
        for b in 0..m {
            let [x, y, z] = positions[(l - 1 - a) * m + b];
            positions[a * m + b] = [-x, y, z];
        }
    }
    let mesh = if m >= 3 && l >= 2 {
        let mut faces = Vec::with_capacity(2 * (l - 1) * m);
        for a in 0..l - 1 {
            for b in 0..m {
                let b1 = (b + 1) % m;
                let (p, q, r, s) = (a * m + b, a * m + b1, (a + 1) * m + b1, (a + 1) * m + b);
                // Diagonals mirror across the middle strip, which cannot be
                // split symmetrically and alternates instead.
                let flip = if 2 * (a + 1) == l { b % 2 == 1 } else { 2 * a >= l };
                if flip {
                    faces.push([p, q, s]);
                    faces.push([q, r, s]);
                } else {
                    faces.push([p, q, r]);
                    faces.push([p, r, s]);
                }
            }
        }
        Some(Mesh::new(positions.clone(), faces)?)
    } else {
        None
    };
    Ok((PointCloud::new(positions)?, PointMap::new(sym), mesh))
}

/// Smooth displacement field with at most three frequencies in [π/2, 3π/2].
#[derive(Clone, Debug, PartialEq)]
pub struct Warp {
    amplitude: f64,
    omega: [f64; 3],
    coef: [f64; 6],
    phase: [f64; 4],
}

impl Warp {
    pub fn random(amplitude: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be non-negative, got {amplitude}")));
        }
        let mut omega = [0.0; 3];
        for w in &mut omega {
            *w = rng.gen_range(0.5 * PI..1.5 * PI);
        }
        let mut coef = [0.0; 6];
        for c in &mut coef {
            *c = rng.gen_range(-1.0..1.0);
        }
        let mut phase = [0.0; 4];
        for p in &mut phase {
            *p = rng.gen_range(0.0..2.0 * PI);
        }
        Ok(Self {
            amplitude,
            omega,
            coef,
            phase,
        })
    }

    /// Part with `f(mirror(p)) = mirror(f(p))` for the mirror `x → -x`.
    pub fn equivariant(&self, [x, y, z]: Point3) -> Point3 {
        let [w1, w2, w3] = self.omega;
        let c = &self.coef;
        let ps = &self.phase;
        [
            c[0] * (w1 * x).sin() * (w2 * y + ps[0]).cos(),
            c[1] * (w1 * x).cos() * (w3 * z + ps[1]).sin(),
            c[2] * (w2 * x).cos() * (w3 * y + ps[2]).sin(),
        ]
    }

    /// Part with the opposite parity in x.
    pub fn breaking(&self, [x, _y, z]: Point3) -> Point3 {
        let [w1, w2, w3] = self.omega;
        let c = &self.coef;
        [
            c[3] * (w3 * x).cos(),
            c[4] * (w2 * x).sin() * (w1 * z + self.phase[3]).cos(),
            c[5] * (w1 * x).sin(),
        ]
    }

    pub fn displacement(&self, p: Point3) -> Point3 {
        let e = self.equivariant(p);
        let b = self.breaking(p);
        std::array::from_fn(|d| self.amplitude * (e[d] + SYMMETRY_BREAKING * b[d]))
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let d = self.displacement(p);
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    }
}

/// Template plus one warped copy of it.
pub fn generate_synthetic_pair(seed: u64, n: usize, amplitude: f64) -> Result<SyntheticPair> {
    let (tpl, symmetry, template_mesh) = template(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warp = Warp::random(amplitude, &mut rng)?;
    let deformed = PointCloud::new(tpl.positions().iter().map(|&p| warp.apply(p)).collect())?;
    let deformed_mesh = match &template_mesh {
        Some(m) => Some(Mesh::new(deformed.positions().to_vec(), m.faces().to_vec())?),
        None => None,
    };
    Ok(SyntheticPair {
        template: tpl,
        deformed,
        gt: PointMap::identity(n),
        symmetry,
        template_mesh,
        deformed_mesh,
    })
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub shapes: usize,
    pub points: usize,
    pub amplitude: f64,
    pub seed: u64,
}

/// Writes `template.off`, `shape_XXX.off` with their `.map` (to the
/// template) and `.sym` files, and an `index.toml` pairing every shape with
/// the template. Returns the index path.
pub fn write_synthetic_dataset(dir: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (tpl, sym, tpl_mesh) = template(opts.points)?;
    let tpl_shape = match tpl_mesh {
        Some(m) => Shape::Mesh(m),
        None => Shape::Cloud(tpl.clone()),
    };
    save_shape(dir.join("template.off"), &tpl_shape)?;
    write_map(dir.join("template.sym"), &sym, false)?;

    let mut index = String::from("pairing = \"to_template\"\ntemplate = \"template\"\n\n");
    index.push_str("[[shape]]\nname = \"template\"\npath = \"template.off\"\nsym = \"template.sym\"\n");
    for i in 0..opts.shapes {
        let pair = generate_synthetic_pair(opts.seed.wrapping_add(i as u64), opts.points, opts.amplitude)?;
        let name = format!("shape_{i:03}");
        let shape = match pair.deformed_mesh {
            Some(m) => Shape::Mesh(m),
            None => Shape::Cloud(pair.deformed),
        };
        save_shape(dir.join(format!("{name}.off")), &shape)?;
        write_map(dir.join(format!("{name}.map")), &pair.gt, false)?;
        write_map(dir.join(format!("{name}.sym")), &pair.symmetry, false)?;
        let _ = write!(
            index,
            "\n[[shape]]\nname = \"{name}\"\npath = \"{name}.off\"\ngt = \"{name}.map\"\nsym = \"{name}.sym\"\n"
        );
    }
    let path = dir.join("index.toml");
    std::fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
