//! Dataset index files and the in-memory training set they describe.
//!
//! An index is a TOML file. Paths are relative to the index's directory and
//! map files are 1-indexed unless `zero_indexed = true`.
//!
//! ```toml
//! pairing = "to_template"      # or "all_pairs" / "explicit"
//! template = "template"
//!
//! [[shape]]
//! name = "template"
//! path = "template.off"
//! sym = "template.sym"         # optional self-symmetry map
//!
//! [[shape]]
//! name = "shape_000"
//! path = "shape_000.ply"
//! gt = "shape_000.map"         # map to the template's vertices
//! mesh = "shape_000_eval.off"  # optional surface when `path` is a bare cloud
//!
//! [[pair]]                     # only read with pairing = "explicit"
//! source = "shape_000"
//! target = "template"
//! map = "shape_000_template.map"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geom::{self, load_shape, read_map, Mesh, PointCloud, PointMap, Shape};
use crate::losses::LossMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    ToTemplate,
    AllPairs,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub gt: Option<PathBuf>,
    #[serde(default)]
    pub sym: Option<PathBuf>,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub source: String,
    pub target: String,
    pub map: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub zero_indexed: bool,
    #[serde(default, rename = "shape")]
    pub shapes: Vec<ShapeEntry>,
    #[serde(default, rename = "pair")]
    pub pairs: Vec<PairEntry>,
}

impl DatasetIndex {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("dataset index: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A shape after normalization. `mesh`, when present, shares the cloud's
/// vertices and transform.
#[derive(Clone, Debug)]
pub struct DataShape {
    pub name: String,
    pub cloud: PointCloud,
    pub mesh: Option<Mesh>,
    /// Map to the template's vertices.
    pub gt: Option<PointMap>,
    pub sym: Option<PointMap>,
}

/// Ordered training pair with its vertex map `source → target`.
#[derive(Clone, Debug)]
pub struct PairSpec {
    pub source: usize,
    pub target: usize,
    pub map: PointMap,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub shapes: Vec<DataShape>,
    pub pairs: Vec<PairSpec>,
}

fn normalize_mesh(mesh: &Mesh, n: &geom::Normalized) -> Result<Mesh> {
    let positions = mesh
        .positions()
        .iter()
        .map(|p| std::array::from_fn(|d| (p[d] - n.translation[d]) / n.scale))
        .collect();
    Mesh::new(positions, mesh.faces().to_vec())
}

impl DataShape {
    /// Normalizes `shape` (and its optional separate evaluation surface).
    pub fn new(name: impl Into<String>, shape: &Shape, eval_mesh: Option<&Mesh>) -> Result<Self> {
        let name = name.into();
        let norm = geom::normalize(&shape.cloud())?;
        let mesh = match (eval_mesh, shape.mesh()) {
            (Some(m), _) | (None, Some(m)) => {
                if m.vertex_count() != norm.cloud.len() {
                    return Err(Error::Config(format!(
                        "shape {name}: surface has {} vertices, cloud has {}",
                        m.vertex_count(),
                        norm.cloud.len()
                    )));
                }
                Some(normalize_mesh(m, &norm)?)
            }
            (None, None) => None,
        };
        Ok(Self {
            name,
            cloud: norm.cloud,
            mesh,
            gt: None,
            sym: None,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Inverse of `gt` on the template: each template vertex goes to the lowest
/// shape vertex mapped onto it, or onto the nearest covered template vertex.
fn nearest_inverse(gt: &PointMap, template: &PointCloud) -> PointMap {
    let mut inv: Vec<Option<usize>> = vec![None; template.len()];
    for (v, &t) in gt.targets().iter().enumerate() {
        if inv[t].is_none() {
            inv[t] = Some(v);
        }
    }
    let covered: Vec<usize> = (0..template.len()).filter(|&t| inv[t].is_some()).collect();
    let covered_pts: Vec<_> = covered.iter().map(|&t| template.positions()[t]).collect();
    let targets = (0..template.len())
        .map(|t| match inv[t] {
            Some(v) => v,
            None => {
                let c = covered[geom::nearest_index(&covered_pts, template.positions()[t])];
                inv[c].expect("covered")
            }
        })
        .collect();
    PointMap::new(targets)
}

impl Dataset {
    pub fn load(index_path: &Path) -> Result<Self> {
        let index = DatasetIndex::read(index_path)?;
        let base = index_path.parent().unwrap_or(Path::new("."));
        Self::from_index(&index, base)
    }

    pub fn from_index(index: &DatasetIndex, base: &Path) -> Result<Self> {
        if index.shapes.is_empty() {
            return Err(Error::Config("dataset index lists no shapes".into()));
        }
        let mut shapes = Vec::with_capacity(index.shapes.len());
        for entry in &index.shapes {
            if shapes.iter().any(|s: &DataShape| s.name == entry.name) {
                return Err(Error::Config(format!("duplicate shape name '{}'", entry.name)));
            }
            let shape = load_shape(base.join(&entry.path), None)?;
            let eval_mesh = match &entry.mesh {
                Some(p) => match load_shape(base.join(p), None)? {
                    Shape::Mesh(m) => Some(m),
                    Shape::Cloud(_) => return Err(Error::Config(format!("{}: expected a surface with faces", p.display()))),
                },
                None => None,
            };
            let mut ds = DataShape::new(&entry.name, &shape, eval_mesh.as_ref())?;
            if let Some(p) = &entry.gt {
                ds.gt = Some(read_map(base.join(p), index.zero_indexed)?);
            }
            if let Some(p) = &entry.sym {
                ds.sym = Some(read_map(base.join(p), index.zero_indexed)?);
            }
            shapes.push(ds);
        }

        let explicit = index
            .pairs
            .iter()
            .map(|p| Ok((p.source.clone(), p.target.clone(), read_map(base.join(&p.map), index.zero_indexed)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(shapes, index.pairing, index.template.as_deref(), explicit)
    }

    /// Builds pairs from in-memory shapes. `explicit` is only read for
    /// [`Pairing::Explicit`].
    pub fn assemble(
        shapes: Vec<DataShape>,
        pairing: Pairing,
        template: Option<&str>,
        explicit: Vec<(String, String, PointMap)>,
    ) -> Result<Self> {
        let find = |name: &str| {
            shapes
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| Error::Config(format!("unknown shape '{name}'")))
        };
        let template_idx = template.map(find).transpose()?;
        let to_template = |i: usize, ti: usize| -> Result<PointMap> {
            if i == ti {
                return Ok(shapes[i].gt.clone().unwrap_or_else(|| PointMap::identity(shapes[i].len())));
            }
            shapes[i].gt.clone().ok_or_else(|| {
                Error::Config(format!("shape '{}' has no ground-truth map to the template", shapes[i].name))
            })
        };

        let mut pairs = Vec::new();
        match pairing {
            Pairing::ToTemplate => {
                let ti = template_idx.ok_or_else(|| Error::Config("to_template pairing needs `template`".into()))?;
                for i in (0..shapes.len()).filter(|&i| i != ti) {
                    pairs.push(PairSpec {
                        source: i,
                        target: ti,
                        map: to_template(i, ti)?,
                    });
                }
            }
            Pairing::AllPairs => {
                let ti = template_idx.ok_or_else(|| Error::Config("all_pairs pairing needs `template`".into()))?;
                let gts = (0..shapes.len()).map(|i| to_template(i, ti)).collect::<Result<Vec<_>>>()?;
                for gt in &gts {
                    gt.validate(shapes[ti].len())?;
                }
                let inverses: Vec<PointMap> = gts.iter().map(|g| nearest_inverse(g, &shapes[ti].cloud)).collect();
                for i in 0..shapes.len() {
                    for j in (0..shapes.len()).filter(|&j| j != i) {
                        pairs.push(PairSpec {
                            source: i,
                            target: j,
                            map: gts[i].then(&inverses[j])?,
                        });
                    }
                }
            }
            Pairing::Explicit => {
                for (s, t, map) in explicit {
                    pairs.push(PairSpec {
                        source: find(&s)?,
                        target: find(&t)?,
                        map,
                    });
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::Config("dataset yields no training pairs".into()));
        }
        let ds = Self { shapes, pairs };
        ds.check_maps()?;
        Ok(ds)
    }

    fn check_maps(&self) -> Result<()> {
        let bad = |what: String, e: Error| Error::Config(format!("{what}: {e}"));
        for s in &self.shapes {
            if let Some(sym) = &s.sym {
                if sym.source_size() != s.len() {
                    return Err(Error::Config(format!(
                        "symmetry map of '{}' has {} entries for {} vertices",
                        s.name,
                        sym.source_size(),
                        s.len()
                    )));
                }
                sym.validate(s.len()).map_err(|e| bad(format!("symmetry map of '{}'", s.name), e))?;
            }
        }
        for p in &self.pairs {
            let (src, tgt) = (&self.shapes[p.source], &self.shapes[p.target]);
            let what = format!("map {} → {}", src.name, tgt.name);
            if p.map.source_size() != src.len() {
                return Err(Error::Config(format!("{what} has {} entries for {} vertices", p.map.source_size(), src.len())));
            }
            p.map.validate(tgt.len()).map_err(|e| bad(what, e))?;
        }
        Ok(())
    }

    pub fn shape_index(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    /// Rejects configurations the data cannot serve, before any training.
    pub fn validate_for(&self, mode: LossMode, sample_count: usize) -> Result<()> {
        for p in &self.pairs {
            for &i in &[p.source, p.target] {
                let s = &self.shapes[i];
                if sample_count > s.len() {
                    return Err(Error::Config(format!(
                        "sample_count {sample_count} exceeds the {} points of shape '{}'",
                        s.len(),
                        s.name
                    )));
                }
                if mode.needs_symmetry_maps() && s.sym.is_none() {
                    return Err(Error::Config(format!(
                        "mode {} needs a symmetry map for shape '{}'",
                        mode.name(),
                        s.name
                    )));
                }
            }
        }
        Ok(())
    }
}
