//! PointNet-style per-point encoder producing the n×k canonical embedding.
//!
//! A shared per-point MLP lifts each point to a wide feature whose
//! column-wise max over the cloud gives a global descriptor. The head sees,
//! for every point, the concatenation `[global, local]` where `local` is the
//! output of the penultimate point layer, and maps it to `k` dimensions.
//!
//! The first head layer is stored as two weight blocks (global rows, local
//! rows). Multiplying the global block once per cloud and adding the result
//! to every row is the same product as multiplying the concatenated matrix,
//! without repeating the global rows n times.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::PointCloud;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Embedding dimension.
    pub k: usize,
    /// Widths of the shared per-point layers. The last one is max-pooled.
    pub point_widths: Vec<usize>,
    /// Hidden widths of the head, before the final k-wide layer.
    pub head_widths: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            k: 20,
            point_widths: vec![64, 64, 128, 1024],
            head_widths: vec![512, 256],
        }
    }
}

impl ArchConfig {
    /// Narrow variant for tests and quick experiments.
    pub fn tiny(k: usize) -> Self {
        Self {
            k,
            point_widths: vec![8, 8, 12, 16],
            head_widths: vec![12, 10],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("embedding dimension k must be at least 1".into()));
        }
        if self.point_widths.len() < 2 {
            return Err(Error::Config("need at least two per-point layers (local and pooled)".into()));
        }
        if self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        Ok(())
    }

    fn local_width(&self) -> usize {
        self.point_widths[self.point_widths.len() - 2]
    }

    fn global_width(&self) -> usize {
        *self.point_widths.last().unwrap()
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, [usize; 2])> {
        let mut out = Vec::new();
        let mut fan_in = 3;
        for (i, &w) in self.point_widths.iter().enumerate() {
            out.push((format!("point.{i}.weight"), [fan_in, w]));
            out.push((format!("point.{i}.bias"), [1, w]));
            fan_in = w;
        }
        let widths: Vec<usize> = self.head_widths.iter().copied().chain([self.k]).collect();
        out.push(("head.0.weight_global".into(), [self.global_width(), widths[0]]));
        out.push(("head.0.weight_local".into(), [self.local_width(), widths[0]]));
        out.push(("head.0.bias".into(), [1, widths[0]]));
        for j in 1..widths.len() {
            out.push((format!("head.{j}.weight"), [widths[j - 1], widths[j]]));
            out.push((format!("head.{j}.bias"), [1, widths[j]]));
        }
        out
    }
}

/// All learnable weights of the encoder, stored in [`ArchConfig::layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    arch: ArchConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl EncoderParams {
    /// He-uniform weights (std √(2/fan_in)), zero biases.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = arch.layout();
        let mut tensors = Vec::with_capacity(layout.len());
        // The split first head layer shares one fan-in.
        let head_fan_in = arch.global_width() + arch.local_width();
        for (name, [r, c]) in &layout {
            if name.ends_with("bias") {
                tensors.push(Tensor::zeros(*r, *c));
                continue;
            }
            let fan_in = if name.starts_with("head.0.") { head_fan_in } else { *r };
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..r * c).map(|_| rng.gen_range(-bound..bound)).collect();
            tensors.push(Tensor::new(*r, *c, data)?);
        }
        Ok(Self {
            arch: arch.clone(),
            names: layout.into_iter().map(|(n, _)| n).collect(),
            tensors,
        })
    }

    /// Rebuilds parameters from tensors in layout order, checking shapes.
    pub fn from_tensors(arch: &ArchConfig, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "architecture has {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != *shape {
                return Err(Error::Checkpoint(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(Self {
            arch: arch.clone(),
            names: layout.into_iter().map(|(n, _)| n).collect(),
            tensors,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles of an [`EncoderParams`], same order as its tensors.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn in_layer(layer: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite(op) => Error::NonFinite(format!("{op} in layer {layer}")),
        other => other,
    }
}

/// Embeds `cloud` on `tape`, returning the n×k embedding.
pub fn embed(tape: &mut Tape, arch: &ArchConfig, params: &BoundParams, cloud: &PointCloud) -> Result<Var> {
    let p = &params.vars;
    let n = cloud.len();
    let mut h = tape.constant(Tensor::new(n, 3, cloud.flat())?);
    let mut slot = 0;
    let mut local = h;
    let depth = arch.point_widths.len();
    for i in 0..depth {
        let name = format!("point.{i}");
        let z = tape.matmul(h, p[slot]).map_err(in_layer(&name))?;
        let z = tape.add_row(z, p[slot + 1]).map_err(in_layer(&name))?;
        h = tape.relu(z).map_err(in_layer(&name))?;
        slot += 2;
        if i == depth - 2 {
            local = h;
        }
    }
    let global = tape.global_max_pool(h).map_err(in_layer("global_max_pool"))?;

    let g = tape.matmul(global, p[slot]).map_err(in_layer("head.0"))?;
    let z = tape.matmul(local, p[slot + 1]).map_err(in_layer("head.0"))?;
    let z = tape.add_row(z, g).map_err(in_layer("head.0"))?;
    let mut z = tape.add_row(z, p[slot + 2]).map_err(in_layer("head.0"))?;
    slot += 3;
    let head_layers = arch.head_widths.len() + 1;
    for j in 1..head_layers {
        let name = format!("head.{j}");
        let a = tape.relu(z).map_err(in_layer(&name))?;
        let y = tape.matmul(a, p[slot]).map_err(in_layer(&name))?;
        z = tape.add_row(y, p[slot + 1]).map_err(in_layer(&name))?;
        slot += 2;
    }
    Ok(z)
}

/// Forward pass without gradient bookkeeping.
pub fn embed_values(params: &EncoderParams, cloud: &PointCloud) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = embed(&mut tape, params.arch(), &bound, cloud)?;
    Ok(tape.value(out).clone())
}
