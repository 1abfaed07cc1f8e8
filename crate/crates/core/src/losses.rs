//! Training objectives over soft correspondence matrices.
//!
//! Symmetry maps act on soft maps through index operations: left
//! multiplication by a map's 0/1 matrix is a row gather, right
//! multiplication is a column scatter-add. Nothing n×n is built for them.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::geom::PointMap;

/// Which loss assembly a training run optimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    NnOnly,
    NnPlusSymNn,
    #[default]
    SupervisedComm,
    UnsupervisedComm,
}

impl LossMode {
    pub const ALL: [LossMode; 4] = [
        LossMode::NnOnly,
        LossMode::NnPlusSymNn,
        LossMode::SupervisedComm,
        LossMode::UnsupervisedComm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::NnOnly => "nn_only",
            LossMode::NnPlusSymNn => "nn_plus_sym_nn",
            LossMode::SupervisedComm => "supervised_comm",
            LossMode::UnsupervisedComm => "unsupervised_comm",
        }
    }

    /// Modes whose loss reads ground-truth self-symmetry maps.
    pub fn needs_symmetry_maps(self) -> bool {
        matches!(self, LossMode::NnPlusSymNn | LossMode::SupervisedComm)
    }

    /// Modes that embed flipped copies of each shape.
    pub fn needs_flipped(self) -> bool {
        matches!(self, LossMode::NnPlusSymNn | LossMode::UnsupervisedComm)
    }

    pub fn default_gamma(self) -> f64 {
        match self {
            LossMode::UnsupervisedComm => 0.2,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss mode '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommNorm {
    /// `‖D‖²_F`.
    #[default]
    SquaredFrobenius,
    /// `sqrt(‖D‖²_F + 1e-12)`.
    FrobeniusEps,
}

const FROBENIUS_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    /// Commutativity weight. Unset means the mode's default.
    pub gamma: Option<f64>,
    pub mode: LossMode,
    pub comm_norm: CommNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            gamma: None,
            mode: LossMode::default(),
            comm_norm: CommNorm::default(),
        }
    }
}

impl LossConfig {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| self.mode.default_gamma())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        let g = self.gamma();
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Config(format!("gamma must be non-negative, got {g}")));
        }
        Ok(())
    }
}

/// `row_softmax(Φ_X Φ_Yᵀ / τ)`, an n_x×n_y row-stochastic matrix.
pub fn soft_correspondence(tape: &mut Tape, phi_x: Var, phi_y: Var, tau: f64) -> Result<Var> {
    let (kx, ky) = (tape.value(phi_x).cols(), tape.value(phi_y).cols());
    if kx != ky {
        return Err(Error::shape("soft_correspondence", format!("embedding widths {kx} and {ky}")));
    }
    let yt = tape.transpose(phi_y)?;
    let logits = tape.matmul(phi_x, yt)?;
    tape.row_softmax(logits, tau)
}

/// `‖S·P_Y − G‖²_F`: how far the soft map carries Y's coordinates from the
/// ground-truth images `G` (n_x×3).
pub fn nn_loss(tape: &mut Tape, s: Var, p_y: Var, gt_targets: Var) -> Result<Var> {
    let sp = tape.matmul(s, p_y)?;
    let d = tape.sub(sp, gt_targets)?;
    tape.frobenius_sq(d)
}

fn apply_norm(tape: &mut Tape, d: Var, norm: CommNorm) -> Result<Var> {
    let sq = tape.frobenius_sq(d)?;
    match norm {
        CommNorm::SquaredFrobenius => Ok(sq),
        CommNorm::FrobeniusEps => tape.sqrt_eps(sq, FROBENIUS_EPS),
    }
}

/// `‖T_X·S − S·T_Y‖` for ground-truth self-maps given as index maps.
pub fn comm_loss_supervised(
    tape: &mut Tape,
    s_xy: Var,
    sym_x: &PointMap,
    sym_y: &PointMap,
    norm: CommNorm,
) -> Result<Var> {
    let [nx, ny] = tape.value(s_xy).shape();
    if sym_x.source_size() != nx || sym_y.source_size() != ny {
        return Err(Error::shape(
            "comm_loss_supervised",
            format!(
                "soft map is {nx}×{ny}, symmetry maps cover {} and {} points",
                sym_x.source_size(),
                sym_y.source_size()
            ),
        ));
    }
    sym_x.validate(nx)?;
    sym_y.validate(ny)?;
    let left = tape.gather_rows(s_xy, sym_x.targets())?;
    let right = tape.scatter_add_cols(s_xy, sym_y.targets(), ny)?;
    let d = tape.sub(left, right)?;
    apply_norm(tape, d, norm)
}

/// `‖S_{X_f X}·S_XY − S_XY·S_{Y Y_f}‖` with soft self-maps from flipped twins.
pub fn comm_loss_unsupervised(tape: &mut Tape, s_xfx: Var, s_xy: Var, s_yyf: Var, norm: CommNorm) -> Result<Var> {
    let left = tape.matmul(s_xfx, s_xy)?;
    let right = tape.matmul(s_xy, s_yyf)?;
    let d = tape.sub(left, right)?;
    apply_norm(tape, d, norm)
}

/// Coordinate-transfer loss of a soft self-map `S_{X X_f}` against the
/// ground-truth symmetry: `‖S_{X X_f}·P_X − P_X[sym]‖²_F`. Point j of the
/// flipped twin stands for point j of X, so X's own coordinates are
/// transferred.
pub fn nn_sym_loss(tape: &mut Tape, s_xxf: Var, p_x: Var, sym_x: &PointMap) -> Result<Var> {
    let n = tape.value(p_x).rows();
    if sym_x.source_size() != n {
        return Err(Error::shape(
            "nn_sym_loss",
            format!("{n} points but the symmetry map covers {}", sym_x.source_size()),
        ));
    }
    let target = tape.gather_rows(p_x, sym_x.targets())?;
    nn_loss(tape, s_xxf, p_x, target)
}

/// Combines per-pair terms for the configured mode. `comm` is the mode's
/// second term: the symmetry NN loss for `nn_plus_sym_nn` (weight 1), the
/// commutativity loss for the comm modes (weight γ). A zero γ leaves the NN
/// term untouched.
pub fn total_loss(tape: &mut Tape, cfg: &LossConfig, nn: Var, comm: Option<Var>) -> Result<Var> {
    let need = |c: Option<Var>| {
        c.ok_or_else(|| Error::Config(format!("mode {} needs its second loss term", cfg.mode.name())))
    };
    match cfg.mode {
        LossMode::NnOnly => Ok(nn),
        LossMode::NnPlusSymNn => {
            let c = need(comm)?;
            tape.add(nn, c)
        }
        LossMode::SupervisedComm | LossMode::UnsupervisedComm => {
            let c = need(comm)?;
            let g = cfg.gamma();
            if g == 0.0 {
                return Ok(nn);
            }
            let weighted = tape.scale(c, g)?;
            tape.add(nn, weighted)
        }
    }
}
