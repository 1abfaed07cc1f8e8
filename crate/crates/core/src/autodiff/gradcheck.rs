//! Central finite-difference checks for tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; the absolute
/// difference when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Builds the scalar `f` at `inputs` (as leaves), runs backward and compares
/// each input's gradient to central differences with step `h`. Returns the
/// worst relative error over the inputs.
pub fn gradient_error<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let eval = |k: usize, e: usize, delta: f64| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let mut x = x.clone();
                if j == k {
                    x.data_mut()[e] += delta;
                }
                t.constant(x)
            })
            .collect();
        let o = f(&mut t, &vs)?;
        Ok(t.value(o).item())
    };

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[k])
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let mut numeric = vec![0.0; input.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            *slot = (eval(k, e, h)? - eval(k, e, -h)?) / (2.0 * h);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}
