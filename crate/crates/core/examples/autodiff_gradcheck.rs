//! Builds a small loss on the tape, runs backward and compares every input
//! gradient with central finite differences.

use symmatch::autodiff::{gradcheck, Tape, Tensor};

fn main() -> symmatch::Result<()> {
    let a = Tensor::from_rows(&[vec![0.3, -1.2, 0.5], vec![1.1, 0.4, -0.7]])?;
    let b = Tensor::from_rows(&[vec![0.9, 0.1], vec![-0.3, 0.8], vec![0.2, -0.5]])?;

    // relu(A·B), softmax over rows, then squared Frobenius norm.
    let mut tape = Tape::new();
    let va = tape.leaf(a.clone());
    let vb = tape.leaf(b.clone());
    let ab = tape.matmul(va, vb)?;
    let r = tape.relu(ab)?;
    let s = tape.row_softmax(r, 0.5)?;
    let loss = tape.frobenius_sq(s)?;
    tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item());
    println!("dL/dA = {:?}", tape.grad(va).unwrap().data());

    let err = gradcheck::gradient_error(&[a, b], 1e-6, |t, v| {
        let ab = t.matmul(v[0], v[1])?;
        let r = t.relu(ab)?;
        let s = t.row_softmax(r, 0.5)?;
        t.frobenius_sq(s)
    })?;
    println!("worst relative error against finite differences: {err:.2e}");
    Ok(())
}
