use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Dense row-major matrix of doubles. Scalars are 1×1.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor::new",
                format!("{} values for a {rows}×{cols} tensor", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("Tensor::from_rows", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transposed(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Plain product without tape bookkeeping.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(self, false, other, false, &mut out, 0.0);
        Ok(out)
    }

    /// Flat binary form: `u64` rows, `u64` cols, then row-major `f64`,
    /// all little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Tensor> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "tensor header too large"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Ok(Tensor { rows, cols, data })
    }
}

/// `out = op(a) · op(b) + beta · out`, where `op` optionally transposes.
/// Transposition is expressed through strides; nothing is copied.
pub(crate) fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool, out: &mut Tensor, beta: f64) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    debug_assert_eq!(k, kb);
    debug_assert_eq!(out.shape(), [m, n]);
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut out.data {
            *v *= beta;
        }
        return;
    }
    // SAFETY: dimensions and strides describe the exact extents of the three
    // buffers, and `out` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
