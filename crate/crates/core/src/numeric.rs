//! Dense vector and matrix arithmetic plus the few statistics the rest of
//! the crate needs. Vectors are plain `[f64]` slices; [`Matrix`] is a
//! row-major buffer.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// `m · v`.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return Err(Error::invalid(format!(
            "matvec: matrix has {} columns, vector has {} entries",
            m.cols,
            v.len()
        )));
    }
    Ok((0..m.rows).map(|r| dot(m.row(r), v)).collect())
}

/// `mᵀ · v`.
pub fn matvec_transposed(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.rows != v.len() {
        return Err(Error::invalid(format!(
            "matvec_transposed: matrix has {} rows, vector has {} entries",
            m.rows,
            v.len()
        )));
    }
    let mut out = vec![0.0; m.cols];
    for (r, &vr) in v.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(m.row(r)) {
            *o += w * vr;
        }
    }
    Ok(out)
}

/// `a ⊗ b` as an `a.len() × b.len()` matrix.
pub fn outer(a: &[f64], b: &[f64]) -> Matrix {
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        data.extend(b.iter().map(|&y| x * y));
    }
    Matrix {
        rows: a.len(),
        cols: b.len(),
        data,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_logits(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    Ok(logits.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Softmax with the maximum subtracted before exponentiation.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = check_logits(logits)?;
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `log(softmax(logits))` via log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = check_logits(logits)?;
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|&l| l - lse).collect())
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(-p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Mean and population standard deviation. Empty input yields `(0, 0)`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
