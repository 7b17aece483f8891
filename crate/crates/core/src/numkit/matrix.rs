use super::NumError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumError> {
        if values.len() != rows * cols {
            return Err(NumError::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite {
                context: "matrix entry",
                index,
            });
        }
        Ok(Self { rows, cols, values })
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(NumError::DimensionMismatch {
                    context: "row length",
                    expected: cols,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, values)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.values.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// Which operand layout to read in [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Plain,
    Transposed,
}

fn strides(m: &DenseMatrix, op: Op) -> (usize, usize, isize, isize) {
    let (r, c) = (m.rows, m.cols);
    match op {
        Op::Plain => (r, c, c as isize, 1),
        Op::Transposed => (c, r, 1, c as isize),
    }
}

/// `out = alpha * op(a) * op(b) + beta * out`.
///
/// Panics if shapes are incompatible; callers validate dimensions up front.
pub fn gemm(alpha: f64, a: &DenseMatrix, op_a: Op, b: &DenseMatrix, op_b: Op, beta: f64, out: &mut DenseMatrix) {
    let (m, k, rsa, csa) = strides(a, op_a);
    let (kb, n, rsb, csb) = strides(b, op_b);
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((out.rows, out.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.values.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: strides describe in-bounds views of the three buffers, which
    // have been checked against (m, k, n) above; `out` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.values.as_ptr(),
            rsa,
            csa,
            b.values.as_ptr(),
            rsb,
            csb,
            beta,
            out.values.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let mut c = DenseMatrix::zeros(2, 2);
        gemm(1.0, &a, Op::Plain, &b, Op::Plain, 0.0, &mut c);
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);

        // a^T a
        let mut g = DenseMatrix::zeros(3, 3);
        gemm(1.0, &a, Op::Transposed, &a, Op::Plain, 0.0, &mut g);
        assert_eq!(g.row(0), &[17.0, 22.0, 27.0]);
        assert_eq!(g.row(2), &[27.0, 36.0, 45.0]);

        // accumulate with beta
        let mut c2 = c.clone();
        gemm(1.0, &a, Op::Plain, &b, Op::Plain, 1.0, &mut c2);
        assert_eq!(c2.as_slice(), &[116.0, 128.0, 278.0, 308.0]);
    }

    #[test]
    fn rejects_bad_storage() {
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
