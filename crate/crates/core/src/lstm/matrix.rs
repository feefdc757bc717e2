use crate::error::{Error, Result};

/// Dense row-major `f64` matrix. Sequences are stored one timestep per row.
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(|r| r.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = beta * c + a * b^T`, with `a: m x k`, `b: n x k`, `c: m x n`.
pub(crate) fn gemm_abt(a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    debug_assert_eq!(a.cols, b.cols);
    debug_assert_eq!((c.rows, c.cols), (a.rows, b.rows));
    let (m, k, n) = (a.rows, a.cols, b.rows);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: slices are sized m*k, n*k and m*n and the strides stay within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            1,
            k as isize,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = beta * c + a^T * b`, with `a: k x m`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_atb(a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!((c.rows, c.cols), (a.cols, b.cols));
    let (m, k, n) = (a.cols, a.rows, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above; `a` is read transposed through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            1,
            m as isize,
            b.data.as_ptr(),
            n as isize,
            1,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = beta * c + a * b`, with `a: m x k`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_ab(a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!((c.rows, c.cols), (a.rows, b.cols));
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            n as isize,
            1,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
