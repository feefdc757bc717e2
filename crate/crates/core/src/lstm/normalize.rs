use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Per-feature standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-8;

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population statistics over every row of every sequence. Components with
    /// (near) zero spread get unit std.
    pub fn fit<'a, I>(seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Matrix>,
        I::IntoIter: Clone,
    {
        let it = seqs.into_iter();
        let dim = it
            .clone()
            .next()
            .map(|m| m.cols())
            .ok_or(Error::Empty("normalizer data"))?;
        let mut sum = vec![0.0; dim];
        let mut n = 0usize;
        for m in it.clone() {
            if m.cols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "sequence width {} vs {dim}",
                    m.cols()
                )));
            }
            for row in m.row_iter() {
                sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
            n += m.rows();
        }
        if n == 0 {
            return Err(Error::Empty("normalizer data"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for m in it {
            for row in m.row_iter() {
                sq.iter_mut()
                    .zip(row.iter().zip(&mean))
                    .for_each(|(s, (v, mu))| *s += (v - mu) * (v - mu));
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Normalizer { mean, std })
    }

    /// Re-estimates column `col` from its nonzero entries only, so a zero
    /// sentinel does not set the scale of that column.
    pub fn refit_nonzero<'a, I>(&mut self, col: usize, seqs: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Matrix>,
    {
        if col >= self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "column {col} of width {}",
                self.dim()
            )));
        }
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for m in seqs {
            self.check(m)?;
            for row in m.row_iter() {
                let v = row[col];
                if v != 0.0 {
                    n += 1;
                    sum += v;
                    sq += v * v;
                }
            }
        }
        if n == 0 {
            return Ok(());
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).max(0.0).sqrt();
        self.mean[col] = mean;
        self.std[col] = if sd < MIN_STD { 1.0 } else { sd };
        Ok(())
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "normalizer width {} vs sequence width {}",
                self.dim(),
                m.cols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        let d = self.dim();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let k = i % d;
            *v = (*v - self.mean[k]) / self.std[k];
        }
        Ok(out)
    }

    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        let d = self.dim();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let k = i % d;
            *v = *v * self.std[k] + self.mean[k];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_and_inverts() {
        let a = Matrix::from_rows(&[vec![1.0, 5.0, 3.0], vec![3.0, 5.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 5.0, 1.0]]).unwrap();
        let n = Normalizer::fit([&a, &b]).unwrap();
        assert_eq!(n.mean, vec![2.0, 5.0, 1.0]);
        assert_eq!(n.std[1], 1.0);
        let z = n.apply(&a).unwrap();
        assert!((z.get(0, 0) + z.get(1, 0)).abs() < 1e-12);
        let back = n.invert(&z).unwrap();
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(n.apply(&Matrix::zeros(1, 2)).is_err());
        let empty: [&Matrix; 0] = [];
        assert!(Normalizer::fit(empty).is_err());
    }

    #[test]
    fn refit_ignores_zero_entries() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![4.0, 2.0], vec![6.0, 3.0]]).unwrap();
        let mut n = Normalizer::fit([&a]).unwrap();
        let before = n.clone();
        n.refit_nonzero(0, [&a]).unwrap();
        assert!((n.mean[0] - 5.0).abs() < 1e-12);
        assert!((n.std[0] - 1.0).abs() < 1e-12);
        assert_eq!(n.mean[1], before.mean[1]);
        assert_eq!(n.std[1], before.std[1]);
        assert!(n.refit_nonzero(2, [&a]).is_err());
        let z = Matrix::zeros(2, 2);
        let mut m = Normalizer::identity(2);
        m.refit_nonzero(0, [&z]).unwrap();
        assert_eq!(m, Normalizer::identity(2));
    }
}
