use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `n x p` array of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PointCloud {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            data: vec![0.0; n * p],
        }
    }

    pub fn from_flat(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::DimensionMismatch {
                context: "point cloud buffer",
                expected: n * p,
                found: data.len(),
            });
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "point cloud row",
                    expected: p,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, p, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PointCloud {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<PointCloud> for Vec<Vec<f64>> {
    fn from(c: PointCloud) -> Self {
        c.to_rows()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn max_pairwise_sq_dist(rows: &[Vec<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            best = best.max(sq_dist(&rows[i], &rows[j]));
        }
    }
    best
}
