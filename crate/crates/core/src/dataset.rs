use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::randsrc::SigmaStats;

/// Paired signal, noise and observed clouds with `X = Y + diag(R) Z / sqrt(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataSet", into = "RawDataSet")]
pub struct DataSet {
    y: PointCloud,
    z: PointCloud,
    x: PointCloud,
    r: Vec<f64>,
    nu: f64,
    sigma_stats: Option<SigmaStats>,
}

impl DataSet {
    pub fn new(
        y: PointCloud,
        z: PointCloud,
        r: Vec<f64>,
        nu: f64,
        sigma_stats: Option<SigmaStats>,
    ) -> Result<Self> {
        let (n, p) = (y.n(), y.p());
        if n == 0 || p == 0 {
            return Err(Error::param("dataset", "n and p must be positive"));
        }
        if z.n() != n || z.p() != p {
            return Err(Error::DimensionMismatch {
                context: "noise cloud shape",
                expected: n * p,
                found: z.n() * z.p(),
            });
        }
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                context: "radius count",
                expected: n,
                found: r.len(),
            });
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::param("nu", format!("must be finite and nonnegative, got {nu}")));
        }
        let inv_sqrt_p = 1.0 / (p as f64).sqrt();
        let mut x = y.clone();
        for i in 0..n {
            let scale = r[i] * inv_sqrt_p;
            for (xv, zv) in x.row_mut(i).iter_mut().zip(z.row(i)) {
                *xv += scale * zv;
            }
        }
        Ok(Self {
            y,
            z,
            x,
            r,
            nu,
            sigma_stats,
        })
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    pub fn p(&self) -> usize {
        self.y.p()
    }

    pub fn y(&self) -> &PointCloud {
        &self.y
    }

    pub fn z(&self) -> &PointCloud {
        &self.z
    }

    pub fn x(&self) -> &PointCloud {
        &self.x
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// `E||Z||^2 / p` (equal to `trace(S)/p`).
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma_stats(&self) -> Option<SigmaStats> {
        self.sigma_stats
    }

    /// Same `Y`, `Z`, `nu`, with the radii replaced.
    pub fn with_radii(&self, r: Vec<f64>) -> Result<Self> {
        Self::new(self.y.clone(), self.z.clone(), r, self.nu, self.sigma_stats)
    }

    /// First row whose radius is not exactly 1.
    pub fn first_non_unit_radius(&self) -> Option<(usize, f64)> {
        self.r.iter().copied().enumerate().find(|(_, v)| *v != 1.0)
    }
}

/// Serialized form; `x` is optional on input and checked when present.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataSet {
    y: PointCloud,
    z: PointCloud,
    r: Vec<f64>,
    nu: f64,
    #[serde(default)]
    sigma_stats: Option<SigmaStats>,
    #[serde(default)]
    x: Option<PointCloud>,
}

impl TryFrom<RawDataSet> for DataSet {
    type Error = Error;

    fn try_from(raw: RawDataSet) -> Result<Self> {
        let ds = DataSet::new(raw.y, raw.z, raw.r, raw.nu, raw.sigma_stats)?;
        if let Some(x) = raw.x {
            if x.n() != ds.n() || x.p() != ds.p() {
                return Err(Error::DimensionMismatch {
                    context: "observed cloud shape",
                    expected: ds.n() * ds.p(),
                    found: x.n() * x.p(),
                });
            }
            let worst = x
                .as_flat()
                .iter()
                .zip(ds.x.as_flat())
                .fold(0.0_f64, |a, (u, v)| a.max((u - v).abs()));
            if worst > 1e-12 {
                return Err(Error::IdentityViolation(format!(
                    "stored X differs from Y + R Z / sqrt(p) by {worst:e}"
                )));
            }
        }
        Ok(ds)
    }
}

impl From<DataSet> for RawDataSet {
    fn from(ds: DataSet) -> Self {
        RawDataSet {
            y: ds.y,
            z: ds.z,
            r: ds.r,
            nu: ds.nu,
            sigma_stats: ds.sigma_stats,
            x: Some(ds.x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DataSet {
        let y = PointCloud::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let z = PointCloud::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        DataSet::new(y, z, vec![1.0, 2.0], 1.0, None).unwrap()
    }

    #[test]
    fn observed_cloud_follows_model_equation() {
        let ds = tiny();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(ds.x().row(0), &[s, 1.0 - s]);
        assert_eq!(ds.x().row(1), &[1.0 + 2.0 * 0.5 * s, 2.0 * 2.0 * s]);
    }

    #[test]
    fn json_round_trip_and_tamper_detection() {
        let ds = tiny();
        let s = serde_json::to_string(&ds).unwrap();
        assert_eq!(serde_json::from_str::<DataSet>(&s).unwrap(), ds);

        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["x"][0][0] = serde_json::json!(10.0);
        assert!(serde_json::from_value::<DataSet>(v).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let y = PointCloud::zeros(2, 3);
        assert!(DataSet::new(y.clone(), PointCloud::zeros(2, 2), vec![1.0; 2], 1.0, None).is_err());
        assert!(DataSet::new(y.clone(), PointCloud::zeros(2, 3), vec![1.0; 3], 1.0, None).is_err());
        assert!(DataSet::new(y, PointCloud::zeros(2, 3), vec![1.0; 2], -1.0, None).is_err());
    }
}
