//! Seeded samplers for signal, noise and radius models.
//!
//! Observations follow `X_i = Y_i + R_i Z_i / sqrt(p)`. Noise models carry
//! their exact second-order statistics (`nu = E||Z||^2 / p`, `trace(S^2)/p^2`,
//! `||S||_op` for the covariance `S` of `Z`) and a declared concentration
//! profile `P(|F(Z) - E F(Z)| > r) <= C exp(-c0 r^b)` for 1-Lipschitz `F`.
//!
//! All samplers are pure functions of `(model, n, p, seed)`: row `i` is drawn
//! from its own substream (see [`crate::rng`]), and rows are generated in
//! parallel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::points::{dot, max_pairwise_sq_dist, PointCloud};
use crate::rng::{derive_seed, purpose, row_rng};

/// Covariance (or correlation) structure of a noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Covariance {
    Identity {},
    Diagonal {
        values: Vec<f64>,
    },
    /// `S(i,j) = rho^|i-j|`.
    Ar1 {
        rho: f64,
    },
    Full {
        rows: Vec<Vec<f64>>,
    },
}

impl Default for Covariance {
    fn default() -> Self {
        Covariance::Identity {}
    }
}

/// Precomputed facts about a covariance matrix of a given order.
#[derive(Debug, Clone)]
struct CovFacts {
    trace: f64,
    trace_sq: f64,
    op_norm: f64,
    root: Factor,
}

/// A linear map `G` with `G G' = S`; symmetric square root for dense inputs.
#[derive(Debug, Clone)]
enum Factor {
    Identity,
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Factor {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Factor::Identity => out.copy_from_slice(v),
            Factor::Diagonal(d) => {
                for ((o, x), s) in out.iter_mut().zip(v).zip(d) {
                    *o = s * x;
                }
            }
            Factor::Dense(g) => {
                let p = v.len();
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for c in 0..p {
                        acc += g[(r, c)] * v[c];
                    }
                    *o = acc;
                }
            }
        }
    }
}

impl Covariance {
    fn dense(&self, p: usize) -> Result<DMatrix<f64>> {
        match self {
            Covariance::Identity {} => Ok(DMatrix::identity(p, p)),
            Covariance::Diagonal { values } => {
                self.check_len(values.len(), p)?;
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
            }
            Covariance::Ar1 { rho } => {
                Ok(DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)))
            }
            Covariance::Full { rows } => {
                self.check_len(rows.len(), p)?;
                for row in rows {
                    self.check_len(row.len(), p)?;
                }
                let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
                for i in 0..p {
                    for j in (i + 1)..p {
                        if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                            return Err(Error::NotSymmetric { row: i, col: j });
                        }
                    }
                }
                Ok(m)
            }
        }
    }

    fn check_len(&self, found: usize, p: usize) -> Result<()> {
        if found != p {
            return Err(Error::DimensionMismatch {
                context: "covariance order",
                expected: p,
                found,
            });
        }
        Ok(())
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            Covariance::Identity {} => Ok(()),
            Covariance::Diagonal { values } => {
                self.check_len(values.len(), p)?;
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::NotPsd { min_eigenvalue: *v });
                }
                Ok(())
            }
            Covariance::Ar1 { rho } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return Err(Error::param("rho", format!("|rho| must be < 1, got {rho}")));
                }
                Ok(())
            }
            Covariance::Full { .. } => self.dense(p).map(|_| ()),
        }
    }

    fn has_unit_diagonal(&self, p: usize) -> bool {
        match self {
            Covariance::Identity {} | Covariance::Ar1 { .. } => true,
            Covariance::Diagonal { values } => values.iter().all(|v| *v == 1.0),
            Covariance::Full { rows } => rows.iter().take(p).enumerate().all(|(i, r)| r.get(i) == Some(&1.0)),
        }
    }

    fn facts(&self, p: usize) -> Result<CovFacts> {
        self.validate(p)?;
        match self {
            Covariance::Identity {} => Ok(CovFacts {
                trace: p as f64,
                trace_sq: p as f64,
                op_norm: 1.0,
                root: Factor::Identity,
            }),
            Covariance::Diagonal { values } => Ok(CovFacts {
                trace: values.iter().sum(),
                trace_sq: values.iter().map(|v| v * v).sum(),
                op_norm: values.iter().fold(0.0_f64, |a, v| a.max(*v)),
                root: Factor::Diagonal(values.iter().map(|v| v.sqrt()).collect()),
            }),
            _ => {
                let m = self.dense(p)?;
                let (op_norm, root) = psd_sqrt(&m)?;
                Ok(CovFacts {
                    trace: m.trace(),
                    trace_sq: m.iter().map(|v| v * v).sum(),
                    op_norm,
                    root: Factor::Dense(root),
                })
            }
        }
    }
}

/// Returns `(||m||_op, m^{1/2})` for a PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min < -1e-10 * max.max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((max, root))
}

/// Univariate law of the entries of `U_i` (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    #[default]
    StandardNormal,
    /// Symmetric `+-1`.
    Rademacher,
}

impl EntryLaw {
    /// Fourth moment.
    pub fn mu4(self) -> f64 {
        match self {
            EntryLaw::StandardNormal => 3.0,
            EntryLaw::Rademacher => 1.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            EntryLaw::StandardNormal => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Monte-Carlo check of mean 0 and variance 1 (4 standard errors each).
    pub fn self_test(self, draws: usize, seed: u64) -> EntryLawCheck {
        let mut rng = row_rng(seed, 0);
        let xs: Vec<f64> = (0..draws).map(|_| self.draw(&mut rng)).collect();
        let n = draws as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let sd = (m2 - mean * mean).max(0.0).sqrt();
        let var_of_sq = xs.iter().map(|x| (x * x - m2).powi(2)).sum::<f64>() / (n - 1.0);
        let se_mean = sd / n.sqrt();
        let se_m2 = (var_of_sq / n).sqrt();
        let mean_ok = mean.abs() <= 4.0 * se_mean.max(f64::EPSILON);
        // Rademacher squares are exactly 1, so the standard error can vanish.
        let var_ok = (m2 - 1.0).abs() <= 4.0 * se_m2 + 1e-12;
        EntryLawCheck {
            mean,
            second_moment: m2,
            passed: mean_ok && var_ok,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryLawCheck {
    pub mean: f64,
    pub second_moment: f64,
    pub passed: bool,
}

/// Noise distribution of `Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `Z = S^{1/2} U` with i.i.d. entries of `U`.
    GaussianLike {
        #[serde(default)]
        sigma: Covariance,
        #[serde(default)]
        entry_law: EntryLaw,
    },
    /// `sqrt(p) v`, `v` uniform on the unit sphere.
    SphereUniform {},
    /// `G sqrt(p) v` with `G G' = sigma`.
    ScaledSphere {
        #[serde(default)]
        sigma: Covariance,
    },
    /// `p^{1/b} v`, `v` uniform in the unit `l^b` ball.
    LpBall { b_exponent: f64 },
    /// `Phi(N) - 1/2` with `N ~ N(0, correlation)`.
    GaussianCopula {
        #[serde(default)]
        correlation: Covariance,
    },
    /// Degenerate all-zero noise.
    Zero {},
}

/// Second-order statistics of the noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaStats {
    /// `trace(S^2) / p^2`.
    pub trace_sq_over_p2: f64,
    /// `||S||_op`.
    pub op_norm: f64,
}

/// Declared tail profile `C exp(-c0 r^b)` for 1-Lipschitz functions of `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub prefactor: f64,
    pub c0: f64,
    pub b: f64,
}

impl Concentration {
    pub fn tail_bound(&self, r: f64) -> f64 {
        self.prefactor * (-self.c0 * r.powf(self.b)).exp()
    }
}

/// A noise model bound to a dimension, with its covariance factor precomputed.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    p: usize,
    root: Factor,
    nu: f64,
    stats: SigmaStats,
    concentration: Option<Concentration>,
}

impl NoiseModel {
    pub fn validate(&self, p: usize) -> Result<()> {
        self.prepare(p).map(|_| ())
    }

    /// Checks parameters and precomputes everything that depends only on `p`.
    pub fn prepare(&self, p: usize) -> Result<NoiseSampler> {
        if p == 0 {
            return Err(Error::param("p", "dimension must be positive"));
        }
        let pf = p as f64;
        let (root, nu, stats, concentration) = match self {
            NoiseModel::GaussianLike { sigma, .. } => {
                let f = sigma.facts(p)?;
                let c = Concentration {
                    prefactor: 2.0,
                    c0: 1.0 / (2.0 * f.op_norm),
                    b: 2.0,
                };
                (f.root, f.trace / pf, stats_of(f.trace_sq, f.op_norm, p), Some(c))
            }
            NoiseModel::SphereUniform {} => (
                Factor::Identity,
                1.0,
                stats_of(pf, 1.0, p),
                Some(Concentration {
                    prefactor: 2.0,
                    c0: 0.25,
                    b: 2.0,
                }),
            ),
            NoiseModel::ScaledSphere { sigma } => {
                let f = sigma.facts(p)?;
                let c = Concentration {
                    prefactor: 2.0,
                    c0: 1.0 / (4.0 * f.op_norm),
                    b: 2.0,
                };
                (f.root, f.trace / pf, stats_of(f.trace_sq, f.op_norm, p), Some(c))
            }
            NoiseModel::LpBall { b_exponent } => {
                let b = *b_exponent;
                if !(1.0..=2.0).contains(&b) {
                    return Err(Error::param("b_exponent", format!("must lie in [1, 2], got {b}")));
                }
                let nu = lp_ball_nu(p, b);
                (
                    Factor::Identity,
                    nu,
                    stats_of(pf * nu * nu, nu, p),
                    Some(Concentration {
                        prefactor: 2.0,
                        c0: 0.25,
                        b,
                    }),
                )
            }
            NoiseModel::GaussianCopula { correlation } => {
                if !correlation.has_unit_diagonal(p) {
                    return Err(Error::param("correlation", "copula correlation must have unit diagonal"));
                }
                let f = correlation.facts(p)?;
                let stats = copula_stats(correlation, p)?;
                let c = Concentration {
                    prefactor: 2.0,
                    c0: std::f64::consts::PI / f.op_norm,
                    b: 2.0,
                };
                (f.root, 1.0 / 12.0, stats, Some(c))
            }
            NoiseModel::Zero {} => (Factor::Identity, 0.0, stats_of(0.0, 0.0, p), None),
        };
        Ok(NoiseSampler {
            model: self.clone(),
            p,
            root,
            nu,
            stats,
            concentration,
        })
    }

    pub fn sample(&self, n: usize, p: usize, seed: u64) -> Result<PointCloud> {
        Ok(self.prepare(p)?.sample(n, seed))
    }
}

fn stats_of(trace_sq: f64, op_norm: f64, p: usize) -> SigmaStats {
    let pf = p as f64;
    SigmaStats {
        trace_sq_over_p2: trace_sq / (pf * pf),
        op_norm,
    }
}

/// `E||Z||^2 / p` for `Z = p^{1/b} v`, `v` uniform in the unit `l^b` ball of `R^p`.
fn lp_ball_nu(p: usize, b: f64) -> f64 {
    let pf = p as f64;
    let ln_ev1sq = ln_gamma(3.0 / b) - ln_gamma(1.0 / b) + ln_gamma(pf / b + 1.0)
        - ln_gamma((pf + 2.0) / b + 1.0);
    (2.0 / b * pf.ln() + ln_ev1sq).exp()
}

/// Covariance of the centered copula: `arcsin(rho/2) / (2 pi)` entrywise.
fn copula_stats(correlation: &Covariance, p: usize) -> Result<SigmaStats> {
    let tr = |rho: f64| (rho / 2.0).asin() / (2.0 * std::f64::consts::PI);
    match correlation {
        Covariance::Identity {} | Covariance::Diagonal { .. } => {
            let v = 1.0 / 12.0;
            Ok(stats_of(p as f64 * v * v, v, p))
        }
        _ => {
            let c = correlation.dense(p)?.map(tr);
            let op = c
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            Ok(stats_of(c.iter().map(|v| v * v).sum(), op, p))
        }
    }
}

impl NoiseSampler {
    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    /// `E||Z||^2 / p`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma_stats(&self) -> SigmaStats {
        self.stats
    }

    /// `None` for the degenerate zero model.
    pub fn concentration(&self) -> Option<Concentration> {
        self.concentration
    }

    pub fn sample(&self, n: usize, seed: u64) -> PointCloud {
        let p = self.p;
        let mut out = PointCloud::zeros(n, p);
        if p == 0 {
            return out;
        }
        out.flat_mut()
            .par_chunks_mut(p)
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = row_rng(seed, i);
                self.fill_row(&mut rng, row);
            });
        out
    }

    fn fill_row<R: Rng>(&self, rng: &mut R, row: &mut [f64]) {
        let p = self.p;
        let pf = p as f64;
        match &self.model {
            NoiseModel::GaussianLike { entry_law, .. } => {
                let u: Vec<f64> = (0..p).map(|_| entry_law.draw(rng)).collect();
                self.root.apply(&u, row);
            }
            NoiseModel::SphereUniform {} => fill_sphere(rng, row, pf.sqrt()),
            NoiseModel::ScaledSphere { .. } => {
                let mut v = vec![0.0; p];
                fill_sphere(rng, &mut v, pf.sqrt());
                self.root.apply(&v, row);
            }
            NoiseModel::LpBall { b_exponent } => {
                let b = *b_exponent;
                let gamma = Gamma::new(1.0 / b, 1.0).expect("b in [1, 2]");
                let mut total: f64 = Exp1.sample(rng);
                for x in row.iter_mut() {
                    let g: f64 = gamma.sample(rng);
                    total += g;
                    let mag = g.powf(1.0 / b);
                    *x = if rng.random::<bool>() { mag } else { -mag };
                }
                let scale = pf.powf(1.0 / b) / total.powf(1.0 / b);
                for x in row.iter_mut() {
                    *x *= scale;
                }
            }
            NoiseModel::GaussianCopula { .. } => {
                let g: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                self.root.apply(&g, row);
                for x in row.iter_mut() {
                    // Phi(x) - 1/2
                    *x = 0.5 * erf(*x / std::f64::consts::SQRT_2);
                }
            }
            NoiseModel::Zero {} => row.fill(0.0),
        }
    }
}

fn fill_sphere<R: Rng>(rng: &mut R, row: &mut [f64], radius: f64) {
    loop {
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            let s = radius / norm;
            for x in row.iter_mut() {
                *x *= s;
            }
            return;
        }
    }
}

/// Law of the radii `R_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusModel {
    ConstantOne {},
    UniformInterval {
        low: f64,
        high: f64,
        #[serde(default)]
        normalize_second_moment: bool,
    },
    /// `high` with probability `weight_high`, else `low`.
    TwoPoint {
        low: f64,
        high: f64,
        #[serde(default = "half")]
        weight_high: f64,
        #[serde(default)]
        normalize_second_moment: bool,
    },
}

fn half() -> f64 {
    0.5
}

impl RadiusModel {
    pub fn two_point(low: f64, high: f64) -> Self {
        RadiusModel::TwoPoint {
            low,
            high,
            weight_high: 0.5,
            normalize_second_moment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RadiusModel::ConstantOne {} => Ok(()),
            RadiusModel::UniformInterval { low, high, .. } => check_bounds(*low, *high),
            RadiusModel::TwoPoint {
                low,
                high,
                weight_high,
                ..
            } => {
                check_bounds(*low, *high)?;
                if !(0.0..=1.0).contains(weight_high) {
                    return Err(Error::param("weight_high", format!("must lie in [0, 1], got {weight_high}")));
                }
                Ok(())
            }
        }
    }

    /// `E R^2` before normalization.
    fn raw_second_moment(&self) -> f64 {
        match self {
            RadiusModel::ConstantOne {} => 1.0,
            RadiusModel::UniformInterval { low, high, .. } => {
                if high == low {
                    low * low
                } else {
                    (high.powi(3) - low.powi(3)) / (3.0 * (high - low))
                }
            }
            RadiusModel::TwoPoint {
                low,
                high,
                weight_high,
                ..
            } => (1.0 - weight_high) * low * low + weight_high * high * high,
        }
    }

    fn scale(&self) -> f64 {
        match self {
            RadiusModel::UniformInterval {
                normalize_second_moment: true,
                ..
            }
            | RadiusModel::TwoPoint {
                normalize_second_moment: true,
                ..
            } => 1.0 / self.raw_second_moment().sqrt(),
            _ => 1.0,
        }
    }

    /// `E R^2` of the samples actually produced.
    pub fn second_moment(&self) -> f64 {
        self.raw_second_moment() * self.scale().powi(2)
    }

    /// Lower bound `r_inf` of the support.
    pub fn r_inf(&self) -> f64 {
        match self {
            RadiusModel::ConstantOne {} => 1.0,
            RadiusModel::UniformInterval { low, .. } | RadiusModel::TwoPoint { low, .. } => low * self.scale(),
        }
    }

    /// Upper bound `R_inf` of the support.
    pub fn r_sup(&self) -> f64 {
        match self {
            RadiusModel::ConstantOne {} => 1.0,
            RadiusModel::UniformInterval { high, .. } | RadiusModel::TwoPoint { high, .. } => high * self.scale(),
        }
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self, RadiusModel::ConstantOne {})
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let scale = self.scale();
        let out = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = row_rng(seed, i);
                match self {
                    RadiusModel::ConstantOne {} => 1.0,
                    RadiusModel::UniformInterval { low, high, .. } => {
                        let u: f64 = rng.random();
                        (low + (high - low) * u).clamp(*low, *high) * scale
                    }
                    RadiusModel::TwoPoint {
                        low,
                        high,
                        weight_high,
                        ..
                    } => {
                        let u: f64 = rng.random();
                        if u < *weight_high {
                            high * scale
                        } else {
                            low * scale
                        }
                    }
                }
            })
            .collect();
        Ok(out)
    }
}

fn check_bounds(low: f64, high: f64) -> Result<()> {
    if !(low.is_finite() && high.is_finite()) {
        return Err(Error::param("radius bounds", "must be finite"));
    }
    if low <= 0.0 {
        return Err(Error::param("low", format!("lower radius bound must be positive, got {low}")));
    }
    if low > high {
        return Err(Error::param("low", format!("r_inf {low} exceeds r_sup {high}")));
    }
    Ok(())
}

/// Law of the signal points `Y_i` embedded in `R^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalModel {
    /// Rows of `points` repeated cyclically and zero-padded to `p` coordinates.
    FixedCloud { points: Vec<Vec<f64>> },
    /// Uniform on the circle of radius `scale` in the first two coordinates.
    CircleEmbed {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Uniform on the `d`-sphere of radius `scale` in the first `d + 1` coordinates.
    SphereEmbed {
        intrinsic_dim: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale * N(0, I_d)` in the first `d` coordinates.
    GaussianLowrank {
        intrinsic_dim: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SignalModel {
    /// Ambient coordinates actually used by the model.
    pub fn min_dimension(&self) -> usize {
        match self {
            SignalModel::FixedCloud { points } => points.first().map_or(0, Vec::len),
            SignalModel::CircleEmbed { .. } => 2,
            SignalModel::SphereEmbed { intrinsic_dim, .. } => intrinsic_dim + 1,
            SignalModel::GaussianLowrank { intrinsic_dim, .. } => *intrinsic_dim,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            SignalModel::FixedCloud { points } => {
                let width = points
                    .first()
                    .ok_or_else(|| Error::param("points", "fixed cloud needs at least one point"))?
                    .len();
                for row in points {
                    if row.len() != width {
                        return Err(Error::DimensionMismatch {
                            context: "fixed cloud row",
                            expected: width,
                            found: row.len(),
                        });
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::param("points", "non-finite coordinate"));
                    }
                }
            }
            SignalModel::CircleEmbed { scale }
            | SignalModel::SphereEmbed { scale, .. }
            | SignalModel::GaussianLowrank { scale, .. } => {
                if !scale.is_finite() {
                    return Err(Error::param("scale", "must be finite"));
                }
            }
        }
        if let SignalModel::SphereEmbed { intrinsic_dim: 0, .. } | SignalModel::GaussianLowrank { intrinsic_dim: 0, .. } =
            self
        {
            return Err(Error::param("intrinsic_dim", "must be positive"));
        }
        if self.min_dimension() > p {
            return Err(Error::DimensionMismatch {
                context: "signal ambient dimension",
                expected: p,
                found: self.min_dimension(),
            });
        }
        Ok(())
    }

    /// `a` in `E||Y_i - a||^2 < C1`, truncated to the model's coordinates.
    pub fn center(&self) -> Vec<f64> {
        match self {
            SignalModel::FixedCloud { points } => {
                let k = points.len() as f64;
                let mut c = vec![0.0; self.min_dimension()];
                for row in points {
                    for (ci, v) in c.iter_mut().zip(row) {
                        *ci += v / k;
                    }
                }
                c
            }
            _ => vec![0.0; self.min_dimension()],
        }
    }

    /// `sup_i E||Y_i - a||^2` (the `C1` of the Gaussian-like bound).
    pub fn second_moment_bound(&self) -> f64 {
        match self {
            SignalModel::FixedCloud { points } => {
                let c = self.center();
                points
                    .iter()
                    .map(|r| crate::points::sq_dist(r, &c))
                    .fold(0.0, f64::max)
            }
            SignalModel::CircleEmbed { scale } | SignalModel::SphereEmbed { scale, .. } => scale * scale,
            SignalModel::GaussianLowrank { intrinsic_dim, scale } => *intrinsic_dim as f64 * scale * scale,
        }
    }

    /// Sure bound on `max_{i != j} ||Y_i - Y_j||^2`, when the support is bounded.
    pub fn diameter_bound(&self) -> Option<f64> {
        match self {
            SignalModel::FixedCloud { points } => Some(max_pairwise_sq_dist(points)),
            SignalModel::CircleEmbed { scale } | SignalModel::SphereEmbed { scale, .. } => {
                Some(4.0 * scale * scale)
            }
            SignalModel::GaussianLowrank { .. } => None,
        }
    }

    /// Sure bound on `max_{i,j} |Y_i' Y_j|`, when the support is bounded.
    pub fn inner_product_bound(&self) -> Option<f64> {
        match self {
            SignalModel::FixedCloud { points } => Some(
                points
                    .iter()
                    .flat_map(|a| points.iter().map(move |b| dot(a, b).abs()))
                    .fold(0.0, f64::max),
            ),
            SignalModel::CircleEmbed { scale } | SignalModel::SphereEmbed { scale, .. } => Some(scale * scale),
            SignalModel::GaussianLowrank { .. } => None,
        }
    }

    pub fn sample(&self, n: usize, p: usize, seed: u64) -> Result<PointCloud> {
        self.validate(p)?;
        let mut out = PointCloud::zeros(n, p);
        out.flat_mut()
            .par_chunks_mut(p)
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = row_rng(seed, i);
                match self {
                    SignalModel::FixedCloud { points } => {
                        let src = &points[i % points.len()];
                        row[..src.len()].copy_from_slice(src);
                    }
                    SignalModel::CircleEmbed { scale } => {
                        let theta = rng.random::<f64>() * std::f64::consts::TAU;
                        row[0] = scale * theta.cos();
                        row[1] = scale * theta.sin();
                    }
                    SignalModel::SphereEmbed { intrinsic_dim, scale } => {
                        fill_sphere(&mut rng, &mut row[..intrinsic_dim + 1], *scale);
                    }
                    SignalModel::GaussianLowrank { intrinsic_dim, scale } => {
                        for x in row[..*intrinsic_dim].iter_mut() {
                            let g: f64 = rng.sample(StandardNormal);
                            *x = scale * g;
                        }
                    }
                }
            });
        Ok(out)
    }
}

/// The three model specifications behind a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataModel {
    pub signal: SignalModel,
    pub noise: NoiseModel,
    pub radii: RadiusModel,
}

/// Draws `Y`, `Z` and `R` from independent sub-seeds of `seed` and forms `X`.
pub fn assemble_dataset(
    signal: &SignalModel,
    noise: &NoiseModel,
    radii: &RadiusModel,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<DataSet> {
    let sampler = noise.prepare(p)?;
    assemble_with(signal, &sampler, radii, n, seed)
}

/// As [`assemble_dataset`], reusing a prepared noise sampler.
pub fn assemble_with(
    signal: &SignalModel,
    noise: &NoiseSampler,
    radii: &RadiusModel,
    n: usize,
    seed: u64,
) -> Result<DataSet> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be positive"));
    }
    let p = noise.dimension();
    let y = signal.sample(n, p, derive_seed(seed, &[purpose::SIGNAL]))?;
    let z = noise.sample(n, derive_seed(seed, &[purpose::NOISE]));
    let r = radii.sample(n, derive_seed(seed, &[purpose::RADII]))?;
    DataSet::new(y, z, r, noise.nu(), Some(noise.sigma_stats()))
}
