//! Closed-form moment identities, the Frobenius-gap bracket, the
//! interpoint-distance decomposition and the concentration rates, plus the
//! Monte-Carlo estimators used to check them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::linalg::{eigh, hadamard_trace, SymMatrix};
use crate::points::{dot, sq_dist};
use crate::randsrc::{EntryLaw, SigmaStats};
use crate::rng::row_rng;

/// Moments of i.i.d. entries `gamma_k` and the matrix of the quadratic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    pub sigma2: f64,
    pub kappa4: f64,
    pub matrix: SymMatrix,
}

impl MomentParams {
    pub fn new(sigma2: f64, kappa4: f64, matrix: SymMatrix) -> Result<Self> {
        let p = Self { sigma2, kappa4, matrix };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::param("sigma2", "must be positive"));
        }
        if !(self.kappa4.is_finite() && self.kappa4 >= self.sigma2 * self.sigma2) {
            return Err(Error::param("kappa4", "must be at least sigma2^2"));
        }
        Ok(())
    }
}

/// `E((g'Mg)^2) = s^4 (2 tr(M^2) + tr(M)^2) + (k4 - 3 s^4) tr(M o M)`.
pub fn quadform_second_moment(params: &MomentParams) -> Result<f64> {
    params.validate()?;
    let m = &params.matrix;
    let s4 = params.sigma2 * params.sigma2;
    let tr = m.trace();
    let tr_sq = m.as_dmatrix().iter().map(|v| v * v).sum::<f64>();
    let had = hadamard_trace(m, m)?;
    Ok(s4 * (2.0 * tr_sq + tr * tr) + (params.kappa4 - 3.0 * s4) * had)
}

fn require_psd(sigma: &SymMatrix) -> Result<()> {
    let s = eigh(sigma)?;
    let top = s.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = s.eigenvalues.last().copied().unwrap_or(0.0);
    if min < -1e-10 * top.max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// `var ||Z_i - Z_j||^2 = 8 tr(S^2) + 2 (mu4 - 3) tr(S o S)` for
/// `Z = S^{1/2} xi` with i.i.d. standardized entries of fourth moment `mu4`.
pub fn pairdiff_variance(sigma: &SymMatrix, mu4: f64) -> Result<f64> {
    if !(mu4.is_finite() && mu4 >= 1.0) {
        return Err(Error::param("mu4", "must be at least 1"));
    }
    require_psd(sigma)?;
    let tr_sq = sigma.as_dmatrix().iter().map(|v| v * v).sum::<f64>();
    Ok(8.0 * tr_sq + 2.0 * (mu4 - 3.0) * hadamard_trace(sigma, sigma)?)
}

/// The same variance through the quadratic-form moment: the entries of
/// `xi_i - xi_j` have variance 2 and fourth moment `2 mu4 + 6`.
pub fn pairdiff_variance_via_quadform(sigma: &SymMatrix, mu4: f64) -> Result<f64> {
    require_psd(sigma)?;
    let second = quadform_second_moment(&MomentParams::new(2.0, 2.0 * mu4 + 6.0, sigma.clone())?)?;
    let mean = 2.0 * sigma.trace();
    Ok(second - mean * mean)
}

/// `B = C0^2 [tr(S^2)/p^2 + ||S|| C1 / p]`.
pub fn eq1_bracket(c0: f64, c1: f64, stats: SigmaStats, p: usize) -> Result<f64> {
    for (name, v) in [
        ("C0", c0),
        ("C1", c1),
        ("trace_sq_over_p2", stats.trace_sq_over_p2),
        ("op_norm", stats.op_norm),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
        }
    }
    if p == 0 {
        return Err(Error::param("p", "must be positive"));
    }
    Ok(c0 * c0 * (stats.trace_sq_over_p2 + stats.op_norm * c1 / p as f64))
}

/// `alpha = (R_i Z_i - R_j Z_j)'(Y_i - Y_j)/sqrt(p)`,
/// `beta = ||R_i Z_i - R_j Z_j||^2/p - nu (R_i^2 + R_j^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub alpha: f64,
    pub beta: f64,
    /// `||X_i - X_j||^2 - [||Y_i - Y_j||^2 + nu (R_i^2 + R_j^2)]`.
    pub total_dev: f64,
}

pub fn interpoint_decomposition(ds: &DataSet, i: usize, j: usize) -> Result<Decomposition> {
    let n = ds.n();
    if i >= n || j >= n {
        return Err(Error::Index(format!("pair ({i}, {j}) outside 0..{n}")));
    }
    if i == j {
        return Err(Error::Index(format!("pair ({i}, {j}) must have distinct indices")));
    }
    let sqrt_p = (ds.p() as f64).sqrt();
    let (ri, rj) = (ds.r()[i], ds.r()[j]);
    let (zi, zj) = (ds.z().row(i), ds.z().row(j));
    let (yi, yj) = (ds.y().row(i), ds.y().row(j));
    let mut alpha = 0.0;
    let mut noise_sq = 0.0;
    for k in 0..ds.p() {
        let w = ri * zi[k] - rj * zj[k];
        alpha += w * (yi[k] - yj[k]);
        noise_sq += w * w;
    }
    alpha /= sqrt_p;
    let centre = ds.nu() * (ri * ri + rj * rj);
    let beta = noise_sq / ds.p() as f64 - centre;
    let total_dev = sq_dist(ds.x().row(i), ds.x().row(j)) - (sq_dist(yi, yj) + centre);
    let gap = (total_dev - (2.0 * alpha + beta)).abs();
    if gap > 1e-10 * total_dev.abs().max(1.0) {
        return Err(Error::IdentityViolation(format!(
            "total_dev {total_dev} differs from 2 alpha + beta by {gap:e} at ({i}, {j})"
        )));
    }
    Ok(Decomposition { alpha, beta, total_dev })
}

/// Hypotheses of the interpoint concentration result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    pub b: f64,
    pub c0: f64,
    #[serde(rename = "C")]
    pub cc: f64,
    pub eps: f64,
    /// Real so that `log n` can be set exactly; must exceed 1.
    pub n: f64,
    pub p: usize,
    pub m_p: f64,
    pub r_inf: f64,
    pub r_sup: f64,
    pub nu: f64,
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b <= 2.0) {
            return Err(Error::param("b", format!("must lie in (0, 2], got {}", self.b)));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::param("c0", "must be positive"));
        }
        if !(self.cc.is_finite() && self.cc > 0.0) {
            return Err(Error::param("C", "must be positive"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        if !(self.n.is_finite() && self.n > 1.0) {
            return Err(Error::param("n", "must exceed 1"));
        }
        if self.p == 0 {
            return Err(Error::param("p", "must be positive"));
        }
        if !(self.m_p.is_finite() && self.m_p >= 0.0) {
            return Err(Error::param("M_p", "must be nonnegative"));
        }
        if !(self.r_sup.is_finite() && self.r_sup >= 1.0) {
            return Err(Error::param("R_sup", "must be at least 1"));
        }
        if !(self.r_inf >= 0.0 && self.r_inf <= self.r_sup) {
            return Err(Error::param("R_inf", "must lie in [0, R_sup]"));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::param("nu", "must be nonnegative"));
        }
        Ok(())
    }

    /// `(log n + (log n)^eps)^{1/b}`.
    pub fn log_factor(&self) -> f64 {
        let l = self.n.ln();
        (l + l.powf(self.eps)).powf(1.0 / self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r0: f64,
    pub r1: f64,
    pub u_p: f64,
    pub kappa_b: f64,
}

pub fn rate_quantities(rp: &RateParams) -> Result<Rates> {
    rp.validate()?;
    let log_f = rp.log_factor();
    let conc = (2.0 / rp.c0).powf(1.0 / rp.b);
    let sqrt_p = (rp.p as f64).sqrt();
    let big_r = rp.r_sup;
    let r0 = big_r * rp.m_p.sqrt() / sqrt_p * log_f * conc;
    let r1 = 2.0 * big_r * conc * log_f / sqrt_p;
    let u_p = rp.m_p.sqrt().max(big_r) * big_r * log_f / sqrt_p;
    let kappa_b = 32.0 * rp.cc / (rp.b * rp.c0.powf(2.0 / rp.b)) * statrs::function::gamma::gamma(2.0 / rp.b);
    Ok(Rates { r0, r1, u_p, kappa_b })
}

/// Worst deviations of the observed pairwise statistics from their signal
/// counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpointDeviation {
    /// `max_{i != j} | ||X_i - X_j||^2 - [||Y_i - Y_j||^2 + nu (R_i^2 + R_j^2)] |`.
    pub distance: f64,
    /// `max_{i, j} | X_i'X_j - (Y_i'Y_j + d_ij nu R_i^2) |`.
    pub dot_product: f64,
}

pub fn max_interpoint_dev(ds: &DataSet) -> InterpointDeviation {
    let n = ds.n();
    let nu = ds.nu();
    let r = ds.r();
    let (x, y) = (ds.x(), ds.y());
    let (distance, dot_product) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d = 0.0_f64;
            let mut g = 0.0_f64;
            for j in i..n {
                let centre_dot = dot(y.row(i), y.row(j)) + if i == j { nu * r[i] * r[i] } else { 0.0 };
                g = g.max((dot(x.row(i), x.row(j)) - centre_dot).abs());
                if j != i {
                    let centre = sq_dist(y.row(i), y.row(j)) + nu * (r[i] * r[i] + r[j] * r[j]);
                    d = d.max((sq_dist(x.row(i), x.row(j)) - centre).abs());
                }
            }
            (d, g)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    InterpointDeviation { distance, dot_product }
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl Estimate {
    /// `|value - target| / std_error`; infinite when the error is zero and
    /// the values differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn agrees(&self, target: f64, tolerance_se: f64) -> bool {
        self.z_score(target) <= tolerance_se
    }
}

const CHUNK: usize = 8192;

/// Per-draw statistic over `draws` samples in fixed chunks, each chunk on its
/// own stream; returns the sums of `t`, `t^2`, `t^3`, `t^4`.
fn chunked_moments(draws: usize, seed: u64, t: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync) -> [f64; 4] {
    let chunks = draws.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = row_rng(seed, c);
            let count = CHUNK.min(draws - c * CHUNK);
            let mut acc = [0.0; 4];
            for _ in 0..count {
                let v = t(&mut rng);
                let v2 = v * v;
                acc[0] += v;
                acc[1] += v2;
                acc[2] += v2 * v;
                acc[3] += v2 * v2;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold([0.0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
}

fn quad(m: &SymMatrix, g: &[f64]) -> f64 {
    let n = m.order();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m.get(i, j) * g[j];
        }
        s += g[i] * row;
    }
    s
}

/// Estimates `E((g'Mg)^2)` with i.i.d. entries from `law`.
pub fn quadform_monte_carlo(m: &SymMatrix, law: EntryLaw, draws: usize, seed: u64) -> Result<Estimate> {
    if draws < 2 {
        return Err(Error::param("draws", "need at least two draws"));
    }
    let n = m.order();
    let s = chunked_moments(draws, seed, |rng| {
        let g: Vec<f64> = (0..n).map(|_| law.draw(rng)).collect();
        let q = quad(m, &g);
        q * q
    });
    let d = draws as f64;
    let mean = s[0] / d;
    let var = (s[1] / d - mean * mean).max(0.0) * d / (d - 1.0);
    Ok(Estimate {
        value: mean,
        std_error: (var / d).sqrt(),
        draws,
    })
}

/// Estimates `var ||Z_i - Z_j||^2` for `Z = S^{1/2} xi`, entries of `xi`
/// from `law`. The standard error uses the sample fourth central moment.
pub fn pairdiff_monte_carlo(sigma: &SymMatrix, law: EntryLaw, draws: usize, seed: u64) -> Result<Estimate> {
    if draws < 2 {
        return Err(Error::param("draws", "need at least two draws"));
    }
    require_psd(sigma)?;
    let n = sigma.order();
    let s = chunked_moments(draws, seed, |rng| {
        let g: Vec<f64> = (0..n).map(|_| law.draw(rng) - law.draw(rng)).collect();
        quad(sigma, &g)
    });
    let d = draws as f64;
    let m1 = s[0] / d;
    let (e2, e3, e4) = (s[1] / d, s[2] / d, s[3] / d);
    let var = (e2 - m1 * m1).max(0.0);
    let central4 = e4 - 4.0 * m1 * e3 + 6.0 * m1 * m1 * e2 - 3.0 * m1.powi(4);
    Ok(Estimate {
        value: var * d / (d - 1.0),
        std_error: ((central4 - var * var).max(0.0) / d).sqrt(),
        draws,
    })
}

/// A random PSD matrix `A A' / order` with standard normal `A`.
pub fn random_psd(order: usize, seed: u64) -> Result<SymMatrix> {
    if order == 0 {
        return Err(Error::Empty);
    }
    let mut rng = row_rng(seed, 0);
    let a: Vec<f64> = (0..order * order)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    SymMatrix::from_upper_fn(order, |i, j| {
        (0..order).map(|k| a[i * order + k] * a[j * order + k]).sum::<f64>() / order as f64
    })
}
