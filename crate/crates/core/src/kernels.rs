//! Observed kernel matrices `M_f`, their pure-signal approximants `M~_f`, and
//! the Laplacian variants built from them.
//!
//! Entries are normalized by `1/n`. For the Euclidean-distance family the
//! statistic fed to `f` is `||X_i - X_j||^2`; for the dot-product family it is
//! `X_i' X_j`.
//!
//! | approximant | off-diagonal | diagonal |
//! |---|---|---|
//! | spherical | `f(||Y_i - Y_j||^2 + 2 nu)` | `f(0)` |
//! | elliptical | `f(||Y_i - Y_j||^2 + nu (R_i^2 + R_j^2))` | `f(0)` |
//! | dot product | `f(Y_i' Y_j)` | `f(||Y_i||^2 + nu R_i^2)` |

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::points::{dot, sq_dist, PointCloud};

/// Which pairwise statistic the kernel is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    EuclideanDistance,
    DotProduct,
}

/// Scalar kernel functions `f: R -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFn {
    /// `exp(-s x)`; on squared distances this is the Gaussian kernel.
    Gaussian { s: f64 },
    /// `exp(s x)`.
    Exponential { s: f64 },
    /// `a x + b`.
    Affine { a: f64, b: f64 },
    /// Piecewise-linear interpolation of `(grid, values)`, constant beyond the
    /// end points. `grid` must be strictly increasing.
    Table { grid: Vec<f64>, values: Vec<f64> },
    /// `base(x + offset)`.
    Shifted { base: Box<KernelFn>, offset: f64 },
}

impl KernelFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            KernelFn::Gaussian { s } => (-s * x).exp(),
            KernelFn::Exponential { s } => (s * x).exp(),
            KernelFn::Affine { a, b } => a * x + b,
            KernelFn::Table { grid, values } => interpolate(grid, values, x),
            KernelFn::Shifted { base, offset } => base.eval(x + offset),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            KernelFn::Gaussian { s } | KernelFn::Exponential { s } => {
                if !s.is_finite() {
                    return Err(Error::param("s", "kernel scale must be finite"));
                }
            }
            KernelFn::Affine { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::param("affine", "coefficients must be finite"));
                }
            }
            KernelFn::Table { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(Error::param(
                        "table",
                        "needs at least two nodes and as many values as grid points",
                    ));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("table", "grid must be strictly increasing"));
                }
                if grid.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::param("table", "non-finite node"));
                }
            }
            KernelFn::Shifted { base, offset } => {
                if !offset.is_finite() {
                    return Err(Error::param("offset", "must be finite"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Sup of `|f'|` on `[lo, hi]`, when it is finite.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> Option<f64> {
        match self {
            KernelFn::Gaussian { s } => {
                if *s >= 0.0 {
                    let v = s * (-s * lo).exp();
                    v.is_finite().then_some(v)
                } else {
                    let v = -s * (-s * hi).exp();
                    v.is_finite().then_some(v)
                }
            }
            KernelFn::Exponential { s } => KernelFn::Gaussian { s: -s }.lipschitz_on(lo, hi),
            KernelFn::Affine { a, .. } => Some(a.abs()),
            KernelFn::Table { grid, values } => Some(
                grid.windows(2)
                    .zip(values.windows(2))
                    .filter(|(g, _)| g[1] >= lo && g[0] <= hi)
                    .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
                    .fold(0.0, f64::max),
            ),
            KernelFn::Shifted { base, offset } => base.lipschitz_on(lo + offset, hi + offset),
        }
    }
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[last] {
        return values[last];
    }
    let k = grid.partition_point(|g| *g <= x) - 1;
    let t = (x - grid[k]) / (grid[k + 1] - grid[k]);
    values[k] + t * (values[k + 1] - values[k])
}

/// Interval used when a kernel has no declared domain.
pub const DEFAULT_VALIDATION_INTERVAL: (f64, f64) = (0.0, 10.0);

/// A kernel, the statistic it acts on, and its declared Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub func: KernelFn,
    /// Declared bound on `|f'|` over `domain_interval`. Filled from the
    /// function's closed form when omitted.
    #[serde(default)]
    pub lipschitz_const: Option<f64>,
    /// `I_p(eta)` or `J_p(eta)`; arguments outside it are counted.
    #[serde(default)]
    pub domain_interval: Option<(f64, f64)>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, func: KernelFn) -> Self {
        let mut k = Self {
            family,
            func,
            lipschitz_const: None,
            domain_interval: None,
        };
        k.lipschitz_const = k.natural_lipschitz();
        k
    }

    /// Gaussian kernel `exp(-s ||x - y||^2)`.
    pub fn gaussian(s: f64) -> Self {
        Self::new(KernelFamily::EuclideanDistance, KernelFn::Gaussian { s })
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain_interval = Some((lo, hi));
        if self.lipschitz_const.is_none() {
            self.lipschitz_const = self.natural_lipschitz();
        }
        self
    }

    fn interval(&self) -> (f64, f64) {
        self.domain_interval.unwrap_or(DEFAULT_VALIDATION_INTERVAL)
    }

    fn natural_lipschitz(&self) -> Option<f64> {
        let (lo, hi) = self.interval();
        self.func.lipschitz_on(lo, hi)
    }

    /// Declared Lipschitz constant, falling back to the closed form.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz_const.or_else(|| self.natural_lipschitz())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.func.eval(x)
    }

    pub fn in_domain(&self, x: f64) -> bool {
        self.domain_interval.is_none_or(|(lo, hi)| x >= lo && x <= hi)
    }

    /// Checks finiteness on the domain and that the declared Lipschitz
    /// constant is at least the largest finite-difference slope over a
    /// `10^4`-point grid, with 5% slack.
    pub fn validate(&self) -> Result<()> {
        self.func.validate()?;
        let (lo, hi) = self.interval();
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("domain_interval", format!("invalid interval [{lo}, {hi}]")));
        }
        let declared = self
            .lipschitz()
            .ok_or_else(|| Error::param("lipschitz_const", "no finite Lipschitz bound on the domain"))?;
        if !(declared.is_finite() && declared >= 0.0) {
            return Err(Error::param("lipschitz_const", "must be finite and nonnegative"));
        }
        let observed = self.max_grid_slope(10_000)?;
        if observed > 1.05 * declared + 1e-300 {
            return Err(Error::param(
                "lipschitz_const",
                format!("declared {declared} but observed slope {observed} on [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    /// Largest `|f(x_{k+1}) - f(x_k)| / h` over an even grid of the domain.
    pub fn max_grid_slope(&self, points: usize) -> Result<f64> {
        let (lo, hi) = self.interval();
        if hi == lo {
            return Ok(0.0);
        }
        let h = (hi - lo) / (points - 1) as f64;
        let mut prev = self.eval(lo);
        let mut best = 0.0_f64;
        for k in 1..points {
            let x = lo + h * k as f64;
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(Error::param("func", format!("non-finite value at {x}")));
            }
            best = best.max((v - prev).abs() / h);
            prev = v;
        }
        Ok(best)
    }
}

/// `x -> f(x + 2 nu)`; the domain moves by `-2 nu`, the Lipschitz constant is kept.
pub fn shift_kernel(k: &KernelSpec, nu: f64) -> KernelSpec {
    if nu == 0.0 {
        return k.clone();
    }
    let offset = 2.0 * nu;
    KernelSpec {
        family: k.family,
        func: KernelFn::Shifted {
            base: Box::new(k.func.clone()),
            offset,
        },
        lipschitz_const: k.lipschitz(),
        domain_interval: k.domain_interval.map(|(lo, hi)| (lo - offset, hi - offset)),
    }
}

/// `I_p(eta) = [W_p + 2 nu r_inf^2 - eta, M_p + 2 nu R_inf^2 + eta]`.
pub fn distance_interval(w_p: f64, m_p: f64, nu: f64, r_inf: f64, r_sup: f64, eta: f64) -> (f64, f64) {
    (w_p + 2.0 * nu * r_inf * r_inf - eta, m_p + 2.0 * nu * r_sup * r_sup + eta)
}

/// `J_p(eta) = [-M_p - eta - R_inf^2 nu, M_p + eta + R_inf^2 nu]`.
pub fn dot_interval(m_p: f64, nu: f64, r_sup: f64, eta: f64) -> (f64, f64) {
    let half = m_p + eta + r_sup * r_sup * nu;
    (-half, half)
}

/// Default interval padding.
pub const DEFAULT_ETA: f64 = 1.0;

/// A kernel matrix and the number of arguments that fell outside the
/// kernel's declared domain.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub matrix: SymMatrix,
    pub out_of_domain: usize,
}

/// Diagonal of the distance-family approximants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalConvention {
    /// `f(0)/n`.
    #[default]
    AtZero,
    /// `f(2 nu R_i^2)/n`, i.e. the shifted kernel at zero.
    Shifted,
}

/// Fills the upper triangle in parallel by rows; deterministic.
fn upper_parallel(n: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> SymMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| entry(i, j)).collect())
        .collect();
    SymMatrix::from_upper_rows(rows).expect("n >= 1")
}

fn pairwise_kernel(cloud: &PointCloud, k: &KernelSpec) -> KernelMatrix {
    let n = cloud.n();
    let scale = 1.0 / n as f64;
    let outside = std::sync::atomic::AtomicUsize::new(0);
    let matrix = upper_parallel(n, |i, j| {
        let stat = match k.family {
            KernelFamily::EuclideanDistance => {
                if i == j {
                    return k.eval(0.0) * scale;
                }
                sq_dist(cloud.row(i), cloud.row(j))
            }
            KernelFamily::DotProduct => dot(cloud.row(i), cloud.row(j)),
        };
        if !k.in_domain(stat) {
            outside.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        k.eval(stat) * scale
    });
    KernelMatrix {
        matrix,
        out_of_domain: outside.into_inner(),
    }
}

/// `M_f(i,j) = f(stat(X_i, X_j)) / n`.
///
/// For the distance family the diagonal is `f(0)/n` and only the `i < j`
/// arguments are checked against the domain; for the dot-product family all
/// `i <= j` arguments are.
pub fn kernel_matrix(ds: &DataSet, k: &KernelSpec) -> KernelMatrix {
    pairwise_kernel(ds.x(), k)
}

/// Kernel matrix of the signal cloud alone.
pub fn signal_kernel_matrix(ds: &DataSet, k: &KernelSpec) -> SymMatrix {
    pairwise_kernel(ds.y(), k).matrix
}

fn require(k: &KernelSpec, family: KernelFamily) -> Result<()> {
    if k.family != family {
        return Err(Error::WrongFamily {
            expected: match family {
                KernelFamily::EuclideanDistance => "euclidean_distance",
                KernelFamily::DotProduct => "dot_product",
            },
        });
    }
    Ok(())
}

/// Spherical-noise approximant: off-diagonal `f(||Y_i - Y_j||^2 + 2 nu)/n`.
pub fn approx_matrix_spherical(ds: &DataSet, k: &KernelSpec) -> Result<SymMatrix> {
    approx_matrix_spherical_with(ds, k, DiagonalConvention::AtZero)
}

pub fn approx_matrix_spherical_with(ds: &DataSet, k: &KernelSpec, diag: DiagonalConvention) -> Result<SymMatrix> {
    require(k, KernelFamily::EuclideanDistance)?;
    let n = ds.n();
    let scale = 1.0 / n as f64;
    let shift = ds.nu() * 2.0;
    let y = ds.y();
    Ok(upper_parallel(n, |i, j| {
        if i == j {
            match diag {
                DiagonalConvention::AtZero => k.eval(0.0) * scale,
                DiagonalConvention::Shifted => k.eval(shift) * scale,
            }
        } else {
            k.eval(sq_dist(y.row(i), y.row(j)) + shift) * scale
        }
    }))
}

/// Elliptical-noise approximant: off-diagonal
/// `f(||Y_i - Y_j||^2 + nu (R_i^2 + R_j^2))/n`. With all `R_i = 1` it is
/// bitwise equal to [`approx_matrix_spherical`].
pub fn approx_matrix_elliptical(ds: &DataSet, k: &KernelSpec) -> Result<SymMatrix> {
    approx_matrix_elliptical_with(ds, k, DiagonalConvention::AtZero)
}

pub fn approx_matrix_elliptical_with(ds: &DataSet, k: &KernelSpec, diag: DiagonalConvention) -> Result<SymMatrix> {
    require(k, KernelFamily::EuclideanDistance)?;
    let n = ds.n();
    let scale = 1.0 / n as f64;
    let nu = ds.nu();
    let r = ds.r();
    let y = ds.y();
    Ok(upper_parallel(n, |i, j| {
        if i == j {
            match diag {
                DiagonalConvention::AtZero => k.eval(0.0) * scale,
                DiagonalConvention::Shifted => k.eval(nu * (r[i] * r[i] + r[i] * r[i])) * scale,
            }
        } else {
            k.eval(sq_dist(y.row(i), y.row(j)) + nu * (r[i] * r[i] + r[j] * r[j])) * scale
        }
    }))
}

/// Dot-product approximant: off-diagonal `f(Y_i' Y_j)/n`, diagonal
/// `f(||Y_i||^2 + nu R_i^2)/n`.
pub fn approx_matrix_dotproduct(ds: &DataSet, k: &KernelSpec) -> Result<SymMatrix> {
    require(k, KernelFamily::DotProduct)?;
    let n = ds.n();
    let scale = 1.0 / n as f64;
    let nu = ds.nu();
    let r = ds.r();
    let y = ds.y();
    Ok(upper_parallel(n, |i, j| {
        let g = dot(y.row(i), y.row(j));
        if i == j {
            k.eval(g + nu * r[i] * r[i]) * scale
        } else {
            k.eval(g) * scale
        }
    }))
}

/// The approximant matching the kernel family. The elliptical form is used
/// for distance kernels; it coincides with the spherical one when all radii
/// are 1.
pub fn approx_matrix(ds: &DataSet, k: &KernelSpec, diag: DiagonalConvention) -> Result<SymMatrix> {
    match k.family {
        KernelFamily::EuclideanDistance => {
            if ds.first_non_unit_radius().is_none() {
                approx_matrix_spherical_with(ds, k, diag)
            } else {
                approx_matrix_elliptical_with(ds, k, diag)
            }
        }
        KernelFamily::DotProduct => approx_matrix_dotproduct(ds, k),
    }
}

/// `L(i,j) = -M(i,j)` for `i != j`, `L(i,i) = sum_{j != i} M(i,j)`.
pub fn laplacian(m: &SymMatrix) -> SymMatrix {
    let n = m.order();
    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| m.get(i, j)).sum())
        .collect();
    SymMatrix::from_upper_fn(n, |i, j| if i == j { degree[i] } else { -m.get(i, j) }).expect("n >= 1")
}

/// `D^{-1/2} L D^{-1/2}` with `D` the diagonal of `L`; unit diagonal.
pub fn normalized_laplacian(m: &SymMatrix) -> Result<SymMatrix> {
    let l = laplacian(m);
    let n = l.order();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d = l.get(i, i);
        if !(d > 0.0) {
            return Err(Error::NonPositiveDegree { row: i, value: d });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    SymMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            1.0
        } else {
            l.get(i, j) * inv_sqrt[i] * inv_sqrt[j]
        }
    })
}
