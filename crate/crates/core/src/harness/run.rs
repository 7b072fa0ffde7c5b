use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Check, ExperimentConfig};
use crate::error::{Error, Result};
use crate::kernels::{
    approx_matrix, distance_interval, dot_interval, kernel_matrix, laplacian, normalized_laplacian, KernelFamily,
    KernelFn, KernelSpec,
};
use crate::linalg::{centering_matrix, eigh, frobenius_norm, operator_norm_of, SymMatrix};
use crate::oracle::{eq1_bracket, max_interpoint_dev};
use crate::randsrc::{assemble_with, NoiseSampler};
use crate::rng::trial_seed;
use crate::spectral::{compare_spectra_with, gaussian_rescale_check};

/// One `(grid point, replication)` trial. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub n: usize,
    pub p: usize,
    pub replication: usize,
    pub seed: u64,
    pub frob_gap_sq: f64,
    pub op_gap: f64,
    pub max_interpoint_dev: f64,
    pub max_dotproduct_dev: f64,
    /// Zero when the noise covariance or the kernel's Lipschitz constant is unknown.
    #[serde(rename = "bracket_B")]
    pub bracket_b: f64,
    pub top_angle_k1: f64,
    pub top_angle_k2: f64,
    pub weyl_ok: bool,
    pub out_of_domain_count: usize,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    pub const FIELDS: [&'static str; 14] = [
        "n",
        "p",
        "replication",
        "seed",
        "frob_gap_sq",
        "op_gap",
        "max_interpoint_dev",
        "max_dotproduct_dev",
        "bracket_B",
        "top_angle_k1",
        "top_angle_k2",
        "weyl_ok",
        "out_of_domain_count",
        "wall_time_ms",
    ];

    /// Float fields by name, in column order.
    pub fn float_fields(&self) -> [(&'static str, f64); 8] {
        [
            ("frob_gap_sq", self.frob_gap_sq),
            ("op_gap", self.op_gap),
            ("max_interpoint_dev", self.max_interpoint_dev),
            ("max_dotproduct_dev", self.max_dotproduct_dev),
            ("bracket_B", self.bracket_b),
            ("top_angle_k1", self.top_angle_k1),
            ("top_angle_k2", self.top_angle_k2),
            ("wall_time_ms", self.wall_time_ms),
        ]
    }
}

/// Per-trial results of the optional checks; `None` when not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrialChecks {
    /// Off-diagonal deviation from the rescaled pure-signal matrix.
    pub rescale_dev: Option<f64>,
    pub rescale_alignment: Option<f64>,
    /// `max_i |(L 1)_i|`.
    pub laplacian_row_sum: Option<f64>,
    /// Normalized-Laplacian diagonal is all ones; an error message otherwise.
    pub normalized_unit_diag: Option<std::result::Result<bool, String>>,
    /// `(||H(M - M~)H||, ||M - M~||)`.
    pub centering: Option<(f64, f64)>,
    pub near_degenerate_k1: bool,
    pub near_degenerate_k2: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub checks: TrialChecks,
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let se = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub frob_gap_sq: MeanSe,
    pub op_gap: MeanSe,
    pub max_interpoint_dev: MeanSe,
    pub max_dotproduct_dev: MeanSe,
    pub top_angle_k1: MeanSe,
    pub top_angle_k2: MeanSe,
    #[serde(rename = "bracket_B")]
    pub bracket_b: f64,
    pub out_of_domain_total: usize,
    pub weyl_failures: usize,
    pub near_degenerate_k1: usize,
    pub near_degenerate_k2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    /// Reported, not enforced, or a probabilistic trend off by less than the failure rule.
    Flag,
    Fail,
    /// Nothing to evaluate (for example a single `p` per `n`).
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub name: String,
    pub base_seed: u64,
    pub grid: Vec<GridSummary>,
    pub fit: Option<Fit>,
    /// Why the fit is absent.
    pub fit_note: Option<String>,
    pub checks: Vec<CheckOutcome>,
}

impl AggregateReport {
    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub checks: Vec<TrialChecks>,
    pub aggregate: AggregateReport,
}

/// The kernel used at one grid point; fills in `I_p(eta)` or `J_p(eta)` when
/// the configured kernel declares no domain and the signal is bounded.
fn kernel_for(cfg: &ExperimentConfig, nu: f64) -> KernelSpec {
    let mut k = cfg.kernel.clone();
    if k.lipschitz_const.is_none() {
        k.lipschitz_const = cfg.kernel.lipschitz();
    }
    if k.domain_interval.is_none() {
        let (r_inf, r_sup) = (cfg.radii.r_inf(), cfg.radii.r_sup());
        k.domain_interval = match k.family {
            KernelFamily::EuclideanDistance => cfg
                .signal
                .diameter_bound()
                .map(|m| distance_interval(0.0, m, nu, r_inf, r_sup, cfg.eta)),
            KernelFamily::DotProduct => cfg.signal.inner_product_bound().map(|m| dot_interval(m, nu, r_sup, cfg.eta)),
        };
    }
    k
}

fn gaussian_scale(k: &KernelSpec) -> Option<f64> {
    match (k.family, &k.func) {
        (KernelFamily::EuclideanDistance, KernelFn::Gaussian { s }) => Some(*s),
        _ => None,
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    sampler: &NoiseSampler,
    kernel: &KernelSpec,
    grid_index: usize,
    replication: usize,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let (n, p) = cfg.grid[grid_index];
    let seed = trial_seed(cfg.base_seed, grid_index, replication);
    let ds = assemble_with(&cfg.signal, sampler, &cfg.radii, n, seed)?;
    let km = kernel_matrix(&ds, kernel);
    let mt = approx_matrix(&ds, kernel, cfg.diagonal)?;
    let ks: Vec<usize> = [1, 2].into_iter().filter(|&k| k <= n).collect();
    let report = compare_spectra_with(&km.matrix, &mt, &ks, cfg.separation)?;
    let dev = max_interpoint_dev(&ds);
    let bracket_b = match (kernel.family, ds.sigma_stats(), kernel.lipschitz_const) {
        (KernelFamily::EuclideanDistance, Some(stats), Some(c0)) => {
            eq1_bracket(c0, cfg.signal.second_moment_bound(), stats, p)?
        }
        _ => 0.0,
    };
    let angle = |k: usize| report.angles_for(k).map_or(0.0, |a| a.largest());
    let degenerate = |k: usize| report.angles_for(k).is_some_and(|a| a.near_degenerate);

    let mut checks = TrialChecks {
        near_degenerate_k1: degenerate(1),
        near_degenerate_k2: degenerate(2),
        ..TrialChecks::default()
    };
    if cfg.has(Check::GaussianRescale) {
        let s = gaussian_scale(kernel).ok_or_else(|| Error::config("checks", "gaussian_rescale needs a gaussian kernel"))?;
        let r = gaussian_rescale_check(&ds, s)?;
        checks.rescale_dev = Some(r.max_entry_dev);
        checks.rescale_alignment = Some(r.eigvec_alignment);
    }
    if cfg.has(Check::Laplacian) {
        let l = laplacian(&km.matrix);
        let row_sum = l.mul_vec(&vec![1.0; n])?.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        checks.laplacian_row_sum = Some(row_sum);
        checks.normalized_unit_diag = Some(match normalized_laplacian(&km.matrix) {
            Ok(nl) => Ok(nl.diag().iter().all(|v| *v == 1.0)),
            Err(e) => Err(e.to_string()),
        });
    }
    if cfg.has(Check::Centering) {
        let diff = km.matrix.sub(&mt)?;
        let h = centering_matrix(n)?;
        let centred = h.as_dmatrix() * diff.as_dmatrix() * h.as_dmatrix();
        let centred = SymMatrix::symmetrize(&centred)?;
        checks.centering = Some((operator_norm_of(&eigh(&centred)?), report.op_gap));
    }

    let frob = frobenius_norm(&km.matrix.sub(&mt)?);
    let record = TrialRecord {
        n,
        p,
        replication,
        seed,
        frob_gap_sq: frob * frob,
        op_gap: report.op_gap,
        max_interpoint_dev: dev.distance,
        max_dotproduct_dev: dev.dot_product,
        bracket_b,
        top_angle_k1: angle(1),
        top_angle_k2: angle(2),
        weyl_ok: report.weyl_ok,
        out_of_domain_count: km.out_of_domain,
        wall_time_ms: if cfg.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    };
    Ok(TrialOutcome { record, checks })
}

/// Runs every `(grid point, replication)` trial and aggregates. The output
/// depends only on the configuration, not on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let samplers: Vec<NoiseSampler> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(g, &(n, p))| {
            cfg.noise
                .prepare(p)
                .map_err(|e| e.context(format!("grid point {g} (n = {n}, p = {p})")))
        })
        .collect::<Result<_>>()?;
    let kernels: Vec<KernelSpec> = samplers.iter().map(|s| kernel_for(cfg, s.nu())).collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|g| (0..cfg.replications).map(move |r| (g, r)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(g, r)| {
            run_trial(cfg, &samplers[g], &kernels[g], g, r).map_err(|e| {
                let (n, p) = cfg.grid[g];
                e.context(format!("grid point {g} (n = {n}, p = {p}), replication {r}"))
            })
        })
        .collect::<Result<_>>()?;
    let (records, checks): (Vec<_>, Vec<_>) = outcomes.into_iter().map(|o| (o.record, o.checks)).unzip();
    let aggregate = aggregate(cfg, &records, &checks);
    Ok(ExperimentResult {
        records,
        checks,
        aggregate,
    })
}

/// Groups record indices by `(n, p)` in order of first appearance.
fn groups(records: &[TrialRecord]) -> Vec<((usize, usize), Vec<usize>)> {
    let mut out: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match out.iter_mut().find(|(k, _)| *k == (r.n, r.p)) {
            Some((_, v)) => v.push(i),
            None => out.push(((r.n, r.p), vec![i])),
        }
    }
    out
}

fn summarize(records: &[TrialRecord], checks: &[TrialChecks]) -> Vec<GridSummary> {
    groups(records)
        .into_iter()
        .map(|((n, p), idx)| {
            let col = |f: fn(&TrialRecord) -> f64| MeanSe::of(idx.iter().map(|&i| f(&records[i])));
            GridSummary {
                n,
                p,
                replications: idx.len(),
                frob_gap_sq: col(|r| r.frob_gap_sq),
                op_gap: col(|r| r.op_gap),
                max_interpoint_dev: col(|r| r.max_interpoint_dev),
                max_dotproduct_dev: col(|r| r.max_dotproduct_dev),
                top_angle_k1: col(|r| r.top_angle_k1),
                top_angle_k2: col(|r| r.top_angle_k2),
                bracket_b: col(|r| r.bracket_b).mean,
                out_of_domain_total: idx.iter().map(|&i| records[i].out_of_domain_count).sum(),
                weyl_failures: idx.iter().filter(|&&i| !records[i].weyl_ok).count(),
                near_degenerate_k1: idx.iter().filter(|&&i| checks.get(i).is_some_and(|c| c.near_degenerate_k1)).count(),
                near_degenerate_k2: idx.iter().filter(|&&i| checks.get(i).is_some_and(|c| c.near_degenerate_k2)).count(),
            }
        })
        .collect()
}

/// Least-squares slope through the origin of mean `frob_gap_sq` against
/// `bracket_B` over grid points, with uncentered `r^2`.
pub fn fit_constant(records: &[TrialRecord]) -> Result<Fit> {
    let pts: Vec<(f64, f64)> = groups(records)
        .into_iter()
        .map(|(_, idx)| {
            let k = idx.len() as f64;
            let x = idx.iter().map(|&i| records[i].bracket_b).sum::<f64>() / k;
            let y = idx.iter().map(|&i| records[i].frob_gap_sq).sum::<f64>() / k;
            (x, y)
        })
        .filter(|(x, _)| *x > 0.0)
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 grid points with a positive bracket, found {}",
            pts.len()
        )));
    }
    let first = pts[0].0;
    if pts.iter().all(|(x, _)| *x == first) {
        return Err(Error::DegenerateFit("all brackets are equal".into()));
    }
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let syy: f64 = pts.iter().map(|(_, y)| y * y).sum();
    let c_hat = sxy / sxx;
    let rss: f64 = pts.iter().map(|(x, y)| (y - c_hat * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - rss / syy };
    Ok(Fit {
        c_hat,
        r_squared,
        points: pts.len(),
    })
}

/// Mean non-increasing in `p` for every fixed `n`, up to 2 standard errors.
/// Flags any pair that rises by more than that; fails when every
/// consecutive pair does.
fn trend(check: Check, grid: &[GridSummary], stat: fn(&GridSummary) -> MeanSe) -> CheckOutcome {
    let mut ns: Vec<usize> = grid.iter().map(|g| g.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut pairs = 0;
    let mut beyond = Vec::new();
    for n in ns {
        let mut sweep: Vec<&GridSummary> = grid.iter().filter(|g| g.n == n).collect();
        sweep.sort_by_key(|g| g.p);
        for w in sweep.windows(2) {
            if w[0].p == w[1].p {
                continue;
            }
            pairs += 1;
            let (a, b) = (stat(w[0]), stat(w[1]));
            let rise = b.mean - a.mean;
            let se = (a.se * a.se + b.se * b.se).sqrt();
            if rise > 2.0 * se {
                beyond.push(format!("n = {n}: p {} -> {} rises by {rise:e} (2 SE = {:e})", w[0].p, w[1].p, 2.0 * se));
            }
        }
    }
    let (status, detail) = if pairs == 0 {
        (CheckStatus::Skipped, "no p sweep at fixed n".to_string())
    } else if beyond.is_empty() {
        (CheckStatus::Pass, format!("non-increasing within 2 SE over {pairs} pair(s)"))
    } else if beyond.len() == pairs {
        (CheckStatus::Fail, beyond.join("; "))
    } else {
        (CheckStatus::Flag, beyond.join("; "))
    };
    CheckOutcome { check, status, detail }
}

fn outcome(check: Check, failures: Vec<String>, total: usize) -> CheckOutcome {
    if failures.is_empty() {
        CheckOutcome {
            check,
            status: CheckStatus::Pass,
            detail: format!("{total}/{total} trials"),
        }
    } else {
        let shown: Vec<String> = failures.iter().take(5).cloned().collect();
        CheckOutcome {
            check,
            status: CheckStatus::Fail,
            detail: format!("{} of {total} trials: {}", failures.len(), shown.join("; ")),
        }
    }
}

fn per_trial(
    check: Check,
    records: &[TrialRecord],
    checks: &[TrialChecks],
    failed: impl Fn(&TrialRecord, &TrialChecks) -> Option<String>,
) -> CheckOutcome {
    let failures = records
        .iter()
        .zip(checks)
        .filter_map(|(r, c)| failed(r, c).map(|why| format!("(n = {}, p = {}, rep {}) {why}", r.n, r.p, r.replication)))
        .collect();
    outcome(check, failures, records.len())
}

fn evaluate(check: Check, grid: &[GridSummary], records: &[TrialRecord], checks: &[TrialChecks]) -> CheckOutcome {
    match check {
        Check::FrobeniusGap => trend(check, grid, |g| g.frob_gap_sq),
        Check::OperatorGap => trend(check, grid, |g| g.op_gap),
        Check::Interpoint => trend(check, grid, |g| g.max_interpoint_dev),
        Check::Dotproduct => trend(check, grid, |g| g.max_dotproduct_dev),
        Check::Weyl => per_trial(check, records, checks, |r, _| (!r.weyl_ok).then(|| "Weyl bound violated".into())),
        Check::GaussianRescale => per_trial(check, records, checks, |_, c| match c.rescale_dev {
            Some(d) if d <= 1e-12 => None,
            Some(d) => Some(format!("rescaling identity off by {d:e}")),
            None => Some("not computed".into()),
        }),
        Check::Laplacian => per_trial(check, records, checks, |_, c| {
            match (c.laplacian_row_sum, &c.normalized_unit_diag) {
                (Some(s), _) if s > 1e-12 => Some(format!("|L 1| = {s:e}")),
                (_, Some(Ok(false))) => Some("normalized Laplacian diagonal is not 1".into()),
                (_, Some(Err(e))) => Some(e.clone()),
                (Some(_), Some(Ok(true))) => None,
                _ => Some("not computed".into()),
            }
        }),
        Check::Centering => per_trial(check, records, checks, |_, c| match c.centering {
            Some((lhs, rhs)) if lhs <= rhs + 1e-12 => None,
            Some((lhs, rhs)) => Some(format!("||H(M - M~)H|| = {lhs:e} > {rhs:e}")),
            None => Some("not computed".into()),
        }),
        Check::SubspaceAngles => {
            let k1 = grid.iter().map(|g| g.near_degenerate_k1).sum::<usize>();
            let k2 = grid.iter().map(|g| g.near_degenerate_k2).sum::<usize>();
            let detail = format!(
                "mean top angle (k = 1) per grid point: [{}]; near-degenerate trials: k = 1: {k1}, k = 2: {k2}",
                grid.iter().map(|g| format!("{:.3e}", g.top_angle_k1.mean)).collect::<Vec<_>>().join(", ")
            );
            CheckOutcome {
                check,
                status: if k1 + k2 > 0 { CheckStatus::Flag } else { CheckStatus::Pass },
                detail,
            }
        }
    }
}

fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord], checks: &[TrialChecks]) -> AggregateReport {
    let grid = summarize(records, checks);
    let (fit, fit_note) = match fit_constant(records) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let outcomes = cfg.checks.iter().map(|&c| evaluate(c, &grid, records, checks)).collect();
    AggregateReport {
        name: cfg.name.clone(),
        base_seed: cfg.base_seed,
        grid,
        fit,
        fit_note,
        checks: outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, p: usize, rep: usize, frob: f64, bracket: f64) -> TrialRecord {
        TrialRecord {
            n,
            p,
            replication: rep,
            seed: 0,
            frob_gap_sq: frob,
            op_gap: 0.0,
            max_interpoint_dev: 0.0,
            max_dotproduct_dev: 0.0,
            bracket_b: bracket,
            top_angle_k1: 0.0,
            top_angle_k2: 0.0,
            weyl_ok: true,
            out_of_domain_count: 0,
            wall_time_ms: 0.0,
        }
    }

    fn config(extra: serde_json::Value) -> ExperimentConfig {
        let mut v = serde_json::json!({
            "name": "t",
            "signal": {"family": "circle_embed"},
            "noise": {"family": "gaussian_like", "sigma": {"kind": "identity"}},
            "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 1.0}},
            "grid": [[20, 40], [20, 160]],
            "replications": 3,
            "base_seed": 11,
            "checks": ["frobenius_gap", "operator_gap", "weyl", "interpoint", "dotproduct",
                       "gaussian_rescale", "laplacian", "centering", "subspace_angles"],
            "output": {"path": "o.csv", "format": "csv"}
        });
        for (k, val) in extra.as_object().unwrap() {
            v[k] = val.clone();
        }
        ExperimentConfig::from_json(&v.to_string()).unwrap()
    }

    #[test]
    fn exact_linear_fit() {
        let recs: Vec<TrialRecord> = [0.5, 0.25, 0.1]
            .iter()
            .enumerate()
            .map(|(i, b)| record(10, 100 * (i + 1), 0, 2.0 * b, *b))
            .collect();
        let fit = fit_constant(&recs).unwrap();
        assert!((fit.c_hat - 2.0).abs() < 1e-15);
        assert!((fit.r_squared - 1.0).abs() < 1e-15);
        assert_eq!(fit.points, 3);
    }

    #[test]
    fn fit_rejects_degenerate_designs() {
        assert!(matches!(
            fit_constant(&[record(10, 100, 0, 1.0, 1.0)]),
            Err(Error::DegenerateFit(_))
        ));
        let same: Vec<TrialRecord> = (0..3).map(|i| record(10, 100 * (i + 1), 0, 1.0, 0.3)).collect();
        assert!(matches!(fit_constant(&same), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn zero_noise_has_zero_gap() {
        let cfg = config(serde_json::json!({
            "noise": {"family": "zero"},
            "grid": [[10, 50]],
            "replications": 1
        }));
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].frob_gap_sq, 0.0);
        assert!(out.aggregate.passed(), "{:?}", out.aggregate.checks);
    }

    #[test]
    fn full_check_suite_passes_on_small_run() {
        let cfg = config(serde_json::json!({}));
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 6);
        assert!(out.records.iter().all(|r| r.weyl_ok && r.bracket_b > 0.0 && r.wall_time_ms == 0.0));
        for c in &out.aggregate.checks {
            assert_ne!(c.status, CheckStatus::Fail, "{c:?}");
        }
        assert!(out.checks.iter().all(|c| c.rescale_dev.unwrap() <= 1e-12));
        assert_eq!(out.aggregate.grid.len(), 2);
        assert!(out.aggregate.fit.is_none());
    }

    #[test]
    fn records_are_ordered_and_seeded() {
        let cfg = config(serde_json::json!({}));
        let out = run_experiment(&cfg).unwrap();
        let keys: Vec<(usize, usize)> = out.records.iter().map(|r| (r.p, r.replication)).collect();
        assert_eq!(keys, vec![(40, 0), (40, 1), (40, 2), (160, 0), (160, 1), (160, 2)]);
        assert_eq!(out.records[4].seed, trial_seed(11, 1, 1));
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let one = run_experiment(&config(serde_json::json!({"threads": 1}))).unwrap();
        let four = run_experiment(&config(serde_json::json!({"threads": 4}))).unwrap();
        assert_eq!(one.records, four.records);
        assert_eq!(one.aggregate, four.aggregate);
    }

    #[test]
    fn trend_rules() {
        let g = |p: usize, mean: f64, se: f64| GridSummary {
            n: 10,
            p,
            replications: 5,
            frob_gap_sq: MeanSe { mean, se },
            op_gap: MeanSe { mean: 0.0, se: 0.0 },
            max_interpoint_dev: MeanSe { mean: 0.0, se: 0.0 },
            max_dotproduct_dev: MeanSe { mean: 0.0, se: 0.0 },
            top_angle_k1: MeanSe { mean: 0.0, se: 0.0 },
            top_angle_k2: MeanSe { mean: 0.0, se: 0.0 },
            bracket_b: 0.0,
            out_of_domain_total: 0,
            weyl_failures: 0,
            near_degenerate_k1: 0,
            near_degenerate_k2: 0,
        };
        let st = |grid: Vec<GridSummary>| trend(Check::FrobeniusGap, &grid, |g| g.frob_gap_sq).status;
        assert_eq!(st(vec![g(10, 3.0, 0.1), g(20, 2.0, 0.1), g(40, 1.0, 0.1)]), CheckStatus::Pass);
        assert_eq!(st(vec![g(10, 1.0, 0.1), g(20, 1.1, 0.1), g(40, 0.5, 0.1)]), CheckStatus::Pass);
        assert_eq!(st(vec![g(10, 1.0, 0.1), g(20, 2.0, 0.1), g(40, 0.5, 0.1)]), CheckStatus::Flag);
        assert_eq!(st(vec![g(10, 1.0, 0.1), g(20, 2.0, 0.1), g(40, 3.0, 0.1)]), CheckStatus::Fail);
        assert_eq!(st(vec![g(10, 1.0, 0.1)]), CheckStatus::Skipped);
    }

    #[test]
    fn mean_se() {
        let m = MeanSe::of([1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSe::of([4.0]).se, 0.0);
    }

    #[test]
    fn timing_is_recorded_only_on_request() {
        let cfg = config(serde_json::json!({"record_timing": true, "replications": 1, "grid": [[10, 20]]}));
        let out = run_experiment(&cfg).unwrap();
        assert!(out.records[0].wall_time_ms > 0.0);
    }
}
