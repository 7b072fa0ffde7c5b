//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use noisykernel::harness::{emit_report, run_experiment, CheckStatus, ExperimentConfig, OutputFormat, TrialRecord};
use noisykernel::kernels::{
    approx_matrix_elliptical, approx_matrix_spherical, kernel_matrix, laplacian, normalized_laplacian, KernelSpec,
};
use noisykernel::linalg::{centering_matrix, operator_norm, SymMatrix};
use noisykernel::oracle::{
    max_interpoint_dev, pairdiff_monte_carlo, pairdiff_variance, quadform_monte_carlo, quadform_second_moment,
    random_psd, MomentParams,
};
use noisykernel::randsrc::{assemble_dataset, Covariance, EntryLaw, NoiseModel, RadiusModel, SignalModel};
use noisykernel::spectral::{compare_spectra, dmd_offdiag_dev, gaussian_rescale_check, signal_alignment};

const DRAWS: usize = 1_000_000;

/// Every spectral comparison made anywhere in the suite.
static WEYL_TRIALS: AtomicUsize = AtomicUsize::new(0);
static WEYL_FAILURES: AtomicUsize = AtomicUsize::new(0);

fn tally(ok: bool) {
    WEYL_TRIALS.fetch_add(1, Ordering::Relaxed);
    if !ok {
        WEYL_FAILURES.fetch_add(1, Ordering::Relaxed);
    }
}

fn tally_records(records: &[TrialRecord]) {
    for r in records {
        tally(r.weyl_ok);
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian_id() -> NoiseModel {
    NoiseModel::GaussianLike {
        sigma: Covariance::Identity {},
        entry_law: EntryLaw::StandardNormal,
    }
}

fn circle() -> SignalModel {
    SignalModel::CircleEmbed { scale: 1.0 }
}

fn config(v: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).expect("acceptance config is valid")
}

fn moment_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    let mut ok = true;
    for (idx, order) in [2usize, 3, 4, 5, 6].into_iter().enumerate() {
        let m = random_psd(order, 100 + idx as u64).unwrap();
        for (law, kappa4) in [(EntryLaw::StandardNormal, 3.0), (EntryLaw::Rademacher, 1.0)] {
            let exact = quadform_second_moment(&MomentParams::new(1.0, kappa4, m.clone()).unwrap()).unwrap();
            let est = quadform_monte_carlo(&m, law, DRAWS, 1000 + idx as u64).unwrap();
            let z = est.z_score(exact);
            worst = worst.max(z);
            ok &= z <= 4.0;
        }
    }
    let mut exact_ok = true;
    for p in [3usize, 10, 50] {
        let id = SymMatrix::identity(p).unwrap();
        let v = quadform_second_moment(&MomentParams::new(1.0, 1.0, id.clone()).unwrap()).unwrap();
        let mc = quadform_monte_carlo(&id, EntryLaw::Rademacher, 1000, 7).unwrap();
        exact_ok &= v == (p * p) as f64 && mc.value == v;
    }
    outcome(
        ok && exact_ok,
        format!("worst |z| = {worst:.2} over 10 cases (limit 4); Id with +-1 entries exactly p^2: {exact_ok}"),
    )
}

fn variance_identity() -> Outcome {
    let exact80 = pairdiff_variance(&SymMatrix::identity(10).unwrap(), 3.0).unwrap() == 80.0;
    let sigma = SymMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let mut zs = Vec::new();
    for (law, seed) in [(EntryLaw::StandardNormal, 21u64), (EntryLaw::Rademacher, 22)] {
        let exact = pairdiff_variance(&sigma, law.mu4()).unwrap();
        zs.push(pairdiff_monte_carlo(&sigma, law, DRAWS, seed).unwrap().z_score(exact));
    }
    let ok = exact80 && zs.iter().all(|z| *z <= 4.0);
    outcome(
        ok,
        format!("Id_10, mu4 = 3 gives 80: {exact80}; diag(1..5) |z| gaussian {:.2}, +-1 {:.2}", zs[0], zs[1]),
    )
}

fn frobenius_trend() -> Outcome {
    let cfg = config(serde_json::json!({
        "name": "frobenius-trend",
        "signal": {"family": "circle_embed"},
        "noise": {"family": "gaussian_like", "sigma": {"kind": "identity"}},
        "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 1.0}},
        "grid": [[50, 250], [50, 1000], [50, 4000]],
        "replications": 20,
        "base_seed": 2024,
        "checks": ["frobenius_gap", "weyl"],
        "output": {"path": "unused.csv", "format": "csv"}
    }));
    let out = run_experiment(&cfg).unwrap();
    tally_records(&out.records);
    let means: Vec<f64> = out.aggregate.grid.iter().map(|g| g.frob_gap_sq.mean).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let ratio = means[0] / means[2];
    let fit = out
        .aggregate
        .fit
        .map_or("none".to_string(), |f| format!("C_hat = {:.3e}, r^2 = {:.3}", f.c_hat, f.r_squared));
    outcome(
        decreasing && (6.0..=30.0).contains(&ratio),
        format!(
            "means [{:.3e}, {:.3e}, {:.3e}], ratio 250/4000 = {ratio:.2} (need [6, 30]); fit {fit}",
            means[0], means[1], means[2]
        ),
    )
}

/// Counts seeds where the statistic at `p = 4000` is below the one at `p = 250`.
fn paired_trend(stat: fn(&noisykernel::DataSet) -> f64) -> (usize, Vec<(f64, f64)>) {
    let noise = NoiseModel::SphereUniform {};
    let radii = RadiusModel::two_point(0.6, 1.4);
    let mut hits = 0;
    let mut pairs = Vec::new();
    for seed in 0..20u64 {
        let lo = assemble_dataset(&circle(), &noise, &radii, 50, 250, 5000 + seed).unwrap();
        let hi = assemble_dataset(&circle(), &noise, &radii, 50, 4000, 5000 + seed).unwrap();
        let (a, b) = (stat(&lo), stat(&hi));
        if b < a {
            hits += 1;
        }
        pairs.push((a, b));
    }
    (hits, pairs)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn interpoint_concentration() -> Outcome {
    let (hits, pairs) = paired_trend(|ds| max_interpoint_dev(ds).distance);
    outcome(
        hits >= 18,
        format!(
            "{hits}/20 seeds smaller at p = 4000 (need 18); median {:.3} -> {:.3}",
            median(pairs.iter().map(|p| p.0).collect()),
            median(pairs.iter().map(|p| p.1).collect())
        ),
    )
}

fn dotproduct_concentration() -> Outcome {
    let (hits, pairs) = paired_trend(|ds| max_interpoint_dev(ds).dot_product);
    outcome(
        hits >= 18,
        format!(
            "{hits}/20 seeds smaller at p = 4000 (need 18); median {:.3} -> {:.3}",
            median(pairs.iter().map(|p| p.0).collect()),
            median(pairs.iter().map(|p| p.1).collect())
        ),
    )
}

fn rescale_identity() -> Outcome {
    let signals = [
        circle(),
        SignalModel::SphereEmbed {
            intrinsic_dim: 2,
            scale: 1.5,
        },
        SignalModel::GaussianLowrank {
            intrinsic_dim: 3,
            scale: 0.7,
        },
    ];
    let noises = [
        gaussian_id(),
        NoiseModel::SphereUniform {},
        NoiseModel::ScaledSphere {
            sigma: Covariance::Ar1 { rho: 0.4 },
        },
        NoiseModel::LpBall { b_exponent: 1.5 },
        NoiseModel::GaussianCopula {
            correlation: Covariance::Ar1 { rho: 0.3 },
        },
    ];
    let mut worst = 0.0_f64;
    let mut worst_dmd = 0.0_f64;
    for c in 0..10usize {
        let sig = &signals[c % signals.len()];
        let noise = &noises[c % noises.len()];
        let (n, p) = (20 + 7 * c, 30 + 40 * c);
        let s = 0.2 + 0.15 * c as f64;
        let ds = assemble_dataset(sig, noise, &RadiusModel::ConstantOne {}, n, p, 700 + c as u64).unwrap();
        worst = worst.max(gaussian_rescale_check(&ds, s).unwrap().max_entry_dev);
        let ell = ds.with_radii((0..n).map(|i| if i % 2 == 0 { 0.6 } else { 1.4 }).collect()).unwrap();
        worst_dmd = worst_dmd.max(dmd_offdiag_dev(&ell, s).unwrap());
    }
    outcome(
        worst <= 1e-12 && worst_dmd <= 1e-12,
        format!("max off-diagonal deviation {worst:.2e} spherical, {worst_dmd:.2e} elliptical D P D (limit 1e-12)"),
    )
}

fn eigenvector_robustness() -> Outcome {
    let signal = SignalModel::FixedCloud {
        points: vec![vec![2.0], vec![2.0], vec![-2.0]],
    };
    let s = 0.5;
    let mut hits = 0;
    let mut degenerate = 0;
    let mut elliptical_hits = 0;
    for seed in 0..20u64 {
        let ds = assemble_dataset(&signal, &gaussian_id(), &RadiusModel::ConstantOne {}, 60, 1000, 900 + seed).unwrap();
        let r = gaussian_rescale_check(&ds, s).unwrap();
        if r.eigvec_alignment >= 0.95 {
            hits += 1;
        }
        if r.near_degenerate {
            degenerate += 1;
        }
        let k = KernelSpec::gaussian(s);
        let cmp = compare_spectra(&kernel_matrix(&ds, &k).matrix, &approx_matrix_spherical(&ds, &k).unwrap(), &[1]).unwrap();
        tally(cmp.weyl_ok);

        let ell = assemble_dataset(&signal, &gaussian_id(), &RadiusModel::two_point(0.5, 1.5), 60, 1000, 900 + seed).unwrap();
        if signal_alignment(&ell, s).unwrap() >= 0.95 {
            elliptical_hits += 1;
        }
        let cmp = compare_spectra(&kernel_matrix(&ell, &k).matrix, &approx_matrix_elliptical(&ell, &k).unwrap(), &[1]).unwrap();
        tally(cmp.weyl_ok);
    }
    outcome(
        hits >= 18 && degenerate == 0,
        format!(
            "{hits}/20 seeds with alignment >= 0.95 (need 18), {degenerate} near-degenerate; \
             elliptical radii {{0.5, 1.5}} (reported only): {elliptical_hits}/20"
        ),
    )
}

fn laplacian_structure() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (radii, seed) in [
        (serde_json::json!({"family": "constant_one"}), 31u64),
        (serde_json::json!({"family": "two_point", "low": 0.6, "high": 1.4}), 32),
    ] {
        let cfg = config(serde_json::json!({
            "name": "laplacian",
            "signal": {"family": "sphere_embed", "intrinsic_dim": 2},
            "noise": {"family": "gaussian_like", "sigma": {"kind": "ar1", "rho": 0.2}},
            "radii": radii,
            "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 0.5}},
            "grid": [[30, 100], [30, 400], [60, 200]],
            "replications": 5,
            "base_seed": seed,
            "checks": ["laplacian", "centering", "weyl"],
            "output": {"path": "unused.csv", "format": "csv"}
        }));
        let out = run_experiment(&cfg).unwrap();
        tally_records(&out.records);
        for c in &out.aggregate.checks {
            ok &= c.status == CheckStatus::Pass;
        }
        details.push(format!("{} trials", out.records.len()));
    }
    // direct check on a dot-product kernel as well
    let ds = assemble_dataset(&circle(), &gaussian_id(), &RadiusModel::ConstantOne {}, 25, 80, 33).unwrap();
    let k = KernelSpec::new(
        noisykernel::kernels::KernelFamily::DotProduct,
        noisykernel::kernels::KernelFn::Exponential { s: 0.3 },
    );
    let m = kernel_matrix(&ds, &k).matrix;
    let mt = noisykernel::kernels::approx_matrix_dotproduct(&ds, &k).unwrap();
    let l1 = laplacian(&m).mul_vec(&[1.0; 25]).unwrap().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let unit = normalized_laplacian(&m).unwrap().diag().iter().all(|v| *v == 1.0);
    let h = centering_matrix(25).unwrap();
    let diff = m.sub(&mt).unwrap();
    let centred = SymMatrix::symmetrize(&(h.as_dmatrix() * diff.as_dmatrix() * h.as_dmatrix())).unwrap();
    let contraction = operator_norm(&centred).unwrap() <= operator_norm(&diff).unwrap() + 1e-12;
    ok &= l1 <= 1e-12 && unit && contraction;
    outcome(
        ok,
        format!("harness checks pass on {}; dot-product |L1| = {l1:.1e}", details.join(" + ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = serde_json::json!({
        "name": "determinism",
        "signal": {"family": "sphere_embed", "intrinsic_dim": 2},
        "noise": {"family": "lp_ball", "b_exponent": 1.2},
        "radii": {"family": "uniform_interval", "low": 0.5, "high": 1.5},
        "kernel": {"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 0.7}},
        "grid": [[40, 120], [40, 480]],
        "replications": 4,
        "base_seed": 99,
        "checks": ["frobenius_gap", "weyl", "laplacian", "centering", "subspace_angles"],
        "output": {"path": "unused.csv", "format": "csv"}
    });
    let mut bytes = Vec::new();
    for (tag, threads) in [("t1", 1), ("t4", 4), ("t4b", 4)] {
        let mut v = base.clone();
        v["threads"] = serde_json::json!(threads);
        let cfg = config(v);
        let out = run_experiment(&cfg).unwrap();
        tally_records(&out.records);
        let path = dir.path().join(format!("{tag}.csv"));
        emit_report(&out.records, &out.aggregate, OutputFormat::Csv, &path).unwrap();
        bytes.push((
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join(format!("{tag}.aggregate.json"))).unwrap(),
        ));
    }
    let same = bytes.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!("CSV and aggregate byte-identical across threads = 1, 4, 4: {same} ({} bytes)", bytes[0].0.len()),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("moment-oracle agreement", moment_oracle),
        ("variance-identity agreement", variance_identity),
        ("Frobenius-gap trend in p", frobenius_trend),
        ("interpoint-distance concentration", interpoint_concentration),
        ("dot-product concentration", dotproduct_concentration),
        ("Gaussian-kernel exact rescaling identity", rescale_identity),
        ("Gaussian-kernel eigenvector robustness", eigenvector_robustness),
        ("Laplacian and centering structure", laplacian_structure),
        ("determinism across thread counts", determinism),
    ];
    let numbers = [1, 2, 3, 4, 5, 7, 8, 9, 10];
    let mut lines: Vec<(usize, String, bool)> = Vec::new();
    for ((title, f), number) in criteria.into_iter().zip(numbers) {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        lines.push((number, format!("[{number:>2}] {title}: {} ({secs:.1} s)", o.detail), o.pass));
    }
    let trials = WEYL_TRIALS.load(Ordering::Relaxed);
    let failures = WEYL_FAILURES.load(Ordering::Relaxed);
    lines.push((
        6,
        format!("[ 6] Weyl inequality over the whole suite: {failures} violations in {trials} trials"),
        failures == 0 && trials > 0,
    ));
    lines.sort_by_key(|l| l.0);
    let mut all = true;
    for (_, line, pass) in &lines {
        println!("{} {line}", if *pass { "PASS" } else { "FAIL" });
        all &= pass;
    }
    let passed = lines.iter().filter(|l| l.2).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
