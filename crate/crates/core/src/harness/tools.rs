//! Single-shot evaluations behind the `oracle` and `spectra` subcommands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::format_float;
use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::kernels::{approx_matrix, kernel_matrix, DiagonalConvention, KernelSpec};
use crate::linalg::SymMatrix;
use crate::oracle::{eq1_bracket, pairdiff_variance, quadform_second_moment, rate_quantities, MomentParams, RateParams};
use crate::randsrc::SigmaStats;
use crate::spectral::{compare_spectra, SpectralGapReport};

pub const ORACLE_NAMES: [&str; 4] = ["quadform", "pairdiff", "eq1", "rates"];

/// Parses `identity:k`, `diag:a,b,...` or `rows:a,b;c,d`.
pub fn parse_matrix(spec: &str) -> Result<SymMatrix> {
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| Error::config("matrix", format!("`{spec}`: expected identity:K, diag:A,B,... or rows:A,B;C,D")))?;
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config("matrix", format!("`{t}` is not a number")))
            })
            .collect()
    };
    let bad = |e: Error| Error::config("matrix", e.to_string());
    match kind {
        "identity" => {
            let k: usize = body
                .trim()
                .parse()
                .map_err(|_| Error::config("matrix", format!("`{body}` is not an order")))?;
            SymMatrix::identity(k).map_err(bad)
        }
        "diag" => SymMatrix::diagonal(&nums(body)?).map_err(bad),
        "rows" => {
            let rows = body.split(';').map(nums).collect::<Result<Vec<_>>>()?;
            SymMatrix::from_rows(&rows).map_err(bad)
        }
        other => Err(Error::config("matrix", format!("unknown matrix form `{other}`"))),
    }
}

struct Args(BTreeMap<String, String>);

impl Args {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in args {
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| Error::config(a.clone(), "expected key=value"))?;
            if !allowed.contains(&k) {
                return Err(Error::config(k, format!("unknown parameter; expected one of {}", allowed.join(", "))));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(k, "given twice"));
            }
        }
        Ok(Self(map))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(key, format!("`{v}` is not a number"))),
            None => default.ok_or_else(|| Error::config(key, "missing")),
        }
    }

    fn count(&self, key: &str) -> Result<usize> {
        let v = self.raw(key).ok_or_else(|| Error::config(key, "missing"))?;
        v.parse().map_err(|_| Error::config(key, format!("`{v}` is not a count")))
    }

    fn matrix(&self, key: &str) -> Result<SymMatrix> {
        parse_matrix(self.raw(key).ok_or_else(|| Error::config(key, "missing"))?)
    }
}

fn model_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::config(name, reason),
        other => Error::config("<oracle>", other.to_string()),
    }
}

/// Evaluates one oracle from `key=value` arguments and renders the result.
///
/// - `quadform matrix=.. [sigma2=1] [kappa4=3]`
/// - `pairdiff sigma=.. [mu4=3]`
/// - `eq1 C0=.. C1=.. p=.. (sigma=.. | trace_sq_over_p2=.. op_norm=..)`
/// - `rates b=.. c0=.. C=.. eps=.. n=.. p=.. M_p=.. [R_inf=1] [R_sup=1] [nu=1]`
pub fn evaluate_oracle(name: &str, args: &[String]) -> Result<String> {
    match name {
        "quadform" => {
            let a = Args::parse(args, &["matrix", "sigma2", "kappa4"])?;
            let params = MomentParams::new(a.num("sigma2", Some(1.0))?, a.num("kappa4", Some(3.0))?, a.matrix("matrix")?)
                .map_err(model_error)?;
            Ok(format_float(quadform_second_moment(&params).map_err(model_error)?))
        }
        "pairdiff" => {
            let a = Args::parse(args, &["sigma", "mu4"])?;
            Ok(format_float(
                pairdiff_variance(&a.matrix("sigma")?, a.num("mu4", Some(3.0))?).map_err(model_error)?,
            ))
        }
        "eq1" => {
            let a = Args::parse(args, &["C0", "C1", "p", "sigma", "trace_sq_over_p2", "op_norm"])?;
            let p = a.count("p")?;
            let stats = match a.raw("sigma") {
                Some(_) => {
                    if a.raw("trace_sq_over_p2").is_some() || a.raw("op_norm").is_some() {
                        return Err(Error::config("sigma", "give either sigma or trace_sq_over_p2 and op_norm"));
                    }
                    let s = a.matrix("sigma")?;
                    if s.order() != p {
                        return Err(Error::config("sigma", format!("order {} differs from p = {p}", s.order())));
                    }
                    let tr_sq: f64 = s.as_dmatrix().iter().map(|v| v * v).sum();
                    SigmaStats {
                        trace_sq_over_p2: tr_sq / (p * p) as f64,
                        op_norm: crate::linalg::operator_norm(&s).map_err(model_error)?,
                    }
                }
                None => SigmaStats {
                    trace_sq_over_p2: a.num("trace_sq_over_p2", None)?,
                    op_norm: a.num("op_norm", None)?,
                },
            };
            Ok(format_float(
                eq1_bracket(a.num("C0", None)?, a.num("C1", None)?, stats, p).map_err(model_error)?,
            ))
        }
        "rates" => {
            let a = Args::parse(args, &["b", "c0", "C", "eps", "n", "p", "M_p", "R_inf", "R_sup", "nu"])?;
            let rp = RateParams {
                b: a.num("b", None)?,
                c0: a.num("c0", None)?,
                cc: a.num("C", None)?,
                eps: a.num("eps", None)?,
                n: a.num("n", None)?,
                p: a.count("p")?,
                m_p: a.num("M_p", None)?,
                r_inf: a.num("R_inf", Some(1.0))?,
                r_sup: a.num("R_sup", Some(1.0))?,
                nu: a.num("nu", Some(1.0))?,
            };
            let r = rate_quantities(&rp).map_err(model_error)?;
            Ok(format!(
                "r0={}\nr1={}\nu_p={}\nkappa_b={}",
                format_float(r.r0),
                format_float(r.r1),
                format_float(r.u_p),
                format_float(r.kappa_b)
            ))
        }
        other => Err(Error::config(
            "<oracle>",
            format!("unknown oracle `{other}`; expected one of {}", ORACLE_NAMES.join(", ")),
        )),
    }
}

/// One-off comparison of a stored dataset's kernel matrix with its approximant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraReport {
    pub n: usize,
    pub p: usize,
    pub nu: f64,
    pub kernel: KernelSpec,
    pub out_of_domain_count: usize,
    pub eigenvalues: Vec<f64>,
    pub approx_eigenvalues: Vec<f64>,
    pub report: SpectralGapReport,
}

pub fn spectra_report(ds: &DataSet, kernel: &KernelSpec, ks: &[usize]) -> Result<SpectraReport> {
    let km = kernel_matrix(ds, kernel);
    let mt = approx_matrix(ds, kernel, DiagonalConvention::AtZero)?;
    let report = compare_spectra(&km.matrix, &mt, ks)?;
    Ok(SpectraReport {
        n: ds.n(),
        p: ds.p(),
        nu: ds.nu(),
        kernel: kernel.clone(),
        out_of_domain_count: km.out_of_domain,
        eigenvalues: crate::linalg::eigh(&km.matrix)?.eigenvalues,
        approx_eigenvalues: crate::linalg::eigh(&mt)?.eigenvalues,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randsrc::{assemble_dataset, NoiseModel, RadiusModel, SignalModel};

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn value(name: &str, v: &[&str]) -> f64 {
        evaluate_oracle(name, &args(v)).unwrap().parse().unwrap()
    }

    #[test]
    fn matrices() {
        assert_eq!(parse_matrix("identity:2").unwrap(), SymMatrix::identity(2).unwrap());
        assert_eq!(parse_matrix("diag:1,2").unwrap(), SymMatrix::diagonal(&[1.0, 2.0]).unwrap());
        assert_eq!(
            parse_matrix("rows:1,9;9,1").unwrap().to_rows(),
            vec![vec![1.0, 9.0], vec![9.0, 1.0]]
        );
        assert!(parse_matrix("rows:1,2;3,1").is_err());
        assert!(parse_matrix("ones:3").is_err());
        assert!(parse_matrix("diag").is_err());
    }

    #[test]
    fn oracle_values() {
        assert_eq!(value("quadform", &["matrix=identity:3"]), 15.0);
        assert_eq!(value("quadform", &["matrix=diag:1,2", "kappa4=3"]), 19.0);
        assert_eq!(value("quadform", &["matrix=identity:7", "kappa4=1"]), 49.0);
        assert_eq!(value("pairdiff", &["sigma=identity:10"]), 80.0);
        assert_eq!(value("pairdiff", &["sigma=identity:10", "mu4=1"]), 40.0);
        assert!((value("eq1", &["C0=1", "C1=1", "p=100", "sigma=identity:100"]) - 0.02).abs() < 1e-15);
        assert!((value("eq1", &["C0=1", "C1=1", "p=100", "trace_sq_over_p2=1e-4", "op_norm=1"]) - 0.0101).abs() < 1e-15);
        let rates = evaluate_oracle(
            "rates",
            &args(&["b=2", "c0=1", "C=1", "eps=1", "n=2.718281828459045", "p=100", "M_p=1"]),
        )
        .unwrap();
        let r0: f64 = rates.lines().next().unwrap().strip_prefix("r0=").unwrap().parse().unwrap();
        assert!((r0 - 0.2).abs() < 1e-15);
        let kappa: f64 = rates.lines().last().unwrap().strip_prefix("kappa_b=").unwrap().parse().unwrap();
        assert!((kappa - 16.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_errors_are_config_errors() {
        for (name, a) in [
            ("quadform", vec![]),
            ("quadform", vec!["matrix=identity:2", "bogus=1"]),
            ("quadform", vec!["matrix=identity:2", "sigma2=0"]),
            ("pairdiff", vec!["sigma=diag:1,-1"]),
            ("rates", vec!["b=3", "c0=1", "C=1", "eps=1", "n=3", "p=10", "M_p=1"]),
            ("eq1", vec!["C0=1", "C1=1", "p=3", "sigma=identity:2"]),
            ("nope", vec![]),
        ] {
            let e = evaluate_oracle(name, &args(&a)).unwrap_err();
            assert!(e.is_config(), "{name} {a:?}: {e:?}");
        }
    }

    #[test]
    fn spectra_on_zero_noise_dataset() {
        let ds = assemble_dataset(
            &SignalModel::CircleEmbed { scale: 1.0 },
            &NoiseModel::Zero {},
            &RadiusModel::ConstantOne {},
            8,
            3,
            1,
        )
        .unwrap();
        let r = spectra_report(&ds, &KernelSpec::gaussian(1.0), &[1, 2]).unwrap();
        assert_eq!(r.report.frob_gap, 0.0);
        assert_eq!(r.eigenvalues, r.approx_eigenvalues);
        assert!(r.report.weyl_ok);
    }
}
