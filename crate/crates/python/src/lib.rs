//! Python module `noisykernel`.
//!
//! Structured values (models, reports) cross the boundary as JSON-compatible
//! dicts; matrices as lists of rows.

use noisykernel::harness::{self, ExperimentConfig, JsonReport};
use noisykernel::kernels::{self, DiagonalConvention};
use noisykernel::linalg::{self, SymMatrix};
use noisykernel::oracle::{self, MomentParams};
use noisykernel::randsrc::{self, NoiseModel, RadiusModel, SignalModel};
use noisykernel::{spectral, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(noisykernel, NoisyKernelError, PyException, "Runtime failure inside noisykernel.");

fn to_py(e: Error) -> PyErr {
    if e.is_config() || matches!(e, Error::InvalidParameter { .. }) {
        PyValueError::new_err(e.to_string())
    } else {
        NoisyKernelError::new_err(e.to_string())
    }
}

/// Accepts a dict (or anything `json.dumps` handles) or a JSON string.
fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>, what: &str) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid {what}: {e}")))
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| NoisyKernelError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SymMatrix> {
    SymMatrix::from_rows(&rows).map_err(to_py)
}

#[pyclass(name = "KernelSpec", module = "noisykernel", from_py_object)]
#[derive(Clone)]
struct PyKernelSpec {
    inner: kernels::KernelSpec,
}

#[pymethods]
impl PyKernelSpec {
    /// Build from a dict like `{"family": "euclidean_distance", "func": {"kind": "gaussian", "s": 1.0}}`.
    #[new]
    fn new(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: kernels::KernelSpec = from_py(py, spec, "kernel")?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn gaussian(s: f64) -> PyResult<Self> {
        let inner = kernels::KernelSpec::gaussian(s);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    #[getter]
    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("KernelSpec({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

#[pyclass(name = "DataSet", module = "noisykernel", from_py_object)]
#[derive(Clone)]
struct PyDataSet {
    inner: noisykernel::DataSet,
}

#[pymethods]
impl PyDataSet {
    /// Draw `X = Y + diag(R) Z / sqrt(p)` from model dicts.
    #[staticmethod]
    #[pyo3(signature = (signal, noise, n, p, seed, radii = None))]
    fn sample(
        py: Python<'_>,
        signal: &Bound<'_, PyAny>,
        noise: &Bound<'_, PyAny>,
        n: usize,
        p: usize,
        seed: u64,
        radii: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let signal: SignalModel = from_py(py, signal, "signal")?;
        let noise: NoiseModel = from_py(py, noise, "noise")?;
        let radii: RadiusModel = match radii {
            Some(r) => from_py(py, r, "radii")?,
            None => RadiusModel::ConstantOne {},
        };
        let inner = py
            .detach(|| randsrc::assemble_dataset(&signal, &noise, &radii, n, p, seed))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid dataset: {e}")))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| NoisyKernelError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x().to_rows()
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.y().to_rows()
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        self.inner.z().to_rows()
    }

    #[getter]
    fn r(&self) -> Vec<f64> {
        self.inner.r().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("DataSet(n={}, p={}, nu={})", self.inner.n(), self.inner.p(), self.inner.nu())
    }
}

fn diagonal(name: &str) -> PyResult<DiagonalConvention> {
    match name {
        "at_zero" => Ok(DiagonalConvention::AtZero),
        "shifted" => Ok(DiagonalConvention::Shifted),
        other => Err(PyValueError::new_err(format!("unknown diagonal `{other}`; expected at_zero or shifted"))),
    }
}

/// `f(stat(X_i, X_j)) / n`; returns `(matrix, out_of_domain_count)`.
#[pyfunction]
fn kernel_matrix(py: Python<'_>, ds: &PyDataSet, kernel: &PyKernelSpec) -> (Vec<Vec<f64>>, usize) {
    let km = py.detach(|| kernels::kernel_matrix(&ds.inner, &kernel.inner));
    (km.matrix.to_rows(), km.out_of_domain)
}

#[pyfunction]
#[pyo3(signature = (ds, kernel, diag = "at_zero"))]
fn approx_matrix(py: Python<'_>, ds: &PyDataSet, kernel: &PyKernelSpec, diag: &str) -> PyResult<Vec<Vec<f64>>> {
    let d = diagonal(diag)?;
    let m = py.detach(|| kernels::approx_matrix(&ds.inner, &kernel.inner, d)).map_err(to_py)?;
    Ok(m.to_rows())
}

#[pyfunction]
fn signal_kernel_matrix(py: Python<'_>, ds: &PyDataSet, kernel: &PyKernelSpec) -> Vec<Vec<f64>> {
    py.detach(|| kernels::signal_kernel_matrix(&ds.inner, &kernel.inner)).to_rows()
}

#[pyfunction]
fn laplacian(m: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(kernels::laplacian(&matrix(m)?).to_rows())
}

#[pyfunction]
fn normalized_laplacian(m: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(kernels::normalized_laplacian(&matrix(m)?).map_err(to_py)?.to_rows())
}

/// Eigenvalues in non-increasing order and eigenvectors as columns.
#[pyfunction]
fn eigh(m: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let s = linalg::eigh(&matrix(m)?).map_err(to_py)?;
    let v = &s.eigenvectors;
    let rows = (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect();
    Ok((s.eigenvalues, rows))
}

#[pyfunction]
#[pyo3(signature = (m, mt, ks = vec![1]))]
fn compare_spectra<'py>(
    py: Python<'py>,
    m: Vec<Vec<f64>>,
    mt: Vec<Vec<f64>>,
    ks: Vec<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = spectral::compare_spectra(&matrix(m)?, &matrix(mt)?, &ks).map_err(to_py)?;
    to_dict(py, &report)
}

#[pyfunction]
fn gaussian_rescale_check<'py>(py: Python<'py>, ds: &PyDataSet, s: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = spectral::gaussian_rescale_check(&ds.inner, s).map_err(to_py)?;
    to_dict(py, &report)
}

#[pyfunction]
#[pyo3(signature = (matrix_rows, sigma2 = 1.0, kappa4 = 3.0))]
fn quadform_second_moment(matrix_rows: Vec<Vec<f64>>, sigma2: f64, kappa4: f64) -> PyResult<f64> {
    let params = MomentParams::new(sigma2, kappa4, matrix(matrix_rows)?).map_err(to_py)?;
    oracle::quadform_second_moment(&params).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (sigma, mu4 = 3.0))]
fn pairdiff_variance(sigma: Vec<Vec<f64>>, mu4: f64) -> PyResult<f64> {
    oracle::pairdiff_variance(&matrix(sigma)?, mu4).map_err(to_py)
}

/// `(distance, dot_product)` maximal deviations from the noiseless statistics.
#[pyfunction]
fn max_interpoint_dev(ds: &PyDataSet) -> (f64, f64) {
    let d = oracle::max_interpoint_dev(&ds.inner);
    (d.distance, d.dot_product)
}

/// Same as the CLI `oracle` subcommand: `oracle("pairdiff", sigma="identity:10", mu4=3)`.
#[pyfunction]
#[pyo3(signature = (name, **params))]
fn evaluate_oracle(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mut args = Vec::new();
    if let Some(d) = params {
        for (k, v) in d.iter() {
            args.push(format!("{}={}", k.str()?, v.str()?));
        }
    }
    harness::evaluate_oracle(name, &args).map_err(to_py)
}

/// Validate a config dict or JSON string; returns the normalized config.
#[pyfunction]
fn check_config<'py>(py: Python<'py>, config: &Bound<'_, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(py, config)?;
    to_dict(py, &cfg)
}

fn parse_config(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<ExperimentConfig> {
    let text: String = match config.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (config,))?.extract()?,
    };
    ExperimentConfig::from_json(&text).map_err(to_py)
}

/// Run an experiment in memory; returns `{"records": [...], "aggregate": {...}}`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'_, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(py, config)?;
    let result = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    to_dict(
        py,
        &JsonReport {
            records: result.records,
            aggregate: result.aggregate,
        },
    )
}

#[pymodule]
#[pyo3(name = "noisykernel")]
fn noisykernel_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoisyKernelError", m.py().get_type::<NoisyKernelError>())?;
    m.add_class::<PyKernelSpec>()?;
    m.add_class::<PyDataSet>()?;
    m.add_function(wrap_pyfunction!(kernel_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(approx_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(signal_kernel_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    m.add_function(wrap_pyfunction!(compare_spectra, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_rescale_check, m)?)?;
    m.add_function(wrap_pyfunction!(quadform_second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(pairdiff_variance, m)?)?;
    m.add_function(wrap_pyfunction!(max_interpoint_dev, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
