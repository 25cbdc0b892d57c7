//! Python bindings: a thin layer over `tko-core` taking and returning plain
//! lists, tuples and dicts.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tko_core::mc_oracle::sample_quadform;
use tko_core::quadform_stats::{cdf_numeric, pdf_numeric, ChfVariant};
use tko_core::ratio_stats::ratio_pdf_geary;
use tko_core::scenario::ToneScenario;
use tko_core::{esa_pipeline, ChfEvaluator, GaussianVectorModel, McConfig, OperatorKernel, SampledSignal, TkoError, TwoToneSignal};

fn to_py(e: TkoError) -> PyErr {
    match e {
        TkoError::QuadratureNonConvergence { .. }
        | TkoError::DenominatorNotPositive { .. }
        | TkoError::AcceptanceTooSmall { .. }
        | TkoError::SingularPencil => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a square matrix given as a list of rows"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn kernel(p: usize, q: usize) -> PyResult<OperatorKernel> {
    OperatorKernel::new(p, q).map_err(to_py)
}

fn variant(narrowband: bool) -> ChfVariant {
    if narrowband {
        ChfVariant::Narrowband
    } else {
        ChfVariant::Real
    }
}

/// A Gaussian model `x ~ N(mu, m)` with noise power `n0`.
#[pyclass(name = "Model", module = "tko_py")]
struct PyModel {
    inner: GaussianVectorModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(mu: Vec<f64>, m: Vec<Vec<f64>>, n0: f64) -> PyResult<Self> {
        let inner = GaussianVectorModel::new(DVector::from_vec(mu), matrix(m)?, n0).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// The reference tone in noise at `snr_db`, sampled at the taps of Ψ_p^q.
    #[staticmethod]
    fn tone(p: usize, q: usize, snr_db: f64) -> PyResult<Self> {
        let inner = ToneScenario::new(snr_db).model(&kernel(p, q)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().iter().copied().collect()
    }

    #[getter]
    fn covariance(&self) -> Vec<Vec<f64>> {
        rows(self.inner.covariance())
    }

    #[getter]
    fn n0(&self) -> f64 {
        self.inner.n0()
    }

    fn noise_only(&self) -> Self {
        Self { inner: self.inner.noise_only() }
    }

    /// `(lambdas, s)` of `x'Jx` in the whitened, rotated basis.
    fn decompose(&self, j: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let d = tko_core::decompose(&self.inner, &matrix(j)?).map_err(to_py)?;
        Ok((d.lambdas, d.s))
    }

    #[pyo3(signature = (j, orders = 4, narrowband = false))]
    fn cumulants(&self, j: Vec<Vec<f64>>, orders: usize, narrowband: bool) -> PyResult<Vec<f64>> {
        let chf = ChfEvaluator::from_model(&self.inner, &matrix(j)?, variant(narrowband)).map_err(to_py)?;
        Ok(chf.cumulants(orders).kappa)
    }

    #[pyo3(signature = (j, grid, narrowband = false))]
    fn pdf(&self, j: Vec<Vec<f64>>, grid: Vec<f64>, narrowband: bool) -> PyResult<Vec<f64>> {
        let chf = ChfEvaluator::from_model(&self.inner, &matrix(j)?, variant(narrowband)).map_err(to_py)?;
        Ok(pdf_numeric(&grid, &chf).pdf)
    }

    #[pyo3(signature = (j, grid, narrowband = false))]
    fn cdf(&self, j: Vec<Vec<f64>>, grid: Vec<f64>, narrowband: bool) -> PyResult<Vec<f64>> {
        let chf = ChfEvaluator::from_model(&self.inner, &matrix(j)?, variant(narrowband)).map_err(to_py)?;
        cdf_numeric(&grid, &chf).map_err(to_py)
    }

    /// Monte Carlo `(kappa, standard_errors)` of `x'Jx`.
    #[pyo3(signature = (j, n_samples = 1_000_000, seed = 0x7e4a_11c3))]
    fn sample_cumulants(&self, py: Python<'_>, j: Vec<Vec<f64>>, n_samples: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let j = matrix(j)?;
        let model = self.inner.clone();
        let r = py
            .detach(move || sample_quadform(&model, &j, &McConfig::new(seed, n_samples)))
            .map_err(to_py)?;
        Ok((r.cumulants.k.to_vec(), r.cumulants.se.to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("Model(dim={}, n0={})", self.inner.dim(), self.inner.n0())
    }
}

/// Stencil matrix of Ψ_p^q.
#[pyfunction]
fn kernel_matrix(p: usize, q: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(kernel(p, q)?.matrix()))
}

/// Tone response of Ψ_p^q at `omega` rad/s for sampling interval `interval`.
#[pyfunction]
#[pyo3(signature = (p, q, omega, interval = 1.0))]
fn freq_response(p: usize, q: usize, omega: f64, interval: f64) -> PyResult<f64> {
    let k = kernel(p, q)?.with_interval(interval).map_err(to_py)?;
    Ok(tko_core::freq_response(&k, omega))
}

/// Ψ_p^q applied to `samples`; returns `(offset, output)`.
#[pyfunction]
#[pyo3(signature = (samples, p = 0, q = 1, fs = 1.0))]
fn apply_tko(samples: Vec<f64>, p: usize, q: usize, fs: f64) -> PyResult<(usize, Vec<f64>)> {
    let s = SampledSignal::new(samples, fs).map_err(to_py)?;
    let k = kernel(p, q)?.with_interval(1.0 / fs).map_err(to_py)?;
    let out = tko_core::apply_tko(&s, &k).map_err(to_py)?;
    Ok((out.offset, out.samples))
}

/// Density of the IF-squared ratio Ψ[ẋ]/Ψ[x] for the reference tone.
#[pyfunction]
fn if_ratio_pdf(p: usize, q: usize, snr_db: f64, grid: Vec<f64>) -> PyResult<Vec<f64>> {
    let spec = ToneScenario::new(snr_db).if_squared_ratio(&kernel(p, q)?).map_err(to_py)?;
    Ok(ratio_pdf_geary(&grid, &spec).map_err(to_py)?.pdf)
}

/// Energy separation; returns a dict of aligned per-sample arrays, with
/// `None` where the estimate is masked.
#[pyfunction]
#[pyo3(signature = (samples, fs = 1.0, p = 0, q = 1, threshold = 0.0))]
fn esa_demodulate<'py>(
    py: Python<'py>,
    samples: Vec<f64>,
    fs: f64,
    p: usize,
    q: usize,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = SampledSignal::new(samples, fs).map_err(to_py)?;
    let e = esa_pipeline::esa_demodulate(&s, &kernel(p, q)?, threshold).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("offset", e.offset)?;
    d.set_item("omega_sq", e.omega_sq)?;
    d.set_item("amp_sq", e.amp_sq)?;
    d.set_item("valid", e.valid_mask)?;
    d.set_item("psi_x", e.psi_x)?;
    d.set_item("psi_dx", e.psi_dx)?;
    Ok(d)
}

/// Extrema of the two-tone signal on `[t0, t1]` with their negativity checks,
/// as `(t, quadratic, negative, psi)` tuples.
#[pyfunction]
fn two_tone_extrema(a: f64, f: f64, theta0: f64, t0: f64, t1: f64) -> PyResult<Vec<(f64, f64, bool, f64)>> {
    let s = TwoToneSignal::new(a, f, theta0).map_err(to_py)?;
    s.find_extrema(t0, t1)
        .map_err(to_py)?
        .into_iter()
        .map(|e| {
            let c = s.negativity_check(e.t).map_err(to_py)?;
            Ok((c.t, c.quadratic, c.quadratic_negative, c.psi))
        })
        .collect()
}

#[pymodule]
fn tko_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(kernel_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(freq_response, m)?)?;
    m.add_function(wrap_pyfunction!(apply_tko, m)?)?;
    m.add_function(wrap_pyfunction!(if_ratio_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(esa_demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(two_tone_extrema, m)?)?;
    Ok(())
}
