//! Python bindings: float formats, precision policies, the transceiver
//! kernels, bound evaluators and the sweep harness.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fpmimo::bounds::{self, BlockCounting, MMax, UpsilonMethod};
use fpmimo::fp::{self, RangeMode, RoundingMode};
use fpmimo::harness::{self, ExperimentConfig};
use fpmimo::linalg::{self, ComplexMatrix, ComplexVector, PrecisionPolicy, TriangularSide};
use fpmimo::transceiver;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "FloatFormat", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyFloatFormat(fp::FloatFormat);

#[pymethods]
impl PyFloatFormat {
    /// A preset name (`bfloat16`, `fp16`, `fp32`, `fp64`) or `custom(t,emin,emax)`.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        fp::FloatFormat::from_name(name)
            .map(PyFloatFormat)
            .map_err(err)
    }

    #[staticmethod]
    fn custom(significand_bits: u32, exponent_min: i32, exponent_max: i32) -> PyResult<Self> {
        fp::FloatFormat::custom(significand_bits, exponent_min, exponent_max)
            .map(PyFloatFormat)
            .map_err(err)
    }

    #[getter]
    fn significand_bits(&self) -> u32 {
        self.0.significand_bits()
    }

    #[getter]
    fn exponent_min(&self) -> i32 {
        self.0.exponent_min()
    }

    #[getter]
    fn exponent_max(&self) -> i32 {
        self.0.exponent_max()
    }

    #[getter]
    fn unit_roundoff(&self) -> f64 {
        self.0.unit_roundoff()
    }

    #[getter]
    fn min_normal(&self) -> f64 {
        self.0.min_normal()
    }

    #[getter]
    fn max_finite(&self) -> f64 {
        self.0.max_finite()
    }

    /// Rounds `x` into this format.
    #[pyo3(signature = (x, stochastic_seed=None, strict=false))]
    fn round(&self, x: f64, stochastic_seed: Option<u64>, strict: bool) -> f64 {
        fp::Rounder::new(self.0, rounding(stochastic_seed), range(strict)).round(x)
    }

    fn __repr__(&self) -> String {
        format!("FloatFormat('{}')", self.0)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

fn rounding(seed: Option<u64>) -> RoundingMode {
    seed.map_or(RoundingMode::NearestEven, |seed| RoundingMode::Stochastic {
        seed,
    })
}

fn range(strict: bool) -> RangeMode {
    if strict {
        RangeMode::StrictIeee
    } else {
        RangeMode::Unbounded
    }
}

#[pyclass(name = "Policy", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyPolicy(PrecisionPolicy);

#[pymethods]
impl PyPolicy {
    /// Everything in one format.
    #[staticmethod]
    #[pyo3(signature = (format, stochastic_seed=None, strict=false))]
    fn uniform(format: PyFloatFormat, stochastic_seed: Option<u64>, strict: bool) -> Self {
        PyPolicy(
            PrecisionPolicy::uniform(format.0)
                .with_rounding(rounding(stochastic_seed))
                .with_range(range(strict)),
        )
    }

    /// Blocked inner products: blocks of `block_size` terms in `low`, block sums combined in `high`.
    #[staticmethod]
    #[pyo3(signature = (low, high, block_size, stochastic_seed=None, strict=false))]
    fn mixed(
        low: PyFloatFormat,
        high: PyFloatFormat,
        block_size: usize,
        stochastic_seed: Option<u64>,
        strict: bool,
    ) -> PyResult<Self> {
        let p = PrecisionPolicy::mixed(low.0, high.0, block_size)
            .with_rounding(rounding(stochastic_seed))
            .with_range(range(strict));
        p.validate().map_err(err)?;
        Ok(PyPolicy(p))
    }

    #[staticmethod]
    fn full() -> Self {
        PyPolicy(PrecisionPolicy::full())
    }

    #[getter]
    fn working_format(&self) -> PyFloatFormat {
        PyFloatFormat(self.0.working_format())
    }

    #[getter]
    fn block_size(&self) -> Option<usize> {
        self.0.block_size()
    }

    fn __repr__(&self) -> String {
        format!(
            "Policy({}, {})",
            harness::mode_label(&self.0),
            harness::format_label(&self.0)
        )
    }
}

fn vector(v: Vec<Complex64>) -> ComplexVector {
    ComplexVector::new(v)
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    ComplexMatrix::from_row_major(r, c, rows.into_iter().flatten().collect()).map_err(err)
}

fn to_rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// `aᴴb` under the policy; mixed policies use the blocked kernel.
#[pyfunction]
fn inner_product(a: Vec<Complex64>, b: Vec<Complex64>, policy: PyPolicy) -> PyResult<Complex64> {
    let mut m = policy.0.machine().map_err(err)?;
    m.dot(&vector(a), &vector(b)).map_err(err)
}

#[pyfunction]
fn matvec(a: Vec<Vec<Complex64>>, x: Vec<Complex64>, policy: PyPolicy) -> PyResult<Vec<Complex64>> {
    let mut m = policy.0.machine().map_err(err)?;
    Ok(m.matvec(&matrix(a)?, &vector(x)).map_err(err)?.into_inner())
}

#[pyfunction]
fn matmul(
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
    policy: PyPolicy,
) -> PyResult<Vec<Vec<Complex64>>> {
    let mut m = policy.0.machine().map_err(err)?;
    Ok(to_rows(&m.matmul(&matrix(a)?, &matrix(b)?).map_err(err)?))
}

/// Upper triangular `R` with `RᴴR ≈ C`.
#[pyfunction]
fn cholesky(c: Vec<Vec<Complex64>>, policy: PyPolicy) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(to_rows(
        &linalg::cholesky_fp(&matrix(c)?, &policy.0).map_err(err)?,
    ))
}

/// Solves `Rx = rhs`, or `Rᴴx = rhs` with `conjugate=True`, for upper triangular `R`.
#[pyfunction]
#[pyo3(signature = (r, rhs, policy, conjugate=false))]
fn trisolve(
    r: Vec<Vec<Complex64>>,
    rhs: Vec<Complex64>,
    policy: PyPolicy,
    conjugate: bool,
) -> PyResult<Vec<Complex64>> {
    let side = if conjugate {
        TriangularSide::LowerConjugate
    } else {
        TriangularSide::Upper
    };
    Ok(
        linalg::trisolve_fp(&matrix(r)?, &vector(rhs), side, &policy.0)
            .map_err(err)?
            .into_inner(),
    )
}

#[pyfunction]
fn mrc_combine(h: Vec<Complex64>, z: Vec<Complex64>, policy: PyPolicy) -> PyResult<Complex64> {
    transceiver::mrc_combine(&vector(h), &vector(z), &policy.0).map_err(err)
}

#[pyfunction]
fn mrt_precode(h: Vec<Complex64>, x: Complex64, policy: PyPolicy) -> PyResult<Vec<Complex64>> {
    Ok(transceiver::mrt_precode(&vector(h), x, &policy.0)
        .map_err(err)?
        .into_inner())
}

/// Zero-forcing detection through the normal equations.
#[pyfunction]
fn zf_detect(
    h: Vec<Vec<Complex64>>,
    z: Vec<Complex64>,
    policy: PyPolicy,
) -> PyResult<Vec<Complex64>> {
    Ok(
        transceiver::zf_detect_ne(&matrix(h)?, &vector(z), &policy.0)
            .map_err(err)?
            .into_inner(),
    )
}

/// Zero-forcing precoding through the normal equations, scaled by `√(M−K)`.
#[pyfunction]
fn zf_precode(
    h: Vec<Vec<Complex64>>,
    x: Vec<Complex64>,
    policy: PyPolicy,
) -> PyResult<Vec<Complex64>> {
    Ok(transceiver::zf_downlink(&matrix(h)?, vector(x), &policy.0)
        .map_err(err)?
        .s
        .into_inner())
}

#[pyfunction]
#[pyo3(signature = (n, u, lam=1.0))]
fn gamma_n(n: usize, u: f64, lam: f64) -> PyResult<f64> {
    bounds::gamma_n(n, u, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (b, n, u_low, u_high, lam=1.0))]
fn xi_bn(b: usize, n: usize, u_low: f64, u_high: f64, lam: f64) -> PyResult<f64> {
    bounds::xi_bn(b, n, u_low, u_high, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, u, lam=1.0))]
fn delta_simo(m: usize, u: f64, lam: f64) -> PyResult<f64> {
    bounds::delta_simo(m, u, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (u, lam=1.0))]
fn delta_miso(u: f64, lam: f64) -> PyResult<f64> {
    bounds::delta_miso(u, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, k, u, lam=1.0))]
fn c1_u(m: usize, k: usize, u: f64, lam: f64) -> PyResult<f64> {
    bounds::c1_u(m, k, u, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, k, u, lam=1.0))]
fn c_u(m: usize, k: usize, u: f64, lam: f64) -> PyResult<f64> {
    bounds::c_u(m, k, u, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, k, u, kappa2, lam=1.0))]
fn c_d(m: usize, k: usize, u: f64, kappa2: f64, lam: f64) -> PyResult<f64> {
    bounds::c_d(m, k, u, lam, kappa2).map_err(err)
}

/// `None` when the precision is exact.
#[pyfunction]
#[pyo3(signature = (rho, u, lam=1.0))]
fn m_max_simo(rho: f64, u: f64, lam: f64) -> PyResult<Option<u64>> {
    Ok(match bounds::m_max_simo(rho, u, lam).map_err(err)? {
        MMax::Finite(n) => Some(n),
        MMax::Unbounded => None,
    })
}

#[pyfunction]
#[pyo3(signature = (m, rho, u, lam=1.0))]
fn lb_rate_simo(m: usize, rho: f64, u: f64, lam: f64) -> PyResult<f64> {
    Ok(bounds::lb_rate_simo(m, rho, u, lam)
        .map_err(err)?
        .value_bits)
}

#[pyfunction]
#[pyo3(signature = (m, rho, u, lam=1.0))]
fn lb_rate_miso(m: usize, rho: f64, u: f64, lam: f64) -> PyResult<f64> {
    Ok(bounds::lb_rate_miso(m, rho, u, lam)
        .map_err(err)?
        .value_bits)
}

#[pyfunction]
#[pyo3(signature = (m, rho, u, lam=1.0))]
fn rate_gap(m: usize, rho: f64, u: f64, lam: f64) -> PyResult<f64> {
    Ok(bounds::rate_gap(m, rho, u, lam).map_err(err)?.value_bits)
}

/// `E{κ₂(HᴴH)²}`; `method` is `"montecarlo"` or `"quadrature"` (two users only).
#[pyfunction]
#[pyo3(signature = (m, k, method="montecarlo", samples=100_000, seed=0))]
fn upsilon(m: usize, k: usize, method: &str, samples: usize, seed: u64) -> PyResult<f64> {
    let method = match method {
        "montecarlo" => UpsilonMethod::MonteCarlo { samples, seed },
        "quadrature" => UpsilonMethod::QuadratureK2,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    bounds::upsilon(m, k, method).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, k, rho, u, upsilon_value, lam=1.0))]
fn lb_sumrate_mu_simo(
    m: usize,
    k: usize,
    rho: f64,
    u: f64,
    upsilon_value: f64,
    lam: f64,
) -> PyResult<f64> {
    Ok(bounds::lb_sumrate_mu_simo(m, k, rho, u, lam, upsilon_value)
        .map_err(err)?
        .value_bits)
}

#[pyfunction]
#[pyo3(signature = (m, k, rho, u, expected_cd_sq, lam=1.0))]
fn lb_sumrate_mu_miso(
    m: usize,
    k: usize,
    rho: f64,
    u: f64,
    expected_cd_sq: f64,
    lam: f64,
) -> PyResult<f64> {
    Ok(
        bounds::lb_sumrate_mu_miso(m, k, rho, u, lam, expected_cd_sq)
            .map_err(err)?
            .value_bits,
    )
}

/// Operation counts as a dict of `(summations, multiplications)` pairs.
#[pyfunction]
#[pyo3(signature = (m, n, p, b, g, ceiling=false))]
fn cost_model<'py>(
    py: Python<'py>,
    m: usize,
    n: usize,
    p: usize,
    b: usize,
    g: usize,
    ceiling: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let counting = if ceiling {
        BlockCounting::Ceiling
    } else {
        BlockCounting::Fractional
    };
    let c = bounds::cost_model(m, n, p, b, g, counting).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mixed", (c.mixed.summations, c.mixed.multiplications))?;
    d.set_item("low", (c.low.summations, c.low.multiplications))?;
    d.set_item("high", (c.high.summations, c.high.multiplications))?;
    d.set_item("summation_overhead", c.summation_overhead())?;
    d.set_item("total_overhead", c.total_overhead())?;
    Ok(d)
}

/// Runs a sweep from flat `key = value` config text and returns the CSV text.
#[pyfunction]
fn run_sweep(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    py.detach(|| {
        let res = harness::run_sweep(&cfg).map_err(|e| e.to_string())?;
        harness::emit_csv(&res).map_err(|e| e.to_string())
    })
    .map_err(PyValueError::new_err)
}

/// Bound violation rates per grid point as a list of dicts.
#[pyfunction]
fn verify_bounds<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let rep = py.detach(|| harness::verify_bounds(&cfg)).map_err(err)?;
    rep.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("M", r.m)?;
            d.set_item("rho_db", r.rho_db)?;
            d.set_item("probabilistic", r.probabilistic.clone())?;
            d.set_item("deterministic", r.deterministic)?;
            d.set_item("median_rel_err", r.median_rel_err)?;
            d.set_item("breakdowns", r.breakdowns)?;
            d.set_item("trials", r.trials)?;
            d.set_item("median_backward_ratio", r.median_backward_ratio)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "fpmimo")]
fn fpmimo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFloatFormat>()?;
    m.add_class::<PyPolicy>()?;
    m.add("CSV_COLUMNS", harness::COLUMNS.to_vec())?;
    m.add_function(wrap_pyfunction!(inner_product, m)?)?;
    m.add_function(wrap_pyfunction!(matvec, m)?)?;
    m.add_function(wrap_pyfunction!(matmul, m)?)?;
    m.add_function(wrap_pyfunction!(cholesky, m)?)?;
    m.add_function(wrap_pyfunction!(trisolve, m)?)?;
    m.add_function(wrap_pyfunction!(mrc_combine, m)?)?;
    m.add_function(wrap_pyfunction!(mrt_precode, m)?)?;
    m.add_function(wrap_pyfunction!(zf_detect, m)?)?;
    m.add_function(wrap_pyfunction!(zf_precode, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_n, m)?)?;
    m.add_function(wrap_pyfunction!(xi_bn, m)?)?;
    m.add_function(wrap_pyfunction!(delta_simo, m)?)?;
    m.add_function(wrap_pyfunction!(delta_miso, m)?)?;
    m.add_function(wrap_pyfunction!(c1_u, m)?)?;
    m.add_function(wrap_pyfunction!(c_u, m)?)?;
    m.add_function(wrap_pyfunction!(c_d, m)?)?;
    m.add_function(wrap_pyfunction!(m_max_simo, m)?)?;
    m.add_function(wrap_pyfunction!(lb_rate_simo, m)?)?;
    m.add_function(wrap_pyfunction!(lb_rate_miso, m)?)?;
    m.add_function(wrap_pyfunction!(rate_gap, m)?)?;
    m.add_function(wrap_pyfunction!(upsilon, m)?)?;
    m.add_function(wrap_pyfunction!(lb_sumrate_mu_simo, m)?)?;
    m.add_function(wrap_pyfunction!(lb_sumrate_mu_miso, m)?)?;
    m.add_function(wrap_pyfunction!(cost_model, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    Ok(())
}
