//! Python bindings. Reports come back as plain dicts (the same shape as the
//! CLI's JSON); polynomials, bundles and maps are wrapped as classes.

use graphbreak::attractor::{
    default_starts_1d, graph_test, graph_transform_1d as transform_1d, iterate_cloud, TransformStatus,
    DEFAULT_TOL_GRAPH, GOLDEN_ROTATION,
};
use graphbreak::herman::{self, CriterionMode};
use graphbreak::maps::{self, CandidateGraph, MapParams1D, PerturbedMap1D};
use graphbreak::perturb::{self, PerturbationBundle};
use graphbreak::{GridFn, TrigPoly};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(graphbreak, NumericalError, PyException, "A computation failed numerically.");

fn err(e: graphbreak::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    if e.is_validation() {
        PyValueError::new_err(msg)
    } else {
        NumericalError::new_err(msg)
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

#[pyclass(name = "TrigPoly", module = "graphbreak", frozen)]
struct PyTrigPoly {
    inner: TrigPoly,
}

#[pymethods]
impl PyTrigPoly {
    #[staticmethod]
    fn zero(dim: usize) -> Self {
        PyTrigPoly {
            inner: TrigPoly::zero(dim),
        }
    }

    #[staticmethod]
    fn cos_mode(freq: Vec<i32>, amp: f64) -> Self {
        PyTrigPoly {
            inner: TrigPoly::cos_mode(&freq, amp),
        }
    }

    #[staticmethod]
    fn sin_mode(freq: Vec<i32>, amp: f64) -> Self {
        PyTrigPoly {
            inner: TrigPoly::sin_mode(&freq, amp),
        }
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyTrigPoly { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(self.inner.eval(&x))
    }

    fn derivative(&self, multi_index: Vec<u32>) -> PyResult<Self> {
        if multi_index.len() != self.inner.dim() {
            return Err(err(graphbreak::Error::WrongDimension {
                expected: self.inner.dim(),
                got: multi_index.len(),
            }));
        }
        Ok(PyTrigPoly {
            inner: self.inner.derivative(&multi_index),
        })
    }

    /// Values on the uniform grid with `resolution` points per axis, row-major.
    fn sample(&self, resolution: usize) -> Vec<f64> {
        self.inner.to_grid(resolution).values
    }

    fn __add__(&self, other: &PyTrigPoly) -> Self {
        PyTrigPoly {
            inner: &self.inner + &other.inner,
        }
    }

    fn __repr__(&self) -> String {
        format!("TrigPoly(dim={}, degree={}, modes={})", self.inner.dim(), self.inner.degree(), self.inner.num_modes())
    }
}

impl PyTrigPoly {
    fn check_point(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(err(graphbreak::Error::WrongDimension {
                expected: self.inner.dim(),
                got: x.len(),
            }));
        }
        Ok(())
    }
}

#[pyclass(name = "PerturbationBundle", module = "graphbreak", frozen)]
struct PyBundle {
    inner: PerturbationBundle,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    #[pyo3(signature = (lambda_, n, eps = 0.1, dim = 1))]
    fn construct(py: Python<'_>, lambda_: f64, n: usize, eps: f64, dim: usize) -> PyResult<Self> {
        let inner = py.detach(|| perturb::construct_bundle(lambda_, n, eps, dim)).map_err(err)?;
        Ok(PyBundle { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyBundle { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn n_theoretical(&self) -> usize {
        self.inner.n_theoretical
    }

    #[getter]
    fn n_achieved(&self) -> usize {
        self.inner.n_achieved
    }

    #[getter]
    fn extrema<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.extrema)
    }

    #[getter]
    fn norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.norms)
    }

    #[getter]
    fn potential(&self) -> PyTrigPoly {
        PyTrigPoly {
            inner: self.inner.potential.clone(),
        }
    }

    #[getter]
    fn derivative(&self) -> PyTrigPoly {
        PyTrigPoly {
            inner: self.inner.derivative.clone(),
        }
    }

    /// Destruction criterion on this bundle's extrema.
    fn criterion<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let b = &self.inner;
        let (m, big_m) = (b.extrema.min.min(0.0), b.extrema.max.max(0.0));
        let r = if b.d == 1 {
            herman::destruction_verdict_1d(b.lambda, m, big_m)
        } else {
            herman::destruction_verdict_dd(b.lambda, m, big_m, CriterionMode::ExactDD)
        }
        .map_err(err)?;
        to_dict(py, &r)
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!(
            "PerturbationBundle(d={}, n={}, lambda={}, N={}, min={:.6}, max={:.6})",
            b.d, b.n, b.lambda, b.n_achieved, b.extrema.min, b.extrema.max
        )
    }
}

/// One-dimensional dissipative twist map with an optional potential.
#[pyclass(name = "Map1D", module = "graphbreak", frozen)]
struct PyMap1D {
    inner: PerturbedMap1D,
}

#[pymethods]
impl PyMap1D {
    #[new]
    #[pyo3(signature = (lambda_, alpha1 = GOLDEN_ROTATION, alpha2 = 0.0, potential = None))]
    fn new(lambda_: f64, alpha1: f64, alpha2: f64, potential: Option<PyRef<'_, PyTrigPoly>>) -> PyResult<Self> {
        let p = MapParams1D::new(lambda_, alpha1, alpha2).map_err(err)?;
        let inner = PerturbedMap1D::new(p, potential.as_ref().map(|q| &q.inner)).map_err(err)?;
        Ok(PyMap1D { inner })
    }

    fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        self.inner.forward((x, y))
    }

    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        self.inner.inverse((x, y))
    }

    /// `steps + 1` states starting at `(x, y)`.
    fn orbit(&self, x: f64, y: f64, steps: usize) -> Vec<(f64, f64)> {
        let mut s = (x, y);
        let mut out = Vec::with_capacity(steps + 1);
        out.push(s);
        for _ in 0..steps {
            s = self.inner.forward(s);
            out.push(s);
        }
        out
    }

    #[pyo3(signature = (x, y, h = 1e-4))]
    fn jacobian_det(&self, x: f64, y: f64, h: f64) -> f64 {
        self.inner.jacobian((x, y), h).determinant()
    }
}

#[pyfunction]
#[pyo3(name = "delta_of_lambda")]
fn py_delta_of_lambda(lambda_: f64) -> PyResult<f64> {
    perturb::delta_of_lambda(lambda_).map_err(err)
}

#[pyfunction]
#[pyo3(name = "standard_map_potential")]
fn py_standard_map_potential(k: f64) -> PyTrigPoly {
    PyTrigPoly {
        inner: maps::standard_map_potential(k),
    }
}

#[pyfunction]
fn destruction_verdict_1d<'py>(py: Python<'py>, lambda_: f64, m: f64, big_m: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &herman::destruction_verdict_1d(lambda_, m, big_m).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (lambda_, m, big_m, mode = "exact"))]
fn destruction_verdict_dd<'py>(
    py: Python<'py>,
    lambda_: f64,
    m: f64,
    big_m: f64,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "exact" => CriterionMode::ExactDD,
        "paper" => CriterionMode::PaperAsymptoticDD,
        other => return Err(PyValueError::new_err(format!("mode must be 'exact' or 'paper', got {other:?}"))),
    };
    to_dict(py, &herman::destruction_verdict_dd(lambda_, m, big_m, mode).map_err(err)?)
}

#[pyfunction]
fn standard_map_threshold<'py>(py: Python<'py>, lambda_: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &herman::standard_map_threshold(lambda_).map_err(err)?)
}

fn potential_or_zero(potential: Option<PyRef<'_, PyTrigPoly>>) -> TrigPoly {
    potential.map_or_else(|| TrigPoly::zero(1), |p| p.inner.clone())
}

/// Graph transform from the flat graph at the invariant height.
#[pyfunction]
#[pyo3(signature = (lambda_, potential = None, alpha1 = GOLDEN_ROTATION, alpha2 = 0.0, resolution = 128, max_iter = 500, tol = 1e-12))]
#[allow(clippy::too_many_arguments)]
fn graph_transform_1d<'py>(
    py: Python<'py>,
    lambda_: f64,
    potential: Option<PyRef<'py, PyTrigPoly>>,
    alpha1: f64,
    alpha2: f64,
    resolution: usize,
    max_iter: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let phi = potential_or_zero(potential);
    let out = py
        .detach(|| {
            let p = MapParams1D::new(lambda_, alpha1, alpha2)?;
            let psi0 = CandidateGraph::constant(resolution, &[p.invariant_height()])?;
            transform_1d(&p, Some(&phi), &psi0, max_iter, tol)
        })
        .map_err(err)?;
    to_dict(py, &out)
}

/// Herman residuals of the graph sampled as `values` on a uniform grid.
#[pyfunction]
#[pyo3(signature = (lambda_, values, potential = None, alpha1 = GOLDEN_ROTATION, alpha2 = 0.0))]
fn herman_residual_1d<'py>(
    py: Python<'py>,
    lambda_: f64,
    values: Vec<f64>,
    potential: Option<PyRef<'py, PyTrigPoly>>,
    alpha1: f64,
    alpha2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let phi = potential_or_zero(potential);
    let p = MapParams1D::new(lambda_, alpha1, alpha2).map_err(err)?;
    let graph = CandidateGraph::from_components(vec![GridFn {
        dim: 1,
        resolution: values.len(),
        values,
    }])
    .map_err(err)?;
    to_dict(py, &herman::herman_residual_1d(&p, &phi, &graph).map_err(err)?)
}

/// Attractor cloud, graph test and graph-transform fold check in one go.
#[pyfunction]
#[pyo3(signature = (lambda_, potential = None, alpha1 = GOLDEN_ROTATION, alpha2 = 0.0, transient = 500, keep = 200, starts = 64, bins = 4096, tol_graph = DEFAULT_TOL_GRAPH))]
#[allow(clippy::too_many_arguments)]
fn simulate_1d<'py>(
    py: Python<'py>,
    lambda_: f64,
    potential: Option<PyRef<'py, PyTrigPoly>>,
    alpha1: f64,
    alpha2: f64,
    transient: usize,
    keep: usize,
    starts: usize,
    bins: usize,
    tol_graph: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let phi = potential_or_zero(potential);
    let report = py
        .detach(|| {
            let p = MapParams1D::new(lambda_, alpha1, alpha2)?;
            let map = PerturbedMap1D::new(p, Some(&phi))?;
            let y_star = p.invariant_height();
            let cloud = iterate_cloud(&map, &default_starts_1d(y_star, starts), transient, keep)?;
            let mut report = graph_test(&cloud, bins, tol_graph)?;
            report.transient = transient;
            report.keep = keep;
            report.parameters.lambda = lambda_;
            report.parameters.alpha = Some([alpha1, alpha2]);
            report.parameters.perturbation = "python".into();
            let res = (4 * phi.degree()).next_power_of_two().max(128);
            let psi0 = CandidateGraph::constant(res, &[y_star])?;
            let fold = match transform_1d(&p, Some(&phi), &psi0, 500, 1e-12) {
                Ok(t) => t.status == TransformStatus::FoldDetected,
                Err(graphbreak::Error::MaxIterExceeded { .. }) => false,
                Err(e) => return Err(e),
            };
            report.set_fold_detected(fold);
            Ok(report)
        })
        .map_err(err)?;
    to_dict(py, &report)
}

#[pymodule(name = "graphbreak")]
fn graphbreak_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("GOLDEN_ROTATION", GOLDEN_ROTATION)?;
    m.add_class::<PyTrigPoly>()?;
    m.add_class::<PyBundle>()?;
    m.add_class::<PyMap1D>()?;
    m.add_function(wrap_pyfunction!(py_delta_of_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(py_standard_map_potential, m)?)?;
    m.add_function(wrap_pyfunction!(destruction_verdict_1d, m)?)?;
    m.add_function(wrap_pyfunction!(destruction_verdict_dd, m)?)?;
    m.add_function(wrap_pyfunction!(standard_map_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(graph_transform_1d, m)?)?;
    m.add_function(wrap_pyfunction!(herman_residual_1d, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_1d, m)?)?;
    Ok(())
}
