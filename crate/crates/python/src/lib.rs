use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::refprior::asymptotics;
use ::refprior::estimators::{self, Budgets};
use ::refprior::fdiv::{parse_divergence, DivergenceGen};
use ::refprior::model::{self, Interval, StatModel};
use ::refprior::prior::{self, Prior};
use ::refprior::quadrature::QuadSpec;
use ::refprior::refsearch;

create_exception!(
    refprior,
    RefpriorError,
    PyValueError,
    "Numerical or domain error from the core library."
);

fn err(e: ::refprior::Error) -> PyErr {
    RefpriorError::new_err(format!("{}: {}", e.name(), e))
}

fn json(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| RefpriorError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(frozen, name = "Model", module = "refprior")]
struct PyModel {
    inner: Arc<dyn StatModel>,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: model::parse_model(id).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.param_space().dim()
    }

    fn fisher_information(&self, theta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = model::fisher_information(self.inner.as_ref(), &theta).map_err(err)?;
        Ok((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }

    fn log_lik(&self, ys: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
        model::log_lik_k(self.inner.as_ref(), &ys, &theta).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.inner.id())
    }
}

#[pyclass(frozen, name = "Prior", module = "refprior")]
struct PyPrior {
    inner: Prior,
}

#[pymethods]
impl PyPrior {
    #[new]
    #[pyo3(signature = (id, model, compact = None))]
    fn new(id: &str, model: &PyModel, compact: Option<Vec<Interval>>) -> PyResult<Self> {
        let inner = prior::parse_prior(id, model.inner.clone(), compact.as_deref()).map_err(err)?;
        Ok(PyPrior { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (model, compact = None))]
    fn jeffreys(model: &PyModel, compact: Option<Vec<Interval>>) -> PyResult<Self> {
        let inner = prior::jeffreys_prior(model.inner.clone(), compact.as_deref()).map_err(err)?;
        Ok(PyPrior { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn beta_params(&self) -> Option<(f64, f64)> {
        self.inner.beta_params()
    }

    #[getter]
    fn log_norm_const(&self) -> Option<f64> {
        self.inner.log_norm_const()
    }

    fn density(&self, theta: Vec<f64>) -> f64 {
        self.inner.density(&theta)
    }

    fn log_density(&self, theta: Vec<f64>) -> f64 {
        self.inner.log_density(&theta)
    }

    #[pyo3(signature = (n, seed, index = 0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64, index: u64) -> PyResult<Vec<Vec<f64>>> {
        py.detach(|| self.inner.sample_n(n, seed, index)).map_err(err)
    }

    fn entropy(&self) -> PyResult<f64> {
        prior::prior_entropy(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Prior('{}')", self.inner.id())
    }
}

#[pyclass(frozen, name = "Divergence", module = "refprior")]
struct PyDivergence {
    inner: DivergenceGen,
}

#[pymethods]
impl PyDivergence {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PyDivergence {
            inner: parse_divergence(id).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    /// `{coeff, exponent, shift, linear}` or `None` for KL.
    #[getter]
    fn profile(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json(py, &self.inner.profile())
    }

    fn __call__(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    fn shift_corrected(&self) -> PyDivergence {
        PyDivergence {
            inner: self.inner.shift_corrected(),
        }
    }

    fn __repr__(&self) -> String {
        format!("Divergence('{}')", self.inner.name())
    }
}

#[pyfunction]
fn c_beta(d: usize, beta: f64) -> PyResult<f64> {
    asymptotics::c_beta(d, beta).map_err(err)
}

/// Exact MI for count models. Returns the estimate as a dict.
#[pyfunction]
fn mi_exact(py: Python<'_>, model: &PyModel, prior: &PyPrior, k: usize, div: &PyDivergence) -> PyResult<Py<PyAny>> {
    let est = py
        .detach(|| estimators::exact_count_mi(model.inner.as_ref(), &prior.inner, k, &div.inner, QuadSpec::singular()))
        .map_err(err)?;
    json(py, &est)
}

#[pyfunction]
#[pyo3(signature = (model, prior, k, div, seed, n_theta = 400, n_y = 400))]
#[allow(clippy::too_many_arguments)]
fn mi_mc(
    py: Python<'_>,
    model: &PyModel,
    prior: &PyPrior,
    k: usize,
    div: &PyDivergence,
    seed: u64,
    n_theta: usize,
    n_y: usize,
) -> PyResult<Py<PyAny>> {
    let budgets = Budgets {
        n_theta,
        n_y,
        ..Budgets::default()
    };
    let est = py
        .detach(|| estimators::mc_mutual_information(model.inner.as_ref(), &prior.inner, k, &div.inner, budgets, seed))
        .map_err(err)?;
    json(py, &est)
}

#[pyfunction]
fn limit_functional(py: Python<'_>, model: &PyModel, prior: &PyPrior, div: &PyDivergence) -> PyResult<f64> {
    py.detach(|| asymptotics::limit_functional(model.inner.as_ref(), &prior.inner, &div.inner, QuadSpec::singular()))
        .map_err(err)
}

/// Maximize `l` over a one-parameter family such as `mean-beta:c=1.5`.
/// The result dict gains `selected_prior`, the entropy-chosen member.
#[pyfunction]
#[pyo3(signature = (family, model, div, grid_n = 2048, refine_tol = 1e-8, param_range = None, compact = None))]
#[allow(clippy::too_many_arguments)]
fn search(
    py: Python<'_>,
    family: &str,
    model: &PyModel,
    div: &PyDivergence,
    grid_n: usize,
    refine_tol: f64,
    param_range: Option<Interval>,
    compact: Option<Interval>,
) -> PyResult<Py<PyAny>> {
    let fam = refsearch::parse_family(family, param_range, compact).map_err(err)?;
    let (result, chosen) = py
        .detach(|| {
            let r = refsearch::maximize_over_family(
                &fam,
                model.inner.as_ref(),
                &div.inner,
                grid_n,
                refine_tol,
                QuadSpec::singular(),
            )?;
            let p = refsearch::select_by_entropy(&r, &fam)?;
            Ok((r, p))
        })
        .map_err(err)?;
    let out = json(py, &result)?;
    out.bind(py).set_item("selected_prior", chosen.id())?;
    Ok(out)
}

#[pymodule]
fn refprior(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RefpriorError", m.py().get_type::<RefpriorError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPrior>()?;
    m.add_class::<PyDivergence>()?;
    m.add_function(wrap_pyfunction!(c_beta, m)?)?;
    m.add_function(wrap_pyfunction!(mi_exact, m)?)?;
    m.add_function(wrap_pyfunction!(mi_mc, m)?)?;
    m.add_function(wrap_pyfunction!(limit_functional, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    Ok(())
}
