//! Python bindings: exact construction, mollified norms, FPK assemblies,
//! weak-form checks, fractional norms and the pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;
use serde::Serialize;

use ornstein_fpk::fpk::{self, FPKAssembly, Normalization, StageSource, TilePlan};
use ornstein_fpk::grid::GridField;
use ornstein_fpk::mollify::{self, SmoothedStep};
use ornstein_fpk::ornstein::{self, ConstructionState};
use ornstein_fpk::pipeline::{self, PipelineConfig};
use ornstein_fpk::rational::{format_rational, parse_rational};
use ornstein_fpk::{spectral, weakform, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifacts(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Domain(_)
        | Error::UndefinedLine { .. }
        | Error::Parameter(_)
        | Error::Resolution(_)
        | Error::Parse(_)
        | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for ornstein_fpk::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serializes through JSON into plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn rational(s: &str) -> PyResult<ornstein_fpk::Rational> {
    parse_rational(s).py()
}

fn normalization(name: &str) -> PyResult<Normalization> {
    match name {
        "sup" => Ok(Normalization::Sup),
        "strict" => Ok(Normalization::Strict),
        _ => Err(PyValueError::new_err(format!("unknown normalization {name:?}"))),
    }
}

/// One stage of the exact step-function sequence.
#[pyclass(name = "ConstructionState", module = "ornstein_fpk")]
#[derive(Clone)]
struct PyState {
    inner: ConstructionState,
}

#[pymethods]
impl PyState {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn delta(&self) -> String {
        format_rational(&self.inner.delta)
    }

    #[getter]
    fn alpha_history(&self) -> Vec<String> {
        self.inner.alpha_history.iter().map(format_rational).collect()
    }

    #[getter]
    fn cell_count(&self) -> usize {
        self.inner.p.cell_count()
    }

    /// Exact L1 norm as a rational string.
    fn l1_norm(&self) -> String {
        format_rational(&self.inner.p.l1_norm())
    }

    /// Value at an interior point; coordinates are rational strings.
    fn value(&self, x: &str, y: &str) -> PyResult<String> {
        self.inner.p.eval(&rational(x)?, &rational(y)?).py().map(|v| format_rational(&v))
    }

    /// Exact property report as a dict with rational strings.
    fn properties(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &ornstein::verify_properties(&self.inner).py()?)
    }

    fn refine(&self, alpha: &str) -> PyResult<PyState> {
        Ok(PyState { inner: ornstein::refine_step(&self.inner, &rational(alpha)?).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyState> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyState { inner })
    }

    fn __repr__(&self) -> String {
        format!("ConstructionState(n={}, delta={}, cells={})", self.n(), self.delta(), self.cell_count())
    }
}

#[pyfunction]
fn build_p1(delta: &str) -> PyResult<PyState> {
    Ok(PyState { inner: ornstein::build_p1(&rational(delta)?).py()? })
}

#[pyfunction]
fn construct_sequence(delta: &str, stages: usize) -> PyResult<Vec<PyState>> {
    let states = ornstein::construct_sequence(&rational(delta)?, stages).py()?;
    Ok(states.into_iter().map(|inner| PyState { inner }).collect())
}

/// A node-centred field on a uniform grid.
#[pyclass(name = "GridField", module = "ornstein_fpk")]
#[derive(Clone)]
struct PyGrid {
    inner: GridField,
}

#[pymethods]
impl PyGrid {
    /// `values[j][i]` sits at `(origin_x + i*h, origin_y + j*h)`.
    #[new]
    fn new(origin_x: f64, origin_y: f64, h: f64, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let ny = values.len();
        let nx = values.first().map_or(0, Vec::len);
        if values.iter().any(|row| row.len() != nx) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        let mut inner = GridField::zeros(origin_x, origin_y, h, nx, ny).py()?;
        inner.values_mut().copy_from_slice(&values.concat());
        Ok(Self { inner })
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.ny(), self.inner.nx())
    }

    #[getter]
    fn origin(&self) -> (f64, f64) {
        self.inner.origin()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.inner.ny()).map(|j| self.inner.row(j).to_vec()).collect()
    }

    fn integral(&self) -> f64 {
        self.inner.integral()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyGrid> {
        Ok(PyGrid { inner: GridField::load(&path).py()? })
    }
}

/// A stage function convolved with the bump kernel in x and then y.
#[pyclass(name = "SmoothedStep", module = "ornstein_fpk")]
struct PySmoothed {
    inner: SmoothedStep,
}

#[pymethods]
impl PySmoothed {
    #[new]
    fn new(state: &PyState, epsilon: f64) -> PyResult<Self> {
        Ok(Self { inner: SmoothedStep::new(&state.inner.p, epsilon).py()? })
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn q(&self, x: f64, y: f64) -> f64 {
        self.inner.q(x, y)
    }

    fn g(&self, x: f64, y: f64) -> f64 {
        self.inner.g(x, y)
    }

    /// The five derivative norms of the double antiderivative and their ratio.
    fn norm_report(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.norm_report().py()?)
    }

    fn sample_q(&self, h: f64) -> PyResult<PyGrid> {
        let template = self.inner.default_grid(h).py()?;
        Ok(PyGrid { inner: self.inner.sample_q_on(&template) })
    }
}

/// Automatic mollifier width; the target defaults to the exact step ratio.
#[pyfunction]
#[pyo3(signature = (state, target_ratio=None))]
fn select_epsilon(py: Python<'_>, state: &PyState, target_ratio: Option<f64>) -> PyResult<PyObject> {
    let target = match target_ratio {
        Some(t) => t,
        None => ornstein_fpk::rational::to_f64(&ornstein::verify_properties(&state.inner).py()?.norm_ratio),
    };
    to_py(py, &mollify::select_epsilon(&state.inner.p, target).py()?)
}

/// Density, drift and flux fields for a tiled FPK example.
#[pyclass(name = "Assembly", module = "ornstein_fpk")]
struct PyAssembly {
    inner: FPKAssembly,
}

#[pymethods]
impl PyAssembly {
    #[getter]
    fn rho(&self) -> PyGrid {
        PyGrid { inner: self.inner.rho.clone() }
    }

    #[getter]
    fn b_x(&self) -> PyGrid {
        PyGrid { inner: self.inner.b_x.clone() }
    }

    #[getter]
    fn b_y(&self) -> PyGrid {
        PyGrid { inner: self.inner.b_y.clone() }
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn flux_l1(&self) -> f64 {
        self.inner.flux_l1()
    }

    fn recipe(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.recipe)
    }

    /// Weak-form residuals over the standard basis, with an order estimate when
    /// the same assembly at twice the spacing is given.
    #[pyo3(signature = (coarse=None))]
    fn residuals(&self, py: Python<'_>, coarse: Option<&PyAssembly>) -> PyResult<PyObject> {
        let basis = weakform::assembly_basis(&self.inner);
        let mut report = weakform::assembly_residuals(&self.inner, &basis).py()?;
        if let Some(c) = coarse {
            report = weakform::with_order(report, &weakform::assembly_residuals(&c.inner, &basis).py()?);
        }
        to_py(py, &report)
    }

    /// `(∫|∇ρ/ρ|²ρ, ∫|b|²ρ)`; needs a strictly positive density.
    fn loggrad_check(&self) -> PyResult<(f64, f64)> {
        weakform::l2_loggrad_check(&self.inner.rho, &self.inner.b_x, &self.inner.b_y).py()
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).py()
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<PyAssembly> {
        Ok(PyAssembly { inner: FPKAssembly::load(&dir).py()? })
    }
}

/// `mode` is "disjoint", "overlapping" or "gaussian".
#[pyfunction]
#[pyo3(signature = (mode, states, h, tiles=1, normalization="sup", window=6.0))]
fn assemble(mode: &str, states: Vec<PyState>, h: f64, tiles: usize, normalization: &str, window: f64) -> PyResult<PyAssembly> {
    let norm = self::normalization(normalization)?;
    let sources: Vec<StageSource> = states.iter().map(|s| StageSource::prepare(&s.inner)).collect::<Result<_, _>>().py()?;
    let inner = match mode {
        "disjoint" => fpk::assemble_disjoint(&TilePlan::disjoint(tiles).py()?, &sources, h, norm).py()?,
        "overlapping" => fpk::assemble_overlapping(&TilePlan::overlapping(tiles).py()?, &sources, h, norm).py()?,
        "gaussian" => {
            let w = fpk::assemble_disjoint(&TilePlan::disjoint(1).py()?, &sources, h, norm).py()?;
            fpk::gaussian_variant(&w.rho, &w.v_x, &w.v_y, window).py()?
        }
        _ => return Err(PyValueError::new_err(format!("unknown mode {mode:?}"))),
    };
    Ok(PyAssembly { inner })
}

#[pyfunction]
fn frac_norm(rho: &PyGrid, r: f64, alpha: f64) -> PyResult<f64> {
    spectral::frac_norm(&rho.inner, r, alpha).py()
}

/// Norms over alpha = 0, 0.05, ..., 1 unless `alphas` is given.
#[pyfunction]
#[pyo3(signature = (rho, r, alphas=None))]
fn threshold_sweep(py: Python<'_>, rho: &PyGrid, r: f64, alphas: Option<Vec<f64>>) -> PyResult<PyObject> {
    let alphas = alphas.unwrap_or_else(spectral::default_alphas);
    to_py(py, &spectral::threshold_sweep(&rho.inner, r, &alphas).py()?)
}

/// Runs the whole pipeline from `key = value` text and returns the manifest.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config: &str) -> PyResult<PyObject> {
    let config = PipelineConfig::parse(config).py()?;
    let manifest = py.allow_threads(|| pipeline::run_pipeline(&config)).py()?;
    to_py(py, &manifest)
}

#[pyfunction]
fn export_plots(py: Python<'_>, dir: PathBuf) -> PyResult<Py<PyList>> {
    let files = pipeline::export_plots(&dir).py()?;
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    Ok(PyList::new_bound(py, names).unbind())
}

#[pymodule]
#[pyo3(name = "ornstein_fpk")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PySmoothed>()?;
    m.add_class::<PyAssembly>()?;
    m.add_function(wrap_pyfunction!(build_p1, m)?)?;
    m.add_function(wrap_pyfunction!(construct_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(select_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(frac_norm, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(export_plots, m)?)?;
    Ok(())
}
