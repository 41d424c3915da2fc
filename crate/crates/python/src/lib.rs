//! Python bindings: plans, profiles, the Λ-system retention model and fits.

use cpt_litho::atom::{self, LambdaParams};
use cpt_litho::fields::{self, ExposurePlan, StandingWaveFactor};
use cpt_litho::fit::{self, FitOptions, FitProblem, FitResult};
use cpt_litho::pattern::{self, Grid1D, Grid2D};
use cpt_litho::{fourier, targets, Complex64, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

pyo3::create_exception!(cpt_litho_py, NumericError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    if e.is_numeric() {
        NumericError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for cpt_litho::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "StandingWaveFactor", module = "cpt_litho_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyFactor(StandingWaveFactor);

#[pymethods]
impl PyFactor {
    #[new]
    #[pyo3(signature = (r, theta = 0.0))]
    fn new(r: Complex64, theta: f64) -> PyResult<Self> {
        Ok(Self(StandingWaveFactor::new(r, theta).py()?))
    }

    #[getter]
    fn r(&self) -> Complex64 {
        self.0.r()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta()
    }

    fn density(&self, zeta: f64) -> f64 {
        self.0.density(zeta)
    }

    fn __repr__(&self) -> String {
        format!("StandingWaveFactor(r={}, theta={})", self.0.r(), self.0.theta())
    }
}

#[pyclass(name = "ExposurePlan", module = "cpt_litho_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPlan(ExposurePlan);

#[pymethods]
impl PyPlan {
    #[new]
    fn new(factors: Vec<PyFactor>) -> PyResult<Self> {
        Ok(Self(ExposurePlan::new(factors.into_iter().map(|f| f.0).collect()).py()?))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(ExposurePlan::from_json(text).py()?))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    fn factors(&self) -> Vec<PyFactor> {
        self.0.factors().iter().map(|f| PyFactor(*f)).collect()
    }

    fn density(&self, zeta: f64) -> f64 {
        pattern::product_density(&self.0, zeta)
    }

    fn density_2d(&self, zeta_x: f64, zeta_y: f64) -> f64 {
        self.0.density_2d(zeta_x, zeta_y)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("ExposurePlan({} factors)", self.0.len())
    }
}

#[pyclass(name = "FitResult", module = "cpt_litho_py", frozen)]
struct PyFitResult(FitResult);

#[pymethods]
impl PyFitResult {
    #[getter]
    fn plan(&self) -> PyPlan {
        PyPlan(self.0.plan.clone())
    }

    #[getter]
    fn distance(&self) -> f64 {
        self.0.distance
    }

    #[getter]
    fn peak_density(&self) -> f64 {
        self.0.peak_density
    }

    /// `(start, converged, iterations, distance)` per start.
    #[getter]
    fn starts(&self) -> Vec<(usize, bool, usize, f64)> {
        self.0
            .starts
            .iter()
            .map(|s| (s.start, s.converged, s.iterations, s.distance))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }
}

fn grid(zeta: Vec<f64>) -> PyResult<Grid1D> {
    Grid1D::new(zeta).py()
}

#[pyfunction]
fn uniform_phase_plan(n: usize) -> PyResult<PyPlan> {
    Ok(PyPlan(fields::uniform_phase_plan(n).py()?))
}

#[pyfunction]
fn point_plan(n: usize) -> PyResult<PyPlan> {
    Ok(PyPlan(fields::point_plan(n).py()?))
}

#[pyfunction]
fn product_profile(plan: &PyPlan, zeta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(pattern::product_profile(&plan.0, &grid(zeta)?).py()?.values)
}

#[pyfunction]
fn closed_form_uniform(n: usize, zeta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(pattern::closed_form_uniform(n, &grid(zeta)?).py()?.values)
}

#[pyfunction]
fn point_spread(n: usize, zeta: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(pattern::point_spread(n, &grid(zeta)?).py()?.values)
}

/// Retention profile with `Γ1 + Γ2 = 1`, `Γ2/Γ1 = branch`.
#[pyfunction]
#[pyo3(signature = (plan, zeta, gamma_d, branch = 1.0, intensity = 1.0))]
fn decoherent_product_profile(
    plan: &PyPlan,
    zeta: Vec<f64>,
    gamma_d: f64,
    branch: f64,
    intensity: f64,
) -> PyResult<Vec<f64>> {
    let p = LambdaParams::with_branching(branch, gamma_d).py()?;
    Ok(pattern::decoherent_product_profile(&plan.0, &p, intensity, &grid(zeta)?)
        .py()?
        .values)
}

#[pyfunction]
fn unit_step_retention(s: Complex64, r: Complex64, gamma1: f64, gamma2: f64, gamma_d: f64) -> PyResult<f64> {
    let p = LambdaParams::rates(gamma1, gamma2, gamma_d).py()?;
    atom::unit_step_retention(s, r, &p).py()
}

/// Steady-state density matrix as rows, basis order `(g1, g2, e1)`.
#[pyfunction]
fn steady_state(
    omega_s: Complex64,
    omega_r: Complex64,
    gamma1: f64,
    gamma2: f64,
    gamma_d: f64,
) -> PyResult<Vec<Vec<Complex64>>> {
    let p = LambdaParams::new(omega_s, omega_r, gamma1, gamma2, gamma_d).py()?;
    let rho = atom::steady_state(&p).py()?;
    Ok((0..3).map(|i| (0..3).map(|j| rho.get(i, j)).collect()).collect())
}

/// Coefficients `c_μ`, `μ = 0..n`, of the product profile.
#[pyfunction]
fn product_coefficients(plan: &PyPlan) -> PyResult<Vec<Complex64>> {
    Ok(fourier::product_coefficients(&plan.0).py()?.coeffs().to_vec())
}

#[pyfunction]
fn fringe_period(wavelength: f64, n: usize) -> PyResult<f64> {
    pattern::fringe_period(wavelength, n).py()
}

/// `(a, b, phase, r_amplitude)` for one factor.
#[pyfunction]
fn realize_factor(factor: &PyFactor) -> PyResult<(f64, f64, f64, f64)> {
    let b = fields::realize_factor(&factor.0).py()?;
    Ok((b.a, b.b, b.phase, b.r_amplitude))
}

#[pyfunction]
#[pyo3(signature = (zeta, duty = 0.5, center = 0.0))]
fn square_target(zeta: f64, duty: f64, center: f64) -> f64 {
    targets::square_target(zeta, duty, center)
}

#[pyfunction]
fn c_shape_target(zeta_x: f64, zeta_y: f64) -> f64 {
    targets::c_shape_target(zeta_x, zeta_y)
}

#[pyfunction]
fn sample_grid_1d() -> Vec<f64> {
    fit::sample_grid_1d().zeta().to_vec()
}

#[pyfunction]
fn normalized_distance(target: Vec<f64>, trial: Vec<f64>) -> PyResult<f64> {
    fit::normalized_distance(&target, &trial).py()
}

fn options(defaults: FitOptions, starts: Option<usize>, seed: u64, max_iterations: Option<usize>) -> FitOptions {
    FitOptions {
        starts: starts.unwrap_or(defaults.starts),
        seed,
        max_iterations: max_iterations.unwrap_or(defaults.max_iterations),
        ..defaults
    }
}

/// Runs without the GIL; raises `NumericError` when no start converges.
#[pyfunction]
#[pyo3(signature = (target, zeta, n, starts = None, seed = 0, max_iterations = None))]
fn fit_1d(
    py: Python<'_>,
    target: Vec<f64>,
    zeta: Vec<f64>,
    n: usize,
    starts: Option<usize>,
    seed: u64,
    max_iterations: Option<usize>,
) -> PyResult<PyFitResult> {
    let opts = options(FitOptions::default_1d(), starts, seed, max_iterations);
    let problem = FitProblem::new_1d(target, grid(zeta)?, n, opts).py()?;
    Ok(PyFitResult(py.detach(|| fit::fit_1d(&problem)).py()?))
}

/// `target` is flattened with `y` outer, `x` inner.
#[pyfunction]
#[pyo3(signature = (target, zeta_x, zeta_y, angles, steps, starts = None, seed = 0, max_iterations = None))]
#[allow(clippy::too_many_arguments)]
fn fit_2d(
    py: Python<'_>,
    target: Vec<f64>,
    zeta_x: Vec<f64>,
    zeta_y: Vec<f64>,
    angles: Vec<f64>,
    steps: usize,
    starts: Option<usize>,
    seed: u64,
    max_iterations: Option<usize>,
) -> PyResult<PyFitResult> {
    let opts = options(FitOptions::default_2d(), starts, seed, max_iterations);
    let g = Grid2D::new(zeta_x, zeta_y).py()?;
    let problem = FitProblem::new_2d(target, g, angles, steps, opts).py()?;
    Ok(PyFitResult(py.detach(|| fit::fit_2d(&problem)).py()?))
}

#[pymodule]
fn cpt_litho_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_class::<PyFactor>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(uniform_phase_plan, m)?)?;
    m.add_function(wrap_pyfunction!(point_plan, m)?)?;
    m.add_function(wrap_pyfunction!(product_profile, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(point_spread, m)?)?;
    m.add_function(wrap_pyfunction!(decoherent_product_profile, m)?)?;
    m.add_function(wrap_pyfunction!(unit_step_retention, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(product_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(fringe_period, m)?)?;
    m.add_function(wrap_pyfunction!(realize_factor, m)?)?;
    m.add_function(wrap_pyfunction!(square_target, m)?)?;
    m.add_function(wrap_pyfunction!(c_shape_target, m)?)?;
    m.add_function(wrap_pyfunction!(sample_grid_1d, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_1d, m)?)?;
    m.add_function(wrap_pyfunction!(fit_2d, m)?)?;
    Ok(())
}
