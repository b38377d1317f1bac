//! Python bindings: run configs, integration, constraint mining and
//! verification, plus the linear-algebra and library helpers.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use solcon::miner::{find_constraints_on_grid, MineError};
use solcon::nullspace::DenseMatrix;
use solcon::report::render_text;

create_exception!(solcon_py, SolconError, PyException);
create_exception!(solcon_py, NoConstraintsError, SolconError);

fn err(e: impl std::fmt::Display) -> PyErr {
    SolconError::new_err(e.to_string())
}

fn mine_err(e: MineError) -> PyErr {
    if e.is_no_constraints() {
        NoConstraintsError::new_err(solcon::report::NO_CONNECTIONS)
    } else {
        err(e)
    }
}

/// A run configuration: system, initial data, grid, library, tolerances.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
pub struct PyRunConfig {
    inner: solcon::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: solcon::RunConfig::from_json(text).map_err(err)?,
        })
    }

    /// One of the built-in models, `"enzyme"` or `"glycolytic"`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        solcon::models::builtin(name)
            .map(|inner| PyRunConfig { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown model `{}`", name)))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables.clone()
    }

    #[getter]
    fn equations(&self) -> Vec<String> {
        self.inner.equations.clone()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    #[setter]
    fn set_t_end(&mut self, t: f64) {
        self.inner.t_end = t;
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[setter]
    fn set_m(&mut self, m: usize) {
        self.inner.m = m;
    }

    #[getter]
    fn powers(&self) -> Vec<u32> {
        self.inner.library.powers().to_vec()
    }

    #[setter]
    fn set_powers(&mut self, powers: Vec<u32>) -> PyResult<()> {
        let unary = self.inner.library.unary().to_vec();
        self.inner.library = solcon::LibrarySpec::new(powers, unary).map_err(err)?;
        Ok(())
    }

    /// Initial states: the fixed one, or `count` samples drawn with `seed`.
    #[pyo3(signature = (count = 1, seed = None))]
    fn initial_states(&self, count: usize, seed: Option<u64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.initial_states(count, seed).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(name={:?}, variables={:?}, T={}, m={}, library={})",
            self.inner.name.as_deref().unwrap_or(""),
            self.inner.variables,
            self.inner.t_end,
            self.inner.m,
            self.inner.library.describe()
        )
    }
}

/// Mined constraint space with provenance.
#[pyclass(name = "ConstraintReport", from_py_object)]
#[derive(Clone)]
pub struct PyConstraintReport {
    inner: solcon::ConstraintReport,
}

#[pymethods]
impl PyConstraintReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyConstraintReport {
            inner: serde_json::from_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("report serializes")
    }

    /// The classic text printout.
    fn to_text(&self) -> String {
        render_text(&self.inner)
    }

    /// Library term labels such as `X1^1*X2^0`.
    #[getter]
    fn terms(&self) -> Vec<String> {
        let vars = self.inner.variables();
        self.inner
            .terms
            .iter()
            .map(|t| solcon::term_to_string(t, vars))
            .collect()
    }

    #[getter]
    fn surviving(&self) -> Vec<usize> {
        self.inner.surviving.clone()
    }

    #[getter]
    fn pivot_indices(&self) -> Vec<usize> {
        self.inner.general.pivot_indices.clone()
    }

    #[getter]
    fn free_indices(&self) -> Vec<usize> {
        self.inner.general.free_indices.clone()
    }

    /// `[(basic, [(free, coefficient), ...]), ...]` with original 0-based indices.
    #[getter]
    fn general_solution(&self) -> Vec<(usize, Vec<(usize, f64)>)> {
        self.inner
            .general
            .expressions
            .iter()
            .map(|e| {
                (
                    e.basic,
                    e.terms.iter().map(|t| (t.free, t.coefficient)).collect(),
                )
            })
            .collect()
    }

    #[getter]
    fn basis_vectors(&self) -> Vec<Vec<f64>> {
        self.inner.basis_vectors.clone()
    }

    /// `(max_abs, relative)` residual per basis vector.
    #[getter]
    fn residuals(&self) -> Vec<(f64, f64)> {
        self.inner
            .residuals
            .iter()
            .map(|r| (r.max_abs, r.relative))
            .collect()
    }

    fn passes(&self) -> bool {
        self.inner.passes()
    }

    fn __repr__(&self) -> String {
        format!(
            "ConstraintReport(terms={}, basic={}, free={})",
            self.inner.terms.len(),
            self.inner.general.pivot_indices.len(),
            self.inner.general.free_indices.len()
        )
    }
}

fn problem_for(
    config: &PyRunConfig,
    initial: Option<Vec<f64>>,
    seed: Option<u64>,
) -> PyResult<solcon::IvpProblem> {
    let x0 = match initial {
        Some(x0) => x0,
        None => config.inner.initial_states(1, seed).map_err(err)?.remove(0),
    };
    config.inner.problem(x0).map_err(err)
}

/// Integrates the config's system; returns `(times, states)` with one state
/// row per grid time.
#[pyfunction]
#[pyo3(signature = (config, initial = None, seed = None))]
fn integrate(
    config: &PyRunConfig,
    initial: Option<Vec<f64>>,
    seed: Option<u64>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let problem = problem_for(config, initial, seed)?;
    let grid = solcon::integrate(&problem, &config.inner.integrator).map_err(err)?;
    let states = (0..grid.len()).map(|j| grid.row(j)).collect();
    Ok((grid.times, states))
}

/// Runs the whole pipeline. Raises `NoConstraintsError` when the library
/// admits no constraint.
#[pyfunction]
#[pyo3(signature = (config, initial = None, seed = None))]
fn find_constraints(
    config: &PyRunConfig,
    initial: Option<Vec<f64>>,
    seed: Option<u64>,
) -> PyResult<PyConstraintReport> {
    let problem = problem_for(config, initial, seed)?;
    let cfg = &config.inner;
    let grid = solcon::integrate(&problem, &cfg.integrator).map_err(err)?;
    let mut inner = find_constraints_on_grid(&problem, &grid, &cfg.library, &cfg.miner_config())
        .map_err(mine_err)?;
    inner.provenance.model = cfg.name.clone();
    Ok(PyConstraintReport { inner })
}

/// Re-integrates on a grid refined by `refine` and checks every basis
/// constraint; returns `(max_abs, relative, passed)` per vector.
#[pyfunction]
#[pyo3(signature = (report, refine = 1, tolerance = None))]
fn verify(
    report: &PyConstraintReport,
    refine: usize,
    tolerance: Option<f64>,
) -> PyResult<Vec<(f64, f64, bool)>> {
    let prov = &report.inner.provenance;
    let problem = prov.problem(refine).map_err(mine_err)?;
    let grid = solcon::integrate(&problem, &prov.config.integrator).map_err(err)?;
    let tol = tolerance.unwrap_or(prov.config.residual_tolerance);
    let checks = solcon::verify_constraints(&report.inner, &grid, tol).map_err(mine_err)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.max_abs, c.relative, c.passed))
        .collect())
}

/// Exponent tuples of length `c` summing to `k`, in library order.
#[pyfunction]
fn generate_monomial_exponents(k: u32, c: usize) -> Vec<Vec<u32>> {
    solcon::generate_monomial_exponents(k, c)
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Ok(DenseMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn from_matrix(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Tolerant reduced row echelon form: `(R, pivot_columns, tolerance_used)`.
#[pyfunction]
#[pyo3(signature = (matrix, tolerance = None))]
fn rref(
    matrix: Vec<Vec<f64>>,
    tolerance: Option<f64>,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, f64)> {
    let out = solcon::rref(&to_matrix(&matrix)?, tolerance);
    Ok((from_matrix(&out.r), out.pivot_columns, out.tolerance_used))
}

/// Orthonormal null-space basis (as rows) of a matrix via SVD.
#[pyfunction]
#[pyo3(signature = (matrix, tolerance = None))]
fn nullspace(matrix: Vec<Vec<f64>>, tolerance: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let ns = solcon::nullspace_svd(&to_matrix(&matrix)?, tolerance).map_err(err)?;
    Ok(from_matrix(&ns.basis.transpose()))
}

/// Evaluates an expression over named variables and parameters.
#[pyfunction]
#[pyo3(signature = (text, variables, values, t = 0.0))]
fn evaluate(text: &str, variables: Vec<String>, values: Vec<f64>, t: f64) -> PyResult<f64> {
    if variables.len() != values.len() {
        return Err(PyValueError::new_err(
            "variables and values differ in length",
        ));
    }
    let expr = solcon::parse_expression(text, &variables, &[]).map_err(err)?;
    let bindings = solcon::expr::Bindings {
        t,
        state: &values,
        params: &[],
    };
    expr.eval(&bindings).map_err(err)
}

#[pymodule]
fn solcon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds the module contents to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolconError", m.py().get_type::<SolconError>())?;
    m.add(
        "NoConstraintsError",
        m.py().get_type::<NoConstraintsError>(),
    )?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyConstraintReport>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(find_constraints, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(generate_monomial_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(rref, m)?)?;
    m.add_function(wrap_pyfunction!(nullspace, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
