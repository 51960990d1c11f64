//! Python bindings for `sclab`. Matrices cross the boundary as nested lists
//! of complex numbers.

use num_complex::Complex64 as C;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sclab::grid::{self, DensityOperator, GridSpec, OperatorMatrix};
use sclab::hf::{self, DiagConfig};
use sclab::phase::PhaseSpaceField;
use sclab::potential::KernelSpec;
use sclab::linalg::CMat;
use sclab::{fock, harness, ineq, potential, wigner, Error};
use std::path::Path;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Domain(_) | Error::GridMismatch(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_mat(rows: Vec<Vec<C>>) -> PyResult<CMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j]))
}

fn from_mat(m: &CMat) -> Vec<Vec<C>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Periodic 1D grid with Planck constant ħ.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, hbar, length=2.0 * std::f64::consts::PI))]
    fn new(n: usize, hbar: f64, length: f64) -> PyResult<Self> {
        GridSpec::line(n, length, hbar).map(Self).map_err(py_err)
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    #[getter]
    fn length(&self) -> f64 {
        self.0.l
    }
    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }
    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }
    fn positions(&self) -> Vec<f64> {
        self.0.axis_positions()
    }
    fn __repr__(&self) -> String {
        format!("Grid(n={}, hbar={}, length={})", self.0.n, self.0.hbar, self.0.l)
    }
}

/// Grid operator stored as its matrix.
#[pyclass(name = "Operator", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator(OperatorMatrix);

#[pymethods]
impl PyOperator {
    #[new]
    fn new(grid: &PyGrid, matrix: Vec<Vec<C>>) -> PyResult<Self> {
        OperatorMatrix::new(grid.0, to_mat(matrix)?).map(Self).map_err(py_err)
    }
    /// Normalized coherent-state density operator, h Tr = 1.
    #[staticmethod]
    fn coherent(grid: &PyGrid, x0: f64, xi0: f64) -> PyResult<Self> {
        let g = grid.0;
        let psi = wigner::coherent_state(x0, xi0, &g).map_err(py_err)?;
        Ok(Self(wigner::projector(g, &psi).map_err(py_err)?.scale(1.0 / g.h())))
    }
    /// Töplitz quantization of a Gaussian symbol.
    #[staticmethod]
    #[pyo3(signature = (grid, x0, xi0, sigma_x, sigma_xi, xi_max=3.0))]
    fn toeplitz_gaussian(grid: &PyGrid, x0: f64, xi0: f64, sigma_x: f64, sigma_xi: f64, xi_max: f64) -> PyResult<Self> {
        let g = grid.0;
        let sym = wigner::gaussian_symbol(g, wigner::toeplitz_xi(&g, xi_max), x0, xi0, sigma_x, sigma_xi).map_err(py_err)?;
        Ok(Self(wigner::toeplitz_quantize(&sym).map_err(py_err)?.into_op()))
    }
    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }
    fn matrix(&self) -> Vec<Vec<C>> {
        from_mat(&self.0.matrix)
    }
    fn schatten(&self, p: f64) -> PyResult<f64> {
        grid::schatten_norm(&self.0, p).map_err(py_err)
    }
    /// (h^d Tr|A|^p)^{1/p}.
    fn semiclassical_norm(&self, p: f64) -> PyResult<f64> {
        grid::semiclassical_norm(&self.0, p, None).map_err(py_err)
    }
    fn commutator(&self, other: &PyOperator) -> PyResult<Self> {
        self.0.commutator(&other.0).map(Self).map_err(py_err)
    }
    fn wigner(&self) -> PyResult<PyField> {
        wigner::wigner_of(&self.0).map(PyField).map_err(py_err)
    }
}

/// Phase-space function on a (x, ξ) lattice.
#[pyclass(name = "PhaseSpaceField", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField(PhaseSpaceField);

#[pymethods]
impl PyField {
    #[getter]
    fn xi(&self) -> Vec<f64> {
        self.0.xi.clone()
    }
    /// Rows indexed by x, columns by ξ.
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values.chunks(self.0.xi.len()).map(|r| r.to_vec()).collect()
    }
    fn mass(&self) -> f64 {
        self.0.mass()
    }
    fn lp_norm(&self, p: f64) -> f64 {
        self.0.lp_norm(p)
    }
    fn weyl(&self) -> PyResult<PyOperator> {
        wigner::weyl_quantize(&self.0).map(PyOperator).map_err(py_err)
    }
}

/// Pair potential with its grid samples.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel(KernelSpec);

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (grid, a, kappa=1.0, cutoff=0.0))]
    fn new(grid: &PyGrid, a: f64, kappa: f64, cutoff: f64) -> PyResult<Self> {
        KernelSpec::build(a, kappa, cutoff, grid.0).map(Self).map_err(py_err)
    }
    fn exchange(&self, rho: &PyOperator) -> PyResult<PyOperator> {
        potential::exchange_of(&rho.0, &self.0).map(PyOperator).map_err(py_err)
    }
    #[pyo3(signature = (rho, exchange=true))]
    fn hamiltonian(&self, rho: &PyOperator, exchange: bool) -> PyResult<PyOperator> {
        let d = DensityOperator::new(rho.0.clone()).map_err(py_err)?;
        potential::hf_hamiltonian(&d, &self.0, exchange).map(PyOperator).map_err(py_err)
    }
    #[pyo3(signature = (rho, exchange=true))]
    fn energy(&self, rho: &PyOperator, exchange: bool) -> PyResult<f64> {
        let d = DensityOperator::new(rho.0.clone()).map_err(py_err)?;
        potential::hf_energy(&d, &self.0, exchange).map_err(py_err)
    }
}

/// HF evolution; returns (final state, diagnostics CSV).
#[pyfunction]
#[pyo3(signature = (rho, kernel, t_final, dt, stride=1, exchange=true))]
fn hf_evolve(
    py: Python<'_>,
    rho: &PyOperator,
    kernel: &PyKernel,
    t_final: f64,
    dt: f64,
    stride: usize,
    exchange: bool,
) -> PyResult<(PyOperator, String)> {
    let d = DensityOperator::new(rho.0.clone()).map_err(py_err)?;
    let traj = py
        .detach(|| {
            let st = hf::Stepper::new(hf::HfModel::new(kernel.0.clone(), exchange));
            hf::evolve_model(&d, &st, t_final, dt, stride, &DiagConfig::light())
        })
        .map_err(py_err)?;
    if let Some(a) = &traj.aborted {
        return Err(PyRuntimeError::new_err(a.clone()));
    }
    Ok((PyOperator(traj.last().op().clone()), traj.diagnostics.to_csv()))
}

/// Cutoff pair potential K_R(r).
#[pyfunction]
fn cutoff_kernel(a: f64, kappa: f64, r: f64, cutoff: f64) -> f64 {
    potential::cutoff_value(a, kappa, r, cutoff)
}

/// Schatten p-norm of a square matrix; `p = float("inf")` for the operator norm.
#[pyfunction]
fn schatten_norm(matrix: Vec<Vec<C>>, p: f64) -> PyResult<f64> {
    grid::schatten_matrix(&to_mat(matrix)?, p).map_err(py_err)
}

/// (‖f‖_L², h^{1/2}‖ρ‖₂, mass of f) for the normalized coherent state at (x0, ξ0).
#[pyfunction]
#[pyo3(signature = (n, length, hbar, x0=0.0, xi0=0.0))]
fn coherent_wigner_norms(n: usize, length: f64, hbar: f64, x0: f64, xi0: f64) -> PyResult<(f64, f64, f64)> {
    let g = GridSpec::line(n, length, hbar).map_err(py_err)?;
    let psi = wigner::coherent_state(x0, xi0, &g).map_err(py_err)?;
    let p = wigner::projector(g, &psi).map_err(py_err)?;
    let rho = DensityOperator::new(p.scale(1.0 / g.h())).map_err(py_err)?;
    let f = wigner::wigner_transform(&rho).map_err(py_err)?;
    let hs = grid::schatten_norm(rho.op(), 2.0).map_err(py_err)?;
    Ok((f.lp_norm(2.0), g.h().sqrt() * hs, f.mass()))
}

/// One-particle density matrix of the quasi-free state built from ω.
#[pyfunction]
fn quasi_free_one_pdm(omega: Vec<Vec<C>>) -> PyResult<Vec<Vec<C>>> {
    let s = fock::gaussian_state(&to_mat(omega)?).map_err(py_err)?;
    Ok(from_mat(&fock::reduced_density_matrix(&s)))
}

/// Runs the inequality suite; one (check, trials, violations, worst_margin) per check.
#[pyfunction]
#[pyo3(signature = (seed=0, trials=None))]
fn ineq_suite(seed: u64, trials: Option<usize>) -> PyResult<Vec<(String, usize, usize, f64)>> {
    let cfg = match trials {
        Some(t) => ineq::SuiteConfig::new(seed, t),
        None => ineq::SuiteConfig::standard(seed),
    };
    let rep = ineq::run_suite(&cfg).map_err(py_err)?;
    Ok(rep.reports.into_iter().map(|r| (r.check, r.trials, r.violations, r.worst_margin)).collect())
}

/// Runs a TOML experiment config into `out`; returns (exit code, output files).
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_config(config: &str, out: Option<&str>) -> (i32, Vec<String>) {
    let r = harness::run(Path::new(config), out.map(Path::new));
    let code = harness::exit_code(&r);
    (code, r.map(|o| o.outputs).unwrap_or_default())
}

#[pymodule]
fn sclab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(hf_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(schatten_norm, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_wigner_norms, m)?)?;
    m.add_function(wrap_pyfunction!(quasi_free_one_pdm, m)?)?;
    m.add_function(wrap_pyfunction!(ineq_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
