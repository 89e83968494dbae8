//! Python bindings for `epithreshold`.

use std::path::Path;

use epithreshold::analysis::{self, SimOptions};
use epithreshold::grid::Grid;
use epithreshold::{io, ode, pde, scenario, spectral};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pyepithreshold, EpithresholdError, PyException);

fn py_err(e: epithreshold::Error) -> PyErr {
    EpithresholdError::new_err(format!("{e} (exit code {})", e.exit_code()))
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for epithreshold::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A validated scenario with every coefficient sampled on its grid.
#[pyclass(frozen, module = "pyepithreshold")]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    /// Parses scenario TOML; table paths are resolved against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn from_toml(text: &str, base_dir: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::parse_scenario_str(text, Path::new(base_dir)).py()?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::parse_scenario(Path::new(path)).py()?,
        })
    }

    /// Spatially constant model on `(0, 1)`.
    #[staticmethod]
    #[pyo3(signature = (cells, alpha, mu, s0, i0, d_s = 1.0, d_i = 1.0))]
    fn homogeneous(cells: usize, alpha: f64, mu: f64, s0: f64, i0: f64, d_s: f64, d_i: f64) -> PyResult<Self> {
        let spec = scenario::ScenarioSpec::homogeneous(cells, alpha, mu, s0, i0, d_s, d_i);
        Ok(Self {
            inner: scenario::Scenario::new(spec).py()?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        io::serialize_scenario(self.inner.spec()).py()
    }

    fn hash(&self) -> PyResult<String> {
        io::scenario_hash(self.inner.spec()).py()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.grid().cells().to_vec()
    }

    #[getter]
    fn centers(&self) -> Vec<[f64; 2]> {
        self.inner.grid().centers()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.values().to_vec()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.values().to_vec()
    }

    #[getter]
    fn s0(&self) -> Vec<f64> {
        self.inner.s0.values().to_vec()
    }

    #[getter]
    fn i0(&self) -> Vec<f64> {
        self.inner.i0.values().to_vec()
    }

    fn is_homogeneous(&self) -> bool {
        self.inner.is_homogeneous()
    }

    fn with_i0_scaled(&self, c: f64) -> Self {
        Self {
            inner: self.inner.with_i0_scaled(c),
        }
    }

    /// `(λ₁, φ)` of the threshold operator.
    fn eigen(&self, py: Python<'_>) -> PyResult<(f64, Vec<f64>)> {
        let r = py.detach(|| spectral::threshold_eigenpair(&self.inner)).py()?;
        Ok((r.lambda1, r.phi.into_values()))
    }

    fn lambda1_of_di(&self, py: Python<'_>, d_i: f64) -> PyResult<f64> {
        py.detach(|| spectral::lambda1_of_di(&self.inner, d_i)).py()
    }

    /// `(small, large)` diffusion limits of `λ₁`.
    fn diffusion_limits(&self) -> (f64, f64) {
        let l = spectral::diffusion_limits(&self.inner);
        (l.small, l.large)
    }

    #[pyo3(signature = (tol = None, with_d_star = false))]
    fn classify<'py>(&self, py: Python<'py>, tol: Option<f64>, with_d_star: bool) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| analysis::classify(&self.inner, tol, with_d_star)).py()?;
        let d = PyDict::new(py);
        d.set_item("lambda1", r.lambda1)?;
        d.set_item("classification", r.classification.as_str())?;
        d.set_item("averaged_r0", r.averaged_r0)?;
        d.set_item("averaged_classification", r.averaged_classification.as_str())?;
        d.set_item("d_star", r.d_star)?;
        d.set_item("tol", r.tol)?;
        Ok(d)
    }

    #[pyo3(signature = (d_lo = None, d_hi = None, rel_tol = None))]
    fn critical_diffusivity<'py>(
        &self,
        py: Python<'py>,
        d_lo: Option<f64>,
        d_hi: Option<f64>,
        rel_tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let n = self.inner.numerics();
        let (lo, hi, tol) = (d_lo.unwrap_or(n.d_lo), d_hi.unwrap_or(n.d_hi), rel_tol.unwrap_or(n.dstar_rel_tol));
        let r = py.detach(|| spectral::critical_diffusivity(&self.inner, lo, hi, tol)).py()?;
        let d = PyDict::new(py);
        d.set_item("d_star", r.d_star)?;
        d.set_item("lambda_at", r.lambda_at)?;
        d.set_item("bracket", r.bracket)?;
        d.set_item("evaluations", r.evaluations)?;
        Ok(d)
    }

    /// Runs the PDE to extinction and returns the final state and trace.
    #[pyo3(signature = (dt = None, t_max = None))]
    fn simulate<'py>(&self, py: Python<'py>, dt: Option<f64>, t_max: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let sc = &self.inner;
        let opts = pde::RunOptions::with_dt(
            sc,
            dt.unwrap_or_else(|| sc.default_dt()),
            t_max.unwrap_or(sc.numerics().t_max),
        );
        let r = py.detach(|| pde::run_to_extinction(sc, opts)).py()?;
        let d = PyDict::new(py);
        d.set_item("s_infinity", r.s_infinity)?;
        d.set_item("t_final", r.t_final)?;
        d.set_item("reason", r.reason.as_str())?;
        d.set_item("terminal_flatness", r.terminal_flatness)?;
        d.set_item("invariants_clean", r.invariants.clean())?;
        d.set_item("t", r.trace.iter().map(|row| row.t).collect::<Vec<_>>())?;
        d.set_item("mean_s", r.trace.iter().map(|row| row.mean_s).collect::<Vec<_>>())?;
        d.set_item("mean_i", r.trace.iter().map(|row| row.mean_i).collect::<Vec<_>>())?;
        d.set_item("s_final", r.s_final.into_values())?;
        d.set_item("i_final", r.i_final.into_values())?;
        Ok(d)
    }

    /// Rows of `(scale, S∞ PDE, S∞ averaged, gap)`.
    #[pyo3(signature = (scales, levels = 1, dt = None))]
    fn compare(&self, py: Python<'_>, scales: Vec<f64>, levels: usize, dt: Option<f64>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let mut opts = SimOptions::from_scenario(&self.inner);
        if let Some(dt) = dt {
            opts.dt = dt;
        }
        let r = py
            .detach(|| analysis::compare_models(&self.inner, &scales, opts, levels))
            .py()?;
        Ok(r.rows
            .iter()
            .map(|row| (row.scale, row.s_infinity_pde, row.s_infinity_averaged, row.gap))
            .collect())
    }

    /// Rows of `(scale, loss)` plus the floor `|λ₁| / max α` and the verdict.
    fn probe<'py>(&self, py: Python<'py>, scales: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let opts = SimOptions::from_scenario(&self.inner);
        let r = py
            .detach(|| analysis::propagation_probe(&self.inner, &scales, opts))
            .py()?;
        let d = PyDict::new(py);
        d.set_item("rows", r.rows.iter().map(|row| (row.scale, row.loss)).collect::<Vec<_>>())?;
        d.set_item("floor", r.floor)?;
        d.set_item("passed", r.passed)?;
        d.set_item("classification", r.threshold.classification.as_str())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(cells={:?})", self.inner.grid().cells())
    }
}

#[pyfunction]
fn final_size(alpha: f64, mu: f64, s0: f64, i0: f64) -> PyResult<f64> {
    ode::final_size(ode::OdeParams::new(alpha, mu).py()?, s0, i0).py()
}

#[pyfunction]
fn basic_reproduction_number(alpha: f64, mu: f64, s0: f64) -> PyResult<f64> {
    Ok(ode::basic_reproduction_number(ode::OdeParams::new(alpha, mu).py()?, s0))
}

/// RK4 trajectory: `(samples, s_infinity, invariant_drift)`.
#[pyfunction]
#[pyo3(signature = (alpha, mu, s0, i0, dt = 1e-3, t_max = 1e4))]
fn simulate_sir(
    alpha: f64,
    mu: f64,
    s0: f64,
    i0: f64,
    dt: f64,
    t_max: f64,
) -> PyResult<(Vec<(f64, f64, f64)>, f64, f64)> {
    let r = ode::simulate_sir(ode::OdeParams::new(alpha, mu).py()?, s0, i0, dt, t_max).py()?;
    Ok((r.samples, r.s_infinity, r.invariant_drift))
}

/// First nonzero Neumann eigenvalue of `−d Δ` on an interval grid.
#[pyfunction]
#[pyo3(signature = (length, cells, d = 1.0))]
fn neumann_gap(length: f64, cells: usize, d: f64) -> PyResult<f64> {
    let grid = Grid::interval(length, cells).py()?;
    Ok(spectral::neumann_gap(&grid, d).scaled)
}

#[pymodule]
fn pyepithreshold(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EpithresholdError", m.py().get_type::<EpithresholdError>())?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(final_size, m)?)?;
    m.add_function(wrap_pyfunction!(basic_reproduction_number, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_sir, m)?)?;
    m.add_function(wrap_pyfunction!(neumann_gap, m)?)?;
    Ok(())
}
