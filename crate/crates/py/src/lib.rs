//! Python bindings for the optomechanics toolkit.

use num_complex::Complex64;
use optomech::closed::{analytic_purity as purity_series, no_photon_rate};
use optomech::inference::{estimate_and_mse, posterior as grid_posterior, GridSpec, InferenceModel, PriorSpec};
use optomech::open::StepControl;
use optomech::statistics::{g2_grid, negativity, photon_number};
use optomech::trajectory::{read_records, replay_conditional, ClickRecord, Sampler, SamplerOptions, SamplingMode};
use optomech::{DetuningRegime, FockSpace, Parameter, State, SystemParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// System parameters in units of the total cavity decay rate.
#[pyclass(name = "SystemParams", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    delta: f64,
    omega_m: f64,
    g: f64,
    omega_drive: Complex64,
    kappa_d: f64,
    kappa_l: f64,
    gamma: f64,
    mbar: f64,
}

impl From<SystemParams> for PySystemParams {
    fn from(p: SystemParams) -> Self {
        Self {
            delta: p.delta,
            omega_m: p.omega_m,
            g: p.g,
            omega_drive: p.omega_drive,
            kappa_d: p.kappa_d,
            kappa_l: p.kappa_l,
            gamma: p.gamma,
            mbar: p.mbar,
        }
    }
}

impl PySystemParams {
    fn inner(&self) -> PyResult<SystemParams> {
        let p = SystemParams {
            delta: self.delta,
            omega_m: self.omega_m,
            g: self.g,
            omega_drive: self.omega_drive,
            kappa_d: self.kappa_d,
            kappa_l: self.kappa_l,
            gamma: self.gamma,
            mbar: self.mbar,
        };
        p.validate().map_err(err)?;
        Ok(p)
    }
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (*, delta, omega_m, g, omega_drive, kappa_d, kappa_l, gamma, mbar))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        delta: f64,
        omega_m: f64,
        g: f64,
        omega_drive: Complex64,
        kappa_d: f64,
        kappa_l: f64,
        gamma: f64,
        mbar: f64,
    ) -> PyResult<Self> {
        let p = Self { delta, omega_m, g, omega_drive, kappa_d, kappa_l, gamma, mbar };
        p.inner()?;
        Ok(p)
    }

    /// Sensing parameters with the detuning set by regime 0, 1 or 2.
    #[staticmethod]
    fn sensing(regime: u32) -> Self {
        SystemParams::sensing_preset(DetuningRegime(regime)).into()
    }

    #[staticmethod]
    fn near_linear() -> Self {
        SystemParams::near_linear_preset().into()
    }

    fn fingerprint(&self) -> PyResult<String> {
        Ok(self.inner()?.fingerprint())
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(delta={}, omega_m={}, g={}, omega_drive={}, kappa_d={}, kappa_l={}, gamma={}, mbar={})",
            self.delta, self.omega_m, self.g, self.omega_drive, self.kappa_d, self.kappa_l, self.gamma, self.mbar
        )
    }
}

/// Detection record of one trajectory.
#[pyclass(name = "ClickRecord")]
struct PyClickRecord {
    record: ClickRecord,
}

#[pymethods]
impl PyClickRecord {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        let mut records = read_records(text.as_bytes()).map_err(err)?;
        if records.len() != 1 {
            return Err(PyValueError::new_err(format!("expected one record, found {}", records.len())));
        }
        Ok(Self { record: records.remove(0) })
    }

    fn to_jsonl(&self) -> String {
        self.record.to_jsonl()
    }

    #[getter]
    fn detection_times(&self) -> Vec<f64> {
        self.record.detection_times()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.record.t_end
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.record.fingerprint.clone()
    }

    fn __len__(&self) -> usize {
        self.record.detected_count()
    }
}

fn space(dims: (usize, usize)) -> PyResult<FockSpace> {
    FockSpace::new(dims.0, dims.1).map_err(err)
}

fn vacuum_thermal(p: &SystemParams, space: FockSpace) -> PyResult<State> {
    let cav = optomech::fock::coherent_state(Complex64::new(0.0, 0.0), space.dim_cavity).0;
    let mech = optomech::fock::thermal_state(p.mbar, space.dim_mech).map_err(err)?;
    Ok(State::product(&cav, &mech))
}

fn parse_parameter(name: &str) -> PyResult<Parameter> {
    [
        Parameter::G,
        Parameter::OmegaM,
        Parameter::Delta,
        Parameter::KappaD,
        Parameter::KappaL,
        Parameter::Gamma,
        Parameter::Mbar,
    ]
    .into_iter()
    .find(|p| p.to_string() == name)
    .ok_or_else(|| PyValueError::new_err(format!("unknown parameter {name:?}")))
}

/// Samples one click record from cavity vacuum and thermal mechanics.
#[pyfunction]
#[pyo3(signature = (params, dims, t_end, seed, detector = false))]
fn sample_record(
    py: Python<'_>,
    params: &PySystemParams,
    dims: (usize, usize),
    t_end: f64,
    seed: u64,
    detector: bool,
) -> PyResult<PyClickRecord> {
    let p = params.inner()?;
    let space = space(dims)?;
    let initial = vacuum_thermal(&p, space)?;
    let mode = if detector { SamplingMode::Detector } else { SamplingMode::Full };
    let options = SamplerOptions { leakage_limit: 1.0, ..SamplerOptions::default() };
    let traj = py.detach(|| Sampler::new(&p, space, &initial, mode, options)?.sample(t_end, seed, 0, &[])).map_err(err)?;
    Ok(PyClickRecord { record: traj.record })
}

/// Conditional cavity photon number and negativity at each checkpoint of a record.
#[pyfunction]
fn replay(
    py: Python<'_>,
    record: &PyClickRecord,
    params: &PySystemParams,
    dims: (usize, usize),
    checkpoints: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = params.inner()?;
    let space = space(dims)?;
    let initial = vacuum_thermal(&p, space)?;
    py.detach(|| -> optomech::Result<(Vec<f64>, Vec<f64>)> {
        let states = replay_conditional(&record.record, &p, space, &initial, &checkpoints, StepControl::adaptive())?;
        let photons = states.iter().map(|s| photon_number(&s.density(), space)).collect();
        let neg = states.iter().map(|s| negativity(s, space).map(|n| n.value)).collect::<optomech::Result<_>>()?;
        Ok((photons, neg))
    })
    .map_err(err)
}

/// `g²(t₁, t₁ + τ)` of the ensemble for each `t₁` (rows) and delay `τ` (columns).
#[pyfunction]
#[pyo3(signature = (params, dims, t1, delays, workers = 1))]
fn g2(
    py: Python<'_>,
    params: &PySystemParams,
    dims: (usize, usize),
    t1: Vec<f64>,
    delays: Vec<f64>,
    workers: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let p = params.inner()?;
    let space = space(dims)?;
    let initial = vacuum_thermal(&p, space)?;
    py.detach(|| g2_grid(&t1, &delays, &p, space, &initial, StepControl::adaptive(), workers)).map_err(err)
}

/// Grid posterior of one parameter at each checkpoint.
///
/// Returns `(nodes, densities, means, variances)`; `densities[k]` belongs to `checkpoints[k]`.
#[pyfunction]
#[pyo3(signature = (record, params, dims, parameter, prior, nodes, checkpoints, workers = 1))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn posterior(
    py: Python<'_>,
    record: &PyClickRecord,
    params: &PySystemParams,
    dims: (usize, usize),
    parameter: &str,
    prior: (f64, f64, f64),
    nodes: usize,
    checkpoints: Vec<f64>,
    workers: usize,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let p = params.inner()?;
    let space = space(dims)?;
    let parameter = parse_parameter(parameter)?;
    let prior = PriorSpec { theta_min: prior.0, theta_max: prior.1, alpha: prior.2 };
    let grid = GridSpec { lo: prior.theta_min, hi: prior.theta_max, nodes };
    let model = InferenceModel::new(p, parameter, space, vacuum_thermal(&p, space)?);
    let posts = py.detach(|| grid_posterior(&record.record, &grid, &prior, &checkpoints, &model, workers)).map_err(err)?;
    let series = estimate_and_mse(&posts, None);
    let densities = posts.iter().map(|g| g.log_posterior.iter().map(|l| l.exp()).collect()).collect();
    let variances = posts.iter().map(|g| g.variance()).collect();
    Ok((grid.points().map_err(err)?, densities, series.estimate, variances))
}

/// Purity of the reduced cavity state for `|α⟩|β⟩` under closed evolution, with optional
/// no-photon damping `kappa_d`; times in units of the mechanical period over 2π.
#[pyfunction]
#[pyo3(signature = (alpha, beta, k, delta_over_omega, t, kappa_d_over_omega = 0.0))]
fn analytic_purity(alpha: Complex64, beta: Complex64, k: f64, delta_over_omega: f64, t: f64, kappa_d_over_omega: f64) -> PyResult<f64> {
    purity_series(alpha, beta, k, no_photon_rate(delta_over_omega, kappa_d_over_omega, 1.0), t, None).map_err(err)
}

#[pymodule]
fn pyoptomech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyClickRecord>()?;
    m.add_function(wrap_pyfunction!(sample_record, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(g2, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_purity, m)?)?;
    Ok(())
}
