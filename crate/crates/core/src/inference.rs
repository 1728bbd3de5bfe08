//! Bayesian estimation of one system parameter from a click record on a grid of
//! candidate values.
//!
//! The likelihood of a record with detections `t₁ < t₂ < …` factorises into no-click
//! intervals and click bins: the conditional state is propagated without detection to
//! `tₙ − δ`, the click contributes `κ_d Tr(a†a σ) δ`, the state is reset with `a σ a†`
//! and restarts at `tₙ`. Every factor is accumulated as a logarithm.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, State};
use crate::model::{detuning_for_regime, DetuningRegime, Parameter, SystemParams};
use crate::open::{Generator, StepControl};
use crate::trajectory::{ClickRecord, ConditionalFilter};

/// Prior `P(θ) ∝ exp(α sin²(π(θ − θ_min)/(θ_max − θ_min))) − 1` on `[θ_min, θ_max]`,
/// normalised with `e^{α/2} I₀(α/2) − 1`. It vanishes at both ends and flattens as
/// `α → −∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub alpha: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max > self.theta_min) || !self.alpha.is_finite() || self.alpha == 0.0 {
            return Err(Error::InvalidArgument(format!("invalid prior {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.theta_min + self.theta_max)
    }
}

/// `e^{x} I₀(x) = (1/π) ∫₀^π e^{x(1 + cos φ)} dφ`. The integrand is smooth and periodic,
/// so the trapezoid rule converges geometrically.
fn scaled_bessel_i0(x: f64) -> f64 {
    let n = 2048;
    let h = std::f64::consts::PI / n as f64;
    let f = |phi: f64| (x * (1.0 + phi.cos())).exp();
    let inner: f64 = (1..n).map(|k| f(k as f64 * h)).sum();
    (inner + 0.5 * (f(0.0) + f(std::f64::consts::PI))) * h / std::f64::consts::PI
}

pub fn prior_density(theta: f64, spec: &PriorSpec) -> f64 {
    if theta <= spec.theta_min || theta >= spec.theta_max {
        return 0.0;
    }
    let s = (std::f64::consts::PI * (theta - spec.theta_min) / spec.width()).sin();
    let norm = scaled_bessel_i0(spec.alpha / 2.0) - 1.0;
    (spec.alpha * s * s).exp_m1() / norm / spec.width()
}

/// Uniform nodes over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl GridSpec {
    /// 81 nodes over the prior support.
    pub fn covering(prior: &PriorSpec) -> Self {
        Self { lo: prior.theta_min, hi: prior.theta_max, nodes: 81 }
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        if self.nodes < 3 || !(self.hi > self.lo) {
            return Err(Error::InvalidArgument(format!("invalid grid {self:?}")));
        }
        let h = (self.hi - self.lo) / (self.nodes - 1) as f64;
        Ok((0..self.nodes).map(|k| self.lo + k as f64 * h).collect())
    }
}

/// Trapezoid weights for sorted nodes.
fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { nodes[k] - nodes[k - 1] } else { 0.0 };
            let right = if k + 1 < n { nodes[k + 1] - nodes[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Prior, likelihood and normalised posterior on the grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub parameter: Parameter,
    pub time: f64,
    pub nodes: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    /// Log of the posterior density, normalised under the trapezoid rule.
    pub log_posterior: Vec<f64>,
}

impl ParameterGrid {
    /// Combines prior and likelihood and normalises.
    pub fn new(parameter: Parameter, time: f64, nodes: Vec<f64>, log_prior: Vec<f64>, log_likelihood: Vec<f64>) -> Result<Self> {
        let joint: Vec<f64> = log_prior.iter().zip(&log_likelihood).map(|(p, l)| p + l).collect();
        let peak = joint.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::DegeneratePosterior(time));
        }
        let weights = trapezoid_weights(&nodes);
        let z: f64 = joint.iter().zip(&weights).map(|(j, w)| w * (j - peak).exp()).sum();
        let log_z = peak + z.ln();
        let log_posterior = joint.iter().map(|j| j - log_z).collect();
        Ok(Self { parameter, time, nodes, log_prior, log_likelihood, log_posterior })
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_posterior.iter().map(|v| v.exp()).collect()
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = trapezoid_weights(&self.nodes);
        self.nodes.iter().zip(&w).zip(&self.log_posterior).map(|((x, w), lp)| w * lp.exp() * f(*x)).sum()
    }

    /// Posterior mean, the estimator minimising the prior-averaged MSE.
    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m))
    }

    /// Posterior mass on `[lo, hi]` under the trapezoid rule, with partial cells
    /// interpolated linearly.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let p = self.density();
        let mut mass = 0.0;
        for k in 0..self.nodes.len().saturating_sub(1) {
            let (a, b) = (self.nodes[k], self.nodes[k + 1]);
            let (l, r) = (a.max(lo), b.min(hi));
            if r <= l {
                continue;
            }
            let at = |x: f64| p[k] + (p[k + 1] - p[k]) * (x - a) / (b - a);
            mass += 0.5 * (at(l) + at(r)) * (r - l);
        }
        mass
    }
}

/// How a candidate `θ` enters the simulated system.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    pub template: SystemParams,
    pub parameter: Parameter,
    pub space: FockSpace,
    pub initial: State,
    /// Click-bin width `δ`.
    pub dt_bin: f64,
    pub control: StepControl,
    /// When set and `θ` is `g` or `ω_M`, `Δ` follows `θ` through this regime. Otherwise
    /// `Δ` keeps the template's value, as for a sensor calibrated once.
    pub detuning_coupling: Option<DetuningRegime>,
}

impl InferenceModel {
    pub fn new(template: SystemParams, parameter: Parameter, space: FockSpace, initial: State) -> Self {
        Self {
            template,
            parameter,
            space,
            initial,
            dt_bin: 0.01,
            control: StepControl::adaptive(),
            detuning_coupling: None,
        }
    }

    pub fn params_at(&self, theta: f64) -> SystemParams {
        let mut p = self.template.with(self.parameter, theta);
        if let (Some(regime), Parameter::G | Parameter::OmegaM) = (self.detuning_coupling, self.parameter) {
            p.delta = detuning_for_regime(regime, p.g, p.omega_m);
        }
        p
    }

    /// Log-likelihood of the clicks up to each checkpoint, in one pass.
    ///
    /// A click that arrives when the conditional photon number is zero makes the record
    /// impossible; the remaining checkpoints then report `−∞`.
    pub fn log_likelihood_series(&self, clicks: &[f64], theta: f64, checkpoints: &[f64]) -> Result<Vec<f64>> {
        if checkpoints.windows(2).any(|w| w[1] < w[0]) || checkpoints.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidArgument("checkpoints must be sorted and non-negative".into()));
        }
        let params = self.params_at(theta);
        let generator = Generator::no_click(&params, self.space)?;
        let mut filter = ConditionalFilter::new(&generator, self.space, &self.initial, self.control)?;
        let mut acc: f64 = 0.0;
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut pending = clicks.iter().copied().peekable();
        for &stop in checkpoints {
            while acc.is_finite() {
                let Some(t) = pending.next_if(|&t| t <= stop) else { break };
                acc += filter.advance_to((t - self.dt_bin).max(filter.time()))?;
                let rate = params.kappa_d * filter.photon_number();
                if !(rate > 0.0) || !acc.is_finite() {
                    log::warn!("click at t = {t} has zero probability for θ = {theta}");
                    acc = f64::NEG_INFINITY;
                    break;
                }
                acc += (rate * self.dt_bin).ln();
                filter.click()?;
                filter.restart_at(t);
            }
            if acc.is_finite() {
                acc += filter.advance_to(stop.max(filter.time()))?;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Log-likelihood of the whole record at `θ`.
    pub fn log_likelihood(&self, record: &ClickRecord, theta: f64) -> Result<f64> {
        Ok(self.log_likelihood_series(&record.detection_times(), theta, &[record.t_end])?[0])
    }
}

/// Posterior grids at each checkpoint. Nodes are evaluated in parallel on `workers` threads.
pub fn posterior(
    record: &ClickRecord,
    grid: &GridSpec,
    prior: &PriorSpec,
    checkpoints: &[f64],
    model: &InferenceModel,
    workers: usize,
) -> Result<Vec<ParameterGrid>> {
    prior.validate()?;
    if checkpoints.iter().any(|&t| t > record.t_end) {
        return Err(Error::InvalidArgument(format!("checkpoints beyond the record end {}", record.t_end)));
    }
    let nodes = grid.points()?;
    let clicks = record.detection_times();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    // Nodes outside the prior's support are never simulated; their log-likelihood reads 0.
    let series: Vec<Vec<f64>> = pool.install(|| {
        nodes
            .par_iter()
            .map(|&theta| {
                if prior_density(theta, prior) > 0.0 {
                    model.log_likelihood_series(&clicks, theta, checkpoints)
                } else {
                    Ok(vec![0.0; checkpoints.len()])
                }
            })
            .collect::<Result<_>>()
    })?;
    let log_prior: Vec<f64> = nodes.iter().map(|&x| prior_density(x, prior).ln()).collect();
    checkpoints
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let ll = series.iter().map(|s| s[k]).collect();
            ParameterGrid::new(model.parameter, t, nodes.clone(), log_prior.clone(), ll)
        })
        .collect()
}

/// Halves the click bin until the final posterior mean moves by less than `tol`.
/// Returns the bin width reached and the posteriors computed with it.
pub fn posterior_converged_bin(
    record: &ClickRecord,
    grid: &GridSpec,
    prior: &PriorSpec,
    checkpoints: &[f64],
    model: &InferenceModel,
    workers: usize,
    tol: f64,
    max_halvings: usize,
) -> Result<(f64, Vec<ParameterGrid>)> {
    let mut m = model.clone();
    let mut current = posterior(record, grid, prior, checkpoints, &m, workers)?;
    for _ in 0..max_halvings {
        m.dt_bin /= 2.0;
        let next = posterior(record, grid, prior, checkpoints, &m, workers)?;
        let shift = match (current.last(), next.last()) {
            (Some(a), Some(b)) => (a.mean() - b.mean()).abs(),
            _ => 0.0,
        };
        current = next;
        if shift < tol {
            return Ok((m.dt_bin, current));
        }
    }
    Err(Error::Accuracy(format!("posterior mean still moving after {max_halvings} bin halvings")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSeries {
    pub times: Vec<f64>,
    /// Posterior means.
    pub estimate: Vec<f64>,
    /// `(estimate − truth)²` when the truth is known, posterior variance otherwise.
    pub mse: Vec<f64>,
}

impl MseSeries {
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(w, "t,estimate,mse")?;
        for ((t, e), m) in self.times.iter().zip(&self.estimate).zip(&self.mse) {
            writeln!(w, "{t},{e},{m}")?;
        }
        Ok(())
    }
}

pub fn estimate_and_mse(posteriors: &[ParameterGrid], truth: Option<f64>) -> MseSeries {
    let estimate: Vec<f64> = posteriors.iter().map(|g| g.mean()).collect();
    let mse = match truth {
        Some(x) => estimate.iter().map(|e| (e - x) * (e - x)).collect(),
        None => posteriors.iter().map(|g| g.variance()).collect(),
    };
    MseSeries { times: posteriors.iter().map(|g| g.time).collect(), estimate, mse }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedMse {
    pub mean: MseSeries,
    pub per_record: Vec<MseSeries>,
}

/// Pointwise mean of the per-record MSE series.
pub fn average_mse(
    records: &[ClickRecord],
    grid: &GridSpec,
    prior: &PriorSpec,
    truth: Option<f64>,
    checkpoints: &[f64],
    model: &InferenceModel,
    workers: usize,
) -> Result<AveragedMse> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("averaging needs at least two records".into()));
    }
    if records.iter().any(|r| r.fingerprint != records[0].fingerprint) {
        return Err(Error::RecordMismatch("records come from different parameters".into()));
    }
    let per_record = records
        .iter()
        .map(|r| Ok(estimate_and_mse(&posterior(r, grid, prior, checkpoints, model, workers)?, truth)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AveragedMse { mean: mean_series(&per_record), per_record })
}

pub fn mean_series(series: &[MseSeries]) -> MseSeries {
    let n = series.len() as f64;
    let len = series[0].times.len();
    let avg = |f: &dyn Fn(&MseSeries) -> &Vec<f64>| (0..len).map(|k| series.iter().map(|s| f(s)[k]).sum::<f64>() / n).collect();
    MseSeries { times: series[0].times.clone(), estimate: avg(&|s| &s.estimate), mse: avg(&|s| &s.mse) }
}

/// Rows `t, p(node₁), p(node₂), …` with the node values as column names.
pub fn write_posterior_csv<W: Write>(
    mut w: W,
    posteriors: &[ParameterGrid],
    prior: &PriorSpec,
    grid: &GridSpec,
    record_fingerprint: &str,
) -> Result<()> {
    writeln!(
        w,
        "# prior theta_min={} theta_max={} alpha={}; grid lo={} hi={} nodes={}; record={}",
        prior.theta_min, prior.theta_max, prior.alpha, grid.lo, grid.hi, grid.nodes, record_fingerprint
    )?;
    let Some(first) = posteriors.first() else { return Ok(()) };
    let names: Vec<String> = first.nodes.iter().map(|x| x.to_string()).collect();
    writeln!(w, "t,{}", names.join(","))?;
    for g in posteriors {
        let row: Vec<String> = g.density().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", g.time, row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, thermal_state};
    use crate::linalg::c;
    use crate::open::{integrate_no_click, Channel};
    use crate::trajectory::{ClickEvent, SamplingMode};

    fn paper_prior() -> PriorSpec {
        PriorSpec { theta_min: 2.0, theta_max: 10.0, alpha: -1000.0 }
    }

    #[test]
    fn bessel_normaliser_matches_series() {
        // e^{x} I₀(x) = e^{x} Σ (x/2)^{2k} / (k!)².
        for &x in &[-3.0, -0.5, 0.2, 1.7] {
            let series: f64 = (0..40)
                .scan(1.0, |term, k| {
                    let out = *term;
                    *term *= (x / 2.0) * (x / 2.0) / ((k + 1) as f64 * (k + 1) as f64);
                    Some(out)
                })
                .sum();
            assert!((scaled_bessel_i0(x) - x.exp() * series).abs() < 1e-12);
        }
        // Large-argument asymptotics e^{−|x|}I₀(|x|) ≈ (2π|x|)^{−1/2}(1 + 1/(8|x|)).
        let x: f64 = 500.0;
        let asym = (1.0 + 1.0 / (8.0 * x)) / (2.0 * std::f64::consts::PI * x).sqrt();
        assert!((scaled_bessel_i0(-x) / asym - 1.0).abs() < 1e-5);
    }

    #[test]
    fn prior_vanishes_at_ends_and_normalises() {
        for spec in [paper_prior(), PriorSpec { theta_min: -1.0, theta_max: 3.0, alpha: -5.0 }, PriorSpec { theta_min: 0.0, theta_max: 1.0, alpha: 3.0 }] {
            assert_eq!(prior_density(spec.theta_min, &spec), 0.0);
            assert_eq!(prior_density(spec.theta_max, &spec), 0.0);
            let nodes = GridSpec { lo: spec.theta_min, hi: spec.theta_max, nodes: 20001 }.points().unwrap();
            let w = trapezoid_weights(&nodes);
            let total: f64 = nodes.iter().zip(&w).map(|(x, w)| w * prior_density(*x, &spec)).sum();
            assert!((total - 1.0).abs() < 1e-6, "{spec:?}: {total}");
            assert!(nodes.iter().all(|&x| prior_density(x, &spec) >= 0.0));
        }
        let flat = prior_density(6.0, &paper_prior());
        assert!((flat * 8.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn delta_like_and_symmetric_posteriors() {
        let nodes = GridSpec { lo: 0.0, hi: 1.0, nodes: 11 }.points().unwrap();
        let mut ll = vec![-1e4; 11];
        ll[4] = 0.0;
        let g = ParameterGrid::new(Parameter::G, 1.0, nodes.clone(), vec![0.0; 11], ll).unwrap();
        assert!((g.mean() - 0.4).abs() < 1e-12);
        assert!(g.variance() <= 0.1 * 0.1 / 12.0 + 1e-12);
        let sym: Vec<f64> = nodes.iter().map(|x| -30.0 * (x - 0.5) * (x - 0.5)).collect();
        let g = ParameterGrid::new(Parameter::G, 1.0, nodes.clone(), vec![0.0; 11], sym).unwrap();
        assert!((g.mean() - 0.5).abs() < 1e-9);
        assert!((g.mass_within(0.0, 1.0) - 1.0).abs() < 1e-9);
        let dead = ParameterGrid::new(Parameter::G, 2.0, nodes, vec![f64::NEG_INFINITY; 11], vec![0.0; 11]);
        assert!(matches!(dead, Err(Error::DegeneratePosterior(t)) if t == 2.0));
    }

    fn small_model() -> InferenceModel {
        let space = FockSpace::new(3, 4).unwrap();
        let p = SystemParams {
            delta: -0.5,
            omega_m: 1.0,
            g: 0.5,
            omega_drive: c(0.8, 0.0),
            kappa_d: 0.9,
            kappa_l: 0.1,
            gamma: 0.05,
            mbar: 0.2,
        };
        let init = State::product(&coherent_state(c(0.0, 0.0), 3).0, &thermal_state(0.2, 4).unwrap());
        InferenceModel { control: StepControl::default(), ..InferenceModel::new(p, Parameter::G, space, init) }
    }

    fn record_of(times: &[f64], t_end: f64, model: &InferenceModel) -> ClickRecord {
        ClickRecord {
            events: times.iter().map(|&t| ClickEvent { t, ch: Channel::PhotonDetected }).collect(),
            t_end,
            seed: 0,
            stream: 0,
            fingerprint: model.template.fingerprint(),
            mode: SamplingMode::Detector,
            space: model.space,
        }
    }

    #[test]
    fn empty_record_likelihood_is_no_click_probability() {
        let m = small_model();
        let ll = m.log_likelihood(&record_of(&[], 3.0, &m), 0.5).unwrap();
        let tr = integrate_no_click(&m.initial, 0.0, 3.0, &m.template, m.space, m.control, false).unwrap().trace();
        assert!((ll - tr.ln()).abs() < 1e-9);
    }

    #[test]
    fn splitting_no_click_intervals_changes_nothing() {
        let m = small_model();
        let clicks = [0.7, 1.9];
        let coarse = m.log_likelihood_series(&clicks, 0.6, &[3.0]).unwrap()[0];
        let fine = m.log_likelihood_series(&clicks, 0.6, &[0.3, 0.5, 1.2, 2.2, 2.9, 3.0]).unwrap();
        assert!((coarse - fine.last().unwrap()).abs() < 1e-9);
        assert!(fine.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn likelihood_sums_to_one_over_all_outcomes() {
        // Outcomes with up to two clicks in 40 bins over a short window on a one-photon space.
        let space = FockSpace::new(2, 2).unwrap();
        let p = SystemParams {
            delta: 0.0,
            omega_m: 1.0,
            g: 0.2,
            omega_drive: c(0.15, 0.0),
            kappa_d: 0.9,
            kappa_l: 0.1,
            gamma: 0.0,
            mbar: 0.0,
        };
        let bins = 40;
        let t_end = 2.0;
        let w = t_end / bins as f64;
        let m = InferenceModel {
            dt_bin: w,
            control: StepControl::default(),
            ..InferenceModel::new(p, Parameter::G, space, space.basis(0, 0))
        };
        let ends: Vec<f64> = (1..=bins).map(|k| k as f64 * w).collect();
        let mut total = m.log_likelihood_series(&[], 0.2, &[t_end]).unwrap()[0].exp();
        for i in 0..bins {
            total += m.log_likelihood_series(&[ends[i]], 0.2, &[t_end]).unwrap()[0].exp();
            for j in (i + 1)..bins {
                total += m.log_likelihood_series(&[ends[i], ends[j]], 0.2, &[t_end]).unwrap()[0].exp();
            }
        }
        assert!((total - 1.0).abs() < 0.02, "{total}");
    }

    #[test]
    fn posterior_starts_at_prior_and_is_normalised() {
        let m = small_model();
        let prior = PriorSpec { theta_min: 0.0, theta_max: 1.0, alpha: -20.0 };
        let grid = GridSpec { lo: 0.0, hi: 1.0, nodes: 11 };
        let rec = record_of(&[0.8, 1.5, 2.6], 3.0, &m);
        let post = posterior(&rec, &grid, &prior, &[0.0, 1.0, 3.0], &m, 2).unwrap();
        let nodes = grid.points().unwrap();
        let w = trapezoid_weights(&nodes);
        let z: f64 = nodes.iter().zip(&w).map(|(x, w)| w * prior_density(*x, &prior)).sum();
        for (k, x) in nodes.iter().enumerate() {
            assert!((post[0].density()[k] - prior_density(*x, &prior) / z).abs() < 1e-9);
        }
        for g in &post {
            let mass: f64 = g.density().iter().zip(&w).map(|(p, w)| p * w).sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
        // Bayes additivity: the posterior at T from the prior equals the update of the
        // posterior at T/2 by the likelihood of the second half.
        let second_half: Vec<f64> =
            post[2].log_likelihood.iter().zip(&post[1].log_likelihood).map(|(a, b)| a - b).collect();
        let chained = ParameterGrid::new(Parameter::G, 3.0, nodes, post[1].log_posterior.clone(), second_half).unwrap();
        for (a, b) in chained.density().iter().zip(post[2].density()) {
            assert!((a - b).abs() < 1e-8);
        }
        let single = estimate_and_mse(&post, Some(0.5));
        let avg = mean_series(&[single.clone(), single.clone()]);
        assert_eq!(avg, single);
    }

    #[test]
    fn coupled_detuning_follows_theta() {
        let mut m = small_model();
        assert_eq!(m.params_at(0.9).delta, -0.5);
        m.detuning_coupling = Some(DetuningRegime::BLOCKADE);
        assert!((m.params_at(0.9).delta + 0.81).abs() < 1e-12);
    }
}
