//! Distinguishability of nearby states and the precision bounds built on it.
//!
//! The quantum Fisher information is read off the Bures distance between states at
//! `θ ± δθ/2`, `F_Q ≈ 8(1 − √f)/δθ²`, with a step-halving check. The classical
//! counterpart uses the same construction on the number-basis populations, i.e. the
//! information of a photon/phonon number measurement on the state.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{partial_trace, FockSpace, Mode, State};
use crate::inference::{GridSpec, InferenceModel, PriorSpec, prior_density};
use crate::linalg::{hermiticity_defect, psd_sqrt, CMatrix};
use crate::open::{Generator, Integrator};
use crate::trajectory::{replay_clicks, ClickRecord};

const TRACE_TOLERANCE: f64 = 1e-6;
const HERMITICITY_TOLERANCE: f64 = 1e-8;
const CLAMP_TOLERANCE: f64 = 1e-8;

fn check_density(s: &State) -> Result<()> {
    if let State::Mixed(r) = s {
        let defect = hermiticity_defect(r);
        if defect > HERMITICITY_TOLERANCE {
            return Err(Error::NotHermitian(defect));
        }
    }
    let t = s.trace();
    if (t - 1.0).abs() > TRACE_TOLERANCE {
        return Err(Error::InvalidArgument(format!("state trace {t} is not 1")));
    }
    Ok(())
}

fn sqrt_checked(r: &CMatrix) -> Result<CMatrix> {
    let (root, clamped) = psd_sqrt(r);
    if clamped > CLAMP_TOLERANCE {
        return Err(Error::Accuracy(format!("clamping negative eigenvalues removes {clamped:e} of trace")));
    }
    Ok(root)
}

/// Uhlmann fidelity `[Tr √(√ρ₁ ρ₂ √ρ₁)]²`, evaluated as the squared trace norm of `√ρ₁ √ρ₂`.
pub fn fidelity(a: &State, b: &State) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    check_density(a)?;
    check_density(b)?;
    if a == b {
        return Ok(1.0);
    }
    let f = match (a, b) {
        (State::Pure(x), State::Pure(y)) => x.dotc(y).norm_sqr(),
        (State::Pure(x), State::Mixed(r)) | (State::Mixed(r), State::Pure(x)) => (x.adjoint() * r * x)[(0, 0)].re,
        (State::Mixed(ra), State::Mixed(rb)) => {
            let product = sqrt_checked(ra)? * sqrt_checked(rb)?;
            product.singular_values().sum().powi(2)
        }
    };
    if f > 1.0 + 1e-8 {
        return Err(Error::Accuracy(format!("fidelity {f} exceeds 1")));
    }
    Ok(f.clamp(0.0, 1.0))
}

pub fn bures_distance(a: &State, b: &State) -> Result<f64> {
    Ok((2.0 * (1.0 - fidelity(a, b)?.sqrt())).max(0.0).sqrt())
}

/// Fidelity of two population vectors, `(Σ √(pᵢ qᵢ))²`.
fn classical_fidelity(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum::<f64>().powi(2).min(1.0)
}

fn populations(s: &State) -> Vec<f64> {
    match s {
        State::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
        State::Mixed(r) => r.diagonal().iter().map(|z| z.re).collect(),
    }
}

/// Information from the fidelity of states a step `h` apart.
fn information_from_fidelity(f: f64, h: f64) -> f64 {
    8.0 * (1.0 - f.sqrt()) / (h * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QfiOptions {
    pub delta_theta: f64,
    /// Relative agreement required between steps `δθ` and `δθ/2`.
    pub tolerance: f64,
    /// Further halvings tried before giving up.
    pub max_refinements: usize,
}

impl Default for QfiOptions {
    fn default() -> Self {
        Self { delta_theta: 1e-3, tolerance: 0.01, max_refinements: 3 }
    }
}

impl QfiOptions {
    fn validate(&self) -> Result<()> {
        if !(self.delta_theta > 0.0 && self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid QFI options {self:?}")));
        }
        Ok(())
    }
}

/// Rounding noise of `8(1 − √f)/h²` for states of dimension `dim`.
fn noise_floor(h: f64, dim: usize) -> f64 {
    8.0 * 1e-14 * dim as f64 / (h * h)
}

/// Evaluates `eval(h)` at `δθ, δθ/2, …` until consecutive values agree entry by entry
/// and returns the finer value of each agreeing pair.
fn refine<F>(options: &QfiOptions, dim: usize, times: &[f64], mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    options.validate()?;
    let mut h = options.delta_theta;
    let mut coarse = eval(h)?;
    let mut settled: Vec<Option<f64>> = vec![None; coarse.len()];
    for _ in 0..=options.max_refinements {
        let fine = eval(h / 2.0)?;
        let floor = noise_floor(h / 2.0, dim);
        for (k, slot) in settled.iter_mut().enumerate() {
            let (a, b) = (coarse[k], fine[k]);
            if slot.is_none() && (a - b).abs() <= options.tolerance * a.abs().max(b.abs()) + floor {
                *slot = Some(b);
            }
        }
        if settled.iter().all(Option::is_some) {
            return Ok(settled.into_iter().flatten().collect());
        }
        coarse = fine;
        h /= 2.0;
    }
    let k = settled.iter().position(Option::is_none).expect("some entry is unsettled");
    let t = times.get(k % times.len().max(1)).copied().unwrap_or(f64::NAN);
    Err(Error::Accuracy(format!(
        "finite-difference information at t = {t} did not settle down to step {h:e} (last value {})",
        coarse[k]
    )))
}

/// Quantum Fisher information of `state_at` at `theta` from the Bures distance of the
/// states at `θ ± δθ/2`.
pub fn qfi_finite_difference<F>(theta: f64, options: &QfiOptions, state_at: F) -> Result<f64>
where
    F: Fn(f64) -> Result<State>,
{
    let dim = state_at(theta)?.dim();
    let out = refine(options, dim, &[theta], |h| {
        let f = fidelity(&state_at(theta - h / 2.0)?, &state_at(theta + h / 2.0)?)?;
        Ok(vec![information_from_fidelity(f, h)])
    })?;
    Ok(out[0])
}

/// `∫ P(θ) (∂_θ ln P)² dθ` by the trapezoid rule with central differences on `nodes`
/// uniform points. The endpoint nodes, where the density vanishes, contribute nothing.
/// The node count is doubled until the value changes by less than 0.1%; a value still
/// moving by more than 1% after four doublings is reported as divergent.
pub fn fisher_information_of_density<F>(density: F, lo: f64, hi: f64, nodes: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if nodes < 5 || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("need at least 5 nodes on a non-empty range, got {nodes} on [{lo}, {hi}]")));
    }
    let once = |n: usize| {
        let h = (hi - lo) / (n - 1) as f64;
        let p: Vec<f64> = (0..n).map(|k| density(lo + k as f64 * h)).collect();
        (1..n - 1)
            .filter(|&k| p[k] > 0.0)
            .map(|k| {
                let d = (p[k + 1] - p[k - 1]) / (2.0 * h);
                h * d * d / p[k]
            })
            .sum::<f64>()
    };
    let mut n = nodes;
    let mut value = once(n);
    let mut change = f64::INFINITY;
    for _ in 0..4 {
        n = 2 * n - 1;
        let next = once(n);
        change = (next - value).abs() / next.abs().max(f64::MIN_POSITIVE);
        value = next;
        if change < 1e-3 {
            return Ok(value);
        }
    }
    if change > 1e-2 || !value.is_finite() {
        return Err(Error::Accuracy(format!("Fisher information integral appears divergent ({value} at {n} nodes)")));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `1/F` for a number-basis measurement at a point.
    Crb,
    /// `1/F_Q` at a point.
    Qcrb,
    /// `1/(F[P] + ∫ P F)` with the number-basis information.
    VanTrees,
    /// `1/(F[P] + ∫ P F_Q)`.
    QVanTrees,
}

impl BoundKind {
    pub fn is_bayesian(self) -> bool {
        matches!(self, BoundKind::VanTrees | BoundKind::QVanTrees)
    }

    pub fn is_quantum(self) -> bool {
        matches!(self, BoundKind::Qcrb | BoundKind::QVanTrees)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Crb => "crb",
            BoundKind::Qcrb => "qcrb",
            BoundKind::VanTrees => "van_trees",
            BoundKind::QVanTrees => "q_van_trees",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSource {
    Ensemble,
    /// Conditional state along the record with this fingerprint.
    Conditional(String),
}

/// Which evolution the states come from.
#[derive(Debug, Clone, Copy)]
pub enum Evolution<'a> {
    Ensemble,
    Conditional(&'a ClickRecord),
}

#[derive(Debug, Clone, Copy)]
pub enum BoundTarget {
    Point(f64),
    Prior { prior: PriorSpec, grid: GridSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundVariant {
    pub kind: BoundKind,
    pub reduce_to_cavity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundOptions {
    pub qfi: QfiOptions,
    /// Independent repetitions `ν`; every bound is divided by it.
    pub repetitions: u32,
    /// Quadrature nodes for the prior's own information.
    pub prior_nodes: usize,
    pub workers: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { qfi: QfiOptions::default(), repetitions: 1, prior_nodes: 4001, workers: 1 }
    }
}

/// A bound on the mean-squared error along a sequence of checkpoints. Infinite values
/// mark checkpoints where the states carry no information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub times: Vec<f64>,
    pub value: Vec<f64>,
    pub kind: BoundKind,
    pub source: StateSource,
    pub reduced_to_cavity: bool,
}

impl BoundSeries {
    pub fn source_label(&self) -> String {
        let base = match &self.source {
            StateSource::Ensemble => "ensemble".to_string(),
            StateSource::Conditional(fp) => format!("conditional:{fp}"),
        };
        if self.reduced_to_cavity {
            format!("{base}+cavity")
        } else {
            base
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value,kind,source")?;
        let source = self.source_label();
        for (t, v) in self.times.iter().zip(&self.value) {
            writeln!(w, "{t},{v},{},{source}", self.kind)?;
        }
        Ok(())
    }
}

fn state_series(model: &InferenceModel, theta: f64, evolution: Evolution<'_>, checkpoints: &[f64]) -> Result<Vec<State>> {
    let params = model.params_at(theta);
    match evolution {
        Evolution::Ensemble => {
            let generator = Generator::lindblad(&params, model.space)?;
            let mut integrator = Integrator::new(&generator, model.control)?;
            let mut rho = model.initial.normalized()?.density();
            let mut t = 0.0;
            checkpoints
                .iter()
                .map(|&stop| {
                    integrator.propagate(&mut rho, stop - t)?;
                    t = stop;
                    Ok(State::Mixed(rho.clone()))
                })
                .collect()
        }
        Evolution::Conditional(record) => {
            replay_clicks(&record.detection_times(), &params, model.space, &model.initial, checkpoints, model.control)
        }
    }
}

/// Information at `theta` for each variant and checkpoint, flattened variant-major.
fn information_series(
    model: &InferenceModel,
    theta: f64,
    evolution: Evolution<'_>,
    checkpoints: &[f64],
    variants: &[BoundVariant],
    options: &QfiOptions,
) -> Result<Vec<f64>> {
    let space = model.space;
    refine(options, space.dim(), checkpoints, |h| {
        let minus = state_series(model, theta - h / 2.0, evolution, checkpoints)?;
        let plus = state_series(model, theta + h / 2.0, evolution, checkpoints)?;
        let mut out = Vec::with_capacity(variants.len() * checkpoints.len());
        for v in variants {
            for (a, b) in minus.iter().zip(&plus) {
                out.push(pair_information(a, b, h, v, space)?);
            }
        }
        Ok(out)
    })
}

fn pair_information(a: &State, b: &State, h: f64, variant: &BoundVariant, space: FockSpace) -> Result<f64> {
    let (a, b) = if variant.reduce_to_cavity {
        (partial_trace(a, Mode::Cavity, space)?, partial_trace(b, Mode::Cavity, space)?)
    } else {
        (a.clone(), b.clone())
    };
    let f = if variant.kind.is_quantum() {
        fidelity(&a, &b)?
    } else {
        check_density(&a)?;
        check_density(&b)?;
        classical_fidelity(&populations(&a), &populations(&b))
    };
    Ok(information_from_fidelity(f, h))
}

fn reciprocal(information: f64, repetitions: u32) -> f64 {
    if information > 0.0 {
        1.0 / (repetitions as f64 * information)
    } else {
        f64::INFINITY
    }
}

/// `1/(ν (F[P] + ∫ P F))` with the prior-weighted trapezoid average of `information`
/// on `nodes`.
pub fn van_trees_bound(prior_information: f64, prior: &PriorSpec, nodes: &[f64], information: &[f64], repetitions: u32) -> f64 {
    let weights: Vec<f64> = trapezoid(nodes).iter().zip(nodes).map(|(w, &x)| w * prior_density(x, prior)).collect();
    let z: f64 = weights.iter().sum();
    let average: f64 = weights.iter().zip(information).map(|(w, f)| w * f).sum::<f64>() / z;
    reciprocal(prior_information + average, repetitions)
}

fn trapezoid(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { nodes[k] - nodes[k - 1] } else { 0.0 };
            let right = if k + 1 < n { nodes[k + 1] - nodes[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Several bounds from one set of state evolutions. Point kinds need
/// [`BoundTarget::Point`], van Trees kinds [`BoundTarget::Prior`].
pub fn bounds_series_many(
    variants: &[BoundVariant],
    model: &InferenceModel,
    target: &BoundTarget,
    evolution: Evolution<'_>,
    checkpoints: &[f64],
    options: &BoundOptions,
) -> Result<Vec<BoundSeries>> {
    if variants.is_empty() {
        return Err(Error::Empty("bound variants"));
    }
    if options.repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let bayesian = matches!(target, BoundTarget::Prior { .. });
    if let Some(v) = variants.iter().find(|v| v.kind.is_bayesian() != bayesian) {
        return Err(Error::InvalidArgument(format!("bound {} does not match the target {target:?}", v.kind)));
    }
    if checkpoints.windows(2).any(|w| w[1] < w[0]) || checkpoints.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("checkpoints must be sorted and non-negative".into()));
    }
    let source = match evolution {
        Evolution::Ensemble => StateSource::Ensemble,
        Evolution::Conditional(record) => {
            record.validate()?;
            if record.space != model.space {
                return Err(Error::RecordMismatch(format!("record space {:?} differs from {:?}", record.space, model.space)));
            }
            if checkpoints.last().is_some_and(|&t| t > record.t_end) {
                return Err(Error::InvalidArgument(format!("checkpoints beyond the record end {}", record.t_end)));
            }
            StateSource::Conditional(record.fingerprint.clone())
        }
    };
    let n_t = checkpoints.len();
    let values: Vec<Vec<f64>> = match target {
        BoundTarget::Point(theta) => {
            let info = information_series(model, *theta, evolution, checkpoints, variants, &options.qfi)?;
            (0..variants.len())
                .map(|v| info[v * n_t..(v + 1) * n_t].iter().map(|&f| reciprocal(f, options.repetitions)).collect())
                .collect()
        }
        BoundTarget::Prior { prior, grid } => {
            prior.validate()?;
            let nodes = grid.points()?;
            let prior_info = fisher_information_of_density(|x| prior_density(x, prior), prior.theta_min, prior.theta_max, options.prior_nodes)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
            // Nodes with zero prior weight add nothing to the average.
            let per_node: Vec<Vec<f64>> = pool.install(|| {
                nodes
                    .par_iter()
                    .map(|&theta| {
                        if prior_density(theta, prior) > 0.0 {
                            information_series(model, theta, evolution, checkpoints, variants, &options.qfi)
                        } else {
                            Ok(vec![0.0; variants.len() * n_t])
                        }
                    })
                    .collect::<Result<_>>()
            })?;
            (0..variants.len())
                .map(|v| {
                    (0..n_t)
                        .map(|k| {
                            let info: Vec<f64> = per_node.iter().map(|s| s[v * n_t + k]).collect();
                            van_trees_bound(prior_info, prior, &nodes, &info, options.repetitions)
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(variants
        .iter()
        .zip(values)
        .map(|(v, value)| BoundSeries {
            times: checkpoints.to_vec(),
            value,
            kind: v.kind,
            source: source.clone(),
            reduced_to_cavity: v.reduce_to_cavity,
        })
        .collect())
}

pub fn bounds_series(
    kind: BoundKind,
    reduce_to_cavity: bool,
    model: &InferenceModel,
    target: &BoundTarget,
    evolution: Evolution<'_>,
    checkpoints: &[f64],
    options: &BoundOptions,
) -> Result<BoundSeries> {
    let variant = BoundVariant { kind, reduce_to_cavity };
    Ok(bounds_series_many(&[variant], model, target, evolution, checkpoints, options)?.remove(0))
}
