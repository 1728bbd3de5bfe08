//! Stochastic click records and conditional replay.
//!
//! Two unravellings are sampled. `Full` follows a pure state under every jump channel
//! (detected and lost photons, phonon emission and absorption); `Detector` follows the
//! conditional density that an observer with a single photodetector would hold, and
//! only records detected photons.
//!
//! Waiting times are drawn by inverse transform: a uniform `u` is drawn, the state is
//! propagated unnormalised until its weight (norm² or trace) falls below `u`, and the
//! crossing is located by halving the step down to the requested time resolution.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)` and stream set to the
//! trajectory index, so every trajectory is reproducible on its own.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, State};
use crate::linalg::{expm, hermitian_eigen, trace, CMatrix, CVector, C64, I};
use crate::model::SystemParams;
use crate::open::{Channel, Generator, Integrator, Shift, StepControl};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Full,
    Detector,
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::Full => "full",
            SamplingMode::Detector => "detector",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickEvent {
    pub t: f64,
    pub ch: Channel,
}

/// Jump times and channels observed on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    pub events: Vec<ClickEvent>,
    pub t_end: f64,
    pub seed: u64,
    /// Trajectory index within the ensemble drawn from `seed`.
    pub stream: u64,
    pub fingerprint: String,
    pub mode: SamplingMode,
    pub space: FockSpace,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordHeader {
    format_version: u32,
    seed: u64,
    stream: u64,
    fingerprint: String,
    mode: SamplingMode,
    t_end: f64,
    dim_cavity: usize,
    dim_mech: usize,
    events: usize,
}

impl ClickRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidRecord(format!("t_end = {}", self.t_end)));
        }
        let mut last = f64::NEG_INFINITY;
        for (k, e) in self.events.iter().enumerate() {
            if !(e.t >= 0.0 && e.t <= self.t_end) {
                return Err(Error::InvalidRecord(format!("event {k} at t = {} outside [0, {}]", e.t, self.t_end)));
            }
            if e.t <= last {
                return Err(Error::InvalidRecord(format!("event {k} at t = {} is not after {last}", e.t)));
            }
            if self.mode == SamplingMode::Detector && e.ch != Channel::PhotonDetected {
                return Err(Error::InvalidRecord(format!("detector record holds a {} event", e.ch.tag())));
            }
            last = e.t;
        }
        Ok(())
    }

    /// Times of the detected photons, the only events visible to the observer.
    pub fn detection_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| e.ch == Channel::PhotonDetected).map(|e| e.t).collect()
    }

    pub fn detected_count(&self) -> usize {
        self.events.iter().filter(|e| e.ch == Channel::PhotonDetected).count()
    }

    /// The record restricted to `[0, t]`.
    pub fn truncated(&self, t: f64) -> ClickRecord {
        ClickRecord {
            events: self.events.iter().copied().filter(|e| e.t <= t).collect(),
            t_end: t.min(self.t_end),
            ..self.clone()
        }
    }

    /// Header line followed by one line per event.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = RecordHeader {
            format_version: FORMAT_VERSION,
            seed: self.seed,
            stream: self.stream,
            fingerprint: self.fingerprint.clone(),
            mode: self.mode,
            t_end: self.t_end,
            dim_cavity: self.space.dim_cavity,
            dim_mech: self.space.dim_mech,
            events: self.events.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

pub fn write_records<W: Write>(records: &[ClickRecord], mut w: W) -> Result<()> {
    for r in records {
        r.write_jsonl(&mut w)?;
    }
    Ok(())
}

/// Parses any number of concatenated records.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ClickRecord>> {
    let mut out = Vec::new();
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    while let Some((n, line)) = lines.next() {
        let header: RecordHeader = serde_json::from_str(&line?)
            .map_err(|e| Error::InvalidRecord(format!("line {}: bad header: {e}", n + 1)))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::InvalidRecord(format!("unsupported format version {}", header.format_version)));
        }
        let mut events = Vec::with_capacity(header.events);
        for _ in 0..header.events {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::InvalidRecord(format!("expected {} events, file ended", header.events)))?;
            let e: ClickEvent = serde_json::from_str(&line?)
                .map_err(|e| Error::InvalidRecord(format!("line {}: bad event: {e}", n + 1)))?;
            events.push(e);
        }
        let record = ClickRecord {
            events,
            t_end: header.t_end,
            seed: header.seed,
            stream: header.stream,
            fingerprint: header.fingerprint,
            mode: header.mode,
            space: FockSpace::new(header.dim_cavity, header.dim_mech)?,
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerOptions {
    /// Largest tolerated population of either top Fock level.
    pub leakage_limit: f64,
    /// Jump times are located to within this interval.
    pub time_resolution: f64,
    /// Longest propagation between weight checks.
    pub coarse_step: f64,
    /// RK4 settings for detector mode; the step may grow for speed.
    pub control: StepControl,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { leakage_limit: 1e-2, time_resolution: 1e-6, coarse_step: 0.05, control: StepControl { tolerance: 1e-6, ..StepControl::adaptive() } }
    }
}

impl SamplerOptions {
    fn levels(&self) -> usize {
        (self.coarse_step / self.time_resolution).log2().ceil().max(0.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.leakage_limit > 0.0 && self.time_resolution > 0.0 && self.coarse_step >= self.time_resolution) {
            return Err(Error::InvalidArgument(format!("invalid sampler options {self:?}")));
        }
        self.control.validate()
    }
}

/// One sampled trajectory. `checkpoints` holds normalised states at the requested times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub record: ClickRecord,
    pub final_state: State,
    pub checkpoints: Vec<State>,
    /// Largest top-level population met along the way.
    pub max_leakage: f64,
}

/// Shared, read-only sampling setup. Building it once amortises the propagator ladder
/// of the full mode over an ensemble.
pub struct Sampler<'a> {
    params: &'a SystemParams,
    space: FockSpace,
    initial: &'a State,
    mode: SamplingMode,
    options: SamplerOptions,
    generator: Generator,
    /// `exp(−i H_eff h_k)` for `h_k = coarse_step / 2^k`, full mode only.
    ladder: Vec<CMatrix>,
    h_eff: CMatrix,
    /// Eigen-decomposition of a mixed initial state, full mode only.
    initial_mixture: Option<(Vec<f64>, CMatrix)>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        params: &'a SystemParams,
        space: FockSpace,
        initial: &'a State,
        mode: SamplingMode,
        options: SamplerOptions,
    ) -> Result<Self> {
        params.validate_open()?;
        options.validate()?;
        if initial.dim() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: initial.dim() });
        }
        if !initial.is_normalized() {
            return Err(Error::InvalidArgument(format!("initial state has trace {}", initial.trace())));
        }
        let generator = Generator::no_click(params, space)?;
        let h_eff = generator.effective_hamiltonian();
        let (ladder, initial_mixture) = match mode {
            SamplingMode::Detector => (Vec::new(), None),
            SamplingMode::Full => {
                let ladder = (0..=options.levels())
                    .map(|k| expm(&(&h_eff * (-I * (options.coarse_step / (1u64 << k) as f64)))))
                    .collect();
                let mixture = match initial {
                    State::Pure(_) => None,
                    State::Mixed(r) => Some(hermitian_eigen(r)),
                };
                (ladder, mixture)
            }
        };
        Ok(Self { params, space, initial, mode, options, generator, ladder, h_eff, initial_mixture })
    }

    pub fn sample(&self, t_end: f64, seed: u64, stream: u64, checkpoints: &[f64]) -> Result<Trajectory> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
        }
        check_times(checkpoints, t_end)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let out = match self.mode {
            SamplingMode::Full => {
                let psi = self.draw_initial_ket(&mut rng);
                let mut walker = PureWalker { sampler: self };
                run(&mut walker, psi, t_end, checkpoints, &mut rng, self)?
            }
            SamplingMode::Detector => {
                let mut walker = DensityWalker {
                    integrator: Integrator::new(&self.generator, self.options.control)?,
                    photon: Shift::for_channel(Channel::PhotonDetected, self.space),
                    coarse: self.options.coarse_step,
                    kappa_d: self.params.kappa_d,
                };
                run(&mut walker, self.initial.density(), t_end, checkpoints, &mut rng, self)?
            }
        };
        let record = ClickRecord {
            events: out.events,
            t_end,
            seed,
            stream,
            fingerprint: self.params.fingerprint(),
            mode: self.mode,
            space: self.space,
        };
        Ok(Trajectory { record, final_state: out.final_state, checkpoints: out.checkpoints, max_leakage: out.max_leakage })
    }

    /// Trajectories `0..count` of the ensemble drawn from `seed`, computed on `workers`
    /// threads. The result does not depend on the worker count.
    pub fn sample_ensemble(
        &self,
        t_end: f64,
        seed: u64,
        count: usize,
        workers: usize,
        checkpoints: &[f64],
    ) -> Result<Vec<Trajectory>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        pool.install(|| {
            (0..count as u64).into_par_iter().map(|k| self.sample(t_end, seed, k, checkpoints)).collect()
        })
    }

    fn draw_initial_ket(&self, rng: &mut ChaCha20Rng) -> CVector {
        match (self.initial, &self.initial_mixture) {
            (State::Pure(v), _) => v.clone(),
            (_, Some((weights, vectors))) => {
                let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (k, w) in weights.iter().enumerate().rev() {
                    u -= w.max(0.0);
                    if u < 0.0 {
                        pick = k;
                        break;
                    }
                }
                vectors.column(pick).into_owned()
            }
            (State::Mixed(_), None) => unreachable!("mixture is decomposed for full mode"),
        }
    }
}

/// Samples one trajectory (stream 0 of `seed`).
pub fn sample_trajectory(
    params: &SystemParams,
    space: FockSpace,
    initial: &State,
    t_end: f64,
    mode: SamplingMode,
    seed: u64,
    options: SamplerOptions,
) -> Result<Trajectory> {
    Sampler::new(params, space, initial, mode, options)?.sample(t_end, seed, 0, &[])
}

fn check_times(times: &[f64], t_end: f64) -> Result<()> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0 && t <= t_end)) {
        return Err(Error::InvalidArgument(format!("checkpoint times must be sorted within [0, {t_end}]")));
    }
    Ok(())
}

/// One unravelling: how to advance, weigh and jump its state.
trait Walker {
    type S: Clone;
    /// Propagates by `coarse_step / 2^level`.
    fn advance(&mut self, s: &Self::S, level: usize) -> Result<Self::S>;
    /// Propagates by an arbitrary short interval.
    fn advance_by(&mut self, s: &Self::S, dt: f64) -> Result<Self::S>;
    /// Squared norm or trace.
    fn weight(&self, s: &Self::S) -> f64;
    fn jump(&self, s: &Self::S, rng: &mut ChaCha20Rng) -> Result<(Channel, Self::S)>;
    fn snapshot(&self, s: &Self::S) -> State;
    /// Diagonal of the state in the joint number basis, unnormalised.
    fn populations(&self, s: &Self::S) -> Vec<f64>;
}

struct PureWalker<'s, 'a> {
    sampler: &'s Sampler<'a>,
}

impl Walker for PureWalker<'_, '_> {
    type S = CVector;

    fn advance(&mut self, s: &CVector, level: usize) -> Result<CVector> {
        Ok(&self.sampler.ladder[level] * s)
    }

    fn advance_by(&mut self, s: &CVector, dt: f64) -> Result<CVector> {
        Ok(expm(&(&self.sampler.h_eff * (-I * dt))) * s)
    }

    fn weight(&self, s: &CVector) -> f64 {
        s.norm_squared()
    }

    fn jump(&self, s: &CVector, rng: &mut ChaCha20Rng) -> Result<(Channel, CVector)> {
        let space = self.sampler.space;
        let p = self.sampler.params;
        let (mut n_cav, mut n_mech, mut n_mech_up) = (0.0, 0.0, 0.0);
        for (i, z) in s.iter().enumerate() {
            let (nc, nm) = space.levels(i);
            let w = z.norm_sqr();
            n_cav += w * nc as f64;
            n_mech += w * nm as f64;
            if nm + 1 < space.dim_mech {
                n_mech_up += w * (nm + 1) as f64;
            }
        }
        let weights = [
            (Channel::PhotonDetected, p.kappa_d * n_cav),
            (Channel::PhotonLost, p.kappa_l * n_cav),
            (Channel::PhononDown, p.gamma * (p.mbar + 1.0) * n_mech),
            (Channel::PhononUp, p.gamma * p.mbar * n_mech_up),
        ];
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::ZeroNorm("jump"));
        }
        let mut u = rng.random::<f64>() * total;
        let mut channel = weights.iter().rev().find(|(_, w)| *w > 0.0).map(|(c, _)| *c).unwrap();
        for (c, w) in weights {
            if u < w {
                channel = c;
                break;
            }
            u -= w;
        }
        let mut out = CVector::zeros(s.len());
        Shift::for_channel(channel, space).apply_vec(s.as_slice(), out.as_mut_slice());
        let norm = out.norm();
        if !(norm > 0.0) {
            return Err(Error::ZeroNorm("jump"));
        }
        Ok((channel, out / C64::from(norm)))
    }

    fn snapshot(&self, s: &CVector) -> State {
        State::Pure(s / C64::from(s.norm()))
    }

    fn populations(&self, s: &CVector) -> Vec<f64> {
        s.iter().map(|z| z.norm_sqr()).collect()
    }
}

struct DensityWalker<'g> {
    integrator: Integrator<'g>,
    photon: Shift,
    coarse: f64,
    kappa_d: f64,
}

impl Walker for DensityWalker<'_> {
    type S = CMatrix;

    fn advance(&mut self, s: &CMatrix, level: usize) -> Result<CMatrix> {
        self.advance_by(s, self.coarse / (1u64 << level) as f64)
    }

    fn advance_by(&mut self, s: &CMatrix, dt: f64) -> Result<CMatrix> {
        let mut out = s.clone();
        if dt <= self.integrator.step_size() {
            self.integrator.rk4_step(&mut out, dt);
        } else {
            self.integrator.propagate(&mut out, dt)?;
        }
        Ok(out)
    }

    fn weight(&self, s: &CMatrix) -> f64 {
        trace(s).re
    }

    fn jump(&self, s: &CMatrix, _rng: &mut ChaCha20Rng) -> Result<(Channel, CMatrix)> {
        if self.kappa_d <= 0.0 {
            return Err(Error::ZeroNorm("jump"));
        }
        let out = self.photon.sandwich(s);
        let tr = trace(&out).re;
        if !(tr > 1e-300) {
            return Err(Error::ZeroNorm("jump"));
        }
        Ok((Channel::PhotonDetected, out / C64::from(tr)))
    }

    fn snapshot(&self, s: &CMatrix) -> State {
        State::Mixed(s / C64::from(trace(s).re))
    }

    fn populations(&self, s: &CMatrix) -> Vec<f64> {
        s.diagonal().iter().map(|z| z.re).collect()
    }
}

/// Time kept as `base + ticks · h_fine` so that halved steps add up exactly.
struct Clock {
    base: f64,
    ticks: u64,
    fine: f64,
}

impl Clock {
    fn now(&self) -> f64 {
        self.base + self.ticks as f64 * self.fine
    }
}

/// Tracks the largest top-level population seen and aborts above the limit.
struct LeakageGuard {
    space: FockSpace,
    limit: f64,
    worst: f64,
}

impl LeakageGuard {
    fn check<W: Walker>(&mut self, walker: &W, s: &W::S, t: f64) -> Result<()> {
        let pops = walker.populations(s);
        let total: f64 = pops.iter().sum();
        let (nc, nm) = (self.space.dim_cavity, self.space.dim_mech);
        let top_cav: f64 = pops[(nc - 1) * nm..].iter().sum();
        let top_mech: f64 = (0..nc).map(|c| pops[c * nm + nm - 1]).sum();
        let leakage = top_cav.max(top_mech) / total;
        self.worst = self.worst.max(leakage);
        if leakage > self.limit {
            return Err(Error::Truncation { t, leakage, limit: self.limit });
        }
        Ok(())
    }
}

enum Segment {
    Reached,
    Crossed,
}

/// Advances towards `target`, stopping early when the weight would fall below `u`.
fn advance_until<W: Walker>(
    walker: &mut W,
    s: &mut W::S,
    clock: &mut Clock,
    target: f64,
    u: f64,
    levels: usize,
    guard: &mut LeakageGuard,
) -> Result<Segment> {
    let target_ticks = (((target - clock.base) / clock.fine) + 1e-9).floor().max(0.0) as u64;
    let mut crossed = false;
    let mut level = 0;
    while level <= levels {
        let span = 1u64 << (levels - level);
        if clock.ticks + span > target_ticks {
            level += 1;
            continue;
        }
        let next = walker.advance(s, level)?;
        if walker.weight(&next) < u {
            crossed = true;
            level += 1;
            continue;
        }
        *s = next;
        clock.ticks += span;
        if level == 0 {
            guard.check(walker, s, clock.now())?;
        }
    }
    if crossed {
        return Ok(Segment::Crossed);
    }
    let leftover = target - clock.now();
    if leftover > 0.0 {
        let next = walker.advance_by(s, leftover)?;
        if walker.weight(&next) < u {
            return Ok(Segment::Crossed);
        }
        *s = next;
    }
    clock.base = target;
    clock.ticks = 0;
    guard.check(walker, s, target)?;
    Ok(Segment::Reached)
}

struct RunOutput {
    events: Vec<ClickEvent>,
    final_state: State,
    checkpoints: Vec<State>,
    max_leakage: f64,
}

fn run<W: Walker>(
    walker: &mut W,
    initial: W::S,
    t_end: f64,
    checkpoints: &[f64],
    rng: &mut ChaCha20Rng,
    sampler: &Sampler,
) -> Result<RunOutput> {
    let levels = sampler.options.levels();
    let fine = sampler.options.coarse_step / (1u64 << levels) as f64;
    let mut clock = Clock { base: 0.0, ticks: 0, fine };
    let mut guard = LeakageGuard { space: sampler.space, limit: sampler.options.leakage_limit, worst: 0.0 };
    let mut s = initial;
    let mut events: Vec<ClickEvent> = Vec::new();
    let mut snaps = Vec::with_capacity(checkpoints.len());
    let mut u = 1.0 - rng.random::<f64>();
    for &stop in checkpoints.iter().chain(std::iter::once(&t_end)) {
        loop {
            match advance_until(walker, &mut s, &mut clock, stop, u, levels, &mut guard)? {
                Segment::Reached => break,
                Segment::Crossed => {
                    let (channel, next) = walker.jump(&s, rng)?;
                    let mut t = clock.now();
                    if let Some(last) = events.last() {
                        if t <= last.t {
                            t = last.t.next_up();
                        }
                    }
                    events.push(ClickEvent { t, ch: channel });
                    s = next;
                    guard.check(walker, &s, t)?;
                    u = 1.0 - rng.random::<f64>();
                }
            }
        }
        snaps.push(walker.snapshot(&s));
    }
    let final_state = snaps.pop().expect("t_end is always a stop");
    Ok(RunOutput { events, final_state, checkpoints: snaps, max_leakage: guard.worst })
}

/// The observer's conditional density along a sequence of detections: unnormalised
/// no-click propagation between clicks, `a σ a†` at each click, and renormalisation
/// after every step with the lost weight accumulated in log space.
pub struct ConditionalFilter<'g> {
    integrator: Integrator<'g>,
    photon: Shift,
    sigma: CMatrix,
    t: f64,
}

impl<'g> ConditionalFilter<'g> {
    /// `generator` must be the no-click generator of the system being filtered.
    pub fn new(generator: &'g Generator, space: FockSpace, initial: &State, control: StepControl) -> Result<Self> {
        if initial.dim() != space.dim() || generator.dim() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: initial.dim() });
        }
        let sigma = initial.normalized()?.density();
        Ok(Self {
            integrator: Integrator::new(generator, control)?,
            photon: Shift::for_channel(Channel::PhotonDetected, space),
            sigma,
            t: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Normalised conditional state.
    pub fn state(&self) -> State {
        State::Mixed(self.sigma.clone())
    }

    pub fn density(&self) -> &CMatrix {
        &self.sigma
    }

    /// Propagates without detection to `t` and returns the log of the no-click probability
    /// of the interval.
    pub fn advance_to(&mut self, t: f64) -> Result<f64> {
        if t < self.t {
            return Err(Error::InvalidArgument(format!("cannot step back from {} to {t}", self.t)));
        }
        self.integrator.propagate(&mut self.sigma, t - self.t)?;
        self.t = t;
        let tr = trace(&self.sigma).re;
        if !(tr > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        self.sigma /= C64::from(tr);
        Ok(tr.ln())
    }

    /// Moves the clock forward without propagating, for intervals accounted for elsewhere.
    pub fn restart_at(&mut self, t: f64) {
        self.t = self.t.max(t);
    }

    /// `Tr(a†a σ)` of the current state.
    pub fn photon_number(&self) -> f64 {
        self.photon.sandwich_trace(&self.sigma)
    }

    /// Resets to `a σ a† / Tr(a σ a†)` and returns `Tr(a σ a†)`.
    pub fn click(&mut self) -> Result<f64> {
        let out = self.photon.sandwich(&self.sigma);
        let tr = trace(&out).re;
        if !(tr > 0.0) {
            return Err(Error::ZeroNorm("click"));
        }
        self.sigma = out / C64::from(tr);
        Ok(tr)
    }
}

/// Normalised conditional states at `checkpoints` along `record`. Only detected photons
/// enter; lost photons and phonon events in a full-mode record are invisible to the
/// observer. A click at a checkpoint time is applied before the state is reported.
pub fn replay_conditional(
    record: &ClickRecord,
    params: &SystemParams,
    space: FockSpace,
    initial: &State,
    checkpoints: &[f64],
    control: StepControl,
) -> Result<Vec<State>> {
    if record.fingerprint != params.fingerprint() {
        return Err(Error::RecordMismatch(format!(
            "record fingerprint {} differs from parameters {}",
            record.fingerprint,
            params.fingerprint()
        )));
    }
    if record.space != space {
        return Err(Error::RecordMismatch(format!("record space {:?} differs from {space:?}", record.space)));
    }
    record.validate()?;
    check_times(checkpoints, record.t_end)?;
    replay_clicks(&record.detection_times(), params, space, initial, checkpoints, control)
}

/// Replay along bare click times, without checking the record against the parameters.
/// Used when the same clicks are replayed under perturbed parameters.
pub fn replay_clicks(
    clicks: &[f64],
    params: &SystemParams,
    space: FockSpace,
    initial: &State,
    checkpoints: &[f64],
    control: StepControl,
) -> Result<Vec<State>> {
    let generator = Generator::no_click(params, space)?;
    let mut filter = ConditionalFilter::new(&generator, space, initial, control)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next_click = clicks.iter().copied().peekable();
    for &stop in checkpoints {
        while let Some(t) = next_click.next_if(|&t| t <= stop) {
            filter.advance_to(t)?;
            filter.click()?;
        }
        filter.advance_to(stop)?;
        out.push(filter.state());
    }
    Ok(out)
}
