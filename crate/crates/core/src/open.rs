//! Deterministic open-system propagation: the ensemble master equation, the
//! unnormalised no-click equation, and jump maps on densities.
//!
//! Both generators share the form
//! `σ̇ = −i(H_eff σ − σ H_eff†) + Σ_k r_k L_k σ L_k†` and are stored sparsely:
//! `H_eff` row by row and each `L_k` as a one-entry-per-row shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, ModeOperators, State};
use crate::linalg::{hermitian_eigenvalues, symmetrize, trace, CMatrix, C64, I, ZERO};
use crate::model::{hamiltonian_rf_with, SystemParams};

/// Quantum-jump channels. Photons are split into detected and lost ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    PhotonDetected,
    PhotonLost,
    PhononDown,
    PhononUp,
}

impl Channel {
    pub fn is_photon(self) -> bool {
        matches!(self, Channel::PhotonDetected | Channel::PhotonLost)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Channel::PhotonDetected => "photon_detected",
            Channel::PhotonLost => "photon_lost",
            Channel::PhononDown => "phonon_down",
            Channel::PhononUp => "phonon_up",
        }
    }
}

/// An operator with at most one non-zero per row: `(L x)[i] = amp_i · x[src_i]`.
#[derive(Debug, Clone)]
pub(crate) struct Shift {
    pub(crate) rows: Vec<Option<(usize, f64)>>,
}

impl Shift {
    pub(crate) fn for_channel(channel: Channel, space: FockSpace) -> Self {
        let d = space.dim();
        let rows = (0..d)
            .map(|i| {
                let (nc, nm) = space.levels(i);
                match channel {
                    Channel::PhotonDetected | Channel::PhotonLost => {
                        (nc + 1 < space.dim_cavity).then(|| (space.index(nc + 1, nm), ((nc + 1) as f64).sqrt()))
                    }
                    Channel::PhononDown => {
                        (nm + 1 < space.dim_mech).then(|| (space.index(nc, nm + 1), ((nm + 1) as f64).sqrt()))
                    }
                    Channel::PhononUp => (nm > 0).then(|| (space.index(nc, nm - 1), (nm as f64).sqrt())),
                }
            })
            .collect();
        Self { rows }
    }

    /// Groups consecutive rows whose sources are also consecutive.
    fn runs(&self, scale: f64) -> Vec<Run> {
        let mut runs: Vec<Run> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            let Some((src, amp)) = *r else { continue };
            match runs.last_mut() {
                Some(run) if run.row + run.amps.len() == i && run.src + run.amps.len() == src => run.amps.push(amp * scale),
                _ => runs.push(Run { row: i, src, amps: vec![amp * scale] }),
            }
        }
        runs
    }

    /// `L v`.
    pub(crate) fn apply_vec(&self, v: &[C64], out: &mut [C64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = match row {
                Some((src, amp)) => v[*src] * *amp,
                None => ZERO,
            };
        }
    }

    /// `out += rate · L σ L†` for a column-major `d × d` slice.
    fn sandwich_add(&self, rate: f64, sigma: &[C64], out: &mut [C64], d: usize) {
        for (j, rj) in self.rows.iter().enumerate() {
            let Some((sj, aj)) = rj else { continue };
            let col = &sigma[sj * d..(sj + 1) * d];
            let scale = rate * aj;
            let out_col = &mut out[j * d..(j + 1) * d];
            for (o, ri) in out_col.iter_mut().zip(&self.rows) {
                if let Some((si, ai)) = ri {
                    *o += col[*si] * (scale * ai);
                }
            }
        }
    }

    /// `Tr(L σ L†) = Σ_i amp_i² σ[src_i, src_i]`.
    pub(crate) fn sandwich_trace(&self, sigma: &CMatrix) -> f64 {
        self.rows.iter().flatten().map(|(s, a)| a * a * sigma[(*s, *s)].re).sum()
    }

    pub(crate) fn sandwich(&self, sigma: &CMatrix) -> CMatrix {
        let d = sigma.nrows();
        let mut out = CMatrix::zeros(d, d);
        self.sandwich_add(1.0, sigma.as_slice(), out.as_mut_slice(), d);
        out
    }
}

/// Rows `row..row+n` of a shift read sources `src..src+n`.
#[derive(Debug, Clone)]
struct Run {
    row: usize,
    src: usize,
    amps: Vec<f64>,
}

/// Linear generator `σ ↦ −i(H_eff σ − σ H_eff†) + Σ_k r_k L_k σ L_k†`.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    /// Non-zeros of `H_eff`, row by row.
    rows: Vec<Vec<(usize, C64)>>,
    refills: Vec<(f64, Shift)>,
    /// Same refills as contiguous runs with `√rate` folded into the amplitudes.
    refill_runs: Vec<Vec<Run>>,
    /// Bound on the generator's spectral radius, used to keep RK4 stable.
    spectral_radius: f64,
}

impl Generator {
    /// Ensemble master equation: `κ D[a] + γ(m̄+1) D[b] + γ m̄ D[b†]`.
    pub fn lindblad(params: &SystemParams, space: FockSpace) -> Result<Self> {
        params.validate()?;
        let rates = ChannelRates::ensemble(params);
        Self::build(params, space, &rates, &rates)
    }

    /// Unnormalised no-click equation: the full `κ` damping sits in `H_eff`, while only
    /// the lost photons (`κ_l`) and both phonon channels are refilled.
    pub fn no_click(params: &SystemParams, space: FockSpace) -> Result<Self> {
        params.validate()?;
        let damping = ChannelRates::ensemble(params);
        let refill = ChannelRates { photon: params.kappa_l, ..damping };
        Self::build(params, space, &damping, &refill)
    }

    fn build(params: &SystemParams, space: FockSpace, damping: &ChannelRates, refill: &ChannelRates) -> Result<Self> {
        let ops = ModeOperators::new(space)?;
        let h = hamiltonian_rf_with(params, &ops).matrix;
        let d = space.dim();
        let mut rows: Vec<Vec<(usize, C64)>> = (0..d)
            .map(|i| (0..d).filter(|&j| h[(i, j)] != ZERO).map(|j| (j, h[(i, j)])).collect())
            .collect();
        // −(i/2) Σ r_k L_k†L_k is diagonal in the number basis.
        for (i, row) in rows.iter_mut().enumerate() {
            let (nc, nm) = space.levels(i);
            let loss = damping.photon * nc as f64
                + damping.phonon_down * nm as f64
                + damping.phonon_up * if nm + 1 < space.dim_mech { (nm + 1) as f64 } else { 0.0 };
            if loss != 0.0 {
                match row.iter_mut().find(|(j, _)| *j == i) {
                    Some((_, v)) => *v -= I * (0.5 * loss),
                    None => {
                        row.push((i, -I * (0.5 * loss)));
                        row.sort_by_key(|(j, _)| *j);
                    }
                }
            }
        }
        let mut refills = Vec::new();
        for (rate, ch) in [
            (refill.photon, Channel::PhotonDetected),
            (refill.phonon_down, Channel::PhononDown),
            (refill.phonon_up, Channel::PhononUp),
        ] {
            if rate > 0.0 {
                refills.push((rate, Shift::for_channel(ch, space)));
            }
        }
        let refill_runs = refills.iter().map(|(rate, shift)| shift.runs(rate.sqrt())).collect();
        // Commutator eigenvalues are differences of H_RF eigenvalues; the dissipative parts
        // add at most the largest loss and refill rates.
        let energies = hermitian_eigenvalues(&h);
        let width = energies.last().unwrap_or(&0.0) - energies.first().unwrap_or(&0.0);
        let max_loss = (0..d)
            .map(|i| -2.0 * rows[i].iter().find(|(j, _)| *j == i).map_or(0.0, |(_, v)| v.im))
            .fold(0.0, f64::max);
        let max_refill: f64 = refills
            .iter()
            .map(|(rate, shift)| rate * shift.rows.iter().flatten().map(|(_, a)| a * a).fold(0.0, f64::max))
            .sum();
        let spectral_radius = width + max_loss + max_refill;
        Ok(Self { dim: d, rows, refills, refill_runs, spectral_radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest RK4 step inside the stability region for this generator.
    pub fn stable_step(&self) -> f64 {
        if self.spectral_radius > 0.0 {
            2.5 / self.spectral_radius
        } else {
            f64::INFINITY
        }
    }

    /// Dense `H_eff`.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        let mut h = CMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                h[(i, j)] = v;
            }
        }
        h
    }

    /// Writes the generator applied to a Hermitian `sigma` into `out`.
    pub fn apply(&self, sigma: &CMatrix, out: &mut CMatrix) {
        let x = Planar::from_matrix(sigma);
        let mut y = Planar::zeros(self.dim);
        self.apply_planar(&x, &mut y);
        y.write_to(out);
    }

    /// Hermitian fast path on split storage. Uses `σ H_eff† = (H_eff σ)†`, so a single
    /// sparse product is formed.
    pub(crate) fn apply_planar(&self, s: &Planar, o: &mut Planar) {
        let d = self.dim;
        o.re.fill(0.0);
        o.im.fill(0.0);
        // y = σ H_eff†, column j = Σ_k conj(H[j,k]) σ[:, k]
        for (j, row) in self.rows.iter().enumerate() {
            let yr = &mut o.re[j * d..(j + 1) * d];
            let yi = &mut o.im[j * d..(j + 1) * d];
            for &(k, h) in row {
                let (hr, hi) = (h.re, h.im);
                let sr = &s.re[k * d..(k + 1) * d];
                let si = &s.im[k * d..(k + 1) * d];
                for (((yr, yi), sr), si) in yr.iter_mut().zip(yi.iter_mut()).zip(sr).zip(si) {
                    *yr += sr * hr + si * hi;
                    *yi += si * hr - sr * hi;
                }
            }
        }
        // −i(H σ − σ H†) = i(y − y†), filled symmetrically tile by tile
        const TILE: usize = 8;
        for jb in (0..d).step_by(TILE) {
            for ib in (0..=jb).step_by(TILE) {
                for j in jb..(jb + TILE).min(d) {
                    for i in ib..(ib + TILE).min(j + 1) {
                        let (a, b) = (o.re[j * d + i], o.im[j * d + i]);
                        let (c, e) = (o.re[i * d + j], o.im[i * d + j]);
                        let (vr, vi) = (-(b + e), a - c);
                        o.re[j * d + i] = vr;
                        o.im[j * d + i] = vi;
                        o.re[i * d + j] = vr;
                        o.im[i * d + j] = -vi;
                    }
                }
            }
        }
        for runs in &self.refill_runs {
            for run_j in runs {
                for (dj, &aj) in run_j.amps.iter().enumerate() {
                    let (j, sj) = (run_j.row + dj, run_j.src + dj);
                    for run_i in runs {
                        let (i0, s0, n) = (run_i.row, run_i.src, run_i.amps.len());
                        let out_re = &mut o.re[j * d + i0..j * d + i0 + n];
                        let src_re = &s.re[sj * d + s0..sj * d + s0 + n];
                        for ((o, x), ai) in out_re.iter_mut().zip(src_re).zip(&run_i.amps) {
                            *o += aj * ai * x;
                        }
                        let out_im = &mut o.im[j * d + i0..j * d + i0 + n];
                        let src_im = &s.im[sj * d + s0..sj * d + s0 + n];
                        for ((o, x), ai) in out_im.iter_mut().zip(src_im).zip(&run_i.amps) {
                            *o += aj * ai * x;
                        }
                    }
                }
            }
        }
    }

    /// Generator on an arbitrary (not necessarily Hermitian) matrix.
    pub fn apply_general(&self, x: &CMatrix) -> CMatrix {
        let h = self.effective_hamiltonian();
        let mut out = (&h * x - x * h.adjoint()) * (-I);
        for (rate, shift) in &self.refills {
            shift.sandwich_add(*rate, x.as_slice(), out.as_mut_slice(), self.dim);
        }
        out
    }

    /// Dense superoperator acting on column-stacked matrices.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.dim;
        let mut sup = CMatrix::zeros(d * d, d * d);
        let mut basis = CMatrix::zeros(d, d);
        for col in 0..d * d {
            basis.as_mut_slice()[col] = C64::from(1.0);
            let image = self.apply_general(&basis);
            sup.column_mut(col).copy_from_slice(image.as_slice());
            basis.as_mut_slice()[col] = ZERO;
        }
        sup
    }
}

#[derive(Debug, Clone, Copy)]
struct ChannelRates {
    photon: f64,
    phonon_down: f64,
    phonon_up: f64,
}

impl ChannelRates {
    fn ensemble(params: &SystemParams) -> Self {
        Self {
            photon: params.kappa(),
            phonon_down: params.gamma * (params.mbar + 1.0),
            phonon_up: params.gamma * params.mbar,
        }
    }
}

/// RK4 step settings. A step-doubling comparison runs on the first step and every
/// `check_every` steps; the step is halved when it exceeds `tolerance` and doubled,
/// up to `max_dt`, when it is below `tolerance / 32`. With `max_dt == dt` the step never grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    pub dt: f64,
    pub tolerance: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub check_every: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { dt: 0.005, tolerance: 1e-8, min_dt: 1e-7, max_dt: 0.005, check_every: 64 }
    }
}

impl StepControl {
    /// Default tolerance with the step allowed to grow to 0.02.
    pub fn adaptive() -> Self {
        Self { max_dt: 0.02, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0
            && self.min_dt > 0.0
            && self.min_dt <= self.dt
            && self.dt <= self.max_dt
            && self.tolerance > 0.0
            && self.check_every > 0)
        {
            return Err(Error::InvalidArgument(format!("invalid step control {self:?}")));
        }
        Ok(())
    }
}

/// Column-major complex matrix stored as separate real and imaginary parts.
#[derive(Debug, Clone)]
pub(crate) struct Planar {
    pub(crate) re: Vec<f64>,
    pub(crate) im: Vec<f64>,
}

impl Planar {
    pub(crate) fn zeros(d: usize) -> Self {
        Self { re: vec![0.0; d * d], im: vec![0.0; d * d] }
    }

    pub(crate) fn from_matrix(m: &CMatrix) -> Self {
        Self { re: m.iter().map(|z| z.re).collect(), im: m.iter().map(|z| z.im).collect() }
    }

    pub(crate) fn load(&mut self, m: &CMatrix) {
        for ((r, i), z) in self.re.iter_mut().zip(self.im.iter_mut()).zip(m.iter()) {
            *r = z.re;
            *i = z.im;
        }
    }

    pub(crate) fn write_to(&self, m: &mut CMatrix) {
        for ((z, r), i) in m.iter_mut().zip(&self.re).zip(&self.im) {
            *z = C64::new(*r, *i);
        }
    }

    pub(crate) fn copy_from(&mut self, other: &Planar) {
        self.re.copy_from_slice(&other.re);
        self.im.copy_from_slice(&other.im);
    }

    fn max_abs_diff(&self, other: &Planar) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.re.len() {
            let dr = self.re[k] - other.re[k];
            let di = self.im[k] - other.im[k];
            worst = worst.max((dr * dr + di * di).sqrt());
        }
        worst
    }

    fn symmetrize(&mut self, d: usize) {
        for j in 0..d {
            self.im[j * d + j] = 0.0;
            for i in 0..j {
                let r = 0.5 * (self.re[j * d + i] + self.re[i * d + j]);
                let m = 0.5 * (self.im[j * d + i] - self.im[i * d + j]);
                self.re[j * d + i] = r;
                self.im[j * d + i] = m;
                self.re[i * d + j] = r;
                self.im[i * d + j] = -m;
            }
        }
    }
}

/// RK4 propagator bound to one generator, with scratch buffers and the current step size.
pub struct Integrator<'g> {
    generator: &'g Generator,
    control: StepControl,
    dt: f64,
    steps_since_check: usize,
    k: [Planar; 4],
    stage: Planar,
    half: Planar,
    full: Planar,
    work: Planar,
}

impl<'g> Integrator<'g> {
    /// The step and its growth limit are capped at [`Generator::stable_step`].
    pub fn new(generator: &'g Generator, control: StepControl) -> Result<Self> {
        control.validate()?;
        let stable = generator.stable_step();
        let control = StepControl {
            dt: control.dt.min(stable),
            max_dt: control.max_dt.min(stable),
            min_dt: control.min_dt.min(stable),
            ..control
        };
        let d = generator.dim();
        let z = || Planar::zeros(d);
        Ok(Self {
            generator,
            control,
            dt: control.dt,
            steps_since_check: usize::MAX,
            k: [z(), z(), z(), z()],
            stage: z(),
            half: z(),
            full: z(),
            work: z(),
        })
    }

    /// Current (possibly halved) step size.
    pub fn step_size(&self) -> f64 {
        self.dt
    }

    /// One classical RK4 step of size `h` applied in place.
    pub fn rk4_step(&mut self, rho: &mut CMatrix, h: f64) {
        self.work.load(rho);
        rk4_planar(self.generator, &mut self.work, h, &mut self.k, &mut self.stage);
        self.work.write_to(rho);
    }

    /// Propagates `rho` forward by `duration` in equal steps no longer than the current step.
    pub fn propagate(&mut self, rho: &mut CMatrix, duration: f64) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let mut work = std::mem::replace(&mut self.work, Planar { re: Vec::new(), im: Vec::new() });
        work.load(rho);
        let out = self.propagate_planar(&mut work, duration);
        work.write_to(rho);
        self.work = work;
        out
    }

    pub(crate) fn propagate_planar(&mut self, rho: &mut Planar, duration: f64) -> Result<()> {
        let d = self.generator.dim();
        let mut t = 0.0;
        while duration - t > 1e-12 * duration.max(1.0) {
            let remaining = duration - t;
            let h = remaining / (remaining / self.dt - 1e-9).ceil().max(1.0);
            if self.steps_since_check >= self.control.check_every {
                self.checked_step(rho, h, t)?;
            } else {
                rk4_planar(self.generator, rho, h, &mut self.k, &mut self.stage);
                rho.symmetrize(d);
                self.steps_since_check += 1;
            }
            t += h;
        }
        Ok(())
    }

    /// Step-doubling comparison; on failure the interval is covered by two checked halves.
    fn checked_step(&mut self, rho: &mut Planar, h: f64, t: f64) -> Result<()> {
        let d = self.generator.dim();
        self.full.copy_from(rho);
        rk4_planar(self.generator, &mut self.full, h, &mut self.k, &mut self.stage);
        self.half.copy_from(rho);
        rk4_planar(self.generator, &mut self.half, h / 2.0, &mut self.k, &mut self.stage);
        rk4_planar(self.generator, &mut self.half, h / 2.0, &mut self.k, &mut self.stage);
        let err = self.full.max_abs_diff(&self.half);
        if err <= self.control.tolerance {
            rho.copy_from(&self.half);
            rho.symmetrize(d);
            self.steps_since_check = 0;
            if err < self.control.tolerance / 32.0 && h >= 0.9 * self.dt {
                self.dt = (2.0 * self.dt).min(self.control.max_dt);
            }
            return Ok(());
        }
        if h / 2.0 < self.control.min_dt {
            return Err(Error::StepControl { t, step: h, error: err });
        }
        self.dt = self.dt.min(h / 2.0);
        log::debug!("step halved to {} at t = {t} (error {err:e})", self.dt);
        self.checked_step(rho, h / 2.0, t)?;
        self.checked_step(rho, h / 2.0, t + h / 2.0)
    }
}

/// `out = x + h·k`.
fn offset(out: &mut Planar, x: &Planar, k: &Planar, h: f64) {
    for ((o, a), b) in out.re.iter_mut().zip(&x.re).zip(&k.re) {
        *o = a + b * h;
    }
    for ((o, a), b) in out.im.iter_mut().zip(&x.im).zip(&k.im) {
        *o = a + b * h;
    }
}

fn rk4_planar(g: &Generator, rho: &mut Planar, h: f64, k: &mut [Planar; 4], stage: &mut Planar) {
    let [k1, k2, k3, k4] = k;
    g.apply_planar(rho, k1);
    offset(stage, rho, k1, h / 2.0);
    g.apply_planar(stage, k2);
    offset(stage, rho, k2, h / 2.0);
    g.apply_planar(stage, k3);
    offset(stage, rho, k3, h);
    g.apply_planar(stage, k4);
    let w = h / 6.0;
    for i in 0..rho.re.len() {
        rho.re[i] += (k1.re[i] + 2.0 * (k2.re[i] + k3.re[i]) + k4.re[i]) * w;
        rho.im[i] += (k1.im[i] + 2.0 * (k2.im[i] + k3.im[i]) + k4.im[i]) * w;
    }
}

fn require_density(state: &State, space: FockSpace) -> Result<CMatrix> {
    if state.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: state.dim() });
    }
    Ok(state.density())
}

/// `−i[H_RF, ρ] + κ D[a]ρ + γ(m̄+1) D[b]ρ + γ m̄ D[b†]ρ`.
pub fn lindblad_rhs(state: &State, params: &SystemParams, space: FockSpace) -> Result<CMatrix> {
    let rho = require_density(state, space)?;
    let g = Generator::lindblad(params, space)?;
    Ok(g.apply_general(&rho))
}

/// `−i(H_no-ph σ − σ H_no-ph†) + κ_l a σ a† + γ(m̄+1) D[b]σ + γ m̄ D[b†]σ`, with
/// `H_no-ph` carrying the full `−(iκ/2) a†a`.
pub fn no_click_rhs(state: &State, params: &SystemParams, space: FockSpace) -> Result<CMatrix> {
    let rho = require_density(state, space)?;
    let g = Generator::no_click(params, space)?;
    Ok(g.apply_general(&rho))
}

fn integrate_with(generator: &Generator, initial: &State, t0: f64, t1: f64, control: StepControl) -> Result<State> {
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    if initial.dim() != generator.dim() {
        return Err(Error::DimensionMismatch { expected: generator.dim(), got: initial.dim() });
    }
    let mut rho = initial.density();
    let mut integrator = Integrator::new(generator, control)?;
    integrator.propagate(&mut rho, t1 - t0)?;
    Ok(State::Mixed(rho))
}

/// Ensemble state at `t1` from the master equation.
pub fn integrate_master(
    initial: &State,
    t0: f64,
    t1: f64,
    params: &SystemParams,
    space: FockSpace,
    control: StepControl,
) -> Result<State> {
    let g = Generator::lindblad(params, space)?;
    integrate_with(&g, initial, t0, t1, control)
}

/// Unnormalised no-click state at `t1`; its trace is the probability of detecting nothing.
///
/// With `use_cache` the interval is covered by whole powers of a [`PropagatorCache`] built
/// for the integrator step, which is only feasible on small spaces.
pub fn integrate_no_click(
    initial: &State,
    t0: f64,
    t1: f64,
    params: &SystemParams,
    space: FockSpace,
    control: StepControl,
    use_cache: bool,
) -> Result<State> {
    let g = Generator::no_click(params, space)?;
    if !use_cache {
        return integrate_with(&g, initial, t0, t1, control);
    }
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let duration = t1 - t0;
    let n = (duration / control.dt - 1e-9).ceil().max(1.0) as usize;
    let cache = PropagatorCache::build(&g, duration / n as f64, params.fingerprint())?;
    let mut rho = initial.density();
    cache.propagate(&mut rho, n);
    Ok(State::Mixed(rho))
}

/// Cached `exp(L · step)` on the vectorised density.
#[derive(Debug, Clone)]
pub struct PropagatorCache {
    pub step: f64,
    pub fingerprint: String,
    dim: usize,
    propagator: CMatrix,
}

impl PropagatorCache {
    /// Largest joint dimension for which the dense `d² × d²` exponential is attempted.
    pub const MAX_DIM: usize = 24;

    pub fn build(generator: &Generator, step: f64, fingerprint: String) -> Result<Self> {
        let d = generator.dim();
        if d > Self::MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "propagator cache needs a {0}×{0} dense exponential; joint dimension {d} exceeds {1}",
                d * d,
                Self::MAX_DIM
            )));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("cache step must be positive".into()));
        }
        let propagator = crate::linalg::expm(&(generator.superoperator() * C64::from(step)));
        Ok(Self { step, fingerprint, dim: d, propagator })
    }

    /// True when the cache was built for this step and parameter fingerprint.
    pub fn matches(&self, step: f64, fingerprint: &str) -> bool {
        self.step == step && self.fingerprint == fingerprint
    }

    pub fn propagate(&self, rho: &mut CMatrix, steps: usize) {
        let d = self.dim;
        let mut v = crate::linalg::CVector::from_column_slice(rho.as_slice());
        for _ in 0..steps {
            v = &self.propagator * &v;
        }
        rho.as_mut_slice().copy_from_slice(v.as_slice());
        symmetrize(rho);
        debug_assert_eq!(rho.nrows(), d);
    }
}

/// `L ρ L† / Tr(L ρ L†)` with `L = a` for photons, `b` for phonon_down and `b†` for phonon_up.
pub fn apply_jump(state: &State, channel: Channel, space: FockSpace) -> Result<State> {
    let rho = require_density(state, space)?;
    let shift = Shift::for_channel(channel, space);
    let out = shift.sandwich(&rho);
    let tr = trace(&out).re;
    if !(tr > 1e-14) {
        return Err(Error::ZeroNorm("jump"));
    }
    Ok(State::Mixed(out / C64::from(tr)))
}

/// Stationary check helper: `max |L ρ|` for the ensemble generator.
pub fn stationarity_residual(state: &State, params: &SystemParams, space: FockSpace) -> Result<f64> {
    let rhs = lindblad_rhs(state, params, space)?;
    Ok(crate::linalg::max_abs(&rhs))
}
