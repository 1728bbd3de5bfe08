//! Photon-correlation diagnostics and the negativity entanglement witness.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{partial_transpose_mech, FockSpace, State};
use crate::linalg::{hermitian_eigenvalues, trace, CMatrix};
use crate::model::SystemParams;
use crate::open::{Channel, Generator, Integrator, Shift, StepControl};
use crate::trajectory::ClickRecord;

/// Uniform bins over `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Binning {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(hi > lo) || count == 0 {
            return Err(Error::InvalidArgument(format!("bad binning [{lo}, {hi}) with {count} bins")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        if x < self.lo || x >= self.hi {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.count - 1))
    }

    pub fn lower(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width()
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

/// Relative frequency of consecutive detections `(t₁, t₂)`, binned over `t₁` and the
/// delay `Δt = t₂ − t₁`. Bins that no pair can reach (`t₁ + Δt > t_end` for the whole
/// bin) are absent rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaHistogram {
    pub t1: Binning,
    pub delay: Binning,
    /// Row-major over `t₁`, then delay.
    pub values: Vec<Option<f64>>,
    /// Number of consecutive pairs, including those outside the binned range.
    pub pairs: usize,
    pub fingerprint: String,
}

impl ZetaHistogram {
    pub fn get(&self, i_t1: usize, i_delay: usize) -> Option<f64> {
        self.values[i_t1 * self.delay.count + i_delay]
    }

    /// Fraction of all pairs that landed in a bin.
    pub fn binned_fraction(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// `self − other` on bins present in both.
    pub fn difference(&self, other: &ZetaHistogram) -> Result<Vec<Option<f64>>> {
        if self.t1 != other.t1 || self.delay != other.delay {
            return Err(Error::InvalidArgument("histograms use different binnings".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| Some((*a)? - (*b)?)).collect())
    }

    /// Mean of `values` over present bins whose delay centre lies in `[lo, hi]`.
    pub fn delay_band_mean(&self, values: &[Option<f64>], lo: f64, hi: f64) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.t1.count {
            for j in 0..self.delay.count {
                let c = self.delay.center(j);
                if c >= lo && c <= hi {
                    if let Some(v) = values[i * self.delay.count + j] {
                        sum += v;
                        n += 1;
                    }
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Rows `t1, dt, value` with absent bins left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# fingerprint={} pairs={}", self.fingerprint, self.pairs)?;
        writeln!(w, "t1,dt,value")?;
        for i in 0..self.t1.count {
            for j in 0..self.delay.count {
                let v = self.get(i, j).map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{}", self.t1.center(i), self.delay.center(j), v)?;
            }
        }
        Ok(())
    }
}

/// Default binning: 25 × 25 bins over `[0, t_end]` on both axes.
pub fn default_zeta_bins(t_end: f64) -> Result<(Binning, Binning)> {
    Ok((Binning::new(0.0, t_end, 25)?, Binning::new(0.0, t_end, 25)?))
}

pub fn zeta_histogram(records: &[ClickRecord], t1_bins: Binning, delay_bins: Binning) -> Result<ZetaHistogram> {
    let first = records.first().ok_or(Error::Empty("record set"))?;
    let t_end = first.t_end;
    for r in records {
        if r.fingerprint != first.fingerprint {
            return Err(Error::RecordMismatch(format!(
                "fingerprints {} and {} differ",
                first.fingerprint, r.fingerprint
            )));
        }
    }
    let mut counts = vec![0usize; t1_bins.count * delay_bins.count];
    let mut pairs = 0usize;
    for r in records {
        let times = r.detection_times();
        for w in times.windows(2) {
            pairs += 1;
            if let (Some(i), Some(j)) = (t1_bins.index(w[0]), delay_bins.index(w[1] - w[0])) {
                counts[i * delay_bins.count + j] += 1;
            }
        }
    }
    let total = pairs.max(1) as f64;
    let values = counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let (i, j) = (k / delay_bins.count, k % delay_bins.count);
            let reachable = t1_bins.lower(i) + delay_bins.lower(j) < t_end;
            reachable.then(|| n as f64 / total)
        })
        .collect();
    Ok(ZetaHistogram { t1: t1_bins, delay: delay_bins, values, pairs, fingerprint: first.fingerprint.clone() })
}

/// `g²(t₁, t₁ + τ)` for each delay, from the ensemble propagator:
/// `Tr(A T_{t₂,t₁} A T_{t₁,0} ρ₀) / [Tr(A T_{t₁,0} ρ₀) Tr(A T_{t₂,0} ρ₀)]` with `A ρ = a ρ a†`.
///
/// `delays` must be sorted and non-negative.
pub fn g2_delays(
    t1: f64,
    delays: &[f64],
    params: &SystemParams,
    space: FockSpace,
    initial: &State,
    control: StepControl,
) -> Result<Vec<f64>> {
    if !(t1 >= 0.0) || delays.iter().any(|&d| !(d >= 0.0)) || delays.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("g2 needs t1 ≥ 0 and sorted non-negative delays".into()));
    }
    if initial.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: initial.dim() });
    }
    let generator = Generator::lindblad(params, space)?;
    let photon = Shift::for_channel(Channel::PhotonDetected, space);
    let mut integrator = Integrator::new(&generator, control)?;
    let mut rho = initial.density();
    integrator.propagate(&mut rho, t1)?;
    let first = photon.sandwich_trace(&rho);
    if !(first > 1e-14) {
        return Err(Error::UndefinedCorrelation(t1));
    }
    let mut after = photon.sandwich(&rho);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(delays.len());
    for &tau in delays {
        integrator.propagate(&mut rho, tau - t)?;
        // a ρ a† is Hermitian, so the Hermitian fast path applies.
        integrator.propagate(&mut after, tau - t)?;
        t = tau;
        let second = photon.sandwich_trace(&rho);
        if !(second > 1e-14) {
            return Err(Error::UndefinedCorrelation(t1 + tau));
        }
        out.push(photon.sandwich_trace(&after) / (first * second));
    }
    Ok(out)
}

pub fn g2(t1: f64, t2: f64, params: &SystemParams, space: FockSpace, initial: &State, control: StepControl) -> Result<f64> {
    if t2 < t1 {
        return Err(Error::InvalidArgument(format!("g2 needs t2 ≥ t1, got {t1}, {t2}")));
    }
    Ok(g2_delays(t1, &[t2 - t1], params, space, initial, control)?[0])
}

/// One `g²` row per `t₁`, computed on `workers` threads.
pub fn g2_grid(
    t1s: &[f64],
    delays: &[f64],
    params: &SystemParams,
    space: FockSpace,
    initial: &State,
    control: StepControl,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| t1s.par_iter().map(|&t1| g2_delays(t1, delays, params, space, initial, control)).collect())
}

/// Rows `t1, dt, value`.
pub fn write_g2_csv<W: Write>(mut w: W, fingerprint: &str, t1s: &[f64], delays: &[f64], grid: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# fingerprint={fingerprint}")?;
    writeln!(w, "t1,dt,value")?;
    for (t1, row) in t1s.iter().zip(grid) {
        for (dt, v) in delays.iter().zip(row) {
            writeln!(w, "{t1},{dt},{v}")?;
        }
    }
    Ok(())
}

/// Coincidence estimate of `g²(t₁, t₂)` from records: `E[N₁N₂] / (E[N₁] E[N₂])` with `N_i`
/// the detections in `[t_i, t_i + window)`. Returns the estimate and its jackknife
/// standard error.
pub fn g2_from_records(records: &[ClickRecord], t1: f64, t2: f64, window: f64) -> Result<(f64, f64)> {
    if records.len() < 2 {
        return Err(Error::Empty("need at least two records"));
    }
    let count = |r: &ClickRecord, lo: f64| r.events.iter().filter(|e| e.ch == Channel::PhotonDetected && e.t >= lo && e.t < lo + window).count() as f64;
    let xs: Vec<(f64, f64)> = records.iter().map(|r| (count(r, t1), count(r, t2))).collect();
    let n = xs.len() as f64;
    let (sx, sy, sxy) = xs.iter().fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| (a + x, b + y, c + x * y));
    let ratio = |sx: f64, sy: f64, sxy: f64, m: f64| (sxy / m) / ((sx / m) * (sy / m));
    let est = ratio(sx, sy, sxy, n);
    if !est.is_finite() {
        return Err(Error::UndefinedCorrelation(t1));
    }
    let leave_one: Vec<f64> = xs.iter().map(|(x, y)| ratio(sx - x, sy - y, sxy - x * y, n - 1.0)).collect();
    let mean = leave_one.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * leave_one.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok((est, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Negativity {
    /// `max(0, raw)`.
    pub value: f64,
    /// `(‖ρ^Γ‖₁ − 1)/2` before clamping; slightly negative values are round-off.
    pub raw: f64,
}

/// Negativity of the normalised state with respect to the cavity-mechanics split.
pub fn negativity(state: &State, space: FockSpace) -> Result<Negativity> {
    let rho = state.normalized()?;
    let pt = partial_transpose_mech(&rho, space)?;
    let trace_norm: f64 = hermitian_eigenvalues(&pt.matrix).iter().map(|v| v.abs()).sum();
    let raw = (trace_norm - 1.0) / 2.0;
    Ok(Negativity { value: raw.max(0.0), raw })
}

/// `⟨a†a⟩` of a density.
pub fn photon_number(rho: &CMatrix, space: FockSpace) -> f64 {
    (0..space.dim()).map(|i| space.levels(i).0 as f64 * rho[(i, i)].re).sum::<f64>() / trace(rho).re
}

/// `⟨a†² a²⟩ / ⟨a†a⟩²` of a density.
pub fn g2_zero_delay(rho: &CMatrix, space: FockSpace) -> Result<f64> {
    let n = photon_number(rho, space);
    if !(n > 1e-14) {
        return Err(Error::UndefinedCorrelation(0.0));
    }
    let tr = trace(rho).re;
    let pairs: f64 = (0..space.dim())
        .map(|i| {
            let k = space.levels(i).0 as f64;
            k * (k - 1.0) * rho[(i, i)].re
        })
        .sum::<f64>()
        / tr;
    Ok(pairs / (n * n))
}
