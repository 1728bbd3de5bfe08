//! Versioned experiment configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use optomech::fock::{coherent_state, thermal_state};
use optomech::inference::{GridSpec, PriorSpec};
use optomech::linalg::c;
use optomech::metrology::{BoundKind, BoundOptions};
use optomech::model::detuning_for_regime;
use optomech::open::StepControl;
use optomech::trajectory::{SamplerOptions, SamplingMode};
use optomech::{DetuningRegime, FockSpace, Parameter, State, SystemParams};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemParams,
    /// Runs the experiment once per regime with `Δ = −n g²/ω_M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<Vec<DetuningRegime>>,
    /// Runs the experiment once per factor with `Δ` scaled by it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_scales: Option<Vec<f64>>,
    pub space: SpaceSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dim_cavity: usize,
    pub dim_mech: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Cavity vacuum and a thermal mechanical state; `mbar` defaults to the bath's.
    VacuumThermal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mbar: Option<f64>,
    },
    CoherentProduct { alpha: [f64; 2], beta: [f64; 2] },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::VacuumThermal { mbar: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Simulate(SimulateSpec),
    Entanglement(EntanglementSpec),
    G2(G2Spec),
    Zeta(ZetaSpec),
    Infer(InferSpec),
    Bounds(BoundsSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Entanglement(_) => "entanglement",
            Experiment::G2(_) => "g2",
            Experiment::Zeta(_) => "zeta",
            Experiment::Infer(_) => "infer",
            Experiment::Bounds(_) => "bounds",
        }
    }
}

fn default_sampler() -> SamplerOptions {
    SamplerOptions { leakage_limit: 1.0, ..SamplerOptions::default() }
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub t_end: f64,
    #[serde(default = "default_one")]
    pub trajectories: usize,
    #[serde(default = "full_mode")]
    pub mode: SamplingMode,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerOptions,
}

fn full_mode() -> SamplingMode {
    SamplingMode::Full
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Undriven, undamped closed form with optional no-photon damping and one jump.
    Closed,
    /// Master equation against one conditional trajectory.
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntanglementSpec {
    pub dynamics: Dynamics,
    /// For closed dynamics in units of `1/ω_M`.
    pub t_end: f64,
    pub step: f64,
    /// Closed dynamics only: time of the single photon detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_at: Option<f64>,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerOptions,
    #[serde(default)]
    pub control: StepControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Spec {
    pub t1: Vec<f64>,
    pub max_delay: f64,
    pub delay_step: f64,
    #[serde(default)]
    pub control: StepControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaSpec {
    pub t_end: f64,
    pub trajectories: usize,
    #[serde(default = "default_bins")]
    pub t1_bins: usize,
    #[serde(default = "default_bins")]
    pub delay_bins: usize,
    /// Largest delay binned; defaults to `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay: Option<f64>,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerOptions,
    #[serde(default)]
    pub keep_records: bool,
}

fn default_bins() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSpec {
    pub parameter: Parameter,
    pub prior: PriorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub t_end: f64,
    pub checkpoint_every: f64,
    /// Number of sampled records; above one the MSE is also averaged.
    #[serde(default = "default_one")]
    pub records: usize,
    #[serde(default = "default_dt_bin")]
    pub dt_bin: f64,
    /// Let `Δ` follow `θ` through the configured regime.
    #[serde(default)]
    pub couple_detuning: bool,
    /// True value for the squared error; defaults to the system's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
    #[serde(default = "StepControl::adaptive")]
    pub control: StepControl,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerOptions,
}

fn default_dt_bin() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionKind {
    Ensemble,
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub kinds: Vec<BoundKind>,
    pub parameter: Parameter,
    /// Needed by van Trees kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Point for Cramér-Rao kinds; defaults to the system's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub evolutions: Vec<EvolutionKind>,
    /// Cavity-only variants alongside the full state.
    #[serde(default)]
    pub reduced: bool,
    pub t_end: f64,
    pub checkpoint_every: f64,
    /// Adds checkpoints just before and at every click of the conditional record.
    #[serde(default = "yes")]
    pub around_clicks: bool,
    #[serde(default)]
    pub options: BoundOptions,
    #[serde(default = "StepControl::adaptive")]
    pub control: StepControl,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerOptions,
}

fn yes() -> bool {
    true
}

/// One concrete run of the experiment after regimes and detuning factors are expanded.
#[derive(Debug, Clone)]
pub struct Variant {
    pub suffix: String,
    pub regime: Option<DetuningRegime>,
    pub system: SystemParams,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            bail!("format_version: expected {FORMAT_VERSION}, got {}", self.format_version);
        }
        self.system.validate().context("system")?;
        self.fock_space()?;
        if let Some(scales) = &self.detuning_scales {
            if scales.is_empty() || scales.iter().any(|s| !s.is_finite()) {
                bail!("detuning_scales: need finite factors");
            }
        }
        if matches!(self.regimes.as_deref(), Some([])) {
            bail!("regimes: empty list");
        }
        if self.workers == Some(0) {
            bail!("workers: must be at least 1");
        }
        let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(anyhow::anyhow!("{name}: must be positive")) };
        match &self.experiment {
            Experiment::Simulate(s) => {
                positive("t_end", s.t_end)?;
                if s.trajectories == 0 {
                    bail!("trajectories: must be at least 1");
                }
            }
            Experiment::Entanglement(s) => {
                positive("t_end", s.t_end)?;
                positive("step", s.step)?;
                if s.dynamics == Dynamics::Open {
                    self.system.validate_open().context("system")?;
                }
            }
            Experiment::G2(s) => {
                positive("max_delay", s.max_delay)?;
                positive("delay_step", s.delay_step)?;
                if s.t1.is_empty() || s.t1.iter().any(|t| *t < 0.0) {
                    bail!("t1: need non-negative times");
                }
            }
            Experiment::Zeta(s) => {
                positive("t_end", s.t_end)?;
                if s.trajectories == 0 {
                    bail!("trajectories: must be at least 1");
                }
                if self.regimes.as_ref().map_or(true, |r| r.len() != 2) || self.detuning_scales.is_some() {
                    bail!("regimes: the ζ comparison needs exactly two regimes and no detuning_scales");
                }
            }
            Experiment::Infer(s) => {
                positive("t_end", s.t_end)?;
                positive("checkpoint_every", s.checkpoint_every)?;
                positive("dt_bin", s.dt_bin)?;
                s.prior.validate().context("prior")?;
                if s.records == 0 {
                    bail!("records: must be at least 1");
                }
                if s.couple_detuning && self.regimes.is_none() {
                    bail!("couple_detuning: needs regimes");
                }
            }
            Experiment::Bounds(s) => {
                positive("t_end", s.t_end)?;
                positive("checkpoint_every", s.checkpoint_every)?;
                if s.kinds.is_empty() || s.evolutions.is_empty() {
                    bail!("kinds and evolutions: need at least one each");
                }
                let bayesian = s.kinds.iter().filter(|k| k.is_bayesian()).count();
                if bayesian != 0 && bayesian != s.kinds.len() {
                    bail!("kinds: do not mix van Trees and Cramér-Rao bounds in one run");
                }
                if bayesian > 0 && s.prior.is_none() {
                    bail!("prior: required by van Trees bounds");
                }
            }
        }
        Ok(())
    }

    pub fn fock_space(&self) -> Result<FockSpace> {
        FockSpace::new(self.space.dim_cavity, self.space.dim_mech).context("space")
    }

    pub fn initial_state(&self, system: &SystemParams) -> Result<State> {
        let space = self.fock_space()?;
        Ok(match &self.initial {
            InitialSpec::VacuumThermal { mbar } => State::product(
                &coherent_state(c(0.0, 0.0), space.dim_cavity).0,
                &thermal_state(mbar.unwrap_or(system.mbar), space.dim_mech).context("initial")?,
            ),
            InitialSpec::CoherentProduct { alpha, beta } => State::product(
                &coherent_state(c(alpha[0], alpha[1]), space.dim_cavity).0,
                &coherent_state(c(beta[0], beta[1]), space.dim_mech).0,
            ),
        })
    }

    pub fn resolved_workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Regimes × detuning factors, or the bare system when neither is set.
    pub fn variants(&self) -> Vec<Variant> {
        let regimes: Vec<Option<DetuningRegime>> = match &self.regimes {
            Some(r) => r.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let scales: Vec<Option<f64>> = match &self.detuning_scales {
            Some(s) => s.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for regime in &regimes {
            for scale in &scales {
                let mut system = self.system;
                let mut suffix = String::new();
                if let Some(r) = regime {
                    system.delta = detuning_for_regime(*r, system.g, system.omega_m);
                    suffix.push_str(&format!("-n{}", r.0));
                }
                if let Some(s) = scale {
                    system.delta *= s;
                    suffix.push_str(&format!("-d{s}"));
                }
                out.push(Variant { suffix, regime: *regime, system });
            }
        }
        out
    }
}

/// `0, step, 2·step, …` up to and including `t_end`.
pub fn time_grid(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if t_end - out[n] > 1e-9 * step {
        out.push(t_end);
    }
    out
}
