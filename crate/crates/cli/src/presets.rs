//! Named configurations for the standard studies.

use anyhow::{bail, Result};
use optomech::inference::{GridSpec, PriorSpec};
use optomech::linalg::c;
use optomech::metrology::{BoundKind, BoundOptions};
use optomech::open::StepControl;
use optomech::trajectory::SamplerOptions;
use optomech::{DetuningRegime, Parameter, SystemParams};

use crate::config::*;

pub const NAMES: &[&str] = &[
    "zeta-map", "negativity-n0", "negativity-n1", "negativity-n2", "g2-regimes", "infer-g-n0", "infer-g-n1", "infer-g-n2", "bounds-regimes", "closed-entropy", "near-linear-g",
    "near-linear-omega", "infer-averaged", "detuning-robustness",
];

fn sampler() -> SamplerOptions {
    SamplerOptions { leakage_limit: 1.0, ..SamplerOptions::default() }
}

fn sensing_prior() -> PriorSpec {
    PriorSpec { theta_min: 2.0, theta_max: 10.0, alpha: -1000.0 }
}

fn base(name: &str, system: SystemParams, dims: (usize, usize), experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        format_version: FORMAT_VERSION,
        name: Some(name.to_string()),
        system,
        regimes: None,
        detuning_scales: None,
        space: SpaceSpec { dim_cavity: dims.0, dim_mech: dims.1 },
        initial: InitialSpec::default(),
        seed: 1,
        workers: None,
        experiment,
    }
}

fn regime_suffix(name: &str) -> Option<DetuningRegime> {
    let n = name.rsplit_once("-n")?.1.parse().ok()?;
    Some(DetuningRegime(n))
}

fn sensing_inference(records: usize) -> Experiment {
    Experiment::Infer(InferSpec {
        parameter: Parameter::G,
        prior: sensing_prior(),
        grid: None,
        t_end: 1000.0,
        checkpoint_every: 5.0,
        records,
        dt_bin: 0.01,
        couple_detuning: false,
        truth: None,
        control: StepControl::adaptive(),
        sampler: sampler(),
    })
}

fn near_linear_inference(parameter: Parameter) -> Experiment {
    Experiment::Infer(InferSpec {
        parameter,
        prior: PriorSpec { theta_min: 0.0, theta_max: 10.0, alpha: -1000.0 },
        grid: None,
        t_end: 1000.0,
        checkpoint_every: 5.0,
        records: 1,
        dt_bin: 0.01,
        couple_detuning: false,
        truth: None,
        control: StepControl::adaptive(),
        sampler: sampler(),
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let sensing = SystemParams::sensing_preset(DetuningRegime::BLOCKADE);
    let cfg = match name {
        "zeta-map" => {
            let mut cfg = base(
                name,
                sensing,
                (6, 12),
                Experiment::Zeta(ZetaSpec {
                    t_end: 1000.0,
                    trajectories: 1000,
                    t1_bins: 25,
                    delay_bins: 25,
                    max_delay: None,
                    sampler: sampler(),
                    keep_records: false,
                }),
            );
            cfg.regimes = Some(vec![DetuningRegime::BLOCKADE, DetuningRegime::CASCADE]);
            cfg
        }
        "negativity-n0" | "negativity-n1" | "negativity-n2" => {
            let mut cfg = base(
                name,
                sensing,
                (6, 12),
                Experiment::Entanglement(EntanglementSpec {
                    dynamics: Dynamics::Open,
                    t_end: 20.0,
                    step: 0.05,
                    jump_at: None,
                    sampler: sampler(),
                    control: StepControl::default(),
                }),
            );
            cfg.regimes = regime_suffix(name).map(|r| vec![r]);
            cfg
        }
        "g2-regimes" => {
            let mut cfg = base(
                name,
                sensing,
                (6, 12),
                Experiment::G2(G2Spec { t1: vec![5.0, 150.0], max_delay: 10.0, delay_step: 0.05, control: StepControl::adaptive() }),
            );
            cfg.regimes = Some(vec![DetuningRegime::ON_RESONANCE, DetuningRegime::BLOCKADE, DetuningRegime::CASCADE]);
            cfg
        }
        "infer-g-n0" | "infer-g-n1" | "infer-g-n2" => {
            let mut cfg = base(name, sensing, (5, 10), sensing_inference(1));
            cfg.regimes = regime_suffix(name).map(|r| vec![r]);
            cfg
        }
        "bounds-regimes" => {
            let mut cfg = base(
                name,
                sensing,
                (5, 10),
                Experiment::Bounds(BoundsSpec {
                    kinds: vec![BoundKind::QVanTrees],
                    parameter: Parameter::G,
                    prior: Some(sensing_prior()),
                    grid: Some(GridSpec { lo: 2.0, hi: 10.0, nodes: 9 }),
                    theta: None,
                    evolutions: vec![EvolutionKind::Ensemble, EvolutionKind::Conditional],
                    reduced: true,
                    t_end: 200.0,
                    checkpoint_every: 2.0,
                    around_clicks: true,
                    options: BoundOptions::default(),
                    control: StepControl::adaptive(),
                    sampler: sampler(),
                }),
            );
            cfg.regimes = Some(vec![DetuningRegime::ON_RESONANCE, DetuningRegime::BLOCKADE, DetuningRegime::CASCADE]);
            cfg
        }
        "closed-entropy" => {
            let system = SystemParams {
                delta: 0.0,
                omega_m: 1.0,
                g: 1.0,
                omega_drive: c(0.0, 0.0),
                kappa_d: 0.04,
                kappa_l: 0.0,
                gamma: 0.0,
                mbar: 0.0,
            };
            let mut cfg = base(
                name,
                system,
                (12, 60),
                Experiment::Entanglement(EntanglementSpec {
                    dynamics: Dynamics::Closed,
                    t_end: 4.0 * std::f64::consts::PI,
                    step: 0.02,
                    jump_at: Some(std::f64::consts::PI),
                    sampler: sampler(),
                    control: StepControl::default(),
                }),
            );
            cfg.initial = InitialSpec::CoherentProduct { alpha: [1.0, 0.0], beta: [1.0, 0.0] };
            cfg
        }
        "near-linear-g" => base(name, SystemParams::near_linear_preset(), (8, 12), near_linear_inference(Parameter::G)),
        "near-linear-omega" => base(name, SystemParams::near_linear_preset(), (8, 12), near_linear_inference(Parameter::OmegaM)),
        "infer-averaged" => {
            let mut cfg = base(name, sensing, (5, 10), sensing_inference(20));
            cfg.regimes = Some(vec![DetuningRegime::BLOCKADE, DetuningRegime::CASCADE]);
            cfg
        }
        "detuning-robustness" => {
            let mut cfg = base(name, sensing, (5, 10), sensing_inference(1));
            cfg.regimes = Some(vec![DetuningRegime::BLOCKADE, DetuningRegime::CASCADE]);
            cfg.detuning_scales = Some(vec![0.9, 1.0, 1.1]);
            cfg
        }
        other => bail!("unknown preset {other:?}; available: {}", NAMES.join(", ")),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid_and_round_trips() {
        for name in NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name.as_deref(), Some(*name));
            assert_eq!(ExperimentConfig::parse(&cfg.to_json()).unwrap(), cfg);
        }
        assert!(preset("nonexistent").is_err());
    }

    #[test]
    fn sensing_presets_are_nonlinear() {
        let cfg = preset("infer-g-n1").unwrap();
        let (_, _, nonlinear) = optomech::model::nonlinearity_check(&cfg.variants()[0].system);
        assert!(nonlinear);
        let (_, _, nonlinear) = optomech::model::nonlinearity_check(&preset("near-linear-g").unwrap().system);
        assert!(!nonlinear);
        assert_eq!(preset("negativity-n2").unwrap().regimes, Some(vec![DetuningRegime::CASCADE]));
    }
}
