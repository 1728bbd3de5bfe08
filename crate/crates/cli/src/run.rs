//! Experiment pipelines and artifact bookkeeping.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use optomech::closed::{analytic_purity, apply_cavity_jump_pure, evolve_closed, linear_entropy, no_photon_rate};
use optomech::inference::{estimate_and_mse, mean_series, posterior, write_posterior_csv, GridSpec, InferenceModel};
use optomech::linalg::c;
use optomech::metrology::{bounds_series_many, BoundTarget, BoundVariant, Evolution};
use optomech::model::nonlinearity_check;
use optomech::open::{Generator, Integrator};
use optomech::statistics::{g2_grid, negativity, photon_number, write_g2_csv, zeta_histogram, Binning};
use optomech::trajectory::{read_records, replay_conditional, write_records, ClickRecord, Sampler, SamplingMode, Trajectory};
use optomech::{State, SystemParams};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
}

/// Collects artifacts under one directory, hashing each as it is written.
pub struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact { path: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() });
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn finish(self, command: &str, config: &ExperimentConfig) -> Result<Manifest> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tool: format!("optomech {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config: config.clone(),
            artifacts: self.artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

fn sample_ensemble(
    system: &SystemParams,
    cfg: &ExperimentConfig,
    mode: SamplingMode,
    options: optomech::trajectory::SamplerOptions,
    t_end: f64,
    count: usize,
    checkpoints: &[f64],
) -> Result<Vec<Trajectory>> {
    let space = cfg.fock_space()?;
    let initial = cfg.initial_state(system)?;
    let sampler = Sampler::new(system, space, &initial, mode, options)?;
    let out = sampler.sample_ensemble(t_end, cfg.seed, count, cfg.resolved_workers(), checkpoints)?;
    let worst = out.iter().map(|t| t.max_leakage).fold(0.0, f64::max);
    if worst > 1e-2 {
        log::warn!("largest top-level population along the sampled trajectories: {worst:.3}");
    }
    Ok(out)
}

fn records_jsonl(records: &[ClickRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records(records, &mut buf)?;
    Ok(buf)
}

/// Runs the configured experiment and writes its artifacts and manifest into `out_dir`.
pub fn run_experiment(command: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    if command != cfg.experiment.kind() {
        bail!("the configuration describes a {} experiment, not {command}", cfg.experiment.kind());
    }
    let mut out = Output::new(out_dir)?;
    match &cfg.experiment {
        Experiment::Simulate(spec) => simulate(cfg, spec, &mut out)?,
        Experiment::Entanglement(spec) => entanglement(cfg, spec, &mut out)?,
        Experiment::G2(spec) => g2(cfg, spec, &mut out)?,
        Experiment::Zeta(spec) => zeta(cfg, spec, &mut out)?,
        Experiment::Infer(spec) => infer(cfg, spec, &mut out)?,
        Experiment::Bounds(spec) => bounds(cfg, spec, &mut out)?,
    }
    out.finish(command, cfg)
}

fn simulate(cfg: &ExperimentConfig, spec: &SimulateSpec, out: &mut Output) -> Result<()> {
    for v in cfg.variants() {
        let trajs = sample_ensemble(&v.system, cfg, spec.mode, spec.sampler, spec.t_end, spec.trajectories, &[])?;
        let records: Vec<ClickRecord> = trajs.iter().map(|t| t.record.clone()).collect();
        out.write(&format!("records{}.jsonl", v.suffix), &records_jsonl(&records)?)?;
        let mut summary = String::from("stream,detected,events,max_leakage\n");
        for t in &trajs {
            summary += &format!("{},{},{},{}\n", t.record.stream, t.record.detected_count(), t.record.events.len(), t.max_leakage);
        }
        out.write(&format!("summary{}.csv", v.suffix), summary.as_bytes())?;
    }
    Ok(())
}

fn entanglement(cfg: &ExperimentConfig, spec: &EntanglementSpec, out: &mut Output) -> Result<()> {
    let space = cfg.fock_space()?;
    let times = time_grid(spec.t_end, spec.step);
    for v in cfg.variants() {
        let p = v.system;
        let initial = cfg.initial_state(&p)?;
        match spec.dynamics {
            Dynamics::Closed => {
                let k = p.g / p.omega_m;
                let r_closed = c(-p.delta / p.omega_m, 0.0);
                let r_watch = no_photon_rate(p.delta, p.kappa_d, p.omega_m);
                let coherent = match &cfg.initial {
                    InitialSpec::CoherentProduct { alpha, beta } => Some((c(alpha[0], alpha[1]), c(beta[0], beta[1]))),
                    InitialSpec::VacuumThermal { .. } => None,
                };
                let jumped = match spec.jump_at {
                    Some(tj) => Some((tj, apply_cavity_jump_pure(&evolve_closed(&initial, tj, k, r_watch, space)?, space)?)),
                    None => None,
                };
                let mut csv = String::from("t,entropy_closed,entropy_no_click,entropy_analytic,entropy_jump\n");
                for &t in &times {
                    let closed = linear_entropy(&evolve_closed(&initial, t, k, r_closed, space)?, space)?;
                    let watched = linear_entropy(&evolve_closed(&initial, t, k, r_watch, space)?, space)?;
                    let analytic = match coherent {
                        Some((a, b)) => (1.0 - analytic_purity(a, b, k, r_watch, t, None)?).to_string(),
                        None => String::new(),
                    };
                    let jump = match &jumped {
                        Some((tj, s)) if t >= *tj => linear_entropy(&evolve_closed(s, t - tj, k, r_watch, space)?, space)?,
                        _ => watched,
                    };
                    csv += &format!("{t},{closed},{watched},{analytic},{jump}\n");
                }
                out.write(&format!("entropy{}.csv", v.suffix), csv.as_bytes())?;
            }
            Dynamics::Open => {
                let generator = Generator::lindblad(&p, space)?;
                let mut integrator = Integrator::new(&generator, spec.control)?;
                let mut rho = initial.density();
                let mut now = 0.0;
                let mut ensemble = Vec::with_capacity(times.len());
                for &t in &times {
                    integrator.propagate(&mut rho, t - now)?;
                    now = t;
                    ensemble.push(State::Mixed(rho.clone()));
                }
                let inner = &times[..times.len() - 1];
                let traj = sample_ensemble(&p, cfg, SamplingMode::Detector, spec.sampler, spec.t_end, 1, inner)?.remove(0);
                let mut conditional = traj.checkpoints.clone();
                conditional.push(traj.final_state.clone());
                let mut csv = String::from("t,negativity_ensemble,negativity_conditional,photons_ensemble,photons_conditional\n");
                for ((t, e), s) in times.iter().zip(&ensemble).zip(&conditional) {
                    csv += &format!(
                        "{t},{},{},{},{}\n",
                        negativity(e, space)?.value,
                        negativity(s, space)?.value,
                        photon_number(&e.density(), space),
                        photon_number(&s.density(), space)
                    );
                }
                out.write(&format!("negativity{}.csv", v.suffix), csv.as_bytes())?;
                let clicks: String = traj.record.detection_times().iter().map(|t| format!("{t}\n")).collect();
                out.write(&format!("clicks{}.csv", v.suffix), format!("t\n{clicks}").as_bytes())?;
                out.write(&format!("record{}.jsonl", v.suffix), traj.record.to_jsonl().as_bytes())?;
            }
        }
    }
    Ok(())
}

fn g2(cfg: &ExperimentConfig, spec: &G2Spec, out: &mut Output) -> Result<()> {
    let space = cfg.fock_space()?;
    let delays = time_grid(spec.max_delay, spec.delay_step);
    for v in cfg.variants() {
        let initial = cfg.initial_state(&v.system)?;
        let grid = g2_grid(&spec.t1, &delays, &v.system, space, &initial, spec.control, cfg.resolved_workers())?;
        let mut buf = Vec::new();
        write_g2_csv(&mut buf, &v.system.fingerprint(), &spec.t1, &delays, &grid)?;
        out.write(&format!("g2{}.csv", v.suffix), &buf)?;
    }
    Ok(())
}

fn zeta(cfg: &ExperimentConfig, spec: &ZetaSpec, out: &mut Output) -> Result<()> {
    let t1_bins = Binning::new(0.0, spec.t_end, spec.t1_bins)?;
    let delay_bins = Binning::new(0.0, spec.max_delay.unwrap_or(spec.t_end), spec.delay_bins)?;
    let mut maps = Vec::new();
    for v in cfg.variants() {
        let trajs = sample_ensemble(&v.system, cfg, SamplingMode::Full, spec.sampler, spec.t_end, spec.trajectories, &[])?;
        let records: Vec<ClickRecord> = trajs.into_iter().map(|t| t.record).collect();
        if spec.keep_records {
            out.write(&format!("records{}.jsonl", v.suffix), &records_jsonl(&records)?)?;
        }
        let map = zeta_histogram(&records, t1_bins, delay_bins)?;
        let mut buf = Vec::new();
        map.write_csv(&mut buf)?;
        out.write(&format!("zeta{}.csv", v.suffix), &buf)?;
        maps.push((v.suffix, map));
    }
    let (first, second) = (&maps[1], &maps[0]);
    let diff = first.1.difference(&second.1)?;
    let mut csv = format!("# zeta{} minus zeta{}\nt1,dt,value\n", first.0, second.0);
    for i in 0..t1_bins.count {
        for j in 0..delay_bins.count {
            let value = diff[i * delay_bins.count + j].map(|x| x.to_string()).unwrap_or_default();
            csv += &format!("{},{},{value}\n", t1_bins.center(i), delay_bins.center(j));
        }
    }
    out.write("zeta-difference.csv", csv.as_bytes())?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut bands = String::from("delay_lo,delay_hi,mean_difference\n");
    for (lo, hi) in [(0.0, 2.0), (2.0, 10.0)] {
        bands += &format!("{lo},{hi},{}\n", fmt(first.1.delay_band_mean(&diff, lo, hi)));
    }
    out.write("zeta-bands.csv", bands.as_bytes())?;
    Ok(())
}

fn inference_model(cfg: &ExperimentConfig, v: &Variant, parameter: optomech::Parameter, control: optomech::open::StepControl) -> Result<InferenceModel> {
    let model = InferenceModel::new(v.system, parameter, cfg.fock_space()?, cfg.initial_state(&v.system)?);
    Ok(InferenceModel { control, ..model })
}

fn infer(cfg: &ExperimentConfig, spec: &InferSpec, out: &mut Output) -> Result<()> {
    let checkpoints = time_grid(spec.t_end, spec.checkpoint_every);
    let grid = spec.grid.unwrap_or_else(|| GridSpec::covering(&spec.prior));
    for v in cfg.variants() {
        let mut model = inference_model(cfg, &v, spec.parameter, spec.control)?;
        model.dt_bin = spec.dt_bin;
        if spec.couple_detuning {
            model.detuning_coupling = v.regime;
        }
        let truth = spec.truth.unwrap_or(v.system.get(spec.parameter));
        let trajs = sample_ensemble(&v.system, cfg, SamplingMode::Full, spec.sampler, spec.t_end, spec.records, &[])?;
        let records: Vec<ClickRecord> = trajs.into_iter().map(|t| t.record).collect();
        let single = records.len() == 1;
        out.write(&format!("{}{}.jsonl", if single { "record" } else { "records" }, v.suffix), &records_jsonl(&records)?)?;
        let mut series = Vec::new();
        for (k, record) in records.iter().enumerate() {
            let tag = if single { v.suffix.clone() } else { format!("{}-r{k}", v.suffix) };
            let post = posterior(record, &grid, &spec.prior, &checkpoints, &model, cfg.resolved_workers())?;
            let mut buf = Vec::new();
            write_posterior_csv(&mut buf, &post, &spec.prior, &grid, &record.fingerprint)?;
            out.write(&format!("posterior{tag}.csv"), &buf)?;
            let mse = estimate_and_mse(&post, Some(truth));
            let mut buf = Vec::new();
            mse.write_csv(&mut buf, &format!("parameter={} truth={truth} clicks={}", spec.parameter, record.detected_count()))?;
            out.write(&format!("mse{tag}.csv"), &buf)?;
            series.push(mse);
        }
        if !single {
            let mut buf = Vec::new();
            mean_series(&series).write_csv(&mut buf, &format!("parameter={} truth={truth} records={}", spec.parameter, records.len()))?;
            out.write(&format!("mse{}-average.csv", v.suffix), &buf)?;
        }
    }
    Ok(())
}

/// Regular checkpoints plus, when asked, one just before and one at every click.
pub fn bound_checkpoints(t_end: f64, every: f64, clicks: &[f64], around_clicks: bool) -> Vec<f64> {
    let mut times = time_grid(t_end, every);
    if around_clicks {
        for &t in clicks {
            times.push((t - 1e-6).max(0.0));
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn bounds(cfg: &ExperimentConfig, spec: &BoundsSpec, out: &mut Output) -> Result<()> {
    let mut variants = Vec::new();
    for &kind in &spec.kinds {
        variants.push(BoundVariant { kind, reduce_to_cavity: false });
        if spec.reduced {
            variants.push(BoundVariant { kind, reduce_to_cavity: true });
        }
    }
    let options = optomech::metrology::BoundOptions { workers: cfg.resolved_workers(), ..spec.options };
    for v in cfg.variants() {
        let model = inference_model(cfg, &v, spec.parameter, spec.control)?;
        let target = match spec.prior {
            Some(prior) => BoundTarget::Prior { prior, grid: spec.grid.unwrap_or_else(|| GridSpec::covering(&prior)) },
            None => BoundTarget::Point(spec.theta.unwrap_or(v.system.get(spec.parameter))),
        };
        let mut csv = String::from("t,value,kind,source\n");
        for evolution in &spec.evolutions {
            let series = match evolution {
                EvolutionKind::Ensemble => {
                    let checkpoints = time_grid(spec.t_end, spec.checkpoint_every);
                    bounds_series_many(&variants, &model, &target, Evolution::Ensemble, &checkpoints, &options)?
                }
                EvolutionKind::Conditional => {
                    let record = sample_ensemble(&v.system, cfg, SamplingMode::Full, spec.sampler, spec.t_end, 1, &[])?.remove(0).record;
                    out.write(&format!("record{}.jsonl", v.suffix), record.to_jsonl().as_bytes())?;
                    let checkpoints = bound_checkpoints(spec.t_end, spec.checkpoint_every, &record.detection_times(), spec.around_clicks);
                    bounds_series_many(&variants, &model, &target, Evolution::Conditional(&record), &checkpoints, &options)?
                }
            };
            for s in series {
                let mut buf = Vec::new();
                s.write_csv(&mut buf)?;
                csv += std::str::from_utf8(&buf)?.split_once('\n').map_or("", |(_, rows)| rows);
            }
        }
        out.write(&format!("bounds{}.csv", v.suffix), csv.as_bytes())?;
    }
    Ok(())
}

/// Conditional photon number and negativity along each stored record.
pub fn replay(cfg: &ExperimentConfig, records_path: &Path, step: f64, out_dir: &Path) -> Result<Manifest> {
    let file = std::fs::File::open(records_path).with_context(|| format!("opening {}", records_path.display()))?;
    let records = read_records(std::io::BufReader::new(file))?;
    let space = cfg.fock_space()?;
    let variants = cfg.variants();
    let mut out = Output::new(out_dir)?;
    for (k, record) in records.iter().enumerate() {
        let Some(v) = variants.iter().find(|v| v.system.fingerprint() == record.fingerprint) else {
            bail!("record {k} (fingerprint {}) matches no system in the configuration", record.fingerprint);
        };
        let times = time_grid(record.t_end, step);
        let states = replay_conditional(record, &v.system, space, &cfg.initial_state(&v.system)?, &times, optomech::open::StepControl::adaptive())?;
        let mut csv = String::from("t,photons,negativity\n");
        for (t, s) in times.iter().zip(&states) {
            csv += &format!("{t},{},{}\n", photon_number(&s.density(), space), negativity(s, space)?.value);
        }
        out.write(&format!("replay{}-{k}.csv", v.suffix), csv.as_bytes())?;
    }
    out.finish("replay", cfg)
}

#[derive(Debug, Serialize)]
pub struct VariantReport {
    pub suffix: String,
    pub fingerprint: String,
    pub g_over_kappa: f64,
    pub kerr_over_kappa: f64,
    pub nonlinear: bool,
    /// Largest top-level population along one short full-mode probe trajectory.
    pub probe_leakage: Option<f64>,
    pub probe_t_end: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub config: ExperimentConfig,
    pub variants: Vec<VariantReport>,
}

pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let open = !matches!(&cfg.experiment, Experiment::Entanglement(s) if s.dynamics == Dynamics::Closed);
    let mut variants = Vec::new();
    for v in cfg.variants() {
        let (g_over_kappa, kerr_over_kappa, nonlinear) = nonlinearity_check(&v.system);
        let (probe_leakage, probe_t_end) = if open && v.system.validate_open().is_ok() {
            let t = 20.0;
            let options = optomech::trajectory::SamplerOptions { leakage_limit: 1.0, ..Default::default() };
            let traj = sample_ensemble(&v.system, cfg, SamplingMode::Full, options, t, 1, &[])?.remove(0);
            (Some(traj.max_leakage), Some(t))
        } else {
            (None, None)
        };
        variants.push(VariantReport {
            suffix: v.suffix,
            fingerprint: v.system.fingerprint(),
            g_over_kappa,
            kerr_over_kappa,
            nonlinear,
            probe_leakage,
            probe_t_end,
        });
    }
    Ok(ValidationReport { config: cfg.clone(), variants })
}
