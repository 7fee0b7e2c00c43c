//! JSON scenario configs and the runner behind the command-line tool.
//!
//! Parsing is strict: unknown keys are errors. A config plus its seed fixes
//! every output byte; the worker count only changes how fast it runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::congruence::{complete_surface, crossing_report, launch, CompletionStrategy, CongruenceConfig, Sampler};
use crate::current::{CurrentField, NParticleCurrent, NParticleWaveFunction};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{FourVector, Hypersurface, Quadrature, SpatialBox, UniformFoliation};
use crate::interference::{Grid2, TwoFrequencyScenario, TwoFrequencySpec};
use crate::output::{write_crossings, write_grid, write_trajectories};
use crate::stats::{ks_p_value, ks_statistic};
use crate::trajectory::{integrate, integrate_n_particle, IntegratorConfig, NParticleMode, Status, Trajectory};
use crate::wavefunction::{Normalization, PlaneWaveMode, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: [f64; 3],
    #[serde(default)]
    pub m: f64,
    pub re_c: f64,
    #[serde(default)]
    pub im_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveFunctionSpec {
    pub modes: Vec<ModeSpec>,
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(default = "default_kind")]
    pub normalization_kind: Normalization,
}

fn default_kind() -> Normalization {
    Normalization::KleinGordon
}

impl WaveFunctionSpec {
    pub fn build(&self) -> Result<WaveFunction> {
        let modes = self
            .modes
            .iter()
            .map(|m| PlaneWaveMode::new(m.k, m.m, Complex64::new(m.re_c, m.im_c)))
            .collect::<Result<Vec<_>>>()?;
        WaveFunction::new(modes, self.volume, self.normalization_kind)
    }
}

/// Evenly spaced start events from `from` to `to` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartLine {
    pub from: [f64; 4],
    pub to: [f64; 4],
    pub n: usize,
}

impl StartLine {
    fn points(&self) -> Vec<FourVector> {
        let a = FourVector::from_array(self.from);
        let b = FourVector::from_array(self.to);
        (0..self.n)
            .map(|i| {
                let f = if self.n == 1 { 0.0 } else { i as f64 / (self.n - 1) as f64 };
                a + (b - a) * f
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleTrajectorySpec {
    pub wavefunction: WaveFunctionSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub starts: Vec<[f64; 4]>,
    #[serde(default)]
    pub start_line: Option<StartLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongruenceSpec {
    pub wavefunction: WaveFunctionSpec,
    #[serde(default = "congruence_integrator")]
    pub integrator: IntegratorConfig,
    /// Periodic box edge lengths; the launch and query surfaces are
    /// constant-time slices of it.
    #[serde(rename = "box")]
    pub box_lengths: Vec<f64>,
    #[serde(default)]
    pub launch_time: f64,
    pub query_times: Vec<f64>,
    pub n_samples: usize,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub quadrature_points: Option<usize>,
    /// Cells per axis for constant-sign region detection.
    #[serde(default = "default_sign_grid")]
    pub sign_grid_points: usize,
}

fn congruence_integrator() -> IntegratorConfig {
    IntegratorConfig { keep_samples: false, ..Default::default() }
}

fn default_sampler() -> Sampler {
    Sampler::RejectionMonteCarlo
}

fn default_batches() -> usize {
    32
}

fn default_sign_grid() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSpec {
    pub scenario: TwoFrequencySpec,
    pub grid: Grid2,
    /// Snapshot time for the exported densities.
    #[serde(default)]
    pub time: f64,
    /// Averaging window; one beat period when absent.
    #[serde(default)]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NParticleSpec {
    pub factors: Vec<WaveFunctionSpec>,
    #[serde(default)]
    pub symmetrize: bool,
    #[serde(default = "default_np_mode")]
    pub mode: NParticleMode,
    /// Constant foliation normal; the time direction when absent.
    #[serde(default)]
    pub foliation_normal: Option<[f64; 4]>,
    pub starts: Vec<[f64; 4]>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

fn default_np_mode() -> NParticleMode {
    NParticleMode::Foliated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    SingleTrajectory(SingleTrajectorySpec),
    CongruenceAnalysis(CongruenceSpec),
    Interference(InterferenceSpec),
    NParticle(NParticleSpec),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::SingleTrajectory(_) => "single-trajectory",
            Scenario::CongruenceAnalysis(_) => "congruence-analysis",
            Scenario::Interference(_) => "interference",
            Scenario::NParticle(_) => "n-particle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputNames {
    #[serde(default = "n_summary")]
    pub summary: String,
    #[serde(default = "n_traj")]
    pub trajectories: String,
    #[serde(default = "n_report")]
    pub report: String,
    #[serde(default = "n_crossings")]
    pub crossings: String,
    #[serde(default = "n_grid")]
    pub grid: String,
}

fn n_summary() -> String {
    "summary.json".into()
}
fn n_traj() -> String {
    "trajectories.csv".into()
}
fn n_report() -> String {
    "congruence_report.json".into()
}
fn n_crossings() -> String {
    "crossings.csv".into()
}
fn n_grid() -> String {
    "interference_grid.csv".into()
}

impl Default for OutputNames {
    fn default() -> Self {
        Self { summary: n_summary(), trajectories: n_traj(), report: n_report(), crossings: n_crossings(), grid: n_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub description: String,
    /// The result this scenario reproduces.
    #[serde(default)]
    pub claim: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputNames,
    pub scenario: Scenario,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Result of a run: the summary printed and the files written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Value,
    pub artifacts: Vec<PathBuf>,
    /// Trajectories that stopped on step underflow or the step limit.
    pub numerical_failures: usize,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn create(out: &Path, name: &str, artifacts: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let f = File::create(&path)?;
    artifacts.push(path);
    Ok(BufWriter::new(f))
}

/// Runs a scenario, writing artifacts and `summary.json` into `out`.
pub fn run(cfg: &ScenarioConfig, exec: Exec, out: &Path) -> Result<RunOutput> {
    std::fs::create_dir_all(out)?;
    let mut artifacts = Vec::new();
    let (body, failures) = match &cfg.scenario {
        Scenario::SingleTrajectory(s) => run_single(s, &cfg.outputs, exec, out, &mut artifacts)?,
        Scenario::CongruenceAnalysis(s) => run_congruence(s, cfg, exec, out, &mut artifacts)?,
        Scenario::Interference(s) => run_interference(s, &cfg.outputs, exec, out, &mut artifacts)?,
        Scenario::NParticle(s) => run_n_particle(s, &cfg.outputs, out, &mut artifacts)?,
    };
    let summary = json!({
        "kind": cfg.scenario.kind(),
        "description": cfg.description,
        "claim": cfg.claim,
        "seed": cfg.seed,
        "results": body,
        "numerical_failures": failures,
    });
    let mut w = create(out, &cfg.outputs.summary, &mut artifacts)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(RunOutput { summary, artifacts, numerical_failures: failures })
}

fn status_counts(trs: &[&Trajectory]) -> Value {
    let count = |s: Status| trs.iter().filter(|t| t.status() == s).count();
    json!({
        "completed": count(Status::Completed),
        "halted_at_stagnation": count(Status::HaltedAtStagnation),
        "left_domain": count(Status::LeftDomain),
        "halted_at_underflow": count(Status::HaltedAtUnderflow),
    })
}

/// `max |Δx¹/Δt − 1|` over consecutive samples.
fn max_dx_dt_deviation(trs: &[&Trajectory]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for tr in trs {
        for w in tr.samples.windows(2) {
            let dt = w[1].x.t - w[0].x.t;
            if dt != 0.0 {
                let dev = ((w[1].x.x - w[0].x.x) / dt - 1.0).abs();
                worst = Some(worst.map_or(dev, |m: f64| m.max(dev)));
            }
        }
    }
    worst
}

fn run_single(
    s: &SingleTrajectorySpec,
    names: &OutputNames,
    exec: Exec,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(Value, usize)> {
    let wf = s.wavefunction.build().map_err(config_err)?;
    let cf = CurrentField::new(wf).map_err(config_err)?;
    s.integrator.validate().map_err(config_err)?;
    let mut starts: Vec<FourVector> = s.starts.iter().map(|a| FourVector::from_array(*a)).collect();
    if let Some(line) = &s.start_line {
        starts.extend(line.points());
    }
    if starts.is_empty() {
        return Err(Error::Config("single-trajectory needs `starts` or `start_line`".into()));
    }
    let trs: Vec<Trajectory> = exec
        .map(starts.len(), |i| integrate(&cf, starts[i], &s.integrator))
        .into_iter()
        .collect::<Result<_>>()?;
    let refs: Vec<&Trajectory> = trs.iter().collect();
    let reversals: Vec<usize> = trs.iter().map(|t| t.time_reversals().count()).collect();
    let volume = cf.wavefunction().volume();
    let min_sampled = trs
        .iter()
        .flat_map(|t| t.samples.iter().map(|p| p.j.t))
        .fold(f64::INFINITY, f64::min);
    let failures = trs.iter().filter(|t| t.status() == Status::HaltedAtUnderflow).count();

    let mut w = create(out, &names.trajectories, artifacts)?;
    write_trajectories(&mut w, &trs)?;
    w.flush()?;

    Ok((
        json!({
            "trajectories": trs.len(),
            "status": status_counts(&refs),
            "time_reversal_events": reversals.iter().sum::<usize>(),
            "trajectories_with_time_reversal": reversals.iter().filter(|&&r| r > 0).count(),
            "min_vj0_bound": volume * cf.time_component_lower_bound(),
            "min_vj0_on_trajectories": volume * min_sampled,
            "max_abs_dx_dt_minus_1": max_dx_dt_deviation(&refs),
        }),
        failures,
    ))
}

fn run_congruence(
    s: &CongruenceSpec,
    cfg: &ScenarioConfig,
    exec: Exec,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(Value, usize)> {
    let wf = s.wavefunction.build().map_err(config_err)?;
    let cf = CurrentField::new(wf).map_err(config_err)?;
    let bx = SpatialBox::new(&s.box_lengths).map_err(config_err)?;
    if s.query_times.is_empty() {
        return Err(Error::Config("congruence-analysis needs at least one query time".into()));
    }
    let launch_s = Hypersurface::periodic_time_slice(s.launch_time, &bx);
    let queries: Vec<Hypersurface> = s.query_times.iter().map(|t| Hypersurface::periodic_time_slice(*t, &bx)).collect();
    let ccfg = CongruenceConfig {
        integrator: s.integrator.clone(),
        watch: queries.clone(),
        batches: s.batches,
        quadrature_points: s.quadrature_points,
    };
    ccfg.integrator.validate().map_err(config_err)?;
    let c = launch(&cf, &launch_s, s.n_samples, s.sampler, cfg.seed, &ccfg, exec)?;
    let quad = s.quadrature_points.map(Quadrature::new).unwrap_or_else(|| Quadrature::default_for(bx.dims()));

    let mut per_query = Vec::new();
    let mut all_rows = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let r = crossing_report(&c, q)?;
        let abs_quadrature = q.integrate(quad, |x, ds| cf.current(x).dot(ds).abs());
        let first = complete_surface(&c, q, CompletionStrategy::FirstCrossingSelection, &cf, s.sign_grid_points)
            .map(|cs| json!(cs.coverage_mass))
            .unwrap_or(Value::Null);
        let signs = complete_surface(&c, q, CompletionStrategy::ConnectedConstantSignPatches, &cf, s.sign_grid_points)
            .ok();
        per_query.push(json!({
            "time": s.query_times[qi],
            "unsigned_flux": r.unsigned_flux,
            "signed_flux": r.signed_flux,
            "abs_density_quadrature": abs_quadrature,
            "first_crossing_mass": r.first_crossing_mass,
            "never_crossing": r.never_crossing,
            "never_crossing_left_domain": r.never_crossing_left_domain,
            "grazing": r.grazing,
            "histogram": r.histogram,
            "complete_surface_first_crossing": first,
            "constant_sign_regions": signs.as_ref().map(|cs| json!({
                "regions": cs.regions.len(),
                "largest_region_mass": cs.coverage_mass,
                "certificate": cs.certificate,
                "region_masses": cs.regions.iter().map(|r| json!({
                    "sign": r.sign,
                    "mass": r.mass,
                    "quadrature_mass": r.quadrature_mass,
                    "recrossings": r.recrossings,
                })).collect::<Vec<_>>(),
            })),
        }));
        all_rows.extend(r.crossings);
    }

    // KS distance of the launch positions against the launch density along
    // the first axis, for one-dimensional boxes.
    let launch_ks = (bx.dims() == 1).then(|| {
        let n = 4096;
        let l = bx.lengths()[0];
        let mut cdf = vec![0.0; n + 1];
        for i in 0..n {
            let x = FourVector::new(s.launch_time, (i as f64 + 0.5) * l / n as f64, 0.0, 0.0);
            cdf[i + 1] = cdf[i] + cf.time_component(x).abs();
        }
        let total = cdf[n];
        let xs: Vec<f64> = c.members.iter().map(|m| m.launch.x).collect();
        let d = ks_statistic(&xs, |x| {
            let r = (x / l * n as f64).clamp(0.0, n as f64);
            let i = (r as usize).min(n - 1);
            (cdf[i] + (r - i as f64) * (cdf[i + 1] - cdf[i])) / total
        });
        json!({ "statistic": d, "p_value": ks_p_value(d, xs.len()) })
    });

    let failures = c.members.iter().filter(|m| m.trajectory.status() == Status::HaltedAtUnderflow).count();
    let refs: Vec<&Trajectory> = c.members.iter().map(|m| &m.trajectory).collect();
    let summary = json!({
        "n_samples": c.len(),
        "sampler": s.sampler,
        "launch_mass": c.launch_mass,
        "total_weight": c.total_weight(),
        "status": status_counts(&refs),
        "launch_ks": launch_ks,
        "queries": per_query,
    });

    let mut w = create(out, &cfg.outputs.report, artifacts)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    let mut w = create(out, &cfg.outputs.crossings, artifacts)?;
    write_crossings(&mut w, &all_rows)?;
    w.flush()?;
    Ok((summary, failures))
}

fn run_interference(
    s: &InterferenceSpec,
    names: &OutputNames,
    exec: Exec,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(Value, usize)> {
    let sc = TwoFrequencyScenario::new(s.scenario.clone()).map_err(config_err)?;
    let window = match s.window {
        Some(w) => w,
        None if sc.beat() > 0.0 => std::f64::consts::TAU / sc.beat(),
        None => 1.0,
    };
    let rows = sc.grid_rows(&s.grid, s.time, window, exec).map_err(config_err)?;
    let map = sc.deviation_map(&s.grid, window, exec).map_err(config_err)?;
    let alpha = sc.alpha();
    let decomposition_residual = rows
        .iter()
        .map(|r| (r.j0 - r.rho - (alpha - 1.0) * r.interference).abs())
        .fold(0.0, f64::max);
    let negative = rows.iter().filter(|r| r.j0 < 0.0).count();

    let mut w = create(out, &names.grid, artifacts)?;
    write_grid(&mut w, &rows)?;
    w.flush()?;
    Ok((
        json!({
            "alpha": alpha,
            "eta": sc.eta(),
            "window": window,
            "grid_points": rows.len(),
            "max_abs_j0_minus_rho_minus_alpha_minus_1_I": decomposition_residual,
            "negative_j0_fraction": negative as f64 / rows.len() as f64,
            "deviation_max_abs": map.max_abs(),
            "deviation_correlation_length": map.correlation_length,
            "beat_length": map.reference_length,
        }),
        0,
    ))
}

fn run_n_particle(
    s: &NParticleSpec,
    names: &OutputNames,
    out: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(Value, usize)> {
    let factors: Vec<WaveFunction> = s.factors.iter().map(|f| f.build()).collect::<Result<_>>().map_err(config_err)?;
    let refs: Vec<&WaveFunction> = factors.iter().collect();
    let wf = if s.symmetrize {
        NParticleWaveFunction::symmetrized_product(&refs)
    } else {
        NParticleWaveFunction::product(&refs)
    }
    .map_err(config_err)?;
    let npc = match s.foliation_normal {
        Some(n) => NParticleCurrent::new(
            wf,
            std::sync::Arc::new(UniformFoliation::new(FourVector::from_array(n)).map_err(config_err)?),
        ),
        None => NParticleCurrent::with_time_foliation(wf),
    };
    let starts: Vec<FourVector> = s.starts.iter().map(|a| FourVector::from_array(*a)).collect();
    s.integrator.validate().map_err(config_err)?;
    let trs = integrate_n_particle(&npc, &starts, s.mode, &s.integrator).map_err(|e| match e {
        Error::NotOnLeaf { .. } | Error::InvalidInput(_) => config_err(e),
        other => other,
    })?;

    // For unsymmetrized products each path is tangent to its own factor's
    // current; the largest angle between the two directions is reported.
    let direction_deviation = (!s.symmetrize).then(|| {
        let mut worst: f64 = 0.0;
        for (a, tr) in trs.iter().enumerate() {
            let single = CurrentField::new(factors[a].clone()).ok();
            for p in &tr.samples {
                if let Some(cf) = &single {
                    let j1 = cf.current(p.x);
                    let (na, nb) = (p.j.euclidean_norm(), j1.euclidean_norm());
                    if na > 0.0 && nb > 0.0 {
                        let d = (p.j * (1.0 / na) - j1 * (1.0 / nb * p.j.t.signum() * j1.t.signum()))
                            .euclidean_norm();
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    });

    let refs: Vec<&Trajectory> = trs.iter().collect();
    let failures = trs.iter().filter(|t| t.status() == Status::HaltedAtUnderflow).count();
    let mut w = create(out, &names.trajectories, artifacts)?;
    write_trajectories(&mut w, &trs)?;
    w.flush()?;
    Ok((
        json!({
            "particles": trs.len(),
            "mode": s.mode,
            "symmetrized": s.symmetrize,
            "status": status_counts(&refs),
            "time_reversal_events": trs.iter().map(|t| t.time_reversals().count()).sum::<usize>(),
            "max_direction_deviation_from_factor": direction_deviation,
        }),
        failures,
    ))
}
