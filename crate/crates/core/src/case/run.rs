//! Run orchestration: builds the solver for a case, drives the time loop, and
//! writes snapshots, the coefficient series, checkpoints and the summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{CaseConfig, InitialCondition, SolverKind};
use super::io::{self, SeriesWriter, VtkSnapshot};
use super::summary::{summarize, Summary};
use crate::boundary::SideBc;
use crate::compressible::{CompressibleSolver, CompressibleState};
use crate::error::{Error, IoError, SolverError};
use crate::geometry::ImmersedBoundary;
use crate::grid::{FieldSet, RectilinearGrid};
use crate::incompressible::{IncompressibleState, PisoSolver};
use crate::observer::ObserverState;
use crate::post::{
    force_coefficients, surface_sample, Coefficients, PanelSample, ProbeFields, Reference, SurfacePanelization,
};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SHIBCK01";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const LOG_FILE: &str = "run.log";

/// Solution state of either solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowState {
    Incompressible(IncompressibleState),
    Compressible(CompressibleState),
}

impl FlowState {
    pub fn fields(&self) -> &FieldSet {
        match self {
            FlowState::Incompressible(s) => &s.fields,
            FlowState::Compressible(s) => &s.fields,
        }
    }
    pub fn observer(&self) -> &ObserverState {
        match self {
            FlowState::Incompressible(s) => &s.observer,
            FlowState::Compressible(s) => &s.observer,
        }
    }
    pub fn step(&self) -> u64 {
        match self {
            FlowState::Incompressible(s) => s.step,
            FlowState::Compressible(s) => s.step,
        }
    }
    /// Physical time.
    pub fn time(&self) -> f64 {
        match self {
            FlowState::Incompressible(s) => s.time,
            FlowState::Compressible(s) => s.time,
        }
    }
}

/// Bookkeeping carried across restarts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// (step, time in t_A, coefficients).
    pub series: Vec<(u64, f64, Coefficients)>,
    /// Physical times of the next snapshot and checkpoint.
    pub next_snapshot: f64,
    pub next_checkpoint: f64,
    /// Step of the most recent snapshot.
    pub last_snapshot: Option<u64>,
    /// Kinetic energy at t = 0.
    pub ke0: f64,
    /// Σ f_ρ V and net inflow of the last step.
    pub mass_source_rate: f64,
    pub inflow_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub state: FlowState,
    pub progress: Progress,
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut bytes = CHECKPOINT_MAGIC.to_vec();
        bincode::serialize_into(&mut bytes, self).map_err(|e| IoError::format(path, e.to_string()))?;
        io::write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
        let body = bytes
            .strip_prefix(CHECKPOINT_MAGIC.as_slice())
            .ok_or_else(|| IoError::format(path, "not a checkpoint file"))?;
        bincode::deserialize(body).map_err(|e| IoError::format(path, e.to_string()))
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Finished,
    /// Stopped by the step budget before the end time.
    StepLimit,
    Diverged,
    SolverFailure,
}

impl RunStatus {
    /// Process exit code for the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Finished | RunStatus::StepLimit => 0,
            RunStatus::Diverged => 2,
            RunStatus::SolverFailure => 3,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Size of the worker pool; rayon's default when `None`.
    pub workers: Option<usize>,
    /// Steps to take in this invocation.
    pub max_steps: Option<u64>,
    /// Overrides the config's output directory.
    pub output: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub output: PathBuf,
    /// The step failure behind a `Diverged` or `SolverFailure` status.
    pub error: Option<Error>,
}

/// Grid, immersed boundary and surface panels of a case.
pub struct Case {
    pub config: CaseConfig,
    pub hash: String,
    pub grid: RectilinearGrid,
    pub ib: ImmersedBoundary,
    pub panels: Option<SurfacePanelization>,
}

impl Case {
    pub fn new(config: CaseConfig) -> Result<Self, Error> {
        config.validate()?;
        let grid = config.build_grid()?;
        let body = config.build_body()?;
        let ib = if body.is_empty() { ImmersedBoundary::empty(&grid) } else { ImmersedBoundary::new(&grid, body)? };
        let panels = if ib.body.is_bounded() {
            Some(SurfacePanelization::new(&ib.body, config.run.panels, [1.0, 0.0, 0.0])?)
        } else {
            None
        };
        let hash = config.hash();
        Ok(Case { config, hash, grid, ib, panels })
    }

    pub fn flow(&self) -> Result<Flow<'_>, SolverError> {
        let c = &self.config;
        Ok(match c.solver {
            SolverKind::Incompressible => Flow::Incompressible(PisoSolver::new(
                &self.grid,
                self.ib.clone(),
                c.boundary.clone(),
                c.piso_config(),
                c.observer_config(),
            )?),
            SolverKind::Compressible => Flow::Compressible(CompressibleSolver::new(
                &self.grid,
                self.ib.clone(),
                c.boundary.clone(),
                c.compressible_config(),
                c.observer_config(),
            )?),
        })
    }

    /// Free-stream reference: ρ = U = 1, L = L_ref, planar or frontal area.
    pub fn reference(&self) -> Reference {
        let l = self.config.reference_length();
        let area = if self.grid.dim() == 2 { l } else { std::f64::consts::PI * l * l / 4.0 };
        Reference::planar(1.0, 1.0, self.config.p_inf(), self.config.viscosity(), l, area, 0.0)
    }

    /// ρU through the inlet sides.
    pub fn inlet_mass_flux(&self) -> f64 {
        let g = &self.grid;
        let (lo, hi) = (g.lower(), g.upper());
        let dim = g.dim();
        self.config
            .boundary
            .sides
            .iter()
            .enumerate()
            .filter_map(|(k, s)| match s {
                SideBc::Inlet { velocity } => {
                    let axis = k / 2;
                    let area: f64 = (0..dim).filter(|&d| d != axis).map(|d| hi[d] - lo[d]).product();
                    Some(velocity[axis].abs() * area)
                }
                _ => None,
            })
            .sum()
    }

    pub fn surface_samples(&self, fields: &FieldSet) -> Result<Option<Vec<PanelSample>>, Error> {
        let Some(panels) = &self.panels else { return Ok(None) };
        let t = (self.config.solver == SolverKind::Compressible).then_some(fields.t.as_slice());
        let probe = ProbeFields { p: &fields.p, u: &fields.u, t };
        Ok(Some(surface_sample(&self.grid, &self.ib.kinds, panels, probe, self.config.wall_temperature())?))
    }

    pub fn coefficients(&self, fields: &FieldSet) -> Result<Option<Coefficients>, Error> {
        match (self.surface_samples(fields)?, &self.panels) {
            (Some(s), Some(p)) => Ok(Some(force_coefficients(p, &s, &self.reference())?)),
            _ => Ok(None),
        }
    }
}

pub enum Flow<'g> {
    Incompressible(PisoSolver<'g>),
    Compressible(CompressibleSolver<'g>),
}

/// Per-step diagnostics common to both solvers.
#[derive(Clone, Debug, Default)]
pub struct StepInfo {
    pub dt: f64,
    pub observer_median_e: Vec<f64>,
    pub mass_source_rate: f64,
    pub inflow_rate: f64,
}

impl Flow<'_> {
    pub fn initial_state(&self, config: &CaseConfig) -> FlowState {
        match self {
            Flow::Incompressible(s) => {
                let g = s.grid;
                let st = match &config.initial {
                    InitialCondition::Uniform { velocity } => s.initial_state(*velocity, config.p_inf()),
                    InitialCondition::TaylorGreen => {
                        let mut f = FieldSet::zeros(g);
                        for c in 0..g.n_cells() {
                            let x = g.center(c);
                            f.u[0][c] = x[0].sin() * x[1].cos();
                            f.u[1][c] = -x[0].cos() * x[1].sin();
                            f.p[c] = config.p_inf() + 0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos());
                            f.rho[c] = 1.0;
                        }
                        s.state_from_fields(f)
                    }
                };
                FlowState::Incompressible(st)
            }
            Flow::Compressible(s) => {
                let mut f = FieldSet::zeros(s.grid());
                let fs = s.config().free_stream;
                let velocity = match &config.initial {
                    InitialCondition::Uniform { velocity } => *velocity,
                    InitialCondition::TaylorGreen => unreachable!("rejected by validation"),
                };
                f.rho.iter_mut().for_each(|v| *v = fs.rho);
                f.t.iter_mut().for_each(|v| *v = fs.t);
                for d in 0..s.grid().dim() {
                    f.u[d].iter_mut().for_each(|v| *v = velocity[d]);
                }
                FlowState::Compressible(s.state_from_fields(f))
            }
        }
    }

    pub fn advance(&self, state: &mut FlowState) -> Result<StepInfo, SolverError> {
        match (self, state) {
            (Flow::Incompressible(s), FlowState::Incompressible(st)) => {
                let r = s.advance(st)?;
                Ok(StepInfo { dt: r.dt, observer_median_e: r.observer_median_e, ..Default::default() })
            }
            (Flow::Compressible(s), FlowState::Compressible(st)) => {
                let r = s.advance(st)?;
                Ok(StepInfo {
                    dt: r.dt,
                    observer_median_e: r.observer_median_e,
                    mass_source_rate: r.mass_source_rate,
                    inflow_rate: r.inflow_rate,
                })
            }
            _ => Err(SolverError::Invalid("state does not belong to this solver".into())),
        }
    }

    pub fn kinetic_energy(&self, fields: &FieldSet) -> f64 {
        match self {
            Flow::Incompressible(s) => s.kinetic_energy(fields),
            Flow::Compressible(s) => {
                let g = s.grid();
                0.5 * (0..g.n_cells())
                    .map(|c| fields.rho[c] * (0..g.dim()).map(|d| fields.u[d][c].powi(2)).sum::<f64>() * g.volume(c))
                    .sum::<f64>()
            }
        }
    }
}

/// Min/max of ρ, p, T and max|u|, for failure diagnostics.
pub fn field_extrema(f: &FieldSet) -> String {
    let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let (r0, r1) = range(&f.rho);
    let (p0, p1) = range(&f.p);
    let (t0, t1) = range(&f.t);
    let umax = (0..f.n_cells())
        .map(|c| f.u.iter().map(|u| u[c] * u[c]).sum::<f64>().sqrt())
        .fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) });
    format!("rho [{r0:.4e}, {r1:.4e}], p [{p0:.4e}, {p1:.4e}], T [{t0:.4e}, {t1:.4e}], max|u| {umax:.4e}")
}

/// Runs (or resumes) a case to its end time or step budget on a pool of
/// `options.workers` threads.
pub fn run_case(config: &CaseConfig, options: &RunOptions) -> Result<RunOutcome, Error> {
    match options.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SolverError::Invalid(format!("worker pool: {e}")))?;
            pool.install(|| run_in_pool(config, options))
        }
        None => run_in_pool(config, options),
    }
}

struct Artifacts<'a> {
    dir: PathBuf,
    case: &'a Case,
    series: SeriesWriter,
    log: fs::File,
}

impl Artifacts<'_> {
    fn log_line(&mut self, line: &str) -> Result<(), IoError> {
        let path = self.dir.join(LOG_FILE);
        self.log.write_all(format!("{line}\n").as_bytes()).map_err(|e| IoError::io(path, e))
    }

    fn snapshot(&self, state: &FlowState) -> Result<(), IoError> {
        let c = self.case;
        let title = format!("sharpib {} step {} time {:.6e} config {}", c.config.name, state.step(), state.time(), c.hash);
        let snap = VtkSnapshot::new(&c.grid, state.fields(), &c.ib.kinds, title);
        io::emit_snapshot(&io::snapshot_path(&self.dir, state.step()), &snap, c.config.run.vtk)
    }

    fn checkpoint(&self, state: &FlowState, progress: &Progress, name: &str) -> Result<(), IoError> {
        let ck = Checkpoint { config_hash: self.case.hash.clone(), state: state.clone(), progress: progress.clone() };
        let dir = self.dir.join("checkpoints");
        fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
        ck.write(&dir.join(name))
    }
}

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join("checkpoints").join(name)
}

fn run_in_pool(config: &CaseConfig, options: &RunOptions) -> Result<RunOutcome, Error> {
    let case = Case::new(config.clone())?;
    let flow = case.flow()?;
    let dir = options.output.clone().unwrap_or_else(|| config.output_dir());
    io::claim_output_dir(&dir, &case.hash, &config.name)?;
    io::write_atomic(&dir.join("case.toml"), config.canonical().as_bytes())?;

    let (mut state, mut progress) = match &options.resume {
        Some(path) => {
            let ck = Checkpoint::read(path)?;
            if ck.config_hash != case.hash {
                return Err(IoError::MixedProvenance { path: path.clone(), found: ck.config_hash, expected: case.hash }.into());
            }
            log::info!("resuming {} from step {} (t = {:.6})", config.name, ck.state.step(), ck.state.time());
            (ck.state, ck.progress)
        }
        None => {
            let state = flow.initial_state(config);
            let progress = Progress { ke0: flow.kinetic_energy(state.fields()), ..Default::default() };
            (state, progress)
        }
    };
    if options.resume.is_none() {
        for stale in [io::SERIES_FILE, SUMMARY_FILE, LOG_FILE] {
            let _ = fs::remove_file(dir.join(stale));
        }
    }
    let series = SeriesWriter::create(&dir, &case.hash, &progress.series)?;
    let log_path = dir.join(LOG_FILE);
    let log = fs::OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| IoError::io(&log_path, e))?;
    let mut art = Artifacts { dir: dir.clone(), case: &case, series, log };
    art.log_line(&format!("# case {} config_hash {} start step {}", config.name, case.hash, state.step()))?;

    let t_a = config.t_a();
    let t_end = config.run.end_time * t_a;
    let snapshot_dt = config.run.snapshot_every.map(|v| v * t_a);
    let checkpoint_dt = config.run.checkpoint_every.map(|v| v * t_a);
    let eps = 1e-9 * t_a;
    let clock = Instant::now();
    let mut taken = 0u64;

    if state.step() == 0 && progress.series.is_empty() {
        sample_coefficients(&case, &state, &mut progress, &art)?;
    }
    let mut failure = None;
    let status = loop {
        if let Some(every) = snapshot_dt {
            if state.time() >= progress.next_snapshot - eps {
                while progress.next_snapshot <= state.time() + eps {
                    progress.next_snapshot += every;
                }
                progress.last_snapshot = Some(state.step());
                art.snapshot(&state)?;
            }
        }
        if let Some(every) = checkpoint_dt {
            if state.time() >= progress.next_checkpoint - eps {
                while progress.next_checkpoint <= state.time() + eps {
                    progress.next_checkpoint += every;
                }
                if state.step() > 0 {
                    art.checkpoint(&state, &progress, &format!("step_{:09}.ckpt", state.step()))?;
                }
            }
        }
        if state.time() >= t_end - eps {
            break RunStatus::Finished;
        }
        if options.max_steps.is_some_and(|m| taken >= m) {
            break RunStatus::StepLimit;
        }
        let info = match flow.advance(&mut state) {
            Ok(info) => info,
            Err(source) => {
                let status = match source {
                    SolverError::Diverged { .. } | SolverError::Positivity { .. } | SolverError::Flux(_) => {
                        RunStatus::Diverged
                    }
                    _ => RunStatus::SolverFailure,
                };
                let extrema = field_extrema(state.fields());
                failure = Some(Error::Step { step: state.step() + 1, time: state.time(), source, extrema });
                break status;
            }
        };
        taken += 1;
        progress.mass_source_rate = info.mass_source_rate;
        progress.inflow_rate = info.inflow_rate;
        if state.step() % config.run.coefficients_every == 0 {
            sample_coefficients(&case, &state, &mut progress, &art)?;
        }
        if state.step() % 100 == 0 {
            let last = progress.series.last().map(|r| r.2).unwrap_or_default();
            let e = info.observer_median_e.iter().fold(0.0_f64, |m, v| m.max(*v));
            let line = format!(
                "step {} t {:.6} dt {:.4e} cd {:.6} cl {:.6} median|E| {:.3e} wall {:.1}s",
                state.step(),
                state.time() / t_a,
                info.dt,
                last.cd,
                last.cl,
                e,
                clock.elapsed().as_secs_f64()
            );
            log::info!("{line}");
            art.log_line(&line)?;
        }
    };

    if let Some(e) = &failure {
        log::error!("{e}");
        art.log_line(&format!("failure: {e}"))?;
    } else {
        if snapshot_dt.is_some() && progress.last_snapshot != Some(state.step()) {
            progress.last_snapshot = Some(state.step());
            art.snapshot(&state)?;
        }
        art.checkpoint(&state, &progress, FINAL_CHECKPOINT)?;
    }
    let summary = summarize(&case, &flow, &state, &progress, status, failure.as_ref().map(|e| e.to_string()))?;
    summary.write(&dir)?;
    write_profiles(&case, &state, &dir)?;
    art.log_line(&format!("# end status {:?} step {} wall {:.1}s", status, state.step(), clock.elapsed().as_secs_f64()))?;
    Ok(RunOutcome { summary, output: dir, error: failure })
}

fn sample_coefficients(case: &Case, state: &FlowState, progress: &mut Progress, art: &Artifacts) -> Result<(), Error> {
    if let Some(c) = case.coefficients(state.fields())? {
        let t = state.time() / case.config.t_a();
        progress.series.push((state.step(), t, c));
        art.series.append(state.step(), t, &c)?;
    }
    Ok(())
}

/// Polar C_p and C_f profiles of the given state, when the case has a body.
pub fn write_profiles(case: &Case, state: &FlowState, dir: &Path) -> Result<(), Error> {
    let (Some(panels), Some(samples)) = (&case.panels, case.surface_samples(state.fields())?) else {
        return Ok(());
    };
    let bins = crate::post::wall_profiles(panels, &samples, &case.reference(), case.config.run.profile_bins)?;
    let mut text = format!("# config_hash = {}\ntheta_lo,theta_hi,cp,cf\n", case.hash);
    for b in bins {
        text.push_str(&format!("{:.8e},{:.8e},{:.10e},{:.10e}\n", b.theta_lo, b.theta_hi, b.cp, b.cf));
    }
    io::write_atomic(&dir.join("profiles.csv"), text.as_bytes())?;
    Ok(())
}

/// Recomputes the summary and profiles from the final checkpoint of `dir`.
pub fn post_process(config: &CaseConfig, dir: &Path) -> Result<Summary, Error> {
    let case = Case::new(config.clone())?;
    let found = io::read_provenance(dir)?;
    if found.config_hash != case.hash {
        return Err(IoError::MixedProvenance { path: dir.to_path_buf(), found: found.config_hash, expected: case.hash }.into());
    }
    let ck = Checkpoint::read(&checkpoint_path(dir, FINAL_CHECKPOINT))?;
    if ck.config_hash != case.hash {
        return Err(IoError::MixedProvenance { path: dir.to_path_buf(), found: ck.config_hash, expected: case.hash }.into());
    }
    let flow = case.flow()?;
    let t_end = config.run.end_time * config.t_a();
    let status = if ck.state.time() >= t_end * (1.0 - 1e-9) { RunStatus::Finished } else { RunStatus::StepLimit };
    let summary = summarize(&case, &flow, &ck.state, &ck.progress, status, None)?;
    summary.write(dir)?;
    write_profiles(&case, &ck.state, dir)?;
    Ok(summary)
}
