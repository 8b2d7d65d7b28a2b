//! Case files: one TOML document holding the grid, body, regime, numerics and
//! run control of a simulation.
//!
//! All cases are nondimensional with U_∞ = ρ_∞ = T_∞ = 1 and the flow along
//! +x. Times in `[run]` are in advection units t_A = L_ref/U_∞, where L_ref is
//! the body's reference length (1 without a bounded body).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::{DomainBc, SideBc};
use crate::compressible::{CompressibleConfig, FreeStream, Viscosity, DEFAULT_ACOUSTIC_CFL};
use crate::error::ConfigError;
use crate::fvm::{ConvectionScheme, GasModel};
use crate::geometry::{BodySpec, ImplicitBody};
use crate::grid::{build_grid, AxisSpec, RectilinearGrid};
use crate::incompressible::{DtPolicy, PisoConfig};
use crate::observer::{ObserverConfig, ObserverParams, ThermalWall};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Incompressible,
    Compressible,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Incompressible => "incompressible",
            SolverKind::Compressible => "compressible",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
    /// Per-axis periodicity; all false when omitted.
    #[serde(default)]
    pub periodic: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallMode {
    #[default]
    Adiabatic,
    Isothermal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// U_∞ L_ref / ν.
    pub re: f64,
    /// Free-stream Mach number; compressible cases only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_prandtl")]
    pub prandtl: f64,
    #[serde(default)]
    pub wall: WallMode,
    /// T_wall / T_∞; isothermal walls only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr: Option<f64>,
    /// Uniform body acceleration (incompressible only).
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub body_force: [f64; 3],
}

fn default_gamma() -> f64 {
    1.4
}
fn default_prandtl() -> f64 {
    0.72
}
fn is_zero3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    /// Gain stiffness.
    pub a: f64,
    /// Initial forcing magnitude in units of (variable scale)/t_A.
    pub f0: f64,
    pub eps_target: f64,
}

impl Default for ObserverSpec {
    fn default() -> Self {
        ObserverSpec { a: 1.0, f0: 1.0, eps_target: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Momentum convection scheme of the incompressible solver.
    #[serde(default = "default_scheme")]
    pub scheme: ConvectionScheme,
    #[serde(default = "default_time_order")]
    pub time_order: usize,
    #[serde(default = "default_correctors")]
    pub n_correctors: usize,
    /// Solver-dependent CFL policy when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<DtPolicy>,
    #[serde(default = "default_correction_tol")]
    pub correction_tol: f64,
    #[serde(default = "default_pressure_tol")]
    pub pressure_tol: f64,
    #[serde(default = "default_transport_tol")]
    pub momentum_tol: f64,
    #[serde(default = "default_transport_tol")]
    pub transport_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_linear_iters: usize,
    #[serde(default)]
    pub observer: ObserverSpec,
}

fn default_scheme() -> ConvectionScheme {
    ConvectionScheme::LimitedLinear
}
fn default_time_order() -> usize {
    2
}
fn default_correctors() -> usize {
    2
}
fn default_correction_tol() -> f64 {
    1e-6
}
fn default_pressure_tol() -> f64 {
    1e-9
}
fn default_transport_tol() -> f64 {
    1e-7
}
fn default_max_iters() -> usize {
    2000
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            scheme: default_scheme(),
            time_order: default_time_order(),
            n_correctors: default_correctors(),
            dt: None,
            correction_tol: default_correction_tol(),
            pressure_tol: default_pressure_tol(),
            momentum_tol: default_transport_tol(),
            transport_tol: default_transport_tol(),
            max_linear_iters: default_max_iters(),
            observer: ObserverSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtkFormat {
    Ascii,
    #[default]
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunControl {
    /// Final time in t_A.
    pub end_time: f64,
    /// Averaging window `[start, end]` in t_A, inside `[0, end_time]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_window: Option<[f64; 2]>,
    /// Snapshot interval in t_A; no snapshots when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    /// Checkpoint interval in t_A; a final checkpoint is always written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<f64>,
    /// Force coefficients are sampled every this many steps.
    #[serde(default = "default_one")]
    pub coefficients_every: u64,
    /// Panels along the perimeter (2D) or polar rings (sphere).
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_bins")]
    pub profile_bins: usize,
    #[serde(default)]
    pub vtk: VtkFormat,
    /// Output directory; `runs/<name>` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_one() -> u64 {
    1
}
fn default_panels() -> usize {
    400
}
fn default_bins() -> usize {
    36
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Uniform velocity (in units of U_∞) at free-stream pressure, density and
    /// temperature.
    Uniform { velocity: [f64; 3] },
    /// u = sin x cos y, v = −cos x sin y, p = (cos 2x + cos 2y)/4.
    TaylorGreen,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Uniform { velocity: [1.0, 0.0, 0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub solver: SolverKind,
    pub grid: GridSpec,
    #[serde(default = "no_body")]
    pub body: BodySpec,
    pub regime: Regime,
    pub boundary: DomainBc,
    #[serde(default)]
    pub numerics: Numerics,
    pub run: RunControl,
    #[serde(default)]
    pub initial: InitialCondition,
}

fn no_body() -> BodySpec {
    BodySpec::None
}

/// Parse and validate a case document, reporting every violation found.
pub fn parse_config(text: &str) -> Result<CaseConfig, ConfigError> {
    let config: CaseConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl CaseConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            bad.push(format!("name {:?} must be nonempty and use only [A-Za-z0-9_.-]", self.name));
        }

        let dim = self.grid.axes.len();
        if !(2..=3).contains(&dim) {
            bad.push(format!("grid.axes has {dim} entries; 2 or 3 required"));
        }
        if !self.grid.periodic.is_empty() && self.grid.periodic.len() != dim {
            bad.push(format!("grid.periodic has {} entries for {dim} axes", self.grid.periodic.len()));
        }
        let grid = self.build_grid().map_err(|e| bad.push(format!("grid: {e}"))).ok();

        match self.body.build() {
            Ok(body) => {
                if let Some(d) = body.dim() {
                    if d != dim {
                        bad.push(format!("body is {d}D but the grid has {dim} axes"));
                    }
                }
            }
            Err(e) => bad.push(format!("body: {e}")),
        }

        if self.boundary.sides.len() != 2 * dim {
            bad.push(format!("boundary.sides has {} entries; {} required", self.boundary.sides.len(), 2 * dim));
        } else if let Some(g) = &grid {
            if let Err(e) = self.boundary.validate(g) {
                bad.push(format!("boundary: {e}"));
            }
        }
        for (k, s) in self.boundary.sides.iter().enumerate() {
            if let SideBc::Inlet { velocity } = s {
                if velocity[dim.min(3)..].iter().any(|v| *v != 0.0) {
                    bad.push(format!("boundary.sides[{k}]: inlet velocity has components beyond axis {dim}"));
                }
            }
        }

        let r = &self.regime;
        if !(r.re > 0.0 && r.re.is_finite()) {
            bad.push(format!("regime.re = {} must be positive", r.re));
        }
        match (self.solver, r.ma) {
            (SolverKind::Compressible, None) => bad.push("regime.ma is required when solver = \"compressible\"".into()),
            (SolverKind::Compressible, Some(ma)) if !(ma > 0.0 && ma.is_finite()) => {
                bad.push(format!("regime.ma = {ma} must be positive"))
            }
            (SolverKind::Incompressible, Some(_)) => {
                bad.push("regime.ma is set but solver = \"incompressible\"; remove regime.ma or change solver".into())
            }
            _ => {}
        }
        match (r.wall, r.tr) {
            (WallMode::Isothermal, None) => bad.push("regime.tr is required when regime.wall = \"isothermal\"".into()),
            (WallMode::Adiabatic, Some(_)) => {
                bad.push("regime.tr is set but regime.wall = \"adiabatic\"; remove regime.tr or set wall = \"isothermal\"".into())
            }
            (WallMode::Isothermal, Some(tr)) if !(tr > 0.0 && tr.is_finite()) => {
                bad.push(format!("regime.tr = {tr} must be positive"))
            }
            _ => {}
        }
        if self.solver == SolverKind::Incompressible && r.wall == WallMode::Isothermal {
            bad.push("regime.wall = \"isothermal\" needs solver = \"compressible\"".into());
        }
        if self.solver == SolverKind::Compressible && !is_zero3(&r.body_force) {
            bad.push("regime.body_force is only supported with solver = \"incompressible\"".into());
        }

        let run = &self.run;
        if !(run.end_time > 0.0 && run.end_time.is_finite()) {
            bad.push(format!("run.end_time = {} must be positive", run.end_time));
        }
        if let Some([a, b]) = run.average_window {
            if !(0.0 <= a && a < b && b <= run.end_time * (1.0 + 1e-12)) {
                bad.push(format!("run.average_window = [{a}, {b}] must satisfy 0 <= start < end <= run.end_time"));
            }
        }
        for (key, v) in [("run.snapshot_every", run.snapshot_every), ("run.checkpoint_every", run.checkpoint_every)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    bad.push(format!("{key} = {v} must be positive"));
                }
            }
        }
        if run.coefficients_every == 0 {
            bad.push("run.coefficients_every must be at least 1".into());
        }
        if run.panels < 4 || run.profile_bins == 0 {
            bad.push("run.panels must be at least 4 and run.profile_bins at least 1".into());
        }

        if self.initial == InitialCondition::TaylorGreen {
            let periodic_2d = dim == 2 && self.grid.periodic == [true, true];
            if self.solver != SolverKind::Incompressible || !periodic_2d || !matches!(self.body, BodySpec::None) {
                bad.push("initial.kind = \"taylor_green\" needs an incompressible, body-free, doubly periodic 2D grid".into());
            }
        }

        let o = self.numerics.observer;
        if let Err(e) = ObserverParams::new(o.f0, o.a, o.eps_target) {
            bad.push(format!("numerics.observer: {e}"));
        }
        if r.re > 0.0 && r.ma.map_or(true, |m| m > 0.0) {
            let solver_check = match self.solver {
                SolverKind::Incompressible => self.piso_config().validate(),
                SolverKind::Compressible => self.compressible_config().validate(),
            };
            if let Err(e) = solver_check {
                bad.push(format!("numerics: {e}"));
            }
        }
        bad
    }

    pub fn dim(&self) -> usize {
        self.grid.axes.len()
    }

    pub fn build_grid(&self) -> Result<RectilinearGrid, crate::error::GridError> {
        let periodic =
            if self.grid.periodic.is_empty() { vec![false; self.grid.axes.len()] } else { self.grid.periodic.clone() };
        build_grid(&self.grid.axes, &periodic)
    }

    pub fn build_body(&self) -> Result<ImplicitBody, crate::error::GeometryError> {
        self.body.build()
    }

    /// Body reference length for bounded bodies, 1 otherwise.
    pub fn reference_length(&self) -> f64 {
        match self.body.build() {
            Ok(b) if b.is_bounded() => b.reference_length(),
            _ => 1.0,
        }
    }

    /// Advection time unit.
    pub fn t_a(&self) -> f64 {
        self.reference_length()
    }

    /// Angle of attack for bodies that carry one.
    pub fn aoa_rad(&self) -> f64 {
        match &self.body {
            BodySpec::Naca4 { aoa_deg, .. } => aoa_deg.to_radians(),
            _ => 0.0,
        }
    }

    /// Kinematic (incompressible) or dynamic (compressible, ρ_∞ = 1) viscosity.
    pub fn viscosity(&self) -> f64 {
        self.reference_length() / self.regime.re
    }

    /// Free-stream static pressure: the outlet value for incompressible flow,
    /// 1/(γ Ma²) for compressible flow.
    pub fn p_inf(&self) -> f64 {
        match self.solver {
            SolverKind::Incompressible => self
                .boundary
                .sides
                .iter()
                .find_map(|s| if let SideBc::Outlet { pressure } = s { Some(*pressure) } else { None })
                .unwrap_or(0.0),
            SolverKind::Compressible => {
                let ma = self.regime.ma.unwrap_or(1.0);
                1.0 / (self.regime.gamma * ma * ma)
            }
        }
    }

    pub fn wall_temperature(&self) -> Option<f64> {
        match self.regime.wall {
            WallMode::Isothermal => self.regime.tr,
            WallMode::Adiabatic => None,
        }
    }

    pub fn observer_config(&self) -> ObserverConfig {
        let o = self.numerics.observer;
        let p = ObserverParams { f0: o.f0 / self.t_a(), a: o.a, eps_target: o.eps_target };
        ObserverConfig { momentum: p, energy: p, mass: p }
    }

    pub fn piso_config(&self) -> PisoConfig {
        let n = &self.numerics;
        PisoConfig {
            nu: self.viscosity(),
            rho: 1.0,
            n_correctors: n.n_correctors,
            dt: n.dt.unwrap_or(DtPolicy::Cfl { max_cfl: 0.5, dt_max: f64::INFINITY }),
            scheme: n.scheme,
            time_order: n.time_order,
            correction_tol: n.correction_tol,
            pressure_tol: n.pressure_tol,
            momentum_tol: n.momentum_tol,
            u_ref: 1.0,
            l_ref: self.reference_length(),
            body_force: self.regime.body_force,
            max_linear_iters: n.max_linear_iters,
        }
    }

    pub fn compressible_config(&self) -> CompressibleConfig {
        let r = &self.regime;
        let ma = r.ma.unwrap_or(1.0);
        let n = &self.numerics;
        CompressibleConfig {
            gas: GasModel { gamma: r.gamma, r: 1.0 / (r.gamma * ma * ma) },
            viscosity: Viscosity::Constant { mu: self.viscosity() },
            prandtl: r.prandtl,
            free_stream: FreeStream { rho: 1.0, velocity: [1.0, 0.0, 0.0], t: 1.0 },
            thermal: match self.wall_temperature() {
                Some(tr) => ThermalWall::Isothermal { t_wall: tr },
                None => ThermalWall::Adiabatic,
            },
            dt: n.dt.unwrap_or(DtPolicy::Cfl { max_cfl: DEFAULT_ACOUSTIC_CFL, dt_max: f64::INFINITY }),
            transport_tol: n.transport_tol,
            max_linear_iters: n.max_linear_iters,
            u_ref: 1.0,
            l_ref: self.reference_length(),
        }
    }

    /// Canonical TOML with every default filled in.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("case config serializes")
    }

    /// SHA-256 of the canonical form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.output = None;
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.run.output.clone().unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tg"
solver = "incompressible"
initial = { kind = "taylor_green" }

[grid]
axes = [{ zones = [{ start = 0.0, end = 6.283185307179586, h = 0.19634954084936207 }] },
        { zones = [{ start = 0.0, end = 6.283185307179586, h = 0.19634954084936207 }] }]
periodic = [true, true]

[regime]
re = 20.0

[boundary]
sides = [{ kind = "periodic" }, { kind = "periodic" }, { kind = "periodic" }, { kind = "periodic" }]

[run]
end_time = 1.0
"#;

    #[test]
    fn minimal_case_fills_defaults_and_echoes() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.numerics, Numerics::default());
        assert_eq!(c.run.panels, 400);
        assert_eq!(c.regime.gamma, 1.4);
        let echoed = parse_config(&c.canonical()).unwrap();
        assert_eq!(echoed, c);
        assert_eq!(echoed.hash(), c.hash());
    }

    #[test]
    fn incompressible_with_mach_names_both_keys() {
        let text = MINIMAL.replace("re = 20.0", "re = 20.0\nma = 0.3");
        let Err(ConfigError::Invalid(v)) = parse_config(&text) else { panic!("accepted") };
        assert!(v.iter().any(|m| m.contains("regime.ma") && m.contains("solver")), "{v:?}");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = MINIMAL
            .replace("end_time = 1.0", "end_time = -1.0\naverage_window = [0.5, 2.0]")
            .replace("re = 20.0", "re = 20.0\nwall = \"isothermal\"");
        let Err(ConfigError::Invalid(v)) = parse_config(&text) else { panic!("accepted") };
        for key in ["run.end_time", "run.average_window", "regime.tr", "isothermal"] {
            assert!(v.iter().any(|m| m.contains(key)), "{key} missing from {v:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("re = 20.0", "re = 20.0\nreynolds = 3");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse(m)) if m.contains("reynolds")));
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.run.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.regime.re = 21.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
