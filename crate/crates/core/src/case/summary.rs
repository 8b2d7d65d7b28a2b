//! End-of-run summary record and its comparison with published reference
//! values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SolverKind;
use super::io::write_atomic;
use super::run::{Case, Flow, FlowState, Progress, RunStatus, SUMMARY_FILE};
use crate::error::{Error, IoError};
use crate::geometry::sample_link;
use crate::observer::Channel;
use crate::post::{nusselt, strouhal, Coefficients, CoefficientSeries, StrouhalEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    /// −ln(E/E₀)/t.
    pub measured_rate: f64,
    /// 4ν for the Taylor–Green vortex.
    pub exact_rate: f64,
    pub rate_error: f64,
    /// E(t) / (E₀ e^{−4νt}).
    pub energy_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallTemperature {
    pub target: f64,
    /// Mean of T interpolated to the wall points.
    pub mean: f64,
    /// Largest |T_W − target| / target.
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassAudit {
    /// Σ f_ρ V at the last step.
    pub source_rate: f64,
    /// ρU through the inlet sides.
    pub inlet_flux: f64,
    /// |source_rate| / inlet_flux.
    pub ratio: f64,
    /// Σ f_ρ V dt accumulated over the run.
    pub accumulated_source: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverStat {
    pub channel: String,
    pub max_e: f64,
    pub median_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case: String,
    pub config_hash: String,
    pub solver: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub steps: u64,
    /// Final time in t_A.
    pub time: f64,
    pub max_velocity: f64,
    pub ghost_cells: usize,
    /// Averaging window actually used, in t_A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Window mean of the force coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_coefficients: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strouhal: Option<StrouhalEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nusselt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_temperature: Option<WallTemperature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taylor_green: Option<DecayCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_audit: Option<MassAudit>,
    #[serde(default)]
    pub observer: Vec<ObserverStat>,
}

impl Summary {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        let path = dir.join(SUMMARY_FILE);
        let text = toml::to_string(self).map_err(|e| IoError::format(&path, e.to_string()))?;
        write_atomic(&path, text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self, IoError> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| IoError::format(&path, e.to_string()))
    }
}

fn channel_name(ch: Channel) -> String {
    match ch {
        Channel::Velocity(d) => format!("u{d}"),
        Channel::Temperature => "T".into(),
        Channel::Density => "rho".into(),
    }
}

pub(crate) fn summarize(
    case: &Case,
    flow: &Flow,
    state: &FlowState,
    progress: &Progress,
    status: RunStatus,
    message: Option<String>,
) -> Result<Summary, Error> {
    let cfg = &case.config;
    let t_a = cfg.t_a();
    let fields = state.fields();
    let time = state.time() / t_a;
    let max_velocity = (0..fields.n_cells())
        .map(|c| fields.u.iter().map(|u| u[c] * u[c]).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);

    let mut series = CoefficientSeries::default();
    for (_, t, c) in &progress.series {
        series.push(*t, *c);
    }
    let window = cfg.run.average_window.map(|[a, b]| [a, b.min(time)]).filter(|w| w[1] > w[0]);
    let coefficients = window.and_then(|[a, b]| series.window_mean(a, b));
    let final_coefficients = series.values.last().copied();
    let strouhal = match window {
        Some([a, b]) if case.grid.dim() == 2 && series.len() >= 8 => {
            let l = cfg.reference_length();
            match strouhal(&series.time, &series.lift(), a, b, l / t_a, 1.0, cfg.aoa_rad()) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("no Strouhal number: {e}");
                    None
                }
            }
        }
        _ => None,
    };

    let mut out = Summary {
        case: cfg.name.clone(),
        config_hash: case.hash.clone(),
        solver: cfg.solver.as_str().into(),
        status,
        message,
        steps: state.step(),
        time,
        max_velocity,
        ghost_cells: case.ib.n_ghosts(),
        window,
        coefficients,
        final_coefficients,
        strouhal,
        nusselt: None,
        wall_temperature: None,
        taylor_green: None,
        mass_audit: None,
        observer: Vec::new(),
    };

    let obs = state.observer();
    if obs.n_ghosts > 0 && obs.seeded {
        out.observer = obs
            .max_discrepancy()
            .into_iter()
            .zip(obs.median_discrepancy())
            .map(|((ch, max_e), (_, median_e))| ObserverStat { channel: channel_name(ch), max_e, median_e })
            .collect();
    }

    if cfg.initial == super::config::InitialCondition::TaylorGreen && state.time() > 0.0 {
        let nu = cfg.viscosity();
        let ke = flow.kinetic_energy(fields);
        let exact_rate = 4.0 * nu;
        let measured_rate = -(ke / progress.ke0).ln() / state.time();
        out.taylor_green = Some(DecayCheck {
            measured_rate,
            exact_rate,
            rate_error: (measured_rate / exact_rate - 1.0).abs(),
            energy_ratio: ke / (progress.ke0 * (-exact_rate * state.time()).exp()),
        });
    }

    if cfg.solver == SolverKind::Compressible {
        if let FlowState::Compressible(st) = state {
            let inlet_flux = case.inlet_mass_flux();
            let ratio = if inlet_flux > 0.0 { progress.mass_source_rate.abs() / inlet_flux } else { f64::NAN };
            out.mass_audit = Some(MassAudit {
                source_rate: progress.mass_source_rate,
                inlet_flux,
                ratio,
                accumulated_source: st.mass_source,
            });
        }
        if let Some(tw) = cfg.wall_temperature() {
            if !case.ib.links.is_empty() {
                let mut sum = 0.0;
                let mut worst = 0.0_f64;
                for l in &case.ib.links {
                    let t_g = fields.t[l.ghost];
                    let t_m = sample_link(l, &fields.t);
                    let s = l.distance() / crate::geometry::body::norm3(&crate::geometry::body::sub(&l.m, &l.g));
                    let t_w = t_g + (t_m - t_g) * s;
                    sum += t_w;
                    worst = worst.max(((t_w - tw) / tw).abs());
                }
                out.wall_temperature =
                    Some(WallTemperature { target: tw, mean: sum / case.ib.links.len() as f64, max_rel_error: worst });
            }
            if let (Some(panels), Some(samples)) = (&case.panels, case.surface_samples(fields)?) {
                let gas = cfg.compressible_config().gas;
                let cp = gas.gamma * gas.r / (gas.gamma - 1.0);
                let conductivity = cp * cfg.viscosity() / cfg.regime.prandtl;
                out.nusselt = Some(nusselt(panels, &samples, conductivity, cfg.reference_length(), tw, 1.0)?);
            }
        }
    }
    Ok(out)
}

/// Published values for one named case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRow {
    pub case: &'static str,
    pub st: Option<f64>,
    pub cl: Option<f64>,
    pub cd: Option<f64>,
    pub cd_p: Option<f64>,
    pub cd_v: Option<f64>,
}

const fn row(case: &'static str, st: Option<f64>, cl: Option<f64>, cd: f64, cd_p: f64, cd_v: f64) -> ReferenceRow {
    ReferenceRow { case, st, cl, cd: Some(cd), cd_p: Some(cd_p), cd_v: Some(cd_v) }
}

/// Immersed-boundary results of the reference database, with the body-fitted
/// solutions they were compared with.
pub const REFERENCE_VALUES: &[ReferenceRow] = &[
    row("profile_body_fitted", Some(0.825), Some(0.460), 0.182, 0.107, 0.075),
    row("profile_G1_T2", Some(0.881), Some(0.373), 0.251, 0.123, 0.128),
    row("profile_G2_T1", Some(0.877), Some(0.405), 0.230, 0.125, 0.105),
    row("profile_G2_T2", Some(0.874), Some(0.416), 0.225, 0.125, 0.100),
    row("profile_G2_T3", Some(0.858), Some(0.415), 0.215, 0.121, 0.094),
    row("profile_G3_T2", Some(0.881), Some(0.442), 0.211, 0.123, 0.088),
    row("profile_G3Bis_T4", Some(0.847), Some(0.453), 0.193, 0.113, 0.080),
    row("sphere_body_fitted", None, None, 1.288, 0.978, 0.31),
    row("sphere_R300_G1_Adiab", None, None, 1.197, 0.979, 0.22),
    row("sphere_R300_G2_Adiab", None, None, 1.239, 0.982, 0.26),
    row("sphere_R300_G3_Adiab", None, None, 1.3, 1.0, 0.3),
];

/// Reference row for a case name; desk-scale variants (`*_desk`) map to the
/// case they reduce.
pub fn reference_for(case: &str) -> Option<&'static ReferenceRow> {
    let base = case.strip_suffix("_desk").unwrap_or(case);
    REFERENCE_VALUES.iter().find(|r| r.case == base)
}

fn body_fitted_for(case: &str) -> Option<&'static ReferenceRow> {
    let family = if case.starts_with("profile_") { "profile_body_fitted" } else { "sphere_body_fitted" };
    REFERENCE_VALUES.iter().find(|r| r.case == family)
}

/// Text table of measured values against the reference rows.
pub fn render_report(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "case {}  status {:?}  t = {:.3} t_A  steps {}", summary.case, summary.status, summary.time, summary.steps);
    let _ = writeln!(s, "config {}", summary.config_hash);
    let measured = [
        ("St", summary.strouhal.map(|x| x.st)),
        ("CL", summary.coefficients.map(|c| c.cl)),
        ("CD", summary.coefficients.map(|c| c.cd)),
        ("CDp", summary.coefficients.map(|c| c.cd_p)),
        ("CDv", summary.coefficients.map(|c| c.cd_v)),
    ];
    let refs = [reference_for(&summary.case), body_fitted_for(&summary.case)];
    let pick = |r: &ReferenceRow, k: usize| [r.st, r.cl, r.cd, r.cd_p, r.cd_v][k];
    let _ = writeln!(s, "{:<5} {:>10} {:>10} {:>8} {:>11} {:>8}", "", "measured", "reference", "error", "body-fitted", "error");
    for (k, (name, m)) in measured.iter().enumerate() {
        let cell = |r: Option<&ReferenceRow>| match (m, r.and_then(|r| pick(r, k))) {
            (Some(m), Some(v)) => (format!("{v:.3}"), format!("{:+.1}%", 100.0 * (m - v) / v)),
            (None, Some(v)) => (format!("{v:.3}"), "-".into()),
            _ => ("-".into(), "-".into()),
        };
        let (r1, e1) = cell(refs[0]);
        let (r2, e2) = cell(refs[1]);
        let mv = m.map_or("-".into(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{name:<5} {mv:>10} {r1:>10} {e1:>8} {r2:>11} {e2:>8}");
    }
    if let Some(st) = &summary.strouhal {
        let spectral = st.spectral_frequency.map_or("-".into(), |f| format!("{f:.4}"));
        let _ = writeln!(s, "St projected (f c sin a / U) {:.4}; spectral frequency {spectral}", st.st_projected);
    }
    if let Some(nu) = summary.nusselt {
        let _ = writeln!(s, "Nu {nu:.4}");
    }
    if let Some(w) = &summary.wall_temperature {
        let _ = writeln!(s, "wall temperature mean {:.5} target {:.5} worst error {:.2}%", w.mean, w.target, 100.0 * w.max_rel_error);
    }
    if let Some(m) = &summary.mass_audit {
        let _ = writeln!(s, "mass source {:.3e} = {:.4}% of inlet flux", m.source_rate, 100.0 * m.ratio);
    }
    if let Some(tg) = &summary.taylor_green {
        let _ = writeln!(
            s,
            "decay rate {:.6} exact {:.6} error {:.3}%; energy ratio {:.6}",
            tg.measured_rate,
            tg.exact_rate,
            100.0 * tg.rate_error,
            tg.energy_ratio
        );
    }
    s
}
