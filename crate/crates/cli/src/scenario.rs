//! Scenario files: TOML with `model` or `setup`, a protocol and optional
//! `losses`, `feedback`, `oracle`, `teleport`, `verify`, `sweep` and
//! `output` sections.

use std::path::{Path, PathBuf};

use hybrid_epr_core::decoherence::LossBudget;
use hybrid_epr_core::oracle::OracleOptions;
use hybrid_epr_core::params::{DEFAULT_GAMMA_C, DEFAULT_OMEGA_TAU, DEFAULT_TAU};
use hybrid_epr_core::planner::{self, Atoms, Cavity, FeasibilityReport, Mechanics, PhysicalSetup};
use hybrid_epr_core::protocols::{FeedbackConfig, FeedbackMode, TeleportConfig};
use hybrid_epr_core::ProtocolParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::units::{Dim, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[serde(alias = "EprConditional")]
    EprConditional,
    #[serde(alias = "EprFeedback")]
    EprFeedback,
    #[serde(alias = "Verify")]
    Verify,
    #[serde(alias = "Teleport")]
    Teleport,
    #[serde(alias = "OracleCompare")]
    OracleCompare,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Dimensionless model. Only `kappa` is required; everything else falls
/// back to an exactly matched, lossless, undamped pulse with `Ωτ = 400`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kappa: f64,
    pub n_i: Option<f64>,
    pub g: Option<f64>,
    pub gamma_c: Option<f64>,
    pub omega_m: Option<f64>,
    pub omega: Option<f64>,
    /// Sets `Ω` (and `ω_m` unless given) from the Larmor phase.
    pub omega_tau: Option<f64>,
    pub tau: Option<f64>,
    pub gamma_m: Option<f64>,
    /// Sets `γ_m` from `γ_m τ`.
    pub gamma_m_tau: Option<f64>,
    pub n_th: Option<f64>,
    pub eps_mismatch: Option<f64>,
    /// Signed coupling mismatch, realized by splitting the two strengths
    /// symmetrically around `kappa`.
    pub mismatch: Option<f64>,
    pub eta_light: Option<f64>,
    pub eta_det: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechSection {
    pub omega_m: Quantity,
    pub mass: Quantity,
    pub q_m: f64,
    pub temperature: Quantity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub finesse: f64,
    pub length: Quantity,
    pub wavelength: Option<Quantity>,
    pub power: Quantity,
    pub tau: Quantity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsSection {
    pub gamma: Quantity,
    pub delta: Quantity,
    pub sigma: Quantity,
    pub area: Quantity,
    pub n_at: f64,
    pub omega: Quantity,
}

/// Hardware in SI units; strings with unit suffixes are accepted.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupSection {
    pub mech: MechSection,
    pub cavity: CavitySection,
    pub atoms: Option<AtomsSection>,
    pub cooling_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackChoice {
    Conditional,
    Feedback,
    Optimal,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub mode: Option<FeedbackChoice>,
    pub gain: Option<f64>,
    /// Fixed homodyne outcomes `[ξ_cos, ξ_sin]` instead of seeded samples.
    pub outcomes: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeleportSection {
    pub asymptotic: bool,
    pub kappa_qnd: Option<f64>,
    pub bell_gain: Option<f64>,
    pub input_mean: [f64; 2],
}

impl Default for TeleportSection {
    fn default() -> Self {
        Self {
            asymptotic: true,
            kappa_qnd: None,
            bell_gain: None,
            input_mean: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Estimate the readout variances from this many repetitions.
    pub shots: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted path of a numeric scenario field, e.g. `model.kappa`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
    /// CSV file for the oracle trajectory (oracle comparisons only).
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub protocol: Option<ProtocolKind>,
    pub model: Option<ModelSection>,
    pub setup: Option<SetupSection>,
    #[serde(default)]
    pub losses: LossBudget,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub oracle: OracleOptions,
    #[serde(default)]
    pub teleport: TeleportSection,
    #[serde(default)]
    pub verify: VerifySection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parse a scenario file into a TOML tree (kept for sweeps).
pub fn load_tree(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_tree(&text)
}

pub fn parse_tree(text: &str) -> CliResult<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::validation(format!("malformed scenario: {e}")))
}

/// Deserialize, naming the offending key on failure.
pub fn from_tree(tree: toml::Table) -> CliResult<Scenario> {
    let scenario: Scenario = serde_path_to_error::deserialize(toml::Value::Table(tree)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            CliError::validation(inner.to_string())
        } else {
            CliError::validation(format!("key `{path}`: {inner}"))
        }
    })?;
    if let Some(sweep) = &scenario.sweep {
        if sweep.values.is_empty() {
            return Err(CliError::validation("key `sweep.values`: needs at least one value"));
        }
    }
    Ok(scenario)
}

/// Overwrite the numeric field at a dotted path.
pub fn set_numeric(tree: &mut toml::Table, path: &str, value: f64) -> CliResult<()> {
    let bad = |why: &str| CliError::validation(format!("key `sweep.parameter`: `{path}` {why}"));
    let mut parts: Vec<&str> = path.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| bad("is empty"))?;
    let mut table = tree;
    for part in parts {
        table = match table.get_mut(part) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(bad("does not lead to a table")),
            None => return Err(bad("names a section that is not in the scenario")),
        };
    }
    let integral = value.fract() == 0.0 && value.abs() < 9.0e15;
    let new = match table.get(leaf) {
        Some(toml::Value::Integer(_)) if integral => toml::Value::Integer(value as i64),
        Some(toml::Value::Integer(_)) | Some(toml::Value::Float(_)) | None => {
            if integral {
                toml::Value::Integer(value as i64)
            } else {
                toml::Value::Float(value)
            }
        }
        Some(_) => return Err(bad("is not a numeric field")),
    };
    table.insert(leaf.to_owned(), new);
    Ok(())
}

/// Everything a run needs, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    /// `model` or `setup`.
    pub source: &'static str,
    pub params: ProtocolParams,
    /// Parameters that were not given and took their default value.
    pub defaults_applied: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup: Option<PhysicalSetup>,
    pub losses: LossBudget,
    pub feedback: FeedbackConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<[f64; 2]>,
    pub oracle: OracleOptions,
    pub teleport: TeleportConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_shots: Option<usize>,
    #[serde(skip)]
    pub feasibility: Option<FeasibilityReport>,
}

fn model_params(m: &ModelSection, defaults: &mut Vec<&'static str>) -> ProtocolParams {
    fn pick(v: Option<f64>, default: f64, name: &'static str, defaults: &mut Vec<&'static str>) -> f64 {
        v.unwrap_or_else(|| {
            defaults.push(name);
            default
        })
    }
    let tau = pick(m.tau, DEFAULT_TAU, "tau", defaults);
    let gamma_c = pick(m.gamma_c, DEFAULT_GAMMA_C, "gamma_c", defaults);
    let omega = match (m.omega, m.omega_tau) {
        (Some(w), _) => w,
        (None, Some(wt)) => wt / tau,
        (None, None) => {
            defaults.push("omega");
            DEFAULT_OMEGA_TAU / tau
        }
    };
    let omega_m = pick(m.omega_m, omega, "omega_m", defaults);
    let gamma_m = match (m.gamma_m, m.gamma_m_tau) {
        (Some(g), _) => g,
        (None, Some(gt)) => gt / tau,
        (None, None) => {
            defaults.push("gamma_m");
            0.0
        }
    };
    let g = pick(m.g, m.kappa * (gamma_c / tau).sqrt(), "g", defaults);
    let mut p = ProtocolParams {
        kappa: m.kappa,
        n_i: pick(m.n_i, 0.0, "n_i", defaults),
        g,
        gamma_c,
        omega_m,
        omega,
        tau,
        gamma_m,
        n_th: pick(m.n_th, 0.0, "n_th", defaults),
        eps_mismatch: 0.0,
        eta_light: pick(m.eta_light, 1.0, "eta_light", defaults),
        eta_det: pick(m.eta_det, 1.0, "eta_det", defaults),
    };
    if let Some(eps) = m.mismatch {
        p = p.with_mismatch(eps);
    }
    match m.eps_mismatch {
        Some(e) => p.eps_mismatch = e,
        None if m.mismatch.is_none() => defaults.push("eps_mismatch"),
        None => {}
    }
    p
}

fn setup_to_core(s: &SetupSection) -> CliResult<PhysicalSetup> {
    let q = |q: &Quantity, key: &str, dim: Dim| q.expect(key, dim).map_err(CliError::validation);
    let atoms = match &s.atoms {
        None => None,
        Some(a) => Some(Atoms {
            gamma: q(&a.gamma, "setup.atoms.gamma", Dim::Rate)?,
            delta: q(&a.delta, "setup.atoms.delta", Dim::Rate)?,
            sigma: q(&a.sigma, "setup.atoms.sigma", Dim::Area)?,
            area: q(&a.area, "setup.atoms.area", Dim::Area)?,
            n_at: a.n_at,
            omega: q(&a.omega, "setup.atoms.omega", Dim::Rate)?,
        }),
    };
    Ok(PhysicalSetup {
        mech: Mechanics {
            omega_m: q(&s.mech.omega_m, "setup.mech.omega_m", Dim::Rate)?,
            mass: q(&s.mech.mass, "setup.mech.mass", Dim::Mass)?,
            q_m: s.mech.q_m,
            temperature: q(&s.mech.temperature, "setup.mech.temperature", Dim::Temperature)?,
        },
        cavity: Cavity {
            finesse: s.cavity.finesse,
            length: q(&s.cavity.length, "setup.cavity.length", Dim::Length)?,
            wavelength: match &s.cavity.wavelength {
                Some(w) => q(w, "setup.cavity.wavelength", Dim::Length)?,
                None => planner::DEFAULT_WAVELENGTH,
            },
            power: q(&s.cavity.power, "setup.cavity.power", Dim::Power)?,
            tau: q(&s.cavity.tau, "setup.cavity.tau", Dim::Time)?,
        },
        atoms,
        cooling_factor: s.cooling_factor.unwrap_or(1.0),
    })
}

/// Roundoff in `g·√(τ/γ_c)` leaves a matching error of order 1e-17.
fn snap(eps: f64) -> f64 {
    if eps.abs() < 1e-12 {
        0.0
    } else {
        eps
    }
}

/// Loss budget with unset entries filled from the model: the actual matching
/// error, `γ_m τ`, `n̄_th` and the optical transmission.
pub fn effective_budget(params: &ProtocolParams, given: &LossBudget) -> LossBudget {
    let or = |v: f64, fallback: f64| if v != 0.0 { v } else { fallback };
    let eta_given = 1.0 - given.photon_loss;
    LossBudget {
        eps_mismatch: or(given.eps_mismatch, params.matching_error().map(snap).unwrap_or(0.0)),
        photon_loss: 1.0 - eta_given * (1.0 - params.optical_loss()),
        gamma_m_tau: or(given.gamma_m_tau, params.gamma_m_tau()),
        n_th: or(given.n_th, params.n_th),
    }
}

impl Scenario {
    pub fn protocol(&self) -> CliResult<ProtocolKind> {
        self.protocol
            .ok_or_else(|| CliError::validation("key `protocol`: missing"))
    }

    pub fn resolve(&self, protocol: Option<ProtocolKind>) -> CliResult<Resolved> {
        let mut defaults = Vec::new();
        let (source, params, setup, feasibility) = match (&self.model, &self.setup) {
            (Some(m), None) => ("model", model_params(m, &mut defaults), None, None),
            (None, Some(s)) => {
                let setup = setup_to_core(s)?;
                let (params, report) = planner::derive_params(&setup).ctx("setup")?;
                ("setup", params, Some(setup), Some(report))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::validation("keys `model` and `setup`: give exactly one of them"))
            }
            (None, None) => {
                return Err(CliError::validation("keys `model`/`setup`: one of them is required"))
            }
        };
        params.validate().ctx(source)?;
        self.losses.validate().ctx("losses")?;

        let fb = &self.feedback;
        let default_choice = match protocol {
            Some(ProtocolKind::EprFeedback) | Some(ProtocolKind::Teleport) => FeedbackChoice::Optimal,
            _ => FeedbackChoice::Conditional,
        };
        let choice = fb.mode.unwrap_or(if fb.gain.is_some() {
            FeedbackChoice::Feedback
        } else {
            default_choice
        });
        match (protocol, choice) {
            (Some(ProtocolKind::EprConditional), c) if c != FeedbackChoice::Conditional => {
                return Err(CliError::validation(
                    "key `feedback.mode`: epr_conditional keeps the outcomes; use epr_feedback for feedback",
                ))
            }
            (Some(ProtocolKind::EprFeedback), FeedbackChoice::Conditional) => {
                return Err(CliError::validation(
                    "key `feedback.mode`: epr_feedback needs `feedback` or `optimal`",
                ))
            }
            _ => {}
        }
        let mode = match choice {
            FeedbackChoice::Conditional => FeedbackMode::Conditional,
            FeedbackChoice::Optimal => FeedbackMode::FeedbackOptimal,
            FeedbackChoice::Feedback => FeedbackMode::Feedback(
                fb.gain
                    .ok_or_else(|| CliError::validation("key `feedback.gain`: required for mode `feedback`"))?,
            ),
        };

        let t = &self.teleport;
        let input_mean = (t.input_mean[0], t.input_mean[1]);
        let teleport = if t.asymptotic {
            let mut cfg = TeleportConfig::asymptotic(input_mean);
            if let (Some(k), Some(g)) = (t.kappa_qnd, t.bell_gain) {
                cfg.kappa_qnd = k;
                cfg.bell_gain = g;
            }
            cfg
        } else {
            let k = t.kappa_qnd.ok_or_else(|| {
                CliError::validation("key `teleport.kappa_qnd`: required when `asymptotic = false`")
            })?;
            let mut cfg = TeleportConfig::unity_gain(k, input_mean);
            if let Some(g) = t.bell_gain {
                cfg.bell_gain = g;
            }
            cfg
        };
        if protocol == Some(ProtocolKind::Teleport) {
            teleport.validate().ctx("teleport")?;
        }

        Ok(Resolved {
            source,
            params,
            defaults_applied: defaults,
            setup,
            losses: effective_budget(&params, &self.losses),
            feedback: FeedbackConfig { mode },
            outcomes: fb.outcomes,
            oracle: self.oracle,
            teleport,
            verify_shots: self.verify.shots,
            feasibility,
        })
    }
}
