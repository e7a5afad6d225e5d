//! From an SI description of the hardware to protocol parameters, with the
//! validity conditions of the adiabatic, rotating-frame treatment checked.
//!
//! Conventions: the cavity amplitude decay rate is `γ_c = πc/(2FL)`, the
//! linearized coupling is `g = g₀α` with `g₀ = x₀ω_c/L`, and `x₀ = √(ħ/2mω_m)`.
//! A strong inequality `a ≪ b` passes when `b/a ≥ 10` and warns when `b/a ≥ 5`.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::protocols::predict_epr_variance;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const C_LIGHT: f64 = 299_792_458.0;
pub const DEFAULT_WAVELENGTH: f64 = 1064e-9;

/// Ratio above which a strong inequality passes.
pub const MARGIN_PASS: f64 = 10.0;
/// Ratio above which a strong inequality only warns.
pub const MARGIN_WARN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanics {
    /// Angular frequency (rad/s).
    pub omega_m: f64,
    /// Effective mass (kg).
    pub mass: f64,
    pub q_m: f64,
    /// Bath temperature (K).
    pub temperature: f64,
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cavity {
    pub finesse: f64,
    /// Length (m).
    pub length: f64,
    /// Optical wavelength (m).
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    /// Drive power (W).
    pub power: f64,
    /// Pulse duration (s).
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atoms {
    /// Spontaneous decay rate (rad/s).
    pub gamma: f64,
    /// Probe detuning (rad/s).
    pub delta: f64,
    /// Scattering cross section (m²).
    pub sigma: f64,
    /// Beam cross section (m²).
    pub area: f64,
    pub n_at: f64,
    /// Larmor angular frequency (rad/s).
    pub omega: f64,
}

fn default_cooling() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSetup {
    pub mech: Mechanics,
    pub cavity: Cavity,
    /// Without an explicit ensemble, the atoms are assumed to be tuned to
    /// the optical strength and to the mechanical frequency.
    #[serde(default)]
    pub atoms: Option<Atoms>,
    /// Pre-cooling ratio `n̄_th / n̄_i`.
    #[serde(default = "default_cooling")]
    pub cooling_factor: f64,
}

impl PhysicalSetup {
    /// 5 MHz, 1 ng micromirror at 0.2 K in a 300 µm, F = 4500 cavity with
    /// 100 µW drive, pre-cooled 30-fold, 2 µs pulses.
    pub fn micromirror() -> Self {
        Self {
            mech: Mechanics {
                omega_m: 2.0 * PI * 5e6,
                mass: 1e-12,
                q_m: 5e5,
                temperature: 0.2,
            },
            cavity: Cavity {
                finesse: 4500.0,
                length: 300e-6,
                wavelength: DEFAULT_WAVELENGTH,
                power: 100e-6,
                tau: 2e-6,
            },
            atoms: None,
            cooling_factor: 30.0,
        }
    }

    /// 30 MHz, 10 pg membrane at 40 mK in a 250 µm, F = 1100 cavity with
    /// 100 µW drive, 2 µs pulses.
    pub fn membrane() -> Self {
        Self {
            mech: Mechanics {
                omega_m: 2.0 * PI * 30e6,
                mass: 1e-14,
                q_m: 1e5,
                temperature: 0.04,
            },
            cavity: Cavity {
                finesse: 1100.0,
                length: 250e-6,
                wavelength: DEFAULT_WAVELENGTH,
                power: 100e-6,
                tau: 2e-6,
            },
            atoms: None,
            cooling_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_m", self.mech.omega_m),
            ("mass", self.mech.mass),
            ("q_m", self.mech.q_m),
            ("finesse", self.cavity.finesse),
            ("length", self.cavity.length),
            ("wavelength", self.cavity.wavelength),
            ("tau", self.cavity.tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    reason: "must be finite and > 0",
                });
            }
        }
        for (name, v) in [("temperature", self.mech.temperature), ("power", self.cavity.power)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    reason: "must be finite and >= 0",
                });
            }
        }
        if !(self.cooling_factor >= 1.0 && self.cooling_factor.is_finite()) {
            return Err(Error::OutOfRange {
                name: "cooling_factor",
                value: self.cooling_factor,
                reason: "pre-cooling ratio must be >= 1",
            });
        }
        if let Some(a) = &self.atoms {
            let fields = [
                ("gamma", a.gamma),
                ("delta", a.delta),
                ("sigma", a.sigma),
                ("area", a.area),
                ("n_at", a.n_at),
                ("omega", a.omega),
            ];
            for (name, v) in fields {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::OutOfRange {
                        name,
                        value: v,
                        reason: "must be finite and > 0",
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Margin by which the condition holds (larger is better).
    pub ratio: f64,
    pub status: Status,
}

impl Check {
    fn strong(name: &'static str, ratio: f64) -> Self {
        let status = if ratio >= MARGIN_PASS {
            Status::Pass
        } else if ratio >= MARGIN_WARN {
            Status::Warn
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            ratio,
            status,
        }
    }

    fn at_least_one(name: &'static str, ratio: f64) -> Self {
        let status = if ratio >= 1.0 { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            ratio,
            status,
        }
    }
}

/// Intermediate quantities of the derivation, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub x0: f64,
    pub omega_c: f64,
    pub gamma_c: f64,
    pub n_ph: f64,
    pub alpha: f64,
    pub g0: f64,
    pub g: f64,
    pub gamma_m: f64,
    pub n_th: f64,
    pub n_i: f64,
    /// QND strength of the optomechanical segment, `g√(τ/γ_c)`.
    pub kappa_optical: f64,
    /// QND strength of the atomic segment, if an ensemble was described.
    pub kappa_atomic: Option<f64>,
    /// Signed matching error; `1` when no coupling survives at all.
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub derived: Derived,
    pub checks: Vec<Check>,
    pub coherence: CoherenceBudget,
}

impl FeasibilityReport {
    pub fn worst(&self) -> Status {
        self.checks
            .iter()
            .map(|c| c.status)
            .max_by_key(|s| *s as u8)
            .unwrap_or(Status::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn derive(setup: &PhysicalSetup) -> Derived {
    let m = &setup.mech;
    let c = &setup.cavity;
    let x0 = libm::sqrt(HBAR / (2.0 * m.mass * m.omega_m));
    let omega_c = 2.0 * PI * C_LIGHT / c.wavelength;
    let gamma_c = PI * C_LIGHT / (2.0 * c.finesse * c.length);
    let n_ph = c.power * c.tau / (HBAR * omega_c);
    let alpha = libm::sqrt(n_ph / (c.tau * gamma_c));
    let g0 = x0 * omega_c / c.length;
    let g = g0 * alpha;
    let kappa_optical = g * libm::sqrt(c.tau / gamma_c);
    let kappa_atomic = setup
        .atoms
        .map(|a| a.sigma * a.gamma / (a.area * a.delta) * libm::sqrt(a.n_at * n_ph));
    let n_th = K_B * m.temperature / (HBAR * m.omega_m);
    let kappa = kappa_atomic.unwrap_or(kappa_optical);
    let eps = if kappa + kappa_optical > 0.0 {
        (kappa - kappa_optical) / (kappa + kappa_optical)
    } else {
        1.0
    };
    Derived {
        x0,
        omega_c,
        gamma_c,
        n_ph,
        alpha,
        g0,
        g,
        gamma_m: m.omega_m / m.q_m,
        n_th,
        n_i: n_th / setup.cooling_factor,
        kappa_optical,
        kappa_atomic,
        eps,
    }
}

/// Dimensionless parameters and the feasibility checks for `setup`.
pub fn derive_params(setup: &PhysicalSetup) -> Result<(ProtocolParams, FeasibilityReport)> {
    setup.validate()?;
    let d = derive(setup);
    let omega = setup.atoms.map_or(setup.mech.omega_m, |a| a.omega);
    let tau = setup.cavity.tau;
    let params = ProtocolParams {
        kappa: d.kappa_atomic.unwrap_or(d.kappa_optical),
        n_i: d.n_i,
        g: d.g,
        gamma_c: d.gamma_c,
        omega_m: setup.mech.omega_m,
        omega,
        tau,
        gamma_m: d.gamma_m,
        n_th: d.n_th,
        eps_mismatch: d.eps.abs(),
        eta_light: 1.0,
        eta_det: 1.0,
    };
    let coherence = coherence_budget(setup)?;
    let no_coupling = d.kappa_optical + d.kappa_atomic.unwrap_or(0.0) == 0.0;
    let mut checks = alloc::vec![
        Check::strong("gamma_c >> g", d.gamma_c / d.g),
        Check::strong("gamma_c >> omega_m", d.gamma_c / setup.mech.omega_m),
        Check::strong("Omega*tau >> 1", omega * tau),
        Check::strong("tau << 1/(gamma_m*n_th)", 1.0 / (d.gamma_m * d.n_th * tau)),
    ];
    let eps_ratio = if no_coupling {
        0.0
    } else {
        1.0 / (10.0 * d.n_i.max(f64::MIN_POSITIVE) * d.eps.abs())
    };
    checks.push(Check::at_least_one("|eps| <= 1/(10*n_i)", eps_ratio));
    let delta = predict_epr_variance(params.kappa, params.n_i);
    checks.push(Check::at_least_one("predicted EPR variance < 2", 2.0 / delta - 1e-12));
    if no_coupling {
        log::warn!("no optical coupling: the matching error is reported as 1");
    }
    Ok((
        params,
        FeasibilityReport {
            derived: d,
            checks,
            coherence,
        },
    ))
}

/// Signed matching error of already dimensionless parameters.
pub fn check_matching(params: &ProtocolParams) -> Result<f64> {
    params.validate()?;
    params.matching_error()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiting {
    MechanicalThermalization,
    /// Zero temperature: no thermal bound.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceBudget {
    /// `Q_m ħ / (k_B T)` (s).
    pub tau_coherence: f64,
    /// `tau_coherence / 10` (s).
    pub tau_max: f64,
    pub limiting: Limiting,
}

pub fn coherence_budget(setup: &PhysicalSetup) -> Result<CoherenceBudget> {
    setup.validate()?;
    let m = &setup.mech;
    if m.temperature == 0.0 {
        return Ok(CoherenceBudget {
            tau_coherence: f64::INFINITY,
            tau_max: f64::INFINITY,
            limiting: Limiting::None,
        });
    }
    let tau_coherence = m.q_m * HBAR / (K_B * m.temperature);
    Ok(CoherenceBudget {
        tau_coherence,
        tau_max: tau_coherence / MARGIN_PASS,
        limiting: Limiting::MechanicalThermalization,
    })
}

/// Drive power at which the optical strength reaches `target_kappa`.
pub fn solve_power_for_kappa(setup: &PhysicalSetup, target_kappa: f64) -> Result<f64> {
    setup.validate()?;
    if !(target_kappa >= 0.0 && target_kappa.is_finite()) {
        return Err(Error::OutOfRange {
            name: "target_kappa",
            value: target_kappa,
            reason: "must be finite and >= 0",
        });
    }
    let mut unit = *setup;
    unit.cavity.power = 1.0;
    let k1 = derive(&unit).kappa_optical;
    Ok((target_kappa / k1) * (target_kappa / k1))
}

/// Atom number at which the atomic strength equals the optical one.
///
/// Both strengths scale as the square root of the photon number, so the
/// drive power drops out of the matching condition and the atom number is
/// the free knob.
pub fn solve_atom_number_for_matching(setup: &PhysicalSetup) -> Result<f64> {
    setup.validate()?;
    let atoms = setup.atoms.ok_or(Error::UnknownMode("atoms".into()))?;
    let d = derive(setup);
    match d.kappa_atomic {
        Some(ka) if ka > 0.0 => {
            let r = d.kappa_optical / ka;
            Ok(atoms.n_at * r * r)
        }
        _ => Err(Error::DegenerateMatching),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn with_atoms() -> PhysicalSetup {
        let mut s = PhysicalSetup::micromirror();
        s.atoms = Some(Atoms {
            gamma: 2.0 * PI * 5.2e6,
            delta: 2.0 * PI * 1e9,
            sigma: 1e-13,
            area: 1e-6,
            n_at: 1e9,
            omega: 2.0 * PI * 5e6,
        });
        s
    }

    #[test]
    fn micromirror_numbers() {
        let (p, rep) = derive_params(&PhysicalSetup::micromirror()).unwrap();
        assert_relative_eq!(rep.derived.n_th, 833.4, max_relative = 1e-3);
        assert_relative_eq!(p.n_i, 833.4 / 30.0, max_relative = 1e-3);
        assert_relative_eq!(rep.derived.gamma_c, 3.49e8, max_relative = 1e-2);
        assert!(p.kappa > 0.5 && p.kappa < 2.0, "{}", p.kappa);
        assert!(p.matching_error().unwrap().abs() < 1e-15);
        assert_eq!(rep.check("gamma_c >> g").unwrap().status, Status::Pass);
        assert_relative_eq!(rep.coherence.tau_coherence, 19.1e-6, max_relative = 1e-2);
        assert_eq!(rep.coherence.limiting, Limiting::MechanicalThermalization);
    }

    #[test]
    fn membrane_numbers() {
        let (p, rep) = derive_params(&PhysicalSetup::membrane()).unwrap();
        assert!((p.n_i - 30.0).abs() < 0.2 * 30.0, "{}", p.n_i);
        assert_eq!(rep.check("gamma_c >> omega_m").unwrap().status, Status::Warn);
    }

    #[test]
    fn zero_power_is_flagged() {
        let mut s = with_atoms();
        s.cavity.power = 0.0;
        let (p, rep) = derive_params(&s).unwrap();
        assert_eq!(p.g, 0.0);
        assert_eq!(rep.derived.eps, 1.0);
        assert_eq!(rep.check("|eps| <= 1/(10*n_i)").unwrap().status, Status::Fail);
        assert_eq!(rep.worst(), Status::Fail);
    }

    #[test]
    fn matching_examples() {
        let mut p = ProtocolParams::matched(1.0, 0.0);
        assert!(check_matching(&p).unwrap().abs() < 1e-15);
        p.g = 0.98 * libm::sqrt(p.gamma_c / p.tau);
        assert_relative_eq!(check_matching(&p).unwrap(), 0.02 / 1.98, max_relative = 1e-9);
        p.kappa = 0.9;
        assert!(check_matching(&p).unwrap() < 0.0);
        p.kappa = 0.0;
        p.g = 0.0;
        assert_eq!(check_matching(&p), Err(Error::DegenerateMatching));
    }

    #[test]
    fn coherence_scaling() {
        let mut s = PhysicalSetup::micromirror();
        let base = coherence_budget(&s).unwrap().tau_max;
        s.mech.q_m *= 2.0;
        assert_relative_eq!(coherence_budget(&s).unwrap().tau_max, 2.0 * base, max_relative = 1e-14);
        s.mech.temperature = 0.0;
        let b = coherence_budget(&s).unwrap();
        assert!(b.tau_max.is_infinite());
        assert_eq!(b.limiting, Limiting::None);
    }

    #[test]
    fn square_root_scalings() {
        let s = with_atoms();
        let (_, r1) = derive_params(&s).unwrap();
        let mut s4 = s;
        s4.atoms.as_mut().unwrap().n_at *= 4.0;
        let (_, r4) = derive_params(&s4).unwrap();
        assert_relative_eq!(
            r4.derived.kappa_atomic.unwrap(),
            2.0 * r1.derived.kappa_atomic.unwrap(),
            max_relative = 1e-14
        );
        let mut s_p = s;
        s_p.cavity.power *= 4.0;
        let (_, rp) = derive_params(&s_p).unwrap();
        assert_relative_eq!(rp.derived.g, 2.0 * r1.derived.g, max_relative = 1e-14);
        assert_relative_eq!(rp.derived.eps, r1.derived.eps, max_relative = 1e-12);
    }

    #[test]
    fn unit_rescaling_is_invisible() {
        let s = PhysicalSetup::micromirror();
        let mut t = s;
        // 0.1 mW written as 1e-4 W through a different route.
        t.cavity.power = 0.1 * 1e-3;
        let (a, _) = derive_params(&s).unwrap();
        let (b, _) = derive_params(&t).unwrap();
        assert_relative_eq!(a.kappa, b.kappa, max_relative = 1e-15);
        assert_relative_eq!(a.g / a.gamma_c, b.g / b.gamma_c, max_relative = 1e-15);
    }

    #[test]
    fn inverse_solves_round_trip() {
        let s = with_atoms();
        let n_at = solve_atom_number_for_matching(&s).unwrap();
        let mut m = s;
        m.atoms.as_mut().unwrap().n_at = n_at;
        let (p, _) = derive_params(&m).unwrap();
        assert!(check_matching(&p).unwrap().abs() < 1e-10);

        let power = solve_power_for_kappa(&PhysicalSetup::micromirror(), 1.0).unwrap();
        let mut q = PhysicalSetup::micromirror();
        q.cavity.power = power;
        let (p, _) = derive_params(&q).unwrap();
        assert_relative_eq!(p.kappa, 1.0, max_relative = 1e-12);
    }
}
