use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, Error, Result};

/// Dimensionless and rate parameters of one protocol run.
///
/// `kappa` is the atomic QND strength; the mechanical side's strength is
/// `g·√(τ/γ_c)` and the two agree when the matching condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    pub kappa: f64,
    pub n_i: f64,
    /// Linearized optomechanical coupling (s⁻¹).
    pub g: f64,
    /// Cavity amplitude decay rate (s⁻¹).
    pub gamma_c: f64,
    /// Mechanical angular frequency (rad/s).
    pub omega_m: f64,
    /// Atomic Larmor angular frequency (rad/s).
    pub omega: f64,
    /// Pulse duration (s).
    pub tau: f64,
    /// Mechanical energy damping rate (s⁻¹).
    pub gamma_m: f64,
    pub n_th: f64,
    /// Declared tolerance on the matching error.
    pub eps_mismatch: f64,
    pub eta_light: f64,
    pub eta_det: f64,
}

/// Default pulse length used by [`ProtocolParams::matched`].
pub const DEFAULT_TAU: f64 = 1e-5;
/// Default Larmor phase accumulated over the pulse.
pub const DEFAULT_OMEGA_TAU: f64 = 400.0;
/// Default cavity decay rate; well above `g` and `ω_m` for κ up to ~10.
pub const DEFAULT_GAMMA_C: f64 = 1e10;

impl ProtocolParams {
    /// Exactly matched, lossless, undamped parameters with `Ωτ = 400`.
    pub fn matched(kappa: f64, n_i: f64) -> Self {
        let tau = DEFAULT_TAU;
        let omega = DEFAULT_OMEGA_TAU / tau;
        let gamma_c = DEFAULT_GAMMA_C;
        Self {
            kappa,
            n_i,
            g: kappa * libm::sqrt(gamma_c / tau),
            gamma_c,
            omega_m: omega,
            omega,
            tau,
            gamma_m: 0.0,
            n_th: 0.0,
            eps_mismatch: 0.0,
            eta_light: 1.0,
            eta_det: 1.0,
        }
    }

    /// Sets `Ω = ω_m` so that `Ωτ` takes the given value.
    pub fn with_omega_tau(mut self, omega_tau: f64) -> Self {
        self.omega = omega_tau / self.tau;
        self.omega_m = self.omega;
        self
    }

    /// Splits the couplings symmetrically around the current mean strength
    /// so that the signed matching error equals `eps`.
    pub fn with_mismatch(mut self, eps: f64) -> Self {
        let mean = self.effective_kappa();
        self.kappa = mean * (1.0 + eps);
        self.g = mean * (1.0 - eps) * libm::sqrt(self.gamma_c / self.tau);
        self.eps_mismatch = eps.abs();
        self
    }

    /// Mechanical damping with `γ_m τ` and bath occupation given.
    pub fn with_damping(mut self, gamma_m_tau: f64, n_th: f64) -> Self {
        self.gamma_m = gamma_m_tau / self.tau;
        self.n_th = n_th;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("kappa", self.kappa)?;
        check_nonneg("n_i", self.n_i)?;
        check_nonneg("g", self.g)?;
        check_nonneg("omega_m", self.omega_m)?;
        check_nonneg("omega", self.omega)?;
        check_nonneg("gamma_m", self.gamma_m)?;
        check_nonneg("n_th", self.n_th)?;
        check_nonneg("eps_mismatch", self.eps_mismatch)?;
        check_range("eta_light", self.eta_light, 0.0, 1.0, "efficiency must lie in [0, 1]")?;
        check_range("eta_det", self.eta_det, 0.0, 1.0, "efficiency must lie in [0, 1]")?;
        for (name, v) in [("gamma_c", self.gamma_c), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    reason: "must be finite and > 0",
                });
            }
        }
        Ok(())
    }

    /// QND strength of the mechanical segment, `g·√(τ/γ_c)`.
    pub fn optical_kappa(&self) -> f64 {
        self.g * libm::sqrt(self.tau / self.gamma_c)
    }

    /// Mean of the atomic and mechanical strengths.
    pub fn effective_kappa(&self) -> f64 {
        0.5 * (self.kappa + self.optical_kappa())
    }

    /// Signed matching error `(κ − g√(τ/γ_c)) / (κ + g√(τ/γ_c))`.
    pub fn matching_error(&self) -> Result<f64> {
        let optical = self.optical_kappa();
        let sum = self.kappa + optical;
        if sum == 0.0 {
            return Err(Error::DegenerateMatching);
        }
        Ok((self.kappa - optical) / sum)
    }

    /// Fails unless `|ε|` is within the declared tolerance (plus roundoff).
    pub fn require_matched(&self) -> Result<()> {
        let eps = match self.matching_error() {
            Ok(e) => e,
            // κ = g = 0 is trivially matched.
            Err(Error::DegenerateMatching) => return Ok(()),
            Err(e) => return Err(e),
        };
        if eps.abs() > self.eps_mismatch + 1e-9 {
            return Err(Error::MatchingViolated {
                eps,
                tolerance: self.eps_mismatch,
            });
        }
        Ok(())
    }

    pub fn omega_tau(&self) -> f64 {
        self.omega * self.tau
    }

    pub fn gamma_m_tau(&self) -> f64 {
        self.gamma_m * self.tau
    }

    /// Combined optical transmission from the cavity to the detector.
    pub fn optical_loss(&self) -> f64 {
        1.0 - self.eta_light * self.eta_det
    }
}
