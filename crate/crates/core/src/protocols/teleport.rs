use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, Error, Result};
use crate::gaussian::{GaussianState, ModeLabel, ModeSpec};
use crate::io_maps::{qnd_pulse, QndRoles};
use crate::measurement::{FeedbackTerm, Quadrature};
use crate::names::{ATOM, ATOM2, MECH};

const BELL_COS: &str = "bell_cos";
const BELL_SIN: &str = "bell_sin";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleportConfig {
    pub kappa_qnd: f64,
    pub bell_gain: f64,
    /// `(⟨X⟩, ⟨P⟩)` of the coherent input stored in the second ensemble.
    pub input_mean: (f64, f64),
    /// Use the `κ_QND → ∞, g = 1/κ_QND` limit map instead of a finite pulse.
    pub asymptotic: bool,
}

impl TeleportConfig {
    pub fn asymptotic(input_mean: (f64, f64)) -> Self {
        Self {
            kappa_qnd: 1.0,
            bell_gain: 1.0,
            input_mean,
            asymptotic: true,
        }
    }

    /// Finite Bell pulse with the unity-gain choice `g = 1/κ_QND`.
    pub fn unity_gain(kappa_qnd: f64, input_mean: (f64, f64)) -> Self {
        Self {
            kappa_qnd,
            bell_gain: if kappa_qnd > 0.0 { 1.0 / kappa_qnd } else { 0.0 },
            input_mean,
            asymptotic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("kappa_qnd", self.kappa_qnd)?;
        check_nonneg("bell_gain", self.bell_gain)?;
        if self.asymptotic {
            let product = self.kappa_qnd * self.bell_gain;
            if (product - 1.0).abs() > 1e-9 {
                return Err(Error::OutOfRange {
                    name: "kappa_qnd*bell_gain",
                    value: product,
                    reason: "the asymptotic limit requires unit gain",
                });
            }
        } else if self.kappa_qnd == 0.0 {
            return Err(Error::NoSignal);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeleportOutcome {
    /// Final state of the mechanical mode.
    pub state: GaussianState,
    pub fidelity: f64,
    /// Output minus input variance, per quadrature.
    pub added_noise: (f64, f64),
}

/// Overlap fidelity of two single-mode Gaussian states,
/// `exp(−½ δᵀ(Σ₁+Σ₂)⁻¹δ) / √det(Σ₁+Σ₂)` with vacuum variance 1/2.
pub fn gaussian_fidelity(cov_a: &Matrix2<f64>, mean_a: &Vector2<f64>, cov_b: &Matrix2<f64>, mean_b: &Vector2<f64>) -> f64 {
    let sum = cov_a + cov_b;
    let det = sum.determinant();
    let d = mean_a - mean_b;
    let quad = sum.try_inverse().map(|inv| (d.transpose() * inv * d)[(0, 0)]).unwrap_or(f64::INFINITY);
    libm::exp(-0.5 * quad) / libm::sqrt(det)
}

/// Fidelity of a single-mode state against the coherent state with `mean`.
pub fn coherent_fidelity(state: &GaussianState, mean: (f64, f64)) -> Result<f64> {
    if state.mode_count() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: state.dim(),
        });
    }
    let c = state.cov();
    let out_cov = Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
    let out_mean = Vector2::new(state.mean()[0], state.mean()[1]);
    Ok(gaussian_fidelity(
        &(Matrix2::identity() * 0.5),
        &Vector2::new(mean.0, mean.1),
        &out_cov,
        &out_mean,
    ))
}

/// Teleport a coherent state from a fresh ensemble onto the mechanics using
/// the `{mech, atom}` EPR pair in `epr_state` as the resource.
pub fn teleport(epr_state: &GaussianState, cfg: &TeleportConfig) -> Result<TeleportOutcome> {
    cfg.validate()?;
    epr_state.mode(MECH)?;
    epr_state.mode(ATOM)?;
    let input = GaussianState::make_state(&[ModeSpec::new(ModeLabel::atomic_positive(ATOM2), 0.0, cfg.input_mean)])?;
    let joint = epr_state.tensor(&input)?;

    let mech = if cfg.asymptotic {
        // X_m → X_m + X_a + X_a2, P_m → P_m − P_a + P_a2.
        let dim = joint.dim();
        let (m, a, a2) = (joint.index_of(MECH)?, joint.index_of(ATOM)?, joint.index_of(ATOM2)?);
        let mut s = DMatrix::identity(dim, dim);
        s[(2 * m, 2 * a)] = 1.0;
        s[(2 * m, 2 * a2)] = 1.0;
        s[(2 * m + 1, 2 * a + 1)] = -1.0;
        s[(2 * m + 1, 2 * a2 + 1)] = 1.0;
        // The map acts on the mechanics alone after the ensembles are traced
        // out, so only the mechanical marginal is meaningful.
        let mean = &s * joint.mean();
        let cov = &s * joint.cov() * s.transpose();
        let q = [2 * m, 2 * m + 1];
        GaussianState::new(
            alloc::vec![joint.modes()[m].clone()],
            mean.select_rows(q.iter()),
            cov.select_rows(q.iter()).select_columns(q.iter()),
        )?
    } else {
        let roles = QndRoles {
            first: ATOM2,
            second: ATOM,
            cos: ModeLabel::light(BELL_COS),
            sin: ModeLabel::light(BELL_SIN),
        };
        let pulsed = qnd_pulse(&joint, cfg.kappa_qnd, &roles)?;
        let g = cfg.bell_gain;
        pulsed
            .measure_and_feed_back(
                BELL_COS,
                FRAC_PI_2,
                &[FeedbackTerm {
                    target: MECH,
                    quadrature: Quadrature::X,
                    gain: g,
                }],
            )?
            .measure_and_feed_back(
                BELL_SIN,
                FRAC_PI_2,
                &[FeedbackTerm {
                    target: MECH,
                    quadrature: Quadrature::P,
                    gain: g,
                }],
            )?
            .partial_trace(&[MECH])?
    };
    let fidelity = coherent_fidelity(&mech, cfg.input_mean)?;
    let added_noise = (mech.cov()[(0, 0)] - 0.5, mech.cov()[(1, 1)] - 0.5);
    Ok(TeleportOutcome {
        state: mech,
        fidelity,
        added_noise,
    })
}
