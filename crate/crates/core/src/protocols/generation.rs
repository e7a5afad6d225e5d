use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::epr::{epr_variance, epr_weights, EprReport, Provenance};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::io_maps::{qnd_bigstep, Warning};
use crate::measurement::{FeedbackTerm, MeasurementRecord, Quadrature};
use crate::names::{ATOM, COS, MECH, SIN};
use crate::params::ProtocolParams;

use super::optimal_gain_for_variance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "gain", rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Keep the measured outcomes and condition on them.
    Conditional,
    /// Displace the atoms by `(−g·ξ_cos, +g·ξ_sin)` and forget the outcomes.
    Feedback(f64),
    /// As `Feedback` with the variance-minimizing gain for each EPR quadrature.
    FeedbackOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    #[serde(flatten)]
    pub mode: FeedbackMode,
}

impl FeedbackConfig {
    pub const CONDITIONAL: Self = Self {
        mode: FeedbackMode::Conditional,
    };
    pub const OPTIMAL: Self = Self {
        mode: FeedbackMode::FeedbackOptimal,
    };

    pub fn with_gain(gain: f64) -> Self {
        Self {
            mode: FeedbackMode::Feedback(gain),
        }
    }
}

/// Source of the two homodyne outcomes `(ξ_cos, ξ_sin)`.
pub enum Outcomes<'a> {
    Given([f64; 2]),
    Sampled(&'a mut dyn RngCore),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EprRun {
    /// `{mech, atom}` state after the protocol. For feedback modes this is
    /// the outcome-averaged state.
    pub state: GaussianState,
    pub report: EprReport,
    pub records: [MeasurementRecord; 2],
    /// Gains applied to `(X_a, P_a)`, if feedback was used.
    pub gains: Option<(f64, f64)>,
    pub warnings: Vec<Warning>,
}

/// One pulse followed by conditioning or feedback.
pub fn run_epr_generation(
    initial: &GaussianState,
    params: &ProtocolParams,
    fb: FeedbackConfig,
    outcomes: Outcomes<'_>,
) -> Result<EprRun> {
    let pulse = qnd_bigstep(initial, params)?;
    let joint = pulse.joint;

    // The realized record: sequential conditioning on both p readouts.
    let (after_cos, rec_cos, after_sin, rec_sin) = match outcomes {
        Outcomes::Given([xc, xs]) => {
            let (a, rc) = joint.condition_on_homodyne(COS, FRAC_PI_2, xc)?;
            let (b, rs) = a.condition_on_homodyne(SIN, FRAC_PI_2, xs)?;
            (a, rc, b, rs)
        }
        Outcomes::Sampled(rng) => {
            let (a, rc) = joint.condition_on_homodyne_sampled(COS, FRAC_PI_2, rng)?;
            let (b, rs) = a.condition_on_homodyne_sampled(SIN, FRAC_PI_2, rng)?;
            (a, rc, b, rs)
        }
    };
    drop(after_cos);

    let kappa = params.effective_kappa();
    let gains = match fb.mode {
        FeedbackMode::Conditional => None,
        FeedbackMode::Feedback(g) => {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::OutOfRange {
                    name: "gain",
                    value: g,
                    reason: "feedback gain must be finite and >= 0",
                });
            }
            Some((g, g))
        }
        FeedbackMode::FeedbackOptimal => {
            let (xsum, pdiff) = epr_weights(initial, MECH, ATOM)?;
            Some((
                optimal_gain_for_variance(kappa, initial.variance_of(&xsum))?,
                optimal_gain_for_variance(kappa, initial.variance_of(&pdiff))?,
            ))
        }
    };

    let state = match gains {
        None => after_sin,
        Some((gx, gp)) => {
            let x_term = [FeedbackTerm {
                target: ATOM,
                quadrature: Quadrature::X,
                gain: -gx,
            }];
            let p_term = [FeedbackTerm {
                target: ATOM,
                quadrature: Quadrature::P,
                gain: gp,
            }];
            joint
                .measure_and_feed_back(COS, FRAC_PI_2, &x_term)?
                .measure_and_feed_back(SIN, FRAC_PI_2, &p_term)?
        }
    };
    let report = epr_variance(&state, MECH, ATOM, Provenance::IdealizedMap)?;
    Ok(EprRun {
        state,
        report,
        records: [rec_cos, rec_sin],
        gains,
        warnings: pulse.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{ModeLabel, ModeSpec};
    use crate::protocols::predict_epr_variance;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn initial(n_i: f64) -> GaussianState {
        GaussianState::make_state(&[
            ModeSpec::thermal(ModeLabel::mechanical(MECH), n_i),
            ModeSpec::vacuum(ModeLabel::atomic(ATOM)),
        ])
        .unwrap()
    }

    fn epr_block(s: &GaussianState) -> [f64; 3] {
        let (x, p) = epr_weights(s, MECH, ATOM).unwrap();
        [s.variance_of(&x), s.variance_of(&p), s.covariance_of(&x, &p)]
    }

    #[test]
    fn conditional_reaches_two_thirds() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let run = run_epr_generation(&initial(0.0), &p, FeedbackConfig::CONDITIONAL, Outcomes::Sampled(&mut rng))
            .unwrap();
        assert_relative_eq!(run.report.delta_epr, 2.0 / 3.0, max_relative = 1e-12);
        assert!(run.report.entangled);
        assert_eq!(run.report.provenance, Provenance::IdealizedMap);
        assert_eq!(run.state.mode_count(), 2);
        assert_eq!(run.records[0].mode.name, COS);
        assert_eq!(run.records[1].mode.name, SIN);
        assert!(run.gains.is_none());
    }

    #[test]
    fn optimal_feedback_matches_conditioning_on_the_epr_block() {
        for &(kappa, n_i) in &[(0.25, 0.0), (1.0, 30.0), (2.0, 850.0)] {
            let p = ProtocolParams::matched(kappa, n_i);
            let s = initial(n_i);
            let cond = run_epr_generation(&s, &p, FeedbackConfig::CONDITIONAL, Outcomes::Given([0.0, 0.0])).unwrap();
            let fb = run_epr_generation(&s, &p, FeedbackConfig::OPTIMAL, Outcomes::Given([0.0, 0.0])).unwrap();
            for (a, b) in epr_block(&cond.state).iter().zip(epr_block(&fb.state)) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
            }
            assert_relative_eq!(fb.report.delta_epr, predict_epr_variance(kappa, n_i), max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_gain_only_discards_light() {
        let n_i = 5.0;
        let p = ProtocolParams::matched(1.0, n_i);
        let run = run_epr_generation(&initial(n_i), &p, FeedbackConfig::with_gain(0.0), Outcomes::Given([0.3, -0.2]))
            .unwrap();
        assert_relative_eq!(run.report.delta_epr, 2.0 * (1.0 + n_i), max_relative = 1e-12);
        assert_eq!(run.gains, Some((0.0, 0.0)));
    }

    #[test]
    fn negative_gain_is_rejected() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let r = run_epr_generation(&initial(0.0), &p, FeedbackConfig::with_gain(-1.0), Outcomes::Given([0.0, 0.0]));
        assert!(r.is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = ProtocolParams::matched(1.0, 2.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_epr_generation(&initial(2.0), &p, FeedbackConfig::CONDITIONAL, Outcomes::Sampled(&mut rng)).unwrap()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11).records[0].outcome, draw(12).records[0].outcome);
    }

    #[test]
    fn given_outcomes_shift_the_conditional_mean() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let run = run_epr_generation(&initial(0.0), &p, FeedbackConfig::CONDITIONAL, Outcomes::Given([1.5, 0.0])).unwrap();
        // E[X_m + X_a | ξ] = κV/(κ²V + 1/2)·ξ with V = 1.
        let (x, _) = epr_weights(&run.state, MECH, ATOM).unwrap();
        assert_relative_eq!(x.dot(run.state.mean()), 1.5 * 2.0 / 3.0, max_relative = 1e-12);
    }
}
