//! Protocol drivers built on the Gaussian engine.

mod generation;
mod teleport;
mod verify;

pub use generation::{run_epr_generation, EprRun, FeedbackConfig, FeedbackMode, Outcomes};
pub use teleport::{coherent_fidelity, gaussian_fidelity, teleport, TeleportConfig, TeleportOutcome};
pub use verify::{verify_epr, verify_epr_sampled, ShotEstimate, Verification};

use crate::epr::{EprReport, Provenance};
use crate::error::{check_nonneg, Error, Result};

/// Minimal EPR variance after one pulse, `2 / ((1+n̄_i)⁻¹ + 2κ²)`.
pub fn predict_epr_variance(kappa: f64, n_i: f64) -> f64 {
    2.0 / (1.0 / (1.0 + n_i) + 2.0 * kappa * kappa)
}

/// Closed-form prediction packaged as a report (split evenly over the two
/// EPR quadratures).
pub fn predicted_report(kappa: f64, n_i: f64) -> Result<EprReport> {
    check_nonneg("kappa", kappa)?;
    check_nonneg("n_i", n_i)?;
    let half = 0.5 * predict_epr_variance(kappa, n_i);
    Ok(EprReport::from_quadratures(half, half, Provenance::Predicted))
}

/// Gain minimizing `(1−gκ)²V + g²/2` for an EPR quadrature of variance `V`.
pub fn optimal_gain_for_variance(kappa: f64, v: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::UndefinedGain);
    }
    Ok(kappa * v / (kappa * kappa * v + 0.5))
}

/// Optimal feedback gain for a thermal mechanical start, `V = 1 + n̄_i`.
pub fn optimal_gain(kappa: f64, n_i: f64) -> Result<f64> {
    optimal_gain_for_variance(kappa, 1.0 + n_i)
}

/// Variance of one EPR quadrature after feedback with gain `g`.
pub fn feedback_variance(kappa: f64, v: f64, g: f64) -> f64 {
    let a = 1.0 - g * kappa;
    a * a * v + 0.5 * g * g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn prediction_examples() {
        assert_eq!(predict_epr_variance(0.0, 0.0), 2.0);
        assert_relative_eq!(predict_epr_variance(1.0, 0.0), 2.0 / 3.0, max_relative = 1e-15);
        let kappa: f64 = 1.3;
        assert_relative_eq!(predict_epr_variance(kappa, 1e12), 1.0 / (kappa * kappa), max_relative = 1e-9);
        let r = predicted_report(1.0, 0.0).unwrap();
        assert!(r.entangled);
        assert_eq!(r.provenance, Provenance::Predicted);
    }

    #[test]
    fn gain_examples() {
        assert_relative_eq!(optimal_gain(1.0, 0.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        assert_eq!(optimal_gain(0.0, 3.0), Err(Error::UndefinedGain));
        let k = 1e4;
        assert_relative_eq!(optimal_gain(k, 0.0).unwrap(), 1.0 / k, max_relative = 1e-8);
    }

    #[test]
    fn entanglement_threshold_on_a_grid() {
        for i in 0..=60 {
            let kappa = 0.05 * i as f64;
            for &n_i in &[0.0, 0.5, 3.0, 30.0, 850.0, 1e4, 1e8] {
                let entangled = predict_epr_variance(kappa, n_i) < 2.0;
                let condition = 1.0 / (1.0 + n_i) + 2.0 * kappa * kappa > 1.0;
                assert_eq!(entangled, condition, "kappa={kappa}, n_i={n_i}");
            }
            // Large-n̄ limit: survives iff κ² > 1/2.
            let asymptotic = predict_epr_variance(kappa, 1e12) < 2.0;
            if (kappa * kappa - 0.5).abs() > 1e-6 {
                assert_eq!(asymptotic, kappa * kappa > 0.5, "kappa={kappa}");
            }
        }
    }

    proptest! {
        #[test]
        fn optimal_feedback_hits_the_prediction(kappa in 1e-3f64..10.0, n_i in 0.0f64..1e4) {
            let g = optimal_gain(kappa, n_i).unwrap();
            let per_quad = feedback_variance(kappa, 1.0 + n_i, g);
            let target = 0.5 * predict_epr_variance(kappa, n_i);
            prop_assert!((per_quad - target).abs() <= 1e-12 * target);
            // Any other gain does worse.
            for dg in [-1e-3, 1e-3] {
                prop_assert!(feedback_variance(kappa, 1.0 + n_i, g + dg) >= per_quad);
            }
        }

        #[test]
        fn prediction_is_monotone(
            k1 in 0.0f64..10.0, k2 in 0.0f64..10.0, n1 in 0.0f64..1e4, n2 in 0.0f64..1e4
        ) {
            let (klo, khi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let (nlo, nhi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
            prop_assert!(predict_epr_variance(khi, n1) <= predict_epr_variance(klo, n1));
            prop_assert!(predict_epr_variance(k1, nlo) <= predict_epr_variance(k1, nhi));
            prop_assert!(predict_epr_variance(k1, n1) >= 0.0);
        }
    }
}
