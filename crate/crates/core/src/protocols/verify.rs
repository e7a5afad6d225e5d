use core::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::epr::{epr_variance, EprReport, Provenance};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::io_maps::qnd_bigstep;
use crate::names::{ATOM, COS, MECH, SIN};
use crate::params::ProtocolParams;

/// Finite-sample estimate of the inferred EPR variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotEstimate {
    pub shots: usize,
    pub delta_epr: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    /// EPR variance inferred from the readout statistics.
    pub inferred: EprReport,
    /// State after the verification pulse, conditioned on its readout.
    pub post_state: GaussianState,
    pub post_report: EprReport,
}

fn readout_variances(state: &GaussianState, params: &ProtocolParams) -> Result<(f64, f64, f64, GaussianState)> {
    let kappa = params.effective_kappa();
    if !(kappa > 0.0) {
        return Err(Error::NoSignal);
    }
    let joint = qnd_bigstep(state, params)?.joint;
    let pc = joint.quadrature(COS, 1)?;
    let ps = joint.quadrature(SIN, 1)?;
    let var_c = joint.variance_of(&pc);
    let var_s = joint.variance_of(&ps);
    let (a, _) = joint.condition_on_homodyne(COS, FRAC_PI_2, 0.0)?;
    let (post, _) = a.condition_on_homodyne(SIN, FRAC_PI_2, 0.0)?;
    Ok((kappa, var_c, var_s, post))
}

fn invert(var_out: f64, kappa: f64) -> f64 {
    ((var_out - 0.5) / (kappa * kappa)).max(0.0)
}

/// Infer the EPR variance of `state` from a second pulse,
/// `Var(p_out) = 1/2 + κ²·Var(EPR quadrature)`.
pub fn verify_epr(state: &GaussianState, params: &ProtocolParams) -> Result<Verification> {
    let (kappa, var_c, var_s, post_state) = readout_variances(state, params)?;
    let inferred = EprReport::from_quadratures(
        invert(var_c, kappa),
        invert(var_s, kappa),
        Provenance::VerificationReadout,
    );
    let post_report = epr_variance(&post_state, MECH, ATOM, Provenance::IdealizedMap)?;
    Ok(Verification {
        inferred,
        post_state,
        post_report,
    })
}

/// As [`verify_epr`], estimating the readout variances from `shots`
/// independent repetitions instead of the exact statistics.
pub fn verify_epr_sampled<R: Rng + ?Sized>(
    state: &GaussianState,
    params: &ProtocolParams,
    shots: usize,
    rng: &mut R,
) -> Result<ShotEstimate> {
    if shots < 2 {
        return Err(Error::OutOfRange {
            name: "shots",
            value: shots as f64,
            reason: "need at least two repetitions",
        });
    }
    let (kappa, var_c, var_s, _) = readout_variances(state, params)?;
    let n = shots as f64;
    let sample_var = |var: f64, rng: &mut R| {
        let sd = libm::sqrt(var);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..shots {
            let z: f64 = StandardNormal.sample(rng);
            let x = sd * z;
            sum += x;
            sum_sq += x * x;
        }
        (sum_sq - sum * sum / n) / (n - 1.0)
    };
    let est_c = sample_var(var_c, rng);
    let est_s = sample_var(var_s, rng);
    let k2 = kappa * kappa;
    let delta_epr = invert(est_c, kappa) + invert(est_s, kappa);
    // Var(s²) = 2σ⁴/(N−1) for Gaussian data.
    let var_est = 2.0 * (var_c * var_c + var_s * var_s) / ((n - 1.0) * k2 * k2);
    Ok(ShotEstimate {
        shots,
        delta_epr,
        standard_error: libm::sqrt(var_est),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{ModeLabel, ModeSpec};
    use crate::protocols::{run_epr_generation, FeedbackConfig, Outcomes};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn initial(n_i: f64) -> GaussianState {
        GaussianState::make_state(&[
            ModeSpec::thermal(ModeLabel::mechanical(MECH), n_i),
            ModeSpec::vacuum(ModeLabel::atomic(ATOM)),
        ])
        .unwrap()
    }

    #[test]
    fn vacua_read_back_as_two() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let v = verify_epr(&initial(0.0), &p).unwrap();
        assert_abs_diff_eq!(v.inferred.delta_epr, 2.0, epsilon = 1e-12);
        assert_eq!(v.inferred.provenance, Provenance::VerificationReadout);
        assert!(v.post_report.delta_epr < 2.0);
    }

    #[test]
    fn generated_state_reads_back_exactly() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let run = run_epr_generation(&initial(0.0), &p, FeedbackConfig::CONDITIONAL, Outcomes::Given([0.2, 0.1])).unwrap();
        let v = verify_epr(&run.state, &p).unwrap();
        assert_abs_diff_eq!(v.inferred.delta_epr, 2.0 / 3.0, epsilon = 1e-10);
        // A second pulse squeezes further: V/(1+2κ²V) with V = 1/3.
        assert_abs_diff_eq!(v.post_report.delta_epr, 2.0 * 0.2, epsilon = 1e-10);
    }

    #[test]
    fn no_signal_without_coupling() {
        let p = ProtocolParams::matched(0.0, 0.0);
        assert_eq!(verify_epr(&initial(0.0), &p).unwrap_err(), Error::NoSignal);
    }

    #[test]
    fn shot_estimate_is_consistent() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = verify_epr_sampled(&initial(0.0), &p, 20_000, &mut rng).unwrap();
        assert!(est.delta_epr >= 0.0);
        assert!((est.delta_epr - 2.0).abs() < 5.0 * est.standard_error, "{est:?}");
        assert!(verify_epr_sampled(&initial(0.0), &p, 1, &mut rng).is_err());
    }
}
