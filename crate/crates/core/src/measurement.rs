//! Homodyne detection on Gaussian states: conditioning on an outcome and
//! the outcome-averaged measure-and-displace channel.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, ModeLabel, DEGENERATE_VARIANCE};

/// Result of one homodyne detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub mode: ModeLabel,
    /// Radians; 0 measures X, π/2 measures P.
    pub quadrature_angle: f64,
    pub outcome: f64,
    /// Variance of the outcome distribution before the measurement.
    pub outcome_variance: f64,
}

/// Which quadrature of a target mode a feedback displacement acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub(crate) fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

/// One displacement `target += gain · outcome` applied after a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackTerm<'a> {
    pub target: &'a str,
    pub quadrature: Quadrature,
    pub gain: f64,
}

/// Split of the state into the measured quadrature and everything that remains.
struct Partition {
    remaining: Vec<usize>,
    weights: DVector<f64>,
    marginal_mean: f64,
    marginal_variance: f64,
    cross: DVector<f64>,
}

impl GaussianState {
    fn partition(&self, name: &str, angle: f64) -> Result<Partition> {
        let k = self.index_of(name)?;
        let mut weights = DVector::zeros(self.dim());
        weights[2 * k] = libm::cos(angle);
        weights[2 * k + 1] = libm::sin(angle);
        let marginal_variance = self.variance_of(&weights);
        if !(marginal_variance >= DEGENERATE_VARIANCE) {
            return Err(Error::DegenerateMeasurement {
                variance: marginal_variance,
            });
        }
        let remaining: Vec<usize> = (0..self.dim()).filter(|&q| q / 2 != k).collect();
        let full_cross = self.cov() * &weights;
        let cross = full_cross.select_rows(remaining.iter());
        Ok(Partition {
            remaining,
            marginal_mean: weights.dot(self.mean()),
            marginal_variance,
            cross,
            weights,
        })
    }

    /// Homodyne detection of `cos θ·X + sin θ·P` on `name` with a known outcome.
    ///
    /// Returns the conditional state of the other modes together with the record.
    /// The conditional covariance does not depend on `outcome`.
    pub fn condition_on_homodyne(
        &self,
        name: &str,
        angle: f64,
        outcome: f64,
    ) -> Result<(GaussianState, MeasurementRecord)> {
        let part = self.partition(name, angle)?;
        let label = self.mode(name)?.clone();
        let modes: Vec<ModeLabel> = self
            .modes()
            .iter()
            .filter(|m| m.name != name)
            .cloned()
            .collect();
        let mean_a = self.mean().select_rows(part.remaining.iter());
        let cov_aa = self
            .cov()
            .select_rows(part.remaining.iter())
            .select_columns(part.remaining.iter());
        let gain = &part.cross / part.marginal_variance;
        let mean = mean_a + &gain * (outcome - part.marginal_mean);
        let cov = cov_aa - &gain * part.cross.transpose();
        let record = MeasurementRecord {
            mode: label,
            quadrature_angle: angle,
            outcome,
            outcome_variance: part.marginal_variance,
        };
        Ok((GaussianState::from_parts_unchecked(modes, mean, cov), record))
    }

    /// As [`GaussianState::condition_on_homodyne`], drawing the outcome from
    /// its Gaussian marginal with `rng`.
    pub fn condition_on_homodyne_sampled<R: Rng + ?Sized>(
        &self,
        name: &str,
        angle: f64,
        rng: &mut R,
    ) -> Result<(GaussianState, MeasurementRecord)> {
        let part = self.partition(name, angle)?;
        let z: f64 = StandardNormal.sample(rng);
        let outcome = part.marginal_mean + libm::sqrt(part.marginal_variance) * z;
        self.condition_on_homodyne(name, angle, outcome)
    }

    /// Outcome-averaged state after measuring `name` and displacing targets
    /// by `gain · outcome`. The measured mode is removed.
    ///
    /// Equivalent to the linear map `target → target + gain·(wᵀR)` on the
    /// joint state followed by discarding the measured mode; the result is
    /// always a physical state because the outcome is classical.
    pub fn measure_and_feed_back(
        &self,
        name: &str,
        angle: f64,
        feedback: &[FeedbackTerm<'_>],
    ) -> Result<GaussianState> {
        let part = self.partition(name, angle)?;
        let dim = self.dim();
        let mut map = DMatrix::<f64>::identity(dim, dim);
        for term in feedback {
            if term.target == name {
                return Err(Error::WrongRole(
                    term.target.into(),
                    "feedback cannot act on the measured mode",
                ));
            }
            let q = 2 * self.index_of(term.target)? + term.quadrature.offset();
            for c in 0..dim {
                map[(q, c)] += term.gain * part.weights[c];
            }
        }
        let reduced = map.select_rows(part.remaining.iter());
        let mean = &reduced * self.mean();
        let cov = &reduced * self.cov() * reduced.transpose();
        let modes: Vec<ModeLabel> = self
            .modes()
            .iter()
            .filter(|m| m.name != name)
            .cloned()
            .collect();
        Ok(GaussianState::from_parts_unchecked(modes, mean, cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ModeSpec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn correlated(v: f64, kappa: f64) -> GaussianState {
        // Thermal A (variance V) and vacuum B after X_B += κX_A, P_A −= κP_B.
        let mut cov = DMatrix::identity(4, 4) * 0.5;
        cov[(0, 0)] = v;
        cov[(2, 2)] = 0.5 + kappa * kappa * v;
        cov[(0, 2)] = kappa * v;
        cov[(2, 0)] = kappa * v;
        cov[(1, 1)] = v + 0.5 * kappa * kappa;
        cov[(1, 3)] = -0.5 * kappa;
        cov[(3, 1)] = -0.5 * kappa;
        GaussianState::new(
            alloc::vec![ModeLabel::mechanical("a"), ModeLabel::light("b")],
            DVector::zeros(4),
            cov,
        )
        .unwrap()
    }

    #[test]
    fn product_vacuum_measurement_leaves_partner_alone() {
        let s = GaussianState::vacuum(&[ModeLabel::mechanical("a"), ModeLabel::light("b")]);
        let (out, rec) = s.condition_on_homodyne("b", 0.0, 0.3).unwrap();
        assert_eq!(out.cov(), &(DMatrix::identity(2, 2) * 0.5));
        assert_eq!(out.mean(), &DVector::zeros(2));
        assert_eq!(rec.outcome_variance, 0.5);
        assert_eq!(out.modes().len(), 1);
    }

    #[test]
    fn schur_complement_matches_hand_algebra() {
        for &(v, kappa) in &[(1.0, 1.0), (851.0, 1.0), (3.5, 0.4)] {
            let s = correlated(v, kappa);
            let (out, _) = s.condition_on_homodyne("b", 0.0, 0.0).unwrap();
            let expected = v / (1.0 + 2.0 * kappa * kappa * v);
            assert_abs_diff_eq!(out.cov()[(0, 0)], expected, epsilon = 1e-12 * v);
        }
    }

    #[test]
    fn conditional_covariance_is_outcome_independent() {
        let s = correlated(7.0, 0.8);
        let (a, _) = s.condition_on_homodyne("b", 0.0, -2.0).unwrap();
        let (b, _) = s.condition_on_homodyne("b", 0.0, 13.5).unwrap();
        assert_eq!(a.cov(), b.cov());
        assert!(a.mean() != b.mean());
    }

    #[test]
    fn degenerate_and_missing_modes_are_errors() {
        let s = GaussianState::vacuum(&[ModeLabel::mechanical("a")]);
        assert!(matches!(
            s.condition_on_homodyne("zz", 0.0, 0.0),
            Err(Error::UnknownMode(_))
        ));
        let cov = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.0, 0.0, 0.0, //
            0.0, 0.5, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1e6,
        ]);
        // Infinitely squeezed X on `b`; built unchecked, only the marginal matters here.
        let squeezed = GaussianState::from_parts_unchecked(
            alloc::vec![ModeLabel::mechanical("a"), ModeLabel::light("b")],
            DVector::zeros(4),
            cov,
        );
        assert!(matches!(
            squeezed.condition_on_homodyne("b", 0.0, 0.0),
            Err(Error::DegenerateMeasurement { .. })
        ));
    }

    #[test]
    fn sampling_is_reproducible_per_seed() {
        let s = GaussianState::make_state(&[
            ModeSpec::thermal(ModeLabel::mechanical("a"), 3.0),
            ModeSpec::vacuum(ModeLabel::light("b")),
        ])
        .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            s.condition_on_homodyne_sampled("a", 0.0, &mut rng).unwrap().1.outcome
        };
        assert_eq!(draw(7), draw(7));
        assert!(draw(7) != draw(8));
    }

    #[test]
    fn feedback_with_matched_gain_removes_correlated_spread() {
        // A = signal, B = p + κA; displacing A by -g·B with the conditional
        // gain gives the conditional variance on average.
        let (v, kappa) = (4.0, 1.3);
        let s = correlated(v, kappa);
        let g = kappa * v / (0.5 + kappa * kappa * v);
        let fb = s
            .measure_and_feed_back(
                "b",
                0.0,
                &[FeedbackTerm {
                    target: "a",
                    quadrature: Quadrature::X,
                    gain: -g,
                }],
            )
            .unwrap();
        let (cond, _) = s.condition_on_homodyne("b", 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(fb.cov()[(0, 0)], cond.cov()[(0, 0)], epsilon = 1e-12);
        assert!(fb.uncertainty_margin() > -1e-12);
    }
}
