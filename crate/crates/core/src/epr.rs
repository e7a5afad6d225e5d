//! EPR variance `Δ(X₁+X₂)² + Δ(P₁−P₂)²` and the entanglement verdict.

use alloc::vec::Vec;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::GaussianState;

/// Bound below which the EPR variance certifies entanglement.
pub const SEPARABLE_BOUND: f64 = 2.0;

/// Where an EPR number came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Predicted,
    IdealizedMap,
    Oracle,
    VerificationReadout,
}

/// Perturbative correction folded into a report after the fact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "added", rename_all = "snake_case")]
pub enum Correction {
    Mismatch(f64),
    Damping(f64),
    PhotonLoss(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprReport {
    pub delta_epr: f64,
    pub var_xsum: f64,
    pub var_pdiff: f64,
    pub entangled: bool,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrections: Vec<Correction>,
}

impl EprReport {
    pub fn from_quadratures(var_xsum: f64, var_pdiff: f64, provenance: Provenance) -> Self {
        let delta_epr = var_xsum + var_pdiff;
        Self {
            delta_epr,
            var_xsum,
            var_pdiff,
            entangled: delta_epr < SEPARABLE_BOUND,
            provenance,
            corrections: Vec::new(),
        }
    }
}

/// Weight vectors selecting `X₁ + X₂` and `P₁ − P₂`.
pub fn epr_weights(
    state: &GaussianState,
    first: &str,
    second: &str,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let i = state.index_of(first)?;
    let j = state.index_of(second)?;
    let mut xsum = DVector::zeros(state.dim());
    let mut pdiff = DVector::zeros(state.dim());
    xsum[2 * i] += 1.0;
    xsum[2 * j] += 1.0;
    pdiff[2 * i + 1] += 1.0;
    pdiff[2 * j + 1] -= 1.0;
    Ok((xsum, pdiff))
}

/// EPR variance of `(mech, atom)` read off the covariance matrix.
pub fn epr_variance(
    state: &GaussianState,
    mech: &str,
    atom: &str,
    provenance: Provenance,
) -> Result<EprReport> {
    let (xsum, pdiff) = epr_weights(state, mech, atom)?;
    Ok(EprReport::from_quadratures(
        state.variance_of(&xsum),
        state.variance_of(&pdiff),
        provenance,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{ModeLabel, ModeSpec};

    fn pair(n_mech: f64, n_atom: f64) -> GaussianState {
        GaussianState::make_state(&[
            ModeSpec::thermal(ModeLabel::mechanical("m"), n_mech),
            ModeSpec::thermal(ModeLabel::atomic("a"), n_atom),
        ])
        .unwrap()
    }

    #[test]
    fn two_vacua_sit_exactly_on_the_bound() {
        let r = epr_variance(&pair(0.0, 0.0), "m", "a", Provenance::Predicted).unwrap();
        assert_eq!(r.delta_epr, 2.0);
        assert!(!r.entangled);
    }

    #[test]
    fn thermal_mechanics_adds_its_variance() {
        let r = epr_variance(&pair(850.0, 0.0), "m", "a", Provenance::Predicted).unwrap();
        assert_eq!(r.delta_epr, 2.0 * 851.0);
        assert_eq!(r.var_xsum, 851.0);
    }

    #[test]
    fn independent_modes_add_linearly() {
        for &(a, b) in &[(0.0, 0.0), (3.0, 0.25), (12.5, 7.0)] {
            let r = epr_variance(&pair(a, b), "m", "a", Provenance::Predicted).unwrap();
            let expected = 2.0 * (a + 0.5) + 2.0 * (b + 0.5);
            assert!((r.delta_epr - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn absent_mode_is_an_error() {
        assert!(epr_variance(&pair(0.0, 0.0), "m", "x", Provenance::Predicted).is_err());
    }
}
