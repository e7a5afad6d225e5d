//! Leading-order corrections for coupling mismatch, mechanical damping and
//! optical loss, applied to an already computed EPR variance.

use serde::{Deserialize, Serialize};

use crate::epr::{Correction, EprReport, SEPARABLE_BOUND};
use crate::error::{check_nonneg, check_range, Result};

/// Above this `γ_m τ n̄_th` the damping term is no longer a small correction.
pub const DAMPING_WARN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossBudget {
    pub eps_mismatch: f64,
    /// Combined propagation, detection and spontaneous-emission loss.
    pub photon_loss: f64,
    pub gamma_m_tau: f64,
    pub n_th: f64,
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("eps_mismatch", self.eps_mismatch)?;
        check_range("photon_loss", self.photon_loss, 0.0, 1.0, "loss must lie in [0, 1]")?;
        check_nonneg("gamma_m_tau", self.gamma_m_tau)?;
        check_nonneg("n_th", self.n_th)?;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.eps_mismatch == 0.0 && self.photon_loss == 0.0 && self.gamma_m_tau == 0.0
    }
}

/// Added EPR variance `(εκ(n̄_i + 2))²` from unequal coupling strengths.
pub fn mismatch_penalty(eps: f64, kappa: f64, n_i: f64) -> f64 {
    let a = eps * kappa * (n_i + 2.0);
    a * a
}

/// Added variance per EPR quadrature, `γ_m τ (n̄_th + 1)`.
pub fn damping_penalty(gamma_m_tau: f64, n_th: f64) -> f64 {
    if gamma_m_tau * n_th > DAMPING_WARN_THRESHOLD {
        log::warn!(
            "gamma_m*tau*n_th = {} exceeds {}; the damping correction is only leading order",
            gamma_m_tau * n_th,
            DAMPING_WARN_THRESHOLD
        );
    }
    gamma_m_tau * (n_th + 1.0)
}

/// `Δ → (1−ε)Δ + 2ε`. Leaves the separable bound fixed.
pub fn photon_loss_map(delta_epr: f64, eps_opt: f64) -> f64 {
    (1.0 - eps_opt) * delta_epr + SEPARABLE_BOUND * eps_opt
}

/// Fold all three corrections into `report`. Mismatch and damping act on the
/// systems, loss acts on top of them.
pub fn apply_budget(report: &EprReport, budget: &LossBudget, kappa: f64, n_i: f64) -> Result<EprReport> {
    budget.validate()?;
    let mut out = report.clone();
    if budget.is_empty() {
        return Ok(out);
    }
    let mismatch = mismatch_penalty(budget.eps_mismatch, kappa, n_i);
    let damping = damping_penalty(budget.gamma_m_tau, budget.n_th);
    let eps = budget.photon_loss;
    let quad = |v: f64| (1.0 - eps) * (v + 0.5 * mismatch + damping) + eps;
    let var_xsum = quad(report.var_xsum);
    let var_pdiff = quad(report.var_pdiff);
    out.var_xsum = var_xsum;
    out.var_pdiff = var_pdiff;
    out.delta_epr = var_xsum + var_pdiff;
    out.entangled = out.delta_epr < SEPARABLE_BOUND;
    if mismatch > 0.0 {
        out.corrections.push(Correction::Mismatch(mismatch));
    }
    if damping > 0.0 {
        out.corrections.push(Correction::Damping(2.0 * damping));
    }
    if eps > 0.0 {
        let before = report.delta_epr + mismatch + 2.0 * damping;
        out.corrections.push(Correction::PhotonLoss(out.delta_epr - before));
    }
    Ok(out)
}
