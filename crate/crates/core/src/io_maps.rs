//! Pulse-level input–output maps of the cascaded cavity → ensemble setup.
//!
//! Field quadratures entering [`cavity_io_map`] and [`cascade_io_map`] are
//! the slowly varying continuum amplitudes, so those maps are only used on
//! mean values. [`qnd_bigstep`] works on normalized temporal modes and is a
//! genuine symplectic map on the joint state.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, ModeKind, ModeLabel};
use crate::names::{ATOM, COS, MECH, SIN};
use crate::params::ProtocolParams;

/// Below this `Ωτ` the cos/sin components are not treated as independent.
pub const MIN_OMEGA_TAU: f64 = 50.0;

/// Affine map on a named list of quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub quadratures: Vec<&'static str>,
    pub s: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl LinearMap {
    pub fn apply_to_mean(&self, mean: &DVector<f64>) -> Result<DVector<f64>> {
        if mean.len() != self.s.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.s.ncols(),
                found: mean.len(),
            });
        }
        Ok(&self.s * mean)
    }

    pub fn compose(&self, inner: &LinearMap) -> LinearMap {
        LinearMap {
            quadratures: self.quadratures.clone(),
            s: &self.s * &inner.s,
            noise: &self.s * &inner.noise * self.s.transpose() + &self.noise,
        }
    }
}

/// Cavity reflection after adiabatic elimination, on `(x_in, p_in, X_m, P_m)`:
/// `x_out = −x_in`, `p_out = −p_in − g√(2/γ_c)·X_m`.
pub fn cavity_io_map(g: f64, gamma_c: f64) -> Result<LinearMap> {
    if !(gamma_c > 0.0 && gamma_c.is_finite()) {
        return Err(Error::OutOfRange {
            name: "gamma_c",
            value: gamma_c,
            reason: "cavity decay rate must be > 0",
        });
    }
    let c = g * libm::sqrt(2.0 / gamma_c);
    let mut s = DMatrix::identity(4, 4);
    s[(0, 0)] = -1.0;
    s[(1, 1)] = -1.0;
    s[(1, 2)] = -c;
    Ok(LinearMap {
        quadratures: vec!["x", "p", "X_m", "P_m"],
        s,
        noise: DMatrix::zeros(4, 4),
    })
}

/// The polarization/phase filter between cavity and ensemble:
/// `x'_in = −x_out`, `p'_in = −p_out`, followed by optional transmission loss.
pub fn carrier_filter_map(eta_light: f64) -> Result<LinearMap> {
    let eta = crate::error::check_range(
        "eta_light",
        eta_light,
        0.0,
        1.0,
        "transmission must lie in [0, 1]",
    )?;
    Ok(LinearMap {
        quadratures: vec!["x", "p"],
        s: DMatrix::identity(2, 2) * -libm::sqrt(eta),
        noise: DMatrix::identity(2, 2) * (0.5 * (1.0 - eta)),
    })
}

/// How [`cascade_io_map`] treats unequal mechanical and atomic strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchHandling {
    /// Refuse parameters whose matching error exceeds the declared tolerance.
    Strict,
    /// Keep the two couplings distinct.
    Physical,
}

/// Cavity, filter and ensemble in series, on `(x_in, p_in, X_m, P_m, X_a, P_a)`:
/// `x'_out = −x_in`, `p'_out = −p_in − g√(2/γ_c)·X_m − κ√(2/τ)·X_a`.
pub fn cascade_io_map(params: &ProtocolParams, handling: MismatchHandling) -> Result<LinearMap> {
    params.validate()?;
    if handling == MismatchHandling::Strict {
        params.require_matched()?;
    }
    let cavity = cavity_io_map(params.g, params.gamma_c)?;
    let mech = -cavity.s[(1, 2)];
    let atom = params.kappa * libm::sqrt(2.0 / params.tau);
    let mut s = DMatrix::identity(6, 6);
    s[(0, 0)] = -1.0;
    s[(1, 1)] = -1.0;
    s[(1, 2)] = -mech;
    s[(1, 4)] = -atom;
    Ok(LinearMap {
        quadratures: vec!["x", "p", "X_m", "P_m", "X_a", "P_a"],
        s,
        noise: DMatrix::zeros(6, 6),
    })
}

/// Which modes of a state play which part in a QND pulse.
///
/// `first` must rotate in the ordinary sense and `second` in the opposite
/// sense; `cos` and `sin` name the fresh temporal light modes.
#[derive(Debug, Clone, PartialEq)]
pub struct QndRoles<'a> {
    pub first: &'a str,
    pub second: &'a str,
    pub cos: ModeLabel,
    pub sin: ModeLabel,
}

impl Default for QndRoles<'static> {
    fn default() -> Self {
        Self {
            first: MECH,
            second: ATOM,
            cos: ModeLabel::light(COS),
            sin: ModeLabel::light(SIN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// `Ωτ` below [`MIN_OMEGA_TAU`]; only the oracle is reliable here.
    ShortPulse { omega_tau: f64 },
    /// `γ_m τ n̄_th` above the perturbative range of the damping correction.
    StrongDamping { gamma_m_tau_n_th: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseOutput {
    pub joint: GaussianState,
    pub params_used: ProtocolParams,
    pub warnings: Vec<Warning>,
}

/// Symplectic matrix of the ideal QND pulse on
/// `(X₁, P₁, X₂, P₂, x_c, p_c, x_s, p_s)`.
///
/// Readout: `p_c += κ(X₁+X₂)`, `p_s += κ(P₁−P₂)`. Back-action from the
/// common amplitude drive: `X₁ −= κx_s`, `X₂ += κx_s`, `P₁ += κx_c`,
/// `P₂ += κx_c`, which leaves both EPR combinations untouched.
pub fn qnd_symplectic(kappa: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(8, 8);
    s[(0, 6)] = -kappa;
    s[(1, 4)] = kappa;
    s[(2, 6)] = kappa;
    s[(3, 4)] = kappa;
    s[(5, 0)] = kappa;
    s[(5, 2)] = kappa;
    s[(7, 1)] = kappa;
    s[(7, 3)] = -kappa;
    s
}

/// Attach two vacuum temporal modes and apply the QND pulse of strength
/// `kappa` to the `first`/`second` pair of `input`. Other modes of `input`
/// are carried along untouched.
pub fn qnd_pulse(input: &GaussianState, kappa: f64, roles: &QndRoles<'_>) -> Result<GaussianState> {
    let first = input.mode(roles.first)?;
    let second = input.mode(roles.second)?;
    if first.rotation_sign() * second.rotation_sign() > 0.0 {
        return Err(Error::WrongRole(
            second.name.clone(),
            "the two systems of a QND pulse need opposite rotation sense",
        ));
    }
    let light = GaussianState::vacuum(&[roles.cos.clone(), roles.sin.clone()]);
    let joint = input.tensor(&light)?;
    let idx = [
        joint.index_of(roles.first)?,
        joint.index_of(roles.second)?,
        joint.index_of(&roles.cos.name)?,
        joint.index_of(&roles.sin.name)?,
    ];
    let local = qnd_symplectic(kappa);
    let dim = joint.dim();
    let mut s = DMatrix::identity(dim, dim);
    for (a, &ma) in idx.iter().enumerate() {
        for (b, &mb) in idx.iter().enumerate() {
            for qa in 0..2 {
                for qb in 0..2 {
                    s[(2 * ma + qa, 2 * mb + qb)] = local[(2 * a + qa, 2 * b + qb)];
                }
            }
        }
    }
    joint.apply_linear_map(&s, &DMatrix::zeros(dim, dim), &DVector::zeros(dim))
}

/// Ideal pulse-level QND map on a `{mech, atom}` state.
pub fn qnd_bigstep(input: &GaussianState, params: &ProtocolParams) -> Result<PulseOutput> {
    params.validate()?;
    params.require_matched()?;
    if input.mode_count() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: input.dim(),
        });
    }
    if input.mode(MECH)?.kind != ModeKind::Mechanical {
        return Err(Error::WrongRole(MECH.into(), "expected a mechanical mode"));
    }
    if !matches!(input.mode(ATOM)?.kind, ModeKind::Atomic { .. }) {
        return Err(Error::WrongRole(ATOM.into(), "expected an atomic mode"));
    }
    let mut warnings = Vec::new();
    if params.omega_tau() < MIN_OMEGA_TAU {
        log::warn!(
            "Omega*tau = {} is below {}; cos/sin modes are not independent",
            params.omega_tau(),
            MIN_OMEGA_TAU
        );
        warnings.push(Warning::ShortPulse {
            omega_tau: params.omega_tau(),
        });
    }
    let joint = qnd_pulse(input, params.effective_kappa(), &QndRoles::default())?;
    Ok(PulseOutput {
        joint,
        params_used: *params,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epr::epr_weights;
    use crate::gaussian::{symplectic_form, ModeSpec};
    use approx::assert_abs_diff_eq;

    fn system(n_i: f64) -> GaussianState {
        GaussianState::make_state(&[
            ModeSpec::thermal(ModeLabel::mechanical(MECH), n_i),
            ModeSpec::vacuum(ModeLabel::atomic(ATOM)),
        ])
        .unwrap()
    }

    #[test]
    fn cavity_map_examples() {
        let m = cavity_io_map(0.0, 1e9).unwrap();
        let out = m.apply_to_mean(&DVector::from_vec(vec![0.3, -0.7, 5.0, 1.0])).unwrap();
        assert_eq!((out[0], out[1]), (-0.3, 0.7));

        // g√(2/γ_c) = 1
        let m = cavity_io_map(1.0, 2.0).unwrap();
        let out = m.apply_to_mean(&DVector::from_vec(vec![0.0, 0.4, 2.0, 0.0])).unwrap();
        assert_abs_diff_eq!(out[1], -0.4 - 2.0, epsilon = 1e-15);

        let twice = m.compose(&m);
        let x = twice.apply_to_mean(&DVector::from_vec(vec![0.9, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(x[0], 0.9);

        assert!(cavity_io_map(1.0, 0.0).is_err());
    }

    #[test]
    fn cascade_map_examples() {
        let p = ProtocolParams::matched(0.0, 0.0);
        let m = cascade_io_map(&p, MismatchHandling::Strict).unwrap();
        let out = m
            .apply_to_mean(&DVector::from_vec(vec![0.2, 0.3, 1.0, 1.0, 1.0, 1.0]))
            .unwrap();
        assert_eq!((out[0], out[1]), (-0.2, -0.3));

        let mut p = ProtocolParams::matched(1.0, 0.0);
        p.tau = 2.0;
        p.g = libm::sqrt(p.gamma_c / p.tau);
        let m = cascade_io_map(&p, MismatchHandling::Strict).unwrap();
        let cancel = m
            .apply_to_mean(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(cancel[1], 0.0, epsilon = 1e-12);
        let add = m
            .apply_to_mean(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(add[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn cascade_map_refuses_undeclared_mismatch() {
        let mut p = ProtocolParams::matched(1.0, 0.0).with_mismatch(0.05);
        p.eps_mismatch = 0.01;
        assert!(matches!(
            cascade_io_map(&p, MismatchHandling::Strict),
            Err(Error::MatchingViolated { .. })
        ));
        let m = cascade_io_map(&p, MismatchHandling::Physical).unwrap();
        assert!((m.s[(1, 2)] - m.s[(1, 4)]).abs() > 0.0);
    }

    #[test]
    fn carrier_filter_is_relabeling_plus_loss() {
        let f = carrier_filter_map(1.0).unwrap();
        assert_eq!(f.s, -DMatrix::identity(2, 2));
        assert_eq!(f.noise, DMatrix::zeros(2, 2));
        let lossy = carrier_filter_map(0.8).unwrap();
        assert_abs_diff_eq!(lossy.noise[(0, 0)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn qnd_symplectic_preserves_the_form() {
        for &k in &[0.0, 0.3, 1.0, 4.0] {
            let s = qnd_symplectic(k);
            let omega = symplectic_form(4);
            let diff = &s * &omega * s.transpose() - &omega;
            assert!(diff.amax() < 1e-12);
        }
    }

    #[test]
    fn zero_kappa_attaches_vacuum_only() {
        let input = system(12.0);
        let out = qnd_bigstep(&input, &ProtocolParams::matched(0.0, 12.0)).unwrap();
        assert_eq!(out.joint.mode_count(), 4);
        let sys = out.joint.partial_trace(&[MECH, ATOM]).unwrap();
        assert_eq!(sys.cov(), input.cov());
        let light = out.joint.partial_trace(&[COS, SIN]).unwrap();
        assert_eq!(light.cov(), &(DMatrix::identity(4, 4) * 0.5));
    }

    #[test]
    fn readout_and_conservation() {
        let input = system(0.0);
        let out = qnd_bigstep(&input, &ProtocolParams::matched(1.0, 0.0)).unwrap();
        let pc = out.joint.quadrature(COS, 1).unwrap();
        assert_abs_diff_eq!(out.joint.variance_of(&pc), 1.5, epsilon = 1e-12);

        let (xs_in, pd_in) = epr_weights(&input, MECH, ATOM).unwrap();
        let (xs, pd) = epr_weights(&out.joint, MECH, ATOM).unwrap();
        assert_abs_diff_eq!(input.variance_of(&xs_in), out.joint.variance_of(&xs), epsilon = 1e-12);
        assert_abs_diff_eq!(input.variance_of(&pd_in), out.joint.variance_of(&pd), epsilon = 1e-12);

        // Back-action lands on the non-EPR combinations: +2κ² each.
        let mut xdiff = DVector::zeros(8);
        xdiff[0] = 1.0;
        xdiff[2] = -1.0;
        assert_abs_diff_eq!(out.joint.variance_of(&xdiff), 1.0 + 2.0, epsilon = 1e-12);

        // Conjugate light quadratures stay vacuum.
        let xc = out.joint.quadrature(COS, 0).unwrap();
        assert_abs_diff_eq!(out.joint.variance_of(&xc), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn short_pulse_warns() {
        let p = ProtocolParams::matched(1.0, 0.0).with_omega_tau(20.0);
        let out = qnd_bigstep(&system(0.0), &p).unwrap();
        assert!(matches!(out.warnings[..], [Warning::ShortPulse { .. }]));
    }

    #[test]
    fn pulse_requires_opposite_rotation_sense() {
        let same = GaussianState::vacuum(&[
            ModeLabel::mechanical(MECH),
            ModeLabel::atomic_positive(ATOM),
        ]);
        assert!(matches!(
            qnd_pulse(&same, 1.0, &QndRoles::default()),
            Err(Error::WrongRole(..))
        ));
        let missing = GaussianState::vacuum(&[ModeLabel::mechanical(MECH)]);
        assert!(qnd_bigstep(&missing, &ProtocolParams::matched(1.0, 0.0)).is_err());
    }
}
