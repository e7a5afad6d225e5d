//! Continuous-time moment propagation of the cascaded model.
//!
//! The state vector is `(X_m, P_m, X_a, P_a, Y_xc, Y_pc, Y_xs, Y_ps)`, i.e.
//! the mechanical mode, the atomic mode and two light accumulators laid out
//! as the `cos` and `sin` temporal modes. Dynamics in the lab frame:
//!
//! ```text
//! Ẋ_m =  ω_m P_m − γ_m/2·X_m            Ṗ_m = −ω_m X_m − γ_m/2·P_m + c_m x_in (+ thermal)
//! Ẋ_a = −Ω P_a                          Ṗ_a =  Ω X_a + c_a x_in
//! Ẏ_xc = u_c(t) x_in                    Ẏ_pc = u_c(t) (p_in + c_m X_m + c_a X_a)
//! Ẏ_xs = u_s(t) x_in                    Ẏ_ps = u_s(t) (p_in + c_m X_m + c_a X_a)
//! ```
//!
//! with `c_m = g√(2/γ_c)`, `c_a = κ√(2/τ)` and white drives of intensity
//! 1/2. `u_c`, `u_s` are the cos/sin mode functions orthonormalized on
//! `[0, τ]`. The symmetrized covariance obeys `Σ̇ = AΣ + ΣAᵀ + D`, which is
//! integrated with fixed-step RK4.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::epr::{epr_variance, EprReport, Provenance};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, ModeKind, ModeLabel, ModeSpec};
use crate::names::{ATOM, COS, MECH, SIN};
use crate::params::ProtocolParams;

type M8 = SMatrix<f64, 8, 8>;
type V8 = SVector<f64, 8>;

/// Minimum RK4 steps per Larmor period.
pub const MIN_STEPS_PER_PERIOD: usize = 200;
/// Floor on the total step count, for slow or vanishing rotation.
pub const MIN_TOTAL_STEPS: usize = 400;
/// Relative change allowed when the step is halved.
pub const INTEGRATION_TOL: f64 = 1e-6;
/// Uncertainty-test allowance for integrated states.
pub const ORACLE_UNCERTAINTY_TOL: f64 = 1e-6;

const X_M: usize = 0;
const P_M: usize = 1;
const X_A: usize = 2;
const P_A: usize = 3;
const Y_XC: usize = 4;
const Y_PC: usize = 5;
const Y_XS: usize = 6;
const Y_PS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    /// Thermal damping of the mechanics at rate `γ_m` into a bath `n̄_th`.
    pub damping: bool,
    /// Use the distinct mechanical and atomic strengths from the parameters.
    /// When off, both segments use the mean strength and the parameters must
    /// satisfy the matching condition.
    pub mismatch: bool,
    pub steps_per_period: usize,
    /// Rerun with half the step and fail if the result moves by more than
    /// [`INTEGRATION_TOL`].
    pub check_convergence: bool,
    /// Keep every n-th step in the trajectory (0 keeps none).
    pub record_every: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            damping: false,
            mismatch: false,
            steps_per_period: MIN_STEPS_PER_PERIOD,
            check_convergence: false,
            record_every: 0,
        }
    }
}

/// Orthonormal cos/sin mode functions on `[0, τ]`:
/// `u_c = a·√(2/τ)·cos Ωt`, `u_s = b·√(2/τ)·(sin Ωt − r·cos Ωt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ModeFunctions {
    omega: f64,
    root: f64,
    a: f64,
    b: f64,
    r: f64,
}

impl ModeFunctions {
    fn new(omega: f64, tau: f64) -> Result<Self> {
        let phase = omega * tau;
        if !(phase > 0.0) {
            return Err(Error::OutOfRange {
                name: "omega_tau",
                value: phase,
                reason: "the sin temporal mode needs a nonzero Larmor phase",
            });
        }
        let (s2, c2) = (libm::sin(2.0 * phase), libm::cos(2.0 * phase));
        let ncc = 1.0 + s2 / (2.0 * phase);
        let nss = 1.0 - s2 / (2.0 * phase);
        let ncs = (1.0 - c2) / (2.0 * phase);
        let r = ncs / ncc;
        let residual = nss - ncs * r;
        if residual < 1e-6 {
            return Err(Error::OutOfRange {
                name: "omega_tau",
                value: phase,
                reason: "cos and sin modes are nearly parallel",
            });
        }
        Ok(Self {
            omega,
            root: libm::sqrt(2.0 / tau),
            a: 1.0 / libm::sqrt(ncc),
            b: 1.0 / libm::sqrt(residual),
            r,
        })
    }

    fn at(&self, t: f64) -> (f64, f64) {
        let (s, c) = (libm::sin(self.omega * t), libm::cos(self.omega * t));
        (self.a * self.root * c, self.b * self.root * (s - self.r * c))
    }
}

/// Drift and diffusion of the linear stochastic system, plus the initial moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftNoiseModel {
    pub params: ProtocolParams,
    pub options: OracleOptions,
    /// Light coupling rate of the mechanics, `g√(2/γ_c)`.
    pub coupling_mech: f64,
    /// Light coupling rate of the atoms, `κ√(2/τ)`.
    pub coupling_atom: f64,
    /// Signed Larmor frequency of the atomic mode.
    pub atomic_rotation: f64,
    pub steps: usize,
    pub dt: f64,
    modes_fn: ModeFunctions,
    initial_mean: V8,
    initial_cov: M8,
}

/// Model with the standard initial condition: mechanics thermal at `n̄_i`,
/// atoms in their ground state.
pub fn build_model(params: &ProtocolParams, options: OracleOptions) -> Result<DriftNoiseModel> {
    params.validate()?;
    let initial = GaussianState::make_state(&[
        ModeSpec::thermal(ModeLabel::mechanical(MECH), params.n_i),
        ModeSpec::vacuum(ModeLabel::atomic(ATOM)),
    ])?;
    build_model_from_state(params, options, &initial)
}

/// Model starting from an arbitrary `{mech, atom}` state.
pub fn build_model_from_state(
    params: &ProtocolParams,
    options: OracleOptions,
    initial: &GaussianState,
) -> Result<DriftNoiseModel> {
    params.validate()?;
    if options.steps_per_period < MIN_STEPS_PER_PERIOD {
        return Err(Error::OutOfRange {
            name: "steps_per_period",
            value: options.steps_per_period as f64,
            reason: "at least 200 steps per Larmor period are required",
        });
    }
    let mech = initial.mode(MECH)?;
    let atom = initial.mode(ATOM)?;
    if mech.kind != ModeKind::Mechanical {
        return Err(Error::WrongRole(MECH.into(), "expected a mechanical mode"));
    }
    if !matches!(atom.kind, ModeKind::Atomic { .. }) {
        return Err(Error::WrongRole(ATOM.into(), "expected an atomic mode"));
    }
    let root = libm::sqrt(2.0 / params.tau);
    let (coupling_mech, coupling_atom) = if options.mismatch {
        (params.optical_kappa() * root, params.kappa * root)
    } else {
        params.require_matched()?;
        let k = params.effective_kappa() * root;
        (k, k)
    };
    let system = initial.partial_trace(&[MECH, ATOM])?;
    let mut initial_mean = V8::zeros();
    let mut initial_cov = M8::zeros();
    for i in 0..4 {
        initial_mean[i] = system.mean()[i];
        for j in 0..4 {
            initial_cov[(i, j)] = system.cov()[(i, j)];
        }
    }
    let fastest = params.omega.max(params.omega_m);
    let periods = fastest * params.tau / (2.0 * PI);
    let steps = (libm::ceil(periods * options.steps_per_period as f64) as usize).max(MIN_TOTAL_STEPS);
    Ok(DriftNoiseModel {
        params: *params,
        options,
        coupling_mech,
        coupling_atom,
        atomic_rotation: atom.rotation_sign() * params.omega,
        steps,
        dt: params.tau / steps as f64,
        modes_fn: ModeFunctions::new(params.omega, params.tau)?,
        initial_mean,
        initial_cov,
    })
}

impl DriftNoiseModel {
    fn damping_rate(&self) -> f64 {
        if self.options.damping {
            self.params.gamma_m
        } else {
            0.0
        }
    }

    /// Drift matrix `A(t)`.
    pub fn drift(&self, t: f64) -> SMatrix<f64, 8, 8> {
        let (uc, us) = self.modes_fn.at(t);
        let wm = self.params.omega_m;
        let wa = self.atomic_rotation;
        let half_gamma = 0.5 * self.damping_rate();
        let mut a = M8::zeros();
        a[(X_M, P_M)] = wm;
        a[(P_M, X_M)] = -wm;
        a[(X_M, X_M)] = -half_gamma;
        a[(P_M, P_M)] = -half_gamma;
        a[(X_A, P_A)] = wa;
        a[(P_A, X_A)] = -wa;
        a[(Y_PC, X_M)] = uc * self.coupling_mech;
        a[(Y_PC, X_A)] = uc * self.coupling_atom;
        a[(Y_PS, X_M)] = us * self.coupling_mech;
        a[(Y_PS, X_A)] = us * self.coupling_atom;
        a
    }

    /// Diffusion matrix `D(t)`.
    pub fn diffusion(&self, t: f64) -> SMatrix<f64, 8, 8> {
        let (uc, us) = self.modes_fn.at(t);
        let mut bx = V8::zeros();
        bx[P_M] = self.coupling_mech;
        bx[P_A] = self.coupling_atom;
        bx[Y_XC] = uc;
        bx[Y_XS] = us;
        let mut bp = V8::zeros();
        bp[Y_PC] = uc;
        bp[Y_PS] = us;
        let mut d = (bx * bx.transpose() + bp * bp.transpose()) * 0.5;
        let gamma = self.damping_rate();
        if gamma > 0.0 {
            // Thermal force with ⟨f²⟩ = n̄_th + 1 on each mechanical quadrature.
            let thermal = gamma * (self.params.n_th + 1.0);
            d[(X_M, X_M)] += thermal;
            d[(P_M, P_M)] += thermal;
        }
        d
    }

    /// Free rotation `(X, P)(t) = R(t)·(X, P)(0)` of the two systems, as a
    /// 4×4 block, used to move between lab and rotating frames.
    fn free_rotation(&self, t: f64) -> SMatrix<f64, 4, 4> {
        let rot = |w: f64| {
            let (s, c) = (libm::sin(w * t), libm::cos(w * t));
            Matrix2::new(c, s, -s, c)
        };
        let mut r = SMatrix::<f64, 4, 4>::zeros();
        r.fixed_view_mut::<2, 2>(0, 0).copy_from(&rot(self.params.omega_m));
        r.fixed_view_mut::<2, 2>(2, 2).copy_from(&rot(self.atomic_rotation));
        r
    }

    /// System covariance brought back to the rotating frame.
    fn rotating_frame_system(&self, t: f64, cov: &M8) -> SMatrix<f64, 4, 4> {
        let inv = self.free_rotation(t).transpose();
        let sys = cov.fixed_view::<4, 4>(0, 0);
        inv * sys * inv.transpose()
    }

    fn integrate(&self, steps: usize) -> Integration {
        let h = self.params.tau / steps as f64;
        let rhs = |t: f64, s: &M8| {
            let a = self.drift(t);
            let as_ = a * s;
            as_ + as_.transpose() + self.diffusion(t)
        };
        let epr = |t: f64, cov: &M8| {
            let r = self.rotating_frame_system(t, cov);
            let xsum = r[(0, 0)] + r[(2, 2)] + 2.0 * r[(0, 2)];
            let pdiff = r[(1, 1)] + r[(3, 3)] - 2.0 * r[(1, 3)];
            (xsum, pdiff)
        };
        let mut cov = self.initial_cov;
        let mut mean = self.initial_mean;
        let (x0, p0) = epr(0.0, &cov);
        let mut drift = 0.0_f64;
        let mut trajectory = Vec::new();
        let record = self.options.record_every;
        let sample = |t: f64, cov: &M8, traj: &mut Vec<TrajectorySample>| {
            let (xs, pd) = epr(t, cov);
            traj.push(TrajectorySample {
                t,
                var_xsum: xs,
                var_pdiff: pd,
                var_y_pc: cov[(Y_PC, Y_PC)],
                var_y_ps: cov[(Y_PS, Y_PS)],
            });
        };
        if record > 0 {
            sample(0.0, &cov, &mut trajectory);
        }
        for k in 0..steps {
            let t = k as f64 * h;
            let k1 = rhs(t, &cov);
            let k2 = rhs(t + 0.5 * h, &(cov + k1 * (0.5 * h)));
            let k3 = rhs(t + 0.5 * h, &(cov + k2 * (0.5 * h)));
            let k4 = rhs(t + h, &(cov + k3 * h));
            cov += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            cov = (cov + cov.transpose()) * 0.5;

            let m1 = self.drift(t) * mean;
            let m2 = self.drift(t + 0.5 * h) * (mean + m1 * (0.5 * h));
            let m3 = self.drift(t + 0.5 * h) * (mean + m2 * (0.5 * h));
            let m4 = self.drift(t + h) * (mean + m3 * h);
            mean += (m1 + (m2 + m3) * 2.0 + m4) * (h / 6.0);

            let t_next = (k + 1) as f64 * h;
            let (xs, pd) = epr(t_next, &cov);
            drift = drift
                .max(relative(xs, x0))
                .max(relative(pd, p0));
            if record > 0 && ((k + 1) % record == 0 || k + 1 == steps) {
                sample(t_next, &cov, &mut trajectory);
            }
        }
        Integration {
            mean,
            cov,
            conservation_drift: drift,
            trajectory,
        }
    }

    /// Final moments in the rotating frame of both oscillators, laid out as
    /// a `{mech, atom, cos, sin}` state.
    fn to_state(&self, run: &Integration) -> Result<GaussianState> {
        let inv = self.free_rotation(self.params.tau).transpose();
        let mut frame = M8::identity();
        frame.fixed_view_mut::<4, 4>(0, 0).copy_from(&inv);
        let mean = frame * run.mean;
        let cov = frame * run.cov * frame.transpose();
        let modes = vec![
            ModeLabel::mechanical(MECH),
            ModeLabel::atomic(ATOM),
            ModeLabel::light(COS),
            ModeLabel::light(SIN),
        ];
        GaussianState::with_tolerance(
            modes,
            DVector::from_iterator(8, mean.iter().copied()),
            DMatrix::from_iterator(8, 8, cov.iter().copied()),
            ORACLE_UNCERTAINTY_TOL,
        )
    }
}

fn relative(value: f64, reference: f64) -> f64 {
    if reference.abs() > 0.0 {
        ((value - reference) / reference).abs()
    } else {
        value.abs()
    }
}

struct Integration {
    mean: V8,
    cov: M8,
    conservation_drift: f64,
    trajectory: Vec<TrajectorySample>,
}

/// One row of the optional trajectory dump (rotating-frame EPR variances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub var_xsum: f64,
    pub var_pdiff: f64,
    pub var_y_pc: f64,
    pub var_y_ps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    /// Joint `{mech, atom, cos, sin}` state at `t = τ`, systems in the
    /// rotating frame, light modes holding the accumulated quadratures.
    pub state: GaussianState,
    /// Largest relative change of either rotating-frame EPR variance along
    /// the trajectory.
    pub conservation_drift: f64,
    /// Largest relative covariance change under step halving, when checked.
    pub richardson_change: Option<f64>,
    pub trajectory: Vec<TrajectorySample>,
    pub steps: usize,
}

/// Integrate the moments over `[0, τ]`.
pub fn propagate_moments(model: &DriftNoiseModel) -> Result<OracleRun> {
    let run = model.integrate(model.steps);
    let richardson_change = if model.options.check_convergence {
        let fine = model.integrate(2 * model.steps);
        let scale = fine.cov.amax().max(1.0);
        let change = (fine.cov - run.cov).amax() / scale;
        if !(change <= INTEGRATION_TOL) {
            return Err(Error::ConvergenceFailure {
                quantity: "covariance",
                change,
                tolerance: INTEGRATION_TOL,
            });
        }
        Some(change)
    } else {
        None
    };
    Ok(OracleRun {
        state: model.to_state(&run)?,
        conservation_drift: run.conservation_drift,
        richardson_change,
        trajectory: run.trajectory,
        steps: model.steps,
    })
}

/// Condition the propagated state on both `p` accumulators and report the
/// EPR variance of what remains.
pub fn oracle_epr_after_measurement(model: &DriftNoiseModel) -> Result<EprReport> {
    let run = propagate_moments(model)?;
    conditional_epr(&run.state)
}

/// Condition a propagated joint state on both `p` accumulators.
pub fn conditional_epr(joint: &GaussianState) -> Result<EprReport> {
    let half_pi = 0.5 * PI;
    let (after_cos, _) = joint.condition_on_homodyne(COS, half_pi, 0.0)?;
    let (system, _) = after_cos.condition_on_homodyne(SIN, half_pi, 0.0)?;
    epr_variance(&system, MECH, ATOM, Provenance::Oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::predict_epr_variance;
    use approx::assert_relative_eq;

    fn opts() -> OracleOptions {
        OracleOptions::default()
    }

    #[test]
    fn mode_functions_are_orthonormal() {
        for &phase in &[7.3, 200.0, 401.7] {
            let tau = 1.0;
            let f = ModeFunctions::new(phase, tau).unwrap();
            let n = 200_000;
            let h = tau / n as f64;
            let (mut cc, mut ss, mut cs) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let (c, s) = f.at((k as f64 + 0.5) * h);
                cc += c * c * h;
                ss += s * s * h;
                cs += c * s * h;
            }
            assert!((cc - 1.0).abs() < 1e-6, "{cc}");
            assert!((ss - 1.0).abs() < 1e-6, "{ss}");
            assert!(cs.abs() < 1e-6, "{cs}");
        }
        assert!(ModeFunctions::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_kappa_rotates_and_leaves_vacuum_accumulators() {
        let p = ProtocolParams::matched(0.0, 5.0);
        let model = build_model(&p, opts()).unwrap();
        let a = model.drift(0.3e-5);
        assert_eq!(a[(Y_PC, X_M)], 0.0);
        let run = propagate_moments(&model).unwrap();
        let light = run.state.partial_trace(&[COS, SIN]).unwrap();
        for i in 0..4 {
            assert_relative_eq!(light.cov()[(i, i)], 0.5, max_relative = 1e-9);
        }
        let sys = run.state.partial_trace(&[MECH]).unwrap();
        assert_relative_eq!(sys.cov()[(0, 0)], 5.5, max_relative = 1e-9);
        let r = conditional_epr(&run.state).unwrap();
        assert_relative_eq!(r.delta_epr, 2.0 * 6.0, max_relative = 1e-9);
        assert!(!r.entangled);
    }

    #[test]
    fn matched_drift_has_no_noise_on_the_epr_sum() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let model = build_model(&p, opts()).unwrap();
        let d = model.diffusion(1.234e-6);
        let mut w = V8::zeros();
        w[X_M] = 1.0;
        w[X_A] = 1.0;
        assert_eq!((w.transpose() * d * w)[(0, 0)], 0.0);
        let mut v = V8::zeros();
        v[P_M] = 1.0;
        v[P_A] = -1.0;
        assert_eq!((v.transpose() * d * v)[(0, 0)], 0.0);
    }

    #[test]
    fn damping_adds_thermal_diffusion() {
        let p = ProtocolParams::matched(0.0, 0.0).with_damping(1e-3, 830.0);
        let on = build_model(&p, OracleOptions { damping: true, ..opts() }).unwrap();
        let off = build_model(&p, opts()).unwrap();
        let extra = on.diffusion(0.0) - off.diffusion(0.0);
        let expected = p.gamma_m * 831.0;
        assert_relative_eq!(extra[(X_M, X_M)], expected, max_relative = 1e-12);
        assert_relative_eq!(extra[(P_M, P_M)], expected, max_relative = 1e-12);
        assert_eq!(on.drift(0.0)[(X_M, X_M)], -0.5 * p.gamma_m);
    }

    #[test]
    fn readout_variance_matches_pulse_statistics() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let run = propagate_moments(&build_model(&p, opts()).unwrap()).unwrap();
        let pc = run.state.quadrature(COS, 1).unwrap();
        assert_relative_eq!(run.state.variance_of(&pc), 1.5, max_relative = 0.02);
        assert!(run.conservation_drift < 1e-6);
    }

    #[test]
    fn converges_to_the_closed_form() {
        for &(kappa, n_i) in &[(1.0, 0.0), (1.0, 850.0)] {
            let p = ProtocolParams::matched(kappa, n_i);
            let r = oracle_epr_after_measurement(&build_model(&p, opts()).unwrap()).unwrap();
            assert_eq!(r.provenance, Provenance::Oracle);
            assert_relative_eq!(r.delta_epr, predict_epr_variance(kappa, n_i), max_relative = 0.02);
        }
    }

    #[test]
    fn coarse_steps_are_refused() {
        let p = ProtocolParams::matched(1.0, 0.0);
        let o = OracleOptions {
            steps_per_period: 50,
            ..opts()
        };
        assert!(build_model(&p, o).is_err());
    }

    #[test]
    fn trajectory_is_recorded_on_request() {
        let p = ProtocolParams::matched(1.0, 3.0);
        let o = OracleOptions {
            record_every: 1000,
            ..opts()
        };
        let run = propagate_moments(&build_model(&p, o).unwrap()).unwrap();
        assert!(run.trajectory.len() > 2);
        assert_eq!(run.trajectory[0].t, 0.0);
        assert_relative_eq!(run.trajectory.last().unwrap().t, p.tau, max_relative = 1e-12);
    }
}
