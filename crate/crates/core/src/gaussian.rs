//! Gaussian states over labeled bosonic modes.
//!
//! Quadratures are dimensionless with `[X, P] = i` and are laid out
//! interleaved per mode: `X₁, P₁, X₂, P₂, …`. The vacuum has variance
//! `1/2` in each quadrature, so two uncorrelated ground states have an
//! EPR variance of exactly 2.
//!
//! Every operation is a pure function returning a fresh state.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, Error, Result};

/// Absolute tolerance for symmetry and symplectic-form checks.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue of the uncertainty test matrix still accepted.
pub const UNCERTAINTY_TOL: f64 = 1e-9;
/// Marginal variances below this are refused by homodyne conditioning.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Physical system a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeKind {
    Mechanical,
    /// Collective spin of an atomic ensemble. `negative_mass` marks an
    /// ensemble pumped into the energetically higher Zeeman state, whose
    /// Larmor rotation runs backwards.
    Atomic { negative_mass: bool },
    LightTemporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLabel {
    #[serde(flatten)]
    pub kind: ModeKind,
    pub name: String,
}

impl ModeLabel {
    pub fn mechanical(name: &str) -> Self {
        Self {
            kind: ModeKind::Mechanical,
            name: name.to_string(),
        }
    }

    /// Atomic ensemble in the negative-mass configuration.
    pub fn atomic(name: &str) -> Self {
        Self {
            kind: ModeKind::Atomic {
                negative_mass: true,
            },
            name: name.to_string(),
        }
    }

    /// Atomic ensemble with ordinary (positive) Larmor sense.
    pub fn atomic_positive(name: &str) -> Self {
        Self {
            kind: ModeKind::Atomic {
                negative_mass: false,
            },
            name: name.to_string(),
        }
    }

    pub fn light(name: &str) -> Self {
        Self {
            kind: ModeKind::LightTemporal,
            name: name.to_string(),
        }
    }

    /// +1 for an ordinary oscillator, -1 for a negative-mass ensemble.
    pub fn rotation_sign(&self) -> f64 {
        match self.kind {
            ModeKind::Atomic {
                negative_mass: true,
            } => -1.0,
            _ => 1.0,
        }
    }
}

/// Initial-condition description of one mode for [`GaussianState::make_state`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub label: ModeLabel,
    pub occupation: f64,
    pub mean: (f64, f64),
}

impl ModeSpec {
    pub fn new(label: ModeLabel, occupation: f64, mean: (f64, f64)) -> Self {
        Self {
            label,
            occupation,
            mean,
        }
    }

    pub fn vacuum(label: ModeLabel) -> Self {
        Self::new(label, 0.0, (0.0, 0.0))
    }

    pub fn thermal(label: ModeLabel, occupation: f64) -> Self {
        Self::new(label, occupation, (0.0, 0.0))
    }
}

/// Mean vector and symmetrized covariance matrix over an ordered list of modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawState", try_from = "RawState")]
pub struct GaussianState {
    modes: Vec<ModeLabel>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Block-diagonal symplectic form `⊕ [[0, 1], [-1, 0]]` for `n` modes.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Smallest eigenvalue of the real representation of `cov + (i/2)·Ω`.
///
/// The Hermitian matrix `A + iB` is positive semidefinite iff the real
/// matrix `[[A, -B], [B, A]]` is, and the latter has the same spectrum
/// with every eigenvalue doubled in multiplicity.
pub fn uncertainty_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let dim = cov.nrows();
    if dim == 0 {
        return 0.0;
    }
    let half_omega = symplectic_form(dim / 2) * 0.5;
    let mut real = DMatrix::zeros(2 * dim, 2 * dim);
    real.view_mut((0, 0), (dim, dim)).copy_from(cov);
    real.view_mut((dim, dim), (dim, dim)).copy_from(cov);
    real.view_mut((0, dim), (dim, dim)).copy_from(&(-&half_omega));
    real.view_mut((dim, 0), (dim, dim)).copy_from(&half_omega);
    min_eigenvalue(real)
}

pub(crate) fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.min()
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl GaussianState {
    /// Validated constructor.
    pub fn new(modes: Vec<ModeLabel>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(modes, mean, cov, UNCERTAINTY_TOL)
    }

    /// Like [`GaussianState::new`] but with a caller-chosen floor for the
    /// uncertainty test. Used for numerically integrated states whose
    /// truncation error exceeds the default roundoff allowance.
    pub fn with_tolerance(
        modes: Vec<ModeLabel>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        uncertainty_tol: f64,
    ) -> Result<Self> {
        let dim = 2 * modes.len();
        check_unique(&modes)?;
        if mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: mean.len(),
            });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: cov.nrows().max(cov.ncols()),
            });
        }
        if !is_symmetric(&cov, SYMMETRY_TOL) {
            return Err(Error::NotSymmetric("cov"));
        }
        let cov = symmetrize(&cov);
        let min_eigenvalue = uncertainty_min_eigenvalue(&cov);
        if min_eigenvalue < -uncertainty_tol {
            return Err(Error::InvalidState { min_eigenvalue });
        }
        Ok(Self { modes, mean, cov })
    }

    /// Product of thermal, displaced modes: variance `n̄ + 1/2` per quadrature.
    pub fn make_state(specs: &[ModeSpec]) -> Result<Self> {
        let n = specs.len();
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for (k, spec) in specs.iter().enumerate() {
            if !(spec.occupation >= 0.0) || !spec.occupation.is_finite() {
                return Err(Error::NegativeOccupation {
                    name: spec.label.name.clone(),
                    value: spec.occupation,
                });
            }
            mean[2 * k] = spec.mean.0;
            mean[2 * k + 1] = spec.mean.1;
            cov[(2 * k, 2 * k)] = spec.occupation + 0.5;
            cov[(2 * k + 1, 2 * k + 1)] = spec.occupation + 0.5;
        }
        let modes: Vec<ModeLabel> = specs.iter().map(|s| s.label.clone()).collect();
        check_unique(&modes)?;
        Ok(Self { modes, mean, cov })
    }

    /// Product of vacua for the given labels.
    pub fn vacuum(labels: &[ModeLabel]) -> Self {
        let n = labels.len();
        Self {
            modes: labels.to_vec(),
            mean: DVector::zeros(2 * n),
            cov: DMatrix::identity(2 * n, 2 * n) * 0.5,
        }
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn mode(&self, name: &str) -> Result<&ModeLabel> {
        self.index_of(name).map(|k| &self.modes[k])
    }

    /// Position of a mode in the ordered mode list.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.modes.iter().any(|m| m.name == name)
    }

    /// `(⟨X⟩, ⟨P⟩)` of one mode.
    pub fn mode_mean(&self, name: &str) -> Result<(f64, f64)> {
        let k = self.index_of(name)?;
        Ok((self.mean[2 * k], self.mean[2 * k + 1]))
    }

    /// 2×2 covariance block of one mode.
    pub fn mode_cov(&self, name: &str) -> Result<DMatrix<f64>> {
        let k = self.index_of(name)?;
        Ok(self.cov.view((2 * k, 2 * k), (2, 2)).into_owned())
    }

    /// Variance of the linear combination `Σ wᵢ Rᵢ` of quadratures.
    pub fn variance_of(&self, weights: &DVector<f64>) -> f64 {
        (weights.transpose() * &self.cov * weights)[(0, 0)]
    }

    /// Covariance of two linear combinations of quadratures.
    pub fn covariance_of(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.transpose() * &self.cov * b)[(0, 0)]
    }

    /// Smallest eigenvalue of the uncertainty test matrix; `>= 0` for a
    /// physical state up to roundoff.
    pub fn uncertainty_margin(&self) -> f64 {
        uncertainty_min_eigenvalue(&self.cov)
    }

    /// General Gaussian channel: `mean → S·mean + d`, `cov → S·cov·Sᵀ + noise`.
    pub fn apply_linear_map(
        &self,
        s: &DMatrix<f64>,
        noise: &DMatrix<f64>,
        d: &DVector<f64>,
    ) -> Result<Self> {
        let dim = self.dim();
        for (rows, cols) in [s.shape(), noise.shape()] {
            if rows != dim || cols != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: rows.max(cols),
                });
            }
        }
        if d.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: d.len(),
            });
        }
        if !is_symmetric(noise, SYMMETRY_TOL) {
            return Err(Error::NotSymmetric("noise"));
        }
        let noise_min = min_eigenvalue(symmetrize(noise));
        if noise_min < -UNCERTAINTY_TOL {
            return Err(Error::NoiseNotPsd {
                min_eigenvalue: noise_min,
            });
        }
        let mean = s * &self.mean + d;
        let cov = symmetrize(&(s * &self.cov * s.transpose() + noise));
        let min_eigenvalue = uncertainty_min_eigenvalue(&cov);
        if min_eigenvalue < -UNCERTAINTY_TOL {
            return Err(Error::InvalidChannel { min_eigenvalue });
        }
        Ok(Self {
            modes: self.modes.clone(),
            mean,
            cov,
        })
    }

    /// Phase-space displacement of one mode; covariance untouched.
    pub fn displace(&self, name: &str, dx: f64, dp: f64) -> Result<Self> {
        let k = self.index_of(name)?;
        let mut out = self.clone();
        out.mean[2 * k] += dx;
        out.mean[2 * k + 1] += dp;
        Ok(out)
    }

    /// Marginal over `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::OutOfRange {
                name: "modes_to_keep",
                value: 0.0,
                reason: "at least one mode must be kept",
            });
        }
        let idx = keep
            .iter()
            .map(|name| self.index_of(name))
            .collect::<Result<Vec<_>>>()?;
        let modes: Vec<ModeLabel> = idx.iter().map(|&k| self.modes[k].clone()).collect();
        check_unique(&modes)?;
        let quads: Vec<usize> = idx.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        Ok(Self {
            modes,
            mean: self.mean.select_rows(quads.iter()),
            cov: self.cov.select_rows(quads.iter()).select_columns(quads.iter()),
        })
    }

    /// All modes except `drop`, original order preserved.
    pub fn without(&self, drop: &[&str]) -> Result<Self> {
        for name in drop {
            self.index_of(name)?;
        }
        let keep: Vec<&str> = self
            .modes
            .iter()
            .map(|m| m.name.as_str())
            .filter(|n| !drop.contains(n))
            .collect();
        self.partial_trace(&keep)
    }

    /// Beam-splitter admixture of a thermal mode with occupation `noise_occupation`.
    pub fn loss_channel(&self, name: &str, transmission: f64, noise_occupation: f64) -> Result<Self> {
        let eta = check_range(
            "transmission",
            transmission,
            0.0,
            1.0,
            "transmission must lie in [0, 1]",
        )?;
        let nbar = check_nonneg("noise_occupation", noise_occupation)?;
        let k = self.index_of(name)?;
        let dim = self.dim();
        let mut s = DMatrix::identity(dim, dim);
        let mut noise = DMatrix::zeros(dim, dim);
        let root = libm::sqrt(eta);
        for q in [2 * k, 2 * k + 1] {
            s[(q, q)] = root;
            noise[(q, q)] = (1.0 - eta) * (nbar + 0.5);
        }
        self.apply_linear_map(&s, &noise, &DVector::zeros(dim))
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &GaussianState) -> Result<Self> {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        check_unique(&modes)?;
        let (a, b) = (self.dim(), other.dim());
        let mut mean = DVector::zeros(a + b);
        mean.rows_mut(0, a).copy_from(&self.mean);
        mean.rows_mut(a, b).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(a + b, a + b);
        cov.view_mut((0, 0), (a, a)).copy_from(&self.cov);
        cov.view_mut((a, a), (b, b)).copy_from(&other.cov);
        Ok(Self { modes, mean, cov })
    }

    /// Unit weight vector selecting quadrature `offset` (0 = X, 1 = P) of a mode.
    pub fn quadrature(&self, name: &str, offset: usize) -> Result<DVector<f64>> {
        let k = self.index_of(name)?;
        let mut w = DVector::zeros(self.dim());
        w[2 * k + offset.min(1)] = 1.0;
        Ok(w)
    }

    pub(crate) fn from_parts_unchecked(
        modes: Vec<ModeLabel>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Self {
        Self {
            modes,
            mean,
            cov: symmetrize(&cov),
        }
    }
}

fn check_unique(modes: &[ModeLabel]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].iter().any(|o| o.name == m.name) {
            return Err(Error::DuplicateMode(m.name.clone()));
        }
    }
    Ok(())
}

/// Wire form: plain vectors, full double precision.
#[derive(Serialize, Deserialize)]
struct RawState {
    modes: Vec<ModeLabel>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<GaussianState> for RawState {
    fn from(s: GaussianState) -> Self {
        let cov = s
            .cov
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self {
            modes: s.modes,
            mean: s.mean.iter().copied().collect(),
            cov,
        }
    }
}

impl TryFrom<RawState> for GaussianState {
    type Error = Error;

    fn try_from(raw: RawState) -> Result<Self> {
        let dim = raw.mean.len();
        if raw.cov.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: raw.cov.len(),
            });
        }
        if let Some(row) = raw.cov.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| raw.cov[i][j]);
        GaussianState::new(raw.modes, DVector::from_vec(raw.mean), cov)
    }
}
