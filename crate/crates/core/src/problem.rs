//! Evolution problems of the form `i psi_t = A psi + eps_eff g(psi)`.
//!
//! Each model is described by three diagonal pieces of data:
//!
//! * the stiff eigenvalues `lambda_k` of `A` (they set the period),
//! * a slow linear symbol `mu_k` that belongs to the `eps_eff` block (zero
//!   for the one-dimensional models),
//! * a pointwise coupling `alpha(x_j)` multiplying the cubic term.
//!
//! so that `g(w) = mu * w + P[alpha |w|^2 w]` where `P` is the projection
//! back onto the basis. The right-hand sides are stored without the
//! `eps_eff` factor.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{BasisKey, SpectralBasis};

/// Complex coefficient vector on a spectral basis.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    basis: BasisKey,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateVector")
            .field("basis", &self.basis)
            .field("len", &self.coeffs.len())
            .finish()
    }
}

impl StateVector {
    /// Checked constructor: length must match the basis and every entry
    /// must be finite.
    pub fn new(basis: BasisKey, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::SizeMismatch { expected: basis.len(), found: coeffs.len() });
        }
        if !coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite("state construction"));
        }
        Ok(Self { basis, coeffs })
    }

    pub(crate) fn from_raw(basis: BasisKey, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.len());
        Self { basis, coeffs }
    }

    pub fn zeros(basis: BasisKey) -> Self {
        Self { basis, coeffs: vec![Complex64::default(); basis.len()] }
    }

    /// Single basis function at storage slot `slot`.
    pub fn unit(basis: BasisKey, slot: usize) -> Self {
        let mut v = Self::zeros(basis);
        v.coeffs[slot] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn basis(&self) -> BasisKey {
        self.basis
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Plain Euclidean norm of the coefficient array.
    pub fn euclid_norm(&self) -> f64 {
        self.coeffs.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: Complex64, x: &StateVector) {
        debug_assert_eq!(self.basis, x.basis);
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: Complex64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    /// Euclidean norm of `self - other`.
    pub fn euclid_distance(&self, other: &StateVector) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn ensure_on(&self, basis: BasisKey) -> Result<()> {
        if self.basis != basis {
            return Err(Error::BasisMismatch {
                expected: basis.to_string(),
                found: self.basis.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// `i psi_t = -psi_xx + 2 eps cos(2x) |psi|^2 psi` on the 2*pi torus.
    #[serde(rename = "torus_nls_1d")]
    TorusNls1d,
    /// `i psi_t = (-1/2 d_xx + (x^2 - 1)/2) psi + eps |psi|^2 psi` on the line.
    #[serde(rename = "gross_pitaevskii_1d")]
    GrossPitaevskii1d,
    /// `i psi_t = -psi_yy + eps^2 (-psi_xx + |psi|^2 psi)` on the 2D torus.
    #[serde(rename = "aniso_torus_2d")]
    AnisoTorus2d,
    /// `i psi_t = (-1/2 d_yy + y^2/2) psi + eps^2 (-1/2 d_xx + x^2/2 + beta |psi|^2) psi`.
    #[serde(rename = "aniso_gp_2d")]
    AnisoGp2d,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::TorusNls1d,
        Model::GrossPitaevskii1d,
        Model::AnisoTorus2d,
        Model::AnisoGp2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::TorusNls1d => "torus_nls_1d",
            Model::GrossPitaevskii1d => "gross_pitaevskii_1d",
            Model::AnisoTorus2d => "aniso_torus_2d",
            Model::AnisoGp2d => "aniso_gp_2d",
        }
    }

    /// Two-dimensional models average in `eps^2`.
    pub fn effective_epsilon(self, eps: f64) -> f64 {
        match self {
            Model::TorusNls1d | Model::GrossPitaevskii1d => eps,
            Model::AnisoTorus2d | Model::AnisoGp2d => eps * eps,
        }
    }

    pub fn default_t0(self) -> f64 {
        match self {
            Model::TorusNls1d => PI / 4.0,
            _ => 2.0 * PI,
        }
    }

    /// Desk-scale discretization defaults.
    pub fn desk_params(self, eps: f64) -> ModelParams {
        match self {
            Model::TorusNls1d => ModelParams::new(eps, 64, 1),
            Model::GrossPitaevskii1d => ModelParams::new(eps, 41, 1),
            Model::AnisoTorus2d => ModelParams::new(eps, 32, 32),
            Model::AnisoGp2d => ModelParams { beta: 5.0, ..ModelParams::new(eps, 32, 32) },
        }
    }

    /// Discretizations used for the published runs.
    pub fn paper_params(self, eps: f64) -> ModelParams {
        match self {
            Model::TorusNls1d => ModelParams::new(eps, 256, 1),
            Model::GrossPitaevskii1d => ModelParams::new(eps, 80, 1),
            Model::AnisoTorus2d => ModelParams::new(eps, 128, 128),
            Model::AnisoGp2d => ModelParams { beta: 5.0, ..ModelParams::new(eps, 81, 81) },
        }
    }

    pub fn build(self, params: &ModelParams) -> Result<ProblemSpec> {
        ProblemSpec::build(self, params)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical parameter and discretization of a model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Physical small parameter (not squared for the 2D models).
    pub epsilon: f64,
    /// Fourier points or Hermite modes along `x`.
    pub nx: usize,
    /// Same along `y`; ignored in 1D.
    pub ny: usize,
    /// Hermite quadrature nodes for the 1D Hermite model; `None` means
    /// `nx` nodes.
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Interaction strength of the 2D Gross-Pitaevskii model.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Horizon numerator `T0`; the final time is `T0 / eps_eff`.
    #[serde(default)]
    pub t0: Option<f64>,
}

fn default_beta() -> f64 {
    5.0
}

impl ModelParams {
    pub fn new(epsilon: f64, nx: usize, ny: usize) -> Self {
        Self { epsilon, nx, ny, nodes: None, beta: default_beta(), t0: None }
    }
}

/// One concrete model instance. Immutable and cheap to share behind an
/// `Arc`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    model: Model,
    basis: Arc<SpectralBasis>,
    eigenvalues: Vec<f64>,
    slow_linear: Vec<f64>,
    coupling: Vec<f64>,
    epsilon: f64,
    epsilon_eff: f64,
    beta: Option<f64>,
    period: f64,
    t0: f64,
}

impl ProblemSpec {
    fn build(model: Model, p: &ModelParams) -> Result<Self> {
        if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {}", p.epsilon)));
        }
        let basis = match model {
            Model::TorusNls1d => SpectralBasis::fourier_1d(p.nx)?,
            Model::GrossPitaevskii1d => SpectralBasis::hermite_1d(p.nx, p.nodes.unwrap_or(p.nx))?,
            Model::AnisoTorus2d => SpectralBasis::fourier_2d(p.nx, p.ny)?,
            Model::AnisoGp2d => SpectralBasis::hermite_2d(p.nx, p.ny)?,
        };
        let labels = basis.mode_labels();
        let points = basis.grid_points();
        let (eigenvalues, slow_linear, coupling): (Vec<f64>, Vec<f64>, Vec<f64>) = match model {
            Model::TorusNls1d => (
                labels.iter().map(|&(k, _)| (k * k) as f64).collect(),
                vec![0.0; labels.len()],
                points.iter().map(|&(x, _)| 2.0 * (2.0 * x).cos()).collect(),
            ),
            Model::GrossPitaevskii1d => (
                labels.iter().map(|&(k, _)| k as f64).collect(),
                vec![0.0; labels.len()],
                vec![1.0; points.len()],
            ),
            Model::AnisoTorus2d => (
                labels.iter().map(|&(_, ky)| (ky * ky) as f64).collect(),
                labels.iter().map(|&(kx, _)| (kx * kx) as f64).collect(),
                vec![1.0; points.len()],
            ),
            Model::AnisoGp2d => (
                labels.iter().map(|&(_, ky)| ky as f64 + 0.5).collect(),
                labels.iter().map(|&(kx, _)| kx as f64 + 0.5).collect(),
                vec![p.beta; points.len()],
            ),
        };
        let spec = Self {
            model,
            basis: Arc::new(basis),
            eigenvalues,
            slow_linear,
            coupling,
            epsilon: p.epsilon,
            epsilon_eff: model.effective_epsilon(p.epsilon),
            beta: (model == Model::AnisoGp2d).then_some(p.beta),
            period: 2.0 * PI,
            t0: p.t0.unwrap_or_else(|| model.default_t0()),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the structural invariants: positive period and parameter,
    /// and a stiff spectrum whose phases close up over one period (exactly
    /// for integer spectra, up to the sign `-1` for half-integer ones).
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::config("period must be positive"));
        }
        if !(self.epsilon_eff >= 0.0 && self.epsilon_eff.is_finite()) {
            return Err(Error::config("effective epsilon must be non-negative"));
        }
        if self.t0 <= 0.0 {
            return Err(Error::config("T0 must be positive"));
        }
        for &l in &self.eigenvalues {
            let twice = 2.0 * l * self.period / (2.0 * PI);
            if (twice - twice.round()).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "eigenvalue {l} is not periodic with period {}",
                    self.period
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> Arc<SpectralBasis> {
        Arc::clone(&self.basis)
    }

    pub fn basis_key(&self) -> BasisKey {
        self.basis.key()
    }

    /// Stiff eigenvalues `lambda_k`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Linear symbol inside the `eps_eff` block (zero in 1D).
    pub fn slow_linear(&self) -> &[f64] {
        &self.slow_linear
    }

    /// Pointwise coupling of the cubic term on the grid.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn epsilon_eff(&self) -> f64 {
        self.epsilon_eff
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Final time `T0 / eps_eff`.
    pub fn horizon(&self) -> f64 {
        self.t0 / self.epsilon_eff
    }

    /// Full linear symbol of the autonomous equation,
    /// `lambda_k + eps_eff mu_k`.
    pub fn full_linear_symbol(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.slow_linear)
            .map(|(l, m)| l + self.epsilon_eff * m)
            .collect()
    }

    /// Same model with a different effective parameter. Zero is allowed
    /// here so that the unperturbed dynamics can be probed.
    pub fn with_epsilon_eff(&self, epsilon_eff: f64) -> Result<Self> {
        let mut out = self.clone();
        out.epsilon_eff = epsilon_eff;
        out.epsilon = match self.model {
            Model::TorusNls1d | Model::GrossPitaevskii1d => epsilon_eff,
            _ => epsilon_eff.sqrt(),
        };
        out.validate()?;
        Ok(out)
    }

    /// Same model with the pointwise coupling multiplied by `factor`
    /// (`0.0` switches the cubic term off).
    pub fn with_coupling_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coupling.iter_mut().for_each(|a| *a *= factor);
        out.beta = out.beta.map(|b| b * factor);
        out
    }

    pub fn with_t0(&self, t0: f64) -> Result<Self> {
        let mut out = self.clone();
        out.t0 = t0;
        out.validate()?;
        Ok(out)
    }

    /// The model's initial datum.
    pub fn initial_state(&self) -> StateVector {
        let key = self.basis_key();
        let mut v = StateVector::zeros(key);
        let b = &self.basis;
        let one = Complex64::new(1.0, 0.0);
        let mut set = |kx: i64, ky: i64, c: Complex64| {
            let s = b.slot(kx, ky).expect("initial datum fits every supported basis");
            v.coeffs[s] = c;
        };
        match self.model {
            // cos x + sin x
            Model::TorusNls1d => {
                set(1, 0, Complex64::new(0.5, -0.5));
                set(-1, 0, Complex64::new(0.5, 0.5));
            }
            // h_0 + h_1
            Model::GrossPitaevskii1d => {
                set(0, 0, one);
                set(1, 0, one);
            }
            // 1 + 2 cos x + 2 cos y
            Model::AnisoTorus2d => {
                set(0, 0, one);
                set(1, 0, one);
                set(-1, 0, one);
                set(0, 1, one);
                set(0, -1, one);
            }
            // h_0(y) (h_0(x) + h_2(x))
            Model::AnisoGp2d => {
                set(0, 0, one);
                set(2, 0, one);
            }
        }
        v
    }

    /// Exact free flow `e^{-itA} u`.
    pub fn free_flow(&self, t: f64, u: &StateVector) -> Result<StateVector> {
        u.ensure_on(self.basis_key())?;
        if t == 0.0 {
            return Ok(u.clone());
        }
        let coeffs = u
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, &l)| c * Complex64::from_polar(1.0, -t * l))
            .collect();
        Ok(StateVector::from_raw(u.basis, coeffs))
    }

    /// Free flow over `k` whole periods, `e^{-ikPA} u`, with the phases
    /// evaluated exactly (they are `+-1` for the supported spectra).
    pub fn free_flow_periods(&self, k: i64, u: &StateVector) -> Result<StateVector> {
        u.ensure_on(self.basis_key())?;
        let cycles_per_period = self.period / (2.0 * PI);
        let coeffs = u
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, &l)| {
                let turns = (k as f64 * l * cycles_per_period).rem_euclid(1.0);
                if turns == 0.0 {
                    *c
                } else if turns == 0.5 {
                    -c
                } else {
                    c * Complex64::from_polar(1.0, -2.0 * PI * turns)
                }
            })
            .collect();
        Ok(StateVector::from_raw(u.basis, coeffs))
    }

    /// Sign `s` with `e^{-iPA} = s Id`: `1` for integer spectra, `-1` for
    /// the half-integer spectrum of the 2D Gross-Pitaevskii model.
    pub fn monodromy_sign(&self) -> f64 {
        if self.eigenvalues.iter().all(|l| l.fract() == 0.0) {
            1.0
        } else {
            -1.0
        }
    }

    /// Cubic part `P[alpha |w|^2 w]` without the linear slow symbol.
    pub(crate) fn cubic_term(&self, w: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut grid = self.basis.to_grid(w)?;
        for (g, &a) in grid.iter_mut().zip(&self.coupling) {
            *g *= a * g.norm_sqr();
        }
        self.basis.to_coeffs(&grid)
    }

    /// `g(w)` without the `eps_eff` factor.
    pub fn nonlinear_term(&self, w: &StateVector) -> Result<StateVector> {
        w.ensure_on(self.basis_key())?;
        let mut out = self.cubic_term(&w.coeffs)?;
        for ((o, c), &m) in out.iter_mut().zip(&w.coeffs).zip(&self.slow_linear) {
            *o += m * c;
        }
        Ok(StateVector::from_raw(w.basis, out))
    }

    /// Filtered field `f(t, u) = -i e^{itA} g(e^{-itA} u)`, so that the
    /// filtered unknown obeys `u' = eps_eff f(t, u)`.
    pub fn filtered_rhs(&self, t: f64, u: &StateVector) -> Result<StateVector> {
        let w = self.free_flow(t, u)?;
        let g = self.nonlinear_term(&w)?;
        let mut out = self.free_flow(-t, &g)?;
        out.scale(Complex64::new(0.0, -1.0));
        Ok(out)
    }
}
