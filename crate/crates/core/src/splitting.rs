//! Time-splitting spectral integrators.
//!
//! The autonomous equation `i psi_t = (A + eps_eff M) psi + eps_eff alpha |psi|^2 psi`
//! is split into a diagonal linear part (exact in coefficient space) and a
//! pointwise phase rotation (exact on the grid). Strang composes them
//! symmetrically; the fourth-order scheme is the triple-jump composition of
//! three Strang steps.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, StateVector};

/// Triple-jump weights `(w1, w0)` with `2 w1 + w0 = 1`.
pub fn yoshida_weights() -> (f64, f64) {
    let cbrt2 = 2f64.powf(1.0 / 3.0);
    let w1 = 1.0 / (2.0 - cbrt2);
    (w1, 1.0 - 2.0 * w1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingOrder {
    /// Second-order Strang splitting.
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    Yoshida4,
}

impl SplittingOrder {
    pub fn order(self) -> u32 {
        match self {
            SplittingOrder::Strang => 2,
            SplittingOrder::Yoshida4 => 4,
        }
    }

    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            2 => Ok(SplittingOrder::Strang),
            4 => Ok(SplittingOrder::Yoshida4),
            _ => Err(Error::config(format!("no splitting scheme of order {order}"))),
        }
    }
}

/// Order of the two sub-flows inside one symmetric Strang step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    /// `V(h/2) K(h) V(h/2)`.
    #[default]
    PotentialFirst,
    /// `K(h/2) V(h) K(h/2)`.
    KineticFirst,
}

/// Micro-integrator choice with step `h = period / steps_per_period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplittingScheme {
    pub order: SplittingOrder,
    pub steps_per_period: usize,
    #[serde(default)]
    pub sequence: Sequence,
}

impl SplittingScheme {
    pub fn new(order: SplittingOrder, steps_per_period: usize) -> Result<Self> {
        if steps_per_period == 0 {
            return Err(Error::config("steps per period must be positive"));
        }
        Ok(Self { order, steps_per_period, sequence: Sequence::default() })
    }

    /// Scheme for a requested step; `h` must divide the period.
    pub fn with_step(order: SplittingOrder, h: f64, period: f64) -> Result<Self> {
        Self::new(order, divide_exactly(period, h, "micro step")?)
    }

    pub fn sequence(mut self, sequence: Sequence) -> Self {
        self.sequence = sequence;
        self
    }

    pub fn step(&self, period: f64) -> f64 {
        period / self.steps_per_period as f64
    }
}

/// `whole / part` as an integer, or a configuration error when `part` does
/// not divide `whole` (relative slack 1e-9).
pub fn divide_exactly(whole: f64, part: f64, what: &str) -> Result<usize> {
    if !(part > 0.0) || !part.is_finite() {
        return Err(Error::config(format!("{what} must be positive, got {part}")));
    }
    let q = whole / part;
    let n = q.round();
    if n < 1.0 || (q - n).abs() > 1e-9 * q.max(1.0) {
        return Err(Error::config(format!(
            "{what} {part} does not divide {whole} (ratio {q})"
        )));
    }
    Ok(n as usize)
}

fn linear_phases(symbol: &[f64], t: f64) -> Vec<Complex64> {
    symbol.iter().map(|&l| Complex64::from_polar(1.0, -t * l)).collect()
}

/// Exact flow of the whole linear part over time `t`.
pub fn kinetic_flow(p: &ProblemSpec, t: f64, psi: &StateVector) -> Result<StateVector> {
    psi.ensure_on(p.basis_key())?;
    let phases = linear_phases(&p.full_linear_symbol(), t);
    let mut out = psi.clone();
    apply_phases(out.coeffs_mut(), &phases);
    Ok(out)
}

/// Exact flow of `i psi_t = eps_eff alpha(x) |psi|^2 psi` over time `t`.
pub fn potential_flow(p: &ProblemSpec, t: f64, psi: &StateVector) -> Result<StateVector> {
    psi.ensure_on(p.basis_key())?;
    let mut coeffs = psi.coeffs().to_vec();
    rotate_on_grid(p, t, &mut coeffs)?;
    Ok(StateVector::from_raw(psi.basis(), coeffs))
}

fn apply_phases(coeffs: &mut [Complex64], phases: &[Complex64]) {
    for (c, ph) in coeffs.iter_mut().zip(phases) {
        *c *= ph;
    }
}

fn rotate_on_grid(p: &ProblemSpec, t: f64, coeffs: &mut Vec<Complex64>) -> Result<()> {
    let strength = t * p.epsilon_eff();
    if strength == 0.0 {
        return Ok(());
    }
    p.basis().map_on_grid(coeffs, |grid| {
        for (g, &a) in grid.iter_mut().zip(p.coupling()) {
            let (s, c) = (strength * a * g.norm_sqr()).sin_cos();
            *g *= Complex64::new(c, -s);
        }
    })
}

/// One Strang step `V(h/2) K(h) V(h/2)`.
pub fn strang_step(p: &ProblemSpec, h: f64, psi: &StateVector) -> Result<StateVector> {
    Splitter::new(Arc::new(p.clone()), SplittingOrder::Strang, h).step(psi)
}

/// One triple-jump step `S(w1 h) S(w0 h) S(w1 h)`.
pub fn yoshida4_step(p: &ProblemSpec, h: f64, psi: &StateVector) -> Result<StateVector> {
    Splitter::new(Arc::new(p.clone()), SplittingOrder::Yoshida4, h).step(psi)
}

/// `(S_{sign(k) h})^{|k| n}(psi)`: the autonomous equation integrated over
/// `k` whole periods, forward or backward.
pub fn propagate_periods(
    p: &ProblemSpec,
    scheme: SplittingScheme,
    psi: &StateVector,
    k: i64,
) -> Result<StateVector> {
    Propagator::new(Arc::new(p.clone()), scheme).periods(psi, k)
}

#[derive(Debug, Clone)]
enum SubFlow {
    /// Precomputed linear phases.
    Kinetic(Vec<Complex64>),
    /// Duration of a pointwise rotation.
    Potential(f64),
}

/// A splitting integrator with a fixed step and precomputed linear phases.
///
/// Adjacent sub-flows of the same kind are merged, which is exact since
/// both families commute with themselves.
#[derive(Debug, Clone)]
pub struct Splitter {
    problem: Arc<ProblemSpec>,
    h: f64,
    flows: Vec<SubFlow>,
}

impl Splitter {
    pub fn new(problem: Arc<ProblemSpec>, order: SplittingOrder, h: f64) -> Self {
        Self::with_sequence(problem, order, h, Sequence::default())
    }

    pub fn with_sequence(
        problem: Arc<ProblemSpec>,
        order: SplittingOrder,
        h: f64,
        sequence: Sequence,
    ) -> Self {
        let taus = match order {
            SplittingOrder::Strang => vec![h],
            SplittingOrder::Yoshida4 => {
                let (w1, w0) = yoshida_weights();
                vec![w1 * h, w0 * h, w1 * h]
            }
        };
        // (is_kinetic, duration) before merging
        let mut raw: Vec<(bool, f64)> = Vec::new();
        for tau in taus {
            let outer = sequence == Sequence::KineticFirst;
            for (kin, t) in [(outer, 0.5 * tau), (!outer, tau), (outer, 0.5 * tau)] {
                match raw.last_mut() {
                    Some(last) if last.0 == kin => last.1 += t,
                    _ => raw.push((kin, t)),
                }
            }
        }
        let symbol = problem.full_linear_symbol();
        let flows = raw
            .into_iter()
            .map(|(kin, t)| {
                if kin {
                    SubFlow::Kinetic(linear_phases(&symbol, t))
                } else {
                    SubFlow::Potential(t)
                }
            })
            .collect();
        Self { problem, h, flows }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    fn step_coeffs(&self, coeffs: &mut Vec<Complex64>) -> Result<()> {
        for flow in &self.flows {
            match flow {
                SubFlow::Kinetic(ph) => apply_phases(coeffs, ph),
                SubFlow::Potential(t) => rotate_on_grid(&self.problem, *t, coeffs)?,
            }
        }
        Ok(())
    }

    pub fn step(&self, psi: &StateVector) -> Result<StateVector> {
        self.steps(psi, 1)
    }

    /// `count` consecutive steps.
    pub fn steps(&self, psi: &StateVector, count: usize) -> Result<StateVector> {
        psi.ensure_on(self.problem.basis_key())?;
        let mut c = psi.coeffs().to_vec();
        for _ in 0..count {
            self.step_coeffs(&mut c)?;
        }
        let out = StateVector::from_raw(psi.basis(), c);
        if !out.is_finite() {
            return Err(Error::NonFinite("splitting step"));
        }
        Ok(out)
    }

    /// Runs `count` steps, calling `observe(step_index, state)` after every
    /// `every`-th step (and at step 0).
    pub fn steps_observed(
        &self,
        psi: &StateVector,
        count: usize,
        every: usize,
        mut observe: impl FnMut(usize, &StateVector),
    ) -> Result<StateVector> {
        psi.ensure_on(self.problem.basis_key())?;
        let every = every.max(1);
        observe(0, psi);
        let mut c = psi.coeffs().to_vec();
        for i in 1..=count {
            self.step_coeffs(&mut c)?;
            if i % every == 0 {
                observe(i, &StateVector::from_raw(psi.basis(), c.clone()));
            }
        }
        let out = StateVector::from_raw(psi.basis(), c);
        if !out.is_finite() {
            return Err(Error::NonFinite("splitting step"));
        }
        Ok(out)
    }
}

/// Forward and backward splitting integrators for one scheme, used to
/// advance over whole periods.
#[derive(Debug, Clone)]
pub struct Propagator {
    scheme: SplittingScheme,
    forward: Splitter,
    backward: Splitter,
}

impl Propagator {
    pub fn new(problem: Arc<ProblemSpec>, scheme: SplittingScheme) -> Self {
        let h = scheme.step(problem.period());
        Self {
            forward: Splitter::with_sequence(Arc::clone(&problem), scheme.order, h, scheme.sequence),
            backward: Splitter::with_sequence(problem, scheme.order, -h, scheme.sequence),
            scheme,
        }
    }

    pub fn scheme(&self) -> SplittingScheme {
        self.scheme
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.forward.problem()
    }

    pub fn periods(&self, psi: &StateVector, k: i64) -> Result<StateVector> {
        let n = k.unsigned_abs() as usize * self.scheme.steps_per_period;
        match k.signum() {
            0 => Ok(psi.clone()),
            1 => self.forward.steps(psi, n),
            _ => self.backward.steps(psi, n),
        }
    }

    /// Micro steps needed for `k` periods.
    pub fn steps_for(&self, k: i64) -> u64 {
        k.unsigned_abs() * self.scheme.steps_per_period as u64
    }
}

/// Integrates the autonomous equation from 0 to `t_final` with a fixed
/// step; `t_final / h` must be an integer.
pub fn integrate(
    p: &Arc<ProblemSpec>,
    order: SplittingOrder,
    h: f64,
    psi0: &StateVector,
    t_final: f64,
) -> Result<StateVector> {
    let n = divide_exactly(t_final, h, "time step")?;
    Splitter::new(Arc::clone(p), order, h).steps(psi0, n)
}
