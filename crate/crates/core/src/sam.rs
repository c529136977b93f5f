//! Stroboscopic averaging method.
//!
//! The averaged vector field is approximated by a central difference of the
//! stroboscopic maps `Psi(mP, u)`, each obtained by micro-integrating the
//! autonomous equation over `|m|` whole periods:
//!
//! ```text
//! F_h(u) = 1 / (P eps) * sum_m w_m (Psi_h(mP, u) - u)
//! ```
//!
//! A macro Runge-Kutta scheme then advances `u' = eps F_h(u)` with steps
//! `H = O(1/eps)`. At times that are multiples of the period the macro
//! state approximates the solution itself.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, StateVector};
use crate::splitting::{divide_exactly, Propagator, Splitter, SplittingScheme};

/// Central first-derivative stencil over period multiples, with exact
/// rational weights `numerators[i] / denominator`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stencil {
    delta: u32,
    offsets: Vec<i64>,
    numerators: Vec<i64>,
    denominator: i64,
}

impl Stencil {
    /// Interpolation order `delta` in {2, 4, 8}.
    pub fn new(delta: u32) -> Result<Self> {
        // one-sided halves (offset, numerator) for m > 0
        let (half, denominator): (&[(i64, i64)], i64) = match delta {
            2 => (&[(1, 1)], 2),
            4 => (&[(1, 8), (2, -1)], 12),
            8 => (&[(1, 672), (2, -168), (3, 32), (4, -3)], 840),
            _ => return Err(Error::config(format!("no stencil of order {delta}; use 2, 4 or 8"))),
        };
        let mut pairs: Vec<(i64, i64)> = half
            .iter()
            .flat_map(|&(m, w)| [(m, w), (-m, -w)])
            .collect();
        pairs.sort_by_key(|&(m, _)| m);
        Ok(Self {
            delta,
            offsets: pairs.iter().map(|p| p.0).collect(),
            numerators: pairs.iter().map(|p| p.1).collect(),
            denominator,
        })
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    /// Period multiples in ascending order.
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn numerators(&self) -> &[i64] {
        &self.numerators
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn weights(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|&n| n as f64 / self.denominator as f64)
            .collect()
    }

    /// Total number of periods integrated per evaluation.
    pub fn periods_per_eval(&self) -> u64 {
        self.offsets.iter().map(|m| m.unsigned_abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroScheme {
    Rk2,
    Rk4,
    ImplicitMidpoint,
}

impl MacroScheme {
    pub fn name(self) -> &'static str {
        match self {
            MacroScheme::Rk2 => "rk2",
            MacroScheme::Rk4 => "rk4",
            MacroScheme::ImplicitMidpoint => "midpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub scheme: MacroScheme,
    /// Row `i` holds `a_ij` for `j < i` (explicit) or `j <= i` (implicit).
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub is_symmetric: bool,
}

impl ButcherTableau {
    pub fn new(scheme: MacroScheme) -> Self {
        match scheme {
            MacroScheme::Rk2 => Self {
                scheme,
                a: vec![vec![], vec![0.5]],
                b: vec![0.0, 1.0],
                c: vec![0.0, 0.5],
                is_symmetric: false,
            },
            MacroScheme::Rk4 => Self {
                scheme,
                a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
                b: vec![1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0],
                c: vec![0.0, 0.5, 0.5, 1.0],
                is_symmetric: false,
            },
            MacroScheme::ImplicitMidpoint => Self {
                scheme,
                a: vec![vec![0.5]],
                b: vec![1.0],
                c: vec![0.5],
                is_symmetric: true,
            },
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn is_explicit(&self) -> bool {
        self.a.iter().enumerate().all(|(i, row)| row.len() <= i)
    }
}

/// One explicit Runge-Kutta step of `u' = field(u)` with step `dt`.
pub fn explicit_rk_step<F>(
    tableau: &ButcherTableau,
    dt: f64,
    u: &StateVector,
    mut field: F,
) -> Result<StateVector>
where
    F: FnMut(&StateVector) -> Result<StateVector>,
{
    if !tableau.is_explicit() {
        return Err(Error::config("explicit step requested for an implicit tableau"));
    }
    let mut stages: Vec<StateVector> = Vec::with_capacity(tableau.stages());
    for row in &tableau.a {
        let mut arg = u.clone();
        for (a, k) in row.iter().zip(&stages) {
            if *a != 0.0 {
                arg.axpy(Complex64::new(dt * a, 0.0), k);
            }
        }
        stages.push(field(&arg)?);
    }
    let mut next = u.clone();
    for (b, k) in tableau.b.iter().zip(&stages) {
        if *b != 0.0 {
            next.axpy(Complex64::new(dt * b, 0.0), k);
        }
    }
    Ok(next)
}

/// Convergence record of one implicit midpoint step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Implicit midpoint step: solve `k = field(u + dt/2 k)` by fixed-point
/// iteration from `k = field(u)`, then return `u + dt k`.
///
/// The residual is the change of the updated state relative to the state,
/// `|dt| ||k_new - k|| / ||u||`, so that a vanishing field converges at
/// once instead of chasing round-off. On failure the last residual is
/// reported.
pub fn midpoint_step<F>(
    dt: f64,
    u: &StateVector,
    mut field: F,
    tol: f64,
    max_iters: usize,
) -> Result<(StateVector, FixedPointInfo), FixedPointInfo>
where
    F: FnMut(&StateVector) -> Result<StateVector>,
{
    let fail = |iterations, residual| FixedPointInfo { iterations, residual };
    let mut k = field(u).map_err(|_| fail(0, f64::NAN))?;
    let scale = u.euclid_norm();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let mut arg = u.clone();
        arg.axpy(Complex64::new(0.5 * dt, 0.0), &k);
        let next = field(&arg).map_err(|_| fail(it, f64::NAN))?;
        residual = dt.abs() * next.euclid_distance(&k) / scale;
        k = next;
        if !residual.is_finite() {
            return Err(fail(it, residual));
        }
        if residual <= tol {
            let mut out = u.clone();
            out.axpy(Complex64::new(dt, 0.0), &k);
            return Ok((out, fail(it, residual)));
        }
    }
    Err(fail(max_iters, residual))
}

/// Finite-difference approximation `F_h` of the averaged vector field.
#[derive(Debug, Clone)]
pub struct AveragedField {
    propagator: Propagator,
    stencil: Stencil,
    parallel: bool,
}

impl AveragedField {
    pub fn new(problem: Arc<ProblemSpec>, micro: SplittingScheme, stencil: Stencil) -> Result<Self> {
        if !(problem.epsilon_eff() > 0.0) {
            return Err(Error::config("the averaged field needs eps_eff > 0"));
        }
        Ok(Self { propagator: Propagator::new(problem, micro), stencil, parallel: false })
    }

    /// Run the stencil legs on the rayon pool. Results are summed in
    /// ascending offset order either way.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.propagator.problem()
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn micro(&self) -> SplittingScheme {
        self.propagator.scheme()
    }

    /// Micro steps spent by one evaluation.
    pub fn micro_steps_per_eval(&self) -> u64 {
        self.stencil.periods_per_eval() * self.propagator.scheme().steps_per_period as u64
    }

    /// Filtered stroboscopic map over `m` periods: micro-integrate the
    /// autonomous equation, then undo `e^{-imPA}` (identity for integer
    /// spectra).
    pub fn stroboscopic_map(&self, u: &StateVector, m: i64) -> Result<StateVector> {
        let psi = self.propagator.periods(u, m)?;
        self.problem().free_flow_periods(-m, &psi)
    }

    pub fn evaluate(&self, u: &StateVector) -> Result<StateVector> {
        u.ensure_on(self.problem().basis_key())?;
        let offsets = self.stencil.offsets();
        let legs: Vec<StateVector> = if self.parallel {
            offsets
                .par_iter()
                .map(|&m| self.stroboscopic_map(u, m))
                .collect::<Result<_>>()?
        } else {
            offsets
                .iter()
                .map(|&m| self.stroboscopic_map(u, m))
                .collect::<Result<_>>()?
        };
        let p = self.problem();
        let scale = 1.0 / (self.stencil.denominator as f64 * p.period() * p.epsilon_eff());
        let mut acc = vec![Complex64::default(); u.len()];
        for (leg, &w) in legs.iter().zip(&self.stencil.numerators) {
            let w = w as f64;
            for ((a, l), u0) in acc.iter_mut().zip(leg.coeffs()).zip(u.coeffs()) {
                *a += w * (l - u0);
            }
        }
        acc.iter_mut().for_each(|a| *a *= scale);
        let out = StateVector::from_raw(u.basis(), acc);
        if !out.is_finite() {
            return Err(Error::NonFinite("averaged field"));
        }
        Ok(out)
    }
}

/// Full SAM configuration.
#[derive(Debug, Clone)]
pub struct SamConfig {
    pub problem: Arc<ProblemSpec>,
    pub micro: SplittingScheme,
    pub stencil: Stencil,
    pub tableau: ButcherTableau,
    /// Macro step `H` in the original time variable.
    pub macro_step: f64,
    /// Final time; defaults to `T0 / eps_eff`.
    pub horizon: Option<f64>,
    pub fixed_point_tol: f64,
    pub max_iters: usize,
    /// Keep every `record_every`-th stroboscopic state.
    pub record_every: usize,
    /// Keep every macro state, stroboscopic or not.
    pub record_all: bool,
    pub parallel_legs: bool,
}

impl SamConfig {
    pub fn new(
        problem: Arc<ProblemSpec>,
        micro: SplittingScheme,
        delta: u32,
        scheme: MacroScheme,
        macro_step: f64,
    ) -> Result<Self> {
        let cfg = Self {
            problem,
            micro,
            stencil: Stencil::new(delta)?,
            tableau: ButcherTableau::new(scheme),
            macro_step,
            horizon: None,
            fixed_point_tol: 1e-12,
            max_iters: 50,
            record_every: 1,
            record_all: false,
            parallel_legs: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.macro_step > 0.0 && self.macro_step.is_finite()) {
            return Err(Error::config(format!("macro step must be positive, got {}", self.macro_step)));
        }
        if !(self.problem.epsilon_eff() > 0.0) {
            return Err(Error::config("SAM needs eps_eff > 0"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        if self.horizon() <= 0.0 {
            return Err(Error::config("horizon must be positive"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.problem.horizon())
    }

    /// Number of macro steps, the smallest `N` with `N H >= horizon`.
    pub fn macro_steps(&self) -> usize {
        let q = self.horizon() / self.macro_step;
        let r = q.round();
        if (q - r).abs() <= 1e-9 * q.max(1.0) {
            r as usize
        } else {
            q.ceil() as usize
        }
    }

    /// Micro step `h = P / n`.
    pub fn micro_step(&self) -> f64 {
        self.micro.step(self.problem.period())
    }
}

/// Work counters of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub macro_steps: u64,
    pub field_evals: u64,
    pub micro_steps: u64,
    pub fixed_point_iterations: u64,
    pub wall_time_s: f64,
}

/// Recorded states of an integration.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn last(&self) -> Option<(f64, &StateVector)> {
        self.times.last().copied().zip(self.states.last())
    }

    fn push(&mut self, t: f64, u: StateVector) {
        self.times.push(t);
        self.states.push(u);
    }
}

/// Whether `t` is an integer multiple of `period` (relative slack 1e-9).
pub fn is_stroboscopic(t: f64, period: f64) -> bool {
    let q = t / period;
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)
}

/// SAM integrator bound to one configuration.
#[derive(Debug, Clone)]
pub struct SamSolver {
    cfg: SamConfig,
    field: AveragedField,
}

impl SamSolver {
    pub fn new(cfg: SamConfig) -> Result<Self> {
        cfg.validate()?;
        let field = AveragedField::new(Arc::clone(&cfg.problem), cfg.micro, cfg.stencil.clone())?
            .parallel(cfg.parallel_legs);
        Ok(Self { cfg, field })
    }

    pub fn config(&self) -> &SamConfig {
        &self.cfg
    }

    pub fn field(&self) -> &AveragedField {
        &self.field
    }

    /// `F_h(u)`.
    pub fn averaged_field(&self, u: &StateVector) -> Result<StateVector> {
        self.field.evaluate(u)
    }

    /// One macro step of signed size `step` (in the original time
    /// variable). Returns the new state and the number of field
    /// evaluations used.
    pub fn macro_step_sized(&self, u: &StateVector, step: f64) -> Result<(StateVector, u64)> {
        let dt = self.cfg.problem.epsilon_eff() * step;
        let mut evals = 0u64;
        let field = |v: &StateVector| {
            evals += 1;
            self.field.evaluate(v)
        };
        match self.cfg.tableau.scheme {
            MacroScheme::ImplicitMidpoint => {
                let tol = self.cfg.fixed_point_tol;
                match midpoint_step(dt, u, field, tol, self.cfg.max_iters) {
                    Ok((next, _)) => Ok((next, evals)),
                    Err(info) => Err(Error::StepFailure {
                        step: 0,
                        iterations: info.iterations,
                        residual: info.residual,
                        partial: None,
                    }),
                }
            }
            _ => {
                let next = explicit_rk_step(&self.cfg.tableau, dt, u, field)?;
                Ok((next, evals))
            }
        }
    }

    /// Explicit macro step with the configured `H`.
    pub fn macro_step_explicit(&self, u: &StateVector) -> Result<StateVector> {
        if !self.cfg.tableau.is_explicit() {
            return Err(Error::config("configured tableau is implicit"));
        }
        Ok(self.macro_step_sized(u, self.cfg.macro_step)?.0)
    }

    /// Implicit midpoint macro step with the configured `H`.
    pub fn macro_step_midpoint(&self, u: &StateVector) -> Result<(StateVector, FixedPointInfo)> {
        let dt = self.cfg.problem.epsilon_eff() * self.cfg.macro_step;
        midpoint_step(
            dt,
            u,
            |v| self.field.evaluate(v),
            self.cfg.fixed_point_tol,
            self.cfg.max_iters,
        )
        .map_err(|info| Error::StepFailure {
            step: 0,
            iterations: info.iterations,
            residual: info.residual,
            partial: None,
        })
    }

    /// Runs the macro integration from the model's initial datum.
    pub fn integrate(&self) -> Result<Trajectory> {
        self.integrate_from(&self.cfg.problem.initial_state())
    }

    /// Runs the macro integration from `u0` over `[0, horizon]`.
    ///
    /// States are recorded at stroboscopic times only (every
    /// `record_every`-th one) unless `record_all` is set; the initial and
    /// final states are always kept.
    pub fn integrate_from(&self, u0: &StateVector) -> Result<Trajectory> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let period = cfg.problem.period();
        let steps = cfg.macro_steps();
        let micro_per_eval = self.field.micro_steps_per_eval();
        let mut traj = Trajectory::default();
        traj.push(0.0, u0.clone());
        let mut u = u0.clone();
        let mut strobe = 0usize;
        for n in 1..=steps {
            let (next, evals) = match self.macro_step_sized(&u, cfg.macro_step) {
                Ok(ok) => ok,
                Err(Error::StepFailure { iterations, residual, .. }) => {
                    traj.stats.wall_time_s = start.elapsed().as_secs_f64();
                    return Err(Error::StepFailure {
                        step: n,
                        iterations,
                        residual,
                        partial: Some(Box::new(traj)),
                    });
                }
                Err(e) => return Err(e),
            };
            u = next;
            traj.stats.macro_steps += 1;
            traj.stats.field_evals += evals;
            traj.stats.micro_steps += evals * micro_per_eval;
            if cfg.tableau.scheme == MacroScheme::ImplicitMidpoint {
                traj.stats.fixed_point_iterations += evals.saturating_sub(1);
            }
            let t = n as f64 * cfg.macro_step;
            let keep = if cfg.record_all {
                true
            } else if is_stroboscopic(t, period) {
                strobe += 1;
                strobe % cfg.record_every == 0
            } else {
                false
            };
            if keep || n == steps {
                traj.push(t, u.clone());
            }
        }
        traj.stats.wall_time_s = start.elapsed().as_secs_f64();
        Ok(traj)
    }

    /// Approximation of the solution at a non-stroboscopic time `t` from
    /// the macro state `u_t` there.
    ///
    /// With `t = kP + dt`, the averaged equation is integrated backward
    /// over `dt` with the macro scheme, and the result is propagated forward
    /// over `dt` with the micro scheme applied to the autonomous equation.
    pub fn post_process(&self, u_t: &StateVector, t: f64) -> Result<StateVector> {
        let p = &self.cfg.problem;
        let period = p.period();
        if is_stroboscopic(t, period) {
            let k = (t / period).round() as i64;
            return p.free_flow_periods(k, u_t);
        }
        let k = (t / period).floor();
        let dt = t - k * period;

        let macro_steps = (dt / self.cfg.macro_step).ceil().max(1.0) as usize;
        let sub = dt / macro_steps as f64;
        let mut back = u_t.clone();
        for _ in 0..macro_steps {
            back = self.macro_step_sized(&back, -sub)?.0;
        }
        // `back` approximates the filtered state at kP; bring it to the
        // physical frame before integrating the autonomous equation.
        let mut psi = p.free_flow_periods(k as i64, &back)?;

        let h = self.cfg.micro_step();
        let micro_steps = (dt / h).ceil().max(1.0) as usize;
        let splitter = Splitter::with_sequence(
            Arc::clone(p),
            self.cfg.micro.order,
            dt / micro_steps as f64,
            self.cfg.micro.sequence,
        );
        psi = splitter.steps(&psi, micro_steps)?;
        Ok(psi)
    }
}

/// Convenience wrapper: build the solver and integrate.
pub fn sam_integrate(cfg: SamConfig) -> Result<Trajectory> {
    SamSolver::new(cfg)?.integrate()
}

/// Macro step such that `eps_eff H = T0 / n_macro` exactly divides the
/// horizon.
pub fn macro_step_for(problem: &ProblemSpec, n_macro: usize) -> f64 {
    problem.horizon() / n_macro as f64
}

/// Checks that `H` splits the horizon into an integer number of steps.
pub fn check_macro_step(problem: &ProblemSpec, h_macro: f64) -> Result<usize> {
    divide_exactly(problem.horizon(), h_macro, "macro step")
}
