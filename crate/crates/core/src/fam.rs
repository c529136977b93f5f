//! First averaged model.
//!
//! `F_1(u) = (1/P) \int_0^P f(t, u) dt`, evaluated with the rectangle rule,
//! which is spectrally accurate for the periodic integrand.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, StateVector};
use crate::sam::{explicit_rk_step, ButcherTableau, MacroScheme, RunStats, Trajectory};
use crate::splitting::divide_exactly;

#[derive(Debug, Clone)]
pub struct FamConfig {
    pub problem: Arc<ProblemSpec>,
    /// Quadrature points per period.
    pub n_quad: usize,
    /// RK4 step in the original time variable.
    pub h_fam: f64,
    /// Final time; defaults to `T0 / eps_eff`.
    pub horizon: Option<f64>,
    pub record_every: usize,
}

impl FamConfig {
    pub fn new(problem: Arc<ProblemSpec>, h_fam: f64) -> Result<Self> {
        let cfg = Self { problem, n_quad: 64, h_fam, horizon: None, record_every: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_quad < 2 || self.n_quad % 2 != 0 {
            return Err(Error::config(format!("n_quad must be even and >= 2, got {}", self.n_quad)));
        }
        if !(self.h_fam > 0.0 && self.h_fam.is_finite()) {
            return Err(Error::config(format!("h_fam must be positive, got {}", self.h_fam)));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        divide_exactly(self.horizon(), self.h_fam, "FAM step")?;
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.problem.horizon())
    }
}

/// Quadrature-averaged filtered field with precomputed phases.
#[derive(Debug, Clone)]
pub struct FamField {
    problem: Arc<ProblemSpec>,
    /// `e^{-i tau_q lambda_k}` per node.
    phases: Vec<Vec<Complex64>>,
    parallel: bool,
}

impl FamField {
    pub fn new(problem: Arc<ProblemSpec>, n_quad: usize) -> Result<Self> {
        if n_quad < 2 || n_quad % 2 != 0 {
            return Err(Error::config(format!("n_quad must be even and >= 2, got {n_quad}")));
        }
        let period = problem.period();
        let phases = (0..n_quad)
            .map(|q| {
                let tau = q as f64 * period / n_quad as f64;
                problem
                    .eigenvalues()
                    .iter()
                    .map(|&l| Complex64::from_polar(1.0, -tau * l))
                    .collect()
            })
            .collect();
        Ok(Self { problem, phases, parallel: false })
    }

    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn n_quad(&self) -> usize {
        self.phases.len()
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// `-i e^{i tau A} g(e^{-i tau A} u)` at node `q`.
    fn node(&self, q: usize, u: &StateVector) -> Result<Vec<Complex64>> {
        let ph = &self.phases[q];
        let w: Vec<Complex64> = u.coeffs().iter().zip(ph).map(|(c, p)| c * p).collect();
        let w = StateVector::from_raw(u.basis(), w);
        let g = self.problem.nonlinear_term(&w)?;
        Ok(g.coeffs()
            .iter()
            .zip(ph)
            .map(|(c, p)| Complex64::new(0.0, -1.0) * c * p.conj())
            .collect())
    }

    pub fn evaluate(&self, u: &StateVector) -> Result<StateVector> {
        u.ensure_on(self.problem.basis_key())?;
        let n = self.phases.len();
        let nodes: Vec<Vec<Complex64>> = if self.parallel {
            (0..n).into_par_iter().map(|q| self.node(q, u)).collect::<Result<_>>()?
        } else {
            (0..n).map(|q| self.node(q, u)).collect::<Result<_>>()?
        };
        let mut acc = vec![Complex64::default(); u.len()];
        for v in &nodes {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(StateVector::from_raw(u.basis(), acc))
    }
}

/// `F_1(u)` with `n_quad` rectangle nodes.
pub fn fam_field(problem: &Arc<ProblemSpec>, n_quad: usize, u: &StateVector) -> Result<StateVector> {
    FamField::new(Arc::clone(problem), n_quad)?.evaluate(u)
}

/// RK4 integration of `u' = eps_eff F_1(u)` from the model's initial datum.
pub fn fam_integrate(cfg: &FamConfig) -> Result<Trajectory> {
    fam_integrate_from(cfg, &cfg.problem.initial_state())
}

pub fn fam_integrate_from(cfg: &FamConfig, u0: &StateVector) -> Result<Trajectory> {
    cfg.validate()?;
    let start = Instant::now();
    let field = FamField::new(Arc::clone(&cfg.problem), cfg.n_quad)?;
    let tableau = ButcherTableau::new(MacroScheme::Rk4);
    let steps = divide_exactly(cfg.horizon(), cfg.h_fam, "FAM step")?;
    let dt = cfg.problem.epsilon_eff() * cfg.h_fam;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
        stats: RunStats::default(),
    };
    let mut u = u0.clone();
    let mut evals = 0u64;
    for n in 1..=steps {
        u = explicit_rk_step(&tableau, dt, &u, |v| {
            evals += 1;
            field.evaluate(v)
        })?;
        if n % cfg.record_every == 0 || n == steps {
            traj.times.push(n as f64 * cfg.h_fam);
            traj.states.push(u.clone());
        }
    }
    traj.stats.macro_steps = steps as u64;
    traj.stats.field_evals = evals;
    traj.stats.wall_time_s = start.elapsed().as_secs_f64();
    Ok(traj)
}
