//! Experiment orchestration: parameter sweeps, reference solutions and
//! CSV/JSON output.
//!
//! Each experiment family has a runner returning a [`RunReport`]. Failed
//! runs become rows with a NaN error and an entry in
//! [`RunReport::failures`]; the sweep carries on.
//!
//! `N_step` counts micro-integrator steps. For SAM this is
//! `macro steps * stages * (sum over legs of |m|) * (P / h)`, plus the extra
//! field evaluations of the midpoint fixed-point loop. For plain splitting
//! it is `horizon / h`. One fourth-order composition step counts as one.

pub mod config;
mod experiments;
pub mod fit;
pub mod reference;
pub mod report;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{
    Experiment, ExperimentConfig, GridConfig, ReferenceMethod, ReferencePolicy, TimeValue,
};
pub use experiments::{
    run_accuracy_sweep, run_efficiency, run_invariants_longtime, run_mode_evolution,
    run_splitting_table,
};
pub use fit::{loglog_fit, loglog_fit_above, LogLogFit};
pub use reference::{reference_solution, ReferenceCache, ReferenceKey, CACHE_ENV};
pub use report::{csv_header, Failure, RunRecord, RunReport};

use crate::error::{Error, Result};
use crate::problem::{Model, ModelParams, ProblemSpec, StateVector};
use crate::sam::{RunStats, SamSolver};
use crate::spectral::BasisKind;
use crate::splitting::{divide_exactly, SplittingOrder};

/// Execution options that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Reference cache directory; `STROBO_CACHE_DIR` takes precedence.
    pub cache_dir: Option<PathBuf>,
    /// Skip the reference cache entirely.
    pub no_cache: bool,
}

impl RunOptions {
    pub(crate) fn cache(&self) -> Option<ReferenceCache> {
        if self.no_cache {
            None
        } else {
            ReferenceCache::from_env_or(self.cache_dir.clone())
        }
    }
}

/// Runs the experiment named in `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let run = || match cfg.experiment {
        Experiment::AccuracySweep => run_accuracy_sweep(cfg, opts),
        Experiment::SplittingTable => run_splitting_table(cfg, opts),
        Experiment::Efficiency => run_efficiency(cfg, opts),
        Experiment::InvariantsLongTime => run_invariants_longtime(cfg, opts),
        Experiment::ModeEvolution => run_mode_evolution(cfg, opts),
    };
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// One epsilon of an experiment, with its model instance.
#[derive(Debug, Clone)]
pub struct EpsSetup {
    pub eps: f64,
    pub params: ModelParams,
    pub problem: Arc<ProblemSpec>,
    /// `T0 / eps_eff^horizon_power`.
    pub horizon: f64,
}

impl EpsSetup {
    /// Macro step `H` for a given `eps_eff H`.
    pub fn macro_step(&self, eps_h: f64) -> f64 {
        eps_h / self.problem.epsilon_eff()
    }
}

/// Builds every model instance of `cfg` and checks all step constraints.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<EpsSetup>> {
    cfg.validate()?;
    cfg.eps.iter().map(|&eps| prepare_one(cfg, eps)).collect()
}

fn prepare_one(cfg: &ExperimentConfig, eps: f64) -> Result<EpsSetup> {
    let params = cfg.model_params(eps);
    let problem = Arc::new(cfg.model.build(&params)?);
    let horizon = problem.t0() / problem.epsilon_eff().powi(cfg.horizon_power);
    let s = EpsSetup { eps, params, problem, horizon };
    let period = s.problem.period();
    let divides_period = |h: f64| divide_exactly(period, h, "micro step").map(|_| ());
    let divides_horizon = |t: f64, what: &str| divide_exactly(s.horizon, t, what).map(|_| ());
    let macro_ok = |eh: &TimeValue| divides_horizon(s.macro_step(eh.get()), "macro step");
    match cfg.experiment {
        Experiment::SplittingTable => {
            for h in &cfg.h {
                divides_horizon(h.get(), "splitting step")?;
                divides_horizon(h.get() / cfg.table_refinement as f64, "reference step")?;
            }
        }
        Experiment::AccuracySweep => {
            cfg.h.iter().chain(&cfg.fine_h).try_for_each(|h| divides_period(h.get()))?;
            cfg.eps_h.iter().chain(&cfg.fine_eps_h).try_for_each(macro_ok)?;
        }
        Experiment::Efficiency => {
            cfg.h.iter().try_for_each(|h| divides_horizon(h.get(), "splitting step"))?;
            cfg.sam_h.iter().try_for_each(|h| divides_period(h.get()))?;
            cfg.eps_h.iter().try_for_each(macro_ok)?;
        }
        Experiment::InvariantsLongTime => {
            let h = cfg.h[0].get();
            divides_period(h)?;
            macro_ok(&cfg.eps_h[0])?;
            check_cfl(&s.problem, h)?;
            divide_exactly(sample_every(cfg, &s)?, period, "sampling interval over the period")?;
        }
        Experiment::ModeEvolution => {
            let h = cfg.h[0].get();
            divides_period(h)?;
            macro_ok(&cfg.eps_h[0])?;
            let fam_h = cfg.fam_h.expect("validated").get();
            divides_horizon(fam_h, "FAM step")?;
            let every = sample_every(cfg, &s)?;
            divides_horizon(every, "sampling interval")?;
            divide_exactly(every, period, "sampling interval over the period")?;
            divide_exactly(every, s.macro_step(cfg.eps_h[0].get()), "sampling interval over H")?;
            divide_exactly(every, fam_h, "sampling interval over the FAM step")?;
            let b = s.problem.basis();
            cfg.modes.iter().try_for_each(|&(kx, ky)| b.slot(kx, ky).map(|_| ()))?;
        }
    }
    Ok(s)
}

/// Sampling interval of observables: the configured value, or the larger
/// of the period and the macro step.
pub(crate) fn sample_every(cfg: &ExperimentConfig, s: &EpsSetup) -> Result<f64> {
    match cfg.sample_every {
        Some(t) => Ok(t.get()),
        None => {
            let big_h = cfg.eps_h.first().map_or(0.0, |e| s.macro_step(e.get()));
            Ok(big_h.max(s.problem.period()))
        }
    }
}

/// Refuses Fourier runs with `h (N/2)^2 >= 2 pi` along the stiff axis.
pub fn check_cfl(problem: &ProblemSpec, h: f64) -> Result<()> {
    let b = problem.basis();
    let n = match b.kind() {
        BasisKind::Fourier1D => b.key().nx,
        BasisKind::Fourier2D => b.key().ny,
        _ => return Ok(()),
    };
    let value = h * (n as f64 / 2.0).powi(2);
    if value >= 2.0 * std::f64::consts::PI {
        return Err(Error::Cfl { value });
    }
    Ok(())
}

/// Name of a plain splitting method on `model`'s basis.
pub fn splitting_label(model: Model, order: SplittingOrder) -> &'static str {
    let hermite = matches!(model, Model::GrossPitaevskii1d | Model::AnisoGp2d);
    match (hermite, order) {
        (false, SplittingOrder::Strang) => "tsfp2",
        (false, SplittingOrder::Yoshida4) => "tsfp4",
        (true, SplittingOrder::Strang) => "tshp2",
        (true, SplittingOrder::Yoshida4) => "tshp4",
    }
}

/// Integrates with `solver` over its horizon and returns the physical
/// state at the final time, with the run counters.
pub fn sam_physical_final(solver: &SamSolver) -> Result<(StateVector, RunStats)> {
    let traj = solver.integrate()?;
    let (t, u) = traj.last().expect("trajectories hold the initial state");
    Ok((solver.post_process(u, t)?, traj.stats))
}

/// Order-preserving parallel map.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

/// Runs `f`, timing it.
pub(crate) fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}
