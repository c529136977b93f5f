//! The five experiment runners.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::config::{ExperimentConfig, TimeValue};
use super::reference::{reference_solution, ReferenceCache};
use super::report::{Failure, RunRecord, RunReport};
use super::{par_map, prepare, sam_physical_final, sample_every, splitting_label, timed};
use super::{EpsSetup, RunOptions};
use crate::error::{Error, Result};
use crate::fam::{fam_integrate, FamConfig};
use crate::observables::{energy_torus, mass, mode_magnitudes, ObservableKind, ObservableTrace};
use crate::problem::StateVector;
use crate::sam::{is_stroboscopic, MacroScheme, SamConfig, SamSolver, Stencil, Trajectory};
use crate::splitting::{divide_exactly, Splitter, SplittingScheme};

/// Collects records and failures in job order.
struct Collector {
    records: Vec<RunRecord>,
    failures: Vec<Failure>,
}

impl Collector {
    fn new() -> Self {
        Self { records: Vec::new(), failures: Vec::new() }
    }

    fn push(&mut self, rec: RunRecord, outcome: Result<()>) {
        if let Err(e) = outcome {
            self.failures.push(Failure { eps: rec.eps, run: describe(&rec), message: e.to_string() });
        }
        self.records.push(rec);
    }

    fn finish(self, cfg: &ExperimentConfig, wall_time_s: f64) -> RunReport {
        RunReport {
            config: cfg.clone(),
            records: self.records,
            failures: self.failures,
            wall_time_s,
        }
    }
}

fn describe(r: &RunRecord) -> String {
    let mut s = r.method.clone();
    if let Some(sc) = &r.scheme {
        s += &format!(" {sc}");
    }
    if let Some(h) = r.big_h {
        s += &format!(" H={h}");
    }
    if let Some(h) = r.h {
        s += &format!(" h={h}");
    }
    s
}

/// References for every epsilon, in parallel.
fn references(
    cfg: &ExperimentConfig,
    setups: &[EpsSetup],
    cache: Option<&ReferenceCache>,
) -> Vec<Result<StateVector>> {
    let policy = cfg.reference_policy();
    par_map(setups, |s| {
        reference_solution(
            &s.problem,
            &s.params,
            policy.select(s.eps),
            cfg.sequence,
            s.horizon,
            cache,
        )
    })
}

fn sam_config(
    cfg: &ExperimentConfig,
    s: &EpsSetup,
    scheme: MacroScheme,
    big_h: f64,
    h: f64,
) -> Result<SamConfig> {
    let micro = SplittingScheme::with_step(cfg.micro_order()?, h, s.problem.period())?
        .sequence(cfg.sequence);
    let mut sc = SamConfig::new(Arc::clone(&s.problem), micro, cfg.stencil, scheme, big_h)?;
    sc.horizon = Some(s.horizon);
    sc.parallel_legs = cfg.parallel_legs;
    Ok(sc)
}

fn sam_record(cfg: &ExperimentConfig, s: &EpsSetup, scheme: MacroScheme, big_h: f64, h: f64) -> RunRecord {
    let mut rec = RunRecord::new(cfg.model, s.eps, "sam");
    rec.scheme = Some(scheme.name().to_string());
    rec.stencil = Some(cfg.stencil);
    rec.big_h = Some(big_h);
    rec.h = Some(h);
    rec
}

/// Runs SAM to the horizon and fills error and counters of `rec`.
fn sam_error_run(
    cfg: &ExperimentConfig,
    s: &EpsSetup,
    reference: &Result<StateVector>,
    scheme: MacroScheme,
    big_h: f64,
    h: f64,
) -> (RunRecord, Result<()>) {
    let mut rec = sam_record(cfg, s, scheme, big_h, h);
    let (outcome, wall) = timed(|| -> Result<()> {
        let reference = reference.as_ref().map_err(clone_err)?;
        let solver = SamSolver::new(sam_config(cfg, s, scheme, big_h, h)?)?;
        let (u, stats) = sam_physical_final(&solver)?;
        rec.n_step = stats.micro_steps;
        rec.error = Some(s.problem.basis().l2_distance(u.coeffs(), reference.coeffs())?);
        Ok(())
    });
    rec.wall_time_s = wall;
    (rec, outcome)
}

fn clone_err(e: &Error) -> Error {
    Error::config(format!("reference unavailable: {e}"))
}

/// Error of SAM against the reference over a sweep of `eps_eff H` at
/// `fine_h` and a sweep of `h` at `fine_eps_h`, for every macro scheme.
pub fn run_accuracy_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = std::time::Instant::now();
    let setups = prepare(cfg)?;
    let cache = opts.cache();
    let refs = references(cfg, &setups, cache.as_ref());

    let mut jobs: Vec<(usize, MacroScheme, f64, f64)> = Vec::new();
    for (i, s) in setups.iter().enumerate() {
        let mut pairs: Vec<(TimeValue, TimeValue)> = Vec::new();
        if let Some(fh) = cfg.fine_h {
            pairs.extend(cfg.eps_h.iter().map(|&eh| (eh, fh)));
        }
        if let Some(feh) = cfg.fine_eps_h {
            pairs.extend(cfg.h.iter().map(|&h| (feh, h)));
        }
        for &scheme in &cfg.macro_schemes {
            for &(eh, h) in &pairs {
                let job = (i, scheme, s.macro_step(eh.get()), h.get());
                if !jobs.contains(&job) {
                    jobs.push(job);
                }
            }
        }
    }
    let results = par_map(&jobs, |&(i, scheme, big_h, h)| {
        sam_error_run(cfg, &setups[i], &refs[i], scheme, big_h, h)
    });
    let mut out = Collector::new();
    for (rec, outcome) in results {
        out.push(rec, outcome);
    }
    Ok(out.finish(cfg, start.elapsed().as_secs_f64()))
}

/// Fourth-order splitting errors on `[0, T0/eps_eff]` against the same
/// scheme with the step divided by `table_refinement`.
pub fn run_splitting_table(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<RunReport> {
    let start = std::time::Instant::now();
    let setups = prepare(cfg)?;
    let order = cfg.micro_order()?;
    let jobs: Vec<(usize, f64)> = (0..setups.len())
        .flat_map(|i| cfg.h.iter().map(move |h| (i, h.get())))
        .collect();
    let results = par_map(&jobs, |&(i, h)| {
        let s = &setups[i];
        let mut rec = RunRecord::new(cfg.model, s.eps, splitting_label(cfg.model, order));
        rec.h = Some(h);
        let (outcome, wall) = timed(|| -> Result<()> {
            let run = |step: f64| -> Result<StateVector> {
                let n = divide_exactly(s.horizon, step, "splitting step")?;
                Splitter::with_sequence(Arc::clone(&s.problem), order, step, cfg.sequence)
                    .steps(&s.problem.initial_state(), n)
            };
            let coarse = run(h)?;
            let fine = run(h / cfg.table_refinement as f64)?;
            rec.n_step = divide_exactly(s.horizon, h, "splitting step")? as u64;
            rec.error = Some(s.problem.basis().l2_distance(coarse.coeffs(), fine.coeffs())?);
            Ok(())
        });
        rec.wall_time_s = wall;
        (rec, outcome)
    });
    let mut out = Collector::new();
    for (rec, outcome) in results {
        out.push(rec, outcome);
    }
    Ok(out.finish(cfg, start.elapsed().as_secs_f64()))
}

/// Micro steps a SAM run will take, known before running.
fn sam_n_step(cfg: &ExperimentConfig, s: &EpsSetup, scheme: MacroScheme, big_h: f64, h: f64) -> Result<u64> {
    let macro_steps = divide_exactly(s.horizon, big_h, "macro step")? as u64;
    let n = divide_exactly(s.problem.period(), h, "micro step")? as u64;
    let stages = crate::sam::ButcherTableau::new(scheme).stages() as u64;
    Ok(macro_steps * stages * Stencil::new(cfg.stencil)?.periods_per_eval() * n)
}

/// Error against work for plain splitting and for SAM over a grid of
/// `(H, h)` pairs, plus SAM's lower envelope per `N_step`.
pub fn run_efficiency(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = std::time::Instant::now();
    let setups = prepare(cfg)?;
    let cache = opts.cache();
    let refs = references(cfg, &setups, cache.as_ref());
    let order = cfg.micro_order()?;
    let scheme = cfg.macro_schemes[0];

    enum Job {
        Split(usize, f64),
        Sam(usize, f64, f64),
    }
    let mut jobs = Vec::new();
    for (i, s) in setups.iter().enumerate() {
        jobs.extend(cfg.h.iter().map(|h| Job::Split(i, h.get())));
        for eh in &cfg.eps_h {
            for h in &cfg.sam_h {
                let big_h = s.macro_step(eh.get());
                let n = sam_n_step(cfg, s, scheme, big_h, h.get())?;
                let keep = cfg.n_step_range.is_none_or(|(lo, hi)| lo <= n && n <= hi);
                if keep {
                    jobs.push(Job::Sam(i, big_h, h.get()));
                }
            }
        }
    }
    let results = par_map(&jobs, |job| match *job {
        Job::Split(i, h) => {
            let s = &setups[i];
            let mut rec = RunRecord::new(cfg.model, s.eps, splitting_label(cfg.model, order));
            rec.h = Some(h);
            let (outcome, wall) = timed(|| -> Result<()> {
                let reference = refs[i].as_ref().map_err(clone_err)?;
                let n = divide_exactly(s.horizon, h, "splitting step")?;
                let u = Splitter::with_sequence(Arc::clone(&s.problem), order, h, cfg.sequence)
                    .steps(&s.problem.initial_state(), n)?;
                rec.n_step = n as u64;
                rec.error = Some(s.problem.basis().l2_distance(u.coeffs(), reference.coeffs())?);
                Ok(())
            });
            rec.wall_time_s = wall;
            (rec, outcome)
        }
        Job::Sam(i, big_h, h) => sam_error_run(cfg, &setups[i], &refs[i], scheme, big_h, h),
    });

    let mut out = Collector::new();
    let mut envelopes: Vec<RunRecord> = Vec::new();
    let mut best: BTreeMap<(usize, u64), RunRecord> = BTreeMap::new();
    for (job, (rec, outcome)) in jobs.iter().zip(results) {
        if let Job::Sam(i, ..) = *job {
            let err = rec.error_value();
            if err.is_finite() {
                let slot = best.entry((i, rec.n_step)).or_insert_with(|| rec.clone());
                if err < slot.error_value() {
                    *slot = rec.clone();
                }
            }
        }
        out.push(rec, outcome);
    }
    for (_, mut rec) in best {
        rec.method = "sam_envelope".into();
        rec.wall_time_s = 0.0;
        envelopes.push(rec);
    }
    for rec in envelopes {
        out.push(rec, Ok(()));
    }
    Ok(out.finish(cfg, start.elapsed().as_secs_f64()))
}

/// Samples of `traj` at multiples of `every`, as physical states.
fn sampled_states(
    s: &EpsSetup,
    traj: &Trajectory,
    every: f64,
) -> Result<Vec<(f64, StateVector)>> {
    let period = s.problem.period();
    traj.times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| is_stroboscopic(**t, every))
        .map(|(&t, u)| {
            let k = (t / period).round() as i64;
            // Report the nominal sample time so that all methods share it.
            Ok(((t / every).round() * every, s.problem.free_flow_periods(k, u)?))
        })
        .collect()
}

/// SAM with every macro scheme over `T0 / eps_eff^2`, tracking mass and
/// energy errors at stroboscopic sample times.
pub fn run_invariants_longtime(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<RunReport> {
    let start = std::time::Instant::now();
    let setups = prepare(cfg)?;
    let jobs: Vec<(usize, MacroScheme)> = (0..setups.len())
        .flat_map(|i| cfg.macro_schemes.iter().map(move |&m| (i, m)))
        .collect();
    let results = par_map(&jobs, |&(i, scheme)| {
        let s = &setups[i];
        let big_h = s.macro_step(cfg.eps_h[0].get());
        let h = cfg.h[0].get();
        let mut rec = sam_record(cfg, s, scheme, big_h, h);
        let (outcome, wall) = timed(|| -> Result<()> {
            let mut sc = sam_config(cfg, s, scheme, big_h, h)?;
            sc.record_all = true;
            let solver = SamSolver::new(sc)?;
            let (traj, failure) = match solver.integrate() {
                Ok(t) => (t, None),
                Err(Error::StepFailure { step, iterations, residual, partial }) => {
                    let failure = Error::StepFailure { step, iterations, residual, partial: None };
                    (*partial.unwrap_or_default(), Some(failure))
                }
                Err(e) => return Err(e),
            };
            rec.n_step = traj.stats.micro_steps;
            let b = s.problem.basis();
            let mut m_tr = ObservableTrace::new(ObservableKind::Mass);
            let mut e_tr = ObservableTrace::new(ObservableKind::EnergyTorus);
            let samples = sampled_states(s, &traj, sample_every(cfg, s)?)?;
            let (m0, e0) = match samples.first() {
                Some((_, u)) => (mass(b, u)?, energy_torus(b, u, s.eps)?),
                None => (0.0, 0.0),
            };
            for (t, u) in &samples {
                m_tr.push(*t, vec![(mass(b, u)? - m0).abs()])?;
                e_tr.push(*t, vec![(energy_torus(b, u, s.eps)? - e0).abs()])?;
            }
            rec.traces = vec![m_tr, e_tr];
            failure.map_or(Ok(()), Err)
        });
        rec.wall_time_s = wall;
        (rec, outcome)
    });
    let mut out = Collector::new();
    for (rec, outcome) in results {
        out.push(rec, outcome);
    }
    Ok(out.finish(cfg, start.elapsed().as_secs_f64()))
}

fn mode_trace(
    s: &EpsSetup,
    modes: &[(i64, i64)],
    samples: impl IntoIterator<Item = (f64, StateVector)>,
) -> Result<ObservableTrace> {
    let mut tr = ObservableTrace::new(ObservableKind::ModeMagnitudes);
    for (t, u) in samples {
        tr.push(t, mode_magnitudes(s.problem.basis(), &u, modes)?)?;
    }
    Ok(tr)
}

/// Mode magnitudes along full splitting, SAM and FAM trajectories at
/// shared sample times.
pub fn run_mode_evolution(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<RunReport> {
    let start = std::time::Instant::now();
    let setups = prepare(cfg)?;
    let order = cfg.micro_order()?;
    let scheme = cfg.macro_schemes[0];
    let h = cfg.h[0].get();
    let jobs: Vec<(usize, u8)> = (0..setups.len()).flat_map(|i| (0..3).map(move |m| (i, m))).collect();
    let results = par_map(&jobs, |&(i, method)| {
        let s = &setups[i];
        let every = sample_every(cfg, s).expect("checked by prepare");
        let big_h = s.macro_step(cfg.eps_h[0].get());
        let fam_h = cfg.fam_h.expect("validated").get();
        let mut rec = match method {
            0 => {
                let mut r = RunRecord::new(cfg.model, s.eps, splitting_label(cfg.model, order));
                r.h = Some(h);
                r
            }
            1 => sam_record(cfg, s, scheme, big_h, h),
            _ => {
                let mut r = RunRecord::new(cfg.model, s.eps, "fam");
                r.big_h = Some(fam_h);
                r
            }
        };
        rec.modes = cfg.modes.clone();
        let (outcome, wall) = timed(|| -> Result<()> {
            let trace = match method {
                0 => {
                    let n = divide_exactly(s.horizon, h, "splitting step")?;
                    let stride = divide_exactly(every, h, "sampling interval over h")?;
                    let mut samples = Vec::new();
                    Splitter::with_sequence(Arc::clone(&s.problem), order, h, cfg.sequence)
                        .steps_observed(&s.problem.initial_state(), n, stride, |k, u| {
                            samples.push(((k / stride) as f64 * every, u.clone()))
                        })?;
                    rec.n_step = n as u64;
                    mode_trace(s, &cfg.modes, samples)?
                }
                1 => {
                    let mut sc = sam_config(cfg, s, scheme, big_h, h)?;
                    sc.record_all = true;
                    let traj = SamSolver::new(sc)?.integrate()?;
                    rec.n_step = traj.stats.micro_steps;
                    mode_trace(s, &cfg.modes, sampled_states(s, &traj, every)?)?
                }
                _ => {
                    let fc = FamConfig {
                        problem: Arc::clone(&s.problem),
                        n_quad: cfg.n_quad,
                        h_fam: fam_h,
                        horizon: Some(s.horizon),
                        record_every: divide_exactly(every, fam_h, "sampling interval over h_fam")?,
                    };
                    let traj = fam_integrate(&fc)?;
                    rec.n_step = traj.stats.field_evals;
                    mode_trace(s, &cfg.modes, sampled_states(s, &traj, every)?)?
                }
            };
            rec.traces = vec![trace];
            Ok(())
        });
        rec.wall_time_s = wall;
        (rec, outcome)
    });
    let mut out = Collector::new();
    for (rec, outcome) in results {
        out.push(rec, outcome);
    }
    Ok(out.finish(cfg, start.elapsed().as_secs_f64()))
}
