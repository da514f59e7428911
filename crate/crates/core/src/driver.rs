//! Time loop producing a diagnostics series.

use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;
use crate::kinetic::{vmfp_step, ForceOptions, SimState};
use crate::phase_space::ExponentSet;
use crate::picard::{picard_sequence, LinearConfig, PicardOutcome};
use crate::scenario::{make_initial, Config};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
}

/// Parameters of a time loop with `dt = dx`.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub steps: usize,
    pub output_every: usize,
    pub opts: ForceOptions,
    pub exps: ExponentSet,
}

impl Schedule {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            steps: cfg.steps(),
            output_every: cfg.run.output_every,
            opts: cfg.force_options(),
            exps: cfg.exponents(),
        }
    }
}

/// Advance `initial` by `sched.steps` steps, recording diagnostics at step 0,
/// every `output_every` steps and at the end. `observe(prev, next)` sees
/// every step.
pub fn run(initial: SimState, sched: &Schedule, mut observe: impl FnMut(&SimState, &SimState)) -> Result<RunOutput> {
    let dt = initial.f.grid.dx;
    let first = DiagnosticsRecord::compute(&initial, None, &sched.exps)?;
    let mut records = vec![first];
    let mut recorded = initial.clone();
    let mut cur = initial;
    for n in 1..=sched.steps {
        let mut next = vmfp_step(&cur, dt, &sched.opts)?;
        next.t = n as f64 * dt;
        observe(&cur, &next);
        cur = next;
        if n % sched.output_every == 0 || n == sched.steps {
            let rec = DiagnosticsRecord::compute(&cur, Some((&recorded, records.last().unwrap())), &sched.exps)?;
            records.push(rec);
            recorded = cur.clone();
        }
    }
    Ok(RunOutput {
        records,
        final_state: cur,
    })
}

/// [`run`] from the configured initial data.
pub fn simulate(cfg: &Config, observe: impl FnMut(&SimState, &SimState)) -> Result<RunOutput> {
    run(make_initial(cfg)?, &Schedule::from_config(cfg), observe)
}

/// Linearized-solve settings matching the configured run.
pub fn linear_config(cfg: &Config) -> LinearConfig {
    LinearConfig {
        dt: cfg.dt(),
        friction: cfg.options.friction,
        cfl_guard: cfg.tolerances.cfl_guard,
        neutral_tol: cfg.tolerances.neutral_tol,
    }
}

/// Picard iteration over `[0, picard.t_end]` from the configured initial
/// data. The report is returned whether or not the iteration converged.
pub fn picard_run(cfg: &Config) -> Result<PicardOutcome> {
    let s0 = make_initial(cfg)?;
    picard_sequence(
        &s0.f,
        &s0.bg,
        &s0.fields,
        cfg.picard_steps(),
        &linear_config(cfg),
        &cfg.exponents(),
        cfg.picard.n_max,
        cfg.picard.tol,
    )
}
