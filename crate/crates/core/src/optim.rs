//! Derivative-free simplex minimization: Nelder–Mead from `argmin` with
//! dimension-adaptive coefficients, plus an evaluation budget and a stall
//! rule on top.

use std::cell::RefCell;
use std::rc::Rc;

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    /// Hard cap on objective evaluations for this run.
    pub max_evaluations: usize,
    /// Stop once the best value improved by less than `stall_tolerance`
    /// over this many evaluations.
    pub stall_steps: usize,
    pub stall_tolerance: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            stall_steps: 200,
            stall_tolerance: 1e-12,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug)]
enum Halt {
    Budget,
    Stalled,
}

struct Tracker {
    best_x: Vec<f64>,
    best: f64,
    evaluations: usize,
    reference: f64,
    since_improvement: usize,
    init_evaluations: usize,
    halt: Option<Halt>,
}

struct Problem<'a, F> {
    f: &'a F,
    opts: &'a SimplexOptions,
    tracker: Rc<RefCell<Tracker>>,
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Problem<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let mut t = self.tracker.borrow_mut();
        if t.evaluations >= self.opts.max_evaluations {
            t.halt = Some(Halt::Budget);
            return Err(ArgminError::msg("evaluation budget exhausted"));
        }
        t.evaluations += 1;
        let v = (self.f)(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v < t.best {
            t.best = v;
            t.best_x.clone_from(x);
        }
        if t.best < t.reference - self.opts.stall_tolerance {
            t.reference = t.best;
            t.since_improvement = 0;
        } else {
            t.since_improvement += 1;
            // argmin unwraps costs while scoring the initial simplex
            if t.evaluations > t.init_evaluations && t.since_improvement >= self.opts.stall_steps {
                t.halt = Some(Halt::Stalled);
                return Err(ArgminError::msg("stalled"));
            }
        }
        Ok(v)
    }
}

/// Minimizes `f` starting from `x0`. Non-finite objective values are treated
/// as `+∞`. The best point ever evaluated is returned.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "cannot minimize over zero parameters");
    let nf = n as f64;

    let mut simplex = vec![x0.to_vec()];
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += if v[k].abs() > 1e-8 {
            opts.initial_step * v[k].abs().max(0.5)
        } else {
            opts.initial_step
        };
        simplex.push(v);
    }

    let tracker = Rc::new(RefCell::new(Tracker {
        best_x: x0.to_vec(),
        best: f64::INFINITY,
        evaluations: 0,
        reference: f64::INFINITY,
        since_improvement: 0,
        init_evaluations: n + 1,
        halt: None,
    }));
    if opts.max_evaluations < n + 1 {
        // Too small to even score the simplex; report the best vertex seen.
        let mut t = tracker.borrow_mut();
        for v in simplex.iter().take(opts.max_evaluations) {
            let y = f(v);
            t.evaluations += 1;
            if y.is_finite() && y < t.best {
                t.best = y;
                t.best_x.clone_from(v);
            }
        }
        return SimplexResult {
            x: t.best_x.clone(),
            value: t.best,
            evaluations: t.evaluations,
            converged: false,
        };
    }
    let problem = Problem {
        f: &f,
        opts,
        tracker: Rc::clone(&tracker),
    };
    // Gao & Han coefficients; all lie inside argmin's accepted ranges for n ≥ 2.
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.stall_tolerance * 1e-4)
        .and_then(|s| s.with_alpha(1.0))
        .and_then(|s| s.with_gamma((1.0 + 2.0 / nf).max(1.0 + 1e-9)))
        .and_then(|s| s.with_rho((0.75 - 1.0 / (2.0 * nf)).clamp(1e-3, 0.5)))
        .and_then(|s| s.with_sigma((1.0 - 1.0 / nf).clamp(1e-3, 1.0 - 1e-9)))
        .expect("valid simplex coefficients");
    let outcome = Executor::new(problem, solver)
        .configure(|state| state.max_iters(u64::MAX))
        .run();

    let t = tracker.borrow();
    let converged = match (&outcome, &t.halt) {
        (_, Some(Halt::Stalled)) => true,
        (_, Some(Halt::Budget)) => false,
        (Ok(_), None) => true,
        (Err(_), None) => false,
    };
    SimplexResult {
        x: t.best_x.clone(),
        value: t.best,
        evaluations: t.evaluations,
        converged,
    }
}
