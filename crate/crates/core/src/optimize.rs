//! Quadratic-penalty minimization with multiplier escalation and
//! multi-restart, the search engine behind the rate-distortion and K
//! estimators.
//!
//! An objective is `params -> (value, violation)` with `violation >= 0`;
//! each stage minimizes `value + mu * violation^2` by gradient descent
//! with central-difference gradients and backtracking line search,
//! warm-starting the next stage. If the final iterate is still infeasible,
//! a restoration phase descends on the raw violation (whose gradient does
//! not vanish quadratically near feasibility, unlike the squared
//! penalty's). Restarts are independent and reduce by an
//! order-independent minimum, so outcomes are deterministic for a fixed
//! seed stream regardless of scheduling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::exec;
use crate::state::rng_stream;

/// How the two objective components are folded into the descent scalar.
#[derive(Debug, Clone, Copy)]
pub enum Scalarization {
    /// value + mu * violation^2
    Penalized { mu: f64 },
    /// raw violation only (feasibility restoration)
    ViolationOnly,
}

impl Scalarization {
    pub fn fold(&self, value: f64, violation: f64) -> f64 {
        match self {
            Scalarization::Penalized { mu } => value + mu * violation * violation,
            Scalarization::ViolationOnly => violation,
        }
    }
}

/// A penalized objective. Implementors may override `gradient` when the
/// parameter vector has structure worth exploiting (e.g. a block on which
/// the value component is constant).
pub trait PenaltyObjective: Sync {
    fn n_params(&self) -> usize;

    /// (value, violation >= 0)
    fn eval(&self, p: &[f64]) -> (f64, f64);

    fn scalar(&self, p: &[f64], s: Scalarization) -> f64 {
        let (v, viol) = self.eval(p);
        s.fold(v, viol)
    }

    /// Central-difference gradient of the folded scalar; returns the
    /// number of objective evaluations spent.
    fn gradient(&self, p: &[f64], s: Scalarization, h: f64, grad: &mut [f64]) -> usize {
        let mut xp = p.to_vec();
        for i in 0..p.len() {
            let xi = p[i];
            xp[i] = xi + h;
            let fp = self.scalar(&xp, s);
            xp[i] = xi - h;
            let fm = self.scalar(&xp, s);
            xp[i] = xi;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        2 * p.len()
    }
}

/// Plain-closure objective with the default finite-difference gradient.
pub struct FnObjective<F: Fn(&[f64]) -> (f64, f64) + Sync> {
    pub f: F,
    pub n: usize,
}

impl<F: Fn(&[f64]) -> (f64, f64) + Sync> PenaltyObjective for FnObjective<F> {
    fn n_params(&self) -> usize {
        self.n
    }

    fn eval(&self, p: &[f64]) -> (f64, f64) {
        (self.f)(p)
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyOptions {
    /// Multiplier schedule; the default follows 10^1..10^6.
    pub mu_schedule: Vec<f64>,
    /// Gradient-descent iterations per stage.
    pub max_iters: usize,
    /// Iteration budget for the restoration phase.
    pub restore_iters: usize,
    /// Central-difference step.
    pub grad_step: f64,
    /// Feasibility tolerance on the raw violation.
    pub feastol: f64,
    /// Relative objective-decrease tolerance for stage convergence.
    pub ftol: f64,
    /// Run the violation-only restoration phase if still infeasible.
    pub restore: bool,
    /// Standard deviation of random initial generator coordinates.
    pub init_scale: f64,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        PenaltyOptions {
            mu_schedule: vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            max_iters: 60,
            restore_iters: 800,
            grad_step: 1e-5,
            feastol: 1e-6,
            ftol: 1e-10,
            restore: true,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub violation: f64,
    pub feasible: bool,
    pub evals: usize,
}

/// Descend the folded scalar from `x`; stops on gradient stall, tiny
/// relative decrease, or the iteration budget. `target` short-circuits
/// restoration once the violation is well under tolerance.
fn descend<O: PenaltyObjective + ?Sized>(
    obj: &O,
    mut x: Vec<f64>,
    s: Scalarization,
    max_iters: usize,
    grad_step: f64,
    ftol: f64,
    target: Option<f64>,
    evals: &mut usize,
) -> Vec<f64> {
    let mut fx = obj.scalar(&x, s);
    *evals += 1;
    if let Some(t) = target {
        if fx <= t {
            return x;
        }
    }
    let mut g = vec![0.0; x.len()];
    let mut prev_x: Option<Vec<f64>> = None;
    let mut prev_g: Option<Vec<f64>> = None;
    let mut alpha: f64 = 0.25;
    let mut stall = 0usize;
    for _ in 0..max_iters {
        *evals += obj.gradient(&x, s, grad_step, &mut g);
        let gnorm_sq: f64 = g.iter().map(|v| v * v).sum();
        if gnorm_sq.sqrt() < 1e-9 {
            break;
        }
        // Barzilai–Borwein trial step (curvature along the last move),
        // safeguarded by the Armijo backtracking below.
        if let (Some(px), Some(pg)) = (&prev_x, &prev_g) {
            let mut sy = 0.0;
            let mut yy = 0.0;
            for i in 0..x.len() {
                let si = x[i] - px[i];
                let yi = g[i] - pg[i];
                sy += si * yi;
                yy += yi * yi;
            }
            if sy > 0.0 && yy > 0.0 {
                alpha = (sy / yy).clamp(1e-8, 1e3);
            }
        }
        prev_x = Some(x.clone());
        prev_g = Some(g.clone());

        let mut step = alpha;
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let fc = obj.scalar(&cand, s);
            *evals += 1;
            if fc <= fx - 1e-4 * step * gnorm_sq {
                let decrease = fx - fc;
                x = cand;
                fx = fc;
                alpha = step;
                accepted = true;
                if decrease < ftol * (1.0 + fx.abs()) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        if let Some(t) = target {
            if fx <= t {
                break;
            }
        }
        if !accepted || stall >= 3 {
            break;
        }
    }
    x
}

/// Minimize `value` subject to `violation <= feastol` by escalating
/// quadratic penalties, then restoring feasibility if needed.
pub fn penalty_minimize<O: PenaltyObjective + ?Sized>(
    obj: &O,
    x0: Vec<f64>,
    opts: &PenaltyOptions,
) -> PenaltyResult {
    let mut evals = 0usize;
    let mut x = x0;
    for &mu in &opts.mu_schedule {
        x = descend(
            obj,
            x,
            Scalarization::Penalized { mu },
            opts.max_iters,
            opts.grad_step,
            opts.ftol,
            None,
            &mut evals,
        );
        let (_, viol) = obj.eval(&x);
        evals += 1;
        if viol <= opts.feastol * 0.01 {
            break;
        }
    }
    let (_, viol) = obj.eval(&x);
    evals += 1;
    if viol > opts.feastol && opts.restore {
        x = descend(
            obj,
            x,
            Scalarization::ViolationOnly,
            opts.restore_iters,
            opts.grad_step,
            0.0,
            Some(opts.feastol * 1e-3),
            &mut evals,
        );
    }
    let (value, violation) = obj.eval(&x);
    evals += 1;
    PenaltyResult {
        feasible: violation <= opts.feastol,
        params: x,
        value,
        violation,
        evals,
    }
}

/// Random initial generator coordinates for restart `r` (restart 0 starts
/// from the zero generator).
pub fn restart_init(n_params: usize, seed: u64, restart: usize, scale: f64) -> Vec<f64> {
    if restart == 0 {
        return vec![0.0; n_params];
    }
    let mut rng = rng_stream(seed, restart as u64);
    (0..n_params)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MultistartOutcome {
    pub best: PenaltyResult,
    pub restarts: usize,
    pub feasible_count: usize,
    pub total_evals: usize,
}

/// Run `restarts` independent penalty minimizations and keep the best:
/// feasible beats infeasible, then lower value, then lower violation,
/// then lower restart index. The reduction is order-independent.
pub fn multistart<O: PenaltyObjective>(
    obj: &O,
    restarts: usize,
    seed: u64,
    opts: &PenaltyOptions,
) -> MultistartOutcome {
    assert!(restarts >= 1, "need at least one restart");
    let results = exec::run_indexed(restarts, |r| {
        let x0 = restart_init(obj.n_params(), seed, r, opts.init_scale);
        penalty_minimize(obj, x0, opts)
    });
    let total_evals = results.iter().map(|r| r.evals).sum();
    let feasible_count = results.iter().filter(|r| r.feasible).count();
    let mut best_idx = 0usize;
    for i in 1..results.len() {
        let (a, b) = (&results[i], &results[best_idx]);
        let better = match (a.feasible, b.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => {
                a.value < b.value - 1e-15
                    || ((a.value - b.value).abs() <= 1e-15 && a.violation < b.violation)
            }
            (false, false) => a.violation < b.violation,
        };
        if better {
            best_idx = i;
        }
    }
    MultistartOutcome {
        best: results[best_idx].clone(),
        restarts,
        feasible_count,
        total_evals,
    }
}

/// Multi-restart minimization of the raw violation alone (used for the
/// minimum-distortion search, where the violation is the objective).
pub fn multistart_min_violation<O: PenaltyObjective>(
    obj: &O,
    restarts: usize,
    seed: u64,
    opts: &PenaltyOptions,
) -> MultistartOutcome {
    assert!(restarts >= 1, "need at least one restart");
    let results = exec::run_indexed(restarts, |r| {
        let x0 = restart_init(obj.n_params(), seed, r, opts.init_scale);
        let mut evals = 0usize;
        let x = descend(
            obj,
            x0,
            Scalarization::ViolationOnly,
            opts.max_iters + opts.restore_iters,
            opts.grad_step,
            opts.ftol,
            None,
            &mut evals,
        );
        let (value, violation) = obj.eval(&x);
        evals += 1;
        PenaltyResult { feasible: violation <= opts.feastol, params: x, value, violation, evals }
    });
    let total_evals = results.iter().map(|r| r.evals).sum();
    let feasible_count = results.iter().filter(|r| r.feasible).count();
    let best_idx = (0..results.len())
        .min_by(|&a, &b| {
            results[a]
                .violation
                .partial_cmp(&results[b].violation)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    MultistartOutcome {
        best: results[best_idx].clone(),
        restarts,
        feasible_count,
        total_evals,
    }
}

/// Closure-based multistart (the default finite-difference gradient).
pub fn multistart_minimize<F>(
    obj: F,
    n_params: usize,
    restarts: usize,
    seed: u64,
    opts: &PenaltyOptions,
) -> MultistartOutcome
where
    F: Fn(&[f64]) -> (f64, f64) + Sync + Send,
{
    multistart(&FnObjective { f: obj, n: n_params }, restarts, seed, opts)
}
