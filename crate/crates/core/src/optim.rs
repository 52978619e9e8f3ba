//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Every accepted step strictly decreases the objective, which the pulse
//! synthesizer relies on for its monotone-history guarantee.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Length of the very first (steepest-descent) step.
    pub initial_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 500, grad_tol: 1e-9, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    Callback,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective after each accepted iteration, starting with the initial
    /// point.
    pub history: Vec<f64>,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f`, which returns value and gradient. `stop` is consulted after
/// every accepted iteration with the current point and value.
pub fn minimize<F, S>(x0: Vec<f64>, mut f: F, opts: &LbfgsOptions, mut stop: S) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    S: FnMut(&[f64], f64) -> bool,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let n = x.len();

    if stop(&x, fx) {
        return Minimum { grad_norm: norm(&g), x, value: fx, iterations: 0, history, reason: StopReason::Callback };
    }

    for iter in 0..opts.max_iter {
        let gnorm = norm(&g);
        if gnorm < opts.grad_tol || n == 0 {
            return Minimum { x, value: fx, grad_norm: gnorm, iterations: iter, history, reason: StopReason::GradientTolerance };
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !pairs.is_empty();
            let (dir, alpha0) = if use_memory {
                (two_loop(&g, &pairs), 1.0)
            } else {
                (g.iter().map(|v| -v).collect::<Vec<_>>(), opts.initial_step / gnorm)
            };
            let slope = dot(&dir, &g);
            if slope >= 0.0 {
                pairs.clear();
                continue;
            }
            accepted = wolfe_search(&mut f, &x, fx, slope, &dir, alpha0);
            if accepted.is_some() {
                break;
            }
            pairs.clear();
        }

        let Some((xn, fnew, gn)) = accepted else {
            return Minimum { x, value: fx, grad_norm: gnorm, iterations: iter, history, reason: StopReason::LineSearchFailed };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if stop(&x, fx) {
            return Minimum { grad_norm: norm(&g), x, value: fx, iterations: iter + 1, history, reason: StopReason::Callback };
        }
    }
    Minimum { grad_norm: norm(&g), x, value: fx, iterations: opts.max_iter, history, reason: StopReason::MaxIterations }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_EVALS: usize = 40;

type Point = (Vec<f64>, f64, Vec<f64>);

/// Strong-Wolfe line search along `dir`. Falls back to the best point with
/// sufficient decrease if the curvature condition cannot be met within the
/// evaluation budget; only points strictly below `fx` are returned.
fn wolfe_search<F>(f: &mut F, x: &[f64], fx: f64, slope: f64, dir: &[f64], alpha0: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut eval = |alpha: f64| -> (Point, f64) {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let (v, g) = f(&trial);
        let dphi = dot(&g, dir);
        ((trial, v, g), dphi)
    };
    let armijo = |alpha: f64, v: f64| v.is_finite() && v <= fx + C1 * alpha * slope && v < fx;
    let curvature = |dphi: f64| dphi.abs() <= -C2 * slope;

    // bracketing phase
    let (mut lo, mut f_lo, mut d_lo, mut p_lo) = (0.0, fx, slope, None::<Point>);
    let mut alpha = alpha0;
    let mut evals = 0;
    let (mut hi, mut f_hi, mut d_hi);
    loop {
        let (p, dphi) = eval(alpha);
        evals += 1;
        let v = p.1;
        if !armijo(alpha, v) || v >= f_lo {
            (hi, f_hi, d_hi) = (alpha, v, dphi);
            break;
        }
        if curvature(dphi) {
            return Some(p);
        }
        if dphi >= 0.0 {
            (hi, f_hi, d_hi) = (lo, f_lo, d_lo);
            (lo, f_lo, d_lo, p_lo) = (alpha, v, dphi, Some(p));
            break;
        }
        (lo, f_lo, d_lo, p_lo) = (alpha, v, dphi, Some(p));
        if evals >= MAX_EVALS {
            return p_lo;
        }
        alpha *= 2.0;
    }

    // zoom phase: `lo` always satisfies sufficient decrease (or is 0)
    while evals < MAX_EVALS {
        let width = hi - lo;
        let mut a = cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi);
        let (a_min, a_max) = (lo.min(hi), lo.max(hi));
        let margin = 0.1 * width.abs();
        if !a.is_finite() || a < a_min + margin || a > a_max - margin {
            a = 0.5 * (lo + hi);
        }
        if width.abs() < 1e-16 * lo.abs().max(1e-300) {
            break;
        }
        let (p, dphi) = eval(a);
        evals += 1;
        let v = p.1;
        if !armijo(a, v) || v >= f_lo {
            (hi, f_hi, d_hi) = (a, v, dphi);
        } else {
            if curvature(dphi) {
                return Some(p);
            }
            if dphi * (hi - lo) >= 0.0 {
                (hi, f_hi, d_hi) = (lo, f_lo, d_lo);
            }
            (lo, f_lo, d_lo, p_lo) = (a, v, dphi, Some(p));
        }
    }
    p_lo
}

/// Minimizer of the cubic interpolating values and slopes at `a` and `b`.
fn cubic_minimizer(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = pairs.back().unwrap();
    let gamma = dot(s, y) / dot(y, y);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}
