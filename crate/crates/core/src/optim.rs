//! Limited-memory BFGS for maximizing a smooth objective.
//!
//! Steps are only accepted when they satisfy the Armijo condition, so the
//! objective never decreases from one iterate to the next.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximizes `f` starting from `x0`.
///
/// `value` evaluates the objective alone (used during the line search) and
/// `value_grad` evaluates objective and gradient at accepted points. Both
/// may return non-finite values, which the line search treats as rejection.
pub(crate) fn maximize<V, G>(
    mut value: V,
    mut value_grad: G,
    x0: Vec<f64>,
    cfg: LbfgsConfig,
) -> Option<LbfgsOutcome>
where
    V: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = value_grad(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // history of (s, y, 1 / yᵀs) for the minimization of −f
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = norm(&g) < cfg.grad_tol;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;

        // two-loop recursion on q = ∇(−f)
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / norm(&g).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope > 0.0) {
            history.clear();
            let scale = 1.0 / norm(&g).max(1.0);
            dir = g.iter().map(|v| v * scale).collect();
            slope = dot(&dir, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let ft = value(&trial);
            if ft.is_finite() && ft >= f + ARMIJO_C1 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(x_new) = accepted else {
            break;
        };
        let (f_new, g_new) = value_grad(&x_new);
        if !f_new.is_finite() || g_new.iter().any(|v| !v.is_finite()) {
            break;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y = ∇(−f)(x_new) − ∇(−f)(x)
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = f_new - f;
        x = x_new;
        f = f_new;
        g = g_new;
        converged = norm(&g) < cfg.grad_tol;
        if !converged && improvement <= 1e-14 * (1.0 + f.abs()) {
            break;
        }
    }

    Some(LbfgsOutcome {
        grad_norm: norm(&g),
        x,
        value: f,
        iterations,
        converged,
    })
}
