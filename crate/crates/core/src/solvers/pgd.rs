//! Projected gradient descent on a truncated simplex.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::{linf, ActionDistribution, TruncatedSimplex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PgOptions {
    pub max_iters: usize,
    /// Stop when `‖x - P(x - ∇f(x))‖∞` falls below this.
    pub tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Below this residual, a failed line search or `STALL_ITERS` iterations
    /// without a new best residual count as convergence. Flat costs push the
    /// decrease under the rounding in the edge loads long before `tol`.
    pub stall_tol: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            max_iters: 100_000,
            tol: 1e-12,
            armijo: 1e-4,
            stall_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PgOutcome {
    pub x: ActionDistribution,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Objective after each accepted step, starting with the initial point and
    /// accumulated from the computed decreases.
    pub trace: Vec<f64>,
}

const MAX_STEP: f64 = 1e4;
const MIN_STEP: f64 = 1e-18;
const STALL_ITERS: usize = 100;

/// A differentiable objective.
pub struct Objective<'a> {
    pub value: &'a dyn Fn(&[f64]) -> f64,
    pub grad: &'a dyn Fn(&[f64]) -> Vec<f64>,
    /// `f(y) - f(x)` computed without cancellation, when available. Near the
    /// optimum the decrease is far below the rounding error of `f` itself.
    pub diff: Option<&'a dyn Fn(&[f64], &[f64]) -> f64>,
}

/// Minimises `f` over `set` from `start` with Armijo backtracking along the
/// projection arc. Each line search starts from the Barzilai-Borwein step of
/// the previous move, so every accepted step still decreases `f`.
pub fn projected_gradient(
    set: &TruncatedSimplex,
    start: &[f64],
    objective: &Objective<'_>,
    opts: &PgOptions,
    solver: &'static str,
) -> Result<PgOutcome> {
    let f = objective.value;
    let grad = objective.grad;
    let diff = |x: &[f64], y: &[f64]| match objective.diff {
        Some(d) => d(x, y),
        None => f(y) - f(x),
    };
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::arg("solver needs tol > 0 and max_iters >= 1"));
    }
    let mut x = set.project(start)?;
    let mut fx = f(x.weights());
    let mut trace = vec![fx];
    let mut step: f64 = 1.0;
    let mut residual = f64::INFINITY;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut best: Option<(usize, f64, ActionDistribution, f64)> = None;
    let stalled =
        |best: Option<(usize, f64, ActionDistribution, f64)>, it: usize, trace: Vec<f64>| {
            best.map(|(_, r, x, fx)| PgOutcome {
                value: fx,
                x,
                iterations: it,
                residual: r,
                trace,
            })
        };
    for it in 0..opts.max_iters {
        let g = grad(x.weights());
        if let Some((px, pg)) = prev.take() {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..g.len() {
                let dx = x.weights()[i] - px[i];
                ss += dx * dx;
                sy += dx * (g[i] - pg[i]);
            }
            step = if sy > 0.0 { ss / sy } else { 2.0 * step };
            step = step.clamp(MIN_STEP, MAX_STEP);
        }
        let trial: Vec<f64> = x.weights().iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
        residual = linf(x.weights(), set.project(&trial)?.weights());
        if residual <= opts.tol {
            return Ok(PgOutcome {
                value: fx,
                x,
                iterations: it,
                residual,
                trace,
            });
        }
        if best.as_ref().is_none_or(|b| residual < b.1) {
            best = Some((it, residual, x.clone(), fx));
        }
        let since_best = it - best.as_ref().map_or(it, |b| b.0);
        if since_best >= STALL_ITERS && residual <= opts.stall_tol {
            return Ok(stalled(best, it, trace).expect("best is set"));
        }
        let mut accepted = None;
        while step >= MIN_STEP {
            let moved: Vec<f64> = x
                .weights()
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi - step * gi)
                .collect();
            let y = set.project(&moved)?;
            let change = diff(x.weights(), y.weights());
            let decrease: f64 = g
                .iter()
                .zip(y.weights().iter().zip(x.weights()))
                .map(|(gi, (yi, xi))| gi * (yi - xi))
                .sum();
            if change <= opts.armijo * decrease && change <= 0.0 {
                accepted = Some((y, fx + change));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((y, fy)) => {
                prev = Some((x.into_inner(), g));
                x = y;
                fx = fy;
                trace.push(fx);
            }
            None if residual <= opts.stall_tol => {
                return Ok(stalled(best, it, trace).expect("best is set"));
            }
            None => break,
        }
    }
    Err(Error::NotConverged {
        solver,
        iterations: opts.max_iters.min(trace.len()),
        residual,
        best: x.into_inner(),
        history: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_separable_quadratic() {
        // min Σ (x_i - c_i)^2 over the simplex is the projection of c.
        let c = [0.9, 0.6, -0.5];
        let set = TruncatedSimplex::new(3, 0.0).unwrap();
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let g = |x: &[f64]| {
            x.iter()
                .zip(&c)
                .map(|(a, b)| 2.0 * (a - b))
                .collect::<Vec<_>>()
        };
        let obj = Objective {
            value: &f,
            grad: &g,
            diff: None,
        };
        let out =
            projected_gradient(&set, &[1.0 / 3.0; 3], &obj, &PgOptions::default(), "test").unwrap();
        assert!(linf(out.x.weights(), &[0.65, 0.35, 0.0]) < 1e-10);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn reports_non_convergence_with_best_iterate() {
        let set = TruncatedSimplex::new(2, 0.0).unwrap();
        let f = |x: &[f64]| (x[0] - 0.3).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 0.3), 0.0];
        let opts = PgOptions {
            max_iters: 1,
            ..PgOptions::default()
        };
        let obj = Objective {
            value: &f,
            grad: &g,
            diff: None,
        };
        match projected_gradient(&set, &[1.0, 0.0], &obj, &opts, "test") {
            Err(Error::NotConverged { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
