//! Weak dominance on a summary grid via two small linear programs.

use std::collections::HashSet;

use rayon::prelude::*;

use super::lp::{maximize, LpOutcome};
use super::{check_profile_shape, CheckReport, Witness};
use crate::error::Result;
use crate::game::{LargeGame, RandomizedProfile};
use crate::simplex::{simplex_grid, simplex_grid_len, ActionDistribution};

pub const DEFAULT_GRID: usize = 50;
pub const DEFAULT_ADMISSIBLE_TOL: f64 = 1e-7;

/// Feasibility slack for the weak-dominance program; absorbs rounding in
/// payoff differences that are zero in exact arithmetic.
const WEAK_FEAS: f64 = 1e-12;
/// Mixture weights below this are treated as zero in reported witnesses.
const SNAP: f64 = 1e-9;
const MAX_SLICE_POINTS: usize = 20_000;

/// `simplex_grid(K, m)` plus, for every payoff kink at `Σ_{i∈S} τ_i = β`, the
/// points of that slice whose two parts lie on grids of resolution `1/m`.
pub fn dominance_grid(game: &LargeGame, m: usize) -> Result<Vec<ActionDistribution>> {
    let k = game.num_actions();
    let mut points = simplex_grid(k, m)?;
    let mut seen: HashSet<Vec<i64>> = points.iter().map(key).collect();
    let mut slices = Vec::new();
    for ty in game.types() {
        for expr in &ty.payoffs {
            for (_, term) in expr.additive_terms() {
                let vars = term.vars();
                if vars.len() != 1 {
                    continue;
                }
                let var = vars.into_iter().next().expect("one variable");
                if var.indices().len() >= k {
                    continue;
                }
                for beta in term.scalar_kinks() {
                    slices.push((var.indices().to_vec(), beta));
                }
            }
        }
    }
    for (inside, beta) in slices {
        let outside: Vec<usize> = (0..k).filter(|i| !inside.contains(i)).collect();
        let count = simplex_grid_len(inside.len(), m) * simplex_grid_len(outside.len(), m);
        if count > MAX_SLICE_POINTS {
            continue;
        }
        let ins = simplex_grid(inside.len(), m)?;
        let outs = simplex_grid(outside.len(), m)?;
        for p in &ins {
            for q in &outs {
                let mut x = vec![0.0; k];
                for (j, &i) in inside.iter().enumerate() {
                    x[i] = beta * p.get(j);
                }
                for (j, &i) in outside.iter().enumerate() {
                    x[i] = (1.0 - beta) * q.get(j);
                }
                let point = ActionDistribution::normalized(x)?;
                if seen.insert(key(&point)) {
                    points.push(point);
                }
            }
        }
    }
    Ok(points)
}

fn key(p: &ActionDistribution) -> Vec<i64> {
    p.weights()
        .iter()
        .map(|x| (x * 1e11).round() as i64)
        .collect()
}

enum Dominance {
    None {
        strict_value: f64,
    },
    Strict {
        mixture: Vec<f64>,
        value: f64,
    },
    Weak {
        mixture: Vec<f64>,
        surplus: f64,
        at: usize,
    },
}

/// Looks for a mixture over the other actions dominating `a` on `grid`.
/// `diffs[j][g] = u(j, g) - u(a, g)` for the actions `others[j]`.
fn dominance(
    diffs: &[Vec<f64>],
    k: usize,
    a: usize,
    others: &[usize],
    tol: f64,
) -> Result<Dominance> {
    let n = others.len();
    let g = diffs.first().map_or(0, Vec::len);
    let mixture = |xi: &[f64]| {
        let mut full = vec![0.0; k];
        for (j, &o) in others.iter().enumerate() {
            full[o] = if xi[j] < SNAP { 0.0 } else { xi[j] };
        }
        full[a] = (1.0 - full.iter().sum::<f64>()).max(0.0);
        full
    };
    // Phase 1: max z  s.t.  z ≤ Σ_j ξ_j D_jg for every grid point, Σ ξ ≤ 1.
    let mut rows: Vec<Vec<f64>> = (0..g)
        .map(|p| {
            let mut r: Vec<f64> = (0..n).map(|j| -diffs[j][p]).collect();
            r.push(1.0);
            r
        })
        .collect();
    let mut total = vec![1.0; n];
    total.push(0.0);
    rows.push(total);
    let mut b = vec![0.0; g];
    b.push(1.0);
    let mut c = vec![0.0; n];
    c.push(1.0);
    let max_pivots = 50 * (g + n + 2);
    if let LpOutcome::Optimal { x, value } = maximize(&c, &rows, &b, max_pivots)? {
        if value > tol {
            return Ok(Dominance::Strict {
                mixture: mixture(&x[..n]),
                value,
            });
        }
        // Phase 2: max Σ_g Σ_j ξ_j D_jg  s.t.  Σ_j ξ_j D_jg ≥ 0 (up to rounding), Σ ξ ≤ 1.
        let rows2: Vec<Vec<f64>> = (0..g)
            .map(|p| (0..n).map(|j| -diffs[j][p]).collect())
            .chain(std::iter::once(vec![1.0; n]))
            .collect();
        let mut b2 = vec![WEAK_FEAS; g];
        b2.push(1.0);
        let c2: Vec<f64> = diffs.iter().map(|d| d.iter().sum()).collect();
        if let LpOutcome::Optimal { x, .. } = maximize(&c2, &rows2, &b2, max_pivots)? {
            let full = mixture(&x);
            let surplus: Vec<f64> = (0..g)
                .map(|p| (0..n).map(|j| full[others[j]] * diffs[j][p]).sum())
                .collect();
            let min = surplus.iter().copied().fold(f64::INFINITY, f64::min);
            let (at, max) =
                surplus
                    .iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                    );
            if min >= -tol && max > tol {
                return Ok(Dominance::Weak {
                    mixture: full,
                    surplus: max,
                    at,
                });
            }
        }
        return Ok(Dominance::None {
            strict_value: value,
        });
    }
    Err(crate::error::Error::Numerical(
        "dominance program reported unbounded".into(),
    ))
}

/// Flags played actions that are weakly dominated on the dominance grid.
///
/// A pass means no dominance was found at grid resolution `1/m` (with payoff
/// kinks added); dominance visible only between grid points is not excluded.
pub fn check_admissible(
    game: &LargeGame,
    h: &RandomizedProfile,
    m: usize,
    tol: f64,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    if m < 2 {
        return Err(crate::error::Error::arg("admissibility grid needs m >= 2"));
    }
    let mut report = CheckReport::new("admissible");
    report.echo("grid", m);
    report.echo("tol", tol);
    let k = game.num_actions();
    if k == 1 {
        report.note("a single action cannot be dominated");
        return Ok(report);
    }
    let grid = dominance_grid(game, m)?;
    report.echo("grid_points", grid.len());
    let tasks: Vec<(usize, usize)> = (0..game.num_types())
        .flat_map(|t| (0..k).map(move |a| (t, a)))
        .filter(|&(t, a)| h.get(t).get(a) > tol)
        .collect();
    let results: Vec<((usize, usize), Result<Dominance>)> = tasks
        .par_iter()
        .map(|&(t, a)| {
            let others: Vec<usize> = (0..k).filter(|&j| j != a).collect();
            let base: Vec<f64> = grid
                .iter()
                .map(|p| game.payoff(t, a, p.weights()))
                .collect();
            let diffs: Vec<Vec<f64>> = others
                .iter()
                .map(|&j| {
                    grid.iter()
                        .zip(&base)
                        .map(|(p, ua)| game.payoff(t, j, p.weights()) - ua)
                        .collect()
                })
                .collect();
            ((t, a), dominance(&diffs, k, a, &others, tol))
        })
        .collect();
    let mut best_strict = f64::NEG_INFINITY;
    for ((t, a), res) in results {
        let type_id = game.types()[t].id.clone();
        let action = game.actions()[a].clone();
        match res {
            Err(e) => report.inconclusive(format!("{type_id}/{action}: {e}")),
            Ok(Dominance::None { strict_value }) => best_strict = best_strict.max(strict_value),
            Ok(Dominance::Strict { mixture, value }) => {
                best_strict = best_strict.max(value);
                report.fail(Witness {
                    type_id: Some(type_id),
                    action: Some(action),
                    mixture: Some(mixture),
                    value: Some(value),
                    detail: "strictly dominated on the grid by the mixture".into(),
                    ..Witness::default()
                });
            }
            Ok(Dominance::Weak {
                mixture,
                surplus,
                at,
            }) => {
                report.fail(Witness {
                    type_id: Some(type_id),
                    action: Some(action),
                    mixture: Some(mixture),
                    tau: Some(grid[at].weights().to_vec()),
                    value: Some(surplus),
                    detail: "weakly dominated on the grid: never worse, strictly better at tau"
                        .into(),
                    ..Witness::default()
                });
            }
        }
    }
    if best_strict.is_finite() {
        report.margin("max_strict_dominance_value", best_strict);
    }
    if report.passed() {
        report.note(format!(
            "no dominance found on a grid of resolution 1/{m} with payoff breakpoints added"
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn sym(game: &LargeGame, w: &[f64]) -> RandomizedProfile {
        RandomizedProfile::symmetric(
            game.num_types(),
            ActionDistribution::new(w.to_vec()).unwrap(),
        )
    }

    #[test]
    fn path_b_is_weakly_dominated_by_a() {
        let g = fixtures::three_path_game();
        let r = check_admissible(&g, &sym(&g, &[0.5, 1.0 / 3.0, 1.0 / 6.0]), 20, 1e-7).unwrap();
        assert!(r.failed());
        let w = &r.witnesses[0];
        assert_eq!(w.action.as_deref(), Some("b"));
        assert_eq!(w.mixture.as_deref(), Some(&[1.0, 0.0, 0.0][..]));
        let ok = check_admissible(&g, &sym(&g, &[5.0 / 6.0, 0.0, 1.0 / 6.0]), 20, 1e-7).unwrap();
        assert!(ok.passed(), "{ok:?}");
    }

    #[test]
    fn strict_dominance_is_found() {
        let g = LargeGame::from_json_str(
            r#"{"actions":["x","y","z"],"types":[{"id":"t","mass":1,
                "payoff":{"x":"tau(x)","y":"tau(x) + 1","z":"2 - tau(z)"}}]}"#,
        )
        .unwrap();
        let r = check_admissible(&g, &sym(&g, &[1.0, 0.0, 0.0]), 10, 1e-7).unwrap();
        assert!(r.failed());
        assert!(r.witnesses[0].value.unwrap() > 0.5);
    }

    #[test]
    fn kink_slices_are_added() {
        let g = fixtures::abc_game();
        let plain = simplex_grid(3, 7).unwrap().len();
        let grid = dominance_grid(&g, 7).unwrap();
        assert!(grid.len() > plain);
        for beta in [0.2, 0.3, 0.8] {
            assert!(grid.iter().any(|p| (p.get(1) - beta).abs() < 1e-12));
            assert!(grid.iter().any(|p| (p.get(2) - beta).abs() < 1e-12));
        }
    }
}
