//! Potential functions: `u_t(a_m, τ) - u_t(a_l, τ) = P(a_m, τ) - P(a_l, τ)`.

use serde::Serialize;

use super::{CheckReport, Verdict, Witness};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::game::LargeGame;
use crate::simplex::{simplex_grid, ActionDistribution};

fn check_grid(m: usize) -> Result<()> {
    if m < 1 {
        return Err(Error::arg("potential grid needs m >= 1"));
    }
    Ok(())
}

/// Worst violation of the potential identity over all types and action
/// pairs, given `P` at each grid point; `p[g][k]` is `P(a_k, grid[g])`.
fn worst_violation(
    game: &LargeGame,
    grid: &[ActionDistribution],
    p: &[Vec<f64>],
) -> (f64, Option<(usize, usize, usize, usize)>) {
    let k = game.num_actions();
    let mut worst = (0.0, None);
    for (g, point) in grid.iter().enumerate() {
        for t in 0..game.num_types() {
            let u = game.payoffs(t, point.weights());
            for a in 0..k {
                for b in a + 1..k {
                    let v = ((u[a] - u[b]) - (p[g][a] - p[g][b])).abs();
                    if v > worst.0 {
                        worst = (v, Some((t, a, b, g)));
                    }
                }
            }
        }
    }
    worst
}

fn report_from(
    check: &str,
    game: &LargeGame,
    grid: &[ActionDistribution],
    p: &[Vec<f64>],
    m: usize,
    tol: f64,
) -> CheckReport {
    let mut report = CheckReport::new(check);
    report.echo("grid", m);
    report.echo("tol", tol);
    let (v, at) = worst_violation(game, grid, p);
    report.margin("max_violation", v);
    if v > tol {
        let (t, a, b, g) = at.expect("a positive violation has a location");
        report.fail(Witness {
            type_id: Some(game.types()[t].id.clone()),
            action: Some(game.actions()[a].clone()),
            other_action: Some(game.actions()[b].clone()),
            tau: Some(grid[g].weights().to_vec()),
            value: Some(v),
            detail: "payoff difference and potential difference disagree".into(),
            ..Witness::default()
        });
    }
    report
}

/// Checks that `potential[k]` (an expression in the summary) is a potential.
pub fn check_potential(
    game: &LargeGame,
    potential: &[Expr],
    m: usize,
    tol: f64,
) -> Result<CheckReport> {
    check_grid(m)?;
    if potential.len() != game.num_actions() {
        return Err(Error::arg(format!(
            "potential has {} entries for {} actions",
            potential.len(),
            game.num_actions()
        )));
    }
    let grid = simplex_grid(game.num_actions(), m)?;
    let p: Vec<Vec<f64>> = grid
        .iter()
        .map(|g| potential.iter().map(|e| e.eval(g.weights())).collect())
        .collect();
    Ok(report_from("potential", game, &grid, &p, m, tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialSearch {
    pub grid: Vec<ActionDistribution>,
    /// `P(a_k, grid[g])` with `P(a_1, ·) = 0`, when a potential was found.
    pub values: Option<Vec<Vec<f64>>>,
    pub report: CheckReport,
}

/// Builds the candidate potential from the first type's payoff differences
/// and keeps it if every other type agrees on the grid.
pub fn find_potential(game: &LargeGame, m: usize, tol: f64) -> Result<PotentialSearch> {
    check_grid(m)?;
    let grid = simplex_grid(game.num_actions(), m)?;
    let p: Vec<Vec<f64>> = grid
        .iter()
        .map(|g| {
            let u = game.payoffs(0, g.weights());
            u.iter().map(|x| x - u[0]).collect()
        })
        .collect();
    let mut report = report_from("find_potential", game, &grid, &p, m, tol);
    report.echo("reference_type", &game.types()[0].id);
    let values = (report.verdict == Verdict::Pass).then_some(p);
    Ok(PotentialSearch {
        grid,
        values,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_type_games_are_potential_games() {
        let g = fixtures::three_path_game();
        let own: Vec<Expr> = g.types()[0].payoffs.clone();
        assert!(check_potential(&g, &own, 20, 1e-12).unwrap().passed());
        assert!(find_potential(&g, 20, 1e-12).unwrap().values.is_some());
    }

    #[test]
    fn heterogeneous_scaling_breaks_the_potential() {
        let g = LargeGame::from_json_str(
            r#"{"actions":["a","b"],"types":[
                {"id":"t1","mass":"1/2","payoff":{"a":"tau(a)","b":"tau(b)"}},
                {"id":"t2","mass":"1/2","payoff":{"a":"2*tau(a)","b":"2*tau(b)"}}]}"#,
        )
        .unwrap();
        let own: Vec<Expr> = g.types()[0].payoffs.clone();
        let r = check_potential(&g, &own, 10, 1e-9).unwrap();
        assert!(r.failed());
        assert_eq!(r.witnesses[0].type_id.as_deref(), Some("t2"));
        assert!(find_potential(&g, 10, 1e-9).unwrap().values.is_none());
    }
}
