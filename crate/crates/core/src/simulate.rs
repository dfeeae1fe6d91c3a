//! Finite populations sampled from a randomized profile: empirical summaries,
//! convergence rates, and equilibrium checks on the realized pure profile.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::checkers::{check_eps_rpe, check_nash, CheckReport, Verdict, Witness};
use crate::error::{Error, Result};
use crate::game::{
    IntegrationConfig, LargeGame, PayoffType, PerturbationTemplate, RandomizedProfile,
};
use crate::simplex::{derive_seed, linf, rng_from_seed, simplex_grid, ActionDistribution};

/// A pure profile for `n` players with its empirical summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Realization {
    pub n: usize,
    pub seed: u64,
    /// `(type index, action index)` per player.
    pub players: Vec<(u32, u32)>,
    /// `counts[t][k]`: players of type `t` choosing action `k`.
    pub counts: Vec<Vec<usize>>,
    /// Per-action counts divided by `n`.
    pub summary: ActionDistribution,
}

impl Realization {
    /// `player_id,type_id,action` rows.
    pub fn to_csv(&self, game: &LargeGame) -> String {
        let mut out = String::from("player_id,type_id,action\n");
        for (i, (t, a)) in self.players.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{}",
                game.types()[*t as usize].id,
                game.actions()[*a as usize]
            );
        }
        out
    }
}

/// Largest-remainder apportionment of `n` players to the type masses.
pub fn apportion(masses: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = masses.iter().map(|m| m * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Draws every player's action independently from its type's strategy.
pub fn sample_realization(
    game: &LargeGame,
    h: &RandomizedProfile,
    n: usize,
    seed: u64,
) -> Result<Realization> {
    if n == 0 {
        return Err(Error::arg("a realization needs at least one player"));
    }
    if h.num_types() != game.num_types() || h.num_actions() != game.num_actions() {
        return Err(Error::arg("profile does not match the game"));
    }
    let masses: Vec<f64> = game.types().iter().map(|t| t.mass).collect();
    let per_type = apportion(&masses, n);
    let k = game.num_actions();
    let mut rng = rng_from_seed(seed);
    let mut players = Vec::with_capacity(n);
    let mut counts = vec![vec![0usize; k]; game.num_types()];
    for (t, &count) in per_type.iter().enumerate() {
        let dist = WeightedIndex::new(h.get(t).weights())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        for _ in 0..count {
            let a = dist.sample(&mut rng);
            counts[t][a] += 1;
            players.push((t as u32, a as u32));
        }
    }
    let totals: Vec<f64> = (0..k)
        .map(|a| counts.iter().map(|c| c[a]).sum::<usize>() as f64 / n as f64)
        .collect();
    Ok(Realization {
        n,
        seed,
        players,
        counts,
        summary: ActionDistribution::new(totals)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EllnRow {
    pub n: usize,
    pub trial: usize,
    pub linf_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EllnReport {
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<EllnRow>,
    /// `(N, mean ∞-error over trials)`.
    pub means: Vec<(usize, f64)>,
    /// Least-squares slope of log mean error against log N; absent when some
    /// mean error is zero or fewer than two sizes were run.
    pub slope: Option<f64>,
}

impl EllnReport {
    /// `N,trial,linf_error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,trial,linf_error\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e}", r.n, r.trial, r.linf_error);
        }
        out
    }
}

/// Mean `‖empirical - s(h)‖∞` over independent trials for each population size.
pub fn elln_report(
    game: &LargeGame,
    h: &RandomizedProfile,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<EllnReport> {
    if sizes.is_empty() || trials == 0 {
        return Err(Error::arg("ELLN report needs population sizes and trials"));
    }
    let target = game.societal_summary(h)?;
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..trials).map(move |t| (n, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, trial)| {
            let r = sample_realization(game, h, n, derive_seed(seed, n as u64, trial as u64))?;
            Ok(EllnRow {
                n,
                trial,
                linf_error: r.summary.linf_distance(&target),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<(usize, f64)> = sizes
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.linf_error)
                .collect();
            (n, errs.iter().sum::<f64>() / errs.len() as f64)
        })
        .collect();
    let slope = if means.len() >= 2 && means.iter().all(|(_, e)| *e > 0.0) {
        let pts: Vec<(f64, f64)> = means
            .iter()
            .map(|&(n, e)| ((n as f64).ln(), e.ln()))
            .collect();
        Some(ls_slope(&pts))
    } else {
        None
    };
    Ok(EllnReport {
        seed,
        trials,
        rows,
        means,
        slope,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Largest payoff slope between neighbouring points of a resolution-`1/m`
/// grid, in the ∞-norm of the summary.
pub fn payoff_lipschitz(game: &LargeGame, m: usize) -> Result<f64> {
    let k = game.num_actions();
    let step = 1.0 / m as f64;
    let mut l: f64 = 0.0;
    for p in simplex_grid(k, m)? {
        for i in 0..k {
            for j in 0..k {
                if i == j || p.get(j) < step - 1e-12 {
                    continue;
                }
                let mut q = p.weights().to_vec();
                q[i] += step;
                q[j] -= step;
                let dist = linf(p.weights(), &q);
                for t in 0..game.num_types() {
                    let (a, b) = (game.payoffs(t, p.weights()), game.payoffs(t, &q));
                    l = l.max(linf(&a, &b) / dist);
                }
            }
        }
    }
    Ok(l)
}

/// The realization as a game over (type, action) cells, each cell playing its action.
fn enriched(
    game: &LargeGame,
    r: &Realization,
) -> Result<(LargeGame, RandomizedProfile, Vec<(usize, usize)>)> {
    let k = game.num_actions();
    let mut types = Vec::new();
    let mut per_type = Vec::new();
    let mut cells = Vec::new();
    for (t, ty) in game.types().iter().enumerate() {
        for a in 0..k {
            let c = r.counts[t][a];
            if c == 0 {
                continue;
            }
            types.push(PayoffType {
                id: format!("{}/{}", ty.id, game.actions()[a]),
                mass: c as f64 / r.n as f64,
                payoffs: ty.payoffs.clone(),
            });
            per_type.push(ActionDistribution::vertex(k, a));
            cells.push((t, a));
        }
    }
    let total: f64 = types.iter().map(|t| t.mass).sum();
    if let Some(first) = types.first_mut() {
        first.mass += 1.0 - total;
    }
    Ok((
        LargeGame::new(game.actions().to_vec(), types)?,
        RandomizedProfile::new(per_type)?,
        cells,
    ))
}

/// Runs the Nash and ε-robust-perfection checks on a realized pure profile,
/// with a finite-population slack of `1.5 L / √N` added to `tol` (`L` the
/// payoff Lipschitz constant on a 1/50 grid).
///
/// The ε check trembles every realized action to `(1 - ε) δ_a + ε/K` over the
/// actions, since a pure profile is never full support.
pub fn ex_post_check(
    game: &LargeGame,
    r: &Realization,
    epsilon: f64,
    template: &PerturbationTemplate,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<CheckReport> {
    let k = game.num_actions();
    let lipschitz = payoff_lipschitz(game, 50)?;
    let slack = 1.5 * lipschitz / (r.n as f64).sqrt();
    let (cells_game, pure, cells) = enriched(game, r)?;
    let mut report = CheckReport::new("ex_post");
    report.echo("n", r.n);
    report.echo("seed", r.seed);
    report.echo("epsilon", epsilon);
    report.echo("template", template);
    report.echo("tol", tol);
    report.margin("lipschitz", lipschitz);
    report.margin("finite_n_slack", slack);
    report.note(
        "ex post robust perfection is exact only for a continuum of players; finite-N checks carry O(N^-1/2) slack",
    );
    let nash = check_nash(&cells_game, &pure, tol + slack)?;
    report.margin(
        "nash_max_support_gap",
        nash.margins.get("max_support_gap").copied().unwrap_or(0.0),
    );
    report.margin(
        "nash_regret",
        nash.margins
            .get("mass_weighted_regret")
            .copied()
            .unwrap_or(0.0),
    );
    let relabel = |w: &Witness| {
        let mut w = w.clone();
        if let Some(id) = &w.type_id {
            w.detail = format!("{} (cell {id})", w.detail);
            let pos = cells_game.types().iter().position(|t| &t.id == id);
            w.type_id = pos.map(|p| game.types()[cells[p].0].id.clone());
        }
        w
    };
    for w in &nash.witnesses {
        report.fail(relabel(w));
    }
    let trembled = RandomizedProfile::new(
        pure.per_type()
            .iter()
            .map(|d| d.mix(&ActionDistribution::uniform(k), 1.0 - epsilon))
            .collect::<Result<_>>()?,
    )?;
    if k > 1 {
        let eps = check_eps_rpe(
            &cells_game,
            &trembled,
            epsilon,
            template,
            1.0,
            tol + slack,
            cfg,
        )?;
        if let Some(m) = eps.margins.get("rational_mass_found") {
            report.margin("eps_rational_mass", *m);
        }
        if eps.verdict == Verdict::Fail {
            report.verdict = Verdict::Fail;
            report.witnesses.extend(eps.witnesses.iter().map(relabel));
            report.notes.extend(eps.notes);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn apportionment_is_mass_faithful() {
        assert_eq!(apportion(&[1.0 / 3.0; 3], 1), vec![1, 0, 0]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.5, 0.5], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn dirac_profiles_have_no_noise() {
        let g = fixtures::three_path_game();
        let h = RandomizedProfile::symmetric(1, ActionDistribution::vertex(3, 0));
        let r = sample_realization(&g, &h, 1000, 3).unwrap();
        assert_eq!(r.summary.weights(), &[1.0, 0.0, 0.0]);
        let one = sample_realization(
            &g,
            &RandomizedProfile::symmetric(1, ActionDistribution::uniform(3)),
            1,
            3,
        )
        .unwrap();
        assert_eq!(one.summary.support(0.0).len(), 1);
        assert_eq!(r.to_csv(&g).lines().count(), 1001);
    }

    #[test]
    fn lipschitz_of_three_path_is_one() {
        let l = payoff_lipschitz(&fixtures::three_path_game(), 50).unwrap();
        assert!((l - 1.0).abs() < 1e-9, "{l}");
    }
}
