use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use largegame::checkers::{
    check_admissible, check_eps_rpe, check_nash, check_rpe_approach,
    search_perturbation_certificate, CheckReport, SearchOptions, DEFAULT_EPSILONS,
};
use largegame::congestion::CongestionNetwork;
use largegame::simulate::{elln_report, ex_post_check, sample_realization};
use largegame::solvers::{
    price_of_anarchy, rpe_limit, rpe_limit_game, solve_wardrop, BeckmannOptions, EpsSchedule,
    FixedPointOptions, GameRpeOptions,
};
use largegame::{IntegrationConfig, LargeGame, PerturbationTemplate, RandomizedProfile};
use serde_json::{json, Value};

use crate::output::Output;
use crate::{CheckArgs, Common, PoaArgs, RpeArgs, SimulateArgs, WardropArgs};

enum Model {
    Network(CongestionNetwork),
    Game(LargeGame),
}

impl Model {
    fn load(path: &Path) -> Result<Model> {
        let src =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value =
            serde_json::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
        let ctx = || format!("loading {}", path.display());
        if v.get("edges").is_some() {
            Ok(Model::Network(
                CongestionNetwork::from_json_str(&src).with_context(ctx)?,
            ))
        } else if v.get("types").is_some() {
            Ok(Model::Game(
                LargeGame::from_json_str(&src).with_context(ctx)?,
            ))
        } else {
            bail!(
                "{}: neither a network (`edges`) nor a game (`types`)",
                path.display()
            )
        }
    }

    fn game(&self) -> Result<LargeGame> {
        match self {
            Model::Network(n) => Ok(n.as_large_game()?),
            Model::Game(g) => Ok(g.clone()),
        }
    }
}

fn network(path: &Path) -> Result<CongestionNetwork> {
    match Model::load(path)? {
        Model::Network(n) => Ok(n),
        Model::Game(_) => bail!("{} is a game, this command needs a network", path.display()),
    }
}

fn integration(c: &Common) -> IntegrationConfig {
    IntegrationConfig {
        mc_samples: c.mc_samples,
        seed: c.seed,
        ..IntegrationConfig::default()
    }
}

fn fixed_point_options(c: &Common) -> FixedPointOptions {
    FixedPointOptions {
        tie_tol: c.tol,
        integration: integration(c),
        ..FixedPointOptions::default()
    }
}

/// A named profile, a profile file, or comma-separated weights for every type.
fn resolve_profile(game: &LargeGame, spec: &str) -> Result<RandomizedProfile> {
    if let Ok(p) = game.named_profile(spec) {
        return Ok(p.clone());
    }
    let path = Path::new(spec);
    if path.is_file() {
        let src = fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return game
            .profile_from_json_str(&src)
            .with_context(|| format!("loading profile {spec}"));
    }
    let weights = Value::Array(spec.split(',').map(|s| json!(s.trim())).collect());
    game.profile_from_value(&weights, "--profile").with_context(|| {
        let named: Vec<&str> = game.named_profiles().keys().map(String::as_str).collect();
        format!("`{spec}` is not a profile file, weight list, or one of the named profiles {named:?}")
    })
}

fn profile_json(game: &LargeGame, h: &RandomizedProfile) -> Value {
    game.types()
        .iter()
        .zip(h.per_type())
        .map(|(t, d)| (t.id.clone(), json!(d.weights())))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn checks_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("check,verdict\n");
    for r in reports {
        let verdict = serde_json::to_value(r.verdict).unwrap_or(Value::Null);
        let _ = writeln!(out, "{},{}", r.check, verdict.as_str().unwrap_or("?"));
    }
    out
}

fn all_pass(reports: &[CheckReport]) -> bool {
    reports.iter().all(CheckReport::passed)
}

pub fn wardrop(a: &WardropArgs) -> Result<Output> {
    let net = network(&a.input)?;
    let r = solve_wardrop(&net, &BeckmannOptions::default(), a.common.tol)?;
    let names = net.path_names();
    let pick = |idx: &[usize]| idx.iter().map(|&p| names[p].clone()).collect::<Vec<_>>();
    let unused: Vec<usize> = (0..names.len()).filter(|p| !r.used.contains(p)).collect();
    let mut notes = Vec::new();
    if r.tied.len() > 1 {
        notes.push(format!(
            "paths {:?} tie at the solution; flows that keep their costs equal may also be equilibria",
            pick(&r.tied)
        ));
    }
    let mut csv = String::from("path,flow,cost,used,tied\n");
    for (p, name) in names.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{name},{},{},{},{}",
            r.flow.paths.get(p),
            r.path_costs[p],
            r.used.contains(&p),
            r.tied.contains(&p)
        );
    }
    let result = json!({
        "paths": names,
        "flow": r.flow.paths.weights(),
        "edge_loads": r.flow.edges,
        "path_costs": r.path_costs,
        "min_cost": r.min_cost,
        "social_cost": r.social_cost,
        "used": pick(&r.used),
        "unused": pick(&unused),
        "tied": pick(&r.tied),
        "max_used_excess": r.max_used_excess,
        "is_wardrop": r.is_wardrop,
        "iterations": r.iterations,
        "residual": r.residual,
        "notes": notes,
    });
    Ok(Output {
        command: "wardrop",
        result,
        tables: vec![("flows", csv)],
        exit_code: if r.is_wardrop { 0 } else { 2 },
    })
}

pub fn poa(a: &PoaArgs) -> Result<Output> {
    let net = network(&a.input)?;
    let r = price_of_anarchy(&net, &BeckmannOptions::default(), a.common.seed)?;
    let csv = format!(
        "equilibrium_cost,optimum_cost,price_of_anarchy\n{},{},{}\n",
        r.equilibrium_cost, r.optimum_cost, r.price_of_anarchy
    );
    Ok(Output {
        command: "poa",
        result: serde_json::to_value(&r)?,
        tables: vec![("poa", csv)],
        exit_code: 0,
    })
}

/// Nash, admissibility and a certificate search on `h`, plus ε-robust
/// perfection of `last` at `epsilon`.
fn limit_suite(
    game: &LargeGame,
    h: &RandomizedProfile,
    last: &RandomizedProfile,
    epsilon: f64,
    grid: usize,
    c: &Common,
) -> Result<Vec<CheckReport>> {
    let cfg = integration(c);
    let template = PerturbationTemplate::standard(epsilon)?;
    let search = SearchOptions {
        tol: c.tol,
        integration: cfg,
        ..SearchOptions::default()
    };
    Ok(vec![
        check_nash(game, h, c.tol)?,
        check_admissible(game, h, grid, c.tol)?,
        check_eps_rpe(game, last, epsilon, &template, 1.0, c.tol, &cfg)?,
        search_perturbation_certificate(game, h, &search)?,
    ])
}

pub fn rpe(a: &RpeArgs) -> Result<Output> {
    let model = Model::load(&a.input)?;
    let game = model.game()?;
    let schedule = EpsSchedule::harmonic(a.schedule.n0, a.schedule.n1)?;
    let last_eps = schedule
        .entries()
        .last()
        .map(|e| e.1)
        .ok_or_else(|| anyhow!("empty schedule"))?;
    match &model {
        Model::Network(net) => {
            let lim = rpe_limit(
                net,
                &schedule,
                &BeckmannOptions::default(),
                a.common.tol,
                a.cauchy_tol,
            )?;
            let converged = lim
                .trajectory_converged
                .unwrap_or(lim.cauchy_residual <= a.cauchy_tol);
            let h = RandomizedProfile::symmetric(1, lim.limit.clone());
            let last = RandomizedProfile::symmetric(1, lim.last.clone());
            let checks = if converged {
                limit_suite(&game, &h, &last, last_eps, a.grid, &a.common)?
            } else {
                Vec::new()
            };
            let mut csv = String::from("n,epsilon");
            for p in net.path_names() {
                let _ = write!(csv, ",{p}");
            }
            csv.push_str(",objective,kkt_residual\n");
            for t in &lim.trajectory {
                let _ = write!(csv, "{},{}", t.n, t.epsilon);
                for x in &t.coords {
                    let _ = write!(csv, ",{x}");
                }
                let _ = writeln!(csv, ",{},{}", t.objective, t.kkt_residual);
            }
            let exit_code = rpe_exit(converged, &checks);
            let result = json!({
                "kind": "network",
                "paths": net.path_names(),
                "limit": lim.limit.weights(),
                "last": lim.last.weights(),
                "extrapolated": lim.extrapolated,
                "cauchy_residual": lim.cauchy_residual,
                "strictly_increasing": lim.strictly_increasing,
                "converged": converged,
                "checks": checks,
            });
            Ok(Output {
                command: "rpe",
                result,
                tables: vec![("trajectory", csv)],
                exit_code,
            })
        }
        Model::Game(_) => {
            let opts = GameRpeOptions {
                fixed_point: fixed_point_options(&a.common),
                cauchy_tol: a.cauchy_tol,
                ..GameRpeOptions::default()
            };
            let lim = rpe_limit_game(&game, &schedule, &PerturbationTemplate::standard, &opts)?;
            let checks = if lim.converged {
                limit_suite(&game, &lim.profile, &lim.last, last_eps, a.grid, &a.common)?
            } else {
                Vec::new()
            };
            let targets: Vec<(String, RandomizedProfile)> = match &a.target {
                Some(t) => vec![(t.clone(), resolve_profile(&game, t)?)],
                None => game
                    .named_profiles()
                    .iter()
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            };
            let mut limit_conditions = Vec::new();
            for (name, target) in &targets {
                let d = lim.check_target(&game, target, a.cauchy_tol)?;
                let mut failing = Vec::new();
                if !lim.converged {
                    failing.push("the ε-trajectory does not converge");
                }
                if !d.per_type_converges {
                    failing.push("per-type strategies do not converge to the target");
                }
                if !d.summary_converges {
                    failing.push("societal summaries do not converge to the target's summary");
                }
                limit_conditions
                    .push(json!({ "target": name, "distances": d, "failing": failing }));
            }
            let mut csv = String::from("n,epsilon");
            for act in game.actions() {
                let _ = write!(csv, ",{act}");
            }
            csv.push_str(",residual\n");
            for t in &lim.trajectory {
                let _ = write!(csv, "{},{}", t.n, t.epsilon);
                for x in &t.summary {
                    let _ = write!(csv, ",{x}");
                }
                let _ = writeln!(csv, ",{}", t.residual);
            }
            let exit_code = rpe_exit(lim.converged, &checks);
            let result = json!({
                "kind": "game",
                "actions": game.actions(),
                "limit": profile_json(&game, &lim.profile),
                "summary": lim.summary.weights(),
                "converged": lim.converged,
                "fit_residual": lim.fit_residual,
                "cauchy_residual": lim.cauchy_residual,
                "on_boundary": lim.on_boundary,
                "min_summary_coordinate": lim.min_summary_coordinate,
                "limit_conditions": limit_conditions,
                "checks": checks,
            });
            Ok(Output {
                command: "rpe",
                result,
                tables: vec![("trajectory", csv)],
                exit_code,
            })
        }
    }
}

fn rpe_exit(converged: bool, checks: &[CheckReport]) -> u8 {
    match (converged, all_pass(checks)) {
        (false, _) => 3,
        (true, true) => 0,
        (true, false) => 2,
    }
}

pub fn check(a: &CheckArgs) -> Result<Output> {
    let game = Model::load(&a.input)?.game()?;
    let h = resolve_profile(&game, &a.profile)?;
    let none = !(a.nash || a.admissible || a.eps_rpe || a.certificate);
    let all = a.all || none;
    let cfg = integration(&a.common);
    let mut reports = Vec::new();
    if all || a.nash {
        reports.push(check_nash(&game, &h, a.common.tol)?);
    }
    if all || a.admissible {
        reports.push(check_admissible(&game, &h, a.grid, a.common.tol)?);
    }
    if all || a.eps_rpe {
        let epsilons = match a.epsilon {
            Some(e) => vec![e],
            None => DEFAULT_EPSILONS.to_vec(),
        };
        reports.push(check_rpe_approach(
            &game,
            &h,
            &epsilons,
            &fixed_point_options(&a.common),
        )?);
    }
    if all || a.certificate {
        let opts = SearchOptions {
            tol: a.common.tol,
            integration: cfg,
            ..SearchOptions::default()
        };
        reports.push(search_perturbation_certificate(&game, &h, &opts)?);
    }
    let exit_code = if all_pass(&reports) { 0 } else { 2 };
    let result = json!({
        "profile": profile_json(&game, &h),
        "summary": game.societal_summary(&h)?.weights(),
        "all_pass": exit_code == 0,
        "checks": reports,
    });
    Ok(Output {
        command: "check",
        result,
        tables: vec![("checks", checks_csv(&reports))],
        exit_code,
    })
}

/// Population sizes for the convergence table: powers of ten from 100 up to `n`, then `n`.
fn elln_sizes(n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::successors(Some(100usize), |s| s.checked_mul(10))
        .take_while(|&s| s < n)
        .collect();
    sizes.push(n);
    sizes
}

pub fn simulate(a: &SimulateArgs) -> Result<Output> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let model = Model::load(&a.input)?;
    let game = model.game()?;
    let h = match (&a.profile, &model) {
        (Some(p), _) => resolve_profile(&game, p)?,
        (None, Model::Network(net)) => {
            let lim = rpe_limit(
                net,
                &EpsSchedule::harmonic(1, 200)?,
                &BeckmannOptions::default(),
                a.common.tol,
                1e-3,
            )?;
            RandomizedProfile::symmetric(1, lim.limit)
        }
        (None, Model::Game(_)) => {
            let opts = GameRpeOptions {
                fixed_point: fixed_point_options(&a.common),
                ..GameRpeOptions::default()
            };
            rpe_limit_game(
                &game,
                &EpsSchedule::harmonic(1, 200)?,
                &PerturbationTemplate::standard,
                &opts,
            )?
            .profile
        }
    };
    let r = sample_realization(&game, &h, a.n, a.common.seed)?;
    let target = game.societal_summary(&h)?;
    let mut tables = vec![("realization", r.to_csv(&game))];
    let elln = if a.trials > 0 {
        let rep = elln_report(&game, &h, &elln_sizes(a.n), a.trials, a.common.seed)?;
        tables.push(("elln", rep.to_csv()));
        Some(json!({ "means": rep.means, "slope": rep.slope, "trials": rep.trials }))
    } else {
        None
    };
    let mut exit_code = 0;
    let ex_post = match a.epsilon {
        Some(eps) => {
            let template = PerturbationTemplate::standard(eps)?;
            let rep = ex_post_check(
                &game,
                &r,
                eps,
                &template,
                a.common.tol,
                &integration(&a.common),
            )?;
            if !rep.passed() {
                exit_code = 2;
            }
            Some(rep)
        }
        None => None,
    };
    let result = json!({
        "actions": game.actions(),
        "profile": profile_json(&game, &h),
        "n": r.n,
        "seed": r.seed,
        "counts": r.counts,
        "summary": r.summary.weights(),
        "expected_summary": target.weights(),
        "linf_error": r.summary.linf_distance(&target),
        "elln": elln,
        "ex_post": ex_post,
    });
    Ok(Output {
        command: "simulate",
        result,
        tables,
        exit_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_table_sizes() {
        assert_eq!(elln_sizes(1), vec![1]);
        assert_eq!(elln_sizes(100), vec![100]);
        assert_eq!(elln_sizes(25_000), vec![100, 1000, 10_000, 25_000]);
    }
}
