//! ε-robust perfect equilibria of general large games as fixed points of the
//! trembled best-response map, and their ε → 0 limits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{
    argmax_set, IntegrationConfig, LargeGame, PerturbationTemplate, RandomizedProfile,
};
use crate::simplex::{linf, ActionDistribution, TruncatedSimplex};

use super::EpsSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointMethod {
    /// Extragradient projection on the variational inequality over the
    /// per-type rational parts `σ_t`, with an adaptive step.
    Extragradient,
    /// `τ ← (1 - α) τ + α B(τ)` with the uniform mixture over tied best responses.
    DampedBestResponse { alpha: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointOptions {
    pub method: FixedPointMethod,
    pub max_iters: usize,
    pub tol: f64,
    /// Tie tolerance for best-response sets.
    pub tie_tol: f64,
    pub integration: IntegrationConfig,
    /// Starting rational parts; uniform when absent.
    pub start: Option<RandomizedProfile>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            method: FixedPointMethod::Extragradient,
            max_iters: 50_000,
            tol: 1e-10,
            tie_tol: 1e-6,
            integration: IntegrationConfig::default(),
            start: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointSolution {
    pub epsilon: f64,
    /// `h(t) = (1 - ε) σ_t + ε ν`.
    pub profile: RandomizedProfile,
    /// The rational parts `σ_t`.
    pub rational: RandomizedProfile,
    pub summary: ActionDistribution,
    pub residual: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Largest weight a rational part puts outside the `tie_tol` best-response set.
    pub support_gap: f64,
    pub method: FixedPointMethod,
}

struct Map<'a> {
    game: &'a LargeGame,
    epsilon: f64,
    template: &'a PerturbationTemplate,
    cfg: &'a IntegrationConfig,
}

impl Map<'_> {
    fn tremble(&self, sigma: &[f64]) -> Vec<f64> {
        let k = sigma.len() as f64;
        sigma
            .iter()
            .map(|s| (1.0 - self.epsilon) * s + self.epsilon / k)
            .collect()
    }

    fn summary(&self, sigmas: &[Vec<f64>]) -> Result<ActionDistribution> {
        let k = self.game.num_actions();
        let mut tau = vec![0.0; k];
        for (ty, s) in self.game.types().iter().zip(sigmas) {
            for (slot, h) in tau.iter_mut().zip(self.tremble(s)) {
                *slot += ty.mass * h;
            }
        }
        ActionDistribution::normalized(tau)
    }

    /// Expected payoffs of every type under `φ(τ(σ))`.
    fn values(&self, sigmas: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let tau = self.summary(sigmas)?;
        let measure = self.template.apply(&tau)?;
        (0..self.game.num_types())
            .map(|t| self.game.expected_payoffs(t, &measure, self.cfg))
            .collect()
    }
}

/// Finds an ε-robust perfect equilibrium: a profile whose rational parts are
/// supported on best responses to `φ(s(h))`, trembled by `ε ν` with `ν` uniform.
pub fn fixed_point_eps_rpe(
    game: &LargeGame,
    epsilon: f64,
    template: &PerturbationTemplate,
    opts: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::arg(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if !template.is_full_support() {
        return Err(Error::arg(
            "perturbation template has no uniform component, so it is not full support",
        ));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::arg("fixed point needs tol > 0 and max_iters >= 1"));
    }
    let k = game.num_actions();
    let map = Map {
        game,
        epsilon,
        template,
        cfg: &opts.integration,
    };
    let start: Vec<Vec<f64>> = match &opts.start {
        Some(p) => {
            if p.num_types() != game.num_types() || p.num_actions() != k {
                return Err(Error::arg("starting profile does not match the game"));
            }
            p.per_type().iter().map(|d| d.weights().to_vec()).collect()
        }
        None => vec![vec![1.0 / k as f64; k]; game.num_types()],
    };
    let (sigmas, residual, iterations, history) = match opts.method {
        FixedPointMethod::Extragradient => extragradient(&map, start, opts)?,
        FixedPointMethod::DampedBestResponse { alpha } => {
            damped_best_response(&map, start, alpha, opts)?
        }
    };
    finish(&map, sigmas, residual, iterations, history, opts)
}

fn finish(
    map: &Map<'_>,
    sigmas: Vec<Vec<f64>>,
    residual: f64,
    iterations: usize,
    history: Vec<f64>,
    opts: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    let values = map.values(&sigmas)?;
    let support_gap = sigmas
        .iter()
        .zip(&values)
        .map(|(s, v)| {
            let br = argmax_set(v, opts.tie_tol);
            s.iter()
                .enumerate()
                .filter(|(a, _)| !br.contains(a))
                .map(|(_, w)| *w)
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let summary = map.summary(&sigmas)?;
    let profile = RandomizedProfile::new(
        sigmas
            .iter()
            .map(|s| ActionDistribution::normalized(map.tremble(s)))
            .collect::<Result<_>>()?,
    )?;
    let rational = RandomizedProfile::new(
        sigmas
            .into_iter()
            .map(ActionDistribution::normalized)
            .collect::<Result<_>>()?,
    )?;
    Ok(FixedPointSolution {
        epsilon: map.epsilon,
        profile,
        rational,
        summary,
        residual,
        iterations,
        residual_history: history,
        support_gap,
        method: opts.method,
    })
}

type Iterate = (Vec<Vec<f64>>, f64, usize, Vec<f64>);

fn project_all(set: &TruncatedSimplex, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter().map(|s| Ok(set.project(s)?.into_inner())).collect()
}

fn ascend(x: &[Vec<f64>], v: &[Vec<f64>], step: f64) -> Vec<Vec<f64>> {
    x.iter()
        .zip(v)
        .map(|(s, g)| s.iter().zip(g).map(|(a, b)| a + step * b).collect())
        .collect()
}

fn dist2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

fn natural_residual(set: &TruncatedSimplex, x: &[Vec<f64>], v: &[Vec<f64>]) -> Result<f64> {
    let moved = project_all(set, &ascend(x, v, 1.0))?;
    Ok(x.iter()
        .zip(&moved)
        .map(|(a, b)| linf(a, b))
        .fold(0.0, f64::max))
}

fn extragradient(map: &Map<'_>, start: Vec<Vec<f64>>, opts: &FixedPointOptions) -> Result<Iterate> {
    let set = TruncatedSimplex::new(map.game.num_actions(), 0.0)?;
    let mut x = project_all(&set, &start)?;
    let mut step = 1.0;
    let mut history = Vec::new();
    for it in 0..opts.max_iters {
        let v = map.values(&x)?;
        let r = natural_residual(&set, &x, &v)?;
        history.push(r);
        if r <= opts.tol {
            return Ok((x, r, it, history));
        }
        let (bar, v_bar) = loop {
            let bar = project_all(&set, &ascend(&x, &v, step))?;
            let v_bar = map.values(&bar)?;
            let moved = dist2(&x, &bar);
            if step * dist2(&v, &v_bar) <= 0.9 * moved || moved == 0.0 || step < 1e-12 {
                break (bar, v_bar);
            }
            step *= 0.5;
        };
        let _ = bar;
        x = project_all(&set, &ascend(&x, &v_bar, step))?;
        step = (step * 1.5).min(1e3);
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NotConverged {
        solver: "fixed_point_eps_rpe",
        iterations: opts.max_iters,
        residual,
        best: x.concat(),
        history,
    })
}

fn damped_best_response(
    map: &Map<'_>,
    start: Vec<Vec<f64>>,
    alpha: f64,
    opts: &FixedPointOptions,
) -> Result<Iterate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("damping {alpha} outside (0, 1]")));
    }
    let game = map.game;
    let k = game.num_actions();
    let mut tau = map.summary(&start)?.into_inner();
    let mut history = Vec::new();
    let best_replies = |tau: &[f64]| -> Result<Vec<Vec<f64>>> {
        let measure = map
            .template
            .apply(&ActionDistribution::normalized(tau.to_vec())?)?;
        (0..game.num_types())
            .map(|t| {
                let br = argmax_set(&game.expected_payoffs(t, &measure, map.cfg)?, opts.tie_tol);
                let mut s = vec![0.0; k];
                br.iter().for_each(|&a| s[a] = 1.0 / br.len() as f64);
                Ok(s)
            })
            .collect()
    };
    for it in 0..opts.max_iters {
        let br = best_replies(&tau)?;
        let image = map.summary(&br)?.into_inner();
        let r = linf(&tau, &image);
        history.push(r);
        if r <= opts.tol {
            return Ok((br, r, it, history));
        }
        tau = tau
            .iter()
            .zip(&image)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NotConverged {
        solver: "fixed_point_eps_rpe (damped best response)",
        iterations: opts.max_iters,
        residual,
        best: tau,
        history,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GameRpeOptions {
    pub fixed_point: FixedPointOptions,
    /// Tolerance on the tail fit that declares the trajectory convergent.
    pub cauchy_tol: f64,
    /// A limit coordinate below this counts as on the boundary of the simplex.
    pub boundary_tol: f64,
}

impl Default for GameRpeOptions {
    fn default() -> Self {
        GameRpeOptions {
            fixed_point: FixedPointOptions::default(),
            cauchy_tol: 1e-3,
            boundary_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GameTrajectoryPoint {
    pub n: usize,
    pub epsilon: f64,
    pub summary: Vec<f64>,
    pub profile: Vec<Vec<f64>>,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GameRpeLimit {
    /// Estimated limit profile (the last profile when not converged).
    pub profile: RandomizedProfile,
    pub summary: ActionDistribution,
    pub last: RandomizedProfile,
    pub trajectory: Vec<GameTrajectoryPoint>,
    /// Whether the tail of the trajectory fits `h(ε) ≈ h + ε d` within `cauchy_tol`.
    pub converged: bool,
    /// Largest deviation from that fit over the tail.
    pub fit_residual: f64,
    /// `‖hⁿ - hⁿ⁻¹‖∞` at the last step.
    pub cauchy_residual: f64,
    pub min_summary_coordinate: f64,
    pub on_boundary: bool,
}

/// Distances behind the two limit conditions: per-type convergence of the
/// profiles and convergence of the summaries to those of a target profile.
#[derive(Clone, Debug, Serialize)]
pub struct LimitConditions {
    pub per_type_distance: f64,
    pub summary_distance: f64,
    pub per_type_converges: bool,
    pub summary_converges: bool,
}

impl GameRpeLimit {
    pub fn check_target(
        &self,
        game: &LargeGame,
        target: &RandomizedProfile,
        tol: f64,
    ) -> Result<LimitConditions> {
        let per_type_distance = self.profile.linf_distance(target);
        let summary_distance = self.summary.linf_distance(&game.societal_summary(target)?);
        Ok(LimitConditions {
            per_type_converges: self.converged && per_type_distance <= tol,
            summary_converges: self.converged && summary_distance <= tol,
            per_type_distance,
            summary_distance,
        })
    }
}

/// Runs [`fixed_point_eps_rpe`] along `schedule` with warm starts.
///
/// `template_for(ε)` gives the perturbation used at each ε. Convergence is
/// judged by a least-squares fit of each coordinate against ε on the tail
/// half of the trajectory; the fitted intercept is the limit.
pub fn rpe_limit_game(
    game: &LargeGame,
    schedule: &EpsSchedule,
    template_for: &dyn Fn(f64) -> Result<PerturbationTemplate>,
    opts: &GameRpeOptions,
) -> Result<GameRpeLimit> {
    let mut fp = opts.fixed_point.clone();
    let mut trajectory = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &(n, eps) in schedule.entries() {
        let template = template_for(eps)?;
        let sol = fixed_point_eps_rpe(game, eps, &template, &fp)?;
        fp.start = Some(sol.rational.clone());
        trajectory.push(GameTrajectoryPoint {
            n,
            epsilon: eps,
            summary: sol.summary.weights().to_vec(),
            profile: sol
                .profile
                .per_type()
                .iter()
                .map(|d| d.weights().to_vec())
                .collect(),
            residual: sol.residual,
        });
        last = Some(sol.profile);
    }
    let last = last.ok_or_else(|| Error::arg("empty schedule"))?;
    let m = trajectory.len();
    let cauchy_residual = if m >= 2 {
        trajectory[m - 1]
            .profile
            .iter()
            .zip(&trajectory[m - 2].profile)
            .map(|(a, b)| linf(a, b))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let tail = &trajectory[m / 2..];
    let (profile, converged, fit_residual) = if tail.len() >= 2 {
        let set = TruncatedSimplex::new(game.num_actions(), 0.0)?;
        let mut limit = Vec::with_capacity(game.num_types());
        let mut worst: f64 = 0.0;
        for t in 0..game.num_types() {
            let mut coords = Vec::with_capacity(game.num_actions());
            for a in 0..game.num_actions() {
                let pts: Vec<(f64, f64)> =
                    tail.iter().map(|p| (p.epsilon, p.profile[t][a])).collect();
                let (intercept, slope) = linear_fit(&pts);
                worst = pts
                    .iter()
                    .map(|(e, y)| (y - intercept - slope * e).abs())
                    .fold(worst, f64::max);
                coords.push(intercept);
            }
            limit.push(set.project(&coords)?);
        }
        let converged = worst <= opts.cauchy_tol;
        let profile = if converged {
            RandomizedProfile::new(limit)?
        } else {
            last.clone()
        };
        (profile, converged, worst)
    } else {
        (last.clone(), false, f64::INFINITY)
    };
    let summary = game.societal_summary(&profile)?;
    let min_summary_coordinate = summary.min_weight();
    Ok(GameRpeLimit {
        on_boundary: min_summary_coordinate <= opts.boundary_tol,
        min_summary_coordinate,
        summary,
        profile,
        last,
        trajectory,
        converged,
        fit_residual,
        cauchy_residual,
    })
}

fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_PATH: &str = r#"{
        "actions": ["a", "b", "c"],
        "types": [ { "id": "driver", "mass": 1,
                     "payoff": { "a": "-1/2", "b": "-max(tau(b), 1/2)", "c": "-tau(c) - 1/3" } } ]
    }"#;

    #[test]
    fn three_path_fixed_point_matches_indifference() {
        let g = LargeGame::from_json_str(THREE_PATH).unwrap();
        let eps = 1.0 / 60.0;
        let t = PerturbationTemplate::standard(eps).unwrap();
        let sol = fixed_point_eps_rpe(&g, eps, &t, &FixedPointOptions::default()).unwrap();
        let tc = (1.0 - 2.0 * eps) / (6.0 * (1.0 - eps));
        let expected = [1.0 - eps / 3.0 - tc, eps / 3.0, tc];
        assert!(
            linf(sol.summary.weights(), &expected) < 1e-8,
            "{:?}",
            sol.summary
        );
        assert!(sol.profile.min_weight() >= eps / 3.0 - 1e-12);
        assert!(sol.support_gap < 1e-8);
    }

    #[test]
    fn damped_best_response_chatters_on_mixed_fixed_points() {
        let g = LargeGame::from_json_str(THREE_PATH).unwrap();
        let eps = 1.0 / 60.0;
        let t = PerturbationTemplate::standard(eps).unwrap();
        let opts = FixedPointOptions {
            method: FixedPointMethod::DampedBestResponse { alpha: 0.3 },
            max_iters: 500,
            ..FixedPointOptions::default()
        };
        assert!(matches!(
            fixed_point_eps_rpe(&g, eps, &t, &opts),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn single_action_game_is_trivial() {
        let g = LargeGame::from_json_str(
            r#"{"actions": ["only"], "types": [{"id": "t", "mass": 1, "payoff": {"only": "tau(only)"}}]}"#,
        )
        .unwrap();
        let t = PerturbationTemplate::standard(0.1).unwrap();
        let sol = fixed_point_eps_rpe(&g, 0.1, &t, &FixedPointOptions::default()).unwrap();
        assert_eq!(sol.summary.weights(), &[1.0]);
    }

    #[test]
    fn fit_recovers_intercept() {
        let (a, b) = linear_fit(&[(0.1, 1.2), (0.2, 1.4), (0.3, 1.6)]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}
