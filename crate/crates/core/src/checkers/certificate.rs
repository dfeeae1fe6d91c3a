//! Aggregate robustness certificates along perturbation families, bounded
//! searches for such families, and the two-path ε-robust perfect construction.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{check_profile_shape, CheckReport, Witness};
use crate::error::{Error, Result};
use crate::game::{
    IntegrationConfig, LargeGame, PerturbationMeasure, PerturbationTemplate, RandomizedProfile,
};
use crate::simplex::{linf, rng_from_seed, simplex_grid, uniform_samples, ActionDistribution};

/// `ε_n = 1 / (6n)`, the tremble size used by every built-in family.
pub fn certificate_epsilon(n: usize) -> f64 {
    1.0 / (6.0 * n as f64)
}

type MemberFn =
    dyn Fn(usize, usize, &ActionDistribution) -> Result<PerturbationMeasure> + Send + Sync;

/// A sequence of perturbations `φⁿ(τ)`, possibly depending on the type.
#[derive(Clone)]
pub enum CertificateFamily {
    /// `(1 - ε_n) δ_τ + ε_n Σ_k w_k δ_{e_k} + ε_n w_u η`.
    Vertex {
        vertex_weights: Vec<f64>,
        uniform_share: f64,
    },
    /// `(1 - ε_n) δ_τ + (ε_n - ε_n²) δ_p + ε_n² η`, where `p` is the vertex
    /// of the action the type plays. Needs a pure strategy for every type.
    OwnAction,
    /// `member(n, type, τ)`.
    Custom {
        label: String,
        member: Arc<MemberFn>,
    },
}

impl fmt::Debug for CertificateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

impl CertificateFamily {
    pub fn custom(
        label: impl Into<String>,
        member: impl Fn(usize, usize, &ActionDistribution) -> Result<PerturbationMeasure>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        CertificateFamily::Custom {
            label: label.into(),
            member: Arc::new(member),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            CertificateFamily::Vertex {
                vertex_weights,
                uniform_share,
            } => json!({
                "kind": "vertex",
                "vertex_weights": vertex_weights,
                "uniform_share": uniform_share,
                "epsilon_n": "1/(6n)",
            }),
            CertificateFamily::OwnAction => json!({ "kind": "own_action", "epsilon_n": "1/(6n)" }),
            CertificateFamily::Custom { label, .. } => json!({ "kind": "custom", "label": label }),
        }
    }

    fn member(
        &self,
        h: &RandomizedProfile,
        n: usize,
        t: usize,
        tau: &ActionDistribution,
    ) -> Result<PerturbationMeasure> {
        let eps = certificate_epsilon(n);
        match self {
            CertificateFamily::Vertex {
                vertex_weights,
                uniform_share,
            } => {
                if vertex_weights.len() != tau.len() {
                    return Err(Error::arg("family has the wrong number of vertex weights"));
                }
                PerturbationTemplate::vertices(eps, vertex_weights, *uniform_share)?.apply(tau)
            }
            CertificateFamily::OwnAction => {
                let support = h.get(t).support(1e-12);
                let [p] = support[..] else {
                    return Err(Error::arg(
                        "own-action family needs every type to play a pure strategy",
                    ));
                };
                PerturbationMeasure::new(
                    tau.clone(),
                    1.0 - eps,
                    vec![(ActionDistribution::vertex(tau.len(), p), eps - eps * eps)],
                    eps * eps,
                )
            }
            CertificateFamily::Custom { member, .. } => member(n, t, tau),
        }
    }
}

/// Largest shortfall of a played action against the best reply under
/// `measure`, with the action attaining it.
fn shortfall(
    game: &LargeGame,
    h: &RandomizedProfile,
    t: usize,
    measure: &PerturbationMeasure,
    support_tol: f64,
    cfg: &IntegrationConfig,
) -> Result<(f64, usize, usize)> {
    let v = game.expected_payoffs(t, measure, cfg)?;
    let (best_action, best) =
        v.iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, x)| if x > acc.1 { (i, x) } else { acc },
            );
    let mut worst = (0.0, best_action, best_action);
    for (a, &w) in h.get(t).weights().iter().enumerate() {
        if w > support_tol && best - v[a] > worst.0 {
            worst = (best - v[a], a, best_action);
        }
    }
    Ok(worst)
}

/// Distance of `φ` from `δ_τ`: off-summary weight plus displacement of the base.
fn distance_from_dirac(measure: &PerturbationMeasure, tau: &ActionDistribution) -> f64 {
    measure.epsilon() + measure.base_weight() * linf(measure.base().weights(), tau.weights())
}

/// Certifies aggregate robustness along `family`: for `n = 1..=n_max` and
/// every type, each action played with weight above `tol` must be a best
/// reply (within `tol`) to `φⁿ(s(h))`.
///
/// This certifies the conditions along the given family only; a failure says
/// nothing about other families.
pub fn check_aggregate_robustness_certificate(
    game: &LargeGame,
    h: &RandomizedProfile,
    family: &CertificateFamily,
    n_max: usize,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    if n_max == 0 {
        return Err(Error::arg("certificate needs n_max >= 1"));
    }
    let mut report = CheckReport::new("aggregate_robustness_certificate");
    report.echo("family", family.describe());
    report.echo("n_max", n_max);
    report.echo("tol", tol);
    report.echo("integration", cfg);
    report.note("certificate along the given family only; a failure does not show that no other family works");
    let tau = game.societal_summary(h)?;
    let mut max_gap: f64 = 0.0;
    let mut failed_types = vec![false; game.num_types()];
    for t in 0..game.num_types() {
        let mut last_distance = f64::INFINITY;
        let mut first_distance = None;
        for n in 1..=n_max {
            let measure = family.member(h, n, t, &tau)?;
            if !measure.is_full_support() {
                return Err(Error::arg(format!(
                    "family member n = {n} has no uniform component"
                )));
            }
            let d = distance_from_dirac(&measure, &tau);
            if d > last_distance + 1e-15 {
                report.inconclusive(format!(
                    "family moves away from the summary at n = {n} for type {}",
                    game.types()[t].id
                ));
            }
            last_distance = d;
            first_distance.get_or_insert(d);
            let (gap, a, best) = shortfall(game, h, t, &measure, tol, cfg)?;
            max_gap = max_gap.max(gap);
            if gap > tol && !failed_types[t] {
                failed_types[t] = true;
                report.fail(Witness {
                    type_id: Some(game.types()[t].id.clone()),
                    action: Some(game.actions()[a].clone()),
                    other_action: Some(game.actions()[best].clone()),
                    tau: Some(tau.weights().to_vec()),
                    n: Some(n),
                    value: Some(gap),
                    detail: "played action is not a best reply to the perturbed summary".into(),
                    ..Witness::default()
                });
            }
        }
        if n_max > 1 && last_distance >= first_distance.unwrap_or(0.0) {
            report.inconclusive("family does not approach the Dirac measure at the summary");
        }
    }
    report.margin("max_best_reply_gap", max_gap);
    Ok(report)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchOptions {
    /// Resolution of the grid over (vertex weights, uniform share).
    pub resolution: usize,
    pub n_max: usize,
    pub tol: f64,
    pub integration: IntegrationConfig,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            resolution: 10,
            n_max: 50,
            tol: 1e-6,
            integration: IntegrationConfig::default(),
        }
    }
}

/// Largest best-reply shortfall over the family's members for `n <= n_max`,
/// stopping early once it exceeds the tolerance.
fn family_gap(
    game: &LargeGame,
    h: &RandomizedProfile,
    family: &CertificateFamily,
    tau: &ActionDistribution,
    opts: &SearchOptions,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 1..=opts.n_max {
        for t in 0..game.num_types() {
            let measure = family.member(h, n, t, tau)?;
            worst = worst.max(shortfall(game, h, t, &measure, opts.tol, &opts.integration)?.0);
            if worst > opts.tol {
                return Ok(worst);
            }
        }
    }
    Ok(worst)
}

/// Searches the vertex families whose parameters `(w_1..w_K, w_u)` lie on a
/// grid of the `(K+1)`-simplex with `w_u > 0` and returns the first certificate.
/// Profiles where every type plays a pure strategy first try the own-action family.
///
/// Failing the search never means that no certificate exists.
pub fn search_perturbation_certificate(
    game: &LargeGame,
    h: &RandomizedProfile,
    opts: &SearchOptions,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    let mut report = CheckReport::new("perturbation_certificate_search");
    report.echo("options", opts);
    let k = game.num_actions();
    if k == 1 {
        report.note("a single action is a best reply to every perturbation");
        return Ok(report);
    }
    let candidates: Vec<ActionDistribution> = simplex_grid(k + 1, opts.resolution)?
        .into_iter()
        .filter(|w| w.get(k) > 0.0)
        .collect();
    report.echo("candidates", candidates.len());
    let tau = game.societal_summary(h)?;
    if h.per_type().iter().all(|d| d.support(1e-12).len() == 1) {
        let g = family_gap(game, h, &CertificateFamily::OwnAction, &tau, opts)?;
        if g <= opts.tol {
            report.witnesses.push(Witness {
                value: Some(g),
                detail: "the own-action family certifies the profile".into(),
                ..Witness::default()
            });
            report.margin("max_best_reply_gap", g);
            return Ok(report);
        }
    }
    let gaps: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|w| {
            let family = CertificateFamily::Vertex {
                vertex_weights: w.weights()[..k].to_vec(),
                uniform_share: w.get(k),
            };
            family_gap(game, h, &family, &tau, opts)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gaps.into_iter().enumerate() {
        let g = g?;
        if g <= opts.tol {
            let w = &candidates[i];
            report.witnesses.push(Witness {
                mixture: Some(w.weights().to_vec()),
                value: Some(g),
                detail: "vertex weights followed by the uniform share of a certifying family"
                    .into(),
                ..Witness::default()
            });
            report.margin("max_best_reply_gap", g);
            return Ok(report);
        }
        if best.is_none_or(|(_, b)| g < b) {
            best = Some((i, g));
        }
    }
    let (i, g) = best.expect("search grid is nonempty");
    report.verdict = super::Verdict::Fail;
    report.witnesses.push(Witness {
        mixture: Some(candidates[i].weights().to_vec()),
        value: Some(g),
        detail: "closest candidate: vertex weights followed by the uniform share".into(),
        ..Witness::default()
    });
    report.margin("best_near_miss_gap", g);
    report.note(
        "no certificate within the searched family grid; this does not show that none exists",
    );
    Ok(report)
}

/// Draws `samples` random full-support measures (one to three random atoms
/// plus a uniform component) and reports whether any of them makes every
/// played action of every type a best reply within `tol`.
pub fn sample_perturbation_certificates(
    game: &LargeGame,
    h: &RandomizedProfile,
    samples: usize,
    seed: u64,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    let mut report = CheckReport::new("random_perturbation_certificates");
    report.echo("samples", samples);
    report.echo("seed", seed);
    report.echo("tol", tol);
    let k = game.num_actions();
    if k == 1 {
        report.note("a single action is a best reply to every perturbation");
        return Ok(report);
    }
    let mut rng = rng_from_seed(seed);
    let mut closest = f64::INFINITY;
    for s in 0..samples {
        let atoms = rng.random_range(1..=3usize);
        let points = uniform_samples(k, atoms, rng.random())?;
        let mut raw: Vec<f64> = (0..=atoms).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter_mut().for_each(|w| *w /= total);
        let uniform = raw[atoms];
        let mut atom_list: Vec<(ActionDistribution, f64)> = points
            .into_iter()
            .zip(raw[..atoms].iter().copied())
            .collect();
        let (base, base_weight) = atom_list.remove(0);
        let measure = PerturbationMeasure::new(base, base_weight, atom_list, uniform)?;
        let mut worst: f64 = 0.0;
        for t in 0..game.num_types() {
            worst = worst.max(shortfall(game, h, t, &measure, tol, cfg)?.0);
        }
        closest = closest.min(worst);
        if worst <= tol {
            report.witnesses.push(Witness {
                n: Some(s),
                value: Some(worst),
                detail: format!("sample {s} certifies every played action: {measure:?}"),
                ..Witness::default()
            });
            report.margin("closest_gap", worst);
            return Ok(report);
        }
    }
    report.verdict = super::Verdict::Fail;
    report.margin("closest_gap", closest);
    report.note(format!(
        "none of {samples} random full-support measures makes every played action a best reply"
    ));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoPathCase {
    /// Both actions always pay the same.
    Indifferent,
    /// Both actions are used; the perturbation equalises their payoffs.
    Interior,
    /// One action is unused; the perturbation leans towards where the used one wins.
    Boundary { unused: String },
}

/// An ε-robust perfect profile near `h` with the perturbation that makes it one.
#[derive(Clone, Debug, Serialize)]
pub struct TwoPathConstruction {
    pub case: TwoPathCase,
    pub epsilon: f64,
    pub profile: RandomizedProfile,
    pub template: PerturbationTemplate,
    /// The tremble onto the unused action in the boundary case.
    pub epsilon_prime: Option<f64>,
}

const SEGMENT_POINTS: usize = 1000;

/// Builds the ε-perturbed profile and perturbation for an admissible Nash
/// equilibrium `h` of a two-action game with a common payoff.
pub fn two_path_construction(
    game: &LargeGame,
    h: &RandomizedProfile,
    epsilon: f64,
    cfg: &IntegrationConfig,
) -> Result<TwoPathConstruction> {
    check_profile_shape(game, h)?;
    if game.num_actions() != 2 {
        return Err(Error::arg(
            "the two-path construction needs exactly two actions",
        ));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::arg(format!("epsilon {epsilon} outside (0, 1/2)")));
    }
    let segment: Vec<ActionDistribution> = (0..=SEGMENT_POINTS)
        .map(|i| {
            let x = i as f64 / SEGMENT_POINTS as f64;
            ActionDistribution::normalized(vec![x, 1.0 - x])
        })
        .collect::<Result<_>>()?;
    for t in 1..game.num_types() {
        for p in &segment {
            if linf(&game.payoffs(t, p.weights()), &game.payoffs(0, p.weights())) > 1e-12 {
                return Err(Error::arg(
                    "the two-path construction needs a common payoff",
                ));
            }
        }
    }
    let d = |tau: &[f64]| game.payoff(0, 0, tau) - game.payoff(0, 1, tau);
    let eta = game.eta_payoffs(cfg)?;
    let d_eta = eta[0][0] - eta[0][1];
    let tau_star = game.societal_summary(h)?;
    let positive = segment
        .iter()
        .max_by(|a, b| d(a.weights()).total_cmp(&d(b.weights())));
    let negative = segment
        .iter()
        .min_by(|a, b| d(a.weights()).total_cmp(&d(b.weights())));
    let (Some(pos), Some(neg)) = (positive, negative) else {
        unreachable!("segment is nonempty")
    };
    let (d_pos, d_neg) = (d(pos.weights()), d(neg.weights()));
    if d_pos <= 1e-12 && d_neg >= -1e-12 {
        let uniform = ActionDistribution::uniform(2);
        let per_type = h
            .per_type()
            .iter()
            .map(|s| s.mix(&uniform, 1.0 - epsilon))
            .collect::<Result<Vec<_>>>()?;
        return Ok(TwoPathConstruction {
            case: TwoPathCase::Indifferent,
            epsilon,
            profile: RandomizedProfile::new(per_type)?,
            template: PerturbationTemplate::standard(epsilon)?,
            epsilon_prime: None,
        });
    }
    if tau_star.min_weight() > 0.0 {
        if d_pos <= 1e-12 || d_neg >= -1e-12 {
            return Err(Error::arg(
                "both actions are used but one weakly dominates the other: the profile is not admissible",
            ));
        }
        // α d⁺ + β d⁻ + γ d_η = 0 with α + β + γ = 1 and α, β ≥ 0.
        let mut gamma: f64 = 0.5;
        let (alpha, beta) = loop {
            let alpha = (-gamma * d_eta - (1.0 - gamma) * d_neg) / (d_pos - d_neg);
            let beta = 1.0 - gamma - alpha;
            if alpha >= 0.0 && beta >= 0.0 {
                break (alpha, beta);
            }
            gamma *= 0.5;
            if gamma < 1e-12 {
                return Err(Error::Numerical(
                    "could not balance the perturbation".into(),
                ));
            }
        };
        let template = PerturbationTemplate::new(
            vec![
                (pos.clone(), epsilon * alpha),
                (neg.clone(), epsilon * beta),
            ],
            epsilon * gamma,
        )?;
        let per_type = h
            .per_type()
            .iter()
            .map(|s| s.mix(&tau_star, 1.0 - epsilon))
            .collect::<Result<Vec<_>>>()?;
        return Ok(TwoPathConstruction {
            case: TwoPathCase::Interior,
            epsilon,
            profile: RandomizedProfile::new(per_type)?,
            template,
            epsilon_prime: None,
        });
    }
    let used = if tau_star.get(0) > 0.0 { 0 } else { 1 };
    let unused = 1 - used;
    // Payoff advantage of the used action.
    let adv = |tau: &[f64]| if used == 0 { d(tau) } else { -d(tau) };
    let (tau3, adv3) = if used == 0 {
        (pos, d_pos)
    } else {
        (neg, -d_neg)
    };
    if adv3 <= 1e-12 {
        return Err(Error::arg(
            "the used action never beats the unused one: it is weakly dominated",
        ));
    }
    let adv_eta = if used == 0 { d_eta } else { -d_eta };
    let mut kappa: f64 = 0.5;
    let rho = loop {
        let rho = (1.0 - kappa) * adv3 + kappa * adv_eta;
        if rho > 0.0 {
            break rho;
        }
        kappa *= 0.5;
        if kappa < 1e-12 {
            return Err(Error::Numerical("could not tilt the perturbation".into()));
        }
    };
    let mut eps_prime = epsilon / 2.0;
    let trembled = loop {
        let mut w = vec![0.0; 2];
        w[used] = 1.0 - eps_prime;
        w[unused] = eps_prime;
        let tau = ActionDistribution::normalized(w)?;
        if adv(tau.weights()) > -epsilon / (1.0 - epsilon) * rho {
            break tau;
        }
        eps_prime *= 0.5;
        if eps_prime < 1e-300 {
            return Err(Error::Numerical(
                "no admissible tremble onto the unused action".into(),
            ));
        }
    };
    let template = PerturbationTemplate::new(
        vec![(tau3.clone(), epsilon * (1.0 - kappa))],
        epsilon * kappa,
    )?;
    Ok(TwoPathConstruction {
        case: TwoPathCase::Boundary {
            unused: game.actions()[unused].clone(),
        },
        epsilon,
        profile: RandomizedProfile::symmetric(game.num_types(), trembled),
        template,
        epsilon_prime: Some(eps_prime),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::check_eps_rpe;
    use crate::fixtures;

    fn sym(game: &LargeGame, w: &[f64]) -> RandomizedProfile {
        RandomizedProfile::symmetric(
            game.num_types(),
            ActionDistribution::new(w.to_vec()).unwrap(),
        )
    }

    #[test]
    fn three_path_certificates() {
        let g = fixtures::three_path_game();
        let cfg = IntegrationConfig::default();
        let h = sym(&g, &[5.0 / 6.0, 0.0, 1.0 / 6.0]);
        let fam = CertificateFamily::Vertex {
            vertex_weights: vec![0.5, 0.0, 0.0],
            uniform_share: 0.5,
        };
        let r = check_aggregate_robustness_certificate(&g, &h, &fam, 50, 1e-9, &cfg).unwrap();
        assert!(r.passed(), "{r:?}");
        let bad = sym(&g, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
        assert!(
            check_aggregate_robustness_certificate(&g, &bad, &fam, 50, 1e-9, &cfg)
                .unwrap()
                .failed()
        );
        let found = search_perturbation_certificate(&g, &h, &SearchOptions::default()).unwrap();
        assert!(found.passed(), "{found:?}");
    }

    #[test]
    fn own_action_family_needs_pure_strategies() {
        let g = fixtures::three_path_game();
        let h = sym(&g, &[5.0 / 6.0, 0.0, 1.0 / 6.0]);
        let cfg = IntegrationConfig::default();
        assert!(check_aggregate_robustness_certificate(
            &g,
            &h,
            &CertificateFamily::OwnAction,
            3,
            1e-9,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn two_path_cases() {
        let cfg = IntegrationConfig::default();
        let g = fixtures::modified_pigou_game();
        for eps in [0.1, 0.01] {
            let c = two_path_construction(&g, &sym(&g, &[1.0, 0.0]), eps, &cfg).unwrap();
            assert!(matches!(c.case, TwoPathCase::Boundary { .. }));
            let r = check_eps_rpe(&g, &c.profile, eps, &c.template, 1.0, 1e-12, &cfg).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        let sym_game = LargeGame::from_json_str(
            r#"{"actions":["a","b"],"types":[{"id":"d","mass":1,"payoff":{"a":"-tau(a)","b":"-tau(b)"}}]}"#,
        )
        .unwrap();
        let c = two_path_construction(&sym_game, &sym(&sym_game, &[0.5, 0.5]), 0.1, &cfg).unwrap();
        assert_eq!(c.case, TwoPathCase::Interior);
        let r = check_eps_rpe(&sym_game, &c.profile, 0.1, &c.template, 1.0, 1e-12, &cfg).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
