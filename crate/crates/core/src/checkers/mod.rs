//! Decision procedures for the equilibrium refinements: Nash, admissibility,
//! ε-robust perfection, aggregate robustness certificates and potentials.
//!
//! Every check returns a [`CheckReport`] carrying a verdict, witnesses,
//! numeric margins and an echo of the configuration that produced it.

mod admissible;
mod approach;
mod certificate;
mod lp;
mod potential;

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::{IntegrationConfig, LargeGame, PerturbationTemplate, RandomizedProfile};

pub use admissible::{check_admissible, dominance_grid, DEFAULT_ADMISSIBLE_TOL, DEFAULT_GRID};
pub use approach::{approach_radius, check_rpe_approach, DEFAULT_EPSILONS};
pub use certificate::{
    certificate_epsilon, check_aggregate_robustness_certificate, sample_perturbation_certificates,
    search_perturbation_certificate, two_path_construction, CertificateFamily, SearchOptions,
    TwoPathCase, TwoPathConstruction,
};
pub use potential::{check_potential, find_potential, PotentialSearch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One piece of evidence behind a verdict. Fields that do not apply are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other_action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub margins: BTreeMap<String, f64>,
    pub config: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub(crate) fn new(check: &str) -> Self {
        CheckReport {
            check: check.to_string(),
            verdict: Verdict::Pass,
            witnesses: Vec::new(),
            margins: BTreeMap::new(),
            config: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }

    pub(crate) fn margin(&mut self, key: &str, v: f64) {
        self.margins.insert(key.to_string(), v);
    }

    pub(crate) fn echo(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.config.insert(key.to_string(), v);
    }

    pub(crate) fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub(crate) fn fail(&mut self, w: Witness) {
        self.verdict = Verdict::Fail;
        self.witnesses.push(w);
    }

    pub(crate) fn inconclusive(&mut self, reason: impl Into<String>) {
        if self.verdict != Verdict::Fail {
            self.verdict = Verdict::Inconclusive;
        }
        self.notes.push(reason.into());
    }
}

fn check_profile_shape(game: &LargeGame, h: &RandomizedProfile) -> Result<()> {
    if h.num_types() != game.num_types() || h.num_actions() != game.num_actions() {
        return Err(Error::arg(format!(
            "profile covers {} types x {} actions, game has {} x {}",
            h.num_types(),
            h.num_actions(),
            game.num_types(),
            game.num_actions()
        )));
    }
    Ok(())
}

/// Every action played with weight above `tol` must be a best reply to the
/// summary the profile induces.
pub fn check_nash(game: &LargeGame, h: &RandomizedProfile, tol: f64) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    let mut report = CheckReport::new("nash");
    report.echo("tol", tol);
    let tau = game.societal_summary(h)?;
    report.echo("summary", tau.weights());
    let mut weighted_regret = 0.0;
    let mut max_gap: f64 = 0.0;
    for (t, ty) in game.types().iter().enumerate() {
        let u = game.payoffs(t, tau.weights());
        let (best_action, best) =
            u.iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                );
        let played: f64 = h.get(t).weights().iter().zip(&u).map(|(w, v)| w * v).sum();
        weighted_regret += ty.mass * (best - played);
        for (a, &w) in h.get(t).weights().iter().enumerate() {
            if w <= tol {
                continue;
            }
            let gap = best - u[a];
            max_gap = max_gap.max(gap);
            if gap > tol {
                report.fail(Witness {
                    type_id: Some(ty.id.clone()),
                    action: Some(game.actions()[a].clone()),
                    other_action: Some(game.actions()[best_action].clone()),
                    tau: Some(tau.weights().to_vec()),
                    value: Some(gap),
                    detail: format!(
                        "u({}) = {} exceeds u({}) = {} for a played action",
                        game.actions()[best_action],
                        best,
                        game.actions()[a],
                        u[a]
                    ),
                    ..Witness::default()
                });
            }
        }
    }
    report.margin("mass_weighted_regret", weighted_regret);
    report.margin("max_support_gap", max_gap);
    Ok(report)
}

/// Checks that `h` is an ε-robust perfect equilibrium for the perturbation
/// `τ ↦ template.apply(τ)`: `h` has full support and the types on which
/// "strictly worse ⇒ weight at most ε" holds carry at least `rational_mass`.
pub fn check_eps_rpe(
    game: &LargeGame,
    h: &RandomizedProfile,
    epsilon: f64,
    template: &PerturbationTemplate,
    rational_mass: f64,
    tol: f64,
    cfg: &IntegrationConfig,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::arg(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if !template.is_full_support() {
        return Err(Error::arg(
            "perturbation has no uniform component, so it is not full support",
        ));
    }
    if !(rational_mass > 1.0 - epsilon && rational_mass <= 1.0) {
        return Err(Error::arg(format!(
            "rational mass {rational_mass} outside (1 - epsilon, 1]"
        )));
    }
    let mut report = CheckReport::new("eps_rpe");
    report.echo("epsilon", epsilon);
    report.echo("template", template);
    report.echo("rational_mass", rational_mass);
    report.echo("tol", tol);
    report.echo("integration", cfg);
    if template.epsilon() > epsilon + 1e-15 {
        report.fail(Witness {
            value: Some(1.0 - template.epsilon()),
            detail: format!(
                "perturbation puts weight {} on the summary, below 1 - epsilon",
                1.0 - template.epsilon()
            ),
            ..Witness::default()
        });
    } else if template.epsilon() < epsilon - 1e-15 {
        report.note(format!(
            "perturbation keeps weight {} > 1 - epsilon on the summary",
            1.0 - template.epsilon()
        ));
    }
    for (t, ty) in game.types().iter().enumerate() {
        let dist = h.get(t);
        if dist.min_weight() <= 0.0 {
            let a = (0..dist.len()).find(|&a| dist.get(a) <= 0.0).unwrap_or(0);
            report.fail(Witness {
                type_id: Some(ty.id.clone()),
                action: Some(game.actions()[a].clone()),
                detail: "strategy is not full support".into(),
                ..Witness::default()
            });
        }
    }
    let tau = game.societal_summary(h)?;
    let measure = template.apply(&tau)?;
    let mut good_mass = 0.0;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for (t, ty) in game.types().iter().enumerate() {
        let v = game.expected_payoffs(t, &measure, cfg)?;
        let best = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_action = v.iter().position(|&x| x == best).unwrap_or(0);
        let mut good = true;
        for (m, &w) in h.get(t).weights().iter().enumerate() {
            if best - v[m] <= tol {
                continue;
            }
            worst_excess = worst_excess.max(w - epsilon);
            if w > epsilon + 1e-12 {
                good = false;
                report.witnesses.push(Witness {
                    type_id: Some(ty.id.clone()),
                    action: Some(game.actions()[m].clone()),
                    other_action: Some(game.actions()[best_action].clone()),
                    tau: Some(tau.weights().to_vec()),
                    value: Some(w),
                    detail: format!(
                        "strictly worse by {} under the perturbed summary yet played with weight {w}",
                        best - v[m]
                    ),
                    ..Witness::default()
                });
            }
        }
        if good {
            good_mass += ty.mass;
        }
    }
    report.margin("rational_mass_found", good_mass);
    if worst_excess.is_finite() {
        report.margin("max_weight_minus_epsilon_on_worse_actions", worst_excess);
    }
    if good_mass < rational_mass - 1e-12 {
        report.verdict = Verdict::Fail;
        report.note(format!(
            "types satisfying the implication carry mass {good_mass} < {rational_mass}"
        ));
    }
    Ok(report)
}
