//! Whether computed ε-robust perfect equilibria approach a given profile.

use super::{check_eps_rpe, check_profile_shape, CheckReport, Witness};
use crate::error::{Error, Result};
use crate::game::{LargeGame, PerturbationTemplate, RandomizedProfile};
use crate::solvers::{fixed_point_eps_rpe, FixedPointOptions};

pub const DEFAULT_EPSILONS: [f64; 4] = [1.0 / 10.0, 1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0];

/// Allowed per-type distance between the ε-solution and `h`.
pub fn approach_radius(epsilon: f64) -> f64 {
    3.0 * epsilon + 0.01
}

/// Solves for an ε-robust perfect equilibrium under the standard perturbation
/// at every `ε`, verifies it, and requires it to lie within
/// [`approach_radius`] of `h`.
pub fn check_rpe_approach(
    game: &LargeGame,
    h: &RandomizedProfile,
    epsilons: &[f64],
    opts: &FixedPointOptions,
) -> Result<CheckReport> {
    check_profile_shape(game, h)?;
    if epsilons.is_empty() {
        return Err(Error::arg("need at least one epsilon"));
    }
    let mut report = CheckReport::new("eps_rpe");
    report.echo("epsilons", epsilons);
    report.echo("tie_tol", opts.tie_tol);
    report.echo("perturbation", "standard");
    let mut worst: f64 = 0.0;
    for &eps in epsilons {
        let template = PerturbationTemplate::standard(eps)?;
        let sol = fixed_point_eps_rpe(game, eps, &template, opts)?;
        let verify = check_eps_rpe(
            game,
            &sol.profile,
            eps,
            &template,
            1.0,
            opts.tie_tol,
            &opts.integration,
        )?;
        let distance = sol.profile.linf_distance(h);
        let radius = approach_radius(eps);
        report.margin(&format!("distance@{eps}"), distance);
        worst = worst.max(distance - radius);
        if !verify.passed() {
            report.fail(Witness {
                tau: Some(sol.summary.weights().to_vec()),
                value: Some(sol.support_gap),
                detail: format!("the solution at ε = {eps} does not verify as ε-robust perfect"),
                ..Witness::default()
            });
        } else if distance > radius {
            report.fail(Witness {
                tau: Some(sol.summary.weights().to_vec()),
                value: Some(distance),
                detail: format!("the ε-robust perfect equilibrium at ε = {eps} is {distance:.4} from the profile, radius {radius:.4}"),
                ..Witness::default()
            });
        }
    }
    report.margin("worst_excess_over_radius", worst);
    if report.failed() {
        report.note("one ε-robust perfect equilibrium is computed per ε; others may exist");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn three_path_equilibrium_is_approached() {
        let g = fixtures::three_path_game();
        let h = g.named_profile("g0").unwrap();
        let r =
            check_rpe_approach(&g, h, &DEFAULT_EPSILONS, &FixedPointOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn abc_profile_is_not_approached() {
        let g = fixtures::abc_game();
        let f = g.named_profile("f").unwrap();
        let r =
            check_rpe_approach(&g, f, &DEFAULT_EPSILONS, &FixedPointOptions::default()).unwrap();
        assert!(r.failed());
        assert_eq!(r.witnesses.len(), DEFAULT_EPSILONS.len());
    }
}
