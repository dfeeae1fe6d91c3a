use largegame::checkers::check_nash;
use largegame::fixtures;
use largegame::simplex::{simplex_grid, uniform_samples, GaussLegendre, TruncatedSimplex};
use largegame::simulate::{apportion, sample_realization};
use largegame::solvers::{solve_beckmann, verify_kkt, BeckmannOptions};
use largegame::{ActionDistribution, IntegrationConfig, PerturbationMeasure, RandomizedProfile};
use proptest::prelude::*;

/// Projection by bisection on the threshold, independent of the sort rule.
fn bisection_projection(x: &[f64], floor: f64) -> Vec<f64> {
    let total = |theta: f64| x.iter().map(|v| (v - theta).max(floor)).sum::<f64>();
    let (mut lo, mut hi) = (
        x.iter().copied().fold(f64::INFINITY, f64::min) - 2.0,
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0,
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x.iter().map(|v| (v - 0.5 * (lo + hi)).max(floor)).collect()
}

fn point(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, k)
}

proptest! {
    #[test]
    fn projection_matches_bisection_and_is_idempotent(x in point(4), floor in 0.0..0.24f64) {
        let set = TruncatedSimplex::new(4, floor).unwrap();
        let p = set.project(&x).unwrap();
        prop_assert!(set.contains(p.weights()));
        let oracle = bisection_projection(&x, floor);
        for (a, b) in p.weights().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", p, oracle);
        }
        let again = set.project(p.weights()).unwrap();
        prop_assert!(p.linf_distance(&again) < 1e-12);
    }

    #[test]
    fn projection_satisfies_the_variational_inequality(x in point(3), y in point(3), floor in 0.0..0.3f64) {
        let set = TruncatedSimplex::new(3, floor).unwrap();
        let p = set.project(&x).unwrap();
        let q = set.project(&y).unwrap();
        let inner: f64 = (0..3).map(|i| (x[i] - p.get(i)) * (q.get(i) - p.get(i))).sum();
        prop_assert!(inner <= 1e-9);
    }

    #[test]
    fn apportionment_is_within_one_of_the_exact_share(raw in prop::collection::vec(0.01..1.0f64, 1..6), n in 1usize..5000) {
        let total: f64 = raw.iter().sum();
        let masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let counts = apportion(&masses, n);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, m) in counts.iter().zip(&masses) {
            prop_assert!((*c as f64 - m * n as f64).abs() < 1.0);
        }
    }

    #[test]
    fn realizations_are_reproducible(seed in any::<u64>(), n in 1usize..500) {
        let game = fixtures::abc_game();
        let h = game.named_profile("f").unwrap().clone();
        let a = sample_realization(&game, &h, n, seed).unwrap();
        let b = sample_realization(&game, &h, n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.players.len(), n);
        // Pure types: every player of type t plays action t.
        prop_assert!(a.players.iter().all(|(t, k)| t == k));
    }

    #[test]
    fn beckmann_solutions_satisfy_kkt(eps in 0.001..0.3f64) {
        for net in [fixtures::three_path(), fixtures::braess(), fixtures::pigou()] {
            let sol = solve_beckmann(&net, eps, &BeckmannOptions::default()).unwrap();
            let r = verify_kkt(&net, eps, sol.flow.paths.weights(), 1e-6).unwrap();
            prop_assert!(r.passed(), "eps {}: {:?}", eps, r);
        }
    }

    #[test]
    fn three_path_solution_matches_the_closed_form(eps in 0.001..0.12f64) {
        let sol = solve_beckmann(&fixtures::three_path(), eps, &BeckmannOptions::default()).unwrap();
        let want = [
            (5.0 - 10.0 * eps + 6.0 * eps * eps) / (6.0 - 6.0 * eps),
            eps,
            (1.0 - 2.0 * eps) / (6.0 - 6.0 * eps),
        ];
        for (a, b) in sol.flow.paths.weights().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn beckmann_change_agrees_with_objective_difference(x in point(3), y in point(3), eps in 0.0..0.3f64) {
        let net = fixtures::three_path();
        let set = TruncatedSimplex::new(3, eps).unwrap();
        let (p, q) = (set.project(&x).unwrap(), set.project(&y).unwrap());
        let direct = net.beckmann_objective(q.weights(), eps).unwrap() - net.beckmann_objective(p.weights(), eps).unwrap();
        let change = net.beckmann_change(p.weights(), q.weights(), eps).unwrap();
        prop_assert!((direct - change).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials(c in prop::collection::vec(-3.0..3.0f64, 1..20), a in -1.0..0.0f64, b in 0.0..2.0f64) {
        let rule = GaussLegendre::default_rule();
        let f = |x: f64| c.iter().rev().fold(0.0, |acc, ci| acc * x + ci);
        let exact: f64 = c
            .iter()
            .enumerate()
            .map(|(i, ci)| ci * (b.powi(i as i32 + 1) - a.powi(i as i32 + 1)) / (i + 1) as f64)
            .sum();
        prop_assert!((rule.integrate(f, a, b) - exact).abs() < 1e-9 * (1.0 + exact.abs()));
    }
}

#[test]
fn nash_check_matches_the_closed_form_family() {
    let game = fixtures::three_path_game();
    for p in simplex_grid(3, 60).unwrap() {
        let h = RandomizedProfile::symmetric(1, p.clone());
        let expected = (p.get(2) - 1.0 / 6.0).abs() < 1e-9 && p.get(1) <= 0.5;
        assert_eq!(
            check_nash(&game, &h, 1e-9).unwrap().passed(),
            expected,
            "{p:?}"
        );
    }
}

#[test]
fn uniform_payoff_integrals_match_monte_carlo() {
    let game = fixtures::abc_game();
    let cfg = IntegrationConfig::default();
    let eta = game.eta_payoffs(&cfg).unwrap();
    let samples = uniform_samples(3, 200_000, 11).unwrap();
    for t in 0..game.num_types() {
        for k in 0..game.num_actions() {
            let mc = samples
                .iter()
                .map(|s| game.payoff(t, k, s.weights()))
                .sum::<f64>()
                / samples.len() as f64;
            assert!(
                (mc - eta[t][k]).abs() < 0.02,
                "type {t} action {k}: {mc} vs {}",
                eta[t][k]
            );
        }
    }
}

#[test]
fn standard_measure_averages_the_base_and_uniform_parts() {
    let game = fixtures::three_path_game();
    let tau = ActionDistribution::new(vec![5.0 / 6.0, 0.0, 1.0 / 6.0]).unwrap();
    let eps = 0.1;
    let m = PerturbationMeasure::standard(tau.clone(), eps).unwrap();
    let u = game
        .expected_payoffs(0, &m, &IntegrationConfig::default())
        .unwrap();
    // E[max(X, 1/2)] = 13/24 and E[X] = 1/3 for X ~ Beta(1, 2).
    let want = [
        -0.5,
        -(0.9 * 0.5 + 0.1 * 13.0 / 24.0),
        -(0.9 / 6.0 + 0.1 / 3.0) - 1.0 / 3.0,
    ];
    for (a, b) in u.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{u:?} vs {want:?}");
    }
}
