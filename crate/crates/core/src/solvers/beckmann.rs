//! Perturbed Beckmann programs, KKT verification, ε → 0 limits and the price of anarchy.

use serde::Serialize;

use crate::congestion::{CongestionNetwork, Flow};
use crate::error::{Error, Result};
use crate::simplex::{linf, uniform_samples, ActionDistribution, TruncatedSimplex};

use super::pgd::{projected_gradient, Objective, PgOptions};
use super::{extrapolate_to_zero, EpsSchedule};

#[derive(Clone, Debug, Default, Serialize)]
pub struct BeckmannOptions {
    pub pg: PgOptions,
    /// Starting path flow; the uniform flow when absent.
    pub start: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BeckmannSolution {
    pub epsilon: f64,
    pub flow: Flow,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
    pub objective_trace: Vec<f64>,
}

fn minimise_beckmann(
    net: &CongestionNetwork,
    epsilon: f64,
    opts: &BeckmannOptions,
    solver: &'static str,
) -> Result<BeckmannSolution> {
    let k = net.num_paths();
    let set = TruncatedSimplex::new(k, epsilon)?;
    let start = match &opts.start {
        Some(s) => s.clone(),
        None => vec![1.0 / k as f64; k],
    };
    let f = |x: &[f64]| net.beckmann_objective(x, epsilon).unwrap_or(f64::INFINITY);
    let g = |x: &[f64]| {
        net.perturbed_path_costs(x, epsilon)
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    };
    let d = |x: &[f64], y: &[f64]| net.beckmann_change(x, y, epsilon).unwrap_or(f64::INFINITY);
    // Validate once up front so errors surface as errors rather than NaNs.
    net.beckmann_objective(&start, epsilon)?;
    let obj = Objective {
        value: &f,
        grad: &g,
        diff: Some(&d),
    };
    let out = projected_gradient(&set, &start, &obj, &opts.pg, solver)?;
    Ok(BeckmannSolution {
        epsilon,
        objective: out.value,
        iterations: out.iterations,
        residual: out.residual,
        objective_trace: out.trace,
        flow: net.flow(out.x)?,
    })
}

/// Minimises `Σ_e ∫₀^{τ(e)} C_e^ε` subject to `τ(p) ≥ ε` for every path.
pub fn solve_beckmann(
    net: &CongestionNetwork,
    epsilon: f64,
    opts: &BeckmannOptions,
) -> Result<BeckmannSolution> {
    let k = net.num_paths();
    if !(epsilon > 0.0) || epsilon * k as f64 >= 1.0 {
        return Err(Error::arg(format!(
            "epsilon {epsilon} outside (0, 1/{k}): the truncated simplex is empty or a single point"
        )));
    }
    minimise_beckmann(net, epsilon, opts, "solve_beckmann")
}

#[derive(Clone, Debug, Serialize)]
pub struct WardropReport {
    pub flow: Flow,
    pub path_costs: Vec<f64>,
    pub min_cost: f64,
    pub social_cost: f64,
    /// Paths carrying flow above `used_tol`.
    pub used: Vec<usize>,
    /// Paths whose cost is within `tol` of the minimum (used or not).
    pub tied: Vec<usize>,
    /// Largest cost excess of a used path over the minimum.
    pub max_used_excess: f64,
    pub is_wardrop: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the unperturbed Beckmann program (floor 0) and classifies paths.
pub fn solve_wardrop(
    net: &CongestionNetwork,
    opts: &BeckmannOptions,
    tol: f64,
) -> Result<WardropReport> {
    let sol = minimise_beckmann(net, 0.0, opts, "solve_wardrop")?;
    let tau = sol.flow.paths.weights().to_vec();
    let path_costs = net.path_costs(&tau)?;
    let min_cost = path_costs.iter().copied().fold(f64::INFINITY, f64::min);
    let used_tol = 1e-9;
    let used: Vec<usize> = (0..tau.len()).filter(|&p| tau[p] > used_tol).collect();
    let tied = (0..tau.len())
        .filter(|&p| path_costs[p] <= min_cost + tol)
        .collect();
    let max_used_excess = used
        .iter()
        .map(|&p| path_costs[p] - min_cost)
        .fold(0.0, f64::max);
    Ok(WardropReport {
        social_cost: net.social_cost(&tau)?,
        flow: sol.flow,
        min_cost,
        is_wardrop: max_used_excess <= tol,
        path_costs,
        used,
        tied,
        max_used_excess,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KktVerdict {
    Pass,
    Fail,
    /// Every path sits at the floor, which cannot happen for a feasible flow.
    Malformed,
}

#[derive(Clone, Debug, Serialize)]
pub struct KktReport {
    pub epsilon: f64,
    pub tol: f64,
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub perturbed_costs: Vec<f64>,
    pub interior: Vec<bool>,
    pub stationarity: Vec<f64>,
    pub complementarity: Vec<f64>,
    pub max_residual: f64,
    pub verdict: KktVerdict,
    pub note: Option<String>,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.verdict == KktVerdict::Pass
    }
}

/// Reconstructs the multipliers of the perturbed program at `tau` and checks
/// stationarity and complementary slackness.
pub fn verify_kkt(
    net: &CongestionNetwork,
    epsilon: f64,
    tau: &[f64],
    tol: f64,
) -> Result<KktReport> {
    let k = net.num_paths();
    let set = TruncatedSimplex::new(k, epsilon)?;
    if !set.contains(tau) {
        return Err(Error::arg(format!(
            "flow {tau:?} is not in the {epsilon}-truncated simplex"
        )));
    }
    let costs = net.perturbed_path_costs(tau, epsilon)?;
    let interior: Vec<bool> = tau.iter().map(|&t| t > epsilon + tol).collect();
    let Some(min_interior) = (0..k)
        .filter(|&p| interior[p])
        .map(|p| costs[p])
        .reduce(f64::min)
    else {
        return Ok(KktReport {
            epsilon,
            tol,
            lambda: f64::NAN,
            mu: vec![f64::NAN; k],
            perturbed_costs: costs,
            interior,
            stationarity: vec![f64::NAN; k],
            complementarity: vec![f64::NAN; k],
            max_residual: f64::INFINITY,
            verdict: KktVerdict::Malformed,
            note: Some(
                "no path above the floor: the flow would sum to |P|·ε < 1, a contradiction".into(),
            ),
        });
    };
    let lambda = -min_interior;
    let mu: Vec<f64> = costs.iter().map(|c| c + lambda).collect();
    let stationarity: Vec<f64> = (0..k)
        .map(|p| {
            if interior[p] {
                mu[p].abs()
            } else {
                (-mu[p]).max(0.0)
            }
        })
        .collect();
    let complementarity: Vec<f64> = (0..k)
        .map(|p| (mu[p].max(0.0) * (epsilon - tau[p])).abs())
        .collect();
    let max_residual = stationarity
        .iter()
        .chain(&complementarity)
        .copied()
        .fold(0.0, f64::max);
    Ok(KktReport {
        epsilon,
        tol,
        lambda,
        mu,
        perturbed_costs: costs,
        interior,
        stationarity,
        complementarity,
        verdict: if max_residual <= tol {
            KktVerdict::Pass
        } else {
            KktVerdict::Fail
        },
        max_residual,
        note: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    pub epsilon: f64,
    pub coords: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RpeLimit {
    /// Estimated ε → 0 limit of the trajectory.
    pub limit: ActionDistribution,
    /// The solution at the smallest ε.
    pub last: ActionDistribution,
    /// Whether `limit` came from extrapolation rather than the last iterate.
    pub extrapolated: bool,
    pub trajectory: Vec<TrajectoryPoint>,
    /// `‖τⁿ - τⁿ⁻¹‖∞` at the last step.
    pub cauchy_residual: f64,
    pub strictly_increasing: bool,
    /// Set when costs are strictly increasing: whether the final Cauchy residual is below the tolerance.
    pub trajectory_converged: Option<bool>,
}

/// Solves the perturbed program along `schedule` with warm starts and
/// estimates the limit flow.
///
/// The limit is the linear extrapolation to `ε = 0` through the last two
/// solutions when it agrees within `cauchy_tol` with the extrapolation
/// through the two before, and the last solution otherwise.
pub fn rpe_limit(
    net: &CongestionNetwork,
    schedule: &EpsSchedule,
    opts: &BeckmannOptions,
    kkt_tol: f64,
    cauchy_tol: f64,
) -> Result<RpeLimit> {
    schedule.check_floor(net.num_paths())?;
    let mut start = opts.start.clone();
    let mut trajectory = Vec::with_capacity(schedule.len());
    for &(n, eps) in schedule.entries() {
        let o = BeckmannOptions {
            pg: opts.pg,
            start: start.clone(),
        };
        let sol = solve_beckmann(net, eps, &o)?;
        let coords = sol.flow.paths.weights().to_vec();
        let kkt = verify_kkt(net, eps, &coords, kkt_tol)?;
        start = Some(coords.clone());
        trajectory.push(TrajectoryPoint {
            n,
            epsilon: eps,
            coords,
            objective: sol.objective,
            kkt_residual: kkt.max_residual,
        });
    }
    let m = trajectory.len();
    let last = ActionDistribution::normalized(trajectory[m - 1].coords.clone())?;
    let cauchy_residual = if m >= 2 {
        linf(&trajectory[m - 1].coords, &trajectory[m - 2].coords)
    } else {
        f64::INFINITY
    };
    let (limit, extrapolated) = if m >= 3 {
        let p = |i: usize| (&trajectory[i].coords, trajectory[i].epsilon);
        let (x1, e1) = p(m - 2);
        let (x2, e2) = p(m - 1);
        let (x0, e0) = p(m - 3);
        let new = extrapolate_to_zero(e1, x1, e2, x2);
        let old = extrapolate_to_zero(e0, x0, e1, x1);
        let lim = TruncatedSimplex::new(net.num_paths(), 0.0)?.project(&new)?;
        if linf(&new, &old) <= cauchy_tol && linf(&new, lim.weights()) <= cauchy_tol {
            (lim, true)
        } else {
            (last.clone(), false)
        }
    } else {
        (last.clone(), false)
    };
    let strictly_increasing = net.strictly_increasing();
    Ok(RpeLimit {
        limit,
        last,
        extrapolated,
        trajectory,
        cauchy_residual,
        strictly_increasing,
        trajectory_converged: strictly_increasing.then_some(cauchy_residual <= cauchy_tol),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PoaReport {
    pub equilibrium_flow: ActionDistribution,
    pub equilibrium_cost: f64,
    pub optimum_flow: ActionDistribution,
    pub optimum_cost: f64,
    /// `+∞` when the optimum is zero and the equilibrium is not.
    pub price_of_anarchy: f64,
    /// Whether every `x · C_e(x)` passed the convexity test.
    pub convex: bool,
    pub starts: usize,
    /// Set when the social-cost descent stopped before its tolerance.
    pub note: Option<String>,
}

/// Equilibrium social cost over the minimum social cost.
///
/// Every Wardrop flow has the same social cost, so the equilibrium side uses
/// the floor-0 Beckmann minimiser. The optimum is found by projected gradient
/// on `Σ_e τ(e) C_e(τ(e))`, from several starts when the per-edge convexity
/// test fails.
pub fn price_of_anarchy(
    net: &CongestionNetwork,
    opts: &BeckmannOptions,
    seed: u64,
) -> Result<PoaReport> {
    let eq = solve_wardrop(net, opts, 1e-9)?;
    let k = net.num_paths();
    let set = TruncatedSimplex::new(k, 0.0)?;
    let f = |x: &[f64]| net.social_cost(x).unwrap_or(f64::INFINITY);
    let g = |x: &[f64]| marginal_path_costs(net, x);
    let convex = net.social_cost_convex();
    let mut starts: Vec<Vec<f64>> = vec![vec![1.0 / k as f64; k]];
    if !convex {
        starts.extend((0..k).map(|i| ActionDistribution::vertex(k, i).into_inner()));
        if k >= 2 {
            starts.extend(
                uniform_samples(k, 20, seed)?
                    .into_iter()
                    .map(|d| d.into_inner()),
            );
        }
    }
    let pg = PgOptions {
        tol: 1e-10,
        max_iters: 20_000,
        ..opts.pg
    };
    let mut best: Option<(ActionDistribution, f64)> = None;
    let mut note = None;
    for s in &starts {
        let obj = Objective {
            value: &f,
            grad: &g,
            diff: None,
        };
        let (x, v) = match projected_gradient(&set, s, &obj, &pg, "price_of_anarchy") {
            Ok(out) => (out.x, out.value),
            Err(Error::NotConverged { best, residual, .. }) => {
                note = Some(format!(
                    "social-cost descent stopped with residual {residual:e}; best value reported"
                ));
                let x = ActionDistribution::normalized(best)?;
                let v = f(x.weights());
                (x, v)
            }
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    let (optimum_flow, optimum_cost) = best.ok_or_else(|| Error::arg("no starting points"))?;
    let equilibrium_cost = eq.social_cost;
    let price_of_anarchy = if optimum_cost > 0.0 {
        equilibrium_cost / optimum_cost
    } else if equilibrium_cost > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(PoaReport {
        equilibrium_flow: eq.flow.paths,
        equilibrium_cost,
        optimum_flow,
        optimum_cost,
        price_of_anarchy,
        convex,
        starts: starts.len(),
        note,
    })
}

/// `∂/∂τ(p) Σ_e τ(e) C_e(τ(e))`, with `C_e'` by central differences.
fn marginal_path_costs(net: &CongestionNetwork, tau: &[f64]) -> Vec<f64> {
    let loads = net.edge_loads(tau);
    let h = 1e-7;
    let marginal: Vec<f64> = net
        .edges()
        .iter()
        .zip(&loads)
        .map(|(e, &x)| {
            let lo = (x - h).max(0.0);
            let hi = (x + h).min(1.0);
            let slope = (e.cost_at(hi) - e.cost_at(lo)) / (hi - lo);
            e.cost_at(x) + x * slope
        })
        .collect();
    net.paths()
        .iter()
        .map(|p| p.iter().map(|&e| marginal[e]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::Edge;

    fn parallel(costs: &[&str]) -> CongestionNetwork {
        let edges = costs
            .iter()
            .enumerate()
            .map(|(i, c)| Edge::new(((b'a' + i as u8) as char).to_string(), "o", "t", c).unwrap())
            .collect();
        CongestionNetwork::new(vec!["o".into(), "t".into()], edges, "o", "t", 100).unwrap()
    }

    fn closed_form(eps: f64) -> [f64; 3] {
        [
            (5.0 - 10.0 * eps + 6.0 * eps * eps) / (6.0 - 6.0 * eps),
            eps,
            (1.0 - 2.0 * eps) / (6.0 - 6.0 * eps),
        ]
    }

    #[test]
    fn three_path_closed_form() {
        let net = parallel(&["1/2", "max(x, 1/2)", "x + 1/3"]);
        for eps in [1.0 / 12.0, 1.0 / 60.0, 1.0 / 600.0] {
            let sol = solve_beckmann(&net, eps, &BeckmannOptions::default()).unwrap();
            assert!(linf(sol.flow.paths.weights(), &closed_form(eps)) < 1e-9);
            assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn rejects_degenerate_epsilon() {
        let net = parallel(&["1/2", "x"]);
        assert!(solve_beckmann(&net, 0.5, &BeckmannOptions::default()).is_err());
        assert!(solve_beckmann(&net, 0.0, &BeckmannOptions::default()).is_err());
    }

    #[test]
    fn kkt_verdicts() {
        let net = parallel(&["1/2", "max(x, 1/2)", "x + 1/3"]);
        let eps = 1.0 / 60.0;
        let uniform = [1.0 / 3.0; 3];
        let r = verify_kkt(&net, eps, &uniform, 1e-6).unwrap();
        assert_eq!(r.verdict, KktVerdict::Fail);
        let sym = parallel(&["x", "x"]);
        let r = verify_kkt(&sym, 0.1, &[0.5, 0.5], 1e-9).unwrap();
        assert!(r.passed());
        assert!(r.mu.iter().all(|m| m.abs() < 1e-15));
        let r = verify_kkt(&sym, 0.5, &[0.5, 0.5], 1e-9).unwrap();
        assert_eq!(r.verdict, KktVerdict::Malformed);
        assert!(verify_kkt(&net, eps, &[1.0, 0.0, 0.0], 1e-6).is_err());
    }

    #[test]
    fn wardrop_and_poa_on_pigou() {
        let net = parallel(&["x", "1"]);
        let w = solve_wardrop(&net, &BeckmannOptions::default(), 1e-9).unwrap();
        assert!((w.flow.paths.get(0) - 1.0).abs() < 1e-9);
        assert!((w.social_cost - 1.0).abs() < 1e-9);
        let p = price_of_anarchy(&net, &BeckmannOptions::default(), 0).unwrap();
        assert!((p.price_of_anarchy - 4.0 / 3.0).abs() < 1e-6);
        let flat = parallel(&["1", "2"]);
        let p = price_of_anarchy(&flat, &BeckmannOptions::default(), 0).unwrap();
        assert!((p.price_of_anarchy - 1.0).abs() < 1e-12);
    }
}
