//! Single origin-destination nonatomic congestion networks.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::{Expr, Scope, Var};
use crate::game::{with_file_context, LargeGame, PayoffType};
use crate::simplex::{beta_marginal_expectation, ActionDistribution, GaussLegendre};

/// Default cap on the number of enumerated paths.
pub const DEFAULT_PATH_CAP: usize = 10_000;

/// Resolution of the load-time cost validation grid.
const COST_GRID: usize = 1000;

/// Slope below which a cost is not treated as strictly increasing.
const STRICT_SLOPE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub cost: Expr,
    kinks: Vec<f64>,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        cost: &str,
    ) -> Result<Self> {
        let id = id.into();
        let cost = Expr::parse(cost, Scope::Scalar).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(format!("edge `{id}` cost"), message),
            other => other,
        })?;
        let kinks = cost.scalar_kinks();
        Ok(Edge {
            id,
            from: from.into(),
            to: to.into(),
            cost,
            kinks,
        })
    }

    pub fn cost_at(&self, x: f64) -> f64 {
        self.cost.eval_scalar(x)
    }

    /// `∫₀^x C_e`, split at the cost's kinks.
    pub fn cost_integral(&self, x: f64) -> f64 {
        GaussLegendre::default_rule().integrate_split(|s| self.cost_at(s), 0.0, x, &self.kinks)
    }

    /// `∫_a^b C_e` (negative when `b < a`).
    pub fn cost_integral_between(&self, a: f64, b: f64) -> f64 {
        let rule = GaussLegendre::default_rule();
        if b >= a {
            rule.integrate_split(|s| self.cost_at(s), a, b, &self.kinks)
        } else {
            -rule.integrate_split(|s| self.cost_at(s), b, a, &self.kinks)
        }
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

/// Path flow together with the edge loads it induces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Flow {
    pub paths: ActionDistribution,
    pub edges: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CongestionNetwork {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    origin: String,
    destination: String,
    paths: Vec<Vec<usize>>,
    path_names: Vec<String>,
    /// For each edge, the paths that use it.
    edge_paths: Vec<Vec<usize>>,
    eta_costs: OnceLock<Vec<f64>>,
}

impl CongestionNetwork {
    pub fn new(
        nodes: Vec<String>,
        edges: Vec<Edge>,
        origin: impl Into<String>,
        destination: impl Into<String>,
        path_cap: usize,
    ) -> Result<Self> {
        let origin = origin.into();
        let destination = destination.into();
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].contains(n) {
                return Err(Error::Model(format!("node `{n}` is repeated")));
            }
        }
        for name in [&origin, &destination] {
            if !nodes.contains(name) {
                return Err(Error::Lookup {
                    kind: "node",
                    name: name.clone(),
                });
            }
        }
        if origin == destination {
            return Err(Error::Model("origin and destination coincide".into()));
        }
        for (i, e) in edges.iter().enumerate() {
            if edges[..i].iter().any(|o| o.id == e.id) {
                return Err(Error::Model(format!("edge id `{}` is repeated", e.id)));
            }
            for end in [&e.from, &e.to] {
                if !nodes.contains(end) {
                    return Err(Error::Lookup {
                        kind: "node",
                        name: end.clone(),
                    });
                }
            }
            validate_cost(e)?;
        }
        let paths = enumerate_simple_paths(&edges, &origin, &destination, path_cap)?;
        let path_names = paths
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&e| edges[e].id.as_str())
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect();
        let edge_paths = (0..edges.len())
            .map(|e| {
                (0..paths.len())
                    .filter(|&p| paths[p].contains(&e))
                    .collect()
            })
            .collect();
        Ok(CongestionNetwork {
            nodes,
            edges,
            origin,
            destination,
            paths,
            path_names,
            edge_paths,
            eta_costs: OnceLock::new(),
        })
    }

    /// Parses `{ "nodes", "edges": [ { "id", "from", "to", "cost" } ], "origin", "destination" }`.
    pub fn from_json_str(src: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(src)?;
        let str_field = |v: &Value, ctx: &str| -> Result<String> {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::parse(ctx, "missing or not a string"))
        };
        let nodes = root
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("network.nodes", "missing or not an array"))?
            .iter()
            .enumerate()
            .map(|(i, n)| str_field(n, &format!("network.nodes[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let edges = root
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("network.edges", "missing or not an array"))?
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let ctx = format!("network.edges[{i}]");
                let field =
                    |k: &str| str_field(e.get(k).unwrap_or(&Value::Null), &format!("{ctx}.{k}"));
                let cost = match e.get("cost") {
                    Some(Value::Number(n)) => n.to_string(),
                    Some(Value::String(s)) => s.clone(),
                    _ => {
                        return Err(Error::parse(
                            format!("{ctx}.cost"),
                            "expected an expression in `x`",
                        ))
                    }
                };
                Edge::new(field("id")?, field("from")?, field("to")?, &cost).map_err(
                    |err| match err {
                        Error::Parse { message, .. } => {
                            Error::parse(format!("{ctx}.cost"), message)
                        }
                        other => other,
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let origin = str_field(root.get("origin").unwrap_or(&Value::Null), "network.origin")?;
        let destination = str_field(
            root.get("destination").unwrap_or(&Value::Null),
            "network.destination",
        )?;
        CongestionNetwork::new(nodes, edges, origin, destination, DEFAULT_PATH_CAP)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| with_file_context(e, path))
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn destination(&self) -> &str {
        &self.destination
    }

    /// Paths as edge-index sequences, ordered lexicographically by edge ids.
    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    /// Path names: edge ids joined by `-`.
    pub fn path_names(&self) -> &[String] {
        &self.path_names
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn paths_through(&self, e: usize) -> &[usize] {
        &self.edge_paths[e]
    }

    pub fn path_index(&self, name: &str) -> Result<usize> {
        self.path_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::Lookup {
                kind: "path",
                name: name.to_string(),
            })
    }

    fn check_flow(&self, tau: &[f64]) -> Result<()> {
        if tau.len() != self.num_paths() {
            return Err(Error::arg(format!(
                "flow has {} coordinates, network has {} paths",
                tau.len(),
                self.num_paths()
            )));
        }
        Ok(())
    }

    /// `τ(e) = Σ_{p ∋ e} τ(p)`.
    pub fn edge_loads(&self, tau: &[f64]) -> Vec<f64> {
        self.edge_paths
            .iter()
            .map(|ps| ps.iter().map(|&p| tau[p]).sum::<f64>().clamp(0.0, 1.0))
            .collect()
    }

    pub fn flow(&self, tau: ActionDistribution) -> Result<Flow> {
        self.check_flow(tau.weights())?;
        let edges = self.edge_loads(tau.weights());
        Ok(Flow { paths: tau, edges })
    }

    /// `C_p(τ) = Σ_{e ∈ p} C_e(τ(e))`.
    pub fn path_cost(&self, p: usize, tau: &[f64]) -> Result<f64> {
        self.check_flow(tau)?;
        if p >= self.num_paths() {
            return Err(Error::arg(format!("path index {p} out of range")));
        }
        let loads = self.edge_loads(tau);
        Ok(self.paths[p]
            .iter()
            .map(|&e| self.edges[e].cost_at(loads[e]))
            .sum())
    }

    pub fn path_costs(&self, tau: &[f64]) -> Result<Vec<f64>> {
        self.check_flow(tau)?;
        let loads = self.edge_loads(tau);
        let edge_costs: Vec<f64> = self
            .edges
            .iter()
            .zip(&loads)
            .map(|(e, &x)| e.cost_at(x))
            .collect();
        Ok(self
            .paths
            .iter()
            .map(|p| p.iter().map(|&e| edge_costs[e]).sum())
            .collect())
    }

    /// `∫_Δ C_e(τ'(e)) dη(τ')` for each edge, with `η` uniform on path flows.
    pub fn eta_costs(&self) -> Result<&[f64]> {
        if let Some(v) = self.eta_costs.get() {
            return Ok(v);
        }
        let k_total = self.num_paths();
        let values = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let k = self.edge_paths[e].len();
                if k == 0 {
                    Ok(edge.cost_at(0.0))
                } else if k == k_total {
                    Ok(edge.cost_at(1.0))
                } else {
                    beta_marginal_expectation(
                        |x| edge.cost_at(x),
                        k,
                        k_total,
                        crate::simplex::DEFAULT_QUADRATURE_NODES,
                        edge.kinks(),
                    )
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.eta_costs.get_or_init(|| values))
    }

    fn check_epsilon(epsilon: f64) -> Result<()> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::arg(format!("epsilon {epsilon} outside [0, 1)")));
        }
        Ok(())
    }

    /// `C_e^ε(x) = (1 - ε) C_e(x) + ε ∫_Δ C_e(τ'(e)) dη(τ')`.
    pub fn perturbed_edge_cost(&self, e: usize, x: f64, epsilon: f64) -> Result<f64> {
        Self::check_epsilon(epsilon)?;
        let edge = self
            .edges
            .get(e)
            .ok_or_else(|| Error::arg(format!("edge index {e} out of range")))?;
        Ok((1.0 - epsilon) * edge.cost_at(x) + epsilon * self.eta_costs()?[e])
    }

    /// `Σ_{e ∈ p} C_e^ε(τ(e))` for every path.
    pub fn perturbed_path_costs(&self, tau: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        Self::check_epsilon(epsilon)?;
        self.check_flow(tau)?;
        let eta = self.eta_costs()?;
        let loads = self.edge_loads(tau);
        let edge_costs: Vec<f64> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| (1.0 - epsilon) * edge.cost_at(loads[e]) + epsilon * eta[e])
            .collect();
        Ok(self
            .paths
            .iter()
            .map(|p| p.iter().map(|&e| edge_costs[e]).sum())
            .collect())
    }

    /// `Σ_e ∫₀^{τ(e)} C_e^ε(x) dx`.
    pub fn beckmann_objective(&self, tau: &[f64], epsilon: f64) -> Result<f64> {
        Self::check_epsilon(epsilon)?;
        self.check_flow(tau)?;
        let eta = self.eta_costs()?;
        let loads = self.edge_loads(tau);
        Ok(self
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                (1.0 - epsilon) * edge.cost_integral(loads[e]) + epsilon * eta[e] * loads[e]
            })
            .sum())
    }

    /// `beckmann_objective(to) - beckmann_objective(from)`, integrated edge by
    /// edge between the two loads so small changes keep full relative precision.
    pub fn beckmann_change(&self, from: &[f64], to: &[f64], epsilon: f64) -> Result<f64> {
        Self::check_epsilon(epsilon)?;
        self.check_flow(from)?;
        self.check_flow(to)?;
        let eta = self.eta_costs()?;
        let (la, lb) = (self.edge_loads(from), self.edge_loads(to));
        Ok(self
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                (1.0 - epsilon) * edge.cost_integral_between(la[e], lb[e])
                    + epsilon * eta[e] * (lb[e] - la[e])
            })
            .sum())
    }

    /// `C(τ) = Σ_e C_e(τ(e)) τ(e)`.
    pub fn social_cost(&self, tau: &[f64]) -> Result<f64> {
        self.check_flow(tau)?;
        let loads = self.edge_loads(tau);
        Ok(self
            .edges
            .iter()
            .zip(&loads)
            .map(|(e, &x)| e.cost_at(x) * x)
            .sum())
    }

    /// Whether every edge cost has grid slope at least `1e-9` on `[0, 1]`.
    pub fn strictly_increasing(&self) -> bool {
        self.edges.iter().all(|e| {
            (0..COST_GRID).all(|i| {
                let x0 = i as f64 / COST_GRID as f64;
                let x1 = (i + 1) as f64 / COST_GRID as f64;
                (e.cost_at(x1) - e.cost_at(x0)) / (x1 - x0) >= STRICT_SLOPE
            })
        })
    }

    /// Whether `x · C_e(x)` passes a second-difference convexity test on every edge.
    pub fn social_cost_convex(&self) -> bool {
        self.edges.iter().all(|e| {
            let g = |x: f64| x * e.cost_at(x);
            (1..COST_GRID).all(|i| {
                let h = 1.0 / COST_GRID as f64;
                let x = i as f64 * h;
                g(x + h) - 2.0 * g(x) + g(x - h) >= -1e-9
            })
        })
    }

    /// The congestion game: one driver type with `u(p, τ) = -C_p(τ)`.
    pub fn as_large_game(&self) -> Result<LargeGame> {
        let payoffs = self
            .paths
            .iter()
            .map(|p| {
                let mut total: Option<Expr> = None;
                for &e in p {
                    let load = Var::sum_of(self.edge_paths[e].clone());
                    let c = self.edges[e]
                        .cost
                        .substitute(&|_| Expr::Var(load.clone()))?;
                    total = Some(match total {
                        None => c,
                        Some(t) => Expr::Add(Box::new(t), Box::new(c)),
                    });
                }
                let total = total.unwrap_or(Expr::Const(0.0));
                Ok(Expr::Neg(Box::new(total)))
            })
            .collect::<Result<Vec<_>>>()?;
        LargeGame::new(
            self.path_names.clone(),
            vec![PayoffType {
                id: "driver".into(),
                mass: 1.0,
                payoffs,
            }],
        )
    }

    /// The potential `P(p, τ) = -C_p(τ)` as one expression per path.
    pub fn path_cost_potential(&self) -> Result<Vec<Expr>> {
        let game = self.as_large_game()?;
        Ok(game.types()[0].payoffs.clone())
    }

    /// Per-edge summary for reports.
    pub fn describe(&self) -> BTreeMap<String, String> {
        self.edges
            .iter()
            .map(|e| (e.id.clone(), e.cost.render(&|_| "x".to_string())))
            .collect()
    }
}

fn validate_cost(e: &Edge) -> Result<()> {
    let mut prev = e.cost_at(0.0);
    for i in 0..=COST_GRID {
        let x = i as f64 / COST_GRID as f64;
        let c = e.cost_at(x);
        if !c.is_finite() || c < 0.0 {
            return Err(Error::Model(format!(
                "edge `{}`: cost {c} at x = {x} is negative or not finite",
                e.id
            )));
        }
        if c < prev - 1e-12 {
            return Err(Error::Model(format!(
                "edge `{}`: cost decreases near x = {x}",
                e.id
            )));
        }
        prev = c;
    }
    Ok(())
}

fn enumerate_simple_paths(
    edges: &[Edge],
    origin: &str,
    destination: &str,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut found = Vec::new();
    let mut stack = Vec::new();
    let mut visited = vec![origin.to_string()];
    dfs(
        edges,
        origin,
        destination,
        cap,
        &mut visited,
        &mut stack,
        &mut found,
    )?;
    if found.is_empty() {
        return Err(Error::Model(format!(
            "no path from `{origin}` to `{destination}`"
        )));
    }
    found.sort_by(|a: &Vec<usize>, b: &Vec<usize>| {
        let ka: Vec<&str> = a.iter().map(|&e| edges[e].id.as_str()).collect();
        let kb: Vec<&str> = b.iter().map(|&e| edges[e].id.as_str()).collect();
        ka.cmp(&kb)
    });
    Ok(found)
}

fn dfs(
    edges: &[Edge],
    at: &str,
    destination: &str,
    cap: usize,
    visited: &mut Vec<String>,
    stack: &mut Vec<usize>,
    found: &mut Vec<Vec<usize>>,
) -> Result<()> {
    if at == destination {
        if found.len() == cap {
            return Err(Error::Resource(format!(
                "more than {cap} origin-destination paths"
            )));
        }
        found.push(stack.clone());
        return Ok(());
    }
    for (i, e) in edges.iter().enumerate() {
        if e.from != at || visited.contains(&e.to) {
            continue;
        }
        visited.push(e.to.clone());
        stack.push(i);
        dfs(edges, &e.to, destination, cap, visited, stack, found)?;
        stack.pop();
        visited.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parallel(costs: &[(&str, &str)]) -> CongestionNetwork {
        let edges = costs
            .iter()
            .map(|(id, c)| Edge::new(*id, "o", "t", c).unwrap())
            .collect();
        CongestionNetwork::new(
            vec!["o".into(), "t".into()],
            edges,
            "o",
            "t",
            DEFAULT_PATH_CAP,
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_networks() {
        let nodes = vec!["o".to_string(), "t".to_string()];
        let dec = vec![Edge::new("a", "o", "t", "1 - x").unwrap()];
        assert!(matches!(
            CongestionNetwork::new(nodes.clone(), dec, "o", "t", 10),
            Err(Error::Model(_))
        ));
        let neg = vec![Edge::new("a", "o", "t", "x - 1").unwrap()];
        assert!(CongestionNetwork::new(nodes.clone(), neg, "o", "t", 10).is_err());
        let back = vec![Edge::new("a", "t", "o", "x").unwrap()];
        assert!(matches!(
            CongestionNetwork::new(nodes.clone(), back, "o", "t", 10),
            Err(Error::Model(_))
        ));
        let many = (0..5)
            .map(|i| Edge::new(format!("e{i}"), "o", "t", "x").unwrap())
            .collect();
        assert!(matches!(
            CongestionNetwork::new(nodes, many, "o", "t", 4),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn perturbed_costs_of_three_path() {
        let n = parallel(&[("a", "1/2"), ("b", "max(x, 1/2)"), ("c", "x + 1/3")]);
        let eps = 0.05;
        for x in [0.0, 0.3, 0.9] {
            assert!((n.perturbed_edge_cost(0, x, eps).unwrap() - 0.5).abs() < 1e-14);
            let c = n.perturbed_edge_cost(2, x, eps).unwrap();
            assert!((c - ((1.0 - eps) * x + (1.0 + eps) / 3.0)).abs() < 1e-13);
        }
        let eta = n.eta_costs().unwrap();
        assert!((eta[1] - 13.0 / 24.0).abs() < 1e-13);
    }

    #[test]
    fn beckmann_with_b_at_floor_matches_quadratic_in_c() {
        // With τ(b) = ε the a and c edges contribute (1-ε)/2 τc² - (1-2ε)/6 τc + (1-ε)/2.
        let n = parallel(&[("a", "1/2"), ("b", "max(x, 1/2)"), ("c", "x + 1/3")]);
        let eps = 1.0 / 60.0;
        let b_term = (1.0 - eps) * 0.5 * eps + eps * (13.0 / 24.0) * eps;
        for tc in [0.05, 0.1, 0.2, 0.4] {
            let tau = [1.0 - eps - tc, eps, tc];
            let closed =
                (1.0 - eps) / 2.0 * tc * tc - (1.0 - 2.0 * eps) / 6.0 * tc + (1.0 - eps) / 2.0;
            let got = n.beckmann_objective(&tau, eps).unwrap();
            assert!((got - (closed + b_term)).abs() < 1e-13, "{got} vs {closed}");
        }
    }

    #[test]
    fn social_cost_identity_on_braess() {
        let n = CongestionNetwork::new(
            ["o", "v", "w", "t"].iter().map(|s| s.to_string()).collect(),
            vec![
                Edge::new("e1", "o", "v", "x").unwrap(),
                Edge::new("e2", "o", "w", "1").unwrap(),
                Edge::new("e3", "v", "t", "1").unwrap(),
                Edge::new("e4", "w", "t", "x").unwrap(),
                Edge::new("e5", "v", "w", "0").unwrap(),
            ],
            "o",
            "t",
            DEFAULT_PATH_CAP,
        )
        .unwrap();
        assert_eq!(n.path_names(), &["e1-e3", "e1-e5-e4", "e2-e4"]);
        let tau = [0.2, 0.5, 0.3];
        let costs = n.path_costs(&tau).unwrap();
        let by_paths: f64 = tau.iter().zip(&costs).map(|(t, c)| t * c).sum();
        assert!((by_paths - n.social_cost(&tau).unwrap()).abs() < 1e-12);
        assert_eq!(n.path_cost(1, &[0.0, 1.0, 0.0]).unwrap(), 2.0);
        assert!(!n.strictly_increasing());
    }
}
