//! Large games with finitely many payoff types.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::{Expr, Scope, Var};
use crate::simplex::{
    beta_marginal_expectation, rng_from_seed, ActionDistribution, FlatDirichlet,
    DEFAULT_QUADRATURE_NODES, SUM_TOL,
};

/// How integrals against the uniform law on the simplex are evaluated.
///
/// Additive payoff terms that depend on a single coordinate sum are
/// integrated by Beta-marginal quadrature; remaining terms use Monte Carlo
/// with `mc_samples` draws from the seeded generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct IntegrationConfig {
    pub mc_samples: usize,
    pub seed: u64,
    pub quadrature_nodes: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            mc_samples: 200_000,
            seed: 1,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

/// Default tie tolerance for [`LargeGame::best_responses`].
pub const BEST_RESPONSE_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct PayoffType {
    pub id: String,
    pub mass: f64,
    /// One expression per action, in action order.
    pub payoffs: Vec<Expr>,
}

/// A per-type strategy profile `h(t)`, indexed in the game's type order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomizedProfile(Vec<ActionDistribution>);

impl RandomizedProfile {
    pub fn new(per_type: Vec<ActionDistribution>) -> Result<Self> {
        if per_type.is_empty() {
            return Err(Error::arg("profile has no types"));
        }
        let k = per_type[0].len();
        if per_type.iter().any(|d| d.len() != k) {
            return Err(Error::arg("profile distributions have different lengths"));
        }
        Ok(RandomizedProfile(per_type))
    }

    /// Every type plays `sigma`.
    pub fn symmetric(types: usize, sigma: ActionDistribution) -> Self {
        RandomizedProfile(vec![sigma; types])
    }

    pub fn get(&self, t: usize) -> &ActionDistribution {
        &self.0[t]
    }

    pub fn per_type(&self) -> &[ActionDistribution] {
        &self.0
    }

    pub fn num_types(&self) -> usize {
        self.0.len()
    }

    pub fn num_actions(&self) -> usize {
        self.0[0].len()
    }

    pub fn min_weight(&self) -> f64 {
        self.0
            .iter()
            .map(ActionDistribution::min_weight)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_full_support(&self) -> bool {
        self.min_weight() > 0.0
    }

    /// Largest per-type ∞-distance.
    pub fn linf_distance(&self, other: &RandomizedProfile) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.linf_distance(b))
            .fold(0.0, f64::max)
    }
}

/// A finite mixture `w₀ δ_τ + Σ w_j δ_{v_j} + w_u η` on the simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationMeasure {
    base: ActionDistribution,
    base_weight: f64,
    atoms: Vec<(ActionDistribution, f64)>,
    uniform_weight: f64,
}

impl PerturbationMeasure {
    pub fn new(
        base: ActionDistribution,
        base_weight: f64,
        atoms: Vec<(ActionDistribution, f64)>,
        uniform_weight: f64,
    ) -> Result<Self> {
        let k = base.len();
        if atoms.iter().any(|(v, _)| v.len() != k) {
            return Err(Error::arg("perturbation atoms live in a different simplex"));
        }
        let weights = std::iter::once(base_weight)
            .chain(atoms.iter().map(|(_, w)| *w))
            .chain(std::iter::once(uniform_weight));
        let mut total = 0.0;
        for w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::arg(format!("perturbation weight {w} is negative")));
            }
            total += w;
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::arg(format!(
                "perturbation weights sum to {total}, not 1"
            )));
        }
        Ok(PerturbationMeasure {
            base,
            base_weight,
            atoms,
            uniform_weight,
        })
    }

    pub fn dirac(tau: ActionDistribution) -> Self {
        PerturbationMeasure {
            base: tau,
            base_weight: 1.0,
            atoms: Vec::new(),
            uniform_weight: 0.0,
        }
    }

    /// `(1 - ε) δ_τ + ε η`.
    pub fn standard(tau: ActionDistribution, epsilon: f64) -> Result<Self> {
        Self::new(tau, 1.0 - epsilon, Vec::new(), epsilon)
    }

    pub fn base(&self) -> &ActionDistribution {
        &self.base
    }

    pub fn base_weight(&self) -> f64 {
        self.base_weight
    }

    pub fn atoms(&self) -> &[(ActionDistribution, f64)] {
        &self.atoms
    }

    pub fn uniform_weight(&self) -> f64 {
        self.uniform_weight
    }

    /// `1 - w₀`.
    pub fn epsilon(&self) -> f64 {
        1.0 - self.base_weight
    }

    /// Full support on the simplex comes only from the uniform component.
    pub fn is_full_support(&self) -> bool {
        self.uniform_weight > 0.0
    }

    /// `alpha · self + (1 - alpha) · other`; the other base becomes an atom.
    pub fn mixture(&self, other: &PerturbationMeasure, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::arg("mixture weight outside [0, 1]"));
        }
        let mut atoms: Vec<(ActionDistribution, f64)> = self
            .atoms
            .iter()
            .map(|(v, w)| (v.clone(), alpha * w))
            .collect();
        atoms.push((other.base.clone(), (1.0 - alpha) * other.base_weight));
        atoms.extend(
            other
                .atoms
                .iter()
                .map(|(v, w)| (v.clone(), (1.0 - alpha) * w)),
        );
        let base_weight = alpha * self.base_weight;
        let uniform_weight = alpha * self.uniform_weight + (1.0 - alpha) * other.uniform_weight;
        // Re-absorb rounding so the weights sum to one exactly.
        let total: f64 = base_weight + uniform_weight + atoms.iter().map(|(_, w)| w).sum::<f64>();
        let base_weight = base_weight + (1.0 - total);
        Self::new(
            self.base.clone(),
            base_weight.max(0.0),
            atoms,
            uniform_weight,
        )
    }
}

/// A perturbation rule `τ ↦ (1 - ε) δ_τ + Σ w_j δ_{v_j} + w_u η` with fixed
/// atoms, weights and `ε = Σ w_j + w_u`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationTemplate {
    atoms: Vec<(ActionDistribution, f64)>,
    uniform_weight: f64,
}

impl PerturbationTemplate {
    pub fn new(atoms: Vec<(ActionDistribution, f64)>, uniform_weight: f64) -> Result<Self> {
        if atoms.iter().any(|(_, w)| !(*w >= 0.0)) || !(uniform_weight >= 0.0) {
            return Err(Error::arg("template weights must be nonnegative"));
        }
        let t = PerturbationTemplate {
            atoms,
            uniform_weight,
        };
        if t.epsilon() >= 1.0 {
            return Err(Error::arg("template leaves no weight on the summary"));
        }
        Ok(t)
    }

    /// `(1 - ε) δ_τ + ε η`.
    pub fn standard(epsilon: f64) -> Result<Self> {
        Self::new(Vec::new(), epsilon)
    }

    /// `(1 - ε) δ_τ + ε Σ_k w_k δ_{e_k} + ε w_u η` over the simplex vertices.
    pub fn vertices(epsilon: f64, vertex_weights: &[f64], uniform_share: f64) -> Result<Self> {
        let k = vertex_weights.len();
        let atoms = vertex_weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (ActionDistribution::vertex(k, i), epsilon * w))
            .collect();
        Self::new(atoms, epsilon * uniform_share)
    }

    pub fn epsilon(&self) -> f64 {
        self.uniform_weight + self.atoms.iter().map(|(_, w)| w).sum::<f64>()
    }

    pub fn uniform_weight(&self) -> f64 {
        self.uniform_weight
    }

    pub fn atoms(&self) -> &[(ActionDistribution, f64)] {
        &self.atoms
    }

    pub fn is_full_support(&self) -> bool {
        self.uniform_weight > 0.0
    }

    pub fn apply(&self, tau: &ActionDistribution) -> Result<PerturbationMeasure> {
        PerturbationMeasure::new(
            tau.clone(),
            1.0 - self.epsilon(),
            self.atoms.clone(),
            self.uniform_weight,
        )
    }
}

type EtaTable = Arc<Vec<Vec<f64>>>;

/// A large game: a common action list and finitely many payoff types.
#[derive(Debug)]
pub struct LargeGame {
    actions: Vec<String>,
    types: Vec<PayoffType>,
    named_profiles: BTreeMap<String, RandomizedProfile>,
    eta_cache: Mutex<HashMap<IntegrationConfig, EtaTable>>,
}

impl Clone for LargeGame {
    fn clone(&self) -> Self {
        LargeGame {
            actions: self.actions.clone(),
            types: self.types.clone(),
            named_profiles: self.named_profiles.clone(),
            eta_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl LargeGame {
    pub fn new(actions: Vec<String>, types: Vec<PayoffType>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Model("a game needs at least one action".into()));
        }
        for (i, a) in actions.iter().enumerate() {
            if a.is_empty() || actions[..i].contains(a) {
                return Err(Error::Model(format!(
                    "action name `{a}` is empty or repeated"
                )));
            }
        }
        if types.is_empty() {
            return Err(Error::Model("a game needs at least one payoff type".into()));
        }
        let mut total = 0.0;
        for (i, t) in types.iter().enumerate() {
            if types[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::Model(format!("type id `{}` is repeated", t.id)));
            }
            if !(t.mass > 0.0 && t.mass <= 1.0) {
                return Err(Error::Model(format!(
                    "type `{}` has mass {} outside (0, 1]",
                    t.id, t.mass
                )));
            }
            if t.payoffs.len() != actions.len() {
                return Err(Error::Model(format!(
                    "type `{}` defines {} payoffs for {} actions",
                    t.id,
                    t.payoffs.len(),
                    actions.len()
                )));
            }
            total += t.mass;
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Model(format!("type masses sum to {total}, not 1")));
        }
        Ok(LargeGame {
            actions,
            types,
            named_profiles: BTreeMap::new(),
            eta_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Parses the JSON game format.
    ///
    /// ```json
    /// { "actions": ["a", "b"],
    ///   "types": [ { "id": "t", "mass": 1, "payoff": { "a": "-1/2", "b": "-max(tau(b), 1/2)" } } ],
    ///   "named_profiles": { "g0": [1, 0] } }
    /// ```
    pub fn from_json_str(src: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(src)?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::parse("game", "top level must be an object"))?;
        let actions: Vec<String> = obj
            .get("actions")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("game.actions", "missing or not an array"))?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(format!("game.actions[{i}]"), "not a string"))
            })
            .collect::<Result<_>>()?;
        let raw_types = obj
            .get("types")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("game.types", "missing or not an array"))?;
        let mut types = Vec::with_capacity(raw_types.len());
        for (i, t) in raw_types.iter().enumerate() {
            let ctx = format!("game.types[{i}]");
            let id = t
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(format!("{ctx}.id"), "missing or not a string"))?
                .to_string();
            let mass = parse_number(
                t.get("mass")
                    .ok_or_else(|| Error::parse(format!("{ctx}.mass"), "missing"))?,
                &format!("{ctx}.mass"),
            )?;
            let payoff = t
                .get("payoff")
                .and_then(Value::as_object)
                .ok_or_else(|| Error::parse(format!("{ctx}.payoff"), "missing or not an object"))?;
            for key in payoff.keys() {
                if !actions.contains(key) {
                    return Err(Error::parse(
                        format!("{ctx}.payoff"),
                        format!("unknown action `{key}`"),
                    ));
                }
            }
            let payoffs = actions
                .iter()
                .map(|a| {
                    let field = format!("{ctx}.payoff.{a}");
                    let src = payoff
                        .get(a)
                        .ok_or_else(|| Error::parse(&field, "missing payoff for action"))?;
                    let text = match src {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        _ => return Err(Error::parse(&field, "expected an expression string")),
                    };
                    Expr::parse(&text, Scope::Game(&actions)).map_err(|e| match e {
                        Error::Parse { message, .. } => Error::parse(field, message),
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            types.push(PayoffType { id, mass, payoffs });
        }
        let mut game = LargeGame::new(actions, types)?;
        if let Some(named) = obj.get("named_profiles") {
            let named = named
                .as_object()
                .ok_or_else(|| Error::parse("game.named_profiles", "not an object"))?;
            for (name, v) in named {
                let profile = game.profile_from_value(v, &format!("game.named_profiles.{name}"))?;
                game.named_profiles.insert(name.clone(), profile);
            }
        }
        Ok(game)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| with_file_context(e, path))
    }

    /// Reads `{ "profiles": { type-id: [weights] } }`.
    pub fn profile_from_json_str(&self, src: &str) -> Result<RandomizedProfile> {
        let root: Value = serde_json::from_str(src)?;
        let v = root
            .get("profiles")
            .ok_or_else(|| Error::parse("profile", "missing `profiles`"))?;
        self.profile_from_value(v, "profile.profiles")
    }

    /// A profile from either a weight array (every type) or a map type-id → weights.
    pub fn profile_from_value(&self, v: &Value, ctx: &str) -> Result<RandomizedProfile> {
        let k = self.num_actions();
        let dist = |v: &Value, ctx: &str| -> Result<ActionDistribution> {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::parse(ctx, "expected an array of weights"))?;
            if arr.len() != k {
                return Err(Error::parse(
                    ctx,
                    format!("expected {k} weights, got {}", arr.len()),
                ));
            }
            let w = arr
                .iter()
                .enumerate()
                .map(|(i, x)| parse_number(x, &format!("{ctx}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            ActionDistribution::new(w)
        };
        match v {
            Value::Array(_) => Ok(RandomizedProfile::symmetric(
                self.types.len(),
                dist(v, ctx)?,
            )),
            Value::Object(map) => {
                for key in map.keys() {
                    self.type_index(key)?;
                }
                let per_type = self
                    .types
                    .iter()
                    .map(|t| {
                        let field = format!("{ctx}.{}", t.id);
                        let entry = map
                            .get(&t.id)
                            .ok_or_else(|| Error::parse(&field, "missing distribution for type"))?;
                        dist(entry, &field)
                    })
                    .collect::<Result<Vec<_>>>()?;
                RandomizedProfile::new(per_type)
            }
            _ => Err(Error::parse(ctx, "expected an array or an object")),
        }
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn types(&self) -> &[PayoffType] {
        &self.types
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn named_profiles(&self) -> &BTreeMap<String, RandomizedProfile> {
        &self.named_profiles
    }

    pub fn named_profile(&self, name: &str) -> Result<&RandomizedProfile> {
        self.named_profiles.get(name).ok_or_else(|| Error::Lookup {
            kind: "profile",
            name: name.to_string(),
        })
    }

    pub fn add_named_profile(&mut self, name: impl Into<String>, profile: RandomizedProfile) {
        self.named_profiles.insert(name.into(), profile);
    }

    pub fn type_index(&self, id: &str) -> Result<usize> {
        self.types
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::Lookup {
                kind: "type",
                name: id.to_string(),
            })
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Lookup {
                kind: "action",
                name: name.to_string(),
            })
    }

    /// Renders variables of this game as `tau(a)` or `(tau(a) + tau(b))`.
    pub fn var_name(&self, v: &Var) -> String {
        let parts: Vec<String> = v
            .indices()
            .iter()
            .map(|&i| format!("tau({})", self.actions[i]))
            .collect();
        if parts.len() == 1 {
            parts.into_iter().next().unwrap_or_default()
        } else {
            format!("({})", parts.join(" + "))
        }
    }

    /// `u_t(a, τ)` by name.
    pub fn eval_payoff(
        &self,
        type_id: &str,
        action: &str,
        tau: &ActionDistribution,
    ) -> Result<f64> {
        let t = self.type_index(type_id)?;
        let a = self.action_index(action)?;
        self.check_dim(tau)?;
        Ok(self.payoff(t, a, tau.weights()))
    }

    /// `u_t(a_k, τ)` by index.
    pub fn payoff(&self, t: usize, k: usize, tau: &[f64]) -> f64 {
        self.types[t].payoffs[k].eval(tau)
    }

    pub fn payoffs(&self, t: usize, tau: &[f64]) -> Vec<f64> {
        self.types[t].payoffs.iter().map(|e| e.eval(tau)).collect()
    }

    fn check_dim(&self, tau: &ActionDistribution) -> Result<()> {
        if tau.len() != self.num_actions() {
            return Err(Error::arg(format!(
                "summary has {} coordinates, game has {} actions",
                tau.len(),
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// `Σ_t mass_t · h(t)`.
    pub fn societal_summary(&self, h: &RandomizedProfile) -> Result<ActionDistribution> {
        if h.num_types() != self.num_types() || h.num_actions() != self.num_actions() {
            return Err(Error::arg(format!(
                "profile covers {} types x {} actions, game has {} x {}",
                h.num_types(),
                h.num_actions(),
                self.num_types(),
                self.num_actions()
            )));
        }
        let mut tau = vec![0.0; self.num_actions()];
        for (t, ty) in self.types.iter().enumerate() {
            for (slot, w) in tau.iter_mut().zip(h.get(t).weights()) {
                *slot += ty.mass * w;
            }
        }
        ActionDistribution::normalized(tau)
    }

    /// `∫_Δ u_t(a_k, ·) dη` for every type and action, cached per config.
    pub fn eta_payoffs(&self, cfg: &IntegrationConfig) -> Result<EtaTable> {
        if let Some(t) = self.eta_cache.lock().expect("cache lock").get(cfg) {
            return Ok(t.clone());
        }
        let table = Arc::new(self.compute_eta_table(cfg)?);
        self.eta_cache
            .lock()
            .expect("cache lock")
            .insert(*cfg, table.clone());
        Ok(table)
    }

    fn compute_eta_table(&self, cfg: &IntegrationConfig) -> Result<Vec<Vec<f64>>> {
        let k = self.num_actions();
        let mut table = vec![vec![0.0; k]; self.num_types()];
        let mut mc_terms: Vec<(usize, usize, f64, Expr)> = Vec::new();
        for (t, ty) in self.types.iter().enumerate() {
            for (a, expr) in ty.payoffs.iter().enumerate() {
                for (coef, term) in expr.additive_terms() {
                    let vars = term.vars();
                    let value = match vars.len() {
                        0 => term.eval(&[]),
                        1 => {
                            let size = vars.iter().next().map(|v| v.indices().len()).unwrap_or(0);
                            if size >= k {
                                term.eval_scalar(1.0)
                            } else {
                                beta_marginal_expectation(
                                    |x| term.eval_scalar(x),
                                    size,
                                    k,
                                    cfg.quadrature_nodes,
                                    &term.scalar_kinks(),
                                )?
                            }
                        }
                        _ => {
                            mc_terms.push((t, a, coef, term));
                            continue;
                        }
                    };
                    table[t][a] += coef * value;
                }
            }
        }
        if !mc_terms.is_empty() {
            if cfg.mc_samples == 0 {
                return Err(Error::arg(
                    "Monte Carlo integration needs at least one sample",
                ));
            }
            let dirichlet = FlatDirichlet::new(k)?;
            let mut rng = rng_from_seed(cfg.seed);
            let mut sums = vec![0.0; mc_terms.len()];
            let mut point = vec![0.0; k];
            for _ in 0..cfg.mc_samples {
                dirichlet.sample_into(&mut rng, &mut point);
                for (s, (_, _, _, term)) in sums.iter_mut().zip(&mc_terms) {
                    *s += term.eval(&point);
                }
            }
            for (s, (t, a, coef, _)) in sums.iter().zip(&mc_terms) {
                table[*t][*a] += coef * s / cfg.mc_samples as f64;
            }
        }
        Ok(table)
    }

    /// `∫ u_t(a_k, τ') dτ̂(τ')` for every action.
    pub fn expected_payoffs(
        &self,
        t: usize,
        measure: &PerturbationMeasure,
        cfg: &IntegrationConfig,
    ) -> Result<Vec<f64>> {
        self.check_dim(measure.base())?;
        let eta = if measure.uniform_weight() > 0.0 {
            Some(self.eta_payoffs(cfg)?)
        } else {
            None
        };
        let ty = &self.types[t];
        Ok((0..self.num_actions())
            .map(|a| {
                let expr = &ty.payoffs[a];
                let mut v = measure.base_weight() * expr.eval(measure.base().weights());
                for (atom, w) in measure.atoms() {
                    v += w * expr.eval(atom.weights());
                }
                if let Some(eta) = &eta {
                    v += measure.uniform_weight() * eta[t][a];
                }
                v
            })
            .collect())
    }

    /// Expected payoff of one action by name.
    pub fn expected_payoff(
        &self,
        type_id: &str,
        action: &str,
        measure: &PerturbationMeasure,
        cfg: &IntegrationConfig,
    ) -> Result<f64> {
        let t = self.type_index(type_id)?;
        let a = self.action_index(action)?;
        Ok(self.expected_payoffs(t, measure, cfg)?[a])
    }

    /// Actions whose expected payoff is within `tol` of the best.
    pub fn best_responses(
        &self,
        t: usize,
        measure: &PerturbationMeasure,
        tol: f64,
        cfg: &IntegrationConfig,
    ) -> Result<Vec<usize>> {
        if !(tol >= 0.0) {
            return Err(Error::arg("best-response tolerance must be nonnegative"));
        }
        let v = self.expected_payoffs(t, measure, cfg)?;
        Ok(argmax_set(&v, tol))
    }
}

pub(crate) fn argmax_set(values: &[f64], tol: f64) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len())
        .filter(|&i| values[i] >= best - tol)
        .collect()
}

pub(crate) fn with_file_context(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{}: {context}", path.display()),
            message,
        },
        Error::Json(j) => Error::Parse {
            context: path.display().to_string(),
            message: j.to_string(),
        },
        other => other,
    }
}

/// A JSON number, or a string holding a constant expression such as `"1/3"`.
pub fn parse_number(v: &Value, ctx: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::parse(ctx, "number out of range")),
        Value::String(s) => {
            let e = Expr::parse(s, Scope::Game(&[])).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(ctx, message),
                other => other,
            })?;
            if !e.is_constant() {
                return Err(Error::parse(ctx, "expected a constant"));
            }
            Ok(e.eval(&[]))
        }
        _ => Err(Error::parse(ctx, "expected a number or a fraction string")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_PATH: &str = r#"{
        "actions": ["a", "b", "c"],
        "types": [ { "id": "driver", "mass": 1,
                     "payoff": { "a": "-1/2", "b": "-max(tau(b), 1/2)", "c": "-tau(c) - 1/3" } } ]
    }"#;

    fn d(w: &[f64]) -> ActionDistribution {
        ActionDistribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn parses_and_evaluates() {
        let g = LargeGame::from_json_str(THREE_PATH).unwrap();
        assert_eq!(
            g.eval_payoff("driver", "a", &d(&[0.2, 0.3, 0.5])).unwrap(),
            -0.5
        );
        assert_eq!(
            g.eval_payoff("driver", "b", &d(&[0.0, 1.0, 0.0])).unwrap(),
            -1.0
        );
        assert!(matches!(
            g.eval_payoff("nobody", "a", &d(&[1.0, 0.0, 0.0])),
            Err(Error::Lookup { kind: "type", .. })
        ));
        assert!(matches!(
            g.eval_payoff("driver", "z", &d(&[1.0, 0.0, 0.0])),
            Err(Error::Lookup { kind: "action", .. })
        ));
    }

    #[test]
    fn rejects_bad_games() {
        let bad_mass = THREE_PATH.replace("\"mass\": 1", "\"mass\": 0.5");
        assert!(matches!(
            LargeGame::from_json_str(&bad_mass),
            Err(Error::Model(_))
        ));
        let bad_expr = THREE_PATH.replace("-1/2", "-1/");
        match LargeGame::from_json_str(&bad_expr) {
            Err(Error::Parse { context, .. }) => assert!(context.contains("payoff.a"), "{context}"),
            other => panic!("{other:?}"),
        }
        assert!(LargeGame::from_json_str("{\"actions\": [\"a\"]").is_err());
    }

    #[test]
    fn fraction_masses() {
        let src = r#"{ "actions": ["a", "b"], "types": [
            {"id": "x", "mass": "1/3", "payoff": {"a": "0", "b": "tau(b)"}},
            {"id": "y", "mass": "2/3", "payoff": {"a": "0", "b": "tau(a)"}} ] }"#;
        let g = LargeGame::from_json_str(src).unwrap();
        assert!((g.types()[0].mass - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn profile_files() {
        let g = LargeGame::from_json_str(THREE_PATH).unwrap();
        let h = g
            .profile_from_json_str(r#"{"profiles": {"driver": ["5/6", 0, "1/6"]}}"#)
            .unwrap();
        let tau = g.societal_summary(&h).unwrap();
        assert!((tau.get(0) - 5.0 / 6.0).abs() < 1e-15);
        assert!(g
            .profile_from_json_str(r#"{"profiles": {"other": [1, 0, 0]}}"#)
            .is_err());
        assert!(g
            .profile_from_json_str(r#"{"profiles": {"driver": [0.5, 0.6, 0]}}"#)
            .is_err());
    }

    #[test]
    fn eta_integrals_by_quadrature() {
        let g = LargeGame::from_json_str(THREE_PATH).unwrap();
        let eta = g.eta_payoffs(&IntegrationConfig::default()).unwrap();
        assert_eq!(eta[0][0], -0.5);
        assert!((eta[0][1] + 13.0 / 24.0).abs() < 1e-13);
        assert!((eta[0][2] + 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn perturbation_measure_validation() {
        let tau = d(&[1.0 / 3.0; 3]);
        assert!(PerturbationMeasure::new(tau.clone(), 0.5, vec![], 0.4).is_err());
        assert!(PerturbationMeasure::new(tau.clone(), 1.1, vec![], -0.1).is_err());
        let m = PerturbationMeasure::standard(tau.clone(), 0.1).unwrap();
        assert!(m.is_full_support());
        assert!((m.epsilon() - 0.1).abs() < 1e-15);
        assert!(!PerturbationMeasure::dirac(tau).is_full_support());
    }
}
