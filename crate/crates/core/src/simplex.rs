//! Points of the unit simplex, truncated simplices, and integration against the
//! uniform (flat Dirichlet) law on the simplex.
//!
//! Random sampling uses [`ChaCha8Rng`] seeded through `seed_from_u64`, so a
//! seed reproduces the same sample stream on every platform.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `Σ w = 1` for [`ActionDistribution`].
pub const SUM_TOL: f64 = 1e-12;

/// Default Gauss–Legendre order.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// The portable generator behind every seeded computation in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `(base, a, b)` into a fresh seed (SplitMix64 finaliser).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A probability vector over `K` actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(ActionDistribution(weights))
    }

    /// Clamps round-off negatives (≥ -1e-9) to zero and rescales to sum 1.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        for w in weights.iter_mut() {
            if *w < 0.0 && *w >= -1e-9 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalise weights with sum {sum}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform distribution needs at least one action");
        ActionDistribution(vec![1.0 / k as f64; k])
    }

    /// The Dirac point mass on action `i`.
    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k);
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        ActionDistribution(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn min_weight(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_full_support(&self) -> bool {
        self.min_weight() > 0.0
    }

    /// Indices with weight strictly above `tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > tol).collect()
    }

    pub fn linf_distance(&self, other: &ActionDistribution) -> f64 {
        linf(&self.0, &other.0)
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &ActionDistribution, alpha: f64) -> Result<ActionDistribution> {
        if self.len() != other.len() {
            return Err(Error::arg("mixing distributions of different lengths"));
        }
        let w = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        ActionDistribution::normalized(w)
    }
}

impl TryFrom<Vec<f64>> for ActionDistribution {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        ActionDistribution::new(value)
    }
}

impl From<ActionDistribution> for Vec<f64> {
    fn from(value: ActionDistribution) -> Self {
        value.0
    }
}

impl AsRef<[f64]> for ActionDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `{ y : Σ y = 1, y_k ≥ floor }` in `dim` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncatedSimplex {
    dim: usize,
    floor: f64,
}

impl TruncatedSimplex {
    pub fn new(dim: usize, floor: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg(
                "truncated simplex needs at least one coordinate",
            ));
        }
        if !floor.is_finite() || floor < 0.0 || dim as f64 * floor > 1.0 + SUM_TOL {
            return Err(Error::arg(format!(
                "floor {floor} outside [0, 1/{dim}]: the truncated simplex is empty"
            )));
        }
        Ok(TruncatedSimplex { dim, floor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim
            && y.iter().all(|&v| v >= self.floor - 1e-12)
            && (y.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL
    }

    /// Euclidean projection of `x` onto the set.
    ///
    /// Substitutes `y = floor + z` and projects `z` onto the simplex of total
    /// mass `1 - dim·floor` by the sort-and-threshold rule.
    pub fn project(&self, x: &[f64]) -> Result<ActionDistribution> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "point has {} coordinates, simplex has {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("cannot project a non-finite point"));
        }
        let mass = (1.0 - self.dim as f64 * self.floor).max(0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v - self.floor).collect();
        let z = project_scaled_simplex(&shifted, mass);
        let y: Vec<f64> = z.iter().map(|v| v + self.floor).collect();
        ActionDistribution::normalized(y)
    }
}

/// Projection onto `{ z ≥ 0, Σ z = mass }`.
fn project_scaled_simplex(x: &[f64], mass: f64) -> Vec<f64> {
    if mass <= 0.0 {
        return vec![0.0; x.len()];
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Projects `x` onto `{ y : Σ y = 1, y ≥ floor }`.
pub fn project_truncated(x: &[f64], floor: f64) -> Result<ActionDistribution> {
    TruncatedSimplex::new(x.len(), floor)?.project(x)
}

/// The flat Dirichlet law on the `dim`-simplex, drawn by normalising
/// independent unit-rate exponentials.
#[derive(Clone, Copy, Debug)]
pub struct FlatDirichlet {
    dim: usize,
}

impl FlatDirichlet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("flat Dirichlet needs at least one coordinate"));
        }
        Ok(FlatDirichlet { dim })
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        loop {
            let mut total = 0.0;
            for slot in out.iter_mut() {
                let e: f64 = rng.sample(Exp1);
                *slot = e;
                total += e;
            }
            if total > 0.0 {
                out.iter_mut().for_each(|v| *v /= total);
                return;
            }
        }
    }
}

/// `n` independent uniform draws on the `k`-simplex, reproducible from `seed`.
pub fn uniform_samples(k: usize, n: usize, seed: u64) -> Result<Vec<ActionDistribution>> {
    if k < 2 {
        return Err(Error::arg(format!("uniform_samples needs K >= 2, got {k}")));
    }
    if n == 0 {
        return Err(Error::arg("uniform_samples needs n >= 1"));
    }
    let dirichlet = FlatDirichlet::new(k)?;
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; k];
    (0..n)
        .map(|_| {
            dirichlet.sample_into(&mut rng, &mut buf);
            ActionDistribution::normalized(buf.clone())
        })
        .collect()
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                deriv = dp;
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            if dp != 0.0 {
                deriv = dp;
            }
            let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Cached default-order rule.
    pub fn default_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(DEFAULT_QUADRATURE_NODES))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integrates over `[a, b]`, splitting at every breakpoint inside it.
    pub fn integrate_split<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        breakpoints: &[f64],
    ) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&p| p > a && p < b)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        let mut lo = a;
        for hi in cuts.into_iter().chain(std::iter::once(b)) {
            total += self.integrate(&f, lo, hi);
            lo = hi;
        }
        total
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `E[c(X)]` where `X` is the sum of `k` coordinates of a uniform point on the
/// `total`-simplex, i.e. `X ~ Beta(k, total - k)`.
///
/// The integral is evaluated with a Gauss–Legendre rule of order `nodes` on
/// each piece of `[0, 1]` delimited by `breakpoints`, so it is exact for
/// piecewise-polynomial `c` of moderate degree.
pub fn beta_marginal_expectation<F: Fn(f64) -> f64>(
    c: F,
    k: usize,
    total: usize,
    nodes: usize,
    breakpoints: &[f64],
) -> Result<f64> {
    if k == 0 || k >= total {
        return Err(Error::arg(format!(
            "coordinate-sum size k = {k} must satisfy 1 <= k < K = {total}; \
             when k = K the sum is identically 1"
        )));
    }
    if nodes == 0 {
        return Err(Error::arg("quadrature needs at least one node"));
    }
    let a = k as f64;
    let b = (total - k) as f64;
    let ln_beta = ln_factorial(k - 1) + ln_factorial(total - k - 1) - ln_factorial(total - 1);
    let density = |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta).exp();
    let integrand = |x: f64| c(x) * density(x);
    let value = if nodes == DEFAULT_QUADRATURE_NODES {
        GaussLegendre::default_rule().integrate_split(integrand, 0.0, 1.0, breakpoints)
    } else {
        GaussLegendre::new(nodes).integrate_split(integrand, 0.0, 1.0, breakpoints)
    };
    Ok(value)
}

/// All points of the `k`-simplex with coordinates in `{0, 1/m, ..., 1}`, in
/// lexicographic order of the integer numerators.
pub fn simplex_grid(k: usize, m: usize) -> Result<Vec<ActionDistribution>> {
    if k == 0 {
        return Err(Error::arg("simplex_grid needs K >= 1"));
    }
    if m == 0 {
        return Err(Error::arg("simplex_grid needs resolution m >= 1"));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; k];
    compositions(&mut counts, 0, m, &mut |c| {
        out.push(ActionDistribution(
            c.iter().map(|&v| v as f64 / m as f64).collect(),
        ));
    });
    Ok(out)
}

fn compositions(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    emit: &mut dyn FnMut(&[usize]),
) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        emit(counts);
        return;
    }
    for v in 0..=remaining {
        counts[pos] = v;
        compositions(counts, pos + 1, remaining - v, emit);
    }
}

/// Number of grid points returned by [`simplex_grid`]: `C(m + k - 1, k - 1)`.
pub fn simplex_grid_len(k: usize, m: usize) -> usize {
    let mut r: u128 = 1;
    for i in 0..(k - 1) {
        r = r * (m + k - 1 - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        linf(a, b) <= tol
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(ActionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ActionDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(ActionDistribution::new(vec![]).is_err());
        assert!(ActionDistribution::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn truncated_simplex_rejects_empty_sets() {
        assert!(TruncatedSimplex::new(3, 0.4).is_err());
        assert!(TruncatedSimplex::new(3, -0.1).is_err());
        assert!(TruncatedSimplex::new(3, 1.0 / 3.0).is_ok());
        assert!(project_truncated(&[1.0, 0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let x = [1.0 / 3.0; 3];
        let y = project_truncated(&x, 0.0).unwrap();
        assert!(close(y.weights(), &x, 1e-15));
    }

    #[test]
    fn projection_of_vertex_onto_floor() {
        // Brute force: minimise |y - x|^2 over a 1/2000 grid of the 0.1-truncated simplex.
        let x = [1.0, 0.0, 0.0];
        let floor = 0.1;
        let steps = 2000;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let y0 = floor + (1.0 - 3.0 * floor) * i as f64 / steps as f64;
                let y1 = floor + (1.0 - 3.0 * floor) * j as f64 / steps as f64;
                let y2 = 1.0 - y0 - y1;
                if y2 < floor - 1e-12 {
                    continue;
                }
                let d = (y0 - x[0]).powi(2) + (y1 - x[1]).powi(2) + (y2 - x[2]).powi(2);
                if d < best.0 {
                    best = (d, [y0, y1, y2]);
                }
            }
        }
        assert!(close(&best.1, &[0.8, 0.1, 0.1], 1e-3));
        let y = project_truncated(&x, floor).unwrap();
        assert!(close(y.weights(), &[0.8, 0.1, 0.1], 1e-14));
    }

    #[test]
    fn projection_is_shift_invariant() {
        let x = [0.9, 0.6, -0.5];
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.7).collect();
        let a = project_truncated(&x, 0.0).unwrap();
        let b = project_truncated(&shifted, 0.0).unwrap();
        assert!(close(a.weights(), b.weights(), 1e-12));
        assert!(close(a.weights(), &[0.65, 0.35, 0.0], 1e-12));
    }

    #[test]
    fn full_floor_collapses_to_a_point() {
        let y = project_truncated(&[5.0, -2.0, 0.3, 0.1], 0.25).unwrap();
        assert!(close(y.weights(), &[0.25; 4], 1e-15));
    }

    #[test]
    fn uniform_samples_are_deterministic() {
        let a = uniform_samples(3, 100, 42).unwrap();
        let b = uniform_samples(3, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = uniform_samples(3, 100, 43).unwrap();
        assert_ne!(a, c);
        assert!(uniform_samples(1, 10, 0).is_err());
        assert!(uniform_samples(3, 0, 0).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(64);
        let v = rule.integrate(|x| x.powi(20) - 3.0 * x.powi(7) + 1.0, 0.0, 2.0);
        let exact = 2f64.powi(21) / 21.0 - 3.0 * 2f64.powi(8) / 8.0 + 2.0;
        assert!((v - exact).abs() / exact.abs() < 1e-13);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-13);
        let small = GaussLegendre::new(5);
        assert!((small.integrate(|x| x.powi(9), -1.0, 1.0)).abs() < 1e-15);
        assert!((small.integrate(|x| x.powi(8), -1.0, 1.0) - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn beta_marginal_basic_values() {
        let mean = beta_marginal_expectation(|x| x, 1, 3, 64, &[]).unwrap();
        assert!((mean - 1.0 / 3.0).abs() < 1e-14);
        for (k, total) in [(1, 2), (2, 5), (3, 4), (7, 9)] {
            let v = beta_marginal_expectation(|_| 0.5, k, total, 64, &[]).unwrap();
            assert!((v - 0.5).abs() < 1e-13, "k={k} K={total}: {v}");
            let m = beta_marginal_expectation(|x| x, k, total, 64, &[]).unwrap();
            assert!((m - k as f64 / total as f64).abs() < 1e-13);
        }
        assert!(beta_marginal_expectation(|x| x, 3, 3, 64, &[]).is_err());
        assert!(beta_marginal_expectation(|x| x, 0, 3, 64, &[]).is_err());
    }

    #[test]
    fn beta_marginal_max_threshold_matches_analytic_integral() {
        // ∫₀¹ max(x, 1/2) · 2(1 - x) dx = 1/4 + 7/24 = 13/24.
        let v = beta_marginal_expectation(|x| x.max(0.5), 1, 3, 64, &[0.5]).unwrap();
        assert!((v - 13.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn grid_counts_and_members() {
        let g = simplex_grid(2, 2).unwrap();
        assert_eq!(
            g.iter().map(|p| p.weights().to_vec()).collect::<Vec<_>>(),
            vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]
        );
        assert_eq!(simplex_grid(3, 2).unwrap().len(), 6);
        let g = simplex_grid(3, 10).unwrap();
        assert_eq!(g.len(), 66);
        assert_eq!(simplex_grid_len(3, 10), 66);
        assert_eq!(simplex_grid_len(4, 10), 286);
        for p in &g {
            assert!(ActionDistribution::new(p.weights().to_vec()).is_ok());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, 1000, 0);
        let b = derive_seed(7, 1000, 1);
        let c = derive_seed(7, 10000, 0);
        assert!(a != b && a != c && b != c);
    }
}
