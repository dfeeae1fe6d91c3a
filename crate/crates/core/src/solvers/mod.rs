//! Equilibrium computation: perturbed Beckmann programs for congestion
//! networks and a fixed-point method for general large games.

mod beckmann;
mod fixed_point;
mod pgd;

use serde::Serialize;

use crate::error::{Error, Result};

pub use beckmann::{
    price_of_anarchy, rpe_limit, solve_beckmann, solve_wardrop, verify_kkt, BeckmannOptions,
    BeckmannSolution, KktReport, KktVerdict, PoaReport, RpeLimit, TrajectoryPoint, WardropReport,
};
pub use fixed_point::{
    fixed_point_eps_rpe, rpe_limit_game, FixedPointMethod, FixedPointOptions, FixedPointSolution,
    GameRpeLimit, GameRpeOptions, GameTrajectoryPoint, LimitConditions,
};
pub use pgd::{projected_gradient, Objective, PgOptions, PgOutcome};

/// A strictly decreasing sequence of positive trembles, each tagged with its index `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsSchedule {
    entries: Vec<(usize, f64)>,
}

impl EpsSchedule {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::arg("epsilon schedule is empty"));
        }
        if entries.iter().any(|(_, e)| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::arg("epsilon schedule entries must be positive"));
        }
        if entries.windows(2).any(|w| w[1].1 >= w[0].1) {
            return Err(Error::arg("epsilon schedule must be strictly decreasing"));
        }
        Ok(EpsSchedule { entries })
    }

    /// `ε_n = 1 / (6n)` for `n = n0..=n1`.
    pub fn harmonic(n0: usize, n1: usize) -> Result<Self> {
        if n0 == 0 || n1 < n0 {
            return Err(Error::arg(format!("bad schedule range {n0}..{n1}")));
        }
        Self::new((n0..=n1).map(|n| (n, 1.0 / (6.0 * n as f64))).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.entries[0].1
    }

    /// Rejects schedules whose first entry leaves the per-path floor infeasible.
    pub fn check_floor(&self, k: usize) -> Result<()> {
        if self.first() * k as f64 >= 1.0 {
            return Err(Error::arg(format!(
                "first epsilon {} is not below 1/{k}",
                self.first()
            )));
        }
        Ok(())
    }
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule::harmonic(1, 200).expect("default schedule is valid")
    }
}

/// Linear extrapolation to `ε = 0` through the last two points.
pub(crate) fn extrapolate_to_zero(e1: f64, x1: &[f64], e2: f64, x2: &[f64]) -> Vec<f64> {
    x1.iter()
        .zip(x2)
        .map(|(a, b)| b - e2 * (a - b) / (e1 - e2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(EpsSchedule::new(vec![(1, 0.1), (2, 0.1)]).is_err());
        assert!(EpsSchedule::new(vec![(1, 0.1), (2, -0.1)]).is_err());
        assert!(EpsSchedule::new(vec![]).is_err());
        let s = EpsSchedule::default();
        assert_eq!(s.len(), 200);
        assert!((s.first() - 1.0 / 6.0).abs() < 1e-16);
        assert!(s.check_floor(3).is_ok());
        assert!(s.check_floor(6).is_err());
    }

    #[test]
    fn extrapolation_is_exact_for_affine_paths() {
        let x = |e: f64| [1.0 - 2.0 * e, 2.0 * e];
        let lim = extrapolate_to_zero(0.1, &x(0.1), 0.05, &x(0.05));
        assert!((lim[0] - 1.0).abs() < 1e-15 && lim[1].abs() < 1e-15);
    }
}
