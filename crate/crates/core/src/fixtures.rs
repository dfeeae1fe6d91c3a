//! Bundled example games and networks.

use crate::congestion::CongestionNetwork;
use crate::game::LargeGame;

pub const THREE_PATH_GAME: &str = include_str!("../fixtures/games/three_path.json");
pub const MODIFIED_PIGOU_GAME: &str = include_str!("../fixtures/games/modified_pigou.json");
pub const ATTACK_GAME: &str = include_str!("../fixtures/games/attack.json");
pub const ABC_GAME: &str = include_str!("../fixtures/games/abc_counterexample.json");

pub const PIGOU_NETWORK: &str = include_str!("../fixtures/networks/pigou.json");
pub const MODIFIED_PIGOU_NETWORK: &str = include_str!("../fixtures/networks/modified_pigou.json");
pub const THREE_PATH_NETWORK: &str = include_str!("../fixtures/networks/three_path.json");
pub const BRAESS_NETWORK: &str = include_str!("../fixtures/networks/braess.json");

/// `(name, json)` for every bundled game.
pub const GAMES: &[(&str, &str)] = &[
    ("three_path", THREE_PATH_GAME),
    ("modified_pigou", MODIFIED_PIGOU_GAME),
    ("attack", ATTACK_GAME),
    ("abc_counterexample", ABC_GAME),
];

/// `(name, json)` for every bundled network.
pub const NETWORKS: &[(&str, &str)] = &[
    ("pigou", PIGOU_NETWORK),
    ("modified_pigou", MODIFIED_PIGOU_NETWORK),
    ("three_path", THREE_PATH_NETWORK),
    ("braess", BRAESS_NETWORK),
];

fn game(src: &str) -> LargeGame {
    LargeGame::from_json_str(src).expect("bundled game fixture is valid")
}

fn network(src: &str) -> CongestionNetwork {
    CongestionNetwork::from_json_str(src).expect("bundled network fixture is valid")
}

pub fn three_path_game() -> LargeGame {
    game(THREE_PATH_GAME)
}

pub fn modified_pigou_game() -> LargeGame {
    game(MODIFIED_PIGOU_GAME)
}

/// The attack game with `θ₁ = 0.8`, `θ₂ = 0.4`.
pub fn attack_game() -> LargeGame {
    game(ATTACK_GAME)
}

/// The attack game for other cost parameters `1 > θ₁ > θ₂ > 0`.
pub fn attack_game_with(theta1: f64, theta2: f64) -> LargeGame {
    let src = ATTACK_GAME
        .replace("0.8 * (tau(a)", &format!("{theta1} * (tau(a)"))
        .replace("0.4 * (tau(b)", &format!("{theta2} * (tau(b)"));
    game(&src)
}

pub fn abc_game() -> LargeGame {
    game(ABC_GAME)
}

pub fn pigou() -> CongestionNetwork {
    network(PIGOU_NETWORK)
}

pub fn modified_pigou() -> CongestionNetwork {
    network(MODIFIED_PIGOU_NETWORK)
}

pub fn three_path() -> CongestionNetwork {
    network(THREE_PATH_NETWORK)
}

pub fn braess() -> CongestionNetwork {
    network(BRAESS_NETWORK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_load() {
        for (name, src) in GAMES {
            LargeGame::from_json_str(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        for (name, src) in NETWORKS {
            CongestionNetwork::from_json_str(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let g = attack_game_with(0.9, 0.1);
        let tau = crate::simplex::ActionDistribution::vertex(3, 0);
        assert!((g.eval_payoff("agent", "a", &tau).unwrap() - 0.45).abs() < 1e-15);
    }
}
