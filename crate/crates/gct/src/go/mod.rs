//! Go 7x7 rules engine: Tromp-Taylor area scoring, positional superko,
//! player-relative observations, and two scripted opponents.

mod board;
mod fixtures;
mod opponents;

pub(crate) use board::neighbors;
pub use board::{
    Action, BoardState, Color, GoError, MoveReason, Observation, ScoreResult, BOARD_POINTS,
    BOARD_SIZE, KOMI, MAX_MOVES, NUM_ACTIONS, PASS,
};
pub use fixtures::{parse_fixture, FixtureError};
pub use opponents::{heuristic_opponent, random_opponent};
