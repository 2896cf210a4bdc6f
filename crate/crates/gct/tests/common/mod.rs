//! Shared rules-engine checks used by both the fixture test target and the
//! acceptance target.

// Each including target uses a different subset of these helpers.
#![allow(dead_code)]

use gct::go::{
    parse_fixture, random_opponent, Action, BoardState, Color, GoError, MoveReason, KOMI,
    MAX_MOVES, NUM_ACTIONS, PASS,
};
use gct::rng::stream;

pub fn fixture(name: &str) -> BoardState {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_fixture(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Scores a position after two passes.
pub fn score_after_passes(s: &BoardState) -> gct::go::ScoreResult {
    let s = s.apply(Action(PASS)).unwrap().apply(Action(PASS)).unwrap();
    s.score().unwrap()
}

pub fn check_capture_corner_stone() {
    let s = fixture("capture_corner.txt");
    let next = s.apply(Action(7)).unwrap();
    assert_eq!(next.stones[0], None);
    assert_eq!(next.stones[7], Some(Color::Black));
    assert_eq!(next.ko_point, None, "capturing stone has three liberties");
}

pub fn check_capture_edge_stone() {
    let s = fixture("capture_edge.txt");
    assert!(s.legal_mask().unwrap()[10]);
    let next = s.apply(Action(10)).unwrap();
    assert_eq!(next.stones[3], None);
    assert_eq!(next.ko_point, None);
}

pub fn check_capture_center_stone() {
    let s = fixture("capture_center.txt");
    let next = s.apply(Action(31)).unwrap();
    assert_eq!(next.stones[24], None);
    assert_eq!(next.ko_point, None);
}

pub fn check_capture_two_groups_at_once() {
    let s = fixture("capture_two_groups.txt");
    let next = s.apply(Action(0)).unwrap();
    assert_eq!(next.stones[1], None);
    assert_eq!(next.stones[7], None);
    assert_eq!(next.ko_point, None, "two stones captured, not a ko shape");
}

pub fn check_capture_five_stone_group() {
    let s = fixture("capture_five_stones.txt");
    let next = s.apply(Action(15)).unwrap();
    for idx in [0, 1, 2, 7, 8] {
        assert_eq!(next.stones[idx], None);
    }
    assert_eq!(next.stones[15], Some(Color::Black));
}

pub fn check_snapback_connection_is_captured() {
    let s = fixture("capture_snapback.txt");
    // White connects into a single shared liberty.
    let s = s.apply(Action(9)).unwrap();
    assert_eq!(s.stones[9], Some(Color::White));
    // Black takes the whole three-stone group.
    let s = s.apply(Action(16)).unwrap();
    for idx in [2, 3, 9] {
        assert_eq!(s.stones[idx], None);
    }
    assert_eq!(s.ko_point, None, "three stones captured");
}

pub fn check_single_capture_by_larger_group_sets_no_ko() {
    let s = fixture("capture_no_ko_group.txt");
    let next = s.apply(Action(0)).unwrap();
    assert_eq!(next.stones[1], None);
    assert_eq!(next.ko_point, None, "capturing stone joins a group");
}

pub fn check_capture_into_last_liberty_is_legal_and_creates_ko() {
    let s = fixture("capture_into_last_liberty.txt");
    assert!(s.legal_mask().unwrap()[1]);
    let next = s.apply(Action(1)).unwrap();
    assert_eq!(next.stones[0], None);
    assert_eq!(next.ko_point, Some(0));
    assert!(!next.legal_mask().unwrap()[0]);
    assert_eq!(
        next.apply(Action(0)),
        Err(GoError::IllegalMove(MoveReason::Ko))
    );
}

pub fn check_corner_suicide_is_illegal() {
    let s = fixture("suicide_corner.txt");
    assert!(!s.legal_mask().unwrap()[0]);
    assert_eq!(
        s.apply(Action(0)),
        Err(GoError::IllegalMove(MoveReason::Suicide))
    );
}

pub fn check_edge_suicide_is_illegal() {
    let s = fixture("suicide_edge.txt");
    assert!(!s.legal_mask().unwrap()[3]);
    assert_eq!(
        s.apply(Action(3)),
        Err(GoError::IllegalMove(MoveReason::Suicide))
    );
}

pub fn check_group_suicide_is_illegal() {
    let s = fixture("suicide_group.txt");
    assert_eq!(
        s.apply(Action(0)),
        Err(GoError::IllegalMove(MoveReason::Suicide))
    );
}

pub fn check_eye_fill_legal_for_owner_suicide_for_opponent() {
    let black = fixture("eye_fill_black.txt");
    assert!(black.legal_mask().unwrap()[0]);
    assert!(black.apply(Action(0)).is_ok());
    let white = fixture("eye_fill_white.txt");
    assert!(!white.legal_mask().unwrap()[0]);
}

pub fn check_center_ko_blocks_immediate_retake_then_clears() {
    let s = fixture("ko_center.txt");
    let s = s.apply(Action(10)).unwrap();
    assert_eq!(s.stones[9], None);
    assert_eq!(s.ko_point, Some(9));
    assert!(!s.legal_mask().unwrap()[9]);
    assert_eq!(s.apply(Action(9)), Err(GoError::IllegalMove(MoveReason::Ko)));
    // White plays elsewhere; after black responds the retake is legal again
    // because the resulting whole-board position is new.
    let s = s.apply(Action(48)).unwrap();
    assert_eq!(s.ko_point, None);
    let s = s.apply(Action(PASS)).unwrap();
    assert!(s.legal_mask().unwrap()[9]);
    let s = s.apply(Action(9)).unwrap();
    assert_eq!(s.stones[10], None);
}

pub fn check_edge_ko_is_detected() {
    let s = fixture("ko_edge.txt");
    let s = s.apply(Action(3)).unwrap();
    assert_eq!(s.stones[2], None);
    assert_eq!(s.ko_point, Some(2));
    assert!(!s.legal_mask().unwrap()[2]);
}

pub fn check_positional_superko_rejects_whole_board_repetition() {
    let s0 = fixture("superko_double_ko.txt");
    // Black takes the upper ko, white takes the lower ko.
    let s = s0.apply(Action(10)).unwrap();
    assert_eq!(s.ko_point, Some(9));
    let s = s.apply(Action(38)).unwrap();
    assert_eq!(s.ko_point, Some(37));
    // Black passes; white retakes the upper ko (a new whole-board position).
    let s = s.apply(Action(PASS)).unwrap();
    let s = s.apply(Action(9)).unwrap();
    assert_eq!(s.stones[10], None);
    assert_eq!(s.ko_point, Some(10));
    // Retaking the lower ko would exactly recreate the starting position.
    // The single-point ko rule does not apply (different point), so this is
    // rejected by the positional-superko history check.
    assert!(!s.legal_mask().unwrap()[37]);
    assert_eq!(
        s.apply(Action(37)),
        Err(GoError::IllegalMove(MoveReason::Superko))
    );
}

pub fn check_empty_board_scores_komi_to_white() {
    let r = score_after_passes(&fixture("score_empty.txt"));
    assert_eq!(r.black_points, 0.0);
    assert_eq!(r.white_points, KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_wall_territories_score_exactly() {
    let r = score_after_passes(&fixture("score_walls.txt"));
    // Black: 7 stones + 21 territory; white: 7 stones + 7 territory + komi.
    // Column 4 touches both colors and is neutral.
    assert_eq!(r.black_points, 28.0);
    assert_eq!(r.white_points, 14.0 + KOMI);
    assert_eq!(r.winner, Color::Black);
}

pub fn check_shared_region_is_neutral() {
    let r = score_after_passes(&fixture("score_two_stones.txt"));
    assert_eq!(r.black_points, 1.0);
    assert_eq!(r.white_points, 1.0 + KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_white_margin_score() {
    let r = score_after_passes(&fixture("score_white_margin.txt"));
    assert_eq!(r.black_points, 21.0);
    assert_eq!(r.white_points, 14.0 + KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_enclosed_corner_points_score_for_their_owner() {
    let r = score_after_passes(&fixture("score_enclosed_corners.txt"));
    assert_eq!(r.black_points, 3.0);
    assert_eq!(r.white_points, 3.0 + KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_black_row_takes_whole_board() {
    let r = score_after_passes(&fixture("score_black_row.txt"));
    assert_eq!(r.black_points, 49.0);
    assert_eq!(r.white_points, KOMI);
    assert_eq!(r.winner, Color::Black);
}

pub fn check_white_row_takes_whole_board() {
    let r = score_after_passes(&fixture("score_white_row.txt"));
    assert_eq!(r.black_points, 0.0);
    assert_eq!(r.white_points, 49.0 + KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_mixed_rows_split_the_board() {
    let r = score_after_passes(&fixture("score_mixed_rows.txt"));
    assert_eq!(r.black_points, 14.0);
    assert_eq!(r.white_points, 14.0 + KOMI);
    assert_eq!(r.winner, Color::White);
}

pub fn check_occupied_point_is_illegal_and_capture_scores_afterwards() {
    let s = fixture("occupied_point.txt");
    assert!(!s.legal_mask().unwrap()[24]);
    assert_eq!(
        s.apply(Action(24)),
        Err(GoError::IllegalMove(MoveReason::Occupied))
    );
    // Capture then score: the captured point becomes black territory.
    let s = fixture("capture_corner.txt").apply(Action(7)).unwrap();
    let r = score_after_passes(&s);
    assert_eq!(r.black_points, 49.0);
    assert_eq!(r.winner, Color::Black);
}

pub fn check_pass_mechanics_and_terminal_errors() {
    let s = BoardState::new_game();
    let s1 = s.apply(Action(PASS)).unwrap();
    assert_eq!(s1.consecutive_passes, 1);
    assert_eq!(s1.to_move, Color::White);
    assert_eq!(s1.score(), Err(GoError::NotTerminal));
    // A board move resets the pass count.
    let s2 = s1.apply(Action(24)).unwrap();
    assert_eq!(s2.consecutive_passes, 0);
    // Two consecutive passes end the game.
    let done = s1.apply(Action(PASS)).unwrap();
    assert!(done.is_terminal());
    assert_eq!(done.legal_mask(), Err(GoError::GameOver));
    assert_eq!(
        done.apply(Action(0)),
        Err(GoError::IllegalMove(MoveReason::Terminal))
    );
    assert_eq!(done.apply(Action(99)), Err(GoError::BadAction(99)));
}

pub fn check_move_cap_forces_termination() {
    let mut s = BoardState::new_game();
    s.move_count = MAX_MOVES - 1;
    let s = s.apply(Action(24)).unwrap();
    assert!(s.is_terminal());
    assert!(s.score().is_ok());
}

/// All hand-verified fixture checks in one call; returns the number of
/// distinct positions exercised.
pub fn run_all_fixture_checks() -> usize {
    let checks: &[fn()] = &[
        check_capture_corner_stone,
        check_capture_edge_stone,
        check_capture_center_stone,
        check_capture_two_groups_at_once,
        check_capture_five_stone_group,
        check_snapback_connection_is_captured,
        check_single_capture_by_larger_group_sets_no_ko,
        check_capture_into_last_liberty_is_legal_and_creates_ko,
        check_corner_suicide_is_illegal,
        check_edge_suicide_is_illegal,
        check_group_suicide_is_illegal,
        check_eye_fill_legal_for_owner_suicide_for_opponent,
        check_center_ko_blocks_immediate_retake_then_clears,
        check_edge_ko_is_detected,
        check_positional_superko_rejects_whole_board_repetition,
        check_empty_board_scores_komi_to_white,
        check_wall_territories_score_exactly,
        check_shared_region_is_neutral,
        check_white_margin_score,
        check_enclosed_corner_points_score_for_their_owner,
        check_black_row_takes_whole_board,
        check_white_row_takes_whole_board,
        check_mixed_rows_split_the_board,
        check_occupied_point_is_illegal_and_capture_scores_afterwards,
        check_pass_mechanics_and_terminal_errors,
        check_move_cap_forces_termination,
    ];
    for check in checks {
        check();
    }
    // 25 fixture files; the last two checks are constructed positions.
    25
}

fn assert_no_dead_groups(s: &BoardState) {
    for idx in 0..49 {
        if s.stones[idx].is_none() {
            continue;
        }
        let mut stack = vec![idx];
        let mut seen = [false; 49];
        seen[idx] = true;
        let color = s.stones[idx];
        let mut has_lib = false;
        while let Some(p) = stack.pop() {
            let row = p / 7;
            let col = p % 7;
            let mut push = |q: usize| {
                if s.stones[q].is_none() {
                    has_lib = true;
                } else if s.stones[q] == color && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if row > 0 {
                push(p - 7);
            }
            if row < 6 {
                push(p + 7);
            }
            if col > 0 {
                push(p - 1);
            }
            if col < 6 {
                push(p + 1);
            }
        }
        assert!(has_lib, "group at {idx} has no liberties");
    }
}

/// Random-vs-random fuzz over the engine invariants: legality mask agrees
/// with apply, no zero-liberty group survives a move, games respect the move
/// cap, and every finished game scores.
pub fn fuzz_random_games(n_games: u64) {
    let mut max_len = 0;
    for game in 0..n_games {
        let mut rng = stream(0xf022, &[game]);
        let mut s = BoardState::new_game();
        let mut cross_check_countdown = 0;
        while !s.is_terminal() {
            let mask = s.legal_mask().unwrap();
            // Periodic cross-check: apply agrees with the mask on every
            // action.
            if cross_check_countdown == 0 {
                for a in 0..NUM_ACTIONS {
                    assert_eq!(
                        s.apply(Action(a)).is_ok(),
                        mask[a],
                        "game {game} move {} action {a}",
                        s.move_count
                    );
                }
                cross_check_countdown = 37;
            } else {
                cross_check_countdown -= 1;
            }
            let a = random_opponent(&s, &mut rng);
            assert!(mask[a.0]);
            s = s.apply(a).unwrap();
            assert_no_dead_groups(&s);
        }
        assert!(s.move_count <= MAX_MOVES, "game {game} exceeded the cap");
        max_len = max_len.max(s.move_count);
        assert!(s.score().is_ok());
    }
    assert!(max_len <= MAX_MOVES);
}
