use rand::Rng;

use super::board::{group_liberties, neighbors, Action, BoardState, Color, BOARD_POINTS, PASS};

/// Distinct groups of `color`, each reported as (members, liberties), ordered
/// by lowest member index.
fn groups_of(s: &BoardState, color: Color) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut seen = [false; BOARD_POINTS];
    let mut out = Vec::new();
    for idx in 0..BOARD_POINTS {
        if s.stones[idx] == Some(color) && !seen[idx] {
            let (members, libs) = group_liberties(&s.stones, idx);
            for &m in &members {
                seen[m] = true;
            }
            out.push((members, libs));
        }
    }
    out
}

/// Scripted opponent standing in for an external engine. Priorities:
/// capture ataried enemy groups, rescue own ataried groups, otherwise play
/// the legal point maximizing own liberties gained plus enemy liberties
/// removed (rng breaks ties uniformly). Passes only when no board move is
/// legal.
pub fn heuristic_opponent<R: Rng>(s: &BoardState, rng: &mut R) -> Action {
    let mask = s.legal_mask().expect("heuristic_opponent on terminal state");
    let me = s.to_move;
    let enemy = me.opponent();

    // Rule 1: capture an enemy group in atari. Prefer the largest capture,
    // then the lowest liberty index.
    let mut best_capture: Option<(usize, usize)> = None; // (size, liberty)
    for (members, libs) in groups_of(s, enemy) {
        if libs.len() == 1 && mask[libs[0]] {
            let cand = (members.len(), libs[0]);
            let better = match best_capture {
                None => true,
                Some((sz, lib)) => cand.0 > sz || (cand.0 == sz && cand.1 < lib),
            };
            if better {
                best_capture = Some(cand);
            }
        }
    }
    if let Some((_, lib)) = best_capture {
        return Action(lib);
    }

    // Rule 2: extend an own group out of atari, if the extension actually
    // gains breathing room.
    for (_, libs) in groups_of(s, me) {
        if libs.len() == 1 && mask[libs[0]] {
            let next = s.apply(Action(libs[0])).expect("masked move must apply");
            let (_, new_libs) = group_liberties(&next.stones, libs[0]);
            if new_libs.len() >= 2 {
                return Action(libs[0]);
            }
        }
    }

    // Rule 3: greedy liberty score over all legal board moves.
    let mut best_score = i64::MIN;
    let mut best_moves: Vec<usize> = Vec::new();
    for idx in 0..BOARD_POINTS {
        if !mask[idx] {
            continue;
        }
        let next = s.apply(Action(idx)).expect("masked move must apply");
        let (_, own_libs) = group_liberties(&next.stones, idx);
        let mut removed: i64 = 0;
        let mut counted = [false; BOARD_POINTS];
        for q in neighbors(idx) {
            if s.stones[q] == Some(enemy) && !counted[q] {
                let (members, libs_before) = group_liberties(&s.stones, q);
                for &m in &members {
                    counted[m] = true;
                }
                let libs_after = if next.stones[q].is_none() {
                    0
                } else {
                    group_liberties(&next.stones, q).1.len()
                };
                removed += libs_before.len() as i64 - libs_after as i64;
            }
        }
        let score = own_libs.len() as i64 + removed;
        if score > best_score {
            best_score = score;
            best_moves.clear();
        }
        if score == best_score {
            best_moves.push(idx);
        }
    }
    if best_moves.is_empty() {
        return Action::PASS;
    }
    Action(best_moves[rng.gen_range(0..best_moves.len())])
}

/// Uniform over legal board moves; passes only when forced.
pub fn random_opponent<R: Rng>(s: &BoardState, rng: &mut R) -> Action {
    let mask = s.legal_mask().expect("random_opponent on terminal state");
    let moves: Vec<usize> = (0..PASS).filter(|&i| mask[i]).collect();
    if moves.is_empty() {
        Action::PASS
    } else {
        Action(moves[rng.gen_range(0..moves.len())])
    }
}
