use std::fmt;

use thiserror::Error;

pub const BOARD_SIZE: usize = 7;
pub const BOARD_POINTS: usize = BOARD_SIZE * BOARD_SIZE;
pub const NUM_ACTIONS: usize = BOARD_POINTS + 1;
/// Action index for pass.
pub const PASS: usize = BOARD_POINTS;
/// Area-scoring komi. Half-integer so games cannot tie.
pub const KOMI: f64 = 8.5;
/// Hard cap on game length; a capped game is scored as it stands.
pub const MAX_MOVES: u32 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opponent(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

/// A move: indices `0..49` are board points in row-major order, `49` is pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action(pub usize);

impl Action {
    pub const PASS: Action = Action(PASS);

    pub fn is_pass(self) -> bool {
        self.0 == PASS
    }
}

/// Reason a move is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveReason {
    Occupied,
    Suicide,
    Ko,
    Superko,
    Terminal,
}

#[derive(Debug, Error, PartialEq)]
pub enum GoError {
    #[error("game over")]
    GameOver,
    #[error("illegal move: {0:?}")]
    IllegalMove(MoveReason),
    #[error("game is not terminal")]
    NotTerminal,
    #[error("action index {0} out of range")]
    BadAction(usize),
}

/// Player-relative binary planes: 0 = to-move stones, 1 = opponent stones,
/// 2 = empty points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub planes: [[bool; BOARD_POINTS]; 3],
}

impl Observation {
    /// Flattened plane-major input vector of length 147.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * BOARD_POINTS);
        for plane in &self.planes {
            v.extend(plane.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    pub black_points: f64,
    pub white_points: f64,
    pub winner: Color,
}

/// Immutable full game state. `apply` returns a new state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardState {
    pub stones: [Option<Color>; BOARD_POINTS],
    pub to_move: Color,
    pub ko_point: Option<usize>,
    pub consecutive_passes: u8,
    pub move_count: u32,
    /// Whole-board position codes seen so far, including the current one.
    pub position_history: Vec<u128>,
}

/// Exact base-3 encoding of the stone configuration. 3^49 < 2^78, so this
/// is collision-free in a u128.
pub fn position_code(stones: &[Option<Color>; BOARD_POINTS]) -> u128 {
    let mut code: u128 = 0;
    for s in stones.iter().rev() {
        code = code * 3
            + match s {
                None => 0,
                Some(Color::Black) => 1,
                Some(Color::White) => 2,
            };
    }
    code
}

pub(crate) fn neighbors(idx: usize) -> impl Iterator<Item = usize> {
    let row = idx / BOARD_SIZE;
    let col = idx % BOARD_SIZE;
    let mut out = [usize::MAX; 4];
    let mut n = 0;
    if row > 0 {
        out[n] = idx - BOARD_SIZE;
        n += 1;
    }
    if row + 1 < BOARD_SIZE {
        out[n] = idx + BOARD_SIZE;
        n += 1;
    }
    if col > 0 {
        out[n] = idx - 1;
        n += 1;
    }
    if col + 1 < BOARD_SIZE {
        out[n] = idx + 1;
        n += 1;
    }
    out.into_iter().take(n)
}

/// Flood-fills the group containing `idx` and collects its liberties.
pub fn group_liberties(
    stones: &[Option<Color>; BOARD_POINTS],
    idx: usize,
) -> (Vec<usize>, Vec<usize>) {
    let color = stones[idx].expect("group_liberties on empty point");
    let mut members = Vec::new();
    let mut libs = Vec::new();
    let mut seen = [false; BOARD_POINTS];
    let mut lib_seen = [false; BOARD_POINTS];
    let mut stack = vec![idx];
    seen[idx] = true;
    while let Some(p) = stack.pop() {
        members.push(p);
        for q in neighbors(p) {
            match stones[q] {
                None => {
                    if !lib_seen[q] {
                        lib_seen[q] = true;
                        libs.push(q);
                    }
                }
                Some(c) if c == color && !seen[q] => {
                    seen[q] = true;
                    stack.push(q);
                }
                _ => {}
            }
        }
    }
    (members, libs)
}

/// Outcome of placing a stone on a copy of the board, before legality
/// bookkeeping (superko, history) is applied.
struct Placement {
    stones: [Option<Color>; BOARD_POINTS],
    captured: Vec<usize>,
    own_liberties: usize,
    own_group_size: usize,
}

fn place_stone(
    stones: &[Option<Color>; BOARD_POINTS],
    idx: usize,
    color: Color,
) -> Result<Placement, MoveReason> {
    if stones[idx].is_some() {
        return Err(MoveReason::Occupied);
    }
    let mut next = *stones;
    next[idx] = Some(color);
    let mut captured = Vec::new();
    for q in neighbors(idx) {
        if next[q] == Some(color.opponent()) {
            let (members, libs) = group_liberties(&next, q);
            if libs.is_empty() {
                for &m in &members {
                    if next[m].is_some() {
                        next[m] = None;
                        captured.push(m);
                    }
                }
            }
        }
    }
    let (own, libs) = group_liberties(&next, idx);
    if libs.is_empty() {
        return Err(MoveReason::Suicide);
    }
    Ok(Placement {
        stones: next,
        captured,
        own_liberties: libs.len(),
        own_group_size: own.len(),
    })
}

impl BoardState {
    pub fn is_terminal(&self) -> bool {
        self.consecutive_passes >= 2 || self.move_count >= MAX_MOVES
    }

    /// Checks one board move without mutating state.
    fn check_board_move(&self, idx: usize) -> Result<Placement, MoveReason> {
        if self.ko_point == Some(idx) {
            return Err(MoveReason::Ko);
        }
        let placement = place_stone(&self.stones, idx, self.to_move)?;
        let code = position_code(&placement.stones);
        if self.position_history.contains(&code) {
            return Err(MoveReason::Superko);
        }
        Ok(placement)
    }

    pub fn legal_mask(&self) -> Result<[bool; NUM_ACTIONS], GoError> {
        if self.is_terminal() {
            return Err(GoError::GameOver);
        }
        let mut mask = [false; NUM_ACTIONS];
        mask[PASS] = true;
        for idx in 0..BOARD_POINTS {
            mask[idx] = self.check_board_move(idx).is_ok();
        }
        Ok(mask)
    }

    pub fn apply(&self, action: Action) -> Result<BoardState, GoError> {
        if action.0 > PASS {
            return Err(GoError::BadAction(action.0));
        }
        if self.is_terminal() {
            return Err(GoError::IllegalMove(MoveReason::Terminal));
        }
        if action.is_pass() {
            let mut next = self.clone();
            next.to_move = self.to_move.opponent();
            next.ko_point = None;
            next.consecutive_passes += 1;
            next.move_count += 1;
            return Ok(next);
        }
        let placement = self
            .check_board_move(action.0)
            .map_err(GoError::IllegalMove)?;
        let ko_point = if placement.captured.len() == 1
            && placement.own_group_size == 1
            && placement.own_liberties == 1
        {
            Some(placement.captured[0])
        } else {
            None
        };
        let mut history = self.position_history.clone();
        history.push(position_code(&placement.stones));
        Ok(BoardState {
            stones: placement.stones,
            to_move: self.to_move.opponent(),
            ko_point,
            consecutive_passes: 0,
            move_count: self.move_count + 1,
            position_history: history,
        })
    }

    /// Tromp-Taylor area score: stones plus empty regions bordering only one
    /// color; White adds komi.
    pub fn score(&self) -> Result<ScoreResult, GoError> {
        if !self.is_terminal() {
            return Err(GoError::NotTerminal);
        }
        let mut black = 0.0;
        let mut white = 0.0;
        for s in &self.stones {
            match s {
                Some(Color::Black) => black += 1.0,
                Some(Color::White) => white += 1.0,
                None => {}
            }
        }
        let mut seen = [false; BOARD_POINTS];
        for start in 0..BOARD_POINTS {
            if self.stones[start].is_some() || seen[start] {
                continue;
            }
            let mut region = Vec::new();
            let mut touches_black = false;
            let mut touches_white = false;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                region.push(p);
                for q in neighbors(p) {
                    match self.stones[q] {
                        None => {
                            if !seen[q] {
                                seen[q] = true;
                                stack.push(q);
                            }
                        }
                        Some(Color::Black) => touches_black = true,
                        Some(Color::White) => touches_white = true,
                    }
                }
            }
            if touches_black && !touches_white {
                black += region.len() as f64;
            } else if touches_white && !touches_black {
                white += region.len() as f64;
            }
        }
        white += KOMI;
        let winner = if black > white {
            Color::Black
        } else {
            Color::White
        };
        Ok(ScoreResult {
            black_points: black,
            white_points: white,
            winner,
        })
    }

    pub fn observe(&self) -> Observation {
        let mut planes = [[false; BOARD_POINTS]; 3];
        for (i, s) in self.stones.iter().enumerate() {
            match s {
                Some(c) if *c == self.to_move => planes[0][i] = true,
                Some(_) => planes[1][i] = true,
                None => planes[2][i] = true,
            }
        }
        Observation { planes }
    }

    pub fn position_code(&self) -> u128 {
        position_code(&self.stones)
    }
}

impl Default for BoardState {
    fn default() -> Self {
        Self::new_game()
    }
}

impl BoardState {
    pub fn new_game() -> BoardState {
        let stones = [None; BOARD_POINTS];
        BoardState {
            position_history: vec![position_code(&stones)],
            stones,
            to_move: Color::Black,
            ko_point: None,
            consecutive_passes: 0,
            move_count: 0,
        }
    }
}

impl fmt::Display for BoardState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..BOARD_SIZE {
            for col in 0..BOARD_SIZE {
                let ch = match self.stones[row * BOARD_SIZE + col] {
                    Some(Color::Black) => 'X',
                    Some(Color::White) => 'O',
                    None => '.',
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        let tm = match self.to_move {
            Color::Black => 'X',
            Color::White => 'O',
        };
        writeln!(f, "{tm}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_game_basics() {
        let s = BoardState::new_game();
        assert_eq!(s.stones.iter().filter(|s| s.is_none()).count(), 49);
        assert_eq!(s.to_move, Color::Black);
        assert_eq!(s.legal_mask().unwrap(), [true; NUM_ACTIONS]);
    }

    #[test]
    fn empty_terminal_board_is_white_by_komi() {
        let s = BoardState::new_game()
            .apply(Action::PASS)
            .unwrap()
            .apply(Action::PASS)
            .unwrap();
        assert!(s.is_terminal());
        let r = s.score().unwrap();
        assert_eq!(r.black_points, 0.0);
        assert_eq!(r.white_points, KOMI);
        assert_eq!(r.winner, Color::White);
    }

    #[test]
    fn two_passes_end_game() {
        let s = BoardState::new_game();
        let s = s.apply(Action::PASS).unwrap();
        assert!(!s.is_terminal());
        let s = s.apply(Action::PASS).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.apply(Action(0)), Err(GoError::IllegalMove(MoveReason::Terminal)));
        assert_eq!(s.legal_mask(), Err(GoError::GameOver));
    }

    #[test]
    fn board_move_resets_pass_counter() {
        let s = BoardState::new_game()
            .apply(Action::PASS)
            .unwrap()
            .apply(Action(24))
            .unwrap();
        assert_eq!(s.consecutive_passes, 0);
    }

    #[test]
    fn capture_removes_group() {
        // White stone at 0 with one liberty at 1 (7 below is Black).
        let mut s = BoardState::new_game();
        // X plays 7, O plays 0, X plays 1 -> captures O.
        s = s.apply(Action(7)).unwrap();
        s = s.apply(Action(0)).unwrap();
        s = s.apply(Action(1)).unwrap();
        assert_eq!(s.stones[0], None);
        assert_eq!(s.stones[1], Some(Color::Black));
    }

    #[test]
    fn observe_is_player_relative() {
        let s = BoardState::new_game().apply(Action(10)).unwrap();
        // Black stone on board, White to move: plane 1 holds the stone.
        let o = s.observe();
        assert!(o.planes[1][10]);
        assert_eq!(o.planes[0].iter().filter(|&&b| b).count(), 0);
        // Exactly one plane is set per point.
        for i in 0..BOARD_POINTS {
            let n = [o.planes[0][i], o.planes[1][i], o.planes[2][i]]
                .iter()
                .filter(|&&b| b)
                .count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn position_code_roundtrip_distinct() {
        let a = BoardState::new_game();
        let b = a.apply(Action(3)).unwrap();
        assert_ne!(a.position_code(), b.position_code());
    }
}
