use thiserror::Error;

use super::board::{group_liberties, position_code, BoardState, Color, BOARD_POINTS, BOARD_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("expected {BOARD_SIZE} board rows, found {0}")]
    RowCount(usize),
    #[error("row {0} has length {1}, expected {BOARD_SIZE}")]
    RowLength(usize, usize),
    #[error("invalid character {0:?} in board row")]
    BadChar(char),
    #[error("missing to-move line (expected 'X' or 'O')")]
    MissingToMove,
    #[error("invalid to-move line {0:?} (expected 'X' or 'O')")]
    BadToMove(String),
    #[error("group at point {0} has no liberties")]
    DeadGroup(usize),
}

/// Parses a board diagram: seven rows of seven characters from `.`, `X`
/// (black), `O` (white), followed by a line holding `X` or `O` for the side
/// to move. Blank lines and lines starting with `#` are ignored. The parsed
/// state has no ko, no passes, and a history containing only itself.
pub fn parse_fixture(text: &str) -> Result<BoardState, FixtureError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.len() < BOARD_SIZE {
        return Err(FixtureError::RowCount(lines.len()));
    }
    let mut stones = [None; BOARD_POINTS];
    for (row, line) in lines[..BOARD_SIZE].iter().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != BOARD_SIZE {
            return Err(FixtureError::RowLength(row, chars.len()));
        }
        for (col, ch) in chars.iter().enumerate() {
            stones[row * BOARD_SIZE + col] = match ch {
                '.' => None,
                'X' => Some(Color::Black),
                'O' => Some(Color::White),
                _ => return Err(FixtureError::BadChar(*ch)),
            };
        }
    }
    let to_move = match lines.get(BOARD_SIZE) {
        None => return Err(FixtureError::MissingToMove),
        Some(&"X") => Color::Black,
        Some(&"O") => Color::White,
        Some(other) => return Err(FixtureError::BadToMove(other.to_string())),
    };
    for idx in 0..BOARD_POINTS {
        if stones[idx].is_some() {
            let (_, libs) = group_liberties(&stones, idx);
            if libs.is_empty() {
                return Err(FixtureError::DeadGroup(idx));
            }
        }
    }
    Ok(BoardState {
        position_history: vec![position_code(&stones)],
        stones,
        to_move,
        ko_point: None,
        consecutive_passes: 0,
        move_count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_diagram() {
        let s = parse_fixture(
            "# corner stone\n\
             X......\n\
             .......\n\
             .......\n\
             .......\n\
             .......\n\
             .......\n\
             ......O\n\
             O\n",
        )
        .unwrap();
        assert_eq!(s.stones[0], Some(Color::Black));
        assert_eq!(s.stones[48], Some(Color::White));
        assert_eq!(s.to_move, Color::White);
    }

    #[test]
    fn rejects_dead_group() {
        let err = parse_fixture(
            "XO.....\n\
             O......\n\
             .......\n\
             .......\n\
             .......\n\
             .......\n\
             .......\n\
             X\n",
        )
        .unwrap_err();
        assert_eq!(err, FixtureError::DeadGroup(0));
    }

    #[test]
    fn rejects_bad_to_move() {
        let text = ".......\n".repeat(7) + "B\n";
        assert!(matches!(
            parse_fixture(&text),
            Err(FixtureError::BadToMove(_))
        ));
    }
}
