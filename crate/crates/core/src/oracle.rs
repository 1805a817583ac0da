//! Exact symbolic checks for the three deduction techniques.

use serde::{Deserialize, Serialize};

use crate::error::SudokuError;
use crate::grid::{house_of, CellRef, Grid, HouseKind, SIZE};

/// Number of step lines in a Hidden Single or Full House trace.
pub const TRACE_STEPS: usize = SIZE - 1;

/// Why `can_contain` answered as it did. Variants are listed in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    CellFilled,
    DigitInRow,
    DigitInColumn,
    DigitInBox,
    Ok,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepAnswer {
    pub cell: CellRef,
    pub answer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trace {
    pub steps: [StepAnswer; TRACE_STEPS],
    pub label: bool,
}

pub(crate) fn check_digit(digit: u8) -> Result<(), SudokuError> {
    if (1..=SIZE as u8).contains(&digit) {
        Ok(())
    } else {
        Err(SudokuError::InvalidDigit(digit))
    }
}

/// Whether `digit` may be written into `cell`, with the first blocking cause.
pub fn can_contain(grid: &Grid, cell: CellRef, digit: u8) -> (bool, Reason) {
    if !grid.is_empty_at(cell) {
        return (false, Reason::CellFilled);
    }
    for (kind, reason) in [
        (HouseKind::Row, Reason::DigitInRow),
        (HouseKind::Column, Reason::DigitInColumn),
        (HouseKind::Box, Reason::DigitInBox),
    ] {
        if house_of(cell, kind).iter().any(|&c| grid.get(c) == digit) {
            return (false, reason);
        }
    }
    (true, Reason::Ok)
}

fn other_house_cells(goal: CellRef, kind: HouseKind) -> [CellRef; TRACE_STEPS] {
    let mut others = house_of(goal, kind).into_iter().filter(|&c| c != goal);
    std::array::from_fn(|_| others.next().expect("a house has six cells"))
}

fn check_common(grid: &Grid, goal: CellRef, digit: u8) -> Result<(), SudokuError> {
    check_digit(digit)?;
    if !grid.is_consistent() {
        return Err(SudokuError::InvalidInstance("grid is inconsistent".into()));
    }
    if !grid.is_empty_at(goal) {
        return Err(SudokuError::InvalidInstance(format!("goal cell {goal} is filled")));
    }
    Ok(())
}

/// Hidden Single: every other cell of the goal's house rejects the digit.
///
/// The goal itself must admit the digit; instances where it does not are
/// rejected rather than labelled.
pub fn hidden_single_trace(
    grid: &Grid,
    goal: CellRef,
    kind: HouseKind,
    digit: u8,
) -> Result<Trace, SudokuError> {
    check_common(grid, goal, digit)?;
    if !can_contain(grid, goal, digit).0 {
        return Err(SudokuError::InvalidInstance(format!(
            "digit {digit} already occurs in the neighborhood of {goal}"
        )));
    }
    let steps = other_house_cells(goal, kind).map(|cell| StepAnswer {
        cell,
        answer: can_contain(grid, cell, digit).0,
    });
    let label = steps.iter().all(|s| !s.answer);
    Ok(Trace { steps, label })
}

/// Full House: every other cell of the goal's house is filled and the
/// candidate is the one digit missing from it.
pub fn full_house_trace(
    grid: &Grid,
    goal: CellRef,
    kind: HouseKind,
    digit: u8,
) -> Result<Trace, SudokuError> {
    check_common(grid, goal, digit)?;
    let steps = other_house_cells(goal, kind).map(|cell| StepAnswer {
        cell,
        answer: !grid.is_empty_at(cell),
    });
    let all_filled = steps.iter().all(|s| s.answer);
    let digit_present = steps.iter().any(|s| grid.get(s.cell) == digit);
    Ok(Trace {
        steps,
        label: all_filled && !digit_present,
    })
}

/// Naked Single queries: one `can_contain` answer per query cell.
pub fn naked_single_answers(
    grid: &Grid,
    digit: u8,
    queries: &[CellRef],
) -> Result<Vec<bool>, SudokuError> {
    check_digit(digit)?;
    if !grid.is_consistent() {
        return Err(SudokuError::InvalidInstance("grid is inconsistent".into()));
    }
    Ok(queries.iter().map(|&q| can_contain(grid, q, digit).0).collect())
}
