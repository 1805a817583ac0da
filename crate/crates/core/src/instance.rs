//! Puzzle instances and their JSONL record form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SudokuError;
use crate::grid::{CellRef, Grid, HouseKind, SIZE};
use crate::oracle::{
    check_digit, full_house_trace, hidden_single_trace, naked_single_answers, StepAnswer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    HiddenSingle,
    FullHouse,
    NakedSingle,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::HiddenSingle, Task::FullHouse, Task::NakedSingle];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::HiddenSingle => "hidden_single",
            Task::FullHouse => "full_house",
            Task::NakedSingle => "naked_single",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Task::HiddenSingle => "hs",
            Task::FullHouse => "fh",
            Task::NakedSingle => "ns",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = SudokuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hidden_single" | "hs" => Ok(Task::HiddenSingle),
            "full_house" | "fh" => Ok(Task::FullHouse),
            "naked_single" | "ns" => Ok(Task::NakedSingle),
            other => Err(SudokuError::Parse(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Single(bool),
    PerQuery(Vec<bool>),
}

/// One task instance together with its oracle answers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PuzzleInstance {
    pub task: Task,
    pub grid: Grid,
    /// Goal cell for Hidden Single and Full House.
    pub goal: Option<CellRef>,
    pub house_kind: Option<HouseKind>,
    pub digit: u8,
    /// Query cells for Naked Single.
    pub queries: Vec<CellRef>,
    /// Step lines for HS/FH, one answer per query for NS.
    pub steps: Vec<StepAnswer>,
    pub label: Label,
    pub split_tags: Vec<String>,
}

impl PuzzleInstance {
    pub fn hidden_single(
        grid: Grid,
        goal: CellRef,
        kind: HouseKind,
        digit: u8,
    ) -> Result<Self, SudokuError> {
        let trace = hidden_single_trace(&grid, goal, kind, digit)?;
        Ok(Self {
            task: Task::HiddenSingle,
            grid,
            goal: Some(goal),
            house_kind: Some(kind),
            digit,
            queries: Vec::new(),
            steps: trace.steps.to_vec(),
            label: Label::Single(trace.label),
            split_tags: Vec::new(),
        })
    }

    pub fn full_house(
        grid: Grid,
        goal: CellRef,
        kind: HouseKind,
        digit: u8,
    ) -> Result<Self, SudokuError> {
        let trace = full_house_trace(&grid, goal, kind, digit)?;
        Ok(Self {
            task: Task::FullHouse,
            grid,
            goal: Some(goal),
            house_kind: Some(kind),
            digit,
            queries: Vec::new(),
            steps: trace.steps.to_vec(),
            label: Label::Single(trace.label),
            split_tags: Vec::new(),
        })
    }

    pub fn naked_single(grid: Grid, digit: u8, queries: Vec<CellRef>) -> Result<Self, SudokuError> {
        if queries.is_empty() {
            return Err(SudokuError::InvalidInstance("naked single needs a query".into()));
        }
        let answers = naked_single_answers(&grid, digit, &queries)?;
        let steps = queries
            .iter()
            .zip(&answers)
            .map(|(&cell, &answer)| StepAnswer { cell, answer })
            .collect();
        Ok(Self {
            task: Task::NakedSingle,
            grid,
            goal: None,
            house_kind: None,
            digit,
            queries,
            steps,
            label: Label::PerQuery(answers),
            split_tags: Vec::new(),
        })
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.split_tags = tags.into_iter().map(Into::into).collect();
        self
    }

    /// The single yes/no label of a HS/FH instance.
    pub fn final_label(&self) -> Option<bool> {
        match self.label {
            Label::Single(b) => Some(b),
            Label::PerQuery(_) => None,
        }
    }

    /// Recomputes the oracle answers and checks they match the stored ones.
    pub fn verify(&self) -> Result<(), SudokuError> {
        let fresh = match self.task {
            Task::HiddenSingle | Task::FullHouse => {
                let (goal, kind) = self
                    .goal
                    .zip(self.house_kind)
                    .ok_or_else(|| SudokuError::InvalidInstance("missing goal or house".into()))?;
                if self.task == Task::HiddenSingle {
                    Self::hidden_single(self.grid, goal, kind, self.digit)?
                } else {
                    Self::full_house(self.grid, goal, kind, self.digit)?
                }
            }
            Task::NakedSingle => Self::naked_single(self.grid, self.digit, self.queries.clone())?,
        };
        if fresh.steps != self.steps || fresh.label != self.label {
            return Err(SudokuError::InvalidInstance(
                "stored answers disagree with the oracle".into(),
            ));
        }
        Ok(())
    }

    pub fn to_record(&self) -> InstanceRecord {
        InstanceRecord {
            task: self.task,
            grid: self.grid,
            goal_row: self.goal.map(CellRef::row),
            goal_col: self.goal.map(CellRef::col),
            house_kind: self.house_kind,
            digit: self.digit,
            queries: self.queries.iter().map(|c| [c.row(), c.col()]).collect(),
            steps: self
                .steps
                .iter()
                .map(|s| StepRecord {
                    row: s.cell.row(),
                    col: s.cell.col(),
                    answer: s.answer,
                })
                .collect(),
            label: self.label.clone(),
            split_tags: self.split_tags.clone(),
        }
    }

    pub fn from_record(record: InstanceRecord) -> Result<Self, SudokuError> {
        check_digit(record.digit)?;
        let goal = match (record.goal_row, record.goal_col) {
            (Some(r), Some(c)) => Some(CellRef::new(r, c)?),
            (None, None) => None,
            _ => return Err(SudokuError::Parse("goal_row and goal_col must both be set".into())),
        };
        let queries = record
            .queries
            .iter()
            .map(|&[r, c]| CellRef::new(r, c))
            .collect::<Result<Vec<_>, _>>()?;
        let steps = record
            .steps
            .iter()
            .map(|s| {
                Ok(StepAnswer {
                    cell: CellRef::new(s.row, s.col)?,
                    answer: s.answer,
                })
            })
            .collect::<Result<Vec<_>, SudokuError>>()?;
        Ok(Self {
            task: record.task,
            grid: record.grid,
            goal,
            house_kind: record.house_kind,
            digit: record.digit,
            queries,
            steps,
            label: record.label,
            split_tags: record.split_tags,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("instance records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, SudokuError> {
        let record: InstanceRecord =
            serde_json::from_str(line).map_err(|e| SudokuError::Parse(e.to_string()))?;
        Self::from_record(record)
    }
}

/// Maps every digit `d` to `((d - 1 + shift) mod 6) + 1`, in the grid and
/// the candidate. Answers are carried over unchanged.
pub fn rotate_digits(instance: &PuzzleInstance, shift: u8) -> Result<PuzzleInstance, SudokuError> {
    if shift as usize >= SIZE {
        return Err(SudokuError::InvalidShift(shift));
    }
    let rotate = |d: u8| ((d - 1 + shift) % SIZE as u8) + 1;
    let map: [u8; SIZE] = std::array::from_fn(|i| rotate(i as u8 + 1));
    let mut out = instance.clone();
    out.grid = instance.grid.map_digits(&map);
    out.digit = rotate(instance.digit);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub row: u8,
    pub col: u8,
    pub answer: bool,
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub task: Task,
    pub grid: Grid,
    pub goal_row: Option<u8>,
    pub goal_col: Option<u8>,
    pub house_kind: Option<HouseKind>,
    pub digit: u8,
    pub queries: Vec<[u8; 2]>,
    pub steps: Vec<StepRecord>,
    pub label: Label,
    pub split_tags: Vec<String>,
}
