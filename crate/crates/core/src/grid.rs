//! 6x6 grid geometry: cells, houses and neighborhoods.
//!
//! Rows count top to bottom and columns left to right, both starting at 1.
//! Boxes are 2 rows by 3 columns and are numbered row-major, so box 1 covers
//! rows 1-2 and columns 1-3 and box 2 covers rows 1-2 and columns 4-6.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SudokuError;

pub const SIZE: usize = 6;
pub const CELLS: usize = SIZE * SIZE;
pub const BOX_ROWS: usize = 2;
pub const BOX_COLS: usize = 3;

/// A cell coordinate, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    row: u8,
    col: u8,
}

impl CellRef {
    pub fn new(row: u8, col: u8) -> Result<Self, SudokuError> {
        if !(1..=SIZE as u8).contains(&row) || !(1..=SIZE as u8).contains(&col) {
            return Err(SudokuError::InvalidCell { row, col });
        }
        Ok(Self { row, col })
    }

    /// Cell at a row-major index in `0..36`.
    pub fn from_index(index: usize) -> Self {
        assert!(index < CELLS, "cell index {index} out of range");
        Self {
            row: (index / SIZE) as u8 + 1,
            col: (index % SIZE) as u8 + 1,
        }
    }

    pub fn row(self) -> u8 {
        self.row
    }

    pub fn col(self) -> u8 {
        self.col
    }

    pub fn index(self) -> usize {
        (self.row as usize - 1) * SIZE + (self.col as usize - 1)
    }

    /// Row-major box number in `1..=6`.
    pub fn box_index(self) -> u8 {
        let band = (self.row as usize - 1) / BOX_ROWS;
        let stack = (self.col as usize - 1) / BOX_COLS;
        (band * (SIZE / BOX_COLS) + stack) as u8 + 1
    }

    /// Index of the house of `kind` that contains this cell.
    pub fn house_index(self, kind: HouseKind) -> u8 {
        match kind {
            HouseKind::Row => self.row,
            HouseKind::Column => self.col,
            HouseKind::Box => self.box_index(),
        }
    }

    pub fn all() -> impl Iterator<Item = CellRef> {
        (0..CELLS).map(CellRef::from_index)
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HouseKind {
    Row,
    Column,
    Box,
}

impl HouseKind {
    pub const ALL: [HouseKind; 3] = [HouseKind::Row, HouseKind::Column, HouseKind::Box];

    pub fn as_str(self) -> &'static str {
        match self {
            HouseKind::Row => "row",
            HouseKind::Column => "column",
            HouseKind::Box => "box",
        }
    }
}

impl fmt::Display for HouseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HouseKind {
    type Err = SudokuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" => Ok(HouseKind::Row),
            "column" => Ok(HouseKind::Column),
            "box" => Ok(HouseKind::Box),
            other => Err(SudokuError::Parse(format!("unknown house kind `{other}`"))),
        }
    }
}

/// The six member cells of a house in ascending row-major order.
pub fn house_cells(kind: HouseKind, index: u8) -> Result<[CellRef; SIZE], SudokuError> {
    if !(1..=SIZE as u8).contains(&index) {
        return Err(SudokuError::InvalidHouse { kind, index });
    }
    let i = index as usize - 1;
    let cells = std::array::from_fn(|k| match kind {
        HouseKind::Row => CellRef::from_index(i * SIZE + k),
        HouseKind::Column => CellRef::from_index(k * SIZE + i),
        HouseKind::Box => {
            let top = (i / (SIZE / BOX_COLS)) * BOX_ROWS;
            let left = (i % (SIZE / BOX_COLS)) * BOX_COLS;
            CellRef::from_index((top + k / BOX_COLS) * SIZE + left + k % BOX_COLS)
        }
    });
    Ok(cells)
}

/// The house of `kind` passing through `cell`.
pub fn house_of(cell: CellRef, kind: HouseKind) -> [CellRef; SIZE] {
    house_cells(kind, cell.house_index(kind)).expect("house index of a valid cell is in range")
}

/// The 12 other cells sharing a row, column or box with `cell`, row-major.
pub fn neighborhood(cell: CellRef) -> Vec<CellRef> {
    CellRef::all()
        .filter(|&other| other != cell && are_peers(cell, other))
        .collect()
}

fn are_peers(a: CellRef, b: CellRef) -> bool {
    a.row == b.row || a.col == b.col || a.box_index() == b.box_index()
}

/// A partial assignment. `0` marks an empty cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    cells: [u8; CELLS],
}

impl Default for Grid {
    fn default() -> Self {
        Self::empty()
    }
}

impl Grid {
    pub fn empty() -> Self {
        Self { cells: [0; CELLS] }
    }

    pub fn from_values(values: &[u8]) -> Result<Self, SudokuError> {
        if values.len() != CELLS {
            return Err(SudokuError::Parse(format!(
                "grid needs {CELLS} values, got {}",
                values.len()
            )));
        }
        let mut grid = Self::empty();
        for (i, &v) in values.iter().enumerate() {
            if v as usize > SIZE {
                return Err(SudokuError::InvalidDigit(v));
            }
            grid.cells[i] = v;
        }
        Ok(grid)
    }

    pub fn values(&self) -> &[u8; CELLS] {
        &self.cells
    }

    pub fn get(&self, cell: CellRef) -> u8 {
        self.cells[cell.index()]
    }

    pub fn is_empty_at(&self, cell: CellRef) -> bool {
        self.get(cell) == 0
    }

    pub fn set(&mut self, cell: CellRef, digit: u8) -> Result<(), SudokuError> {
        if digit as usize > SIZE {
            return Err(SudokuError::InvalidDigit(digit));
        }
        self.cells[cell.index()] = digit;
        Ok(())
    }

    pub fn filled_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v != 0).count()
    }

    /// True iff no digit repeats within any of the 18 houses.
    pub fn is_consistent(&self) -> bool {
        HouseKind::ALL.iter().all(|&kind| {
            (1..=SIZE as u8).all(|index| {
                let mut seen = [false; SIZE + 1];
                house_cells(kind, index)
                    .expect("index in range")
                    .iter()
                    .all(|&c| {
                        let v = self.get(c) as usize;
                        v == 0 || !std::mem::replace(&mut seen[v], true)
                    })
            })
        })
    }

    /// Whether placing `digit` at `cell` keeps every house free of repeats.
    /// The cell's current content is ignored.
    pub fn placement_keeps_consistency(&self, cell: CellRef, digit: u8) -> bool {
        neighborhood(cell).iter().all(|&n| self.get(n) != digit)
    }

    /// Applies a digit bijection; `map[d - 1]` is the image of digit `d`.
    pub fn map_digits(&self, map: &[u8; SIZE]) -> Self {
        let mut out = *self;
        for v in out.cells.iter_mut().filter(|v| **v != 0) {
            *v = map[*v as usize - 1];
        }
        out
    }
}

pub fn is_consistent(grid: &Grid) -> bool {
    grid.is_consistent()
}

impl fmt::Display for Grid {
    /// Six lines of six characters, `.` for empty cells.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..SIZE {
            for col in 0..SIZE {
                match self.cells[row * SIZE + col] {
                    0 => f.write_str(".")?,
                    d => write!(f, "{d}")?,
                }
            }
            if row + 1 < SIZE {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Grid {
    type Err = SudokuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lines: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() != SIZE {
            return Err(SudokuError::Parse(format!(
                "expected {SIZE} grid lines, got {}",
                lines.len()
            )));
        }
        let mut values = Vec::with_capacity(CELLS);
        for line in lines {
            if line.chars().count() != SIZE {
                return Err(SudokuError::Parse(format!("bad grid line `{line}`")));
            }
            for ch in line.chars() {
                values.push(match ch {
                    '.' => 0,
                    '1'..='6' => ch as u8 - b'0',
                    _ => return Err(SudokuError::Parse(format!("bad grid character `{ch}`"))),
                });
            }
        }
        Grid::from_values(&values)
    }
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.cells.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<u8>::deserialize(deserializer)?;
        Grid::from_values(&values).map_err(serde::de::Error::custom)
    }
}
