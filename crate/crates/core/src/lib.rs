//! Grids, deduction oracles, puzzle generation and token serialization for
//! 6x6 Sudoku reasoning tasks.

pub mod datagen;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod instance;
pub mod oracle;
pub mod seqformat;
pub mod split;

pub use error::{FormatError, GenError, SudokuError};
pub use grid::{house_cells, is_consistent, neighborhood, CellRef, Grid, HouseKind};
pub use instance::{rotate_digits, Label, PuzzleInstance, Task};
pub use oracle::{can_contain, full_house_trace, hidden_single_trace, Reason, StepAnswer, Trace};
pub use split::{Role, SplitCondition, SplitSpec};
