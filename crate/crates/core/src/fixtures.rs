//! Hand-built instances whose prompts and answers match the sample problems
//! used throughout the docs and the probe. Only the prompts and answers are
//! fixed by the samples; the grids here are one consistent choice.

use crate::grid::{CellRef, Grid, HouseKind};
use crate::instance::PuzzleInstance;

fn cell(r: u8, c: u8) -> CellRef {
    CellRef::new(r, c).expect("fixture cells are in range")
}

fn grid(text: &str) -> Grid {
    text.parse().expect("fixture grids parse")
}

/// Goal (6,2), column house, digit 3; every other column-2 cell says no.
pub fn example_hidden_single() -> PuzzleInstance {
    let g = grid(
        "\
        .1.2..\n\
        ....3.\n\
        ....4.\n\
        3....1\n\
        .6....\n\
        ...5..",
    );
    PuzzleInstance::hidden_single(g, cell(6, 2), HouseKind::Column, 3)
        .expect("fixture satisfies the hidden single preconditions")
}

/// Goal (2,2), box house, digit 4; (1,1) and (1,3) are still empty.
pub fn example_full_house() -> PuzzleInstance {
    let g = grid(
        "\
        .1....\n\
        2.5...\n\
        ......\n\
        ...6..\n\
        ......\n\
        ......",
    );
    PuzzleInstance::full_house(g, cell(2, 2), HouseKind::Box, 4)
        .expect("fixture satisfies the full house preconditions")
}

fn naked_single_grid() -> Grid {
    grid(
        "\
        ......\n\
        .2....\n\
        .....6\n\
        ..1...\n\
        ......\n\
        ......",
    )
}

/// Digit 6, single query (4,3) answering no.
pub fn example_naked_single() -> PuzzleInstance {
    PuzzleInstance::naked_single(naked_single_grid(), 6, vec![cell(4, 3)])
        .expect("fixture is consistent")
}

/// Digit 6, queries (4,3) (2,2) (5,3) (4,5) (4,2) answering no,no,yes,no,yes.
pub fn example_naked_single_five() -> PuzzleInstance {
    PuzzleInstance::naked_single(
        naked_single_grid(),
        6,
        vec![cell(4, 3), cell(2, 2), cell(5, 3), cell(4, 5), cell(4, 2)],
    )
    .expect("fixture is consistent")
}
