//! Within- vs. out-of-distribution restrictions on Hidden Single instances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GenError;
use crate::grid::{HouseKind, SIZE};
use crate::instance::{PuzzleInstance, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCondition {
    /// No restriction; there is no OOD set.
    None,
    /// Training goals lie in a subset of rows.
    Rows,
    /// Training puzzles only use row houses.
    Columns,
    /// Training candidates come from a subset of digits.
    Digits,
}

impl SplitCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitCondition::None => "none",
            SplitCondition::Rows => "rows",
            SplitCondition::Columns => "columns",
            SplitCondition::Digits => "digits",
        }
    }
}

impl fmt::Display for SplitCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitCondition {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(SplitCondition::None),
            "rows" => Ok(SplitCondition::Rows),
            "columns" => Ok(SplitCondition::Columns),
            "digits" => Ok(SplitCondition::Digits),
            other => Err(GenError::InvalidSplit(format!("unknown condition `{other}`"))),
        }
    }
}

/// Which side of a split a sample is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Conforms to the training restriction (train and WD test).
    Train,
    /// Violates it (OOD test).
    Ood,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub condition: SplitCondition,
    /// Training rows or digits for the Rows and Digits conditions; empty otherwise.
    pub train_set: Vec<u8>,
}

pub const DEFAULT_TRAIN_SET: [u8; 4] = [1, 2, 3, 4];

impl SplitSpec {
    pub fn none() -> Self {
        Self {
            condition: SplitCondition::None,
            train_set: Vec::new(),
        }
    }

    pub fn rows(train_rows: &[u8]) -> Result<Self, GenError> {
        Self::new(SplitCondition::Rows, train_rows.to_vec())
    }

    pub fn columns() -> Self {
        Self {
            condition: SplitCondition::Columns,
            train_set: Vec::new(),
        }
    }

    pub fn digits(train_digits: &[u8]) -> Result<Self, GenError> {
        Self::new(SplitCondition::Digits, train_digits.to_vec())
    }

    /// Condition with its default training set.
    pub fn with_defaults(condition: SplitCondition) -> Self {
        match condition {
            SplitCondition::Rows | SplitCondition::Digits => Self {
                condition,
                train_set: DEFAULT_TRAIN_SET.to_vec(),
            },
            SplitCondition::None | SplitCondition::Columns => Self {
                condition,
                train_set: Vec::new(),
            },
        }
    }

    pub fn new(condition: SplitCondition, mut train_set: Vec<u8>) -> Result<Self, GenError> {
        train_set.sort_unstable();
        train_set.dedup();
        match condition {
            SplitCondition::Rows | SplitCondition::Digits => {
                if train_set.len() != 4 || train_set.iter().any(|&v| !(1..=SIZE as u8).contains(&v))
                {
                    return Err(GenError::InvalidSplit(format!(
                        "{condition} split needs 4 distinct values in 1..=6, got {train_set:?}"
                    )));
                }
            }
            SplitCondition::None | SplitCondition::Columns => {
                if !train_set.is_empty() {
                    return Err(GenError::InvalidSplit(format!(
                        "{condition} split takes no train set"
                    )));
                }
            }
        }
        Ok(Self {
            condition,
            train_set,
        })
    }

    pub fn test_set(&self) -> Vec<u8> {
        match self.condition {
            SplitCondition::Rows | SplitCondition::Digits => (1..=SIZE as u8)
                .filter(|v| !self.train_set.contains(v))
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn has_ood(&self) -> bool {
        self.condition != SplitCondition::None
    }

    fn pick(&self, condition: SplitCondition, role: Role) -> Result<Vec<u8>, GenError> {
        if self.condition != condition {
            return Ok((1..=SIZE as u8).collect());
        }
        Ok(match role {
            Role::Train => self.train_set.clone(),
            Role::Ood => self.test_set(),
        })
    }

    pub(crate) fn check_role(&self, role: Role) -> Result<(), GenError> {
        if role == Role::Ood && !self.has_ood() {
            return Err(GenError::InvalidSplit("the `none` condition has no OOD side".into()));
        }
        Ok(())
    }

    /// Goal rows a Hidden Single of the given role may use.
    pub fn goal_rows(&self, role: Role) -> Result<Vec<u8>, GenError> {
        self.check_role(role)?;
        self.pick(SplitCondition::Rows, role)
    }

    pub fn digits_for(&self, role: Role) -> Result<Vec<u8>, GenError> {
        self.check_role(role)?;
        self.pick(SplitCondition::Digits, role)
    }

    pub fn house_kinds(&self, role: Role) -> Result<Vec<HouseKind>, GenError> {
        self.check_role(role)?;
        Ok(match (self.condition, role) {
            (SplitCondition::Columns, Role::Train) => vec![HouseKind::Row],
            (SplitCondition::Columns, Role::Ood) => vec![HouseKind::Column],
            _ => vec![HouseKind::Row, HouseKind::Column],
        })
    }

    /// Whether a Hidden Single conforms to the training restriction. Other
    /// tasks are never restricted.
    pub fn conforms(&self, inst: &PuzzleInstance) -> bool {
        if inst.task != Task::HiddenSingle {
            return true;
        }
        match self.condition {
            SplitCondition::None => true,
            SplitCondition::Rows => inst
                .goal
                .is_some_and(|g| self.train_set.contains(&g.row())),
            SplitCondition::Columns => inst.house_kind == Some(HouseKind::Row),
            SplitCondition::Digits => self.train_set.contains(&inst.digit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_and_test_sets_are_complementary() {
        let split = SplitSpec::rows(&[4, 1, 2, 3]).unwrap();
        assert_eq!(split.train_set, vec![1, 2, 3, 4]);
        assert_eq!(split.test_set(), vec![5, 6]);
        assert_eq!(split.goal_rows(Role::Ood).unwrap(), vec![5, 6]);
        assert_eq!(split.digits_for(Role::Ood).unwrap(), (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_splits() {
        assert!(SplitSpec::rows(&[1, 2, 3]).is_err());
        assert!(SplitSpec::digits(&[1, 2, 3, 7]).is_err());
        assert!(SplitSpec::new(SplitCondition::Columns, vec![1]).is_err());
        assert!(SplitSpec::none().goal_rows(Role::Ood).is_err());
    }

    #[test]
    fn columns_condition_restricts_house_kind() {
        let split = SplitSpec::columns();
        assert_eq!(split.house_kinds(Role::Train).unwrap(), vec![HouseKind::Row]);
        assert_eq!(split.house_kinds(Role::Ood).unwrap(), vec![HouseKind::Column]);
    }
}
