//! Token vocabulary, prompt/target serialization and loss masks.
//!
//! Layouts (text indices in brackets):
//!
//! ```text
//! HS  [0]<SOS> [1]hidden_single [2]goal_cell [3]row [4]r [5]column [6]c
//!     [7]house_type [8]kind [9]digit [10]d [11]can_contain
//!     then 5 x "row r column c yes|no", "solution yes|no", <EOS>
//! FH  same shape with full_house / is_filled
//! NS  <SOS> digit d can_contain, then per query "row r column c yes|no", <EOS>
//! NS padded: <SOS> <PAD> x8 digit d can_contain ...   (digit at [9])
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FormatError;
use crate::grid::{CellRef, HouseKind};
use crate::instance::{PuzzleInstance, Task};
use crate::oracle::TRACE_STEPS;

pub type TokenId = u32;

/// Token texts in id order.
pub const TOKENS: [&str; 22] = [
    "<SOS>",
    "<EOS>",
    "<PAD>",
    "hidden_single",
    "full_house",
    "goal_cell",
    "row",
    "column",
    "house_type",
    "box",
    "digit",
    "can_contain",
    "is_filled",
    "solution",
    "yes",
    "no",
    "1",
    "2",
    "3",
    "4",
    "5",
    "6",
];

pub const VOCAB_SIZE: usize = TOKENS.len();

pub mod tok {
    use super::TokenId;

    pub const SOS: TokenId = 0;
    pub const EOS: TokenId = 1;
    pub const PAD: TokenId = 2;
    pub const HIDDEN_SINGLE: TokenId = 3;
    pub const FULL_HOUSE: TokenId = 4;
    pub const GOAL_CELL: TokenId = 5;
    pub const ROW: TokenId = 6;
    pub const COLUMN: TokenId = 7;
    pub const HOUSE_TYPE: TokenId = 8;
    pub const BOX: TokenId = 9;
    pub const DIGIT: TokenId = 10;
    pub const CAN_CONTAIN: TokenId = 11;
    pub const IS_FILLED: TokenId = 12;
    pub const SOLUTION: TokenId = 13;
    pub const YES: TokenId = 14;
    pub const NO: TokenId = 15;
    pub const ONE: TokenId = 16;
}

/// Id of the number token `n` in `1..=6`.
pub fn number(n: u8) -> TokenId {
    debug_assert!((1..=6).contains(&n));
    tok::ONE + n as TokenId - 1
}

/// Value of a number token, if `id` is one.
pub fn number_value(id: TokenId) -> Option<u8> {
    (tok::ONE..tok::ONE + 6)
        .contains(&id)
        .then(|| (id - tok::ONE + 1) as u8)
}

pub fn answer(yes: bool) -> TokenId {
    if yes {
        tok::YES
    } else {
        tok::NO
    }
}

/// Text index of the `digit` keyword in HS, FH and padded NS prompts.
pub const ALIGNED_DIGIT_INDEX: usize = 9;
/// Text index of the `digit` keyword in unpadded NS prompts.
pub const UNPADDED_NS_DIGIT_INDEX: usize = 1;
pub const NS_PAD_COUNT: usize = 8;
/// Tokens in one "row r column c yes|no" line.
pub const LINE_LEN: usize = 5;

pub fn token_id(text: &str) -> Result<TokenId, FormatError> {
    TOKENS
        .iter()
        .position(|&t| t == text)
        .map(|i| i as TokenId)
        .ok_or_else(|| FormatError::UnknownToken(text.to_string()))
}

pub fn token_text(id: TokenId) -> Result<&'static str, FormatError> {
    TOKENS
        .get(id as usize)
        .copied()
        .ok_or(FormatError::UnknownId(id))
}

/// Token-to-id table as written next to checkpoints.
pub fn vocab_json() -> String {
    let map: BTreeMap<&str, TokenId> = TOKENS
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i as TokenId))
        .collect();
    serde_json::to_string_pretty(&map).expect("vocab serializes")
}

/// Digest of the ordered token list; checkpoints and datasets must agree on it.
pub fn vocab_hash() -> String {
    let joined = TOKENS.join("\n");
    Sha256::digest(joined.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Step lines followed by the solution.
    #[default]
    FullSequence,
    /// Only "solution yes|no <EOS>" for HS/FH.
    FinalOnly,
}

/// Where HS/FH supervision begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStart {
    /// First supervised prediction is the token after the candidate digit value.
    #[default]
    AfterDigitValue,
    /// First supervised prediction is the digit value itself.
    AfterDigitKeyword,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormatOptions {
    pub ns_padded: bool,
    pub target: TargetMode,
    pub mask_start: MaskStart,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    /// Index of the first target token.
    pub boundary: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.ids[..self.boundary]
    }

    pub fn target(&self) -> &[TokenId] {
        &self.ids[self.boundary..]
    }
}

fn push_cell(ids: &mut Vec<TokenId>, cell: CellRef) {
    ids.extend([tok::ROW, number(cell.row()), tok::COLUMN, number(cell.col())]);
}

fn house_token(kind: HouseKind) -> TokenId {
    match kind {
        HouseKind::Row => tok::ROW,
        HouseKind::Column => tok::COLUMN,
        HouseKind::Box => tok::BOX,
    }
}

fn check_digit(digit: u8) -> Result<(), FormatError> {
    if (1..=6).contains(&digit) {
        Ok(())
    } else {
        Err(FormatError::Encode(format!("digit {digit} out of range")))
    }
}

/// Prompt tokens. `padded` only changes Naked Single prompts.
pub fn encode_prompt(inst: &PuzzleInstance, padded: bool) -> Result<TokenSeq, FormatError> {
    check_digit(inst.digit)?;
    let mut ids = vec![tok::SOS];
    match inst.task {
        Task::HiddenSingle | Task::FullHouse => {
            let (goal, kind) = inst
                .goal
                .zip(inst.house_kind)
                .ok_or_else(|| FormatError::Encode("HS/FH instance without goal".into()))?;
            let (task_tok, verb) = if inst.task == Task::HiddenSingle {
                (tok::HIDDEN_SINGLE, tok::CAN_CONTAIN)
            } else {
                (tok::FULL_HOUSE, tok::IS_FILLED)
            };
            ids.extend([task_tok, tok::GOAL_CELL]);
            push_cell(&mut ids, goal);
            ids.extend([tok::HOUSE_TYPE, house_token(kind)]);
            ids.extend([tok::DIGIT, number(inst.digit), verb]);
        }
        Task::NakedSingle => {
            if padded {
                ids.extend([tok::PAD; NS_PAD_COUNT]);
            }
            ids.extend([tok::DIGIT, number(inst.digit), tok::CAN_CONTAIN]);
        }
    }
    let boundary = ids.len();
    Ok(TokenSeq { ids, boundary })
}

/// Target tokens (everything after the prompt).
pub fn encode_target(inst: &PuzzleInstance, mode: TargetMode) -> Result<Vec<TokenId>, FormatError> {
    let mut ids = Vec::new();
    match inst.task {
        Task::HiddenSingle | Task::FullHouse => {
            if inst.steps.len() != TRACE_STEPS {
                return Err(FormatError::Encode(format!(
                    "expected {TRACE_STEPS} steps, found {}",
                    inst.steps.len()
                )));
            }
            let label = inst
                .final_label()
                .ok_or_else(|| FormatError::Encode("HS/FH instance without a final label".into()))?;
            if mode == TargetMode::FullSequence {
                for step in &inst.steps {
                    push_cell(&mut ids, step.cell);
                    ids.push(answer(step.answer));
                }
            }
            ids.extend([tok::SOLUTION, answer(label), tok::EOS]);
        }
        Task::NakedSingle => {
            if inst.steps.len() != inst.queries.len() || inst.queries.is_empty() {
                return Err(FormatError::Encode("query/answer count mismatch".into()));
            }
            for step in &inst.steps {
                push_cell(&mut ids, step.cell);
                ids.push(answer(step.answer));
            }
            ids.push(tok::EOS);
        }
    }
    Ok(ids)
}

/// Prompt followed by target.
pub fn encode(inst: &PuzzleInstance, opts: &FormatOptions) -> Result<TokenSeq, FormatError> {
    let mut seq = encode_prompt(inst, opts.ns_padded)?;
    seq.ids.extend(encode_target(inst, opts.target)?);
    Ok(seq)
}

/// Per-position flags; `mask[i]` supervises the prediction of token `i + 1`
/// from position `i`. The last position never predicts anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask(pub Vec<bool>);

impl LossMask {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Position of the `digit` keyword within the prompt.
pub fn digit_keyword_index(ids: &[TokenId]) -> Option<usize> {
    ids.iter().position(|&t| t == tok::DIGIT)
}

pub fn build_loss_mask(
    task: Task,
    seq: &TokenSeq,
    start: MaskStart,
) -> Result<LossMask, FormatError> {
    let n = seq.len();
    let mut mask = vec![false; n];
    let keyword = digit_keyword_index(seq.prompt())
        .ok_or_else(|| FormatError::Mask("no `digit` keyword in the prompt".into()))?;
    if keyword + 1 >= n || number_value(seq.ids[keyword + 1]).is_none() {
        return Err(FormatError::Mask("`digit` keyword is not followed by a number".into()));
    }
    match task {
        Task::HiddenSingle | Task::FullHouse => {
            let first = match start {
                MaskStart::AfterDigitValue => keyword + 1,
                MaskStart::AfterDigitKeyword => keyword,
            };
            if *seq.ids.last().expect("non-empty") != tok::EOS {
                return Err(FormatError::Mask("sequence does not end with <EOS>".into()));
            }
            for m in &mut mask[first..n - 1] {
                *m = true;
            }
        }
        Task::NakedSingle => {
            let body = &seq.ids[seq.boundary..];
            if body.is_empty() || body.len() % LINE_LEN != 1 {
                return Err(FormatError::Mask("malformed naked single query lines".into()));
            }
            for q in 0..body.len() / LINE_LEN {
                let col_number = seq.boundary + q * LINE_LEN + 3;
                if seq.ids[col_number - 1] != tok::COLUMN {
                    return Err(FormatError::Mask(format!("query {q} has no column token")));
                }
                mask[col_number] = true;
            }
        }
    }
    Ok(LossMask(mask))
}

/// Whitespace-joined token texts.
pub fn decode(ids: &[TokenId]) -> Result<String, FormatError> {
    let texts = ids
        .iter()
        .map(|&id| token_text(id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(texts.join(" "))
}

/// Inverse of [`decode`].
pub fn parse_text(text: &str) -> Result<Vec<TokenId>, FormatError> {
    text.split_whitespace().map(token_id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn text(inst: &PuzzleInstance, opts: &FormatOptions) -> String {
        decode(&encode(inst, opts).unwrap().ids).unwrap()
    }

    #[test]
    fn vocab_is_a_bijection() {
        assert_eq!(VOCAB_SIZE, 22);
        for (i, t) in TOKENS.iter().enumerate() {
            assert_eq!(token_id(t).unwrap(), i as TokenId);
        }
        assert_eq!(token_id("can_contain").unwrap(), tok::CAN_CONTAIN);
        assert_eq!(token_id("6").unwrap(), number(6));
        assert!(token_id("seven").is_err());
        assert!(token_text(22).is_err());
        let map: BTreeMap<String, TokenId> = serde_json::from_str(&vocab_json()).unwrap();
        assert_eq!(map.len(), 22);
        assert_eq!(vocab_hash(), vocab_hash());
    }

    #[test]
    fn table_one_hidden_single_text() {
        let inst = fixtures::example_hidden_single();
        let prompt = encode_prompt(&inst, false).unwrap();
        assert_eq!(
            decode(&prompt.ids).unwrap(),
            "<SOS> hidden_single goal_cell row 6 column 2 house_type column digit 3 can_contain"
        );
        assert_eq!(prompt.len(), 12);
        assert_eq!(
            decode(&encode_target(&inst, TargetMode::FullSequence).unwrap()).unwrap(),
            "row 1 column 2 no row 2 column 2 no row 3 column 2 no row 4 column 2 no \
             row 5 column 2 no solution yes <EOS>"
        );
        assert_eq!(
            decode(&encode_target(&inst, TargetMode::FinalOnly).unwrap()).unwrap(),
            "solution yes <EOS>"
        );
    }

    #[test]
    fn table_one_full_house_text() {
        let opts = FormatOptions::default();
        assert_eq!(
            text(&fixtures::example_full_house(), &opts),
            "<SOS> full_house goal_cell row 2 column 2 house_type box digit 4 is_filled \
             row 1 column 1 no row 1 column 2 yes row 1 column 3 no row 2 column 1 yes \
             row 2 column 3 yes solution no <EOS>"
        );
    }

    #[test]
    fn naked_single_texts() {
        let opts = FormatOptions::default();
        assert_eq!(
            text(&fixtures::example_naked_single(), &opts),
            "<SOS> digit 6 can_contain row 4 column 3 no <EOS>"
        );
        let padded = FormatOptions {
            ns_padded: true,
            ..opts
        };
        let five = crate::instance::rotate_digits(&fixtures::example_naked_single_five(), 3).unwrap();
        assert_eq!(
            text(&five, &padded),
            "<SOS> <PAD> <PAD> <PAD> <PAD> <PAD> <PAD> <PAD> <PAD> digit 3 can_contain \
             row 4 column 3 no row 2 column 2 no row 5 column 3 yes row 4 column 5 no \
             row 4 column 2 yes <EOS>"
        );
    }

    #[test]
    fn digit_keyword_alignment() {
        let hs = encode_prompt(&fixtures::example_hidden_single(), false).unwrap();
        let fh = encode_prompt(&fixtures::example_full_house(), false).unwrap();
        let ns = encode_prompt(&fixtures::example_naked_single_five(), true).unwrap();
        let unpadded = encode_prompt(&fixtures::example_naked_single_five(), false).unwrap();
        for seq in [&hs, &fh, &ns] {
            assert_eq!(digit_keyword_index(&seq.ids), Some(ALIGNED_DIGIT_INDEX));
            assert!(number_value(seq.ids[ALIGNED_DIGIT_INDEX + 1]).is_some());
        }
        assert_eq!(digit_keyword_index(&unpadded.ids), Some(UNPADDED_NS_DIGIT_INDEX));
    }

    #[test]
    fn loss_mask_cardinalities() {
        let opts = FormatOptions::default();
        let hs = encode(&fixtures::example_hidden_single(), &opts).unwrap();
        let mask = build_loss_mask(Task::HiddenSingle, &hs, MaskStart::AfterDigitValue).unwrap();
        // can_contain, five step lines, "solution yes", <EOS>.
        assert_eq!(mask.count(), 1 + 5 * 5 + 2 + 1);
        assert_eq!(mask.0.iter().position(|&b| b), Some(10));
        assert!(!mask.0[hs.len() - 1]);
        let alt = build_loss_mask(Task::HiddenSingle, &hs, MaskStart::AfterDigitKeyword).unwrap();
        assert_eq!(alt.count(), mask.count() + 1);

        let ns1 = encode(&fixtures::example_naked_single(), &opts).unwrap();
        let m1 = build_loss_mask(Task::NakedSingle, &ns1, MaskStart::default()).unwrap();
        assert_eq!(m1.count(), 1);
        assert_eq!(ns1.ids[m1.0.iter().position(|&b| b).unwrap() + 1], tok::NO);

        let padded = FormatOptions {
            ns_padded: true,
            ..opts
        };
        let ns5 = encode(&fixtures::example_naked_single_five(), &padded).unwrap();
        let m5 = build_loss_mask(Task::NakedSingle, &ns5, MaskStart::default()).unwrap();
        assert_eq!(m5.count(), 5);
        for (i, &b) in m5.0.iter().enumerate() {
            if b {
                assert!(matches!(ns5.ids[i + 1], tok::YES | tok::NO));
                assert!(number_value(ns5.ids[i]).is_some());
            }
        }
    }

    #[test]
    fn loss_mask_errors() {
        let seq = TokenSeq {
            ids: vec![tok::SOS, tok::HIDDEN_SINGLE, tok::EOS],
            boundary: 2,
        };
        assert!(build_loss_mask(Task::HiddenSingle, &seq, MaskStart::default()).is_err());
        let seq = TokenSeq {
            ids: vec![tok::SOS, tok::DIGIT, number(3), tok::CAN_CONTAIN, tok::ROW, tok::EOS],
            boundary: 4,
        };
        assert!(build_loss_mask(Task::NakedSingle, &seq, MaskStart::default()).is_err());
    }

    #[test]
    fn step_count_mismatch_is_an_error() {
        let mut inst = fixtures::example_hidden_single();
        inst.steps.pop();
        assert!(encode_target(&inst, TargetMode::FullSequence).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&[tok::SOS, tok::DIGIT, number(6)]).unwrap(), "<SOS> digit 6");
        assert!(decode(&[99]).is_err());
    }

    proptest! {
        #[test]
        fn decode_round_trip(ids in proptest::collection::vec(0u32..22, 0..64)) {
            let text = decode(&ids).unwrap();
            prop_assert_eq!(parse_text(&text).unwrap(), ids);
        }
    }
}
