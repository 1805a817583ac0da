use serde::{Deserialize, Serialize};
use sudokuformer_core::seqformat::VOCAB_SIZE;

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeScheme {
    #[default]
    Sinusoidal,
    Alibi,
    Srl,
    None,
}

impl PeScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            PeScheme::Sinusoidal => "sinusoidal",
            PeScheme::Alibi => "alibi",
            PeScheme::Srl => "srl",
            PeScheme::None => "none",
        }
    }
}

impl std::str::FromStr for PeScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinusoidal" => Ok(PeScheme::Sinusoidal),
            "alibi" => Ok(PeScheme::Alibi),
            "srl" => Ok(PeScheme::Srl),
            "none" => Ok(PeScheme::None),
            _ => Err(format!("unknown positional scheme `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    /// Normalize after each residual sum.
    #[default]
    Post,
    /// Normalize the sublayer input; a final norm precedes the decoder.
    Pre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub coord_emb_dim: usize,
    pub vocab_size: usize,
    /// Longest text sequence (prompt plus generated tokens) the model accepts.
    pub max_text_len: usize,
    pub pe_scheme: PeScheme,
    /// SRL label space; `None` means four times `max_text_len`.
    pub srl_label_space: Option<usize>,
    /// ALiBi distances include grid slots; when false, any pair involving a
    /// grid slot gets zero bias.
    pub alibi_grid_distance: bool,
    pub norm: NormPlacement,
    pub activation: Activation,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_layers: 3,
            n_heads: 8,
            d_ff: 1024,
            coord_emb_dim: 128,
            vocab_size: VOCAB_SIZE,
            max_text_len: 80,
            pe_scheme: PeScheme::Sinusoidal,
            srl_label_space: None,
            alibi_grid_distance: true,
            norm: NormPlacement::Post,
            activation: Activation::Relu,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A config with `d_model` and the coordinate width scaled together.
    pub fn sized(d_model: usize, n_layers: usize, n_heads: usize, d_ff: usize) -> Self {
        Self {
            d_model,
            n_layers,
            n_heads,
            d_ff,
            coord_emb_dim: d_model / 2,
            ..Self::default()
        }
    }

    pub fn srl_n(&self) -> usize {
        self.srl_label_space.unwrap_or(4 * self.max_text_len)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return err("sizes must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return err(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            ));
        }
        if self.coord_emb_dim * 2 != self.d_model {
            return err(format!(
                "two coordinate embeddings of {} do not make d_model {}",
                self.coord_emb_dim, self.d_model
            ));
        }
        if self.vocab_size != VOCAB_SIZE {
            return err(format!("vocabulary size must be {VOCAB_SIZE}"));
        }
        if !self.d_model.is_multiple_of(2) && self.pe_scheme == PeScheme::Sinusoidal {
            return err("sinusoidal encoding needs an even d_model".into());
        }
        if self.pe_scheme == PeScheme::Alibi && !self.n_heads.is_power_of_two() {
            return err("ALiBi needs a power-of-two head count".into());
        }
        if self.pe_scheme == PeScheme::Srl && self.srl_n() < self.max_text_len {
            return err(format!(
                "SRL label space {} is smaller than max_text_len {}",
                self.srl_n(),
                self.max_text_len
            ));
        }
        if self.max_text_len == 0 {
            return err("max_text_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Parameter tensor names and shapes in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, c, f, v) = (self.d_model, self.coord_emb_dim, self.d_ff, self.vocab_size);
        let mut out = vec![
            ("embed.row".to_string(), vec![6, c]),
            ("embed.col".to_string(), vec![6, c]),
            ("embed.digit".to_string(), vec![7, d]),
            ("embed.text".to_string(), vec![v, d]),
        ];
        if self.pe_scheme == PeScheme::Srl {
            out.push(("embed.srl".to_string(), vec![self.srl_n(), d]));
        }
        for i in 0..self.n_layers {
            let p = |s: &str| format!("layer{i}.{s}");
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((p(&format!("attn.{w}")), vec![d, d]));
                out.push((p(&format!("attn.b{}", &w[1..])), vec![d]));
            }
            out.push((p("ln1.g"), vec![d]));
            out.push((p("ln1.b"), vec![d]));
            out.push((p("ff.w1"), vec![d, f]));
            out.push((p("ff.b1"), vec![f]));
            out.push((p("ff.w2"), vec![f, d]));
            out.push((p("ff.b2"), vec![d]));
            out.push((p("ln2.g"), vec![d]));
            out.push((p("ln2.b"), vec![d]));
        }
        if self.norm == NormPlacement::Pre {
            out.push(("final_ln.g".to_string(), vec![d]));
            out.push(("final_ln.b".to_string(), vec![d]));
        }
        out.push(("decoder.w".to_string(), vec![d, v]));
        out.push(("decoder.b".to_string(), vec![v]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
