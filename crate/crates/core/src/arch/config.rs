//! Declarative model specifications: every architecture in the lab is
//! described by a ModelSpec, validated up front, and assembled from it.

use crate::engine::fnv1a64;
use crate::error::{LabError, Result};
use crate::nn::{ScoreActivation, SymbolMode};

#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Abstractor on raw object features, decoder attends to abstract states.
    ArchA,
    /// Encoder, then Abstractor on encoder states, decoder attends to
    /// abstract states only.
    ArchB,
    /// Parallel branches: encoder on embeddings and Abstractor on the same
    /// embeddings; decoder attends to both contexts in order.
    ArchC,
    /// Composed: Abstractor on encoder states; decoder attends to both.
    ArchD,
    /// Two Abstractors in series on raw object features.
    ArchE,
    /// Standard encoder-decoder baseline.
    Transformer,
    /// ArchB with the relational interface swapped for standard
    /// cross-attention (queries from abstract states, keys and values from
    /// encoder states); parameter shapes match ArchB exactly.
    Ablation,
    /// Similarity-matrix baseline with one shared object map.
    CorelnetSym,
    /// Similarity-matrix baseline with separate left/right maps.
    CorelnetAsym,
    /// Dense network on pre-encoded relation bits.
    SymbolicMlp,
}

impl ModelKind {
    pub fn is_seq2seq_only(self) -> bool {
        matches!(
            self,
            ModelKind::ArchB
                | ModelKind::ArchC
                | ModelKind::ArchD
                | ModelKind::ArchE
                | ModelKind::Transformer
                | ModelKind::Ablation
        )
    }
}

fn default_true() -> bool {
    true
}

/// Stack of relational cross-attention layers over a symbol bank.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractorConfig {
    pub layers: usize,
    /// Relation dimension: number of relation heads.
    pub d_r: usize,
    /// Projection width of each relation head.
    pub d_p: usize,
    /// Symbol (and output) width.
    pub d_s: usize,
    pub d_ff: usize,
    pub sigma_rel: ScoreActivation,
    pub symbol_mode: SymbolMode,
    #[serde(default)]
    pub use_residual: bool,
    #[serde(default)]
    pub use_layer_norm: bool,
    #[serde(default)]
    pub symmetric: bool,
    /// Optional self-attention sublayer over abstract states between the
    /// relational block and the feedforward.
    #[serde(default)]
    pub use_self_attention: bool,
    #[serde(default = "default_true")]
    pub scale_scores: bool,
    #[serde(default)]
    pub mask_diagonal: bool,
    /// Per-head value width; defaults to d_p.
    #[serde(default)]
    pub d_hv: Option<usize>,
}

impl AbstractorConfig {
    pub fn head_value_width(&self) -> usize {
        self.d_hv.unwrap_or(self.d_p)
    }

    fn validate(&self, name: &str) -> Result<()> {
        for (label, v) in [
            ("layers", self.layers),
            ("d_r", self.d_r),
            ("d_p", self.d_p),
            ("d_s", self.d_s),
            ("d_ff", self.d_ff),
        ] {
            if v == 0 {
                return Err(LabError::config(format!("{name}.{label} must be positive")));
            }
        }
        if self.d_hv == Some(0) {
            return Err(LabError::config(format!("{name}.d_hv must be positive")));
        }
        Ok(())
    }
}

/// Standard encoder or decoder stack dimensions.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncDecConfig {
    pub layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_p: usize,
    pub d_ff: usize,
    /// Post-norm (false, default) applies LayerNorm(x + sublayer(x));
    /// pre-norm applies x + sublayer(LayerNorm(x)).
    #[serde(default)]
    pub pre_norm: bool,
}

impl EncDecConfig {
    fn validate(&self, name: &str) -> Result<()> {
        for (label, v) in [
            ("layers", self.layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_p", self.d_p),
            ("d_ff", self.d_ff),
        ] {
            if v == 0 {
                return Err(LabError::config(format!("{name}.{label} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    /// Decode a token sequence; vocabulary is the task's real token count.
    /// Two extra internal tokens are appended: start = vocab, pad = vocab+1.
    Seq2seq { vocab: usize },
    /// Flatten the module output and project to class logits.
    Classifier { classes: usize },
}

/// Which stream the ArchB Abstractor reads.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractorReads {
    Encoder,
    Embedding,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Raw object feature width.
    pub d_in: usize,
    pub max_input_len: usize,
    #[serde(default)]
    pub max_target_len: usize,
    pub head: HeadKind,
    /// Classifier-only: width of a dense+relu object embedder applied
    /// before the relational module.
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub encoder: Option<EncDecConfig>,
    #[serde(default)]
    pub decoder: Option<EncDecConfig>,
    #[serde(default)]
    pub abstractor: Option<AbstractorConfig>,
    #[serde(default)]
    pub second_abstractor: Option<AbstractorConfig>,
    /// ArchB only; defaults to reading encoder states.
    #[serde(default)]
    pub abstractor_reads: Option<AbstractorReads>,
    #[serde(default)]
    pub mlp_hidden: Option<usize>,
    #[serde(default)]
    pub corelnet_softmax: Option<bool>,
}

impl ModelSpec {
    /// Stable content hash over the serialized spec, used to guard
    /// checkpoint compatibility.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.max_input_len == 0 {
            return Err(LabError::config("d_in and max_input_len must be positive"));
        }
        match self.head {
            HeadKind::Seq2seq { vocab } => {
                if vocab == 0 {
                    return Err(LabError::config("seq2seq head needs vocab >= 1"));
                }
                if self.max_target_len == 0 {
                    return Err(LabError::config("seq2seq model needs max_target_len >= 1"));
                }
            }
            HeadKind::Classifier { classes } => {
                if classes < 2 {
                    return Err(LabError::config("classifier head needs classes >= 2"));
                }
                if self.kind.is_seq2seq_only() {
                    return Err(LabError::config(format!(
                        "{:?} requires a seq2seq head",
                        self.kind
                    )));
                }
            }
        }
        if let Some(e) = &self.encoder {
            e.validate("encoder")?;
        }
        if let Some(d) = &self.decoder {
            d.validate("decoder")?;
        }
        if let Some(a) = &self.abstractor {
            a.validate("abstractor")?;
        }
        if let Some(a) = &self.second_abstractor {
            a.validate("second_abstractor")?;
        }
        if self.abstractor_reads.is_some() && self.kind != ModelKind::ArchB {
            return Err(LabError::config(
                "abstractor_reads is only meaningful for arch_b",
            ));
        }
        if self.embed_dim.is_some() && matches!(self.head, HeadKind::Seq2seq { .. }) {
            return Err(LabError::config("embed_dim applies to classifier heads only"));
        }
        let is_seq2seq = matches!(self.head, HeadKind::Seq2seq { .. });
        match self.kind {
            ModelKind::ArchA => {
                self.require_abstractor()?;
                self.forbid("encoder", self.encoder.is_some())?;
                if is_seq2seq {
                    self.require_decoder()?;
                } else {
                    self.forbid("decoder", self.decoder.is_some())?;
                }
            }
            ModelKind::ArchB | ModelKind::ArchC | ModelKind::ArchD => {
                self.require_encoder()?;
                self.require_abstractor()?;
                self.require_decoder()?;
            }
            ModelKind::ArchE => {
                self.require_abstractor()?;
                self.require_decoder()?;
                self.forbid("encoder", self.encoder.is_some())?;
                if self.second_abstractor.is_none() {
                    return Err(LabError::config("arch_e needs second_abstractor"));
                }
            }
            ModelKind::Transformer => {
                self.require_encoder()?;
                self.require_decoder()?;
                self.forbid("abstractor", self.abstractor.is_some())?;
            }
            ModelKind::Ablation => {
                self.require_encoder()?;
                self.require_abstractor()?;
                self.require_decoder()?;
                let a = self.abstractor.as_ref().unwrap();
                let e = self.encoder.as_ref().unwrap();
                if a.d_s != e.d_model {
                    return Err(LabError::config(format!(
                        "ablation interface width mismatch: abstractor.d_s = {} \
                         must equal encoder.d_model = {}",
                        a.d_s, e.d_model
                    )));
                }
                if a.head_value_width() != a.d_p {
                    return Err(LabError::config(
                        "ablation requires abstractor.d_hv == abstractor.d_p \
                         for shape-identical parameters",
                    ));
                }
                if a.sigma_rel != ScoreActivation::Softmax {
                    return Err(LabError::config(
                        "ablation uses standard attention; set abstractor.sigma_rel \
                         to softmax",
                    ));
                }
                if a.symbol_mode == SymbolMode::PositionRelative {
                    return Err(LabError::config(
                        "ablation needs addressable symbols (learned or sinusoidal)",
                    ));
                }
            }
            ModelKind::CorelnetSym | ModelKind::CorelnetAsym => {
                self.forbid("encoder", self.encoder.is_some())?;
                self.forbid("decoder", self.decoder.is_some())?;
                self.forbid("abstractor", self.abstractor.is_some())?;
            }
            ModelKind::SymbolicMlp => {
                self.forbid("encoder", self.encoder.is_some())?;
                self.forbid("decoder", self.decoder.is_some())?;
                self.forbid("abstractor", self.abstractor.is_some())?;
                self.forbid("embed_dim", self.embed_dim.is_some())?;
                if self.mlp_hidden.unwrap_or(0) == 0 {
                    return Err(LabError::config("symbolic_mlp needs mlp_hidden >= 1"));
                }
            }
        }
        if self.second_abstractor.is_some() && self.kind != ModelKind::ArchE {
            return Err(LabError::config(
                "second_abstractor is only meaningful for arch_e",
            ));
        }
        Ok(())
    }

    fn require_encoder(&self) -> Result<()> {
        if self.encoder.is_none() {
            return Err(LabError::config(format!("{:?} needs an encoder", self.kind)));
        }
        Ok(())
    }

    fn require_decoder(&self) -> Result<()> {
        if self.decoder.is_none() {
            return Err(LabError::config(format!("{:?} needs a decoder", self.kind)));
        }
        Ok(())
    }

    fn require_abstractor(&self) -> Result<()> {
        if self.abstractor.is_none() {
            return Err(LabError::config(format!(
                "{:?} needs an abstractor",
                self.kind
            )));
        }
        Ok(())
    }

    fn forbid(&self, what: &str, present: bool) -> Result<()> {
        if present {
            return Err(LabError::config(format!(
                "{:?} does not take a {what} section",
                self.kind
            )));
        }
        Ok(())
    }

    /// Internal start token id for seq2seq heads.
    pub fn start_token(&self) -> Option<usize> {
        match self.head {
            HeadKind::Seq2seq { vocab } => Some(vocab),
            HeadKind::Classifier { .. } => None,
        }
    }

    /// Internal pad token id for seq2seq heads, ignored by the loss.
    pub fn pad_token(&self) -> Option<usize> {
        match self.head {
            HeadKind::Seq2seq { vocab } => Some(vocab + 1),
            HeadKind::Classifier { .. } => None,
        }
    }

    /// Embedding-table and logit width for seq2seq heads (vocab + start + pad).
    pub fn vocab_total(&self) -> Option<usize> {
        match self.head {
            HeadKind::Seq2seq { vocab } => Some(vocab + 2),
            HeadKind::Classifier { .. } => None,
        }
    }
}
