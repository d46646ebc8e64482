//! RoBERTa / XLM-RoBERTa encoder with its masked-LM head.

use candle_core::{Device, Result, Tensor};
use candle_nn::VarBuilder;
use serde::Deserialize;

use super::nn::{attention, gelu_erf, merge_heads, split_heads, LayerNorm, Linear};

#[derive(Debug, Clone, Deserialize)]
pub struct RobertaConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_pad")]
    pub pad_token_id: u32,
}

fn default_type_vocab() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-5
}
fn default_pad() -> u32 {
    1
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
    heads: usize,
}

impl Layer {
    fn load(vb: VarBuilder, cfg: &RobertaConfig) -> Result<Self> {
        let (h, i, eps) = (cfg.hidden_size, cfg.intermediate_size, cfg.layer_norm_eps);
        Ok(Self {
            query: Linear::load(vb.pp("attention.self.query"), h, h, true)?,
            key: Linear::load(vb.pp("attention.self.key"), h, h, true)?,
            value: Linear::load(vb.pp("attention.self.value"), h, h, true)?,
            attn_out: Linear::load(vb.pp("attention.output.dense"), h, h, true)?,
            attn_norm: LayerNorm::load(vb.pp("attention.output.LayerNorm"), h, eps)?,
            intermediate: Linear::load(vb.pp("intermediate.dense"), h, i, true)?,
            output: Linear::load(vb.pp("output.dense"), i, h, true)?,
            out_norm: LayerNorm::load(vb.pp("output.LayerNorm"), h, eps)?,
            heads: cfg.num_attention_heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let q = split_heads(&self.query.forward(x)?, self.heads)?;
        let k = split_heads(&self.key.forward(x)?, self.heads)?;
        let v = split_heads(&self.value.forward(x)?, self.heads)?;
        let d = q.dim(2)?;
        let a = merge_heads(&attention(&q, &k, &v, 1.0 / (d as f64).sqrt(), None)?)?;
        let x = self.attn_norm.forward(&(x + self.attn_out.forward(&a)?)?)?;
        let h = gelu_erf(&self.intermediate.forward(&x)?)?;
        self.out_norm.forward(&(x + self.output.forward(&h)?)?)
    }
}

pub struct RobertaMaskedLm {
    word: Tensor,
    position: Tensor,
    token_type: Tensor,
    emb_norm: LayerNorm,
    layers: Vec<Layer>,
    head_dense: Linear,
    head_norm: LayerNorm,
    decoder: Linear,
    cfg: RobertaConfig,
}

impl RobertaMaskedLm {
    pub fn load(vb: VarBuilder, cfg: RobertaConfig) -> Result<Self> {
        let body = if vb.contains_tensor("roberta.embeddings.word_embeddings.weight") {
            vb.pp("roberta")
        } else {
            vb.clone()
        };
        let (h, eps) = (cfg.hidden_size, cfg.layer_norm_eps);
        let emb = body.pp("embeddings");
        let word = emb.get((cfg.vocab_size, h), "word_embeddings.weight")?;
        let position = emb.get((cfg.max_position_embeddings, h), "position_embeddings.weight")?;
        let token_type = emb.get((cfg.type_vocab_size, h), "token_type_embeddings.weight")?;
        let emb_norm = LayerNorm::load(emb.pp("LayerNorm"), h, eps)?;
        let layers = (0..cfg.num_hidden_layers)
            .map(|i| Layer::load(body.pp(format!("encoder.layer.{i}")), &cfg))
            .collect::<Result<Vec<_>>>()?;

        let head = vb.pp("lm_head");
        let head_dense = Linear::load(head.pp("dense"), h, h, true)?;
        let head_norm = LayerNorm::load(head.pp("layer_norm"), h, eps)?;
        let bias = if head.contains_tensor("bias") {
            head.get(cfg.vocab_size, "bias")?
        } else {
            head.get(cfg.vocab_size, "decoder.bias")?
        };
        let decoder_weight = if head.contains_tensor("decoder.weight") {
            head.get((cfg.vocab_size, h), "decoder.weight")?
        } else {
            word.clone()
        };
        let decoder = Linear::from_weight(&decoder_weight, Some(bias))?;
        Ok(Self { word, position, token_type, emb_norm, layers, head_dense, head_norm, decoder, cfg })
    }

    /// Usable sequence length; RoBERTa position ids start after the padding index.
    pub fn max_sequence(&self) -> usize {
        self.cfg.max_position_embeddings - self.cfg.pad_token_id as usize - 1
    }

    /// Vocabulary logits at `positions` of a single unpadded sequence.
    pub fn logits_at(&self, ids: &[u32], positions: &[usize], device: &Device) -> Result<Tensor> {
        let t = ids.len();
        let input = Tensor::new(ids, device)?;
        let offset = self.cfg.pad_token_id + 1;
        let pos: Vec<u32> = (0..t as u32).map(|i| i + offset).collect();
        let pos = Tensor::new(pos.as_slice(), device)?;
        let types = Tensor::zeros(t, candle_core::DType::U32, device)?;
        let x = ((self.word.embedding(&input)? + self.position.embedding(&pos)?)?
            + self.token_type.embedding(&types)?)?;
        let mut x = self.emb_norm.forward(&x)?;
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        let idx: Vec<u32> = positions.iter().map(|&p| p as u32).collect();
        let rows = x.index_select(&Tensor::new(idx.as_slice(), device)?, 0)?;
        let h = self.head_norm.forward(&gelu_erf(&self.head_dense.forward(&rows)?)?)?;
        self.decoder.forward(&h)
    }
}
