//! T5 encoder-decoder (original and v1.1 / gated-GELU checkpoints).

use candle_core::{Device, Result, Tensor};
use candle_nn::VarBuilder;
use serde::Deserialize;

use super::nn::{attention, causal_mask, gelu_tanh, merge_heads, split_heads, Linear, RmsNorm};

#[derive(Debug, Clone, Deserialize)]
pub struct T5Config {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_kv: usize,
    pub d_ff: usize,
    pub num_layers: usize,
    #[serde(default)]
    pub num_decoder_layers: Option<usize>,
    pub num_heads: usize,
    #[serde(default = "default_buckets")]
    pub relative_attention_num_buckets: usize,
    #[serde(default = "default_max_distance")]
    pub relative_attention_max_distance: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_epsilon: f64,
    #[serde(default = "default_ff")]
    pub feed_forward_proj: String,
    #[serde(default = "default_true")]
    pub tie_word_embeddings: bool,
    /// Rescale decoder output by `d_model^-0.5`; defaults to `tie_word_embeddings`.
    #[serde(default)]
    pub scale_decoder_outputs: Option<bool>,
    #[serde(default)]
    pub decoder_start_token_id: u32,
    #[serde(default = "default_eos")]
    pub eos_token_id: u32,
}

fn default_buckets() -> usize {
    32
}
fn default_max_distance() -> usize {
    128
}
fn default_eps() -> f64 {
    1e-6
}
fn default_ff() -> String {
    "relu".into()
}
fn default_true() -> bool {
    true
}
fn default_eos() -> u32 {
    1
}

/// Bucket of a relative position `memory - query`, as in the reference
/// implementation (including its float32 logarithm).
pub fn relative_bucket(relative: i64, bidirectional: bool, num_buckets: usize, max_distance: usize) -> usize {
    let mut buckets = num_buckets as i64;
    let mut out = 0i64;
    let mut rel = relative;
    if bidirectional {
        buckets /= 2;
        if rel > 0 {
            out += buckets;
        }
        rel = rel.abs();
    } else {
        rel = -rel.min(0);
    }
    let max_exact = buckets / 2;
    if rel < max_exact {
        out += rel;
    } else {
        let scaled = ((rel as f32 / max_exact as f32).ln() / (max_distance as f32 / max_exact as f32).ln()
            * (buckets - max_exact) as f32) as i64;
        out += (max_exact + scaled).min(buckets - 1);
    }
    out as usize
}

struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    relative_bias: Option<Tensor>,
}

impl Attention {
    fn load(vb: VarBuilder, cfg: &T5Config, with_bias: bool) -> Result<Self> {
        let inner = cfg.num_heads * cfg.d_kv;
        let relative_bias = if with_bias {
            Some(vb.get(
                (cfg.relative_attention_num_buckets, cfg.num_heads),
                "relative_attention_bias.weight",
            )?)
        } else {
            None
        };
        Ok(Self {
            q: Linear::load(vb.pp("q"), cfg.d_model, inner, false)?,
            k: Linear::load(vb.pp("k"), cfg.d_model, inner, false)?,
            v: Linear::load(vb.pp("v"), cfg.d_model, inner, false)?,
            o: Linear::load(vb.pp("o"), inner, cfg.d_model, false)?,
            heads: cfg.num_heads,
            relative_bias,
        })
    }

    /// `[H, Tq, Tk]` position bias from this layer's bucket embedding.
    fn position_bias(&self, tq: usize, tk: usize, bidirectional: bool, cfg: &T5Config, device: &Device) -> Result<Option<Tensor>> {
        let Some(table) = &self.relative_bias else { return Ok(None) };
        let buckets: Vec<u32> = (0..tq)
            .flat_map(|i| {
                (0..tk).map(move |j| {
                    relative_bucket(
                        j as i64 - i as i64,
                        bidirectional,
                        cfg.relative_attention_num_buckets,
                        cfg.relative_attention_max_distance,
                    ) as u32
                })
            })
            .collect();
        let idx = Tensor::new(buckets.as_slice(), device)?;
        let bias = table.embedding(&idx)?.reshape((tq, tk, self.heads))?;
        Ok(Some(bias.permute((2, 0, 1))?.contiguous()?))
    }

    fn forward(&self, x: &Tensor, memory: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let q = split_heads(&self.q.forward(x)?, self.heads)?;
        let k = split_heads(&self.k.forward(memory)?, self.heads)?;
        let v = split_heads(&self.v.forward(memory)?, self.heads)?;
        self.o.forward(&merge_heads(&attention(&q, &k, &v, 1.0, bias)?)?)
    }
}

enum FeedForward {
    Relu { wi: Linear, wo: Linear },
    GatedGelu { wi_0: Linear, wi_1: Linear, wo: Linear },
}

impl FeedForward {
    fn load(vb: VarBuilder, cfg: &T5Config) -> Result<Self> {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        if cfg.feed_forward_proj.contains("gated") {
            Ok(Self::GatedGelu {
                wi_0: Linear::load(vb.pp("wi_0"), d, f, false)?,
                wi_1: Linear::load(vb.pp("wi_1"), d, f, false)?,
                wo: Linear::load(vb.pp("wo"), f, d, false)?,
            })
        } else {
            Ok(Self::Relu {
                wi: Linear::load(vb.pp("wi"), d, f, false)?,
                wo: Linear::load(vb.pp("wo"), f, d, false)?,
            })
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Relu { wi, wo } => wo.forward(&wi.forward(x)?.relu()?),
            Self::GatedGelu { wi_0, wi_1, wo } => {
                let g = gelu_tanh(&wi_0.forward(x)?)?;
                wo.forward(&(g * wi_1.forward(x)?)?)
            }
        }
    }
}

struct EncoderBlock {
    attn_norm: RmsNorm,
    attn: Attention,
    ff_norm: RmsNorm,
    ff: FeedForward,
}

struct DecoderBlock {
    self_norm: RmsNorm,
    self_attn: Attention,
    cross_norm: RmsNorm,
    cross_attn: Attention,
    ff_norm: RmsNorm,
    ff: FeedForward,
}

pub struct T5 {
    shared: Tensor,
    encoder: Vec<EncoderBlock>,
    encoder_norm: RmsNorm,
    decoder: Vec<DecoderBlock>,
    decoder_norm: RmsNorm,
    lm_head: Linear,
    cfg: T5Config,
}

impl T5 {
    pub fn load(vb: VarBuilder, cfg: T5Config) -> Result<Self> {
        let eps = cfg.layer_norm_epsilon;
        let d = cfg.d_model;
        let shared = vb.get((cfg.vocab_size, d), "shared.weight")?;
        let encoder = (0..cfg.num_layers)
            .map(|i| {
                let b = vb.pp(format!("encoder.block.{i}.layer"));
                Ok(EncoderBlock {
                    attn_norm: RmsNorm::load(b.pp("0.layer_norm"), d, eps)?,
                    attn: Attention::load(b.pp("0.SelfAttention"), &cfg, i == 0)?,
                    ff_norm: RmsNorm::load(b.pp("1.layer_norm"), d, eps)?,
                    ff: FeedForward::load(b.pp("1.DenseReluDense"), &cfg)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = (0..cfg.num_decoder_layers.unwrap_or(cfg.num_layers))
            .map(|i| {
                let b = vb.pp(format!("decoder.block.{i}.layer"));
                Ok(DecoderBlock {
                    self_norm: RmsNorm::load(b.pp("0.layer_norm"), d, eps)?,
                    self_attn: Attention::load(b.pp("0.SelfAttention"), &cfg, i == 0)?,
                    cross_norm: RmsNorm::load(b.pp("1.layer_norm"), d, eps)?,
                    cross_attn: Attention::load(b.pp("1.EncDecAttention"), &cfg, false)?,
                    ff_norm: RmsNorm::load(b.pp("2.layer_norm"), d, eps)?,
                    ff: FeedForward::load(b.pp("2.DenseReluDense"), &cfg)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder_norm = RmsNorm::load(vb.pp("encoder.final_layer_norm"), d, eps)?;
        let decoder_norm = RmsNorm::load(vb.pp("decoder.final_layer_norm"), d, eps)?;
        let lm_head = if !cfg.tie_word_embeddings && vb.contains_tensor("lm_head.weight") {
            Linear::load(vb.pp("lm_head"), d, cfg.vocab_size, false)?
        } else {
            Linear::from_weight(&shared, None)?
        };
        Ok(Self { shared, encoder, encoder_norm, decoder, decoder_norm, lm_head, cfg })
    }

    pub fn config(&self) -> &T5Config {
        &self.cfg
    }

    fn encode(&self, ids: &[u32], device: &Device) -> Result<Tensor> {
        let t = ids.len();
        let mut x = self.shared.embedding(&Tensor::new(ids, device)?)?;
        let bias = self.encoder[0].attn.position_bias(t, t, true, &self.cfg, device)?;
        for b in &self.encoder {
            let h = b.attn_norm.forward(&x)?;
            x = (&x + b.attn.forward(&h, &h, bias.as_ref())?)?;
            x = (&x + b.ff.forward(&b.ff_norm.forward(&x)?)?)?;
        }
        self.encoder_norm.forward(&x)
    }

    /// Teacher-forced decoder logits `[T_dec, V]`, one row per decoder input.
    pub fn decoder_logits(&self, encoder_ids: &[u32], decoder_ids: &[u32], device: &Device) -> Result<Tensor> {
        let memory = self.encode(encoder_ids, device)?;
        let t = decoder_ids.len();
        let mut x = self.shared.embedding(&Tensor::new(decoder_ids, device)?)?;
        let mask = causal_mask(t, x.dtype(), device)?;
        let bias = match self.decoder[0].self_attn.position_bias(t, t, false, &self.cfg, device)? {
            Some(b) => b.broadcast_add(&mask)?,
            None => mask,
        };
        for b in &self.decoder {
            let h = b.self_norm.forward(&x)?;
            x = (&x + b.self_attn.forward(&h, &h, Some(&bias))?)?;
            let h = b.cross_norm.forward(&x)?;
            x = (&x + b.cross_attn.forward(&h, &memory, None)?)?;
            x = (&x + b.ff.forward(&b.ff_norm.forward(&x)?)?)?;
        }
        let mut x = self.decoder_norm.forward(&x)?;
        if self.cfg.scale_decoder_outputs.unwrap_or(self.cfg.tie_word_embeddings) {
            x = (x * (self.cfg.d_model as f64).powf(-0.5))?;
        }
        self.lm_head.forward(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::relative_bucket;

    #[test]
    fn buckets_match_reference() {
        // values from transformers' T5Attention._relative_position_bucket
        let bi: Vec<usize> = [-200, -20, -8, -1, 0, 1, 7, 8, 20, 200]
            .iter()
            .map(|&r| relative_bucket(r, true, 32, 128))
            .collect();
        assert_eq!(bi, [15, 10, 8, 1, 0, 17, 23, 24, 26, 31]);
        let uni: Vec<usize> = [-200, -20, -16, -1, 0, 5]
            .iter()
            .map(|&r| relative_bucket(r, false, 32, 128))
            .collect();
        assert_eq!(uni, [31, 17, 16, 1, 0, 0]);
    }
}
