//! GPT-2 decoder-only transformer (Hugging Face checkpoint layout).

use candle_core::{Device, Result, Tensor};
use candle_nn::VarBuilder;
use serde::Deserialize;

use super::nn::{attention, causal_mask, gelu_tanh, merge_heads, split_heads, LayerNorm, Linear};

#[derive(Debug, Clone, Deserialize)]
pub struct Gpt2Config {
    pub vocab_size: usize,
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_epsilon: f64,
}

fn default_eps() -> f64 {
    1e-5
}

struct Block {
    ln_1: LayerNorm,
    c_attn: Linear,
    attn_proj: Linear,
    ln_2: LayerNorm,
    c_fc: Linear,
    mlp_proj: Linear,
    n_head: usize,
}

impl Block {
    fn load(vb: VarBuilder, cfg: &Gpt2Config) -> Result<Self> {
        let e = cfg.n_embd;
        Ok(Self {
            ln_1: LayerNorm::load(vb.pp("ln_1"), e, cfg.layer_norm_epsilon)?,
            c_attn: Linear::load_conv1d(vb.pp("attn.c_attn"), e, 3 * e)?,
            attn_proj: Linear::load_conv1d(vb.pp("attn.c_proj"), e, e)?,
            ln_2: LayerNorm::load(vb.pp("ln_2"), e, cfg.layer_norm_epsilon)?,
            c_fc: Linear::load_conv1d(vb.pp("mlp.c_fc"), e, 4 * e)?,
            mlp_proj: Linear::load_conv1d(vb.pp("mlp.c_proj"), 4 * e, e)?,
            n_head: cfg.n_head,
        })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let e = x.dim(1)?;
        let qkv = self.c_attn.forward(&self.ln_1.forward(x)?)?;
        let q = split_heads(&qkv.narrow(1, 0, e)?, self.n_head)?;
        let k = split_heads(&qkv.narrow(1, e, e)?, self.n_head)?;
        let v = split_heads(&qkv.narrow(1, 2 * e, e)?, self.n_head)?;
        let scale = 1.0 / ((e / self.n_head) as f64).sqrt();
        let a = merge_heads(&attention(&q, &k, &v, scale, Some(mask))?)?;
        let x = (x + self.attn_proj.forward(&a)?)?;
        let h = gelu_tanh(&self.c_fc.forward(&self.ln_2.forward(&x)?)?)?;
        x + self.mlp_proj.forward(&h)?
    }
}

pub struct Gpt2 {
    wte: Tensor,
    wpe: Tensor,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    lm_head: Linear,
    cfg: Gpt2Config,
}

impl Gpt2 {
    pub fn load(vb: VarBuilder, cfg: Gpt2Config) -> Result<Self> {
        // `GPT2LMHeadModel` checkpoints nest the body under `transformer.`
        let body = if vb.contains_tensor("transformer.wte.weight") {
            vb.pp("transformer")
        } else {
            vb.clone()
        };
        let wte = body.get((cfg.vocab_size, cfg.n_embd), "wte.weight")?;
        let wpe = body.get((cfg.n_positions, cfg.n_embd), "wpe.weight")?;
        let blocks = (0..cfg.n_layer)
            .map(|i| Block::load(body.pp(format!("h.{i}")), &cfg))
            .collect::<Result<Vec<_>>>()?;
        let ln_f = LayerNorm::load(body.pp("ln_f"), cfg.n_embd, cfg.layer_norm_epsilon)?;
        let lm_head = Linear::from_weight(&wte, None)?;
        Ok(Self { wte, wpe, blocks, ln_f, lm_head, cfg })
    }

    pub fn max_positions(&self) -> usize {
        self.cfg.n_positions
    }

    /// Next-token logits at the requested positions of `ids`.
    ///
    /// Row `r` of the result predicts the token after `ids[positions[r]]`.
    pub fn logits_at(&self, ids: &[u32], positions: &[usize], device: &Device) -> Result<Tensor> {
        let t = ids.len();
        let input = Tensor::new(ids, device)?;
        let pos: Vec<u32> = (0..t as u32).collect();
        let pos = Tensor::new(pos.as_slice(), device)?;
        let mut x = (self.wte.embedding(&input)? + self.wpe.embedding(&pos)?)?;
        let mask = causal_mask(t, x.dtype(), device)?;
        for b in &self.blocks {
            x = b.forward(&x, &mask)?;
        }
        let x = self.ln_f.forward(&x)?;
        let idx: Vec<u32> = positions.iter().map(|&p| p as u32).collect();
        let rows = x.index_select(&Tensor::new(idx.as_slice(), device)?, 0)?;
        self.lm_head.forward(&rows)
    }
}
