//! Small layers written with plain tensor ops so every model runs in both
//! f32 and f64.

use candle_core::{DType, Device, Result, Tensor, D};
use candle_nn::VarBuilder;

#[derive(Debug, Clone)]
pub struct Linear {
    /// Stored as `[in, out]` so the forward pass is a plain matmul.
    weight_t: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    /// PyTorch `nn.Linear` layout: `weight` is `[out, in]`.
    pub fn load(vb: VarBuilder, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        let w = vb.get((out_dim, in_dim), "weight")?;
        let bias = if bias { Some(vb.get(out_dim, "bias")?) } else { None };
        Ok(Self { weight_t: w.t()?.contiguous()?, bias })
    }

    /// GPT-2 `Conv1D` layout: `weight` is `[in, out]`.
    pub fn load_conv1d(vb: VarBuilder, in_dim: usize, out_dim: usize) -> Result<Self> {
        let w = vb.get((in_dim, out_dim), "weight")?;
        let b = vb.get(out_dim, "bias")?;
        Ok(Self { weight_t: w, bias: Some(b) })
    }

    pub fn from_weight(weight: &Tensor, bias: Option<Tensor>) -> Result<Self> {
        Ok(Self { weight_t: weight.t()?.contiguous()?, bias })
    }

    /// `x` is `[T, in]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight_t)?;
        match &self.bias {
            Some(b) => y.broadcast_add(b),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn load(vb: VarBuilder, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            weight: vb.get(dim, "weight")?,
            bias: vb.get(dim, "bias")?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)
    }
}

/// T5 layer norm: no mean subtraction, no bias.
#[derive(Debug, Clone)]
pub struct RmsNorm {
    weight: Tensor,
    eps: f64,
}

impl RmsNorm {
    pub fn load(vb: VarBuilder, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self { weight: vb.get(dim, "weight")?, eps })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let var = x.sqr()?.mean_keepdim(D::Minus1)?;
        x.broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)
    }
}

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    e.broadcast_div(&e.sum_keepdim(D::Minus1)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    shifted.broadcast_sub(&lse)
}

/// `[T, H*D]` → `[H, T, D]`.
pub fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (t, hd) = x.dims2()?;
    x.reshape((t, heads, hd / heads))?.transpose(0, 1)?.contiguous()
}

/// `[H, T, D]` → `[T, H*D]`.
pub fn merge_heads(x: &Tensor) -> Result<Tensor> {
    let (h, t, d) = x.dims3()?;
    x.transpose(0, 1)?.contiguous()?.reshape((t, h * d))
}

/// Additive mask `[T, T]` with `-inf` strictly above the diagonal.
pub fn causal_mask(t: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let values: Vec<f64> = (0..t)
        .flat_map(|i| (0..t).map(move |j| if j > i { f64::NEG_INFINITY } else { 0.0 }))
        .collect();
    Tensor::from_vec(values, (t, t), device)?.to_dtype(dtype)
}

/// Scaled dot-product attention over `[H, Tq, D]` × `[H, Tk, D]`.
///
/// `scale` multiplies the raw scores; `bias` (broadcastable to
/// `[H, Tq, Tk]`) is added before the softmax.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, scale: f64, bias: Option<&Tensor>) -> Result<Tensor> {
    let mut scores = q.matmul(&k.t()?.contiguous()?)?;
    if scale != 1.0 {
        scores = (scores * scale)?;
    }
    if let Some(b) = bias {
        scores = scores.broadcast_add(b)?;
    }
    softmax_last(&scores)?.matmul(v)
}

/// Picks `log p(target_i)` from row `i` of a `[N, V]` log-probability matrix.
pub fn gather_targets(log_probs: &Tensor, targets: &[u32]) -> Result<Vec<f64>> {
    let idx = Tensor::new(targets, log_probs.device())?.unsqueeze(1)?;
    let picked = log_probs.gather(&idx, 1)?.squeeze(1)?;
    picked.to_dtype(DType::F64)?.to_vec1::<f64>()
}

pub fn gelu_tanh(x: &Tensor) -> Result<Tensor> {
    x.gelu()
}

pub fn gelu_erf(x: &Tensor) -> Result<Tensor> {
    x.gelu_erf()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [0.0, 0.0, 1000.0]], &Device::Cpu).unwrap();
        let y = log_softmax_last(&x).unwrap();
        let row_sums = y.exp().unwrap().sum(1).unwrap().to_vec1::<f64>().unwrap();
        for s in row_sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_mask_shape() {
        let m = causal_mask(3, DType::F64, &Device::Cpu).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(m[0][0], 0.0);
        assert!(m[0][1].is_infinite());
        assert_eq!(m[2][1], 0.0);
    }

    #[test]
    fn gathers_targets() {
        let lp = Tensor::new(&[[-1.0f32, -2.0], [-3.0, -4.0]], &Device::Cpu).unwrap();
        assert_eq!(gather_targets(&lp, &[1, 0]).unwrap(), [-2.0, -3.0]);
    }
}
