//! Scaled dot-product attention, multi-head self-attention, sequence
//! flattening and the linear forecast head.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::params::{Ctx, ParamBuilder, ParamId};
use crate::tensor::Tensor;

/// `softmax(Q K^T / sqrt(d_attn)) V` for `Q: [.., T_q, d]`, `K: [.., T_k, d]`,
/// `V: [.., T_k, d_v]`, unmasked. Accepts rank 2 or a rank-3 batch.
/// Returns the output and the attention weights `[.., T_q, T_k]`.
pub fn scaled_dot_attention(ctx: &Ctx, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let g = ctx.g();
    let (sq, sk, sv) = (g.shape(q), g.shape(k), g.shape(v));
    let rank = sq.len();
    let batched = match rank {
        2 => false,
        3 => true,
        _ => return Err(Error::shape("scaled_dot_attention", &sq, &sk)),
    };
    if sk.len() != rank || sv.len() != rank || sq[rank - 1] != sk[rank - 1] || sk[rank - 2] != sv[rank - 2] {
        return Err(Error::shape("scaled_dot_attention", &sq, &sk));
    }
    if batched && (sq[0] != sk[0] || sk[0] != sv[0]) {
        return Err(Error::shape("scaled_dot_attention", &sq, &sv));
    }
    let d_attn = sq[rank - 1] as f64;
    let logits = if batched {
        g.batch_matmul_nt(q, k)?
    } else {
        g.matmul_nt(q, k)?
    };
    let weights = g.softmax_last(g.scale(logits, 1.0 / libm::sqrt(d_attn))?)?;
    let out = if batched {
        g.batch_matmul(weights, v)?
    } else {
        g.matmul(weights, v)?
    };
    Ok((out, weights))
}

/// Multi-head self-attention parameters. Head `h` owns rows
/// `h*d_attn..(h+1)*d_attn` of the stacked query/key projections and rows
/// `h*d_v..(h+1)*d_v` of the value projection, each stored `[out, d_model]`.
#[derive(Debug, Clone)]
pub struct MhaParams {
    pub d_model: usize,
    pub heads: usize,
    pub d_attn: usize,
    pub d_v: usize,
    /// `[heads * d_attn, d_model]`
    pub w_q: ParamId,
    /// `[heads * d_attn, d_model]`
    pub w_k: ParamId,
    /// `[heads * d_v, d_model]`
    pub w_v: ParamId,
    /// Head combiner `[d_model, heads * d_v]`; absent when heads are
    /// flattened directly.
    pub w_h: Option<ParamId>,
}

/// Output of [`MhaParams::forward`].
pub struct MhaOutput {
    /// Combined output `[batch, T, d_model]`, or the concatenated head
    /// outputs `[batch, T, heads * d_v]` when there is no combiner.
    pub output: Var,
    /// Attention weights `[batch, heads, T, T]`.
    pub weights: Var,
    /// Concatenated head outputs `[batch, T, heads * d_v]`.
    pub heads: Var,
}

impl MhaParams {
    /// `d_attn = d_v = d_model / heads`; `d_model` must be divisible by `heads`.
    pub fn init(b: &mut ParamBuilder<'_>, d_model: usize, heads: usize, combine: bool) -> Result<Self> {
        if heads == 0 || d_model == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(alloc::format!(
                "d_model {d_model} must be a positive multiple of the head count {heads}"
            )));
        }
        let d = d_model / heads;
        Self::init_sized(b, d_model, heads, d, d, combine)
    }

    pub fn init_sized(
        b: &mut ParamBuilder<'_>,
        d_model: usize,
        heads: usize,
        d_attn: usize,
        d_v: usize,
        combine: bool,
    ) -> Result<Self> {
        if heads == 0 || d_model == 0 || d_attn == 0 || d_v == 0 {
            return Err(Error::Config("attention dims must be positive".into()));
        }
        // each head's projection is its own Glorot-uniform matrix
        let qk_bound = libm::sqrt(6.0 / (d_model + d_attn) as f64);
        let v_bound = libm::sqrt(6.0 / (d_model + d_v) as f64);
        let w_q = b.uniform("W_Q", &[heads * d_attn, d_model], qk_bound)?;
        let w_k = b.uniform("W_K", &[heads * d_attn, d_model], qk_bound)?;
        let w_v = b.uniform("W_V", &[heads * d_v, d_model], v_bound)?;
        let w_h = if combine {
            Some(b.glorot("W_H", d_model, heads * d_v)?)
        } else {
            None
        };
        Ok(MhaParams {
            d_model,
            heads,
            d_attn,
            d_v,
            w_q,
            w_k,
            w_v,
            w_h,
        })
    }

    /// Splits `[B, T, H*d]` into `[B*H, T, d]`.
    fn split_heads(&self, ctx: &Ctx, x: Var, batch: usize, steps: usize, d: usize) -> Result<Var> {
        let g = ctx.g();
        let x = g.reshape(x, &[batch, steps, self.heads, d])?;
        g.reshape(g.permute(x, &[0, 2, 1, 3])?, &[batch * self.heads, steps, d])
    }

    /// Self-attention over `x: [batch, T, d_model]`.
    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<MhaOutput> {
        let g = ctx.g();
        let shape = g.shape(x);
        if shape.len() != 3 || shape[2] != self.d_model {
            return Err(Error::shape("multi_head_attention", &shape, &[0, 0, self.d_model]));
        }
        let (batch, steps) = (shape[0], shape[1]);
        let q = self.split_heads(ctx, g.matmul_nt(x, ctx.p(self.w_q))?, batch, steps, self.d_attn)?;
        let k = self.split_heads(ctx, g.matmul_nt(x, ctx.p(self.w_k))?, batch, steps, self.d_attn)?;
        let v = self.split_heads(ctx, g.matmul_nt(x, ctx.p(self.w_v))?, batch, steps, self.d_v)?;
        let (out, weights) = scaled_dot_attention(ctx, q, k, v)?;
        let out = g.reshape(out, &[batch, self.heads, steps, self.d_v])?;
        let heads = g.reshape(g.permute(out, &[0, 2, 1, 3])?, &[batch, steps, self.heads * self.d_v])?;
        let weights = g.reshape(weights, &[batch, self.heads, steps, steps])?;
        let output = match self.w_h {
            Some(w) => g.matmul_nt(heads, ctx.p(w))?,
            None => heads,
        };
        Ok(MhaOutput { output, weights, heads })
    }
}

/// Row-major flattening of `[batch, T, d]` to `[batch, T*d]`.
pub fn flatten_fully_aware(ctx: &Ctx, x: Var) -> Result<Var> {
    let g = ctx.g();
    let shape = g.shape(x);
    if shape.len() != 3 {
        return Err(Error::shape("flatten", &shape, &[0, 0, 0]));
    }
    g.reshape(x, &[shape[0], shape[1] * shape[2]])
}

/// Linear forecast head `y = H_flat W + b` producing all `horizon` steps at once.
#[derive(Debug, Clone)]
pub struct OutputHeadParams {
    pub in_dim: usize,
    pub horizon: usize,
    /// `[in_dim, horizon]`
    pub w: ParamId,
    /// `[horizon]`
    pub b: ParamId,
}

impl OutputHeadParams {
    pub fn init(b: &mut ParamBuilder<'_>, in_dim: usize, horizon: usize) -> Result<Self> {
        if in_dim == 0 || horizon == 0 {
            return Err(Error::Config(alloc::format!(
                "output head needs positive dims, got in={in_dim} horizon={horizon}"
            )));
        }
        Ok(OutputHeadParams {
            in_dim,
            horizon,
            w: b.glorot("W", in_dim, horizon)?,
            b: b.zeros("b", &[horizon])?,
        })
    }
}

/// `flat: [batch, in_dim]` to forecasts `[batch, horizon]`.
pub fn output_projection(ctx: &Ctx, flat: Var, head: &OutputHeadParams) -> Result<Var> {
    let g = ctx.g();
    let shape = g.shape(flat);
    if shape.last() != Some(&head.in_dim) {
        return Err(Error::shape("output_projection", &shape, &[head.in_dim]));
    }
    g.add(g.matmul(flat, ctx.p(head.w))?, ctx.p(head.b))
}

/// Sinusoidal position table `[steps, d]`: even columns `sin(t / 10000^(2i/d))`,
/// odd columns the matching cosine.
pub fn sinusoidal_encoding(steps: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(steps * d);
    for t in 0..steps {
        for j in 0..d {
            let pair = (j / 2) as f64 * 2.0;
            let angle = t as f64 / libm::pow(10_000.0, pair / d as f64);
            data.push(if j % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
        }
    }
    Tensor::new(&[steps, d], data).expect("finite position table")
}
