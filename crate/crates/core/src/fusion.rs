//! Gating and feature-selection blocks: dense layers, GLU, the context-free
//! gated residual network (GRN), per-feature embeddings and variable
//! selection networks (VSN).
//!
//! Per-variable GRNs are stored as a *bank*: weights carry a leading
//! variable axis (`[m, out, in]`) and run as one batched matmul over inputs
//! laid out `[m, rows, in]`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::params::{Ctx, ParamBuilder, ParamId};
use crate::tensor::Tensor;

/// `y = x W^T + b`, optionally banked over a leading axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub bank: Option<usize>,
    /// `[out, in]`, or `[bank, out, in]`
    pub w: ParamId,
    /// `[out]`, or `[bank, 1, out]`
    pub b: Option<ParamId>,
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

impl Linear {
    pub fn init(b: &mut ParamBuilder<'_>, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        Self::init_impl(b, None, in_dim, out_dim, bias)
    }

    pub fn init_bank(b: &mut ParamBuilder<'_>, bank: usize, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        Self::init_impl(b, Some(bank), in_dim, out_dim, bias)
    }

    fn init_impl(
        b: &mut ParamBuilder<'_>,
        bank: Option<usize>,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || bank == Some(0) {
            return Err(Error::Config(alloc::format!(
                "dense layer dims must be positive, got in={in_dim} out={out_dim}"
            )));
        }
        let bound = glorot_bound(in_dim, out_dim);
        let (w, b_id) = match bank {
            None => (
                b.uniform("W", &[out_dim, in_dim], bound)?,
                if bias { Some(b.zeros("b", &[out_dim])?) } else { None },
            ),
            Some(m) => (
                b.uniform("W", &[m, out_dim, in_dim], bound)?,
                if bias {
                    Some(b.zeros("b", &[m, 1, out_dim])?)
                } else {
                    None
                },
            ),
        };
        Ok(Linear {
            in_dim,
            out_dim,
            bank,
            w,
            b: b_id,
        })
    }

    /// `x: [.., in]` (or `[bank, rows, in]` for a bank).
    pub fn apply(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        let y = match self.bank {
            None => g.matmul_nt(x, ctx.p(self.w))?,
            Some(_) => g.batch_matmul_nt(x, ctx.p(self.w))?,
        };
        match self.b {
            Some(b) => g.add(y, ctx.p(b)),
            None => Ok(y),
        }
    }

    pub fn param_count(&self) -> usize {
        let m = self.bank.unwrap_or(1);
        m * self.out_dim * (self.in_dim + usize::from(self.b.is_some()))
    }
}

/// Gated linear unit: `sigmoid(W_g x + b_g) * (W_v x + b_v)`.
#[derive(Debug, Clone)]
pub struct GluParams {
    pub gate: Linear,
    pub value: Linear,
}

impl GluParams {
    pub fn init(b: &mut ParamBuilder<'_>, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(GluParams {
            gate: Linear::init(&mut b.scope("gate"), in_dim, out_dim, true)?,
            value: Linear::init(&mut b.scope("value"), in_dim, out_dim, true)?,
        })
    }

    pub fn init_bank(b: &mut ParamBuilder<'_>, bank: usize, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(GluParams {
            gate: Linear::init_bank(&mut b.scope("gate"), bank, in_dim, out_dim, true)?,
            value: Linear::init_bank(&mut b.scope("value"), bank, in_dim, out_dim, true)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        let gate = g.sigmoid(self.gate.apply(ctx, x)?)?;
        g.mul(gate, self.value.apply(ctx, x)?)
    }
}

/// Layer normalisation over the last axis with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub dim: usize,
    pub bank: Option<usize>,
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn init(b: &mut ParamBuilder<'_>, dim: usize) -> Result<Self> {
        Self::init_impl(b, None, dim)
    }

    pub fn init_bank(b: &mut ParamBuilder<'_>, bank: usize, dim: usize) -> Result<Self> {
        Self::init_impl(b, Some(bank), dim)
    }

    fn init_impl(b: &mut ParamBuilder<'_>, bank: Option<usize>, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(alloc::format!("layer norm needs width >= 2, got {dim}")));
        }
        let shape: Vec<usize> = match bank {
            None => alloc::vec![dim],
            Some(m) => alloc::vec![m, 1, dim],
        };
        Ok(LayerNormParams {
            dim,
            bank,
            gain: b.full("gain", &shape, 1.0)?,
            bias: b.zeros("bias", &shape)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        match self.bank {
            None => g.layer_norm(x, ctx.p(self.gain), ctx.p(self.bias)),
            Some(_) => {
                let ones = g.constant(Tensor::full(&[self.dim], 1.0));
                let zeros = g.constant(Tensor::zeros(&[self.dim]));
                let normed = g.layer_norm(x, ones, zeros)?;
                g.add(g.mul(normed, ctx.p(self.gain))?, ctx.p(self.bias))
            }
        }
    }
}

/// Gated residual network without context:
/// `LayerNorm(skip(x) + GLU(W_1 ELU(W_2 x + b_2) + b_1))`.
///
/// `skip` is the identity when `in_dim == out_dim` and a bias-free
/// projection otherwise.
#[derive(Debug, Clone)]
pub struct GrnParams {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// `W_2, b_2`
    pub hidden: Linear,
    /// `W_1, b_1`
    pub mix: Linear,
    pub glu: GluParams,
    pub skip: Option<Linear>,
    pub norm: LayerNormParams,
}

impl GrnParams {
    pub fn init(b: &mut ParamBuilder<'_>, in_dim: usize, hidden_dim: usize, out_dim: usize) -> Result<Self> {
        Self::init_impl(b, None, in_dim, hidden_dim, out_dim)
    }

    /// `bank` independent GRNs evaluated together on `[bank, rows, in]`.
    pub fn init_bank(
        b: &mut ParamBuilder<'_>,
        bank: usize,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        Self::init_impl(b, Some(bank), in_dim, hidden_dim, out_dim)
    }

    fn init_impl(
        b: &mut ParamBuilder<'_>,
        bank: Option<usize>,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let dense = |b: &mut ParamBuilder<'_>, name: &str, i: usize, o: usize, bias: bool| {
            let mut s = b.scope(name);
            match bank {
                None => Linear::init(&mut s, i, o, bias),
                Some(m) => Linear::init_bank(&mut s, m, i, o, bias),
            }
        };
        let hidden = dense(b, "hidden", in_dim, hidden_dim, true)?;
        let mix = dense(b, "mix", hidden_dim, hidden_dim, true)?;
        let glu = {
            let mut s = b.scope("glu");
            match bank {
                None => GluParams::init(&mut s, hidden_dim, out_dim)?,
                Some(m) => GluParams::init_bank(&mut s, m, hidden_dim, out_dim)?,
            }
        };
        let skip = if in_dim == out_dim {
            None
        } else {
            Some(dense(b, "skip", in_dim, out_dim, false)?)
        };
        let norm = {
            let mut s = b.scope("norm");
            match bank {
                None => LayerNormParams::init(&mut s, out_dim)?,
                Some(m) => LayerNormParams::init_bank(&mut s, m, out_dim)?,
            }
        };
        Ok(GrnParams {
            in_dim,
            hidden_dim,
            out_dim,
            hidden,
            mix,
            glu,
            skip,
            norm,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        let shape = g.shape(x);
        if shape.last() != Some(&self.in_dim) {
            return Err(Error::shape("grn", &shape, &[self.in_dim]));
        }
        let eta2 = g.elu(self.hidden.apply(ctx, x)?)?;
        let eta1 = self.mix.apply(ctx, eta2)?;
        let gated = self.glu.forward(ctx, eta1)?;
        let residual = match &self.skip {
            Some(p) => p.apply(ctx, x)?,
            None => x,
        };
        self.norm.forward(ctx, g.add(residual, gated)?)
    }
}

/// Per-feature affine embedding of width `e`: feature `j` maps `x` to
/// `a_j * x + b_j` with `a_j, b_j` in `R^e`.
#[derive(Debug, Clone)]
pub struct FeatureEmbedding {
    pub features: usize,
    pub width: usize,
    /// `[features, 1, width]`
    pub scale: ParamId,
    /// `[features, 1, width]`
    pub shift: ParamId,
}

impl FeatureEmbedding {
    pub fn init(b: &mut ParamBuilder<'_>, features: usize, width: usize) -> Result<Self> {
        if features == 0 || width == 0 {
            return Err(Error::Config(
                "embedding needs at least one feature of width >= 1".into(),
            ));
        }
        Ok(FeatureEmbedding {
            features,
            width,
            scale: b.uniform("scale", &[features, 1, width], glorot_bound(1, width))?,
            shift: b.zeros("shift", &[features, 1, width])?,
        })
    }

    /// `x: [rows, features]` to per-feature streams `[features, rows, width]`.
    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.features {
            return Err(Error::shape("feature_embed", &shape, &[0, self.features]));
        }
        let cols = g.reshape(g.permute(x, &[1, 0])?, &[self.features, shape[0], 1])?;
        g.add(g.mul(cols, ctx.p(self.scale))?, ctx.p(self.shift))
    }
}

/// Variable selection: softmax weights from a GRN over all flattened
/// streams, combined with one GRN per variable.
#[derive(Debug, Clone)]
pub struct VsnParams {
    pub variables: usize,
    pub embed_width: usize,
    pub d_model: usize,
    /// Absent for a single variable, whose weight is always 1.
    pub selection: Option<GrnParams>,
    pub per_variable: GrnParams,
}

/// VSN output rows `[rows, d_model]` and selection weights `[rows, variables]`.
pub struct VsnOutput {
    pub output: Var,
    pub weights: Var,
}

impl VsnParams {
    pub fn init(b: &mut ParamBuilder<'_>, variables: usize, embed_width: usize, d_model: usize) -> Result<Self> {
        if variables == 0 {
            return Err(Error::Config("variable selection needs at least one variable".into()));
        }
        let selection = if variables > 1 {
            Some(GrnParams::init(
                &mut b.scope("selection"),
                variables * embed_width,
                d_model,
                variables,
            )?)
        } else {
            None
        };
        let per_variable = GrnParams::init_bank(&mut b.scope("variables"), variables, embed_width, d_model, d_model)?;
        Ok(VsnParams {
            variables,
            embed_width,
            d_model,
            selection,
            per_variable,
        })
    }

    /// `streams: [variables, rows, embed_width]` as produced by [`FeatureEmbedding`].
    pub fn forward(&self, ctx: &Ctx, streams: Var) -> Result<VsnOutput> {
        let g = ctx.g();
        let shape = g.shape(streams);
        if shape.len() != 3 || shape[0] != self.variables || shape[2] != self.embed_width {
            return Err(Error::shape("vsn", &shape, &[self.variables, 0, self.embed_width]));
        }
        let rows = shape[1];
        let transformed = self.per_variable.forward(ctx, streams)?;
        let Some(selection) = &self.selection else {
            return Ok(VsnOutput {
                output: g.reshape(transformed, &[rows, self.d_model])?,
                weights: g.constant(Tensor::full(&[rows, 1], 1.0)),
            });
        };
        let flat = g.reshape(
            g.permute(streams, &[1, 0, 2])?,
            &[rows, self.variables * self.embed_width],
        )?;
        let weights = g.softmax_last(selection.forward(ctx, flat)?)?;
        let w = g.reshape(g.permute(weights, &[1, 0])?, &[self.variables, rows, 1])?;
        let output = g.sum_axis(g.mul(transformed, w)?, 0)?;
        Ok(VsnOutput { output, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check_store;
    use crate::graph::{sigmoid, LAYER_NORM_EPS};
    use crate::params::{build_params, ParamStore};
    use alloc::vec;
    use proptest::prelude::*;

    fn set(store: &mut ParamStore, id: ParamId, f: impl Fn(&[usize]) -> Tensor) {
        let shape = store.get(id).shape().to_vec();
        store.set(id, f(&shape)).unwrap();
    }

    fn row_layer_norm(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        x.iter()
            .map(|v| (v - mean) / libm::sqrt(var + LAYER_NORM_EPS))
            .collect()
    }

    #[test]
    fn glu_examples() {
        let (mut store, p) = build_params(0, |b| GluParams::init(b, 3, 3)).unwrap();
        let gamma = [0.4, -1.3, 2.2];
        let run = |store: &ParamStore, x: &[f64]| {
            let ctx = Ctx::inference(store);
            let xv = ctx.g().constant(Tensor::matrix(1, 3, x).unwrap());
            ctx.g().value(p.forward(&ctx, xv).unwrap())
        };
        assert!(run(&store, &[0.0; 3]).data().iter().all(|&v| v == 0.0));

        set(&mut store, p.gate.w, Tensor::zeros);
        set(&mut store, p.value.w, |_| Tensor::eye(3));
        set(&mut store, p.gate.b.unwrap(), |s| Tensor::full(s, 20.0));
        for (o, x) in run(&store, &gamma).data().iter().zip(gamma) {
            assert!((o - x).abs() < 1e-8);
        }
        set(&mut store, p.gate.b.unwrap(), |s| Tensor::full(s, -20.0));
        for (o, x) in run(&store, &gamma).data().iter().zip(gamma) {
            assert!((o - sigmoid(-20.0) * x).abs() < 1e-15 && o.abs() < 1e-8);
        }
    }

    #[test]
    fn grn_closed_gate_is_normalised_skip() {
        for (din, dout) in [(4, 4), (3, 5)] {
            let (mut store, p) = build_params(2, |b| GrnParams::init(b, din, 6, dout)).unwrap();
            set(&mut store, p.glu.gate.w, Tensor::zeros);
            set(&mut store, p.glu.gate.b.unwrap(), |s| Tensor::full(s, -40.0));
            let x: Vec<f64> = (0..din).map(|i| 0.3 * i as f64 - 0.5).collect();
            let ctx = Ctx::inference(&store);
            let xv = ctx.g().constant(Tensor::matrix(1, din, &x).unwrap());
            let y = ctx.g().value(p.forward(&ctx, xv).unwrap());
            let skip: Vec<f64> = match &p.skip {
                None => x.clone(),
                Some(l) => {
                    let w = store.get(l.w);
                    (0..dout)
                        .map(|o| (0..din).map(|i| w.at(&[o, i]) * x[i]).sum())
                        .collect()
                }
            };
            for (a, b) in y.data().iter().zip(row_layer_norm(&skip)) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn grn_zero_input_gives_norm_bias() {
        let (mut store, p) = build_params(2, |b| GrnParams::init(b, 4, 4, 4)).unwrap();
        let bias = [0.1, -0.2, 0.3, 0.7];
        set(&mut store, p.norm.bias, |_| Tensor::vector(&bias).unwrap());
        let ctx = Ctx::inference(&store);
        let xv = ctx.g().constant(Tensor::zeros(&[2, 4]));
        let y = ctx.g().value(p.forward(&ctx, xv).unwrap());
        assert_eq!(y.data(), &[bias, bias].concat()[..]);
    }

    #[test]
    fn grn_gradients() {
        let (mut store, p) = build_params(3, |b| GrnParams::init(b, 4, 5, 3)).unwrap();
        let x = store
            .insert(
                "x",
                Tensor::matrix(2, 4, &[0.3, -0.8, 1.2, 0.05, -0.4, 0.9, -1.1, 0.6]).unwrap(),
            )
            .unwrap();
        let w = Tensor::matrix(2, 3, &[0.5, -1.2, 0.8, 1.4, 0.3, -0.7]).unwrap();
        let report = finite_diff_check_store(
            &store,
            |ctx| {
                let g = ctx.g();
                g.sum(g.mul(p.forward(ctx, ctx.p(x))?, g.constant(w.clone()))?)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn bank_matches_individual_grns() {
        let (bank_store, bank) = build_params(4, |b| GrnParams::init_bank(b, 3, 2, 4, 4)).unwrap();
        let x = Tensor::new(&[3, 2, 2], (0..12).map(|i| 0.17 * i as f64 - 0.9).collect()).unwrap();
        let ctx = Ctx::inference(&bank_store);
        let out = ctx.g().value(bank.forward(&ctx, ctx.g().constant(x.clone())).unwrap());
        for v in 0..3 {
            // copy slice v of every banked tensor into a single GRN
            let (mut store, single) = build_params(0, |b| GrnParams::init(b, 2, 4, 4)).unwrap();
            for (id, (name, t)) in store.ids().collect::<Vec<_>>().into_iter().zip(bank_store.iter()) {
                let target = store.get(id).shape().to_vec();
                let per = t.len() / 3;
                let slice = Tensor::new(&target, t.data()[v * per..(v + 1) * per].to_vec()).unwrap();
                assert_eq!(store.name(id), name);
                store.set(id, slice).unwrap();
            }
            let c = Ctx::inference(&store);
            let xs = Tensor::new(&[2, 2], x.data()[v * 4..(v + 1) * 4].to_vec()).unwrap();
            let y = c.g().value(single.forward(&c, c.g().constant(xs)).unwrap());
            assert_eq!(y.data(), &out.data()[v * 8..(v + 1) * 8]);
        }
    }

    #[test]
    fn embedding_examples() {
        let (mut store, p) = build_params(0, |b| FeatureEmbedding::init(b, 2, 1)).unwrap();
        set(&mut store, p.scale, |_| {
            Tensor::new(&[2, 1, 1], vec![1.0, 2.0]).unwrap()
        });
        set(&mut store, p.shift, |_| {
            Tensor::new(&[2, 1, 1], vec![0.0, 1.0]).unwrap()
        });
        let ctx = Ctx::inference(&store);
        let x = ctx.g().constant(Tensor::matrix(2, 2, &[5.0, 3.0, -1.0, 0.5]).unwrap());
        let y = ctx.g().value(p.forward(&ctx, x).unwrap());
        assert_eq!(y.shape(), &[2, 2, 1]);
        // feature 0 passes through, feature 1 maps 3 -> 7
        assert_eq!(y.data(), &[5.0, -1.0, 7.0, 2.0]);
    }

    #[test]
    fn embedding_produces_one_stream_per_feature() {
        let (store, p) = build_params(0, |b| FeatureEmbedding::init(b, 21, 1)).unwrap();
        let ctx = Ctx::inference(&store);
        let x = ctx.g().constant(Tensor::zeros(&[4, 21]));
        assert_eq!(ctx.g().shape(p.forward(&ctx, x).unwrap()), vec![21, 4, 1]);
    }

    fn vsn_streams(rows: usize, m: usize, seed: u64) -> Tensor {
        let data = (0..rows * m).map(|i| libm::sin(seed as f64 + 1.3 * i as f64)).collect();
        Tensor::new(&[m, rows, 1], data).unwrap()
    }

    #[test]
    fn single_variable_weight_is_one() {
        let (store, p) = build_params(0, |b| VsnParams::init(b, 1, 1, 4)).unwrap();
        let ctx = Ctx::inference(&store);
        let s = ctx.g().constant(vsn_streams(3, 1, 0));
        let out = p.forward(&ctx, s).unwrap();
        assert_eq!(ctx.g().value(out.weights).data(), &[1.0; 3]);
        let direct = p.per_variable.forward(&ctx, s).unwrap();
        assert_eq!(ctx.g().value(out.output).data(), ctx.g().value(direct).data());
    }

    #[test]
    fn equal_variable_outputs_ignore_weights() {
        let (mut store, p) = build_params(0, |b| VsnParams::init(b, 3, 1, 4)).unwrap();
        // every per-variable GRN shares the bias of its norm and has a closed gate
        // on a constant input, so all produce u = norm bias
        let u = [0.2, -0.5, 0.9, 0.1];
        let pv = &p.per_variable;
        set(&mut store, pv.norm.gain, Tensor::zeros);
        set(&mut store, pv.norm.bias, |s| Tensor::new(s, u.repeat(3)).unwrap());
        let ctx = Ctx::inference(&store);
        let s = ctx.g().constant(vsn_streams(5, 3, 1));
        let out = p.forward(&ctx, s).unwrap();
        let y = ctx.g().value(out.output);
        for r in 0..5 {
            for (j, uj) in u.iter().enumerate() {
                assert!((y.at(&[r, j]) - uj).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_shared_across_rows() {
        let (store, p) = build_params(9, |b| VsnParams::init(b, 3, 1, 4)).unwrap();
        let ctx = Ctx::inference(&store);
        let s = ctx
            .g()
            .constant(Tensor::new(&[3, 2, 1], vec![0.4, 0.4, -0.7, -0.7, 1.1, 1.1]).unwrap());
        let out = p.forward(&ctx, s).unwrap();
        let y = ctx.g().value(out.output);
        assert_eq!(y.data()[..4], y.data()[4..]);
    }

    #[test]
    fn vsn_gradients() {
        let (mut store, (emb, vsn)) = build_params(5, |b| {
            let e = FeatureEmbedding::init(&mut b.scope("embed"), 3, 1)?;
            let v = VsnParams::init(&mut b.scope("vsn"), 3, 1, 4)?;
            Ok((e, v))
        })
        .unwrap();
        let x = store
            .insert("x", Tensor::matrix(2, 3, &[0.3, -0.8, 1.2, -0.4, 0.9, -1.1]).unwrap())
            .unwrap();
        let w = Tensor::matrix(2, 4, &[0.5, -1.2, 0.8, 1.4, 0.3, -0.7, 1.1, -0.2]).unwrap();
        let report = finite_diff_check_store(
            &store,
            |ctx| {
                let g = ctx.g();
                let out = vsn.forward(ctx, emb.forward(ctx, ctx.p(x))?)?;
                g.sum(g.mul(out.output, g.constant(w.clone()))?)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn param_counts() {
        let (store, p) = build_params(0, |b| GrnParams::init(b, 3, 5, 4)).unwrap();
        let expected = (3 * 5 + 5) + (5 * 5 + 5) + 2 * (5 * 4 + 4) + 3 * 4 + 2 * 4;
        assert_eq!(store.count(), expected);
        assert_eq!(p.hidden.param_count() + p.mix.param_count(), 50);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn vsn_weights_on_simplex(
            m in 2usize..6,
            rows in 1usize..5,
            seed in 0u64..1000,
            scale in 0.1f64..20.0,
        ) {
            let (store, p) = build_params(seed, |b| VsnParams::init(b, m, 1, 4)).unwrap();
            let ctx = Ctx::inference(&store);
            let data: Vec<f64> = (0..m * rows).map(|i| scale * libm::sin(seed as f64 * 0.7 + i as f64)).collect();
            let s = ctx.g().constant(Tensor::new(&[m, rows, 1], data).unwrap());
            let out = p.forward(&ctx, s).unwrap();
            let w = ctx.g().value(out.weights);
            for r in 0..rows {
                let row = &w.data()[r * m..(r + 1) * m];
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
