//! Model registry: TKAT variants, simple recurrent baselines and the MLP,
//! all behind the [`Forecaster`] trait.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::Linear;
use crate::graph::Var;
use crate::model::{TkatConfig, TkatParams, Variant};
use crate::params::{build_params, Ctx, ParamStore};
use crate::recurrent::{CellKind, RecurrentStack, TkanSpec};

/// A trainable multi-step forecaster.
pub trait Forecaster: Send {
    fn name(&self) -> &str;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn horizon(&self) -> usize;
    /// `past: [batch, P, n_observed + n_known]`, `future: [batch, horizon, n_known]`
    /// to `[batch, horizon]`.
    fn forward(&self, ctx: &Ctx, past: Var, future: Var) -> Result<Var>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Tkat { cell: CellKind, variant: Variant },
    SimpleRecurrent(CellKind),
    Mlp,
}

impl ModelKind {
    /// Every registered model, in report order.
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Tkat {
            cell: CellKind::Tkan,
            variant: Variant::Base,
        },
        ModelKind::Tkat {
            cell: CellKind::Lstm,
            variant: Variant::Base,
        },
        ModelKind::Tkat {
            cell: CellKind::Tkan,
            variant: Variant::A,
        },
        ModelKind::Tkat {
            cell: CellKind::Lstm,
            variant: Variant::A,
        },
        ModelKind::Tkat {
            cell: CellKind::Tkan,
            variant: Variant::B,
        },
        ModelKind::Tkat {
            cell: CellKind::Lstm,
            variant: Variant::B,
        },
        ModelKind::SimpleRecurrent(CellKind::Tkan),
        ModelKind::SimpleRecurrent(CellKind::Gru),
        ModelKind::SimpleRecurrent(CellKind::Lstm),
        ModelKind::Mlp,
    ];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Tkat { cell, variant } => {
                f.write_str(if *cell == CellKind::Tkan { "TKAT" } else { "TKATN" })?;
                match variant {
                    Variant::Base => Ok(()),
                    Variant::A => f.write_str("-A"),
                    Variant::B => f.write_str("-B"),
                }
            }
            ModelKind::SimpleRecurrent(CellKind::Tkan) => f.write_str("TKAN"),
            ModelKind::SimpleRecurrent(CellKind::Gru) => f.write_str("GRU"),
            ModelKind::SimpleRecurrent(CellKind::Lstm) => f.write_str("LSTM"),
            ModelKind::Mlp => f.write_str("MLP"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let tkat = |cell, variant| Ok(ModelKind::Tkat { cell, variant });
        match upper.as_str() {
            "TKAT" => tkat(CellKind::Tkan, Variant::Base),
            "TKATN" => tkat(CellKind::Lstm, Variant::Base),
            "TKAT-A" => tkat(CellKind::Tkan, Variant::A),
            "TKATN-A" => tkat(CellKind::Lstm, Variant::A),
            "TKAT-B" => tkat(CellKind::Tkan, Variant::B),
            "TKATN-B" => tkat(CellKind::Lstm, Variant::B),
            "TKAN" | "TKAN-SIMPLE" => Ok(ModelKind::SimpleRecurrent(CellKind::Tkan)),
            "GRU" => Ok(ModelKind::SimpleRecurrent(CellKind::Gru)),
            "LSTM" => Ok(ModelKind::SimpleRecurrent(CellKind::Lstm)),
            "MLP" => Ok(ModelKind::Mlp),
            _ => Err(Error::Invalid(alloc::format!("unknown model `{s}`"))),
        }
    }
}

/// Shared sizing for every registered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub n_observed: usize,
    pub n_known: usize,
    pub past_len: usize,
    pub horizon: usize,
    /// TKAT width.
    pub d_model: usize,
    pub heads: usize,
    /// Units per layer of the recurrent baselines and the MLP.
    pub hidden: usize,
    /// Stacked layers of the recurrent baselines.
    pub baseline_layers: usize,
    pub tkan: TkanSpec,
    pub embed_width: usize,
    pub positional_encoding: bool,
}

impl ModelDims {
    /// 100-unit widths, 4 heads, two-layer baselines.
    pub fn new(n_observed: usize, n_known: usize, past_len: usize, horizon: usize) -> Self {
        ModelDims {
            n_observed,
            n_known,
            past_len,
            horizon,
            d_model: 100,
            heads: 4,
            hidden: 100,
            baseline_layers: 2,
            tkan: TkanSpec::default(),
            embed_width: 1,
            positional_encoding: false,
        }
    }

    pub fn tkat_config(&self, cell: CellKind, variant: Variant, seed: u64) -> TkatConfig {
        let mut c = TkatConfig::new(self.n_observed, self.n_known, self.past_len, self.horizon)
            .with_dims(self.d_model, self.heads)
            .with_cell(cell)
            .with_variant(variant)
            .with_seed(seed);
        c.tkan = self.tkan.clone();
        c.embed_width = self.embed_width;
        c.positional_encoding = self.positional_encoding;
        c
    }
}

pub struct TkatModel {
    name: String,
    store: ParamStore,
    pub params: TkatParams,
}

impl TkatModel {
    pub fn new(name: impl Into<String>, config: &TkatConfig) -> Result<Self> {
        let (store, params) = crate::model::build_tkat(config)?;
        Ok(TkatModel {
            name: name.into(),
            store,
            params,
        })
    }
}

impl Forecaster for TkatModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn horizon(&self) -> usize {
        self.params.config.horizon
    }
    fn forward(&self, ctx: &Ctx, past: Var, future: Var) -> Result<Var> {
        self.params.forward(ctx, past, future)
    }
}

fn check_past(ctx: &Ctx, past: Var, dims: &ModelDims) -> Result<usize> {
    let s = ctx.g().shape(past);
    let width = dims.n_observed + dims.n_known;
    if s.len() != 3 || s[1] != dims.past_len || s[2] != width {
        return Err(Error::shape("baseline past input", &s, &[0, dims.past_len, width]));
    }
    Ok(s[0])
}

/// Stacked recurrent cells over the past window, last hidden output, dense
/// linear head. Future inputs are ignored.
pub struct SimpleRecurrentModel {
    name: String,
    dims: ModelDims,
    store: ParamStore,
    pub stack: RecurrentStack,
    pub dense: Linear,
}

impl SimpleRecurrentModel {
    pub fn new(name: impl Into<String>, cell: CellKind, dims: &ModelDims, seed: u64) -> Result<Self> {
        if dims.baseline_layers == 0 || dims.horizon == 0 {
            return Err(Error::Config(
                "recurrent baseline needs layers >= 1 and horizon >= 1".into(),
            ));
        }
        let width = dims.n_observed + dims.n_known;
        let units = alloc::vec![dims.hidden; dims.baseline_layers];
        let (store, (stack, dense)) = build_params(seed, |b| {
            let stack = RecurrentStack::init(&mut b.scope("recurrent"), cell, width, &units, &dims.tkan)?;
            let dense = Linear::init(&mut b.scope("dense"), dims.hidden, dims.horizon, true)?;
            Ok((stack, dense))
        })?;
        Ok(SimpleRecurrentModel {
            name: name.into(),
            dims: dims.clone(),
            store,
            stack,
            dense,
        })
    }
}

impl Forecaster for SimpleRecurrentModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn horizon(&self) -> usize {
        self.dims.horizon
    }
    fn forward(&self, ctx: &Ctx, past: Var, _future: Var) -> Result<Var> {
        check_past(ctx, past, &self.dims)?;
        let (last, _) = self.stack.forward(ctx, past, None, false)?;
        self.dense.apply(ctx, last)
    }
}

/// Flattened past window through two ReLU layers and a linear head.
pub struct MlpModel {
    name: String,
    dims: ModelDims,
    store: ParamStore,
    pub layers: [Linear; 2],
    pub out: Linear,
}

impl MlpModel {
    pub fn new(name: impl Into<String>, dims: &ModelDims, seed: u64) -> Result<Self> {
        let flat = dims.past_len * (dims.n_observed + dims.n_known);
        let h = dims.hidden;
        let (store, (l0, l1, out)) = build_params(seed, |b| {
            let l0 = Linear::init(&mut b.scope("dense0"), flat, h, true)?;
            let l1 = Linear::init(&mut b.scope("dense1"), h, h, true)?;
            let out = Linear::init(&mut b.scope("out"), h, dims.horizon, true)?;
            Ok((l0, l1, out))
        })?;
        Ok(MlpModel {
            name: name.into(),
            dims: dims.clone(),
            store,
            layers: [l0, l1],
            out,
        })
    }
}

impl Forecaster for MlpModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn horizon(&self) -> usize {
        self.dims.horizon
    }
    fn forward(&self, ctx: &Ctx, past: Var, _future: Var) -> Result<Var> {
        let batch = check_past(ctx, past, &self.dims)?;
        let g = ctx.g();
        let mut x = g.reshape(past, &[batch, self.layers[0].in_dim])?;
        for layer in &self.layers {
            x = g.relu(layer.apply(ctx, x)?)?;
        }
        self.out.apply(ctx, x)
    }
}

/// Builds any registered model with seeded parameters.
pub fn build_model(kind: ModelKind, dims: &ModelDims, seed: u64) -> Result<Box<dyn Forecaster>> {
    let name = alloc::format!("{kind}");
    Ok(match kind {
        ModelKind::Tkat { cell, variant } => Box::new(TkatModel::new(name, &dims.tkat_config(cell, variant, seed))?),
        ModelKind::SimpleRecurrent(cell) => Box::new(SimpleRecurrentModel::new(name, cell, dims, seed)?),
        ModelKind::Mlp => Box::new(MlpModel::new(name, dims, seed)?),
    })
}
