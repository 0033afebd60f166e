//! Recurrent cells: the TKAN cell (recurring KAN sub-layers with their own
//! memory, driving the output gate of an LSTM-style cell) plus LSTM and GRU
//! baselines, and left-to-right unrolling.
//!
//! TKAN step, for input `x` and previous state `(h, c, m_1..m_L)`:
//!
//! ```text
//! f  = sigmoid(W_f x + U_f h + b_f)
//! i  = sigmoid(W_i x + U_i h + b_i)
//! c~ = sigmoid(W_c x + U_c h + b_c)        (tanh when configured)
//! m_l' = W_hh m_l + W_hz z_l               z_0 = x, z_{l+1} = KAN_l([z_l, m_l'])
//! o  = sigmoid(z_L)
//! c' = f * c + i * c~
//! h' = o * tanh(c')
//! ```

use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::kan::{GridSpec, KanLinearParams, PreparedKan};
use crate::params::{Ctx, ParamBuilder, ParamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Tkan,
    Lstm,
    Gru,
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TKAN" => Ok(CellKind::Tkan),
            "LSTM" => Ok(CellKind::Lstm),
            "GRU" => Ok(CellKind::Gru),
            other => Err(Error::Invalid(alloc::format!("unknown recurrent cell kind `{other}`"))),
        }
    }
}

/// Activation of the TKAN candidate cell state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateActivation {
    #[default]
    Sigmoid,
    Tanh,
}

/// TKAN cell hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TkanSpec {
    pub sublayers: usize,
    pub grid: GridSpec,
    pub candidate: CandidateActivation,
}

impl Default for TkanSpec {
    fn default() -> Self {
        TkanSpec {
            sublayers: 1,
            grid: GridSpec::default(),
            candidate: CandidateActivation::Sigmoid,
        }
    }
}

/// One gate's `W x + U h + b` parameters.
#[derive(Debug, Clone)]
pub struct Gate {
    /// `[units, input_dim]`
    pub w: ParamId,
    /// `[units, units]`
    pub u: ParamId,
    /// `[units]`
    pub b: ParamId,
}

impl Gate {
    fn init(b: &mut ParamBuilder<'_>, tag: &str, input_dim: usize, units: usize, bias: f64) -> Result<Self> {
        Ok(Gate {
            w: b.glorot(&alloc::format!("W_{tag}"), units, input_dim)?,
            u: b.glorot(&alloc::format!("U_{tag}"), units, units)?,
            b: b.full(&alloc::format!("b_{tag}"), &[units], bias)?,
        })
    }

    fn pre_activation(&self, ctx: &Ctx, x: Var, h: Var) -> Result<Var> {
        let g = ctx.g();
        let wx = g.matmul_nt(x, ctx.p(self.w))?;
        let uh = g.matmul_nt(h, ctx.p(self.u))?;
        g.add(g.add(wx, uh)?, ctx.p(self.b))
    }
}

/// One recurring KAN sub-layer.
#[derive(Debug, Clone)]
pub struct RkanSubLayer {
    pub input_dim: usize,
    pub memory_dim: usize,
    /// `[memory_dim, memory_dim]`
    pub w_hh: ParamId,
    /// `[memory_dim, input_dim]`
    pub w_hz: ParamId,
    /// KAN over `[input, memory]` of width `input_dim + memory_dim`.
    pub kan: KanLinearParams,
}

#[derive(Debug, Clone)]
pub struct TkanCellParams {
    pub input_dim: usize,
    pub units: usize,
    pub forget: Gate,
    pub input: Gate,
    pub candidate: Gate,
    pub candidate_activation: CandidateActivation,
    pub sublayers: Vec<RkanSubLayer>,
}

#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub input_dim: usize,
    pub units: usize,
    pub input: Gate,
    pub forget: Gate,
    pub candidate: Gate,
    pub output: Gate,
}

#[derive(Debug, Clone)]
pub struct GruCellParams {
    pub input_dim: usize,
    pub units: usize,
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
}

#[derive(Debug, Clone)]
pub enum CellParams {
    Tkan(TkanCellParams),
    Lstm(LstmCellParams),
    Gru(GruCellParams),
}

/// Recurrent state: hidden output `h`, cell state `c` (absent for GRU) and
/// one memory per RKAN sub-layer (TKAN only).
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
    pub memories: Vec<Var>,
}

impl TkanCellParams {
    /// Gate weights Glorot-uniform, biases zero except the forget bias (1.0).
    pub fn init(b: &mut ParamBuilder<'_>, input_dim: usize, units: usize, spec: &TkanSpec) -> Result<Self> {
        check_dims(input_dim, units)?;
        if spec.sublayers == 0 {
            return Err(Error::Config("TKAN cell needs at least one RKAN sub-layer".into()));
        }
        let forget = Gate::init(b, "f", input_dim, units, 1.0)?;
        let input = Gate::init(b, "i", input_dim, units, 0.0)?;
        let candidate = Gate::init(b, "c", input_dim, units, 0.0)?;
        let mut sublayers = Vec::with_capacity(spec.sublayers);
        let mut width = input_dim;
        for l in 0..spec.sublayers {
            let mut sb = b.scope(&alloc::format!("rkan{l}"));
            let w_hh = sb.glorot("W_hh", units, units)?;
            let w_hz = sb.glorot("W_hz", units, width)?;
            let kan = {
                let mut kb = sb.scope("kan");
                KanLinearParams::init(&mut kb, width + units, units, &spec.grid)?
            };
            sublayers.push(RkanSubLayer {
                input_dim: width,
                memory_dim: units,
                w_hh,
                w_hz,
                kan,
            });
            width = units;
        }
        Ok(TkanCellParams {
            input_dim,
            units,
            forget,
            input,
            candidate,
            candidate_activation: spec.candidate,
            sublayers,
        })
    }
}

impl LstmCellParams {
    pub fn init(b: &mut ParamBuilder<'_>, input_dim: usize, units: usize) -> Result<Self> {
        check_dims(input_dim, units)?;
        Ok(LstmCellParams {
            input_dim,
            units,
            input: Gate::init(b, "i", input_dim, units, 0.0)?,
            forget: Gate::init(b, "f", input_dim, units, 1.0)?,
            candidate: Gate::init(b, "c", input_dim, units, 0.0)?,
            output: Gate::init(b, "o", input_dim, units, 0.0)?,
        })
    }
}

impl GruCellParams {
    /// Single-bias GRU: `3 * ((input + units) * units + units)` scalars.
    pub fn init(b: &mut ParamBuilder<'_>, input_dim: usize, units: usize) -> Result<Self> {
        check_dims(input_dim, units)?;
        Ok(GruCellParams {
            input_dim,
            units,
            update: Gate::init(b, "z", input_dim, units, 0.0)?,
            reset: Gate::init(b, "r", input_dim, units, 0.0)?,
            candidate: Gate::init(b, "n", input_dim, units, 0.0)?,
        })
    }
}

fn check_dims(input_dim: usize, units: usize) -> Result<()> {
    if input_dim == 0 || units == 0 {
        return Err(Error::Config(alloc::format!(
            "recurrent cell dims must be positive, got input={input_dim} units={units}"
        )));
    }
    Ok(())
}

impl CellParams {
    pub fn init(
        b: &mut ParamBuilder<'_>,
        kind: CellKind,
        input_dim: usize,
        units: usize,
        tkan: &TkanSpec,
    ) -> Result<Self> {
        Ok(match kind {
            CellKind::Tkan => CellParams::Tkan(TkanCellParams::init(b, input_dim, units, tkan)?),
            CellKind::Lstm => CellParams::Lstm(LstmCellParams::init(b, input_dim, units)?),
            CellKind::Gru => CellParams::Gru(GruCellParams::init(b, input_dim, units)?),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Tkan(_) => CellKind::Tkan,
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn units(&self) -> usize {
        match self {
            CellParams::Tkan(p) => p.units,
            CellParams::Lstm(p) => p.units,
            CellParams::Gru(p) => p.units,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Tkan(p) => p.input_dim,
            CellParams::Lstm(p) => p.input_dim,
            CellParams::Gru(p) => p.input_dim,
        }
    }

    /// All-zero state for a batch.
    pub fn zero_state(&self, ctx: &Ctx, batch: usize) -> CellState {
        let g = ctx.g();
        let zeros = |d: usize| g.constant(crate::tensor::Tensor::zeros(&[batch, d]));
        let units = self.units();
        match self {
            CellParams::Tkan(p) => CellState {
                h: zeros(units),
                c: Some(zeros(units)),
                memories: p.sublayers.iter().map(|s| zeros(s.memory_dim)).collect(),
            },
            CellParams::Lstm(_) => CellState {
                h: zeros(units),
                c: Some(zeros(units)),
                memories: Vec::new(),
            },
            CellParams::Gru(_) => CellState {
                h: zeros(units),
                c: None,
                memories: Vec::new(),
            },
        }
    }

    pub fn prepare(&self, ctx: &Ctx) -> Result<PreparedCell<'_>> {
        let kans = match self {
            CellParams::Tkan(p) => p
                .sublayers
                .iter()
                .map(|s| s.kan.prepare(ctx))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(PreparedCell { params: self, kans })
    }

    /// One step; see [`PreparedCell::step`].
    pub fn step(&self, ctx: &Ctx, x: Var, state: &CellState) -> Result<CellState> {
        self.prepare(ctx)?.step(ctx, x, state)
    }
}

/// Cell parameters bound to one pass.
pub struct PreparedCell<'a> {
    params: &'a CellParams,
    kans: Vec<PreparedKan>,
}

/// `c' = f * c + i * candidate`.
pub fn memory_update(ctx: &Ctx, f: Var, i: Var, candidate: Var, c_prev: Var) -> Result<Var> {
    let g = ctx.g();
    g.add(g.mul(f, c_prev)?, g.mul(i, candidate)?)
}

/// RKAN memory update and sub-layer output: `m' = W_hh m + W_hz x`,
/// `y = KAN([x, m'])`.
pub fn rkan_substep(ctx: &Ctx, sub: &RkanSubLayer, kan: &PreparedKan, x: Var, memory: Var) -> Result<(Var, Var)> {
    let g = ctx.g();
    let carried = g.matmul_nt(memory, ctx.p(sub.w_hh))?;
    let fresh = g.matmul_nt(x, ctx.p(sub.w_hz))?;
    let memory = g.add(carried, fresh)?;
    let joined = g.concat(&[x, memory], 1)?;
    Ok((kan.apply(ctx, joined)?, memory))
}

impl PreparedCell<'_> {
    fn check_state(&self, ctx: &Ctx, x: Var, state: &CellState) -> Result<usize> {
        let g = ctx.g();
        let xs = g.shape(x);
        let p = self.params;
        if xs.len() != 2 || xs[1] != p.input_dim() {
            return Err(Error::shape("cell_step input", &xs, &[p.input_dim()]));
        }
        let hs = g.shape(state.h);
        if hs != [xs[0], p.units()] {
            return Err(Error::shape("cell_step state", &hs, &[xs[0], p.units()]));
        }
        let want_c = !matches!(p, CellParams::Gru(_));
        if state.c.is_some() != want_c {
            return Err(Error::Invalid("cell state does not match the cell kind".into()));
        }
        if let CellParams::Tkan(t) = p {
            if state.memories.len() != t.sublayers.len() {
                return Err(Error::Invalid(alloc::format!(
                    "expected {} RKAN memories, got {}",
                    t.sublayers.len(),
                    state.memories.len()
                )));
            }
        }
        Ok(xs[0])
    }

    /// Advances the state by one time step for `x: [batch, input_dim]`.
    pub fn step(&self, ctx: &Ctx, x: Var, state: &CellState) -> Result<CellState> {
        self.check_state(ctx, x, state)?;
        let g = ctx.g();
        let h = state.h;
        match self.params {
            CellParams::Tkan(p) => {
                let f = g.sigmoid(p.forget.pre_activation(ctx, x, h)?)?;
                let i = g.sigmoid(p.input.pre_activation(ctx, x, h)?)?;
                let cand_pre = p.candidate.pre_activation(ctx, x, h)?;
                let cand = match p.candidate_activation {
                    CandidateActivation::Sigmoid => g.sigmoid(cand_pre)?,
                    CandidateActivation::Tanh => g.tanh(cand_pre)?,
                };
                let mut z = x;
                let mut memories = Vec::with_capacity(p.sublayers.len());
                for ((sub, kan), &m) in p.sublayers.iter().zip(&self.kans).zip(&state.memories) {
                    let (y, m_new) = rkan_substep(ctx, sub, kan, z, m)?;
                    memories.push(m_new);
                    z = y;
                }
                let o = g.sigmoid(z)?;
                let c = memory_update(ctx, f, i, cand, state.c.unwrap())?;
                let h = g.mul(o, g.tanh(c)?)?;
                Ok(CellState {
                    h,
                    c: Some(c),
                    memories,
                })
            }
            CellParams::Lstm(p) => {
                let i = g.sigmoid(p.input.pre_activation(ctx, x, h)?)?;
                let f = g.sigmoid(p.forget.pre_activation(ctx, x, h)?)?;
                let cand = g.tanh(p.candidate.pre_activation(ctx, x, h)?)?;
                let o = g.sigmoid(p.output.pre_activation(ctx, x, h)?)?;
                let c = memory_update(ctx, f, i, cand, state.c.unwrap())?;
                let h = g.mul(o, g.tanh(c)?)?;
                Ok(CellState {
                    h,
                    c: Some(c),
                    memories: Vec::new(),
                })
            }
            CellParams::Gru(p) => {
                let z = g.sigmoid(p.update.pre_activation(ctx, x, h)?)?;
                let r = g.sigmoid(p.reset.pre_activation(ctx, x, h)?)?;
                let wx = g.matmul_nt(x, ctx.p(p.candidate.w))?;
                let uh = g.matmul_nt(g.mul(r, h)?, ctx.p(p.candidate.u))?;
                let n = g.tanh(g.add(g.add(wx, uh)?, ctx.p(p.candidate.b))?)?;
                // h' = z * h + (1 - z) * n
                let keep = g.mul(z, h)?;
                let one_minus_z = g.affine(z, -1.0, 1.0)?;
                let h = g.add(keep, g.mul(one_minus_z, n)?)?;
                Ok(CellState {
                    h,
                    c: None,
                    memories: Vec::new(),
                })
            }
        }
    }
}

/// Unrolls one cell over `xs: [batch, T, input_dim]`.
///
/// Returns `[batch, T, units]` when `return_sequences`, else the last hidden
/// output `[batch, units]`, together with the final state.
pub fn recurrent_sequence_forward(
    ctx: &Ctx,
    cell: &CellParams,
    xs: Var,
    initial: Option<&CellState>,
    return_sequences: bool,
) -> Result<(Var, CellState)> {
    let g = ctx.g();
    let shape = g.shape(xs);
    if shape.len() != 3 {
        return Err(Error::shape(
            "recurrent_sequence_forward",
            &shape,
            &[0, 0, cell.input_dim()],
        ));
    }
    let (batch, steps, width) = (shape[0], shape[1], shape[2]);
    if steps == 0 {
        return Err(Error::Invalid("sequence length must be at least 1".into()));
    }
    if width != cell.input_dim() {
        return Err(Error::shape("recurrent_sequence_forward", &shape, &[cell.input_dim()]));
    }
    let prepared = cell.prepare(ctx)?;
    let mut state = match initial {
        Some(s) => s.clone(),
        None => cell.zero_state(ctx, batch),
    };
    let units = cell.units();
    let mut outputs = Vec::with_capacity(if return_sequences { steps } else { 0 });
    for t in 0..steps {
        let x_t = g.reshape(g.narrow(xs, 1, t, 1)?, &[batch, width])?;
        state = prepared.step(ctx, x_t, &state)?;
        if return_sequences {
            outputs.push(g.reshape(state.h, &[batch, 1, units])?);
        }
    }
    let out = if return_sequences {
        g.concat(&outputs, 1)?
    } else {
        state.h
    };
    Ok((out, state))
}

/// Stacked recurrent layers; layer `l + 1` consumes the sequence of layer `l`.
#[derive(Debug, Clone)]
pub struct RecurrentStack {
    pub layers: Vec<CellParams>,
}

impl RecurrentStack {
    pub fn init(
        b: &mut ParamBuilder<'_>,
        kind: CellKind,
        input_dim: usize,
        units: &[usize],
        tkan: &TkanSpec,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Config("recurrent stack needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(units.len());
        let mut width = input_dim;
        for (l, &u) in units.iter().enumerate() {
            let mut cb = b.scope(&alloc::format!("cell{l}"));
            layers.push(CellParams::init(&mut cb, kind, width, u, tkan)?);
            width = u;
        }
        Ok(RecurrentStack { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(CellParams::units).unwrap_or(0)
    }

    /// Runs every layer; `initial` supplies one state per layer.
    pub fn forward(
        &self,
        ctx: &Ctx,
        xs: Var,
        initial: Option<&[CellState]>,
        return_sequences: bool,
    ) -> Result<(Var, Vec<CellState>)> {
        if let Some(init) = initial {
            if init.len() != self.layers.len() {
                return Err(Error::Invalid(alloc::format!(
                    "expected {} initial states, got {}",
                    self.layers.len(),
                    init.len()
                )));
            }
        }
        let mut seq = xs;
        let mut finals = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, cell) in self.layers.iter().enumerate() {
            let init = initial.map(|s| &s[l]);
            let (out, state) = recurrent_sequence_forward(ctx, cell, seq, init, return_sequences || l < last)?;
            finals.push(state);
            seq = out;
        }
        Ok((seq, finals))
    }
}
