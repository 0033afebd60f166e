//! Finite-difference gradient checks over every layer at toy sizes.
//!
//! Inputs are stored next to the parameters so input gradients are checked
//! too. Each loss is a fixed non-uniform weighting of the layer output.

use alloc::vec::Vec;

use crate::attention::MhaParams;
use crate::error::Result;
use crate::fusion::{GluParams, GrnParams, VsnParams};
use crate::gradcheck::{finite_diff_check_store, StoreCheck};
use crate::graph::Var;
use crate::kan::{init_kan_params, GridSpec};
use crate::model::{build_tkat, TkatConfig, Variant};
use crate::params::{build_params, Ctx, ParamStore};
use crate::recurrent::{recurrent_sequence_forward, rkan_substep, CellKind, CellParams, CellState, TkanSpec};
use crate::tensor::Tensor;

/// Central-difference step.
pub const EPS: f64 = 1e-6;
/// Bound for a single layer.
pub const LAYER_TOLERANCE: f64 = 1e-5;
/// Bound for multi-step and whole-model checks.
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub layer: &'static str,
    pub tolerance: f64,
    pub report: StoreCheck,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < self.tolerance
    }
}

/// Deterministic values in `(-1, 1)` that avoid spline knots.
fn pseudo(shape: &[usize], phase: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|i| 0.9 * libm::sin(phase + 1.7 * i as f64 + 0.05)).collect();
    Tensor::new(shape, data).expect("finite")
}

fn weighted_sum(ctx: &Ctx, y: Var, phase: f64) -> Result<Var> {
    let g = ctx.g();
    let w = g.constant(pseudo(&g.shape(y), phase));
    g.sum(g.mul(y, w)?)
}

fn entry(layer: &'static str, tolerance: f64, report: StoreCheck) -> SuiteEntry {
    SuiteEntry {
        layer,
        tolerance,
        report,
    }
}

fn kan_linear() -> Result<SuiteEntry> {
    let (mut store, p) = init_kan_params(3, 2, &GridSpec::default(), 5)?;
    let x = store.insert("input", pseudo(&[2, 3], 0.3))?;
    let r = finite_diff_check_store(&store, |ctx| weighted_sum(ctx, p.forward(ctx, ctx.p(x))?, 1.1), EPS)?;
    Ok(entry("kan_linear", LAYER_TOLERANCE, r))
}

fn tkan_cell(seed: u64) -> Result<(ParamStore, CellParams)> {
    build_params(seed, |b| {
        CellParams::init(b, CellKind::Tkan, 2, 3, &TkanSpec::default())
    })
}

fn rkan_substep_check() -> Result<SuiteEntry> {
    let (mut store, cell) = tkan_cell(4)?;
    let CellParams::Tkan(t) = &cell else { unreachable!() };
    let sub = t.sublayers[0].clone();
    let x = store.insert("input.x", pseudo(&[2, 2], 0.7))?;
    let m = store.insert("input.memory", pseudo(&[2, 3], 2.2))?;
    let r = finite_diff_check_store(
        &store,
        |ctx| {
            let kan = sub.kan.prepare(ctx)?;
            let (y, memory) = rkan_substep(ctx, &sub, &kan, ctx.p(x), ctx.p(m))?;
            let g = ctx.g();
            g.add(weighted_sum(ctx, y, 0.4)?, weighted_sum(ctx, memory, 1.9)?)
        },
        EPS,
    )?;
    Ok(entry("rkan_substep", LAYER_TOLERANCE, r))
}

fn cell_step(kind: CellKind, layer: &'static str) -> Result<SuiteEntry> {
    let (mut store, cell) = build_params(6, |b| CellParams::init(b, kind, 2, 3, &TkanSpec::default()))?;
    let x = store.insert("input.x", pseudo(&[2, 2], 0.9))?;
    let h = store.insert("input.h", pseudo(&[2, 3], 1.4))?;
    let c = store.insert("input.c", pseudo(&[2, 3], 2.6))?;
    let memories: Vec<_> = match &cell {
        CellParams::Tkan(t) => (0..t.sublayers.len())
            .map(|l| store.insert(alloc::format!("input.memory{l}"), pseudo(&[2, 3], 3.1 + l as f64)))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let r = finite_diff_check_store(
        &store,
        |ctx| {
            let state = CellState {
                h: ctx.p(h),
                c: (kind != CellKind::Gru).then(|| ctx.p(c)),
                memories: memories.iter().map(|&m| ctx.p(m)).collect(),
            };
            let next = cell.step(ctx, ctx.p(x), &state)?;
            let g = ctx.g();
            let mut loss = weighted_sum(ctx, next.h, 0.2)?;
            if let Some(c) = next.c {
                loss = g.add(loss, weighted_sum(ctx, c, 1.3)?)?;
            }
            for (l, &m) in next.memories.iter().enumerate() {
                loss = g.add(loss, weighted_sum(ctx, m, 2.4 + l as f64)?)?;
            }
            Ok(loss)
        },
        EPS,
    )?;
    Ok(entry(layer, LAYER_TOLERANCE, r))
}

fn tkan_sequence() -> Result<SuiteEntry> {
    let (mut store, cell) = tkan_cell(4)?;
    let xs = store.insert("input", pseudo(&[2, 3, 2], 0.5))?;
    let r = finite_diff_check_store(
        &store,
        |ctx| {
            let (h, _) = recurrent_sequence_forward(ctx, &cell, ctx.p(xs), None, true)?;
            weighted_sum(ctx, h, 0.8)
        },
        EPS,
    )?;
    Ok(entry("tkan_sequence", END_TO_END_TOLERANCE, r))
}

fn glu() -> Result<SuiteEntry> {
    let (mut store, p) = build_params(2, |b| GluParams::init(b, 3, 2))?;
    let x = store.insert("input", pseudo(&[2, 3], 1.2))?;
    let r = finite_diff_check_store(&store, |ctx| weighted_sum(ctx, p.forward(ctx, ctx.p(x))?, 0.6), EPS)?;
    Ok(entry("glu", LAYER_TOLERANCE, r))
}

fn grn() -> Result<SuiteEntry> {
    let (mut store, p) = build_params(3, |b| GrnParams::init(b, 4, 5, 3))?;
    let x = store.insert("input", pseudo(&[2, 4], 0.1))?;
    let r = finite_diff_check_store(&store, |ctx| weighted_sum(ctx, p.forward(ctx, ctx.p(x))?, 2.0), EPS)?;
    Ok(entry("grn", LAYER_TOLERANCE, r))
}

fn vsn() -> Result<SuiteEntry> {
    let (mut store, p) = build_params(8, |b| VsnParams::init(b, 3, 2, 4))?;
    let streams = store.insert("input", pseudo(&[3, 2, 2], 0.35))?;
    let r = finite_diff_check_store(
        &store,
        |ctx| {
            let out = p.forward(ctx, ctx.p(streams))?;
            let g = ctx.g();
            g.add(
                weighted_sum(ctx, out.output, 1.5)?,
                weighted_sum(ctx, out.weights, 2.8)?,
            )
        },
        EPS,
    )?;
    Ok(entry("vsn", LAYER_TOLERANCE, r))
}

fn attention() -> Result<SuiteEntry> {
    let (mut store, p) = build_params(21, |b| MhaParams::init(b, 4, 2, true))?;
    let x = store.insert("input", pseudo(&[1, 3, 4], 0.3))?;
    let r = finite_diff_check_store(
        &store,
        |ctx| weighted_sum(ctx, p.forward(ctx, ctx.p(x))?.output, 2.1),
        EPS,
    )?;
    Ok(entry("multi_head_attention", LAYER_TOLERANCE, r))
}

/// Worst case over several seeds and inputs.
fn tkat(variant: Variant, cell: CellKind, layer: &'static str) -> Result<SuiteEntry> {
    let mut worst: Option<StoreCheck> = None;
    for (seed, phase) in [(17, 0.25), (1, 0.1), (2, 0.7), (3, 1.3)] {
        let r = tkat_once(variant, cell, seed, phase)?;
        if worst.as_ref().is_none_or(|w| r.max_rel_error > w.max_rel_error) {
            worst = Some(r);
        }
    }
    Ok(entry(layer, END_TO_END_TOLERANCE, worst.expect("non-empty")))
}

fn tkat_once(variant: Variant, cell: CellKind, seed: u64, phase: f64) -> Result<StoreCheck> {
    let mut c = TkatConfig::new(2, 1, 3, 2)
        .with_dims(4, 2)
        .with_variant(variant)
        .with_cell(cell);
    c.seed = seed;
    let (mut store, p) = build_tkat(&c)?;
    let past = store.insert(
        "input.past",
        pseudo(&[2, 3, c.past_width()], phase).map(|v| 0.5 + 0.4 * v)?,
    )?;
    let future = pseudo(&[2, 2, 1], 1.7).map(|v| 0.5 + 0.4 * v)?;
    let target = pseudo(&[2, 2], 0.45);
    finite_diff_check_store(
        &store,
        |ctx| {
            let g = ctx.g();
            let y = p.forward(ctx, ctx.p(past), g.constant(future.clone()))?;
            g.mean(g.square(g.sub(y, g.constant(target.clone()))?)?)
        },
        EPS,
    )
}

/// Runs every check in a fixed order.
pub fn run_suite() -> Result<Vec<SuiteEntry>> {
    Ok(alloc::vec![
        kan_linear()?,
        rkan_substep_check()?,
        cell_step(CellKind::Tkan, "tkan_cell_step")?,
        cell_step(CellKind::Lstm, "lstm_cell_step")?,
        cell_step(CellKind::Gru, "gru_cell_step")?,
        tkan_sequence()?,
        glu()?,
        grn()?,
        vsn()?,
        attention()?,
        tkat(Variant::Base, CellKind::Tkan, "tkat_base")?,
        tkat(Variant::A, CellKind::Tkan, "tkat_variant_a")?,
        tkat(Variant::B, CellKind::Tkan, "tkat_variant_b")?,
        tkat(Variant::Base, CellKind::Lstm, "tkat_lstm_base")?,
    ])
}
