//! Kolmogorov-Arnold linear layer: every input-output edge carries a learnable
//! univariate function made of a SiLU base term plus a scaled B-spline.
//!
//! `out[j] = sum_i base_weight[j,i] * silu(x_i)
//!         + spline_scale[j,i] * sum_b spline_coeffs[j,i,b] * B_b(x_i)`

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::params::{build_params, Ctx, ParamBuilder, ParamId, ParamStore};
use crate::spline::SplineGrid;

/// Spline grid hyperparameters. Defaults: cubic, 5 intervals on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub grid_size: usize,
    pub order: usize,
    pub range: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            grid_size: 5,
            order: 3,
            range: (-1.0, 1.0),
        }
    }
}

impl GridSpec {
    pub fn grid(&self) -> Result<SplineGrid> {
        SplineGrid::new(self.range.0, self.range.1, self.grid_size, self.order)
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }
}

#[derive(Debug, Clone)]
pub struct KanLinearParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid: SplineGrid,
    /// `[out, in]`
    pub base_weight: ParamId,
    /// `[out, in, grid_size + order]`
    pub spline_coeffs: ParamId,
    /// `[out, in]`
    pub spline_scale: ParamId,
}

/// Scalars in one layer: `out*in*(G+k)` coefficients plus base weight and spline scale.
pub fn kan_param_count(in_dim: usize, out_dim: usize, spec: &GridSpec) -> usize {
    out_dim * in_dim * spec.num_basis() + 2 * out_dim * in_dim
}

impl KanLinearParams {
    pub fn init(b: &mut ParamBuilder<'_>, in_dim: usize, out_dim: usize, spec: &GridSpec) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Invalid(alloc::format!(
                "KAN layer dims must be positive, got in={in_dim} out={out_dim}"
            )));
        }
        let grid = spec.grid()?;
        let nb = grid.num_basis();
        let base_weight = b.glorot("base_weight", out_dim, in_dim)?;
        let spline_coeffs = b.normal("spline_coeffs", &[out_dim, in_dim, nb], 0.1 / libm::sqrt(nb as f64))?;
        let spline_scale = b.full("spline_scale", &[out_dim, in_dim], 1.0)?;
        Ok(KanLinearParams {
            in_dim,
            out_dim,
            grid,
            base_weight,
            spline_coeffs,
            spline_scale,
        })
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim * (self.grid.num_basis() + 2)
    }

    /// Binds the layer for one pass; the scaled spline weight is formed once
    /// and reused by every application (e.g. every time step).
    pub fn prepare(&self, ctx: &Ctx) -> Result<PreparedKan> {
        let g = ctx.g();
        let nb = self.grid.num_basis();
        let scale = g.reshape(ctx.p(self.spline_scale), &[self.out_dim, self.in_dim, 1])?;
        let w = g.mul(ctx.p(self.spline_coeffs), scale)?;
        let spline_weight = g.reshape(w, &[self.out_dim, self.in_dim * nb])?;
        Ok(PreparedKan {
            in_dim: self.in_dim,
            grid: self.grid.clone(),
            base_weight: ctx.p(self.base_weight),
            spline_weight,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        self.prepare(ctx)?.apply(ctx, x)
    }
}

pub struct PreparedKan {
    in_dim: usize,
    grid: SplineGrid,
    base_weight: Var,
    spline_weight: Var,
}

impl PreparedKan {
    /// `x: [.., in_dim]` to `[.., out_dim]`.
    pub fn apply(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.g();
        let shape = g.shape(x);
        if shape.last() != Some(&self.in_dim) {
            return Err(Error::shape("kan_linear", &shape, &[self.in_dim]));
        }
        let base = g.matmul_nt(g.silu(x)?, self.base_weight)?;
        let basis = g.bspline_basis(x, &self.grid)?;
        let mut flat = shape.clone();
        *flat.last_mut().unwrap() = self.in_dim * self.grid.num_basis();
        let basis = g.reshape(basis, &flat)?;
        let spline = g.matmul_nt(basis, self.spline_weight)?;
        g.add(base, spline)
    }
}

/// A standalone seeded KAN layer in its own store.
pub fn init_kan_params(
    in_dim: usize,
    out_dim: usize,
    spec: &GridSpec,
    seed: u64,
) -> Result<(ParamStore, KanLinearParams)> {
    build_params(seed, |b| KanLinearParams::init(b, in_dim, out_dim, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check_store;
    use crate::graph::UnaryKind;
    use crate::tensor::Tensor;
    use alloc::vec::Vec;

    fn set(store: &mut ParamStore, id: ParamId, value: Tensor) {
        store.set(id, value).unwrap();
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = GridSpec::default();
        let (mut store, p) = init_kan_params(3, 2, &spec, 1).unwrap();
        set(&mut store, p.base_weight, Tensor::zeros(&[2, 3]));
        set(&mut store, p.spline_coeffs, Tensor::zeros(&[2, 3, 8]));
        let ctx = Ctx::inference(&store);
        let x = ctx
            .g()
            .constant(Tensor::matrix(2, 3, &[0.1, -0.5, 0.9, 0.3, 0.0, -0.2]).unwrap());
        let y = ctx.g().value(p.forward(&ctx, x).unwrap());
        assert_eq!(y.shape(), &[2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn base_path_only_is_silu() {
        let spec = GridSpec::default();
        let (mut store, p) = init_kan_params(2, 2, &spec, 1).unwrap();
        set(&mut store, p.base_weight, Tensor::eye(2));
        set(&mut store, p.spline_coeffs, Tensor::zeros(&[2, 2, 8]));
        set(&mut store, p.spline_scale, Tensor::full(&[2, 2], 3.7));
        let ctx = Ctx::inference(&store);
        let xs = [0.4, -0.8];
        let x = ctx.g().constant(Tensor::matrix(1, 2, &xs).unwrap());
        let y = ctx.g().value(p.forward(&ctx, x).unwrap());
        for (o, xi) in y.data().iter().zip(xs) {
            assert!((o - UnaryKind::Silu.apply(xi)).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_spline_interpolates_identity() {
        // G=2, k=1 on [-1,1]: hat functions centred at -1, 0, 1; coefficients
        // equal to the centres reproduce f(x) = x exactly inside the range.
        let spec = GridSpec {
            grid_size: 2,
            order: 1,
            range: (-1.0, 1.0),
        };
        let (mut store, p) = init_kan_params(1, 1, &spec, 3).unwrap();
        let wb = 0.3;
        set(&mut store, p.base_weight, Tensor::matrix(1, 1, &[wb]).unwrap());
        set(
            &mut store,
            p.spline_coeffs,
            Tensor::new(&[1, 1, 3], alloc::vec![-1.0, 0.0, 1.0]).unwrap(),
        );
        set(&mut store, p.spline_scale, Tensor::matrix(1, 1, &[1.0]).unwrap());
        let pts = [-0.9, -0.35, 0.05, 0.5, 0.8];
        let ctx = Ctx::inference(&store);
        let x = ctx.g().constant(Tensor::matrix(5, 1, &pts).unwrap());
        let y = ctx.g().value(p.forward(&ctx, x).unwrap());
        for (o, &xi) in y.data().iter().zip(&pts) {
            // brute-force oracle: explicit hat functions
            let hats: Vec<f64> = [-1.0f64, 0.0, 1.0]
                .iter()
                .map(|c| (1.0 - (xi - c).abs()).max(0.0))
                .collect();
            let spline: f64 = hats.iter().zip([-1.0, 0.0, 1.0]).map(|(h, c)| h * c).sum();
            assert!((spline - xi).abs() < 1e-15);
            let expected = spline + wb * UnaryKind::Silu.apply(xi);
            assert!((o - expected).abs() < 1e-14, "{o} vs {expected}");
        }
    }

    #[test]
    fn init_is_seeded_and_validated() {
        let spec = GridSpec::default();
        let a = init_kan_params(4, 3, &spec, 0).unwrap().0;
        let b = init_kan_params(4, 3, &spec, 0).unwrap().0;
        let c = init_kan_params(4, 3, &spec, 1).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(init_kan_params(4, 0, &spec, 0).is_err());
        assert!(init_kan_params(0, 2, &spec, 0).is_err());
        assert_eq!(a.get(a.find("spline_scale").unwrap()).data(), &[1.0; 12]);
    }

    #[test]
    fn param_count_formula() {
        let spec = GridSpec::default();
        let (store, p) = init_kan_params(7, 5, &spec, 0).unwrap();
        assert_eq!(store.count(), 5 * 7 * 8 + 2 * 5 * 7);
        assert_eq!(p.param_count(), store.count());
        assert_eq!(kan_param_count(7, 5, &spec), store.count());
    }

    #[test]
    fn rejects_wrong_input_width() {
        let (store, p) = init_kan_params(3, 2, &GridSpec::default(), 0).unwrap();
        let ctx = Ctx::inference(&store);
        let x = ctx.g().constant(Tensor::zeros(&[2, 4]));
        assert!(p.forward(&ctx, x).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut store, p) = init_kan_params(3, 2, &GridSpec::default(), 5).unwrap();
        // inputs offset from every knot (knots at multiples of 0.4 - 1)
        let xs = [0.13, -0.55, 0.71, -0.07, 0.34, -0.93];
        let xid = store.insert("x", Tensor::matrix(2, 3, &xs).unwrap()).unwrap();
        let w = Tensor::matrix(2, 2, &[0.7, -1.3, 0.4, 1.1]).unwrap();
        let report = finite_diff_check_store(
            &store,
            |ctx| {
                let g = ctx.g();
                let y = p.forward(ctx, ctx.p(xid))?;
                let wv = g.constant(w.clone());
                g.sum(g.mul(y, wv)?)
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}
