//! Uniform B-spline grids evaluated with the Cox–de Boor recursion.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Highest supported spline order.
pub const MAX_ORDER: usize = 12;

/// A uniform knot grid over `[range_low, range_high]` with `grid_size`
/// interior intervals, extended by `order` knots on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    range_low: f64,
    range_high: f64,
    grid_size: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn new(range_low: f64, range_high: f64, grid_size: usize, order: usize) -> Result<Self> {
        if !(range_low.is_finite() && range_high.is_finite()) || range_low >= range_high {
            return Err(Error::Invalid(alloc::format!(
                "degenerate spline grid range [{range_low}, {range_high}]"
            )));
        }
        if grid_size == 0 {
            return Err(Error::Invalid("spline grid needs at least one interval".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::Invalid(alloc::format!(
                "spline order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let h = (range_high - range_low) / grid_size as f64;
        let knots = (0..=grid_size + 2 * order)
            .map(|j| range_low + (j as f64 - order as f64) * h)
            .collect();
        Ok(SplineGrid {
            range_low,
            range_high,
            grid_size,
            order,
            knots,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.range_low, self.range_high)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `grid_size + order`.
    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.range_low, self.range_high)
    }

    /// Knot span `s` with `knots[s] <= x < knots[s + 1]`, restricted to the
    /// interior so the right boundary belongs to the last interval.
    fn span(&self, x: f64) -> usize {
        let h = (self.range_high - self.range_low) / self.grid_size as f64;
        let raw = libm::floor((x - self.range_low) / h);
        let mut j = if raw < 0.0 { 0 } else { raw as usize };
        j = j.min(self.grid_size - 1);
        // floor() can land one interval off when x sits on a knot
        let mut s = j + self.order;
        while s > self.order && x < self.knots[s] {
            s -= 1;
        }
        while s + 1 < self.order + self.grid_size && x >= self.knots[s + 1] {
            s += 1;
        }
        s
    }

    /// The `p + 1` basis functions of order `p` that are non-zero on `span`,
    /// i.e. indices `span - p ..= span`.
    fn local_basis(&self, x: f64, span: usize, p: usize, out: &mut [f64; MAX_ORDER + 1]) {
        let t = &self.knots;
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Writes all `num_basis()` basis values at `x` (clamped into range).
    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_basis());
        out.iter_mut().for_each(|v| *v = 0.0);
        let x = self.clamp(x);
        let k = self.order;
        let span = self.span(x);
        let mut local = [0.0; MAX_ORDER + 1];
        self.local_basis(x, span, k, &mut local);
        for r in 0..=k {
            out[span - k + r] = local[r];
        }
    }

    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.num_basis()];
        self.basis_into(x, &mut out);
        out
    }

    /// Derivative of every basis function at `x`; zero outside the range,
    /// where inputs are clamped.
    pub fn basis_derivative_into(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let k = self.order;
        if k == 0 || x < self.range_low || x > self.range_high {
            return;
        }
        let t = &self.knots;
        let span = self.span(x);
        let mut lower = [0.0; MAX_ORDER + 1];
        // order k-1 functions non-zero on span: indices span-k+1 ..= span
        self.local_basis(x, span, k - 1, &mut lower);
        let kf = k as f64;
        let lower_at = |i: usize| -> f64 {
            if i + k < span + 1 || i > span {
                0.0
            } else {
                lower[i + k - 1 - span]
            }
        };
        for b in span - k..=span {
            let left = kf / (t[b + k] - t[b]) * lower_at(b);
            let right = kf / (t[b + k + 1] - t[b + 1]) * lower_at(b + 1);
            out[b] = left - right;
        }
    }
}
