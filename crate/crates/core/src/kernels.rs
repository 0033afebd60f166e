//! Low-level numeric kernels shared by the forward and backward passes.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Strided view of a row-major matrix buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rs: isize,
    pub cs: isize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// The transpose of a row-major `rows x cols` buffer.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c = a * b + beta * c` for an `m x k` times `k x n` product; `c` is row-major `m x n`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the views address at most `m*k` / `k*n` elements of buffers the
    // callers size exactly for those shapes, and `c` holds `m*n` elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// How a binary elementwise op lines up its operands.
pub(crate) enum Broadcast {
    Same,
    /// `b` repeats with period `b.len()` over `a`.
    RepeatRight,
    /// `a` repeats with period `a.len()` over `b`.
    RepeatLeft,
    /// The smaller operand equals the output with one contiguous run of axes
    /// collapsed to 1: output `[outer, mid, inner]`, small `[outer, 1, inner]`.
    Blocked {
        small_is_b: bool,
        mid: usize,
        inner: usize,
    },
    /// Full numpy-style mapping: per output element, the source offsets.
    General {
        a_off: Vec<usize>,
        b_off: Vec<usize>,
    },
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = Vec::with_capacity(rank);
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        let d = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
        out.push(d);
    }
    Some(out)
}

fn offsets(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    // strides of `src` aligned to the output rank, 0 on broadcast axes
    let mut strides = alloc::vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        let oi = i + rank - src.len();
        strides[oi] = if src[i] == 1 && out[oi] != 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total: usize = out.iter().product();
    let mut offs = Vec::with_capacity(total);
    let mut idx = alloc::vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        offs.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= strides[ax] * out[ax];
            idx[ax] = 0;
        }
    }
    offs
}

/// `(mid, inner)` when `small`, padded to the rank of `out`, differs from it
/// only on one contiguous run of axes where it is 1.
fn blocked(small: &[usize], out: &[usize]) -> Option<(usize, usize)> {
    let pad = out.len() - small.len();
    let dim = |i: usize| if i < pad { 1 } else { small[i - pad] };
    let differs: Vec<usize> = (0..out.len()).filter(|&i| dim(i) != out[i]).collect();
    let (&lo, &hi) = (differs.first()?, differs.last()?);
    if hi + 1 - lo != differs.len() {
        return None;
    }
    Some((out[lo..=hi].iter().product(), out[hi + 1..].iter().product()))
}

pub(crate) fn plan_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Broadcast)> {
    if a == b {
        return Ok((a.to_vec(), Broadcast::Same));
    }
    if is_suffix(b, a) {
        return Ok((a.to_vec(), Broadcast::RepeatRight));
    }
    if is_suffix(a, b) {
        return Ok((b.to_vec(), Broadcast::RepeatLeft));
    }
    let out = broadcast_shape(a, b).ok_or_else(|| Error::shape(op, a, b))?;
    for (small, small_is_b) in [(b, true), (a, false)] {
        let full = if small_is_b { a } else { b };
        if full != out.as_slice() {
            continue;
        }
        if let Some((mid, inner)) = blocked(small, &out) {
            return Ok((out, Broadcast::Blocked { small_is_b, mid, inner }));
        }
    }
    let a_off = offsets(a, &out);
    let b_off = offsets(b, &out);
    Ok((out, Broadcast::General { a_off, b_off }))
}

impl Broadcast {
    /// Source offsets `(ia, ib)` for output element `i`.
    #[cfg(test)]
    pub fn index(&self, i: usize, na: usize, nb: usize) -> (usize, usize) {
        match self {
            Broadcast::Same => (i, i),
            Broadcast::RepeatRight => (i, i % nb),
            Broadcast::RepeatLeft => (i % na, i),
            Broadcast::Blocked { small_is_b, mid, inner } => {
                let s = (i / (mid * inner)) * inner + i % inner;
                if *small_is_b {
                    (i, s)
                } else {
                    (s, i)
                }
            }
            Broadcast::General { a_off, b_off } => (a_off[i], b_off[i]),
        }
    }

    /// Calls `f(i, ia, ib)` for every output element in order.
    #[inline]
    pub fn for_each(&self, total: usize, na: usize, nb: usize, mut f: impl FnMut(usize, usize, usize)) {
        match self {
            Broadcast::Same => (0..total).for_each(|i| f(i, i, i)),
            Broadcast::RepeatRight => {
                for base in (0..total).step_by(nb.max(1)) {
                    (0..nb).for_each(|j| f(base + j, base + j, j));
                }
            }
            Broadcast::RepeatLeft => {
                for base in (0..total).step_by(na.max(1)) {
                    (0..na).for_each(|j| f(base + j, j, base + j));
                }
            }
            Broadcast::Blocked { small_is_b, mid, inner } => {
                let (mid, inner) = (*mid, *inner);
                let mut i = 0;
                for o in 0..total / (mid * inner).max(1) {
                    for _ in 0..mid {
                        for k in 0..inner {
                            let s = o * inner + k;
                            if *small_is_b {
                                f(i, i, s)
                            } else {
                                f(i, s, i)
                            }
                            i += 1;
                        }
                    }
                }
            }
            Broadcast::General { a_off, b_off } => (0..total).for_each(|i| f(i, a_off[i], b_off[i])),
        }
    }
}

/// Splits `shape` around `axis` into `(outer, n, inner)`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
