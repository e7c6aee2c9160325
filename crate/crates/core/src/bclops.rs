//! Differentiable primitives on the lattice: normalized splat, sparse
//! lattice convolution over the 1-ring, and slice, each with an explicit
//! reverse pass.
//!
//! All passes, forward and backward, are pure gathers over precomputed
//! footprint/incidence/neighbor tables. Splat's adjoint is a slice over the
//! same weights (scaled by the density denominators when normalization is
//! on) and vice versa, and the convolution's feature gradient is a gather
//! through the mirrored stencil, so no pass ever scatters into shared rows.

use crate::error::{Error, Result};
use crate::lattice::map::{FootprintBlock, Incidence, LatticeLink, NeighborTable, NO_ROW};
use crate::lattice::mirror_offset;
use crate::params::{ParamId, ParamStore};
use crate::util::{for_each_row_mut, matmul, matmul_at_b};
use ndarray::{Array2, ArrayView2, Axis};

/// Floor applied to density-normalization denominators.
pub const NORM_FLOOR: f64 = 1e-12;

/// Leaky-rectifier slope used everywhere an activation is requested.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    LeakyRelu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

/// One linear layer of a convolution stack. `taps` is the kernel support:
/// the full 1-ring (`2(d+1)+1`) for a spatial layer or 1 for pointwise.
/// The weight shape is `(taps * c_in) x c_out`, the bias `1 x c_out`.
#[derive(Debug, Clone)]
pub struct LinearSpec {
    pub weight: ParamId,
    pub bias: ParamId,
    pub taps: usize,
    pub activation: Activation,
}

/// A stack of linear layers applied on the occupied lattice points.
#[derive(Debug, Clone, Default)]
pub struct ConvStack {
    pub layers: Vec<LinearSpec>,
}

impl ConvStack {
    /// Channel width validation: adjacent layers must chain.
    pub fn validate(&self, c_in: usize, params: &ParamStore) -> Result<usize> {
        let mut c = c_in;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = params.value(layer.weight);
            let b = params.value(layer.bias);
            if w.nrows() != layer.taps * c {
                return Err(Error::ShapeMismatch(format!(
                    "stack layer {i}: weight rows {} != taps {} * c_in {}",
                    w.nrows(),
                    layer.taps,
                    c
                )));
            }
            if b.ncols() != w.ncols() || b.nrows() != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "stack layer {i}: bias shape {:?} does not match {} outputs",
                    b.dim(),
                    w.ncols()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("stack layer {i}: non-finite weight")));
            }
            c = w.ncols();
        }
        Ok(c)
    }

    pub fn out_width(&self, c_in: usize, params: &ParamStore) -> usize {
        self.layers
            .last()
            .map(|l| params.value(l.weight).ncols())
            .unwrap_or(c_in)
    }
}

/// Splat signals onto occupied lattice points: `u_j = sum_k b_kj v_k`,
/// divided by `sum_k b_kj` when `normalize` is set, which makes every
/// output row a convex combination of input rows.
pub fn splat(inc: &Incidence, signals: ArrayView2<f64>, normalize: bool) -> Result<Array2<f64>> {
    let denom = normalize.then_some(inc.weight_sum.as_slice());
    splat_with_denom(inc, signals, denom)
}

/// Splat with an explicit per-row denominator (the original-normalization
/// ablation feeds Gaussian-filtered weights here instead of the raw sums).
pub fn splat_with_denom(
    inc: &Incidence,
    signals: ArrayView2<f64>,
    denom: Option<&[f64]>,
) -> Result<Array2<f64>> {
    if signals.nrows() != inc.n_points {
        return Err(Error::ShapeMismatch(format!(
            "splat: {} signal rows for {} incident points",
            signals.nrows(),
            inc.n_points
        )));
    }
    let m = inc.rows();
    let c = signals.ncols();
    let mut out = Array2::zeros((m, c));
    let sig = signals.to_owned();
    let sig_slice = sig.as_slice().expect("standard layout");
    for_each_row_mut(&mut out, |j, row| {
        for &(k, w) in inc.list(j) {
            let src = &sig_slice[k as usize * c..(k as usize + 1) * c];
            for (o, &s) in row.iter_mut().zip(src) {
                *o += w * s;
            }
        }
        if let Some(denom) = denom {
            let d = denom[j].max(NORM_FLOOR);
            for o in row.iter_mut() {
                *o /= d;
            }
        }
    });
    Ok(out)
}

/// Reverse pass of [`splat`]: routes lattice-row gradients back to the
/// input points through the same barycentric weights (and denominators).
pub fn splat_backward(
    link: &LatticeLink,
    grad_out: ArrayView2<f64>,
    normalize: bool,
) -> Result<Array2<f64>> {
    let denom = normalize.then_some(link.inc.weight_sum.as_slice());
    splat_backward_with_denom(link, grad_out, denom)
}

/// Reverse pass of [`splat_with_denom`].
pub fn splat_backward_with_denom(
    link: &LatticeLink,
    grad_out: ArrayView2<f64>,
    denom: Option<&[f64]>,
) -> Result<Array2<f64>> {
    if grad_out.nrows() != link.inc.rows() {
        return Err(Error::ShapeMismatch(format!(
            "splat_backward: grad has {} rows, map has {}",
            grad_out.nrows(),
            link.inc.rows()
        )));
    }
    let scale: Option<Vec<f64>> =
        denom.map(|d| d.iter().map(|&s| 1.0 / s.max(NORM_FLOOR)).collect());
    Ok(gather_weighted(&link.fp, grad_out, scale.as_deref()))
}

/// Slice lattice features to arbitrary target points:
/// `out_i = sum_{j in D(i)} b_ij F_j`, with missing vertices contributing
/// zero. Linear in the features.
pub fn slice(fp: &FootprintBlock, features: ArrayView2<f64>) -> Array2<f64> {
    gather_weighted(fp, features, None)
}

/// Reverse pass of [`slice`]: the transposed gather, which is exactly an
/// unnormalized splat of the output gradients.
pub fn slice_backward(link: &LatticeLink, grad_out: ArrayView2<f64>) -> Result<Array2<f64>> {
    if grad_out.nrows() != link.fp.n {
        return Err(Error::ShapeMismatch(format!(
            "slice_backward: grad has {} rows, footprints have {}",
            grad_out.nrows(),
            link.fp.n
        )));
    }
    splat(&link.inc, grad_out, false)
}

/// Weighted footprint gather shared by slice and splat_backward;
/// `row_scale`, when present, rescales each source row (the inverse
/// density denominators).
fn gather_weighted(
    fp: &FootprintBlock,
    features: ArrayView2<f64>,
    row_scale: Option<&[f64]>,
) -> Array2<f64> {
    let c = features.ncols();
    let mut out = Array2::zeros((fp.n, c));
    let feat = features.to_owned();
    let feat_slice = feat.as_slice().expect("standard layout");
    for_each_row_mut(&mut out, |p, row| {
        for v in 0..fp.verts {
            let r = fp.row(p, v);
            if r == NO_ROW {
                continue;
            }
            let mut w = fp.weight(p, v);
            if let Some(scale) = row_scale {
                w *= scale[r as usize];
            }
            let src = &feat_slice[r as usize * c..(r as usize + 1) * c];
            for (o, &s) in row.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    });
    out
}

/// Gather the `K`-tap neighborhood of every occupied point into an
/// `M x (K*C)` block; unoccupied neighbors contribute zeros.
pub fn gather_neighbors(features: ArrayView2<f64>, nt: &NeighborTable) -> Array2<f64> {
    let m = features.nrows();
    let c = features.ncols();
    let k = nt.k;
    let mut out = Array2::zeros((m, k * c));
    let feat = features.to_owned();
    let feat_slice = feat.as_slice().expect("standard layout");
    for_each_row_mut(&mut out, |r, row| {
        for t in 0..k {
            let nr = nt.row(r, t);
            if nr == NO_ROW {
                continue;
            }
            let src = &feat_slice[nr as usize * c..(nr as usize + 1) * c];
            row[t * c..(t + 1) * c].copy_from_slice(src);
        }
    });
    out
}

/// Transpose of [`gather_neighbors`]: folds an `M x (K*C)` gradient block
/// back onto features by gathering through the mirrored stencil.
pub fn scatter_neighbors_transpose(grad: ArrayView2<f64>, nt: &NeighborTable, c: usize) -> Array2<f64> {
    let m = grad.nrows();
    let k = nt.k;
    debug_assert_eq!(grad.ncols(), k * c);
    let mut out = Array2::zeros((m, c));
    let g = grad.to_owned();
    let g_slice = g.as_slice().expect("standard layout");
    for_each_row_mut(&mut out, |r, row| {
        for t in 0..k {
            // feature row r appears as tap t of point nr iff nr's stencil at
            // t lands on r, i.e. nr = r shifted by the mirrored offset
            let nr = nt.row(r, mirror_offset(t));
            if nr == NO_ROW {
                continue;
            }
            let src = &g_slice[nr as usize * (k * c) + t * c..nr as usize * (k * c) + (t + 1) * c];
            for (o, &s) in row.iter_mut().zip(src) {
                *o += s;
            }
        }
    });
    out
}

/// Saved intermediates of one [`lattice_conv`] call.
#[derive(Debug)]
pub struct ConvCtx {
    /// Per layer: the layer input after any neighborhood gather.
    inputs: Vec<Array2<f64>>,
    /// Per layer: pre-activation values.
    pre: Vec<Array2<f64>>,
    c_in: usize,
}

/// Sparse convolution over occupied lattice points. Every layer gathers
/// its `taps` stencil (zero-filling unoccupied neighbors), applies the
/// linear map and bias, then the activation.
pub fn lattice_conv(
    features: ArrayView2<f64>,
    nt: &NeighborTable,
    stack: &ConvStack,
    params: &ParamStore,
) -> Result<(Array2<f64>, ConvCtx)> {
    run_stack(features, Some(nt), stack, params)
}

/// Apply a stack of pointwise (`taps == 1`) layers; no stencil involved.
pub fn run_pointwise(
    features: ArrayView2<f64>,
    stack: &ConvStack,
    params: &ParamStore,
) -> Result<(Array2<f64>, ConvCtx)> {
    run_stack(features, None, stack, params)
}

fn run_stack(
    features: ArrayView2<f64>,
    nt: Option<&NeighborTable>,
    stack: &ConvStack,
    params: &ParamStore,
) -> Result<(Array2<f64>, ConvCtx)> {
    stack.validate(features.ncols(), params)?;
    let mut ctx = ConvCtx { inputs: Vec::new(), pre: Vec::new(), c_in: features.ncols() };
    let mut cur = features.to_owned();
    for layer in &stack.layers {
        let input = if layer.taps == 1 {
            cur
        } else {
            let nt = nt.ok_or_else(|| {
                Error::ShapeMismatch("spatial layer in a pointwise-only stack".into())
            })?;
            if layer.taps != nt.k {
                return Err(Error::ShapeMismatch(format!(
                    "layer taps {} do not match stencil size {}",
                    layer.taps, nt.k
                )));
            }
            gather_neighbors(cur.view(), nt)
        };
        let w = params.value(layer.weight);
        let b = params.value(layer.bias);
        let mut pre = matmul(input.view(), w.view());
        pre += b;
        let mut out = pre.clone();
        out.mapv_inplace(|x| layer.activation.apply(x));
        ctx.inputs.push(input);
        ctx.pre.push(pre);
        cur = out;
    }
    Ok((cur, ctx))
}

/// Reverse pass of [`lattice_conv`]: returns the feature gradient and
/// accumulates weight/bias gradients into the store.
pub fn lattice_conv_backward(
    ctx: &ConvCtx,
    nt: &NeighborTable,
    stack: &ConvStack,
    params: &mut ParamStore,
    grad_out: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    run_stack_backward(ctx, Some(nt), stack, params, grad_out)
}

/// Reverse pass of [`run_pointwise`].
pub fn run_pointwise_backward(
    ctx: &ConvCtx,
    stack: &ConvStack,
    params: &mut ParamStore,
    grad_out: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    run_stack_backward(ctx, None, stack, params, grad_out)
}

fn run_stack_backward(
    ctx: &ConvCtx,
    nt: Option<&NeighborTable>,
    stack: &ConvStack,
    params: &mut ParamStore,
    grad_out: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if stack.layers.len() != ctx.inputs.len() {
        return Err(Error::ShapeMismatch("conv context does not match stack".into()));
    }
    let mut grad = grad_out.to_owned();
    for (li, layer) in stack.layers.iter().enumerate().rev() {
        let pre = &ctx.pre[li];
        if grad.dim() != pre.dim() {
            return Err(Error::ShapeMismatch(format!(
                "conv backward layer {li}: grad {:?} vs pre {:?}",
                grad.dim(),
                pre.dim()
            )));
        }
        let mut grad_pre = grad;
        ndarray::Zip::from(&mut grad_pre).and(pre).for_each(|g, &p| {
            *g *= layer.activation.derivative(p);
        });
        // bias gradient: column sums of the activation-masked gradient
        let db = grad_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        *params.grad_mut(layer.bias) += &db;
        let dw = matmul_at_b(ctx.inputs[li].view(), grad_pre.view());
        *params.grad_mut(layer.weight) += &dw;
        let w = params.value(layer.weight);
        let grad_input = matmul(grad_pre.view(), w.t());
        grad = if layer.taps == 1 {
            grad_input
        } else {
            let nt = nt.expect("spatial layer validated in forward");
            let c = if li == 0 { ctx.c_in } else { params.value(stack.layers[li - 1].weight).ncols() };
            scatter_neighbors_transpose(grad_input.view(), nt, c)
        };
    }
    Ok(grad)
}
