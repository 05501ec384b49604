//! Elementwise maps, reductions, shape plumbing, matmul/dense and softmax.

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// `(outer, extent, inner)` such that a flat index is `(o * extent + i) * inner + j`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_axis(t: &Tensor, axis: usize, op: &str) -> Result<()> {
    if axis >= t.rank() {
        return Err(Error::Dimension(format!(
            "{op}: axis {axis} out of range for shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl Tensor {
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        // derivative expressed through (input, output)
        df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Tensor {
        let x = self.to_vec();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let y_saved = y.clone();
        Tensor::from_op(self.shape().to_vec(), y, op, vec![self.clone()], move |g| {
            let gx = g
                .iter()
                .zip(x.iter().zip(&y_saved))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn relu(&self) -> Tensor {
        self.unary("relu", |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary("sigmoid", |v| 1.0 / (1.0 + (-v).exp()), |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Tensor {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.unary("scale", move |v| v * s, move |_, _| s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "add")?;
        let y = self.data().iter().zip(other.data().iter()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            "add",
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "sub")?;
        let y = self.data().iter().zip(other.data().iter()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            "sub",
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "mul")?;
        let a = self.to_vec();
        let b = other.to_vec();
        let y = a.iter().zip(&b).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            "mul",
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = g.iter().zip(&b).map(|(g, b)| g * b).collect();
                let gb = g.iter().zip(&a).map(|(g, a)| g * a).collect();
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let s = self.data().iter().sum();
        Tensor::from_op(Vec::new(), vec![s], "sum", vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis(self, axis, "mean_axis")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..len {
                let row = &x[(o * len + i) * inner..(o * len + i + 1) * inner];
                let acc = &mut y[o * inner..(o + 1) * inner];
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        }
        let inv = 1.0 / len as f64;
        y.iter_mut().for_each(|v| *v *= inv);
        drop(x);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op(shape, y, "mean_axis", vec![self.clone()], move |g| {
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for i in 0..len {
                    let dst = &mut gx[(o * len + i) * inner..(o * len + i + 1) * inner];
                    dst.iter_mut()
                        .zip(&g[o * inner..(o + 1) * inner])
                        .for_each(|(d, g)| *d = g * inv);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "reshape {:?} -> {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), "reshape", vec![self.clone()], |g| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Numpy-style broadcast to `shape` (source dims align to the right,
    /// extents must match or be 1).
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        let src = self.shape();
        if src.len() > shape.len() {
            return Err(Error::Dimension(format!("broadcast {src:?} -> {shape:?}")));
        }
        let pad = shape.len() - src.len();
        let mut src_strides = vec![0usize; shape.len()];
        let mut stride = 1;
        for d in (0..src.len()).rev() {
            let target = shape[pad + d];
            if src[d] == target {
                src_strides[pad + d] = stride;
            } else if src[d] != 1 {
                return Err(Error::Dimension(format!("broadcast {src:?} -> {shape:?}")));
            }
            stride *= src[d];
        }
        let n_out = numel(shape);
        let n_src = self.numel();
        let index: Vec<usize> = (0..n_out)
            .map(|mut flat| {
                let mut s = 0;
                for d in (0..shape.len()).rev() {
                    s += (flat % shape[d]) * src_strides[d];
                    flat /= shape[d];
                }
                s
            })
            .collect();
        let x = self.data();
        let y = index.iter().map(|&i| x[i]).collect();
        drop(x);
        Ok(Tensor::from_op(shape.to_vec(), y, "broadcast", vec![self.clone()], move |g| {
            let mut gx = vec![0.0; n_src];
            for (gv, &i) in g.iter().zip(&index) {
                gx[i] += gv;
            }
            vec![Some(gx)]
        }))
    }

    /// Contiguous slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis(self, axis, "narrow")?;
        let (outer, extent, inner) = axis_split(self.shape(), axis);
        if len == 0 || start + len > extent {
            return Err(Error::Dimension(format!(
                "narrow [{start}, {}) out of extent {extent}",
                start + len
            )));
        }
        let x = self.data();
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            y.extend_from_slice(&x[(o * extent + start) * inner..(o * extent + start + len) * inner]);
        }
        drop(x);
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(shape, y, "narrow", vec![self.clone()], move |g| {
            let mut gx = vec![0.0; outer * extent * inner];
            for o in 0..outer {
                gx[(o * extent + start) * inner..(o * extent + start + len) * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Softmax along `axis`, shifted by the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis(self, axis, "softmax")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let max = (0..len).map(|i| x[at(i)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for i in 0..len {
                    let e = (x[at(i)] - max).exp();
                    y[at(i)] = e;
                    total += e;
                }
                for i in 0..len {
                    y[at(i)] /= total;
                }
            }
        }
        drop(x);
        let y_saved = y.clone();
        Ok(Tensor::from_op(self.shape().to_vec(), y, "softmax", vec![self.clone()], move |g| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let at = |i: usize| (o * len + i) * inner + j;
                    let dot: f64 = (0..len).map(|i| g[at(i)] * y_saved[at(i)]).sum();
                    for i in 0..len {
                        gx[at(i)] = y_saved[at(i)] * (g[at(i)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// `[M, N] x [N, P] -> [M, P]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a_shape, b_shape) = (self.shape(), other.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(Error::Dimension(format!("matmul {a_shape:?} x {b_shape:?}")));
        }
        let (m, n, p) = (a_shape[0], a_shape[1], b_shape[1]);
        let a = self.to_vec();
        let b = other.to_vec();
        let mut y = vec![0.0; m * p];
        for i in 0..m {
            let row = &mut y[i * p..(i + 1) * p];
            for k in 0..n {
                let av = a[i * n + k];
                row.iter_mut().zip(&b[k * p..(k + 1) * p]).for_each(|(r, bv)| *r += av * bv);
            }
        }
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(
            vec![m, p],
            y,
            "matmul",
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = need_a.then(|| {
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        for k in 0..n {
                            ga[i * n + k] = g[i * p..(i + 1) * p]
                                .iter()
                                .zip(&b[k * p..(k + 1) * p])
                                .map(|(g, b)| g * b)
                                .sum();
                        }
                    }
                    ga
                });
                let gb = need_b.then(|| {
                    let mut gb = vec![0.0; n * p];
                    for i in 0..m {
                        for k in 0..n {
                            let av = a[i * n + k];
                            gb[k * p..(k + 1) * p]
                                .iter_mut()
                                .zip(&g[i * p..(i + 1) * p])
                                .for_each(|(d, g)| *d += av * g);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// Affine map along the last axis: `input[..., N] . weight[M, N]^T + bias[M]`.
    pub fn dense(&self, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let w_shape = weight.shape();
        let n_in = *self.shape().last().unwrap_or(&0);
        if w_shape.len() != 2 || w_shape[1] != n_in || self.rank() == 0 {
            return Err(Error::Dimension(format!(
                "dense: input {:?} vs weight {w_shape:?}",
                self.shape()
            )));
        }
        let n_out = w_shape[0];
        if bias.shape() != [n_out] {
            return Err(Error::Dimension(format!(
                "dense: bias {:?} vs {n_out} outputs",
                bias.shape()
            )));
        }
        let rows = self.numel() / n_in;
        let x = self.to_vec();
        let w = weight.to_vec();
        let bv = bias.to_vec();
        let mut y = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let dot: f64 = xr.iter().zip(&w[o * n_in..(o + 1) * n_in]).map(|(a, b)| a * b).sum();
                y[r * n_out + o] = bv[o] + dot;
            }
        }
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n_out;
        let (need_x, need_w, need_b) = (self.requires_grad(), weight.requires_grad(), bias.requires_grad());
        Ok(Tensor::from_op(
            shape,
            y,
            "dense",
            vec![self.clone(), weight.clone(), bias.clone()],
            move |g| {
                let gx = need_x.then(|| {
                    let mut gx = vec![0.0; rows * n_in];
                    for r in 0..rows {
                        let dst = &mut gx[r * n_in..(r + 1) * n_in];
                        for o in 0..n_out {
                            let gv = g[r * n_out + o];
                            dst.iter_mut()
                                .zip(&w[o * n_in..(o + 1) * n_in])
                                .for_each(|(d, w)| *d += gv * w);
                        }
                    }
                    gx
                });
                let gw = need_w.then(|| {
                    let mut gw = vec![0.0; n_out * n_in];
                    for r in 0..rows {
                        let xr = &x[r * n_in..(r + 1) * n_in];
                        for o in 0..n_out {
                            let gv = g[r * n_out + o];
                            gw[o * n_in..(o + 1) * n_in]
                                .iter_mut()
                                .zip(xr)
                                .for_each(|(d, x)| *d += gv * x);
                        }
                    }
                    gw
                });
                let gb = need_b.then(|| {
                    let mut gb = vec![0.0; n_out];
                    for r in 0..rows {
                        gb.iter_mut().zip(&g[r * n_out..(r + 1) * n_out]).for_each(|(d, g)| *d += g);
                    }
                    gb
                });
                vec![gx, gw, gb]
            },
        ))
    }
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("concat of zero tensors".into()))?;
    check_axis(first, axis, "concat")?;
    for p in parts {
        let compatible = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::Dimension(format!(
                "concat: {:?} incompatible with {:?} on axis {axis}",
                p.shape(),
                first.shape()
            )));
        }
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total: usize = extents.iter().sum();
    let mut y = Vec::with_capacity(outer * total * inner);
    let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
    for o in 0..outer {
        for (d, &e) in datas.iter().zip(&extents) {
            y.extend_from_slice(&d[o * e * inner..(o + 1) * e * inner]);
        }
    }
    drop(datas);
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_op(shape, y, "concat", parts.to_vec(), move |g| {
        let mut grads: Vec<Vec<f64>> = extents.iter().map(|e| Vec::with_capacity(outer * e * inner)).collect();
        for o in 0..outer {
            let mut offset = o * total * inner;
            for (gp, &e) in grads.iter_mut().zip(&extents) {
                gp.extend_from_slice(&g[offset..offset + e * inner]);
                offset += e * inner;
            }
        }
        grads.into_iter().map(Some).collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn softmax_uniform_logits() {
        let y = t(&[0.0; 4], &[4]).softmax(0).unwrap();
        assert_eq!(y.to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let y = t(&[1000.0, 1000.0 + 2f64.ln()], &[2]).softmax(0).unwrap().to_vec();
        assert!((y[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((y[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn relu_clamps_negatives() {
        assert_eq!(t(&[-1.0, 0.0, 2.0], &[3]).relu().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_hand_arithmetic() {
        let x = t(&[1.0, 2.0], &[2]);
        let w = t(&[1.0, 1.0, 1.0, -1.0], &[2, 2]);
        let b = t(&[0.0, 0.0], &[2]);
        assert_eq!(x.dense(&w, &b).unwrap().to_vec(), vec![3.0, -1.0]);
    }

    #[test]
    fn dense_identity() {
        let x = t(&[0.5, -1.5, 2.0, 3.0, 4.0, 5.0], &[2, 3]);
        let w = t(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[3, 3]);
        let b = Tensor::zeros(&[3]);
        assert_eq!(x.dense(&w, &b).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn dense_rejects_extent_mismatch() {
        let x = t(&[1.0, 2.0, 3.0], &[3]);
        let w = Tensor::zeros(&[2, 2]);
        assert!(matches!(x.dense(&w, &Tensor::zeros(&[2])), Err(Error::Dimension(_))));
    }

    #[test]
    fn concat_and_narrow_round_trip() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t(&[5.0, 6.0], &[2, 1]);
        let c = concat(&[a.clone(), b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.narrow(1, 0, 2).unwrap().to_vec(), a.to_vec());
    }

    #[test]
    fn broadcast_repeats_rows_and_sums_back() {
        let s = Tensor::parameter(vec![1.0, 2.0], &[2, 1]).unwrap();
        let y = s.broadcast_to(&[3, 2, 4]).unwrap();
        assert_eq!(y.shape(), &[3, 2, 4]);
        assert_eq!(&y.to_vec()[..8], &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        y.sum().backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![12.0, 12.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let x = Tensor::parameter(vec![3.0], &[1]).unwrap();
        x.add(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn sum_grad_is_ones() {
        let x = Tensor::parameter(vec![0.3; 6], &[2, 3]).unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn relu_grad_at_mixed_signs() {
        let x = Tensor::parameter(vec![-1.0, 2.0], &[2]).unwrap();
        x.relu().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0]);
    }
}
