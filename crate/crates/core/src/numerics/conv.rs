//! Dilated 1-D convolution with "same" zero padding.

use super::tensor::Tensor;
use crate::error::{Error, Result};

struct Geometry {
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    k: usize,
    dilation: usize,
    per_sample_kernel: bool,
    per_sample_bias: bool,
}

impl Geometry {
    fn pad(&self) -> isize {
        (self.dilation * (self.k - 1) / 2) as isize
    }

    fn kernel_offset(&self, b: usize) -> usize {
        if self.per_sample_kernel {
            b * self.c_out * self.c_in * self.k
        } else {
            0
        }
    }

    fn bias_offset(&self, b: usize) -> usize {
        if self.per_sample_bias {
            b * self.c_out
        } else {
            0
        }
    }

    /// Valid output range `[lo, hi)` for tap `j`, and the input shift.
    fn tap(&self, j: usize) -> (usize, usize, isize) {
        let shift = (j * self.dilation) as isize - self.pad();
        let t = self.len as isize;
        let lo = (-shift).clamp(0, t) as usize;
        let hi = (t - shift).clamp(0, t) as usize;
        (lo, hi.max(lo), shift)
    }
}

fn geometry(input: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<Geometry> {
    let (batch, c_in, len) = match input.shape() {
        [c, t] => (1, *c, *t),
        [b, c, t] => (*b, *c, *t),
        s => return Err(Error::Dimension(format!("conv1d input must be [C, T] or [B, C, T], got {s:?}"))),
    };
    let (per_sample_kernel, c_out, kc_in, k) = match kernel.shape() {
        [o, i, k] => (false, *o, *i, *k),
        [b, o, i, k] if input.rank() == 3 && *b == batch => (true, *o, *i, *k),
        s => return Err(Error::Dimension(format!("conv1d kernel shape {s:?} does not fit input {:?}", input.shape()))),
    };
    if kc_in != c_in {
        return Err(Error::Dimension(format!(
            "conv1d: input has {c_in} channels, kernel expects {kc_in}"
        )));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv1d kernel size must be odd, got {k}")));
    }
    if dilation == 0 {
        return Err(Error::Config("conv1d dilation must be positive".into()));
    }
    let per_sample_bias = match bias.shape() {
        [o] if *o == c_out => false,
        [b, o] if *o == c_out && *b == batch && input.rank() == 3 => true,
        s => return Err(Error::Dimension(format!("conv1d bias shape {s:?} vs {c_out} outputs"))),
    };
    Ok(Geometry {
        batch,
        c_in,
        c_out,
        len,
        k,
        dilation,
        per_sample_kernel,
        per_sample_bias,
    })
}

/// `out[c, t] = bias[c] + sum_{i, j} kernel[c, i, j] * x_padded[i, t + j * dilation]`
/// with `dilation * (k - 1) / 2` zeros on each side, so the time length is kept.
///
/// Accepts `[C_in, T]` or `[B, C_in, T]` input. The kernel is `[C_out, C_in, k]`
/// (shared) or `[B, C_out, C_in, k]` (one per batch element); the bias is
/// `[C_out]` or `[B, C_out]`.
pub fn conv1d(input: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let geo = geometry(input, kernel, bias, dilation)?;
    let x = input.to_vec();
    let w = kernel.to_vec();
    let bv = bias.to_vec();
    let Geometry { batch, c_in, c_out, len, k, .. } = geo;

    let mut y = vec![0.0; batch * c_out * len];
    for b in 0..batch {
        let wb = &w[geo.kernel_offset(b)..];
        let bb = &bv[geo.bias_offset(b)..];
        for co in 0..c_out {
            let out = &mut y[(b * c_out + co) * len..(b * c_out + co + 1) * len];
            out.iter_mut().for_each(|v| *v = bb[co]);
            for ci in 0..c_in {
                let xr = &x[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                for j in 0..k {
                    let wv = wb[(co * c_in + ci) * k + j];
                    let (lo, hi, shift) = geo.tap(j);
                    if lo == hi {
                        continue;
                    }
                    let src = &xr[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    out[lo..hi].iter_mut().zip(src).for_each(|(o, xv)| *o += wv * xv);
                }
            }
        }
    }

    let shape = if input.rank() == 2 { vec![c_out, len] } else { vec![batch, c_out, len] };
    let needs = [input.requires_grad(), kernel.requires_grad(), bias.requires_grad()];
    Ok(Tensor::from_op(
        shape,
        y,
        "conv1d",
        vec![input.clone(), kernel.clone(), bias.clone()],
        move |g| {
            let mut gx = needs[0].then(|| vec![0.0; x.len()]);
            let mut gw = needs[1].then(|| vec![0.0; w.len()]);
            let mut gb = needs[2].then(|| vec![0.0; bv.len()]);
            for b in 0..batch {
                let kw = geo.kernel_offset(b);
                let kb = geo.bias_offset(b);
                for co in 0..c_out {
                    let go = &g[(b * c_out + co) * len..(b * c_out + co + 1) * len];
                    if let Some(gb) = gb.as_mut() {
                        gb[kb + co] += go.iter().sum::<f64>();
                    }
                    for ci in 0..c_in {
                        let row = (b * c_in + ci) * len;
                        for j in 0..k {
                            let (lo, hi, shift) = geo.tap(j);
                            if lo == hi {
                                continue;
                            }
                            let (s_lo, s_hi) = ((lo as isize + shift) as usize, (hi as isize + shift) as usize);
                            let widx = kw + (co * c_in + ci) * k + j;
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += go[lo..hi]
                                    .iter()
                                    .zip(&x[row + s_lo..row + s_hi])
                                    .map(|(g, x)| g * x)
                                    .sum::<f64>();
                            }
                            if let Some(gx) = gx.as_mut() {
                                let wv = w[widx];
                                gx[row + s_lo..row + s_hi]
                                    .iter_mut()
                                    .zip(&go[lo..hi])
                                    .for_each(|(d, g)| *d += wv * g);
                            }
                        }
                    }
                }
            }
            vec![gx, gw, gb]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    /// Straight nested-loop reference over an explicitly padded input.
    fn oracle(x: &[f64], c_in: usize, t: usize, w: &[f64], c_out: usize, k: usize, b: &[f64], d: usize) -> Vec<f64> {
        let pad = d * (k - 1) / 2;
        let tp = t + 2 * pad;
        let mut padded = vec![0.0; c_in * tp];
        for i in 0..c_in {
            for s in 0..t {
                padded[i * tp + pad + s] = x[i * t + s];
            }
        }
        let mut out = vec![0.0; c_out * t];
        for c in 0..c_out {
            for s in 0..t {
                let mut acc = b[c];
                for i in 0..c_in {
                    for j in 0..k {
                        acc += w[(c * c_in + i) * k + j] * padded[i * tp + s + j * d];
                    }
                }
                out[c * t + s] = acc;
            }
        }
        out
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random(&mut rng, &[2, 3, 5]);
        let b = Tensor::from_vec(vec![0.7, -0.2], &[2]).unwrap();
        let y = conv1d(&Tensor::zeros(&[3, 9]), &w, &b, 2).unwrap().to_vec();
        assert!(y[..9].iter().all(|&v| v == 0.7));
        assert!(y[9..].iter().all(|&v| v == -0.2));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, &[3, 7]);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor::from_vec(eye, &[3, 3, 1]).unwrap();
        let y = conv1d(&x, &w, &Tensor::zeros(&[3]), 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[3, 8]);
        let w = random(&mut rng, &[2, 3, 3]);
        let b = random(&mut rng, &[2]);
        let y = conv1d(&x, &w, &b, 2).unwrap().to_vec();
        let expect = oracle(&x.to_vec(), 3, 8, &w.to_vec(), 2, 3, &b.to_vec(), 2);
        for (a, e) in y.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn per_sample_kernels_match_separate_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[2, 3, 10]);
        let w = random(&mut rng, &[2, 4, 3, 3]);
        let b = random(&mut rng, &[2, 4]);
        let y = conv1d(&x, &w, &b, 3).unwrap().to_vec();
        for s in 0..2 {
            let xs = x.narrow(0, s, 1).unwrap().reshape(&[3, 10]).unwrap();
            let ws = w.narrow(0, s, 1).unwrap().reshape(&[4, 3, 3]).unwrap();
            let bs = b.narrow(0, s, 1).unwrap().reshape(&[4]).unwrap();
            let ys = conv1d(&xs, &ws, &bs, 3).unwrap().to_vec();
            assert_eq!(&y[s * 40..(s + 1) * 40], &ys[..]);
        }
    }

    #[test]
    fn rejects_even_kernel_and_channel_mismatch() {
        let x = Tensor::zeros(&[3, 8]);
        assert!(matches!(
            conv1d(&x, &Tensor::zeros(&[2, 3, 4]), &Tensor::zeros(&[2]), 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            conv1d(&x, &Tensor::zeros(&[2, 4, 3]), &Tensor::zeros(&[2]), 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dilation_wider_than_signal_still_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[2, 3]);
        let w = random(&mut rng, &[1, 2, 3]);
        let b = random(&mut rng, &[1]);
        let y = conv1d(&x, &w, &b, 5).unwrap().to_vec();
        let expect = oracle(&x.to_vec(), 2, 3, &w.to_vec(), 1, 3, &b.to_vec(), 5);
        for (a, e) in y.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
