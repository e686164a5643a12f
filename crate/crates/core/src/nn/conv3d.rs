//! 3D cross-correlation via im2col and GEMM.

use crate::error::{shape_err, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

use super::LayerSpec;

/// Resolved extents of one conv3d application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub input: [usize; 3],
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(spec: &LayerSpec, input_dims: &[usize]) -> Result<Self> {
        let LayerSpec::Conv3d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } = *spec
        else {
            return Err(shape_err(format!("{} is not a conv3d layer", spec.kind())));
        };
        let out = spec.output_dims(input_dims)?;
        Ok(Self {
            batch: input_dims[0],
            in_channels,
            input: [input_dims[2], input_dims[3], input_dims[4]],
            out_channels,
            kernel,
            stride,
            padding,
            output: [out[2], out[3], out[4]],
        })
    }

    /// Rows of the column matrix: `C * kt * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Columns of the column matrix: `T' * H' * W'`.
    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        vec![
            self.batch,
            self.out_channels,
            self.output[0],
            self.output[1],
            self.output[2],
        ]
    }

    /// Input coordinate hit by output position `o` and kernel tap `k` on `axis`.
    #[inline]
    fn source(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride[axis] + k) as isize - self.padding[axis] as isize;
        (pos >= 0 && (pos as usize) < self.input[axis]).then_some(pos as usize)
    }

    /// Visits every (column-matrix element, input element) pair of one sample.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, Option<usize>)) {
        let [kt, kh, kw] = self.kernel;
        let [ot, oh, ow] = self.output;
        let [_, ih, iw] = self.input;
        let vol = self.in_volume();
        let mut idx = 0;
        for c in 0..self.in_channels {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        for t in 0..ot {
                            let st = self.source(0, t, dt);
                            for h in 0..oh {
                                let sh = st.and(self.source(1, h, dh));
                                for w in 0..ow {
                                    let src = match (st, sh, self.source(2, w, dw)) {
                                        (Some(a), Some(b), Some(x)) => {
                                            Some(c * vol + (a * ih + b) * iw + x)
                                        }
                                        _ => None,
                                    };
                                    f(idx, src);
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, sample: &[T], cols: &mut [T]) {
        self.for_each_tap(|i, src| cols[i] = src.map_or(T::zero(), |s| sample[s]));
    }

    fn col2im<T: Scalar>(&self, cols: &[T], sample_grad: &mut [T]) {
        self.for_each_tap(|i, src| {
            if let Some(s) = src {
                sample_grad[s] = sample_grad[s] + cols[i];
            }
        });
    }
}

fn check_params<T: Scalar>(geo: &ConvGeometry, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let [kt, kh, kw] = geo.kernel;
    let want = [geo.out_channels, geo.in_channels, kt, kh, kw];
    if weight.dims() != want {
        return Err(shape_err(format!(
            "conv3d weight {:?}, expected {want:?}",
            weight.dims()
        )));
    }
    if bias.dims() != [geo.out_channels] {
        return Err(shape_err(format!(
            "conv3d bias {:?}, expected [{}]",
            bias.dims(),
            geo.out_channels
        )));
    }
    Ok(())
}

/// Cross-correlates `input` `[N,C,T,H,W]` with `weight` `[O,C,kt,kh,kw]` and adds `bias`.
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &LayerSpec,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let geo = ConvGeometry::new(spec, input.dims())?;
    check_params(&geo, weight, bias)?;
    let (k, p, o) = (geo.patch_len(), geo.out_positions(), geo.out_channels);
    let in_len = geo.in_channels * geo.in_volume();
    let mut out = Tensor::zeros(&geo.output_dims())?;
    let mut cols = vec![T::zero(); k * p];
    for n in 0..geo.batch {
        geo.im2col(&input.data()[n * in_len..(n + 1) * in_len], &mut cols);
        let dst = &mut out.data_mut()[n * o * p..(n + 1) * o * p];
        for (row, &b) in dst.chunks_mut(p).zip(bias.data()) {
            row.fill(b);
        }
        gemm(
            MatRef::new(weight.data(), o, k),
            MatRef::new(&cols, k, p),
            T::one(),
            dst,
        );
    }
    Ok(out)
}

/// Gradients of a conv3d application: `(d_weight, d_bias, d_input)`.
///
/// `d_input` is only computed when `need_input_grad` is set.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &LayerSpec,
    weight: &Tensor<T>,
    d_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
    let geo = ConvGeometry::new(spec, input.dims())?;
    if d_out.dims() != geo.output_dims().as_slice() {
        return Err(shape_err(format!(
            "conv3d output gradient {:?}, expected {:?}",
            d_out.dims(),
            geo.output_dims()
        )));
    }
    let (k, p, o) = (geo.patch_len(), geo.out_positions(), geo.out_channels);
    let in_len = geo.in_channels * geo.in_volume();
    let mut d_weight = Tensor::zeros(weight.dims())?;
    let mut d_bias = Tensor::zeros(&[o])?;
    let mut d_input = if need_input_grad {
        Some(Tensor::zeros(input.dims())?)
    } else {
        None
    };
    let mut cols = vec![T::zero(); k * p];
    for n in 0..geo.batch {
        let dy = &d_out.data()[n * o * p..(n + 1) * o * p];
        for (db, row) in d_bias.data_mut().iter_mut().zip(dy.chunks(p)) {
            *db = row.iter().fold(*db, |a, &v| a + v);
        }
        geo.im2col(&input.data()[n * in_len..(n + 1) * in_len], &mut cols);
        gemm(
            MatRef::new(dy, o, p),
            MatRef::t(&cols, k, p),
            T::one(),
            d_weight.data_mut(),
        );
        if let Some(dx) = d_input.as_mut() {
            gemm(
                MatRef::t(weight.data(), o, k),
                MatRef::new(dy, o, p),
                T::zero(),
                &mut cols,
            );
            geo.col2im(&cols, &mut dx.data_mut()[n * in_len..(n + 1) * in_len]);
        }
    }
    Ok((d_weight, d_bias, d_input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorND;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop evaluation of the padded cross-correlation.
    fn naive_conv(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &Tensor<f64>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Tensor<f64> {
        let [n, c, t, h, wd] = [
            x.dims()[0],
            x.dims()[1],
            x.dims()[2],
            x.dims()[3],
            x.dims()[4],
        ];
        let [o, _, kt, kh, kw] = [
            w.dims()[0],
            w.dims()[1],
            w.dims()[2],
            w.dims()[3],
            w.dims()[4],
        ];
        let ot = (t + 2 * pad[0] - kt) / stride[0] + 1;
        let oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
        let ow = (wd + 2 * pad[2] - kw) / stride[2] + 1;
        let mut out = Tensor::<f64>::zeros(&[n, o, ot, oh, ow]).unwrap();
        for ni in 0..n {
            for oi in 0..o {
                for a in 0..ot {
                    for bb in 0..oh {
                        for cc in 0..ow {
                            let mut acc = b.data()[oi];
                            for ci in 0..c {
                                for i in 0..kt {
                                    for j in 0..kh {
                                        for k in 0..kw {
                                            let ti = (a * stride[0] + i) as isize - pad[0] as isize;
                                            let hi =
                                                (bb * stride[1] + j) as isize - pad[1] as isize;
                                            let wi =
                                                (cc * stride[2] + k) as isize - pad[2] as isize;
                                            if ti < 0
                                                || hi < 0
                                                || wi < 0
                                                || ti >= t as isize
                                                || hi >= h as isize
                                                || wi >= wd as isize
                                            {
                                                continue;
                                            }
                                            acc += x.get(&[
                                                ni,
                                                ci,
                                                ti as usize,
                                                hi as usize,
                                                wi as usize,
                                            ]) * w.get(&[oi, ci, i, j, k]);
                                        }
                                    }
                                }
                            }
                            out.set(&[ni, oi, a, bb, cc], acc);
                        }
                    }
                }
            }
        }
        out
    }

    fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn impulse_identity_kernel() {
        let spec = LayerSpec::Conv3d {
            in_channels: 1,
            out_channels: 1,
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        };
        let mut x = TensorND::zeros(&[1, 1, 3, 3, 3]).unwrap();
        x.set(&[0, 0, 1, 2, 0], 1.0);
        let w = TensorND::full(&[1, 1, 1, 1, 1], 1.0).unwrap();
        let b = TensorND::zeros(&[1]).unwrap();
        assert_eq!(conv3d_forward(&x, &spec, &w, &b).unwrap(), x);
    }

    #[test]
    fn all_ones_sum() {
        let spec = LayerSpec::Conv3d {
            in_channels: 1,
            out_channels: 1,
            kernel: [2, 2, 2],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        };
        let x = TensorND::full(&[1, 1, 2, 2, 2], 1.0).unwrap();
        let w = TensorND::full(&[1, 1, 2, 2, 2], 1.0).unwrap();
        let b = TensorND::zeros(&[1]).unwrap();
        let y = conv3d_forward(&x, &spec, &w, &b).unwrap();
        assert_eq!(y.dims(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[8.0]);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[2, 3, 6, 8, 8], &mut rng);
        let w = random(&[4, 3, 3, 3, 3], &mut rng);
        let b = random(&[4], &mut rng);
        let spec = LayerSpec::conv3d(3, 4, [2, 2, 2]);
        let expected = naive_conv(&x, &w, &b, [2, 2, 2], [1, 1, 1]);
        let got = conv3d_forward(&x.cast::<f32>(), &spec, &w.cast(), &b.cast()).unwrap();
        assert_eq!(got.dims(), expected.dims());
        for (g, e) in got.data().iter().zip(expected.data()) {
            assert!((*g as f64 - e).abs() < 1e-5, "{g} vs {e}");
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), dy> == <x, conv^T(dy)> and == <w, dW(x, dy)> when bias is zero.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = LayerSpec::conv3d(2, 3, [1, 2, 2]);
        let x = random(&[2, 2, 4, 5, 6], &mut rng);
        let w = random(&[3, 2, 3, 3, 3], &mut rng);
        let zero_b = Tensor::<f64>::zeros(&[3]).unwrap();
        let y = conv3d_forward(&x, &spec, &w, &zero_b).unwrap();
        let dy = random(y.dims(), &mut rng);
        let (dw, db, dx) = conv3d_backward(&x, &spec, &w, &dy, true).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| p * q)
                .sum::<f64>()
        };
        let lhs = dot(&y, &dy);
        assert!((lhs - dot(&x, dx.as_ref().unwrap())).abs() < 1e-9 * lhs.abs().max(1.0));
        assert!((lhs - dot(&w, &dw)).abs() < 1e-9 * lhs.abs().max(1.0));
        for o in 0..3 {
            let mut s = 0.0;
            for n in 0..2 {
                let per = y.len() / 6;
                s += dy.data()[(n * 3 + o) * per..(n * 3 + o + 1) * per]
                    .iter()
                    .sum::<f64>();
            }
            assert!((db.data()[o] - s).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_weight_shape() {
        let spec = LayerSpec::conv3d(3, 4, [1, 1, 1]);
        let x = TensorND::zeros(&[1, 3, 4, 4, 4]).unwrap();
        let w = TensorND::zeros(&[4, 2, 3, 3, 3]).unwrap();
        let b = TensorND::zeros(&[4]).unwrap();
        assert!(conv3d_forward(&x, &spec, &w, &b).is_err());
    }
}
