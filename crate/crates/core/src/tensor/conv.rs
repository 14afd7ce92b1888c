//! Direct 3D convolution kernels (cross-correlation, as in most DL frameworks).

use super::{numel, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Conv3dSpec {
    /// Stride along (depth, height, width).
    pub stride: [usize; 3],
    /// Zero padding along (depth, height, width).
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    pub fn new(stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self { stride, padding }
    }

    pub fn unit() -> Self {
        Self { stride: [1; 3], padding: [0; 3] }
    }

    /// Output extents for an input of `[n, c, d, h, w]` and kernel `[o, c, kd, kh, kw]`.
    pub fn output_shape(&self, input: &[usize], kernel: &[usize]) -> Result<[usize; 5]> {
        if input.len() != 5 || kernel.len() != 5 {
            return Err(TensorError::Dimension(format!(
                "conv3d expects 5-d input and kernel, got {input:?} and {kernel:?}"
            )));
        }
        if input[1] != kernel[1] {
            return Err(TensorError::Dimension(format!(
                "conv3d channel mismatch: input has {}, kernel expects {}",
                input[1], kernel[1]
            )));
        }
        if self.stride.contains(&0) {
            return Err(TensorError::Contract("conv3d stride must be positive".into()));
        }
        let mut out = [input[0], kernel[0], 0, 0, 0];
        for a in 0..3 {
            let ext = input[2 + a] + 2 * self.padding[a];
            let k = kernel[2 + a];
            if ext < k {
                return Err(TensorError::Dimension(format!(
                    "conv3d: padded extent {ext} smaller than kernel {k} on axis {a}"
                )));
            }
            out[2 + a] = (ext - k) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

struct Geometry {
    n: usize,
    c: usize,
    o: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    output: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

impl Geometry {
    fn new(input: &[usize], kernel: &[usize], spec: &Conv3dSpec) -> Result<Self> {
        let out = spec.output_shape(input, kernel)?;
        Ok(Self {
            n: input[0],
            c: input[1],
            o: kernel[0],
            input: [input[2], input[3], input[4]],
            kernel: [kernel[2], kernel[3], kernel[4]],
            output: [out[2], out[3], out[4]],
            stride: spec.stride,
            pad: spec.padding,
        })
    }

    /// Output positions `[lo, hi)` along `axis` whose tap `k` lands inside the input.
    fn valid_range(&self, axis: usize, k: usize) -> (usize, usize) {
        let (s, p, ext, out) = (self.stride[axis], self.pad[axis], self.input[axis], self.output[axis]);
        // need 0 <= o*s + k - p < ext
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if ext + p <= k { 0 } else { (ext + p - k).div_ceil(s).min(out) };
        (lo, hi.max(lo))
    }

    fn in_vol(&self) -> usize {
        self.input.iter().product()
    }

    fn out_vol(&self) -> usize {
        self.output.iter().product()
    }

    fn k_vol(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Calls `f(x_offset, y_offset)` over every (input, output) pair connected by tap
    /// `(kd, kh, kw)`, in row runs: `f(x_row_start, y_row_start, len)` where consecutive
    /// outputs advance the input by `stride[2]`.
    #[inline]
    fn for_each_run(&self, kd: usize, kh: usize, kw: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (d0, d1) = self.valid_range(0, kd);
        let (h0, h1) = self.valid_range(1, kh);
        let (w0, w1) = self.valid_range(2, kw);
        if w1 <= w0 {
            return;
        }
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        for od in d0..d1 {
            let id = od * self.stride[0] + kd - self.pad[0];
            for ohh in h0..h1 {
                let ihh = ohh * self.stride[1] + kh - self.pad[1];
                let iww = w0 * self.stride[2] + kw - self.pad[2];
                f((id * ih + ihh) * iw + iww, (od * oh + ohh) * ow + w0, w1 - w0);
            }
        }
    }
}

pub fn conv3d_forward(input: &Tensor, kernel: &Tensor, spec: &Conv3dSpec) -> Result<Tensor> {
    let g = Geometry::new(input.shape(), kernel.shape(), spec)?;
    let (x, k) = (input.data(), kernel.data());
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let sw = g.stride[2];
    let mut out = vec![0.0; g.n * g.o * ov];
    for n in 0..g.n {
        for o in 0..g.o {
            let y = &mut out[(n * g.o + o) * ov..(n * g.o + o + 1) * ov];
            for c in 0..g.c {
                let xc = &x[(n * g.c + c) * iv..(n * g.c + c + 1) * iv];
                let kc = &k[(o * g.c + c) * kv..(o * g.c + c + 1) * kv];
                for kd in 0..g.kernel[0] {
                    for kh in 0..g.kernel[1] {
                        for kw in 0..g.kernel[2] {
                            let wv = kc[(kd * g.kernel[1] + kh) * g.kernel[2] + kw];
                            if wv == 0.0 {
                                continue;
                            }
                            g.for_each_run(kd, kh, kw, |xs, ys, len| {
                                let yr = &mut y[ys..ys + len];
                                if sw == 1 {
                                    for (yv, xv) in yr.iter_mut().zip(&xc[xs..xs + len]) {
                                        *yv += wv * xv;
                                    }
                                } else {
                                    for (j, yv) in yr.iter_mut().enumerate() {
                                        *yv += wv * xc[xs + j * sw];
                                    }
                                }
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.n, g.o, g.output[0], g.output[1], g.output[2]], out))
}

/// Gradient with respect to the convolution input.
pub(crate) fn conv3d_grad_input(
    dy: &[f64],
    kernel: &Tensor,
    input_shape: &[usize],
    spec: &Conv3dSpec,
) -> Result<Vec<f64>> {
    let g = Geometry::new(input_shape, kernel.shape(), spec)?;
    let k = kernel.data();
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let sw = g.stride[2];
    let mut dx = vec![0.0; numel(input_shape)];
    for n in 0..g.n {
        for c in 0..g.c {
            let dxc = &mut dx[(n * g.c + c) * iv..(n * g.c + c + 1) * iv];
            for o in 0..g.o {
                let dyo = &dy[(n * g.o + o) * ov..(n * g.o + o + 1) * ov];
                let kc = &k[(o * g.c + c) * kv..(o * g.c + c + 1) * kv];
                for kd in 0..g.kernel[0] {
                    for kh in 0..g.kernel[1] {
                        for kw in 0..g.kernel[2] {
                            let wv = kc[(kd * g.kernel[1] + kh) * g.kernel[2] + kw];
                            if wv == 0.0 {
                                continue;
                            }
                            g.for_each_run(kd, kh, kw, |xs, ys, len| {
                                let yr = &dyo[ys..ys + len];
                                if sw == 1 {
                                    for (xv, yv) in dxc[xs..xs + len].iter_mut().zip(yr) {
                                        *xv += wv * yv;
                                    }
                                } else {
                                    for (j, yv) in yr.iter().enumerate() {
                                        dxc[xs + j * sw] += wv * yv;
                                    }
                                }
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Gradient with respect to the convolution kernel.
pub(crate) fn conv3d_grad_kernel(
    dy: &[f64],
    input: &Tensor,
    kernel_shape: &[usize],
    spec: &Conv3dSpec,
) -> Result<Vec<f64>> {
    let g = Geometry::new(input.shape(), kernel_shape, spec)?;
    let x = input.data();
    let (iv, ov, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
    let sw = g.stride[2];
    let mut dk = vec![0.0; numel(kernel_shape)];
    for o in 0..g.o {
        for c in 0..g.c {
            let dkc = &mut dk[(o * g.c + c) * kv..(o * g.c + c + 1) * kv];
            for n in 0..g.n {
                let dyo = &dy[(n * g.o + o) * ov..(n * g.o + o + 1) * ov];
                let xc = &x[(n * g.c + c) * iv..(n * g.c + c + 1) * iv];
                for kd in 0..g.kernel[0] {
                    for kh in 0..g.kernel[1] {
                        for kw in 0..g.kernel[2] {
                            let mut acc = 0.0;
                            g.for_each_run(kd, kh, kw, |xs, ys, len| {
                                let yr = &dyo[ys..ys + len];
                                if sw == 1 {
                                    acc += yr.iter().zip(&xc[xs..xs + len]).map(|(a, b)| a * b).sum::<f64>();
                                } else {
                                    for (j, yv) in yr.iter().enumerate() {
                                        acc += yv * xc[xs + j * sw];
                                    }
                                }
                            });
                            dkc[(kd * g.kernel[1] + kh) * g.kernel[2] + kw] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(dk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    /// Nested-loop reference with explicit bounds checks on every tap.
    fn naive(x: &Tensor, k: &Tensor, spec: &Conv3dSpec) -> Tensor {
        let [n, c, d, h, w] = <[usize; 5]>::try_from(x.shape()).unwrap();
        let [o, _, kd, kh, kw] = <[usize; 5]>::try_from(k.shape()).unwrap();
        let out = spec.output_shape(x.shape(), k.shape()).unwrap();
        let mut y = vec![0.0; out.iter().product()];
        let xi = |a: usize, b: usize, i: isize, j: isize, l: isize| -> f64 {
            if i < 0 || j < 0 || l < 0 || i >= d as isize || j >= h as isize || l >= w as isize {
                0.0
            } else {
                x.data()[(((a * c + b) * d + i as usize) * h + j as usize) * w + l as usize]
            }
        };
        for b in 0..n {
            for oc in 0..o {
                for od in 0..out[2] {
                    for oh in 0..out[3] {
                        for ow in 0..out[4] {
                            let mut acc = 0.0;
                            for ic in 0..c {
                                for a in 0..kd {
                                    for bb in 0..kh {
                                        for cc in 0..kw {
                                            let i = (od * spec.stride[0] + a) as isize - spec.padding[0] as isize;
                                            let j = (oh * spec.stride[1] + bb) as isize - spec.padding[1] as isize;
                                            let l = (ow * spec.stride[2] + cc) as isize - spec.padding[2] as isize;
                                            acc += xi(b, ic, i, j, l)
                                                * k.data()[(((oc * c + ic) * kd + a) * kh + bb) * kw + cc];
                                        }
                                    }
                                }
                            }
                            y[(((b * o + oc) * out[2] + od) * out[3] + oh) * out[4] + ow] = acc;
                        }
                    }
                }
            }
        }
        Tensor::new(&out, y).unwrap()
    }

    #[test]
    fn identity_kernel_returns_input() {
        let mut rng = seeded_rng(1);
        let x = Tensor::uniform(&[1, 1, 2, 3, 4], -1.0, 1.0, &mut rng);
        let k = Tensor::ones(&[1, 1, 1, 1, 1]);
        let y = conv3d_forward(&x, &k, &Conv3dSpec::unit()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_counts_eight() {
        let x = Tensor::ones(&[1, 1, 2, 2, 2]);
        let k = Tensor::ones(&[1, 1, 2, 2, 2]);
        let y = conv3d_forward(&x, &k, &Conv3dSpec::unit()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[8.0]);
    }

    #[test]
    fn random_conv_matches_nested_loop() {
        let mut rng = seeded_rng(7);
        let specs = [
            Conv3dSpec::new([1, 1, 1], [0, 0, 0]),
            Conv3dSpec::new([2, 2, 2], [1, 1, 1]),
            Conv3dSpec::new([1, 2, 3], [0, 2, 1]),
            Conv3dSpec::new([2, 4, 4], [0, 0, 0]),
        ];
        for spec in specs {
            let x = Tensor::uniform(&[2, 3, 5, 9, 10], -1.0, 1.0, &mut rng);
            let k = Tensor::uniform(&[4, 3, 2, 3, 4], -1.0, 1.0, &mut rng);
            let got = conv3d_forward(&x, &k, &spec).unwrap();
            let want = naive(&x, &k, &spec);
            assert_eq!(got.shape(), want.shape());
            let diff = got.zip_map(&want, |a, b| (a - b).abs()).unwrap().max_abs();
            assert!(diff < 1e-10, "{spec:?}: {diff}");
        }
    }

    #[test]
    fn output_extent_formula() {
        let spec = Conv3dSpec::new([2, 3, 1], [1, 0, 2]);
        let out = spec.output_shape(&[1, 2, 7, 10, 5], &[3, 2, 3, 4, 5]).unwrap();
        assert_eq!(out, [1, 3, (7 + 2 - 3) / 2 + 1, (10 - 4) / 3 + 1, (5 + 4 - 5) + 1]);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 2]);
        let k = Tensor::zeros(&[1, 3, 1, 1, 1]);
        assert!(matches!(conv3d_forward(&x, &k, &Conv3dSpec::unit()), Err(TensorError::Dimension(_))));
    }
}
