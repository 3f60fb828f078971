//! 2-D convolution kernels: im2col + GEMM for dense convs, direct loops for
//! depthwise convs (where per-channel GEMMs would be all overhead).

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Standard conv with "same" padding at stride 1, halving at stride 2.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: (kernel - 1) / 2,
            dilation: 1,
            groups: 1,
        }
    }

    /// Depthwise conv (one filter per channel); "same" padding for the
    /// effective (dilated) kernel extent.
    pub fn depthwise(channels: usize, kernel: usize, stride: usize, dilation: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel,
            stride,
            padding: dilation * (kernel - 1) / 2,
            dilation,
            groups: channels,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 1,
            stride,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.in_channels == self.out_channels
    }

    /// 1x1, stride 1, dense: convolution degenerates to a channel matmul.
    pub fn is_unit(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0 && self.groups == 1
    }

    pub fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.padding - self.dilation * (self.kernel - 1) - 1) / self.stride + 1
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (self.out_dim(h), self.out_dim(w))
    }

    /// Weight tensor shape `[Cout, Cin/groups, k, k]`.
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        ]
    }

    pub fn validate(&self) -> Result<(), Error> {
        let supported = self.groups == 1 || self.is_depthwise();
        if !supported || self.in_channels % self.groups != 0 {
            return Err(Error::UnsupportedGroups {
                groups: self.groups,
                in_channels: self.in_channels,
                out_channels: self.out_channels,
            });
        }
        Ok(())
    }
}

/// Gather conv patches of one sample into a `[Cin*k*k, Hout*Wout]` matrix.
fn im2col<E: Scalar>(
    x: &[E],
    c: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    cols: &mut [E],
) {
    let (ho, wo) = spec.out_hw(h, w);
    let k = spec.kernel;
    let span = ho * wo;
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let base = row * span;
                for oh in 0..ho {
                    let ih = (oh * spec.stride + kh * spec.dilation) as isize
                        - spec.padding as isize;
                    if ih < 0 || ih >= h as isize {
                        cols[base + oh * wo..base + (oh + 1) * wo].fill(E::zero());
                        continue;
                    }
                    let x_row = (ci * h + ih as usize) * w;
                    for ow in 0..wo {
                        let iw = (ow * spec.stride + kw * spec.dilation) as isize
                            - spec.padding as isize;
                        cols[base + oh * wo + ow] = if iw < 0 || iw >= w as isize {
                            E::zero()
                        } else {
                            x[x_row + iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back to input layout (adjoint of `im2col`).
fn col2im_add<E: Scalar>(
    cols: &[E],
    c: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    dx: &mut [E],
) {
    let (ho, wo) = spec.out_hw(h, w);
    let k = spec.kernel;
    let span = ho * wo;
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let base = row * span;
                for oh in 0..ho {
                    let ih = (oh * spec.stride + kh * spec.dilation) as isize
                        - spec.padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let x_row = (ci * h + ih as usize) * w;
                    for ow in 0..wo {
                        let iw = (ow * spec.stride + kw * spec.dilation) as isize
                            - spec.padding as isize;
                        if iw >= 0 && iw < w as isize {
                            dx[x_row + iw as usize] =
                                dx[x_row + iw as usize] + cols[base + oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Forward conv. Returns the output and, for the GEMM path, the per-sample
/// column matrices saved for the backward pass.
pub fn conv2d_forward<E: Scalar>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    spec: &ConvSpec,
) -> Result<(Tensor<E>, Vec<Tensor<E>>), Error> {
    spec.validate()?;
    let (n, c, h, w) = dims4(x)?;
    if c != spec.in_channels || weight.shape() != spec.weight_shape().as_slice() {
        return Err(Error::ShapeMismatch {
            expected: spec.weight_shape(),
            got: weight.shape().to_vec(),
        });
    }
    let (ho, wo) = spec.out_hw(h, w);
    let mut out = Tensor::zeros(&[n, spec.out_channels, ho, wo]);

    if spec.is_depthwise() {
        depthwise_forward(x, weight, spec, n, c, h, w, &mut out);
        return Ok((out, Vec::new()));
    }

    // pointwise stride-1 convs reduce to a plain GEMM on the input itself;
    // skip the column-matrix copy entirely
    if spec.is_unit(){
        let span = h * w;
        let in_stride = c * span;
        let out_stride = spec.out_channels * span;
        for i in 0..n {
            unsafe {
                E::gemm(
                    spec.out_channels,
                    c,
                    span,
                    E::one(),
                    weight.data().as_ptr(),
                    c as isize,
                    1,
                    x.data()[i * in_stride..].as_ptr(),
                    span as isize,
                    1,
                    E::zero(),
                    out.data_mut()[i * out_stride..].as_mut_ptr(),
                    span as isize,
                    1,
                );
            }
        }
        return Ok((out, Vec::new()));
    }

    let k = spec.kernel;
    let rows = c * k * k;
    let span = ho * wo;
    let mut cols_all = Vec::with_capacity(n);
    let in_stride = c * h * w;
    let out_stride = spec.out_channels * span;
    for i in 0..n {
        let mut cols = Tensor::zeros(&[rows, span]);
        im2col(
            &x.data()[i * in_stride..(i + 1) * in_stride],
            c,
            h,
            w,
            spec,
            cols.data_mut(),
        );
        // out_i[Cout, span] = W[Cout, rows] * cols[rows, span]
        unsafe {
            E::gemm(
                spec.out_channels,
                rows,
                span,
                E::one(),
                weight.data().as_ptr(),
                rows as isize,
                1,
                cols.data().as_ptr(),
                span as isize,
                1,
                E::zero(),
                out.data_mut()[i * out_stride..].as_mut_ptr(),
                span as isize,
                1,
            );
        }
        cols_all.push(cols);
    }
    Ok((out, cols_all))
}

/// Valid kernel-tap range per output position: taps `lo..hi` stay in bounds.
fn tap_bounds(out_dim: usize, in_dim: usize, spec: &ConvSpec) -> Vec<(usize, usize, usize)> {
    let k = spec.kernel;
    (0..out_dim)
        .map(|o| {
            let origin = (o * spec.stride) as isize - spec.padding as isize;
            let mut lo = 0usize;
            while lo < k && origin + (lo * spec.dilation) as isize < 0 {
                lo += 1;
            }
            let mut hi = k;
            while hi > lo && origin + ((hi - 1) * spec.dilation) as isize >= in_dim as isize {
                hi -= 1;
            }
            (lo, hi, (origin + (lo * spec.dilation) as isize) as usize)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn depthwise_forward<E: Scalar>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    spec: &ConvSpec,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out: &mut Tensor<E>,
) {
    let (ho, wo) = spec.out_hw(h, w);
    let k = spec.kernel;
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    let h_bounds = tap_bounds(ho, h, spec);
    let w_bounds = tap_bounds(wo, w, spec);
    for i in 0..n {
        for ci in 0..c {
            let x_base = (i * c + ci) * h * w;
            let o_base = (i * c + ci) * ho * wo;
            let w_base = ci * k * k;
            for oh in 0..ho {
                let (kh_lo, kh_hi, ih_start) = h_bounds[oh];
                for ow in 0..wo {
                    let (kw_lo, kw_hi, iw_start) = w_bounds[ow];
                    let mut acc = E::zero();
                    let mut ih = ih_start;
                    for kh in kh_lo..kh_hi {
                        let row = x_base + ih * w;
                        let wrow = w_base + kh * k;
                        let mut iw = iw_start;
                        for kw in kw_lo..kw_hi {
                            acc = acc + xd[row + iw] * wd[wrow + kw];
                            iw += spec.dilation;
                        }
                        ih += spec.dilation;
                    }
                    od[o_base + oh * wo + ow] = acc;
                }
            }
        }
    }
}

/// Backward conv: gradients w.r.t. input and weight.
pub fn conv2d_backward<E: Scalar>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    spec: &ConvSpec,
    cols_all: &[Tensor<E>],
    dout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>), Error> {
    let (n, c, h, w) = dims4(x)?;
    let (ho, wo) = spec.out_hw(h, w);
    let span = ho * wo;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());

    if spec.is_depthwise() {
        depthwise_backward(x, weight, spec, dout, &mut dx, &mut dw);
        return Ok((dx, dw));
    }

    if spec.is_unit() {
        let span = h * w;
        let in_stride = c * span;
        let out_stride = spec.out_channels * span;
        for i in 0..n {
            let dout_i = &dout.data()[i * out_stride..(i + 1) * out_stride];
            unsafe {
                // dW[Cout, Cin] += dOut_i[Cout, span] * x_i^T[span, Cin]
                E::gemm(
                    spec.out_channels,
                    span,
                    c,
                    E::one(),
                    dout_i.as_ptr(),
                    span as isize,
                    1,
                    x.data()[i * in_stride..].as_ptr(),
                    1,
                    span as isize,
                    E::one(),
                    dw.data_mut().as_mut_ptr(),
                    c as isize,
                    1,
                );
                // dX_i[Cin, span] = W^T[Cin, Cout] * dOut_i[Cout, span]
                E::gemm(
                    c,
                    spec.out_channels,
                    span,
                    E::one(),
                    weight.data().as_ptr(),
                    1,
                    c as isize,
                    dout_i.as_ptr(),
                    span as isize,
                    1,
                    E::zero(),
                    dx.data_mut()[i * in_stride..].as_mut_ptr(),
                    span as isize,
                    1,
                );
            }
        }
        return Ok((dx, dw));
    }

    let k = spec.kernel;
    let rows = c * k * k;
    let in_stride = c * h * w;
    let out_stride = spec.out_channels * span;
    let mut dcols = Tensor::zeros(&[rows, span]);
    for i in 0..n {
        let dout_i = &dout.data()[i * out_stride..(i + 1) * out_stride];
        let cols = &cols_all[i];
        unsafe {
            // dW[Cout, rows] += dOut_i[Cout, span] * cols^T[span, rows]
            E::gemm(
                spec.out_channels,
                span,
                rows,
                E::one(),
                dout_i.as_ptr(),
                span as isize,
                1,
                cols.data().as_ptr(),
                1,
                span as isize,
                E::one(),
                dw.data_mut().as_mut_ptr(),
                rows as isize,
                1,
            );
            // dcols[rows, span] = W^T[rows, Cout] * dOut_i[Cout, span]
            E::gemm(
                rows,
                spec.out_channels,
                span,
                E::one(),
                weight.data().as_ptr(),
                1,
                rows as isize,
                dout_i.as_ptr(),
                span as isize,
                1,
                E::zero(),
                dcols.data_mut().as_mut_ptr(),
                span as isize,
                1,
            );
        }
        col2im_add(
            dcols.data(),
            c,
            h,
            w,
            spec,
            &mut dx.data_mut()[i * in_stride..(i + 1) * in_stride],
        );
    }
    Ok((dx, dw))
}

fn depthwise_backward<E: Scalar>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    spec: &ConvSpec,
    dout: &Tensor<E>,
    dx: &mut Tensor<E>,
    dw: &mut Tensor<E>,
) {
    let shape = x.shape();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (ho, wo) = spec.out_hw(h, w);
    let k = spec.kernel;
    let xd = x.data();
    let wd = weight.data();
    let dod = dout.data();
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    let h_bounds = tap_bounds(ho, h, spec);
    let w_bounds = tap_bounds(wo, w, spec);
    for i in 0..n {
        for ci in 0..c {
            let x_base = (i * c + ci) * h * w;
            let o_base = (i * c + ci) * ho * wo;
            let w_base = ci * k * k;
            for oh in 0..ho {
                let (kh_lo, kh_hi, ih_start) = h_bounds[oh];
                for ow in 0..wo {
                    let (kw_lo, kw_hi, iw_start) = w_bounds[ow];
                    let g = dod[o_base + oh * wo + ow];
                    let mut ih = ih_start;
                    for kh in kh_lo..kh_hi {
                        let row = x_base + ih * w;
                        let wrow = w_base + kh * k;
                        let mut iw = iw_start;
                        for kw in kw_lo..kw_hi {
                            let xi = row + iw;
                            dxd[xi] = dxd[xi] + g * wd[wrow + kw];
                            dwd[wrow + kw] = dwd[wrow + kw] + g * xd[xi];
                            iw += spec.dilation;
                        }
                        ih += spec.dilation;
                    }
                }
            }
        }
    }
}

pub(crate) fn dims4<E: Scalar>(x: &Tensor<E>) -> Result<(usize, usize, usize, usize), Error> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0, 0, 0],
            got: s.to_vec(),
        });
    }
    Ok((s[0], s[1], s[2], s[3]))
}
