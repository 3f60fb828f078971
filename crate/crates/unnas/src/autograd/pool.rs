//! Pooling kernels: max, average (pad cells excluded from the mean), global.

use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Max pool forward; returns output and the flat input index of each
/// window's argmax (used verbatim by the backward pass).
pub fn max_pool_forward<E: Scalar>(x: &Tensor<E>, spec: &PoolSpec) -> (Tensor<E>, Vec<usize>) {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (spec.out_dim(h), spec.out_dim(w));
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let mut argmax = vec![0usize; n * c * ho * wo];
    let xd = x.data();
    let od = out.data_mut();
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            let obase = (i * c + ci) * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = E::neg_infinity();
                    let mut best_idx = 0usize;
                    for kh in 0..spec.kernel {
                        let ih = (oh * spec.stride + kh) as isize - spec.padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kw in 0..spec.kernel {
                            let iw = (ow * spec.stride + kw) as isize - spec.padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let idx = base + ih as usize * w + iw as usize;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    od[obase + oh * wo + ow] = best;
                    argmax[obase + oh * wo + ow] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

pub fn max_pool_backward<E: Scalar>(
    in_shape: &[usize],
    argmax: &[usize],
    dout: &Tensor<E>,
) -> Tensor<E> {
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for (g, &idx) in dout.data().iter().zip(argmax.iter()) {
        dxd[idx] = dxd[idx] + *g;
    }
    dx
}

/// Average pool; the divisor is the number of in-bounds cells per window.
pub fn avg_pool_forward<E: Scalar>(x: &Tensor<E>, spec: &PoolSpec) -> Tensor<E> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (spec.out_dim(h), spec.out_dim(w));
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let xd = x.data();
    let od = out.data_mut();
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            let obase = (i * c + ci) * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = E::zero();
                    let mut count = 0usize;
                    for kh in 0..spec.kernel {
                        let ih = (oh * spec.stride + kh) as isize - spec.padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kw in 0..spec.kernel {
                            let iw = (ow * spec.stride + kw) as isize - spec.padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            acc = acc + xd[base + ih as usize * w + iw as usize];
                            count += 1;
                        }
                    }
                    od[obase + oh * wo + ow] = acc / E::from_f64(count as f64);
                }
            }
        }
    }
    out
}

pub fn avg_pool_backward<E: Scalar>(
    in_shape: &[usize],
    spec: &PoolSpec,
    dout: &Tensor<E>,
) -> Tensor<E> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (ho, wo) = (spec.out_dim(h), spec.out_dim(w));
    let mut dx = Tensor::zeros(in_shape);
    let dod = dout.data();
    let dxd = dx.data_mut();
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            let obase = (i * c + ci) * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut cells = Vec::with_capacity(spec.kernel * spec.kernel);
                    for kh in 0..spec.kernel {
                        let ih = (oh * spec.stride + kh) as isize - spec.padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kw in 0..spec.kernel {
                            let iw = (ow * spec.stride + kw) as isize - spec.padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            cells.push(base + ih as usize * w + iw as usize);
                        }
                    }
                    let share = dod[obase + oh * wo + ow] / E::from_f64(cells.len() as f64);
                    for idx in cells {
                        dxd[idx] = dxd[idx] + share;
                    }
                }
            }
        }
    }
    dx
}
