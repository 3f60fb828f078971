//! Rotation prediction: rotate by k*90 degrees, predict k.

use crate::autograd::Tensor;

use super::{Error, PretextExample, Target};

/// Quarter-turn: `out(i, j) = x(H-1-j, i)` per channel.
pub fn rot90(img: &Tensor<f32>) -> Tensor<f32> {
    let shape = img.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    debug_assert_eq!(h, w);
    let src = img.data();
    let mut out = vec![0f32; c * h * w];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out[(ch * h + i) * w + j] = src[(ch * h + (h - 1 - j)) * w + i];
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape")
}

/// Rotate a square image by `k` quarter turns; the pretext label is `k`.
pub fn rotate_label(img: &Tensor<f32>, k: usize) -> Result<PretextExample, Error> {
    let shape = img.shape();
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(Error::NonSquareImage {
            shape: shape.to_vec(),
        });
    }
    if k > 3 {
        return Err(Error::BadLabelIndex { index: k, count: 4 });
    }
    let mut out = img.clone();
    for _ in 0..k {
        out = rot90(&out);
    }
    Ok(PretextExample {
        input: out,
        target: Target::Class(k),
    })
}
