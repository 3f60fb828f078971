//! Training-time augmentation: pad-4 random crop plus horizontal flip.

use rand::Rng;

use crate::autograd::Tensor;

const PAD: usize = 4;

pub fn augment_image<R: Rng>(img: &Tensor<f32>, rng: &mut R) -> Tensor<f32> {
    let shape = img.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let dy = rng.gen_range(0..=2 * PAD);
    let dx = rng.gen_range(0..=2 * PAD);
    let flip = rng.gen_bool(0.5);
    let src = img.data();
    let mut out = vec![0f32; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let sy = y as isize + dy as isize - PAD as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx0 = x as isize + dx as isize - PAD as isize;
                if sx0 < 0 || sx0 >= w as isize {
                    continue;
                }
                let sx = if flip { w - 1 - sx0 as usize } else { sx0 as usize };
                out[(ch * h + y) * w + x] = src[(ch * h + sy as usize) * w + sx];
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape")
}
