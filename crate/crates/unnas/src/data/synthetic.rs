//! Procedural dataset: colored shapes over a luminance gradient.
//!
//! Class identity combines shape kind and color so that small networks can
//! learn it; the vertical background gradient makes rotations identifiable;
//! the color palette gives the colorization objective something to predict.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub n: usize,
    pub hw: usize,
    pub seed: u64,
}

const PALETTE: [[f32; 3]; 4] = [
    [0.9, 0.2, 0.2],
    [0.2, 0.8, 0.3],
    [0.25, 0.35, 0.95],
    [0.9, 0.8, 0.2],
];

const SHAPES: usize = 5;

/// Generate `spec.n` square images with labels `0..spec.classes`.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Dataset {
    assert!(spec.classes >= 1 && spec.classes <= SHAPES * PALETTE.len());
    assert!(spec.hw >= 8, "images below 8px carry too little structure");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % spec.classes;
        images.push(render(class, spec.hw, &mut rng));
        labels.push(class);
    }
    Dataset::new(images, labels, spec.classes).expect("generator emits consistent shapes")
}

fn render(class: usize, hw: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let shape_kind = class % SHAPES;
    let color = PALETTE[(class / SHAPES) % PALETTE.len()];
    let mut img = vec![0f32; 3 * hw * hw];

    // orientation cues are deliberately weak: a faint vertical gradient of
    // random strength (per-pixel step well below the noise level, so it only
    // emerges under spatial integration) plus a drop shadow under the shape
    let base = rng.gen_range(0.28..0.42);
    let slope = rng.gen_range(0.02..0.12);
    for ch in 0..3 {
        for y in 0..hw {
            let v = base + slope * (y as f32 / (hw - 1) as f32 - 0.5);
            for x in 0..hw {
                img[(ch * hw + y) * hw + x] = v;
            }
        }
    }

    let radius = rng.gen_range(hw as f32 * 0.16..hw as f32 * 0.26);
    let margin = radius * 1.6;
    let cx = rng.gen_range(margin..hw as f32 - margin);
    let cy = rng.gen_range(margin..hw as f32 - margin);

    // shadow: darkened ellipse shifted below the shape; per-image random
    // contrast gives a natural difficulty spread (some shadows are faint)
    let shadow_factor = rng.gen_range(0.55..0.85);
    let (sy, sx) = (cy + radius * 0.7, cx);
    for y in 0..hw {
        for x in 0..hw {
            let dy = (y as f32 - sy) / (radius * 1.05);
            let dx = (x as f32 - sx) / (radius * 0.85);
            if dx * dx + dy * dy <= 1.0 {
                for ch in 0..3 {
                    img[(ch * hw + y) * hw + x] *= shadow_factor;
                }
            }
        }
    }

    for y in 0..hw {
        for x in 0..hw {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let inside = match shape_kind {
                0 => dx * dx + dy * dy <= radius * radius,
                1 => dx.abs() <= radius && dy.abs() <= radius,
                2 => dy <= 0.0 && dx.abs() <= -dy && -dy <= radius, // triangle tip down
                3 => dy.abs() <= radius * 0.4 && dx.abs() <= radius,
                _ => (dx.abs() <= radius * 0.35 && dy.abs() <= radius)
                    || (dy.abs() <= radius * 0.35 && dx.abs() <= radius),
            };
            if inside {
                for ch in 0..3 {
                    img[(ch * hw + y) * hw + x] = color[ch];
                }
            }
        }
    }

    // noise strong enough to drown the per-pixel gradient step
    for v in img.iter_mut() {
        *v = (*v + rng.gen_range(-0.07..0.07)).clamp(0.0, 1.0);
    }
    Tensor::new(vec![3, hw, hw], img).expect("sized above")
}
