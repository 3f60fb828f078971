//! Colorization: predict quantized color classes from luminance alone.
//!
//! The color codebook is a B x B grid over two opponent axes, `R - G` and
//! `(R + G)/2 - B`, both range-normalized from [-1, 1]; class = row*B + col.

use crate::autograd::Tensor;

use super::{Error, PretextExample, Target};

/// Quantize one pixel's opponent coordinates to a class id.
pub fn quantize(r: f32, g: f32, b: f32, bins: usize) -> usize {
    let o1 = r - g; // in [-1, 1]
    let o2 = (r + g) / 2.0 - b; // in [-1, 1]
    let axis = |o: f32| -> usize {
        let t = (o + 1.0) / 2.0;
        ((t * bins as f32) as usize).min(bins - 1)
    };
    axis(o1) * bins + axis(o2)
}

/// Bin-center opponent coordinates for a class id.
pub fn dequantize(class: usize, bins: usize) -> (f32, f32) {
    let center = |bin: usize| (bin as f32 + 0.5) / bins as f32 * 2.0 - 1.0;
    (center(class / bins), center(class % bins))
}

/// Build a colorization example: the input is the 1-channel luminance
/// (0.299 R + 0.587 G + 0.114 B), the target the full-resolution per-pixel
/// class map. Training streams pool the map down to the network's
/// prediction resolution.
pub fn color_example(img: &Tensor<f32>, bins: usize) -> Result<PretextExample, Error> {
    if bins < 2 {
        return Err(Error::TooFewColorBins { bins });
    }
    let shape = img.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::NotThreeChannel {
            shape: shape.to_vec(),
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let src = img.data();
    let mut lum = vec![0f32; h * w];
    let mut classes = vec![0usize; h * w];
    for i in 0..h * w {
        let (r, g, b) = (src[i], src[h * w + i], src[2 * h * w + i]);
        lum[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        classes[i] = quantize(r, g, b, bins);
    }
    Ok(PretextExample {
        input: Tensor::new(vec![1, h, w], lum).expect("sized"),
        target: Target::Map {
            classes,
            h,
            w,
        },
    })
}

/// Majority class per `factor x factor` block (ties toward the smaller class
/// id); the dense head predicts at this pooled resolution.
pub fn pool_majority(classes: &[usize], h: usize, w: usize, factor: usize) -> (Vec<usize>, usize, usize) {
    assert!(h % factor == 0 && w % factor == 0, "resolution must divide");
    let (ho, wo) = (h / factor, w / factor);
    let mut out = vec![0usize; ho * wo];
    let mut counts = std::collections::BTreeMap::new();
    for oy in 0..ho {
        for ox in 0..wo {
            counts.clear();
            for y in 0..factor {
                for x in 0..factor {
                    let c = classes[(oy * factor + y) * w + ox * factor + x];
                    *counts.entry(c).or_insert(0usize) += 1;
                }
            }
            // ascending iteration + strict comparison resolves ties low
            let mut best = (usize::MAX, 0usize);
            for (&c, &n) in counts.iter() {
                if n > best.1 {
                    best = (c, n);
                }
            }
            out[oy * wo + ox] = best.0;
        }
    }
    (out, ho, wo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gray_pixels_land_in_the_center_bin() {
        for bins in [2usize, 4, 8] {
            let class = quantize(0.5, 0.5, 0.5, bins);
            let center = (bins / 2) * bins + bins / 2;
            assert_eq!(class, center, "bins = {bins}");
        }
    }

    #[test]
    fn class_count_is_bins_squared() {
        let bins = 5;
        let mut seen = std::collections::BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20_000 {
            let (r, g, b) = (rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>());
            let c = quantize(r, g, b, bins);
            assert!(c < bins * bins);
            seen.insert(c);
        }
        assert!(seen.len() > bins * bins / 2, "sampling should hit many bins");
    }

    #[test]
    fn quantize_dequantize_error_within_half_bin_width() {
        let bins = 8;
        let half_width = 1.0 / bins as f32; // axes span [-1, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (r, g, b) = (rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>());
            let class = quantize(r, g, b, bins);
            let (c1, c2) = dequantize(class, bins);
            let o1 = r - g;
            let o2 = (r + g) / 2.0 - b;
            assert!((o1 - c1).abs() <= half_width + 1e-6, "{o1} vs {c1}");
            assert!((o2 - c2).abs() <= half_width + 1e-6, "{o2} vs {c2}");
        }
    }

    #[test]
    fn luminance_uses_standard_weights() {
        let img = Tensor::new(
            vec![3, 1, 1],
            vec![1.0, 0.5, 0.25],
        )
        .unwrap();
        let ex = color_example(&img, 4).unwrap();
        let expect = 0.299 + 0.587 * 0.5 + 0.114 * 0.25;
        assert!((ex.input.data()[0] - expect).abs() < 1e-6);
        assert_eq!(ex.input.shape(), &[1, 1, 1]);
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let img = Tensor::zeros(&[3, 4, 4]);
        assert!(matches!(
            color_example(&img, 1),
            Err(Error::TooFewColorBins { .. })
        ));
    }

    #[test]
    fn majority_pooling_counts_blocks() {
        // 4x4 map pooled by 2: each 2x2 block majority
        let classes = vec![
            1, 1, 2, 3, //
            1, 0, 3, 3, //
            5, 5, 7, 7, //
            5, 5, 7, 6,
        ];
        let (pooled, ho, wo) = pool_majority(&classes, 4, 4, 2);
        assert_eq!((ho, wo), (2, 2));
        assert_eq!(pooled, vec![1, 3, 5, 7]);
    }

    #[test]
    fn majority_pooling_breaks_ties_low() {
        let classes = vec![2, 9, 9, 2];
        let (pooled, _, _) = pool_majority(&classes, 2, 2, 2);
        assert_eq!(pooled, vec![2]);
    }
}
