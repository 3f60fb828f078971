//! Analytic cost model: multiply-accumulate counts and trainable-parameter
//! counts, additive over layers and independent of parameter values.
//!
//! Conventions: a dense conv contributes `k^2 * Cin/groups * Cout * Hout * Wout`
//! MACs (bias adds parameters but no MACs); norm layers contribute their two
//! affine vectors as parameters and no MACs; pools, activations and the zero
//! op are free. `flops` is defined as twice the MAC count.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostStats {
    /// Two times the multiply-accumulate count for one input sample.
    pub flops: u64,
    /// Number of trainable scalars.
    pub params: u64,
}

impl CostStats {
    pub fn from_macs(macs: u64, params: u64) -> Self {
        CostStats {
            flops: 2 * macs,
            params,
        }
    }

    pub fn zero() -> Self {
        CostStats::default()
    }
}

impl Add for CostStats {
    type Output = CostStats;

    fn add(self, rhs: CostStats) -> CostStats {
        CostStats {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
        }
    }
}

impl AddAssign for CostStats {
    fn add_assign(&mut self, rhs: CostStats) {
        self.flops += rhs.flops;
        self.params += rhs.params;
    }
}

/// Cost of one dense or depthwise conv.
pub fn conv_cost(
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    groups: usize,
    out_h: usize,
    out_w: usize,
    bias: bool,
) -> CostStats {
    let weights = (kernel * kernel * (in_channels / groups) * out_channels) as u64;
    let macs = weights * (out_h * out_w) as u64;
    let params = weights + if bias { out_channels as u64 } else { 0 };
    CostStats::from_macs(macs, params)
}

pub fn norm_cost(channels: usize) -> CostStats {
    CostStats {
        flops: 0,
        params: 2 * channels as u64,
    }
}

pub fn linear_cost(in_features: usize, out_features: usize, bias: bool) -> CostStats {
    let weights = (in_features * out_features) as u64;
    CostStats::from_macs(
        weights,
        weights + if bias { out_features as u64 } else { 0 },
    )
}

/// Reference cost used by the capacity filter: a 56-layer residual network
/// for small images (stem 3x3 conv to 16 channels, three stages of nine
/// two-conv blocks at widths 16/32/64 with stride-2 projection transitions,
/// global pooling, linear classifier). Computed structurally through the
/// same per-layer formulas as every other network here, never hard-coded.
pub fn resnet56_reference_cost(input_hw: usize, num_classes: usize) -> CostStats {
    let mut total = CostStats::zero();
    let mut h = input_hw;
    let mut c = 16usize;
    total += conv_cost(3, c, 3, 1, h, h, false);
    total += norm_cost(c);
    for stage in 0..3 {
        for block in 0..9 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let c_in = if stride == 2 { c / 2 } else { c };
            if stride == 2 {
                h /= 2;
                // projection shortcut
                total += conv_cost(c_in, c, 1, 1, h, h, false);
                total += norm_cost(c);
            }
            total += conv_cost(c_in, c, 3, 1, h, h, false);
            total += norm_cost(c);
            total += conv_cost(c, c, 3, 1, h, h, false);
            total += norm_cost(c);
        }
        if stage < 2 {
            c *= 2;
        }
    }
    total += linear_cost(c, num_classes, true);
    total
}
