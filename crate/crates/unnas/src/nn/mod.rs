//! Candidate operations, network assembly and the analytic cost model.

mod bench_net;
mod cell;
mod cost;
pub(crate) mod head;
mod layers;
mod network;

pub use bench_net::{bench_graph_cost, BenchNetwork};
pub use cell::Cell;
pub use cost::{conv_cost, linear_cost, norm_cost, resnet56_reference_cost, CostStats};
pub use layers::{
    instantiate_op, BatchNormLayer, Conv2dLayer, FactorizedReduce, FeatShape, Identity, Layer,
    OpKind, PoolMode, PoolOp, ReluConvBn, SepConv, ZeroOp,
};
pub use network::{genotype_cost, HeadKind, NetOutput, Network, NetworkConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Autograd(crate::autograd::Error),
    BadOpConfig { channels: usize, stride: usize },
    BadNetworkConfig { reason: String },
    GenotypeMismatch { reason: String },
    HeadResolution { feat: usize, target: usize },
}

impl From<crate::autograd::Error> for Error {
    fn from(e: crate::autograd::Error) -> Self {
        Error::Autograd(e)
    }
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Autograd(e) => write!(f, "{e}"),
            Error::BadOpConfig { channels, stride } => {
                write!(f, "cannot instantiate op at channels={channels} stride={stride}")
            }
            Error::BadNetworkConfig { reason } => write!(f, "invalid network config: {reason}"),
            Error::GenotypeMismatch { reason } => write!(f, "genotype/op inconsistency: {reason}"),
            Error::HeadResolution { feat, target } => write!(
                f,
                "dense head cannot map features at {feat} px to target {target} px"
            ),
        }
    }
}

impl std::error::Error for Error {}
