//! Desk-scale laboratory for label-free neural architecture search.
//!
//! The pieces: a tensor/autograd engine (`autograd`), the candidate-op and
//! network library (`nn`), search spaces with sampling and serialization
//! (`space`), self-supervised pretext transforms (`pretext`), differentiable
//! cell search (`darts`), from-scratch training (`train`), statistics
//! (`analysis`), datasets (`data`) and the experiment front end
//! (`store`, `cli`).

pub mod analysis;
pub mod autograd;
pub mod cli;
pub mod darts;
pub mod data;
pub mod nn;
pub mod pretext;
pub mod space;
pub mod store;
pub mod task;
pub mod train;
pub mod util;
