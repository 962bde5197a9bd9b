//! Non-learned compressed-sensing baselines.

mod dict;
mod tv;

pub use dict::{dict_reconstruct, dict_reconstruct_with, DictConfig, Dictionary};
pub use tv::{data_residual, tv_reconstruct, TvConfig, TvResult, TvTracePoint, TV_SMOOTHING};
