//! The network: embedding, stacked blocks per temporal scale, cross-scale
//! fusion and the classifier head.

pub mod block;
pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod embedding;
pub mod layers;
pub mod network;
pub mod params;

pub use block::{aggregate_gated, gconv, modulate, modulate_ablation, standardize, ModulationFactors, MstfBlock};
pub use complexity::{count_params_flops, Complexity};
pub use config::{ModelConfig, ModulationStrategy};
pub use embedding::{skate_embedding, temporal_features};
pub use network::MmnModel;
pub use params::{BlockTrace, ForwardCtx, Param, ParamStore};
