//! Learned fast intra coding on top of the reference encoder: AK-CNN
//! models, decision maps, QP interpolation, threshold search, dataset
//! generation and evaluation metrics.

pub mod ak_models;
pub mod dataset_gen;
pub mod eotd;
pub mod eval_harness;
pub mod fast_pipeline;
pub mod qp_adapt;

pub use ak_models::{ModelBank, Task, ANCHOR_QPS};

