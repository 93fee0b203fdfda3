//! Reference intra encoder.

pub mod cost;
pub mod encoder;
mod mode;
pub mod mpm;
pub mod predict;
pub mod rdo;
pub mod rmd;
pub mod satd;
mod state;
pub mod transform;

pub use cost::{CostModel, ModeCost};
pub use encoder::{
    encode_ctu, encode_ctu_full, encode_frame, report_row, Baseline, EncodeOptions, EncodeStats,
    FastHooks, FrameEncoding, NodeTrace, PartitionTree, SplitDecision, REPORT_HEADER,
};
pub use mode::IntraMode;
pub use mpm::derive_mpm;
pub use predict::predict_block;
pub use rdo::{rdo_leaf, LeafResult};
pub use rmd::{default_rmd_prefix, rough_mode_decision, CandidateList};
pub use satd::satd;
pub use state::ReconState;
