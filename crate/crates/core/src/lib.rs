//! Luma frame handling and the reference HEVC-style intra encoder.

pub mod frame;
pub mod intra;
pub mod metrics;

pub use frame::{iter_blocks, load_frame, BlockRef, Frame, FrameError, LumaFormat, CTU_SIZE, MAX_DEPTH};
pub use intra::{CostModel, IntraMode};
