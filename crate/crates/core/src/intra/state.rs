use crate::frame::{BlockRef, Frame};

use super::IntraMode;

const UNCODED: u8 = u8::MAX;

/// Reconstruction buffer plus the coded-mode map at 4×4 granularity.
///
/// A sample is available as a prediction reference once the 4×4 unit
/// holding it has been committed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReconState {
    width: usize,
    height: usize,
    recon: Vec<u8>,
    modes: Vec<u8>,
}

impl ReconState {
    /// Empty state sized to the padded frame.
    pub fn new(frame: &Frame) -> Self {
        Self::with_size(frame.padded_width(), frame.padded_height())
    }

    pub fn with_size(width: usize, height: usize) -> Self {
        assert!(width % 4 == 0 && height % 4 == 0);
        ReconState {
            width,
            height,
            recon: vec![0; width * height],
            modes: vec![UNCODED; (width / 4) * (height / 4)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn recon(&self) -> &[u8] {
        &self.recon
    }

    #[inline]
    fn unit(&self, x: usize, y: usize) -> usize {
        (y / 4) * (self.width / 4) + x / 4
    }

    /// Whether `(x, y)` lies inside the plane and has been reconstructed.
    #[inline]
    pub fn available(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.modes[self.unit(x as usize, y as usize)] != UNCODED
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize) -> u8 {
        self.recon[y * self.width + x]
    }

    /// Mode of the coded unit covering `(x, y)`, if any.
    pub fn mode_at(&self, x: isize, y: isize) -> Option<IntraMode> {
        if !self.available(x, y) {
            return None;
        }
        IntraMode::new(self.modes[self.unit(x as usize, y as usize)])
    }

    /// Write a reconstructed block and mark it coded with `mode`.
    pub fn commit(&mut self, block: BlockRef, recon: &[u8], mode: IntraMode) {
        let n = block.size();
        debug_assert_eq!(recon.len(), n * n);
        for y in 0..n {
            let start = (block.y + y) * self.width + block.x;
            self.recon[start..start + n].copy_from_slice(&recon[y * n..][..n]);
        }
        self.set_modes(block, mode.index());
    }

    /// Mark a block uncoded again (its samples stop being references).
    pub fn uncommit(&mut self, block: BlockRef) {
        self.set_modes(block, UNCODED);
    }

    fn set_modes(&mut self, block: BlockRef, value: u8) {
        let n = block.size();
        let stride = self.width / 4;
        for uy in block.y / 4..(block.y + n) / 4 {
            self.modes[uy * stride + block.x / 4..][..n / 4].fill(value);
        }
    }

    /// The reconstruction as a frame with the given visible size.
    pub fn to_frame(&self, width: usize, height: usize) -> Frame {
        let mut visible = Vec::with_capacity(width * height);
        for y in 0..height {
            visible.extend_from_slice(&self.recon[y * self.width..][..width]);
        }
        Frame::from_luma(width, height, &visible).expect("visible region inside state")
    }
}
