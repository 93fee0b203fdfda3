use super::IntraMode;

/// Mode signaling cost when the mode is one of the three most probable modes.
pub const MPM_MODE_BITS: u32 = 2;
/// Mode signaling cost otherwise.
pub const NON_MPM_MODE_BITS: u32 = 6;
/// Split flag (depths 0..=2) or PU-size flag (depth 3), one per decision.
pub const PARTITION_FLAG_BITS: u32 = 1;

/// QP-derived Lagrangian and quantizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    qp: u8,
    lambda: f64,
    qstep: f64,
}

impl CostModel {
    pub const MAX_QP: u8 = 51;

    /// Panics if `qp > 51`.
    pub fn new(qp: u8) -> Self {
        assert!(qp <= Self::MAX_QP, "qp {qp} out of range");
        let q = qp as f64;
        CostModel {
            qp,
            lambda: 0.57 * 2f64.powf((q - 12.0) / 3.0),
            qstep: 2f64.powf((q - 4.0) / 6.0),
        }
    }

    /// A model with explicit parameters, bypassing the QP relations.
    pub fn custom(qp: u8, lambda: f64, qstep: f64) -> Self {
        assert!(lambda > 0.0 && qstep > 0.0);
        CostModel { qp, lambda, qstep }
    }

    pub fn qp(&self) -> u8 {
        self.qp
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn qstep(&self) -> f64 {
        self.qstep
    }

    /// Hadamard-domain cost `SATD + λ·R_mode`.
    #[inline]
    pub fn j_had(&self, satd: u64, r_mode: u32) -> f64 {
        satd as f64 + self.lambda * r_mode as f64
    }

    /// Full rate-distortion cost `SSE + λ·R`.
    #[inline]
    pub fn j_rdo(&self, sse: u64, bits: u64) -> f64 {
        sse as f64 + self.lambda * bits as f64
    }
}

/// Rough-mode-decision score of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeCost {
    pub mode: IntraMode,
    pub j_had: f64,
    pub satd: u64,
    pub r_mode: u32,
}

/// Bits spent on the mode index.
#[inline]
pub fn mode_bits(mode: IntraMode, mpm: &[IntraMode; 3]) -> u32 {
    if mpm.contains(&mode) {
        MPM_MODE_BITS
    } else {
        NON_MPM_MODE_BITS
    }
}

/// Exp-Golomb-like length of a quantized level including its sign:
/// 0 for zero, else `2·floor(log2|c|) + 3`.
#[inline]
pub fn coeff_bits(level: i32) -> u32 {
    if level == 0 {
        0
    } else {
        2 * (31 - level.unsigned_abs().leading_zeros()) + 3
    }
}
