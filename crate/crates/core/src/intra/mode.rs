use std::fmt;

/// One of the 35 intra prediction modes: 0 planar, 1 DC, 2..=34 angular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntraMode(u8);

impl IntraMode {
    pub const PLANAR: IntraMode = IntraMode(0);
    pub const DC: IntraMode = IntraMode(1);
    pub const HORIZONTAL: IntraMode = IntraMode(10);
    pub const DIAGONAL: IntraMode = IntraMode(18);
    pub const VERTICAL: IntraMode = IntraMode(26);
    pub const COUNT: usize = 35;

    pub const fn new(index: u8) -> Option<Self> {
        if (index as usize) < Self::COUNT {
            Some(IntraMode(index))
        } else {
            None
        }
    }

    #[inline]
    pub const fn index(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn is_angular(self) -> bool {
        self.0 >= 2
    }

    pub fn all() -> impl Iterator<Item = IntraMode> + Clone {
        (0..Self::COUNT as u8).map(IntraMode)
    }

    /// Displacement in 1/32 sample per row (vertical modes) or column
    /// (horizontal modes). Only defined for angular modes.
    #[inline]
    pub(crate) fn angle(self) -> i32 {
        ANGLE[self.0 as usize - 2]
    }
}

impl fmt::Display for IntraMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-mode displacement for modes 2..=34.
pub(crate) const ANGLE: [i32; 33] = [
    32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26, -32, -26, -21, -17, -13, -9, -5,
    -2, 0, 2, 5, 9, 13, 17, 21, 26, 32,
];

/// Inverse displacement (256 · 32 / angle) for the negative angles.
pub(crate) fn inverse_angle(angle: i32) -> i32 {
    match angle {
        -2 => -4096,
        -5 => -1638,
        -9 => -910,
        -13 => -630,
        -17 => -482,
        -21 => -390,
        -26 => -315,
        -32 => -256,
        _ => unreachable!("no inverse for angle {angle}"),
    }
}
