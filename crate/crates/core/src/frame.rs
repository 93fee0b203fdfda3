//! 8-bit luma planes, CTU padding and block iteration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Side length of a coding tree unit.
pub const CTU_SIZE: usize = 64;
/// Deepest partition level: 4×4 prediction units.
pub const MAX_DEPTH: u8 = 4;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} file: {reason}")]
    Malformed { format: &'static str, reason: String },
    #[error("dimension mismatch: {width}x{height} needs {expected} bytes, file has {actual}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyFrame { width: usize, height: usize },
}

/// On-disk luma formats understood by [`load_frame`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LumaFormat {
    /// Headerless row-major bytes with a `<file>.manifest` sidecar holding
    /// `width=` and `height=` lines.
    Raw,
    /// Binary portable graymap (`P5`).
    Pgm,
}

impl LumaFormat {
    /// Guess the format from a file extension; anything but `.pgm` is raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => LumaFormat::Pgm,
            _ => LumaFormat::Raw,
        }
    }
}

/// A luma plane padded by edge replication to a multiple of [`CTU_SIZE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    padded_width: usize,
    padded_height: usize,
    samples: Vec<u8>,
}

fn round_up(v: usize) -> usize {
    v.div_ceil(CTU_SIZE) * CTU_SIZE
}

impl Frame {
    /// Build a frame from `width × height` row-major samples, padding the
    /// right and bottom edges by replication.
    pub fn from_luma(width: usize, height: usize, luma: &[u8]) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyFrame { width, height });
        }
        if luma.len() != width * height {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                expected: width * height,
                actual: luma.len(),
            });
        }
        let padded_width = round_up(width);
        let padded_height = round_up(height);
        let mut samples = Vec::with_capacity(padded_width * padded_height);
        for y in 0..padded_height {
            let row = &luma[y.min(height - 1) * width..][..width];
            samples.extend_from_slice(row);
            let last = row[width - 1];
            samples.resize(samples.len() + padded_width - width, last);
        }
        Ok(Frame {
            width,
            height,
            padded_width,
            padded_height,
            samples,
        })
    }

    /// A frame filled with one value.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Frame::from_luma(width, height, &vec![value; width * height]).expect("positive dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn padded_width(&self) -> usize {
        self.padded_width
    }

    pub fn padded_height(&self) -> usize {
        self.padded_height
    }

    /// The padded plane, row-major with stride `padded_width`.
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.padded_width + x]
    }

    /// The visible (unpadded) region, row-major.
    pub fn visible(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            out.extend_from_slice(&self.samples[y * self.padded_width..][..self.width]);
        }
        out
    }

    /// Copy the samples covered by `block`, row-major.
    pub fn block(&self, block: BlockRef) -> Vec<u8> {
        let n = block.size();
        let mut out = Vec::with_capacity(n * n);
        for y in 0..n {
            let start = (block.y + y) * self.padded_width + block.x;
            out.extend_from_slice(&self.samples[start..start + n]);
        }
        out
    }

    /// Overwrite the samples covered by `block`.
    pub fn put_block(&mut self, block: BlockRef, data: &[u8]) {
        let n = block.size();
        assert_eq!(data.len(), n * n, "block data length");
        for y in 0..n {
            let start = (block.y + y) * self.padded_width + block.x;
            self.samples[start..start + n].copy_from_slice(&data[y * n..][..n]);
        }
    }

    /// Number of CTUs in raster order.
    pub fn ctu_count(&self) -> usize {
        (self.padded_width / CTU_SIZE) * (self.padded_height / CTU_SIZE)
    }
}

/// A square block inside a padded frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef {
    pub x: usize,
    pub y: usize,
    pub depth: u8,
}

impl BlockRef {
    pub fn new(x: usize, y: usize, depth: u8) -> Self {
        assert!(depth <= MAX_DEPTH, "depth {depth} out of range");
        let b = BlockRef { x, y, depth };
        debug_assert!(x % b.size() == 0 && y % b.size() == 0, "unaligned block");
        b
    }

    /// Block side for a depth: 64, 32, 16, 8, 4.
    #[inline]
    pub const fn size_at(depth: u8) -> usize {
        CTU_SIZE >> depth
    }

    #[inline]
    pub fn size(&self) -> usize {
        Self::size_at(self.depth)
    }

    /// The four quadrants in z-order.
    pub fn children(&self) -> [BlockRef; 4] {
        assert!(self.depth < MAX_DEPTH, "depth-4 blocks have no children");
        let h = self.size() / 2;
        let d = self.depth + 1;
        [
            BlockRef::new(self.x, self.y, d),
            BlockRef::new(self.x + h, self.y, d),
            BlockRef::new(self.x, self.y + h, d),
            BlockRef::new(self.x + h, self.y + h, d),
        ]
    }

    /// The enclosing block one level up.
    pub fn parent(&self) -> Option<BlockRef> {
        if self.depth == 0 {
            return None;
        }
        let s = Self::size_at(self.depth - 1);
        Some(BlockRef::new(self.x / s * s, self.y / s * s, self.depth - 1))
    }

    /// Raster index of this block within a `padded_width`-wide grid of same-size blocks.
    pub fn grid_index(&self, padded_width: usize) -> usize {
        let n = self.size();
        (self.y / n) * (padded_width / n) + self.x / n
    }
}

/// Raster-order blocks of one depth covering the padded frame.
pub fn iter_blocks(frame: &Frame, depth: u8) -> impl Iterator<Item = BlockRef> {
    let n = BlockRef::size_at(depth);
    let cols = frame.padded_width / n;
    let rows = frame.padded_height / n;
    (0..rows).flat_map(move |r| (0..cols).map(move |c| BlockRef::new(c * n, r * n, depth)))
}

/// Load a frame from disk.
pub fn load_frame(path: &Path, format: LumaFormat) -> Result<Frame, FrameError> {
    let bytes = fs::read(path).map_err(|source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        LumaFormat::Pgm => {
            let (w, h, luma) = decode_pgm(&bytes)?;
            Frame::from_luma(w, h, &luma)
        }
        LumaFormat::Raw => {
            let manifest = raw_manifest_path(path);
            let text = fs::read_to_string(&manifest).map_err(|source| FrameError::Io {
                path: manifest.clone(),
                source,
            })?;
            let (w, h) = parse_raw_manifest(&text)?;
            Frame::from_luma(w, h, &bytes)
        }
    }
}

/// Sidecar manifest location for a raw luma file.
pub fn raw_manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

fn parse_raw_manifest(text: &str) -> Result<(usize, usize), FrameError> {
    let bad = |reason: String| FrameError::Malformed {
        format: "raw manifest",
        reason,
    };
    let (mut w, mut h) = (None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("non-numeric value in {line:?}")))?;
        match key.trim() {
            "width" => w = Some(value),
            "height" => h = Some(value),
            _ => {}
        }
    }
    match (w, h) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok((w, h)),
        (Some(w), Some(h)) => Err(FrameError::EmptyFrame { width: w, height: h }),
        _ => Err(bad("missing width or height".into())),
    }
}

/// Decode a binary graymap into `(width, height, samples)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), FrameError> {
    let bad = |reason: &str| FrameError::Malformed {
        format: "pgm",
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header number overflow"))?;
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(FrameError::EmptyFrame { width: w, height: h });
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit graymaps (maxval 1..=255) are supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() < w * h {
        return Err(FrameError::SizeMismatch {
            width: w,
            height: h,
            expected: w * h,
            actual: data.len(),
        });
    }
    let data = &data[..w * h];
    let luma = if maxval == 255 {
        data.to_vec()
    } else {
        data.iter()
            .map(|&v| ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    Ok((w, h, luma))
}

/// Encode samples as a binary graymap.
pub fn encode_pgm(width: usize, height: usize, luma: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(luma);
    out
}

/// Write the visible region of a frame as a graymap.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), FrameError> {
    let io = |source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_pgm(frame.width, frame.height, &frame.visible()))
        .map_err(io)
}
