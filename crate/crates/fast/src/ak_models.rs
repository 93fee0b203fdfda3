//! AK-CNN topologies, the per-(task, depth, QP) model bank and batched
//! inference.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use intra_core::BlockRef;
use intra_nn::{LayerSpec, Network32, Network64, NnError, Tensor32};

pub const ANCHOR_QPS: [u8; 4] = [22, 27, 32, 37];
pub const LEAKY_ALPHA: f64 = 0.25;
pub const DROPOUT_RATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    /// Two-way split / non-split classifier.
    Size,
    /// Three-output expectation regressor for the candidate count.
    Mnrc,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Size => "size",
            Task::Mnrc => "mnrc",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no {task} model for depth {depth} at QP {qp}")]
    MissingModel { task: Task, depth: u8, qp: u8 },
    #[error("{task} models are not defined for depth {depth}")]
    InvalidTopology { task: Task, depth: u8 },
    #[error("not a model bank (bad magic)")]
    BadMagic,
    #[error("unsupported bank version {0}")]
    Version(u32),
    #[error("truncated or malformed bank: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One first-layer branch: kernel height, width, output channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branch {
    pub kh: usize,
    pub kw: usize,
    pub channels: usize,
}

/// A post-concatenation 3×3 convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrunkConv {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
    pub same_padding: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AkTopology {
    pub depth: u8,
    pub task: Task,
    /// Side of the luma block fed to the model.
    pub input_size: usize,
    /// Mean-pool factor applied before the branches (depth 0).
    pub pool: Option<usize>,
    pub branches: Vec<Branch>,
    pub branch_stride: usize,
    pub trunk: Vec<TrunkConv>,
    pub head: Vec<usize>,
    pub output_nodes: usize,
}

fn square(b: Branch) -> Branch {
    let side = ((b.kh * b.kw) as f64).sqrt();
    let lower = (side.floor() as usize) | 1;
    let lower = if lower as f64 > side { lower - 2 } else { lower };
    let k = if side - lower as f64 <= (lower + 2) as f64 - side { lower } else { lower + 2 };
    Branch {
        kh: k,
        kw: k,
        channels: b.channels,
    }
}

/// Topology of the model for `depth` and `task`. `square_kernels` swaps
/// the asymmetric branches for square kernels of similar area.
pub fn build_topology(depth: u8, task: Task, square_kernels: bool) -> Result<AkTopology, ModelError> {
    let output_nodes = match task {
        Task::Size => 2,
        Task::Mnrc => 3,
    };
    let conv3 = |stride, same_padding| TrunkConv {
        kernel: 3,
        channels: 32,
        stride,
        same_padding,
    };
    let b = |kh, kw, channels| Branch { kh, kw, channels };
    let mut topo = match depth {
        0 | 1 => AkTopology {
            depth,
            task,
            input_size: BlockRef::size_at(depth),
            pool: (depth == 0).then_some(2),
            branches: vec![b(7, 3, 4), b(5, 5, 8), b(3, 7, 4)],
            branch_stride: 2,
            trunk: vec![conv3(2, false), conv3(2, false)],
            head: vec![96, 16],
            output_nodes,
        },
        2 | 3 => AkTopology {
            depth,
            task,
            input_size: BlockRef::size_at(depth),
            pool: None,
            branches: vec![b(5, 1, 4), b(3, 3, 8), b(1, 5, 4)],
            branch_stride: 1,
            trunk: if depth == 2 {
                vec![conv3(2, false), conv3(2, false)]
            } else {
                vec![conv3(1, true), conv3(2, false)]
            },
            head: vec![96, 16],
            output_nodes,
        },
        4 if task == Task::Mnrc => AkTopology {
            depth,
            task,
            input_size: 4,
            pool: None,
            branches: Vec::new(),
            branch_stride: 1,
            trunk: vec![TrunkConv {
                kernel: 3,
                channels: 16,
                stride: 1,
                same_padding: false,
            }],
            head: vec![32],
            output_nodes,
        },
        _ => return Err(ModelError::InvalidTopology { task, depth }),
    };
    if square_kernels {
        topo.branches = topo.branches.into_iter().map(square).collect();
    }
    Ok(topo)
}

impl AkTopology {
    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.input_size, self.input_size]
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let leaky = || LayerSpec::LeakyRelu { alpha: LEAKY_ALPHA };
        let mut specs = Vec::new();
        if let Some(k) = self.pool {
            specs.push(LayerSpec::AvgPool { size: k });
        }
        if !self.branches.is_empty() {
            specs.push(LayerSpec::Concat(
                self.branches
                    .iter()
                    .map(|b| vec![LayerSpec::conv_same(b.kh, b.kw, b.channels, self.branch_stride), leaky()])
                    .collect(),
            ));
        }
        for t in &self.trunk {
            specs.push(if t.same_padding {
                LayerSpec::conv_same(t.kernel, t.kernel, t.channels, t.stride)
            } else {
                LayerSpec::conv(t.kernel, t.kernel, t.channels, t.stride)
            });
            specs.push(leaky());
        }
        for &width in &self.head {
            specs.push(LayerSpec::Dense { width });
            specs.push(leaky());
            specs.push(LayerSpec::Dropout { rate: DROPOUT_RATE });
        }
        specs.push(LayerSpec::Dense {
            width: self.output_nodes,
        });
        if self.task == Task::Size {
            specs.push(LayerSpec::Softmax);
        }
        specs
    }

    pub fn build_network(&self, seed: u64) -> Result<Network64, ModelError> {
        Ok(Network64::build(self.input_shape(), self.layer_specs(), seed)?)
    }

    pub fn parameter_count(&self) -> usize {
        self.build_network(0).map(|n| n.parameter_count()).unwrap_or(0)
    }
}

/// Scale to [0, 1] and remove the block mean.
pub fn normalize_block<T: intra_nn::Scalar>(block: &[u8]) -> Vec<T> {
    let mean = block.iter().map(|&v| v as f64).sum::<f64>() / block.len() as f64 / 255.0;
    block
        .iter()
        .map(|&v| T::from_f64(v as f64 / 255.0 - mean).expect("finite"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelKey {
    pub task: Task,
    pub depth: u8,
    pub qp: u8,
}

#[derive(Clone, Debug)]
pub struct BankEntry {
    pub network: Network32,
    pub square_kernels: bool,
}

/// Trained inference models keyed by task, depth and anchor QP.
#[derive(Clone, Debug, Default)]
pub struct ModelBank {
    models: BTreeMap<ModelKey, BankEntry>,
}

const MAGIC: &[u8; 4] = b"AKCN";
const VERSION: u32 = 1;

impl ModelBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task: Task, depth: u8, qp: u8, network: Network32, square_kernels: bool) {
        self.models.insert(
            ModelKey { task, depth, qp },
            BankEntry {
                network,
                square_kernels,
            },
        );
    }

    pub fn get(&self, task: Task, depth: u8, qp: u8) -> Result<&Network32, ModelError> {
        self.models
            .get(&ModelKey { task, depth, qp })
            .map(|e| &e.network)
            .ok_or(ModelError::MissingModel { task, depth, qp })
    }

    pub fn contains(&self, task: Task, depth: u8, qp: u8) -> bool {
        self.models.contains_key(&ModelKey { task, depth, qp })
    }

    pub fn keys(&self) -> impl Iterator<Item = &ModelKey> {
        self.models.keys()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn merge(&mut self, other: ModelBank) {
        self.models.extend(other.models);
    }

    pub fn task_depths(task: Task) -> std::ops::RangeInclusive<u8> {
        match task {
            Task::Size => 0..=3,
            Task::Mnrc => 0..=4,
        }
    }

    /// First missing (depth, anchor) slot for `task` over `depths`.
    pub fn check_complete(&self, task: Task, depths: impl IntoIterator<Item = u8>) -> Result<(), ModelError> {
        for depth in depths {
            for qp in ANCHOR_QPS {
                self.get(task, depth, qp)?;
            }
        }
        Ok(())
    }

    /// `(p_nonsplit, p_split)` per block, in input order.
    pub fn classify_split(&self, depth: u8, blocks: &[&[u8]], qp: u8) -> Result<Vec<[f32; 2]>, ModelError> {
        let out = self.infer(Task::Size, depth, blocks, qp)?;
        Ok(out.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    /// Expectation vectors clamped to [0, 1], per block.
    pub fn predict_expectations(&self, depth: u8, blocks: &[&[u8]], qp: u8) -> Result<Vec<[f32; 3]>, ModelError> {
        let out = self.infer(Task::Mnrc, depth, blocks, qp)?;
        Ok(out
            .chunks(3)
            .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
            .collect())
    }

    pub fn predict_gear(&self, depth: u8, blocks: &[&[u8]], qp: u8) -> Result<Vec<u8>, ModelError> {
        Ok(self
            .predict_expectations(depth, blocks, qp)?
            .iter()
            .map(|e| gear_from_expectations(e))
            .collect())
    }

    fn infer(&self, task: Task, depth: u8, blocks: &[&[u8]], qp: u8) -> Result<Vec<f32>, ModelError> {
        let net = self.get(task, depth, qp)?;
        let per = net.input_len();
        let mut data = Vec::with_capacity(blocks.len() * per);
        for b in blocks {
            if b.len() != per {
                return Err(NnError::Shape(format!("block of {} samples for a {per}-sample model", b.len())).into());
            }
            data.extend(normalize_block::<f32>(b));
        }
        let [c, h, w] = net.input_shape();
        let x = Tensor32::from_vec(&[blocks.len(), c, h, w], data)?;
        Ok(net.predict(&x)?.into_data())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.models.len() as u32).to_le_bytes());
        for (key, entry) in &self.models {
            let tag = match key.task {
                Task::Size => 0u8,
                Task::Mnrc => 1,
            } | if entry.square_kernels { 0x80 } else { 0 };
            out.extend_from_slice(&[tag, key.depth, key.qp]);
            let tensors = entry.network.tensors();
            out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
            for (name, t) in tensors {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
                for &d in t.dims() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for &v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ModelError::Version(version));
        }
        let count = r.u32()?;
        let mut bank = ModelBank::new();
        for _ in 0..count {
            let head = r.take(3)?;
            let (tag, depth, qp) = (head[0], head[1], head[2]);
            let task = match tag & 0x7f {
                0 => Task::Size,
                1 => Task::Mnrc,
                t => return Err(ModelError::Truncated(format!("unknown task tag {t}"))),
            };
            let square_kernels = tag & 0x80 != 0;
            let topo = build_topology(depth, task, square_kernels)?;
            let mut net = topo.build_network(0)?.cast::<f32>();
            let n = r.u32()? as usize;
            if n != net.tensors().len() {
                return Err(ModelError::Truncated(format!("{n} tensors for a {}-tensor model", net.tensors().len())));
            }
            for _ in 0..n {
                let len = r.u32()? as usize;
                let name = String::from_utf8(r.take(len)?.to_vec())
                    .map_err(|_| ModelError::Truncated("tensor name is not UTF-8".into()))?;
                let rank = r.u32()? as usize;
                if rank > 4 {
                    return Err(ModelError::Truncated(format!("rank {rank}")));
                }
                let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
                let len: usize = dims.iter().product();
                let raw = r.take(len * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                net.set_tensor(&name, &Tensor32::from_vec(&dims, data)?)?;
            }
            bank.insert(task, depth, qp, net, square_kernels);
        }
        if r.at != bytes.len() {
            return Err(ModelError::Truncated("trailing bytes".into()));
        }
        Ok(bank)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.at..e];
                self.at = e;
                Ok(s)
            }
            None => Err(ModelError::Truncated(format!("need {n} bytes at offset {}", self.at))),
        }
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// 1-based position of the largest expectation; ties go to the larger gear.
pub fn gear_from_expectations(e: &[f32; 3]) -> u8 {
    let mut best = 0;
    for i in 1..3 {
        if e[i] >= e[best] {
            best = i;
        }
    }
    best as u8 + 1
}
