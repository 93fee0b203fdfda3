//! Interpolating anchor-QP model outputs to intermediate QPs with weights
//! derived from measured splitting rates.

use std::collections::BTreeMap;
use std::path::Path;

use intra_core::intra::PartitionTree;
use intra_core::MAX_DEPTH;
use serde::{Deserialize, Serialize};

use crate::ak_models::{ModelBank, ModelError, ANCHOR_QPS};

pub const MIN_QP: u8 = 22;
pub const MAX_QP: u8 = 37;
/// Interpolation weights are snapped to this grid.
const COEFF_QUANTUM: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error("QP {0} outside the supported range {MIN_QP}..={MAX_QP}")]
    QpOutOfRange(u8),
    #[error("prediction vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no interpolation priors for depth {depth}, QP {qp}")]
    MissingPriors { depth: u8, qp: u8 },
    #[error("priors file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Pixels covered by chosen leaves of each depth (depth 4 = 4×4 PUs).
pub fn leaf_area_by_depth<'a>(trees: impl IntoIterator<Item = &'a PartitionTree>) -> [u64; 5] {
    fn walk(t: &PartitionTree, s: &mut [u64; 5]) {
        if t.split {
            t.children.iter().for_each(|c| walk(c, s));
        } else {
            let n = t.block.size() as u64;
            s[t.block.depth as usize] += n * n;
        }
    }
    let mut s = [0; 5];
    for t in trees {
        walk(t, &mut s);
    }
    s
}

/// `p_i = Σ_{k>i} S_k / Σ_{k≥i} S_k` for depths 0..=3; `None` when no
/// area reaches depth `i`.
pub fn splitting_rates(area: &[u64; 5]) -> [Option<f64>; 4] {
    let mut p = [None; 4];
    for (i, slot) in p.iter_mut().enumerate() {
        let den: u64 = area[i..].iter().sum();
        if den > 0 {
            *slot = Some(area[i + 1..].iter().sum::<u64>() as f64 / den as f64);
        }
    }
    p
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplittingRateTable {
    rates: BTreeMap<(u8, u8), f64>,
}

impl SplittingRateTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rates from oracle trees grouped by QP.
    pub fn measure<'a>(per_qp: impl IntoIterator<Item = (u8, &'a [PartitionTree])>) -> Self {
        let mut table = Self::new();
        for (qp, trees) in per_qp {
            for (depth, p) in splitting_rates(&leaf_area_by_depth(trees)).into_iter().enumerate() {
                if let Some(p) = p {
                    table.set(depth as u8, qp, p);
                }
            }
        }
        table
    }

    pub fn set(&mut self, depth: u8, qp: u8, p: f64) {
        self.rates.insert((depth, qp), p);
    }

    pub fn get(&self, depth: u8, qp: u8) -> Option<f64> {
        self.rates.get(&(depth, qp)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, u8, f64)> + '_ {
        self.rates.iter().map(|(&(d, q), &p)| (d, q, p))
    }
}

/// Weights of the lower (`m`) and upper (`n`) anchor for one depth and QP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpCoeffs {
    pub m: u8,
    pub n: u8,
    pub a: f64,
    pub b: f64,
}

impl InterpCoeffs {
    pub fn anchor(qp: u8) -> Self {
        InterpCoeffs { m: qp, n: qp, a: 1.0, b: 0.0 }
    }
}

/// Nearest anchors at or below / at or above `qp`.
pub fn bracket(qp: u8) -> Result<(u8, u8), AdaptError> {
    if !(MIN_QP..=MAX_QP).contains(&qp) {
        return Err(AdaptError::QpOutOfRange(qp));
    }
    if ANCHOR_QPS.contains(&qp) {
        return Ok((qp, qp));
    }
    let m = *ANCHOR_QPS.iter().filter(|&&a| a < qp).max().expect("qp above lowest anchor");
    let n = *ANCHOR_QPS.iter().filter(|&&a| a > qp).min().expect("qp below highest anchor");
    Ok((m, n))
}

fn snap(a: f64) -> f64 {
    (a / COEFF_QUANTUM).round() * COEFF_QUANTUM
}

/// `a = (p_q − p_n) / (p_m − p_n)` clamped to [0, 1], `b = 1 − a`.
pub fn coeffs_from_rates(p_m: f64, p_n: f64, p_q: f64) -> Option<(f64, f64)> {
    if p_m == p_n {
        return None;
    }
    let a = snap(((p_q - p_n) / (p_m - p_n)).clamp(0.0, 1.0));
    Some((a, 1.0 - a))
}

/// Coefficients for `depth` at `qp`, falling back to linear-in-QP weights
/// when the anchor rates coincide or are missing.
pub fn derive_coeffs(table: &SplittingRateTable, depth: u8, qp: u8) -> Result<InterpCoeffs, AdaptError> {
    let (m, n) = bracket(qp)?;
    if m == n {
        return Ok(InterpCoeffs::anchor(qp));
    }
    let rates = (table.get(depth, m), table.get(depth, n), table.get(depth, qp));
    let (a, b) = match rates {
        (Some(pm), Some(pn), Some(pq)) => coeffs_from_rates(pm, pn, pq),
        _ => None,
    }
    .unwrap_or_else(|| {
        let a = snap((n - qp) as f64 / (n - m) as f64);
        (a, 1.0 - a)
    });
    Ok(InterpCoeffs { m, n, a, b })
}

/// `a·y_m + b·y_n`.
pub fn interpolate_prediction(y_m: &[f64], y_n: &[f64], c: &InterpCoeffs) -> Result<Vec<f64>, AdaptError> {
    if y_m.len() != y_n.len() {
        return Err(AdaptError::LengthMismatch(y_m.len(), y_n.len()));
    }
    Ok(y_m.iter().zip(y_n).map(|(&x, &y)| c.a * x + c.b * y).collect())
}

/// Stored splitting rates plus the coefficients derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub rates: SplittingRateTable,
    coeffs: BTreeMap<(u8, u8), InterpCoeffs>,
    /// Also interpolate mode-candidate regressors (depth 4 reuses the
    /// depth-3 coefficients).
    pub interpolate_mnrc: bool,
}

#[derive(Serialize, Deserialize)]
struct PriorsFile {
    interpolate_mnrc: bool,
    rate: Vec<RateRecord>,
    coeff: Vec<CoeffRecord>,
}

#[derive(Serialize, Deserialize)]
struct RateRecord {
    depth: u8,
    qp: u8,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct CoeffRecord {
    depth: u8,
    qp: u8,
    #[serde(flatten)]
    c: InterpCoeffs,
}

impl Priors {
    /// Derive coefficients for every depth 0..=3 and QP in range.
    pub fn derive(rates: SplittingRateTable) -> Self {
        let mut coeffs = BTreeMap::new();
        for depth in 0..MAX_DEPTH {
            for qp in MIN_QP..=MAX_QP {
                coeffs.insert((depth, qp), derive_coeffs(&rates, depth, qp).expect("qp in range"));
            }
        }
        Priors {
            rates,
            coeffs,
            interpolate_mnrc: true,
        }
    }

    pub fn coeffs(&self, depth: u8, qp: u8) -> Result<InterpCoeffs, AdaptError> {
        let (m, n) = bracket(qp)?;
        if m == n {
            return Ok(InterpCoeffs::anchor(qp));
        }
        self.coeffs
            .get(&(depth.min(MAX_DEPTH - 1), qp))
            .copied()
            .ok_or(AdaptError::MissingPriors { depth, qp })
    }

    pub fn to_toml(&self) -> String {
        let file = PriorsFile {
            interpolate_mnrc: self.interpolate_mnrc,
            rate: self.rates.iter().map(|(depth, qp, p)| RateRecord { depth, qp, p }).collect(),
            coeff: self.coeffs.iter().map(|(&(depth, qp), &c)| CoeffRecord { depth, qp, c }).collect(),
        };
        toml::to_string(&file).expect("priors serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, AdaptError> {
        let file: PriorsFile = toml::from_str(text).map_err(|e| AdaptError::Format(e.to_string()))?;
        let mut rates = SplittingRateTable::new();
        for r in file.rate {
            if !(0.0..=1.0).contains(&r.p) {
                return Err(AdaptError::Format(format!("rate {} outside [0, 1]", r.p)));
            }
            rates.set(r.depth, r.qp, r.p);
        }
        Ok(Priors {
            rates,
            coeffs: file.coeff.into_iter().map(|r| ((r.depth, r.qp), r.c)).collect(),
            interpolate_mnrc: file.interpolate_mnrc,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AdaptError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AdaptError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn blend<const K: usize>(ym: &[[f32; K]], yn: &[[f32; K]], c: &InterpCoeffs) -> Vec<[f32; K]> {
    ym.iter()
        .zip(yn)
        .map(|(u, v)| std::array::from_fn(|i| (c.a * u[i] as f64 + c.b * v[i] as f64) as f32))
        .collect()
}

/// Split probabilities at any QP in range: direct anchor inference at the
/// anchors, interpolation in between.
pub fn adapted_split_probs(
    bank: &ModelBank,
    priors: Option<&Priors>,
    depth: u8,
    blocks: &[&[u8]],
    qp: u8,
) -> Result<Vec<[f32; 2]>, AdaptError> {
    let (m, n) = bracket(qp)?;
    if m == n {
        return Ok(bank.classify_split(depth, blocks, qp)?);
    }
    let priors = priors.ok_or(AdaptError::MissingPriors { depth, qp })?;
    let c = priors.coeffs(depth, qp)?;
    Ok(blend(
        &bank.classify_split(depth, blocks, m)?,
        &bank.classify_split(depth, blocks, n)?,
        &c,
    ))
}

/// Expectation vectors at any QP in range. With interpolation disabled the
/// nearer anchor (lower on ties) is used.
pub fn adapted_expectations(
    bank: &ModelBank,
    priors: Option<&Priors>,
    depth: u8,
    blocks: &[&[u8]],
    qp: u8,
) -> Result<Vec<[f32; 3]>, AdaptError> {
    let (m, n) = bracket(qp)?;
    if m == n {
        return Ok(bank.predict_expectations(depth, blocks, qp)?);
    }
    let priors = priors.ok_or(AdaptError::MissingPriors { depth, qp })?;
    if !priors.interpolate_mnrc {
        let nearest = if qp - m <= n - qp { m } else { n };
        return Ok(bank.predict_expectations(depth, blocks, nearest)?);
    }
    let c = priors.coeffs(depth, qp)?;
    Ok(blend(
        &bank.predict_expectations(depth, blocks, m)?,
        &bank.predict_expectations(depth, blocks, n)?,
        &c,
    ))
}
