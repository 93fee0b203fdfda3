//! Rate-distortion and complexity metrics plus the CSV reports built on
//! them.

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("an RD curve needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("RD curve is not monotone: {0}")]
    NonMonotone(String),
    #[error("RD curves do not overlap in PSNR")]
    NoOverlap,
    #[error("baseline time must be positive")]
    NonPositiveTime,
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// Rate-distortion points sorted by rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// `(rate, psnr)` points; rate and PSNR must both strictly increase
    /// once sorted by rate.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        if points.len() < 4 {
            return Err(EvalError::TooFewPoints(points.len()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) || w[0].0 <= 0.0 {
                return Err(EvalError::NonMonotone(format!("{:?} then {:?}", w[0], w[1])));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn psnr_range(&self) -> (f64, f64) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }
}

/// Least-squares cubic `ln(rate) ≈ Σ c_k t^k` with `t = (psnr − mid) / half`.
struct CubicFit {
    c: [f64; 4],
    mid: f64,
    half: f64,
}

impl CubicFit {
    fn new(curve: &RdCurve) -> Self {
        let (lo, hi) = curve.psnr_range();
        let mid = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(1e-9);
        // normal equations on the scaled abscissa
        let mut a = [[0.0f64; 5]; 4];
        for &(rate, psnr) in &curve.points {
            let t = (psnr - mid) / half;
            let y = rate.ln();
            let pw = [1.0, t, t * t, t * t * t];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] += pw[i] * pw[j];
                }
                a[i][4] += pw[i] * y;
            }
        }
        CubicFit {
            c: solve4(a),
            mid,
            half,
        }
    }

    /// ∫ fit d(psnr) over [x0, x1], via the antiderivative in t.
    fn integral(&self, x0: f64, x1: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.mid) / self.half;
            self.c
                .iter()
                .enumerate()
                .map(|(k, &ck)| ck * t.powi(k as i32 + 1) / (k + 1) as f64)
                .sum::<f64>()
        };
        self.half * (anti(x1) - anti(x0))
    }
}

fn solve4(mut a: [[f64; 5]; 4]) -> [f64; 4] {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("rows");
        a.swap(col, pivot);
        for row in 0..4 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    std::array::from_fn(|i| a[i][4] / a[i][i])
}

/// Average bitrate difference of `test` against `anchor` at equal PSNR,
/// in percent.
pub fn bd_br(anchor: &RdCurve, test: &RdCurve) -> Result<f64, EvalError> {
    let (a0, a1) = anchor.psnr_range();
    let (t0, t1) = test.psnr_range();
    let lo = a0.max(t0);
    let hi = a1.min(t1);
    if !(hi > lo) {
        return Err(EvalError::NoOverlap);
    }
    let fa = CubicFit::new(anchor);
    let ft = CubicFit::new(test);
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Encoding time saving `(t_base − t_test) / t_base`.
pub fn delta_t(t_baseline: f64, t_test: f64) -> Result<f64, EvalError> {
    if t_baseline <= 0.0 {
        return Err(EvalError::NonPositiveTime);
    }
    Ok((t_baseline - t_test) / t_baseline)
}

/// One evaluated PU: its depth, the gear it was given and its MNRC label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoverRecord {
    pub depth: u8,
    pub gear: u8,
    pub mnrc: u8,
}

/// Per depth 0..=4, the fraction of PUs whose candidate count covers the
/// MNRC; `None` for depths without records.
pub fn cover_rate(records: &[CoverRecord]) -> [Option<f64>; 5] {
    let mut hit = [0u64; 5];
    let mut all = [0u64; 5];
    for r in records {
        let d = r.depth as usize;
        all[d] += 1;
        if crate::fast_pipeline::gear_to_candidates(r.gear, r.depth) >= r.mnrc as usize {
            hit[d] += 1;
        }
    }
    std::array::from_fn(|d| (all[d] > 0).then(|| hit[d] as f64 / all[d] as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Accuracy among confident samples; absent when none is confident.
    pub accuracy: Option<f64>,
    pub confident_ratio: f64,
}

/// Accuracy and confident ratio of split predictions along `grid`.
/// `samples` pairs `(p_nonsplit, p_split)` with the true label (1 = split).
pub fn threshold_curves(samples: &[([f32; 2], u8)], grid: &[f64]) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&th| {
            let mut confident = 0usize;
            let mut correct = 0usize;
            for (p, label) in samples {
                if (p[0].max(p[1]) as f64) >= th {
                    confident += 1;
                    let predicted = u8::from(p[1] >= p[0]);
                    correct += usize::from(predicted == *label);
                }
            }
            CurvePoint {
                threshold: th,
                accuracy: (confident > 0).then(|| correct as f64 / confident as f64),
                confident_ratio: if samples.is_empty() {
                    0.0
                } else {
                    confident as f64 / samples.len() as f64
                },
            }
        })
        .collect()
}

/// `lo, lo + step, …` up to `hi` inclusive, rounded to the step.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) / step).round() * step).collect()
}

pub const CURVES_HEADER: &str = "depth,threshold,accuracy,confident_ratio";

pub fn curves_csv(per_depth: &[(u8, Vec<CurvePoint>)]) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for (d, pts) in per_depth {
        for p in pts {
            let acc = p.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{d},{:.4},{acc},{:.6}", p.threshold, p.confident_ratio);
        }
    }
    s
}

pub const RD_HEADER: &str = "label,qp,bits,psnr";

#[derive(Clone, Debug, PartialEq)]
pub struct RdRow {
    pub label: String,
    pub qp: u8,
    pub bits: u64,
    pub psnr: f64,
}

pub fn rd_curve_csv(rows: &[RdRow]) -> String {
    let mut s = format!("{RD_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.label, r.qp, r.bits, r.psnr);
    }
    s
}

pub fn parse_rd_curve_csv(text: &str) -> Result<Vec<RdRow>, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some(RD_HEADER) {
        return Err(EvalError::Csv("missing rd_curve header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(EvalError::Csv(format!("row {l:?}")));
            }
            let bad = |e: String| EvalError::Csv(format!("row {l:?}: {e}"));
            Ok(RdRow {
                label: f[0].to_string(),
                qp: f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                bits: f[2].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                psnr: f[3].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            })
        })
        .collect()
}

/// Aggregate outcome of a fast configuration against its baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub bd_br_percent: f64,
    pub delta_t: f64,
    /// 1 − fast leaf evaluations / baseline leaf evaluations.
    pub complexity_reduction: f64,
    pub leaf_evals: u64,
    pub wall_ms: f64,
    pub cover_rate: [Option<f64>; 5],
    /// (RD check, early terminate, early split) per depth.
    pub skip_ratios: [[f64; 3]; 4],
    pub inference_ratio: [f64; 4],
}

pub fn summary_header() -> String {
    let mut h = String::from("label,bd_br_percent,delta_t,complexity_reduction,leaf_evals,wall_ms");
    for d in 0..5 {
        let _ = write!(h, ",cover_d{d}");
    }
    for d in 0..4 {
        let _ = write!(h, ",rdcheck_d{d},terminate_d{d},split_d{d}");
    }
    for d in 0..4 {
        let _ = write!(h, ",inference_d{d}");
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl RunReport {
    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{}",
            self.label, self.bd_br_percent, self.delta_t, self.complexity_reduction, self.leaf_evals, self.wall_ms
        );
        for c in self.cover_rate {
            let _ = write!(s, ",{}", opt(c));
        }
        for r in self.skip_ratios {
            let _ = write!(s, ",{},{},{}", r[0], r[1], r[2]);
        }
        for r in self.inference_ratio {
            let _ = write!(s, ",{r}");
        }
        s
    }

    pub fn parse_row(line: &str) -> Result<Self, EvalError> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 + 5 + 12 + 4 {
            return Err(EvalError::Csv(format!("expected 27 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| EvalError::Csv(format!("{s:?}: {e}")));
        let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let mut cover = [None; 5];
        for (d, c) in cover.iter_mut().enumerate() {
            *c = opt_num(f[6 + d])?;
        }
        let mut skip = [[0.0; 3]; 4];
        for (d, row) in skip.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = num(f[11 + 3 * d + k])?;
            }
        }
        let mut inference = [0.0; 4];
        for (d, v) in inference.iter_mut().enumerate() {
            *v = num(f[23 + d])?;
        }
        Ok(RunReport {
            label: f[0].to_string(),
            bd_br_percent: num(f[1])?,
            delta_t: num(f[2])?,
            complexity_reduction: num(f[3])?,
            leaf_evals: f[4].parse().map_err(|e| EvalError::Csv(format!("{e}")))?,
            wall_ms: num(f[5])?,
            cover_rate: cover,
            skip_ratios: skip,
            inference_ratio: inference,
        })
    }
}

pub fn summary_csv(reports: &[RunReport]) -> String {
    let mut s = summary_header();
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
