//! Multi-objective threshold search: MOEA/D with differential-evolution
//! reproduction over the four split-confidence thresholds.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;

use intra_core::{metrics::psnr_from_sse, CostModel, Frame};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval_harness::{bd_br, CurvePoint, EvalError, RdCurve};
use crate::fast_pipeline::{decide_splits, fast_encode, GearMap, SplitProbabilities, ThresholdVector};
use intra_core::intra::EncodeOptions;

#[derive(Debug, thiserror::Error)]
pub enum EotdError {
    #[error("evaluation corpus is empty")]
    EmptyCorpus,
    #[error("no threshold at depth {depth} reaches {min_accuracy:.0}% accuracy")]
    Infeasible { depth: u8, min_accuracy: f64 },
    #[error("invalid search parameters: {0}")]
    Params(String),
    #[error("malformed archive: {0}")]
    Format(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Complexity reduction (maximized) and RD degradation (minimized).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub c: f64,
    pub r: f64,
}

impl Objectives {
    /// Both objectives in minimization form.
    pub fn minimized(&self) -> [f64; 2] {
        [-self.c, self.r]
    }

    /// At least as good in both objectives and strictly better in one.
    pub fn dominates(&self, other: &Objectives) -> bool {
        let (a, b) = (self.minimized(), other.minimized());
        a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
    }
}

/// `max_j λ_j · |f_j − z_j|` in minimization form.
pub fn tchebycheff(f: [f64; 2], weight: [f64; 2], z: [f64; 2]) -> f64 {
    (0..2).map(|j| weight[j] * (f[j] - z[j]).abs()).fold(f64::MIN, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParetoPoint {
    pub th: ThresholdVector,
    pub obj: Objectives,
}

/// The nondominated points, duplicates in objective space collapsed to
/// their first occurrence, ordered by C ascending.
pub fn archive_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().any(|q| q.obj.dominates(&p.obj));
        let duplicate = points[..i].iter().any(|q| q.obj == p.obj);
        if !dominated && !duplicate {
            out.push(*p);
        }
    }
    out.sort_by(|a, b| a.obj.c.total_cmp(&b.obj.c));
    out
}

/// Mutually nondominated set with crowding-distance pruning once full.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParetoArchive {
    points: Vec<ParetoPoint>,
    capacity: usize,
}

impl ParetoArchive {
    pub fn new(capacity: usize) -> Self {
        ParetoArchive {
            points: Vec::new(),
            capacity: capacity.max(2),
        }
    }

    pub fn points(&self) -> &[ParetoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Returns whether the archive changed.
    pub fn offer(&mut self, p: ParetoPoint) -> bool {
        if self.points.iter().any(|q| q.obj == p.obj || q.obj.dominates(&p.obj)) {
            return false;
        }
        self.points.retain(|q| !p.obj.dominates(&q.obj));
        self.points.push(p);
        self.points.sort_by(|a, b| a.obj.c.total_cmp(&b.obj.c));
        while self.points.len() > self.capacity {
            self.prune_most_crowded();
        }
        true
    }

    fn prune_most_crowded(&mut self) {
        let n = self.points.len();
        let span_c = self.points[n - 1].obj.c - self.points[0].obj.c;
        let rs = self.points.iter().map(|p| p.obj.r);
        let span_r = rs.clone().fold(f64::MIN, f64::max) - rs.fold(f64::MAX, f64::min);
        let norm = |v: f64, s: f64| if s > 0.0 { v / s } else { 0.0 };
        // extremes are never pruned
        let victim = (1..n - 1)
            .min_by(|&a, &b| {
                let d = |i: usize| {
                    norm(self.points[i + 1].obj.c - self.points[i - 1].obj.c, span_c)
                        + norm((self.points[i + 1].obj.r - self.points[i - 1].obj.r).abs(), span_r)
                };
                d(a).total_cmp(&d(b))
            })
            .expect("capacity is at least 2");
        self.points.remove(victim);
    }

    /// Lowest, median and highest complexity reduction points.
    pub fn operating_points(&self) -> Option<OperatingPoints> {
        let n = self.points.len();
        (n > 0).then(|| OperatingPoints {
            lr: self.points[0],
            ot: self.points[(n - 1) / 2],
            hr: self.points[n - 1],
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("th1,th2,th3,th4,c,r\n");
        for p in &self.points {
            let t = p.th.th;
            let _ = writeln!(s, "{},{},{},{},{},{}", t[0], t[1], t[2], t[3], p.obj.c, p.obj.r);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EotdError> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| EotdError::Format(format!("line {}: {e}", i + 1)))?;
            if v.len() != 6 {
                return Err(EotdError::Format(format!("line {}: {} fields", i + 1, v.len())));
            }
            points.push(ParetoPoint {
                th: ThresholdVector::new([v[0], v[1], v[2], v[3]]),
                obj: Objectives { c: v[4], r: v[5] },
            });
        }
        let capacity = points.len().max(2);
        let mut a = ParetoArchive::new(capacity);
        for p in points {
            a.offer(p);
        }
        Ok(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoints {
    pub lr: ParetoPoint,
    pub ot: ParetoPoint,
    pub hr: ParetoPoint,
}

/// Per-depth admissible threshold ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl FeasibleBox {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        FeasibleBox { lo: [lo; 4], hi: [hi; 4] }
    }

    pub fn contains(&self, th: &ThresholdVector) -> bool {
        (0..4).all(|d| self.lo[d] - 1e-12 <= th.th[d] && th.th[d] <= self.hi[d] + 1e-12)
    }

    pub fn clamp(&self, th: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|d| th[d].clamp(self.lo[d], self.hi[d]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("box serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, EotdError> {
        let b: FeasibleBox = toml::from_str(text).map_err(|e| EotdError::Format(e.to_string()))?;
        if (0..4).any(|d| !(b.lo[d] <= b.hi[d])) {
            return Err(EotdError::Format("lo exceeds hi".into()));
        }
        Ok(b)
    }
}

pub const MIN_ACCURACY: f64 = 0.80;
pub const MAX_ACCURACY: f64 = 0.98;

/// Smallest threshold reaching 80% accuracy and largest staying at or below
/// 98%. When accuracy is above 98% across the whole curve the range
/// collapses to its lower end.
pub fn feasible_range(depth: u8, curve: &[CurvePoint]) -> Result<(f64, f64), EotdError> {
    let measured: Vec<(f64, f64)> = curve.iter().filter_map(|p| p.accuracy.map(|a| (p.threshold, a))).collect();
    let lo = measured
        .iter()
        .find(|(_, a)| *a >= MIN_ACCURACY - 1e-12)
        .map(|(t, _)| *t)
        .ok_or(EotdError::Infeasible {
            depth,
            min_accuracy: MIN_ACCURACY * 100.0,
        })?;
    let hi = measured
        .iter()
        .rev()
        .find(|(t, a)| *t >= lo && *a <= MAX_ACCURACY + 1e-12)
        .map_or(lo, |(t, _)| *t);
    Ok((lo, hi))
}

pub fn feasible_box(curves: &[Vec<CurvePoint>; 4]) -> Result<FeasibleBox, EotdError> {
    let mut b = FeasibleBox::uniform(0.0, 0.0);
    for d in 0..4 {
        let (lo, hi) = feasible_range(d as u8, &curves[d])?;
        b.lo[d] = lo;
        b.hi[d] = hi;
    }
    Ok(b)
}

pub trait Oracle {
    fn evaluate(&self, th: &ThresholdVector) -> Result<Objectives, EotdError>;

    /// Map a candidate onto the oracle's domain (identity unless discrete).
    fn snap(&self, th: [f64; 4]) -> [f64; 4] {
        th
    }
}

fn memo_key(th: &[f64; 4]) -> [i64; 4] {
    std::array::from_fn(|d| (th[d] * 1000.0).round() as i64)
}

/// Caches an oracle's results by thresholds rounded to 1e-3.
pub struct Memo<O> {
    inner: O,
    cache: RefCell<HashMap<[i64; 4], Objectives>>,
    misses: RefCell<usize>,
}

impl<O: Oracle> Memo<O> {
    pub fn new(inner: O) -> Self {
        Memo {
            inner,
            cache: RefCell::new(HashMap::new()),
            misses: RefCell::new(0),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// Evaluations forwarded to the wrapped oracle.
    pub fn misses(&self) -> usize {
        *self.misses.borrow()
    }
}

impl<O: Oracle> Oracle for Memo<O> {
    fn evaluate(&self, th: &ThresholdVector) -> Result<Objectives, EotdError> {
        let key = memo_key(&th.th);
        if let Some(o) = self.cache.borrow().get(&key) {
            return Ok(*o);
        }
        let o = self.inner.evaluate(th)?;
        *self.misses.borrow_mut() += 1;
        self.cache.borrow_mut().insert(key, o);
        Ok(o)
    }

    fn snap(&self, th: [f64; 4]) -> [f64; 4] {
        self.inner.snap(th)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoeadParams {
    pub n_sub: usize,
    pub neighborhood: usize,
    pub generations: usize,
    pub de_scale: f64,
    pub mutation_rate: f64,
    pub mutation_step: f64,
    /// Stop once the archive is unchanged for this many generations.
    pub stagnation: usize,
    pub archive_capacity: usize,
    pub seed: u64,
}

impl Default for MoeadParams {
    fn default() -> Self {
        MoeadParams {
            n_sub: 24,
            neighborhood: 6,
            generations: 30,
            de_scale: 0.5,
            mutation_rate: 0.25,
            mutation_step: 0.05,
            stagnation: 5,
            archive_capacity: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MoeadResult {
    pub archive: ParetoArchive,
    pub z: [f64; 2],
    pub generations_run: usize,
    /// Every evaluated point, in evaluation order.
    pub evaluated: Vec<ParetoPoint>,
}

/// Decomposition-based search inside `bounds`.
pub fn moead_run(oracle: &dyn Oracle, bounds: &FeasibleBox, params: &MoeadParams) -> Result<MoeadResult, EotdError> {
    if params.n_sub < 4 {
        return Err(EotdError::Params(format!("n_sub = {} (needs ≥ 4)", params.n_sub)));
    }
    let t = params.neighborhood.clamp(3, params.n_sub);
    if (0..4).any(|d| !(bounds.lo[d] <= bounds.hi[d])) {
        return Err(EotdError::Params("empty box".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_sub;
    let weights: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let w = i as f64 / (n - 1) as f64;
            [w, 1.0 - w]
        })
        .collect();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                let da = (weights[a][0] - weights[i][0]).abs();
                let db = (weights[b][0] - weights[i][0]).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            idx.truncate(t);
            idx
        })
        .collect();

    let mut archive = ParetoArchive::new(params.archive_capacity);
    let mut evaluated = Vec::new();
    // individuals keep a continuous genotype; the oracle sees its snapped form
    let mut eval = |x: [f64; 4], archive: &mut ParetoArchive| -> Result<(ParetoPoint, bool), EotdError> {
        let th = ThresholdVector::new(bounds.clamp(oracle.snap(x)));
        let obj = oracle.evaluate(&th)?;
        let p = ParetoPoint { th, obj };
        evaluated.push(p);
        let changed = archive.offer(p);
        Ok((p, changed))
    };

    // Step 1: population uniform in the box
    let mut pop: Vec<([f64; 4], ParetoPoint)> = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 4] = std::array::from_fn(|d| {
            if bounds.hi[d] > bounds.lo[d] {
                rng.gen_range(bounds.lo[d]..=bounds.hi[d])
            } else {
                bounds.lo[d]
            }
        });
        pop.push((x, eval(x, &mut archive)?.0));
    }
    let mut z = [f64::INFINITY; 2];
    for (_, p) in &pop {
        let f = p.obj.minimized();
        z = [z[0].min(f[0]), z[1].min(f[1])];
    }

    let mut stale = 0;
    let mut generations_run = 0;
    for _ in 0..params.generations {
        generations_run += 1;
        let mut changed = false;
        for i in 0..n {
            // Step 2.1: DE child from neighborhood parents, then point mutation
            let nb = &neighbors[i];
            let picks: Vec<usize> = rand::seq::index::sample(&mut rng, nb.len(), 3).into_iter().map(|k| nb[k]).collect();
            let (r1, r2, r3) = (picks[0], picks[1], picks[2]);
            let mut x: [f64; 4] = std::array::from_fn(|d| {
                pop[r1].0[d] + params.de_scale * (pop[r2].0[d] - pop[r3].0[d])
            });
            x = bounds.clamp(x);
            for v in x.iter_mut() {
                if rng.gen_bool(params.mutation_rate.clamp(0.0, 1.0)) {
                    *v += rng.gen_range(-params.mutation_step..=params.mutation_step);
                }
            }
            let x = bounds.clamp(x);
            let (child, c) = eval(x, &mut archive)?;
            changed |= c;
            // Step 2.2: reference point
            let f = child.obj.minimized();
            z = [z[0].min(f[0]), z[1].min(f[1])];
            // Step 2.3: neighborhood replacement
            for &j in nb {
                if tchebycheff(f, weights[j], z) <= tchebycheff(pop[j].1.obj.minimized(), weights[j], z) {
                    pop[j] = (x, child);
                }
            }
        }
        debug_assert!(archive
            .points()
            .iter()
            .all(|p| archive.points().iter().all(|q| !q.obj.dominates(&p.obj))));
        stale = if changed { 0 } else { stale + 1 };
        if stale >= params.stagnation {
            break;
        }
    }
    Ok(MoeadResult {
        archive,
        z,
        generations_run,
        evaluated,
    })
}

/// Precomputed inputs for one validation frame at one QP.
pub struct OracleFrame {
    pub frame: Frame,
    pub qp: u8,
    pub probs: SplitProbabilities,
    pub gears: Option<GearMap>,
}

/// Encode-based oracle: C from leaf RD evaluations, R as BD-BR of the
/// corpus-aggregated RD curve against the baseline's.
pub struct EncodeOracle {
    frames: Vec<OracleFrame>,
    baseline_curve: RdCurve,
    baseline_evals: u64,
}

/// Aggregate per-QP `(bits, sse, pixels)` into a rate/PSNR curve.
fn aggregate_curve(per_qp: &HashMap<u8, (u64, u64, u64)>) -> Result<RdCurve, EvalError> {
    let pts = per_qp
        .values()
        .map(|&(bits, sse, px)| (bits as f64, psnr_from_sse(sse, px as usize)))
        .collect();
    RdCurve::new(pts)
}

impl EncodeOracle {
    /// Encodes the baseline once per frame; gears (if any) apply to both
    /// the baseline reference and the candidates only when given.
    pub fn new(frames: Vec<OracleFrame>) -> Result<Self, EotdError> {
        if frames.is_empty() {
            return Err(EotdError::EmptyCorpus);
        }
        let mut per_qp = HashMap::new();
        let mut evals = 0;
        for f in &frames {
            let enc = fast_encode(&f.frame, &CostModel::new(f.qp), None, None, EncodeOptions::default()).encoding;
            let e = per_qp.entry(f.qp).or_insert((0u64, 0u64, 0u64));
            e.0 += enc.total_bits;
            e.1 += enc.sse;
            e.2 += (f.frame.width() * f.frame.height()) as u64;
            evals += enc.stats.total_leaf_evals();
        }
        Ok(EncodeOracle {
            baseline_curve: aggregate_curve(&per_qp)?,
            baseline_evals: evals,
            frames,
        })
    }

    pub fn baseline_curve(&self) -> &RdCurve {
        &self.baseline_curve
    }

    pub fn baseline_evals(&self) -> u64 {
        self.baseline_evals
    }

    /// Fast-encode every frame with `th`; returns the aggregated curve and
    /// total leaf evaluations.
    pub fn run(&self, th: &ThresholdVector) -> Result<(RdCurve, u64), EotdError> {
        let mut per_qp = HashMap::new();
        let mut evals = 0;
        for f in &self.frames {
            let splits = decide_splits(&f.probs, th);
            let enc = fast_encode(
                &f.frame,
                &CostModel::new(f.qp),
                Some(&splits),
                f.gears.as_ref(),
                EncodeOptions::default(),
            )
            .encoding;
            let e = per_qp.entry(f.qp).or_insert((0u64, 0u64, 0u64));
            e.0 += enc.total_bits;
            e.1 += enc.sse;
            e.2 += (f.frame.width() * f.frame.height()) as u64;
            evals += enc.stats.total_leaf_evals();
        }
        Ok((aggregate_curve(&per_qp)?, evals))
    }
}

impl Oracle for EncodeOracle {
    fn evaluate(&self, th: &ThresholdVector) -> Result<Objectives, EotdError> {
        let (curve, evals) = self.run(th)?;
        let c = 1.0 - evals as f64 / self.baseline_evals.max(1) as f64;
        let r = bd_br(&self.baseline_curve, &curve)?;
        Ok(Objectives { c, r })
    }
}

/// Discrete test problem: each gene snaps to one of `levels` evenly spaced
/// values in `[0.5, 1.0]`, objectives are fixed functions of the level index.
pub struct DiscreteToy {
    pub levels: usize,
}

impl DiscreteToy {
    pub fn level_values(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|i| 0.5 + 0.5 * i as f64 / (self.levels - 1) as f64)
            .collect()
    }

    pub fn level_of(&self, v: f64) -> usize {
        (((v - 0.5) / 0.5) * (self.levels - 1) as f64).round().clamp(0.0, (self.levels - 1) as f64) as usize
    }

    /// Lower thresholds give more reduction; each depth trades differently.
    pub fn objectives_of(&self, idx: [usize; 4]) -> Objectives {
        const GAIN: [f64; 4] = [0.10, 0.25, 0.30, 0.35];
        const LOSS: [f64; 4] = [0.05, 0.40, 0.90, 2.00];
        let top = (self.levels - 1) as f64;
        let mut c = 0.0;
        let mut r = 0.0;
        for d in 0..4 {
            let s = (top - idx[d] as f64) / top;
            c += GAIN[d] * s;
            r += LOSS[d] * s * s;
        }
        Objectives { c, r }
    }
}

impl Oracle for DiscreteToy {
    fn evaluate(&self, th: &ThresholdVector) -> Result<Objectives, EotdError> {
        Ok(self.objectives_of(std::array::from_fn(|d| self.level_of(th.th[d]))))
    }

    fn snap(&self, th: [f64; 4]) -> [f64; 4] {
        let values = self.level_values();
        std::array::from_fn(|d| values[self.level_of(th[d])])
    }
}

/// Continuous test problem over `s = (th − 0.5) / 0.5`: C = mean(s),
/// R = max(s), whose front is the diagonal `C = R`.
pub struct ContinuousToy;

impl Oracle for ContinuousToy {
    fn evaluate(&self, th: &ThresholdVector) -> Result<Objectives, EotdError> {
        let s = th.th.map(|v| (v - 0.5) / 0.5);
        Ok(Objectives {
            c: s.iter().sum::<f64>() / 4.0,
            r: s.iter().cloned().fold(f64::MIN, f64::max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: f64, r: f64) -> ParetoPoint {
        ParetoPoint {
            th: ThresholdVector::uniform(0.5),
            obj: Objectives { c, r },
        }
    }

    #[test]
    fn tchebycheff_example() {
        assert_eq!(tchebycheff([2.0, 4.0], [0.5, 0.5], [0.0, 0.0]), 2.0);
    }

    #[test]
    fn dominance_example() {
        let a = Objectives { c: 0.5, r: 1.0 };
        let b = Objectives { c: 0.4, r: 1.0 };
        assert!(a.dominates(&b));
        assert!(!b.dominates(&a));
        assert!(!a.dominates(&a));
    }

    #[test]
    fn filter_examples() {
        let one = archive_filter(&[pt(0.2, 0.3)]);
        assert_eq!(one.len(), 1);
        let f = archive_filter(&[pt(0.3, 1.0), pt(0.5, 2.0), pt(0.4, 3.0)]);
        let objs: Vec<(f64, f64)> = f.iter().map(|p| (p.obj.c, p.obj.r)).collect();
        assert_eq!(objs, vec![(0.3, 1.0), (0.5, 2.0)]);
        assert_eq!(archive_filter(&[pt(0.3, 1.0), pt(0.3, 1.0)]).len(), 1);
    }

    #[test]
    fn archive_offer_keeps_nondominated_and_prunes() {
        let mut a = ParetoArchive::new(3);
        assert!(a.offer(pt(0.1, 0.1)));
        assert!(!a.offer(pt(0.1, 0.1)));
        assert!(!a.offer(pt(0.05, 0.2)));
        assert!(a.offer(pt(0.5, 0.5)));
        assert!(a.offer(pt(0.3, 0.25)));
        assert!(a.offer(pt(0.31, 0.26)));
        assert_eq!(a.len(), 3);
        let cs: Vec<f64> = a.points().iter().map(|p| p.obj.c).collect();
        assert_eq!(cs[0], 0.1);
        assert_eq!(cs[2], 0.5);
        assert!(a.offer(pt(0.6, 0.05)));
        assert_eq!(a.len(), 1);
        let ops = a.operating_points().unwrap();
        assert_eq!(ops.lr, ops.hr);
    }

    #[test]
    fn box_from_curves() {
        let curve = |f: &dyn Fn(f64) -> f64| -> Vec<CurvePoint> {
            crate::eval_harness::threshold_grid(0.5, 1.0, 0.01)
                .into_iter()
                .map(|t| CurvePoint {
                    threshold: t,
                    accuracy: Some(f(t)),
                    confident_ratio: 1.0,
                })
                .collect()
        };
        let flat = curve(&|_| 0.9);
        assert_eq!(feasible_range(0, &flat).unwrap(), (0.5, 1.0));
        let ramp = curve(&|t| 0.8 + (t - 0.62) * (0.18 / 0.32));
        let (lo, hi) = feasible_range(0, &ramp).unwrap();
        assert!((lo - 0.62).abs() < 1e-9 && (hi - 0.94).abs() < 1e-9, "{lo} {hi}");
        let low = curve(&|_| 0.7);
        assert!(matches!(feasible_range(2, &low), Err(EotdError::Infeasible { depth: 2, .. })));
        let high = curve(&|t| 0.985 + t / 100.0);
        assert_eq!(feasible_range(0, &high).unwrap(), (0.5, 0.5));

        let b = feasible_box(&[flat.clone(), ramp, flat.clone(), flat]).unwrap();
        assert_eq!(FeasibleBox::from_toml(&b.to_toml()).unwrap(), b);
    }

    #[test]
    fn memo_skips_repeat_evaluations() {
        let m = Memo::new(ContinuousToy);
        let th = ThresholdVector::new([0.6, 0.7, 0.8, 0.9]);
        let a = m.evaluate(&th).unwrap();
        let b = m.evaluate(&ThresholdVector::new([0.6001, 0.7, 0.8, 0.9])).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.misses(), 1);
    }

    #[test]
    fn run_is_reproducible_and_in_box() {
        let bounds = FeasibleBox {
            lo: [0.5, 0.55, 0.6, 0.5],
            hi: [0.9, 1.0, 0.8, 0.7],
        };
        let params = MoeadParams {
            generations: 10,
            ..MoeadParams::default()
        };
        let a = moead_run(&ContinuousToy, &bounds, &params).unwrap();
        let b = moead_run(&ContinuousToy, &bounds, &params).unwrap();
        assert_eq!(a.archive, b.archive);
        assert!(a.evaluated.iter().all(|p| bounds.contains(&p.th)));
        for p in &a.evaluated {
            let f = p.obj.minimized();
            assert!(a.z[0] <= f[0] && a.z[1] <= f[1]);
        }
        let pts = a.archive.points();
        assert_eq!(archive_filter(pts).len(), pts.len());
        assert!(moead_run(&ContinuousToy, &bounds, &MoeadParams { n_sub: 3, ..params }).is_err());
    }

    #[test]
    fn archive_text_round_trip() {
        let r = moead_run(&ContinuousToy, &FeasibleBox::uniform(0.5, 1.0), &MoeadParams::default()).unwrap();
        let back = ParetoArchive::from_text(&r.archive.to_text()).unwrap();
        assert_eq!(back.points(), r.archive.points());
    }
}
