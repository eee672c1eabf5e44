//! Swing extraction and offline change-point segmentation.
//!
//! Both solvers minimise the multivariate L2 cost (sum of squared deviations
//! from the segment mean). [`detect_changepoints_dynp`] places a fixed number
//! of breakpoints; [`detect_changepoints_pelt`] trades cost against a
//! per-breakpoint penalty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ImuFrame;
use crate::preprocess::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("bad segment range [{a}, {b}) for signal of length {n}")]
    BadRange { a: usize, b: usize, n: usize },
    #[error("signal of length {n} too short (need {needed})")]
    TooShort { n: usize, needed: usize },
    #[error("no swings found")]
    NoSwingsFound,
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

/// Number of phases in one forehand.
pub const N_PHASES: usize = 5;

/// Forehand phases in temporal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Backswing = 0,
    Backloop = 1,
    ForwardSwing = 2,
    FollowThrough = 3,
    Recovery = 4,
}

impl Phase {
    pub const ALL: [Phase; N_PHASES] = [
        Phase::Backswing,
        Phase::Backloop,
        Phase::ForwardSwing,
        Phase::FollowThrough,
        Phase::Recovery,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Backswing => "backswing",
            Phase::Backloop => "backloop",
            Phase::ForwardSwing => "forward_swing",
            Phase::FollowThrough => "follow_through",
            Phase::Recovery => "recovery",
        }
    }
}

/// Segment cost `sum_i ||x_i - mean(x[a..b))||^2`, computed directly.
pub fn segment_cost_l2<T: Scalar>(
    signal: &FeatureMatrix<T>,
    a: usize,
    b: usize,
) -> Result<T, SegmentError> {
    let n = signal.nrows();
    if a >= b || b > n {
        return Err(SegmentError::BadRange { a, b, n });
    }
    let len = T::from_usize_lossy(b - a);
    let mut total = T::zero();
    for j in 0..signal.ncols() {
        let mean = (a..b).map(|i| signal.get(i, j)).sum::<T>() / len;
        total += (a..b)
            .map(|i| {
                let d = signal.get(i, j) - mean;
                d * d
            })
            .sum::<T>();
    }
    Ok(total)
}

/// O(1) L2 segment costs from cumulative sums of the (globally centered) signal.
#[derive(Debug, Clone)]
pub struct L2Cost<T> {
    n: usize,
    d: usize,
    sum: Vec<T>,
    sum_sq: Vec<T>,
}

impl<T: Scalar> L2Cost<T> {
    pub fn new(signal: &FeatureMatrix<T>) -> Self {
        let (n, d) = (signal.nrows(), signal.ncols());
        let nf = T::from_usize_lossy(n);
        let center: Vec<T> = (0..d)
            .map(|j| signal.iter_rows().map(|r| r[j]).sum::<T>() / nf)
            .collect();
        let mut sum = vec![T::zero(); (n + 1) * d];
        let mut sum_sq = vec![T::zero(); (n + 1) * d];
        for (i, row) in signal.iter_rows().enumerate() {
            for j in 0..d {
                let x = row[j] - center[j];
                sum[(i + 1) * d + j] = sum[i * d + j] + x;
                sum_sq[(i + 1) * d + j] = sum_sq[i * d + j] + x * x;
            }
        }
        Self { n, d, sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Cost of `[a, b)`; callers guarantee `a < b <= n`.
    #[inline]
    pub fn cost(&self, a: usize, b: usize) -> T {
        let len = T::from_usize_lossy(b - a);
        let mut total = T::zero();
        for j in 0..self.d {
            let s = self.sum[b * self.d + j] - self.sum[a * self.d + j];
            let sq = self.sum_sq[b * self.d + j] - self.sum_sq[a * self.d + j];
            total += sq - s * s / len;
        }
        total.max(T::zero())
    }
}

/// Exact fixed-count segmentation by dynamic programming.
///
/// Returns the `n_bkps` interior breakpoints (each the first index of a new
/// segment). Among equal-cost placements the lexicographically smallest
/// breakpoint tuple wins.
pub fn detect_changepoints_dynp<T: Scalar>(
    signal: &FeatureMatrix<T>,
    n_bkps: usize,
    min_seg_len: usize,
) -> Result<Vec<usize>, SegmentError> {
    let m = min_seg_len.max(1);
    let n = signal.nrows();
    let needed = (n_bkps + 1) * m;
    if n < needed {
        return Err(SegmentError::TooShort { n, needed });
    }
    if n_bkps == 0 {
        return Ok(Vec::new());
    }
    let cost = L2Cost::new(signal);

    // best[j][s]: min cost of splitting the suffix [s, n) into j + 1 segments.
    // next[j][s]: the smallest end of the first of those segments achieving it.
    let inf = T::infinity();
    let mut best = vec![vec![inf; n + 1]; n_bkps + 1];
    let mut next = vec![vec![usize::MAX; n + 1]; n_bkps + 1];
    for s in 0..=(n - m) {
        best[0][s] = cost.cost(s, n);
        next[0][s] = n;
    }
    for j in 1..=n_bkps {
        // The suffix needs room for j + 1 segments.
        let last_start = n - (j + 1) * m;
        for s in 0..=last_start {
            let mut best_val = inf;
            let mut best_t = usize::MAX;
            for t in (s + m)..=(n - j * m) {
                let v = cost.cost(s, t) + best[j - 1][t];
                if v < best_val {
                    best_val = v;
                    best_t = t;
                }
            }
            best[j][s] = best_val;
            next[j][s] = best_t;
        }
    }

    let mut bkps = Vec::with_capacity(n_bkps);
    let mut s = 0;
    for j in (1..=n_bkps).rev() {
        s = next[j][s];
        bkps.push(s);
    }
    Ok(bkps)
}

/// Penalised segmentation by PELT.
///
/// Minimises total L2 cost plus `penalty` per breakpoint. Pruning only drops
/// start points that are strictly worse for every admissible later end, so the
/// result equals unpruned optimal partitioning, including its tie rule: for
/// each end point the earliest optimal segment start is kept.
pub fn detect_changepoints_pelt<T: Scalar>(
    signal: &FeatureMatrix<T>,
    penalty: T,
    min_seg_len: usize,
) -> Result<Vec<usize>, SegmentError> {
    let m = min_seg_len.max(1);
    let n = signal.nrows();
    if n < m {
        return Err(SegmentError::TooShort { n, needed: m });
    }
    if penalty.is_nan() || penalty < T::zero() {
        return Err(SegmentError::BadParam(format!("penalty must be >= 0, got {penalty}")));
    }
    let cost = L2Cost::new(signal);
    let inf = T::infinity();
    let mut f = vec![inf; n + 1];
    let mut prev = vec![0usize; n + 1];
    f[0] = -penalty;

    struct Candidate {
        start: usize,
        expires: usize,
    }
    let mut candidates: Vec<Candidate> = Vec::new();

    for t in m..=n {
        let s_new = t - m;
        if f[s_new].is_finite() {
            // keep ascending order so ties resolve to the earliest start
            let pos = candidates.partition_point(|c| c.start < s_new);
            candidates.insert(
                pos,
                Candidate {
                    start: s_new,
                    expires: usize::MAX,
                },
            );
        }
        candidates.retain(|c| t < c.expires);

        let mut best = inf;
        let mut arg = 0;
        for c in &candidates {
            let v = f[c.start] + cost.cost(c.start, t) + penalty;
            if v < best {
                best = v;
                arg = c.start;
            }
        }
        f[t] = best;
        prev[t] = arg;

        if best.is_finite() {
            for c in candidates.iter_mut() {
                if c.expires == usize::MAX && f[c.start] + cost.cost(c.start, t) > best {
                    // Still usable for ends closer than one minimum segment.
                    c.expires = t + m;
                }
            }
        }
    }

    let mut bkps = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = prev[t];
        if s > 0 {
            bkps.push(s);
        }
        t = s;
    }
    bkps.reverse();
    Ok(bkps)
}

/// Frame range `[start, end)` around one detected swing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwingWindow {
    pub start: usize,
    pub end: usize,
    /// Frame of peak angular speed, taken as the impact.
    pub peak: usize,
}

impl SwingWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

/// Peak-picking parameters for [`extract_swings`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingParams {
    /// Peaks below this fraction of the session's largest speed are ignored.
    pub threshold_frac: f64,
    /// Minimum distance between accepted peaks, in frames.
    pub refractory: usize,
    pub pre_frames: usize,
    pub post_frames: usize,
    pub min_swing_len: usize,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self {
            threshold_frac: 0.4,
            refractory: 30,
            pre_frames: 40,
            post_frames: 60,
            min_swing_len: 5 * DEFAULT_MIN_SEG_LEN,
        }
    }
}

pub const DEFAULT_MIN_SEG_LEN: usize = 3;

/// Angular-speed proxy `||delta(yaw, roll, pitch) / delta t||`; frame 0 gets 0.
pub fn angular_speed(frames: &[ImuFrame]) -> Vec<f64> {
    let mut speed = vec![0.0; frames.len()];
    for i in 1..frames.len() {
        let (a, b) = (&frames[i - 1], &frames[i]);
        let dt = b.t - a.t;
        if dt <= 0.0 {
            continue;
        }
        let dy = b.yaw - a.yaw;
        let dr = b.roll - a.roll;
        let dp = b.pitch - a.pitch;
        speed[i] = (dy * dy + dr * dr + dp * dp).sqrt() / dt;
    }
    speed
}

/// Finds swings as well-separated peaks of angular speed.
///
/// Windows that would overlap are trimmed at the midpoint between their
/// peaks; windows shorter than `min_swing_len` are discarded.
pub fn extract_swings(
    frames: &[ImuFrame],
    params: &SwingParams,
) -> Result<Vec<SwingWindow>, SegmentError> {
    if !(0.0..=1.0).contains(&params.threshold_frac) {
        return Err(SegmentError::BadParam(format!(
            "threshold_frac {} outside [0, 1]",
            params.threshold_frac
        )));
    }
    let speed = angular_speed(frames);
    let n = speed.len();
    let global_max = speed.iter().copied().fold(0.0, f64::max);
    if global_max <= 0.0 || n < 3 {
        return Err(SegmentError::NoSwingsFound);
    }
    let threshold = params.threshold_frac * global_max;

    let mut peaks: Vec<usize> = (1..n)
        .filter(|&i| {
            let left = speed[i - 1];
            let right = if i + 1 < n { speed[i + 1] } else { f64::NEG_INFINITY };
            speed[i] > left && speed[i] >= right && speed[i] > threshold
        })
        .collect();
    // Strongest first; index breaks ties so the result is deterministic.
    peaks.sort_by(|&a, &b| speed[b].total_cmp(&speed[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for p in peaks {
        if accepted.iter().all(|&q| p.abs_diff(q) >= params.refractory.max(1)) {
            accepted.push(p);
        }
    }
    accepted.sort_unstable();

    let mut windows: Vec<SwingWindow> = accepted
        .iter()
        .map(|&peak| SwingWindow {
            start: peak.saturating_sub(params.pre_frames),
            end: (peak + params.post_frames + 1).min(n),
            peak,
        })
        .collect();
    for i in 1..windows.len() {
        if windows[i - 1].end > windows[i].start {
            let mid = (windows[i - 1].peak + windows[i].peak).div_ceil(2);
            windows[i - 1].end = mid;
            windows[i].start = mid;
        }
    }
    windows.retain(|w| w.len() >= params.min_swing_len.max(1));
    if windows.is_empty() {
        return Err(SegmentError::NoSwingsFound);
    }
    Ok(windows)
}

/// Four breakpoints splitting one swing into the five phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    /// Interior frame indices, strictly increasing.
    pub breakpoints: [usize; 4],
    /// Swing length in frames.
    pub len: usize,
}

impl PhaseSegmentation {
    pub fn new(breakpoints: [usize; 4], len: usize) -> Result<Self, SegmentError> {
        let ok = breakpoints[0] > 0
            && breakpoints.windows(2).all(|w| w[0] < w[1])
            && breakpoints[3] < len;
        if !ok {
            return Err(SegmentError::BadParam(format!(
                "breakpoints {breakpoints:?} invalid for length {len}"
            )));
        }
        Ok(Self { breakpoints, len })
    }

    /// Phase index of frame `i`: the number of breakpoints at or before it.
    pub fn phase_of(&self, i: usize) -> usize {
        self.breakpoints.iter().filter(|&&b| b <= i).count()
    }

    pub fn phases(&self) -> Vec<usize> {
        (0..self.len).map(|i| self.phase_of(i)).collect()
    }

    /// `(start, end)` of each of the five segments.
    pub fn segments(&self) -> [(usize, usize); N_PHASES] {
        let b = self.breakpoints;
        [(0, b[0]), (b[0], b[1]), (b[1], b[2]), (b[2], b[3]), (b[3], self.len)]
    }
}

/// Splits one swing's per-frame features into the five phases.
pub fn segment_phases<T: Scalar>(
    swing: &FeatureMatrix<T>,
    min_seg_len: usize,
) -> Result<PhaseSegmentation, SegmentError> {
    let bkps = detect_changepoints_dynp(swing, N_PHASES - 1, min_seg_len)?;
    PhaseSegmentation::new([bkps[0], bkps[1], bkps[2], bkps[3]], swing.nrows())
}
