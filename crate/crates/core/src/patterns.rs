//! Rule-based recognizers for the bearish flag and double top/bottom.
//!
//! These detectors are the labeling oracle for every learning experiment, so
//! their behavior is fully deterministic and every threshold is a ratio of the
//! window's price range — matches are invariant under affine rescaling of the
//! prices.
//!
//! Segment geometry is evaluated on close prices; double-top extrema use
//! highs and double-bottom extrema use lows, matching chart conventions.
//!
//! [`brute_force_flag`] / [`brute_force_double`] are deliberately naive
//! exhaustive searches over all anchor tuples, kept as the reference the fast
//! detectors are verified against on small windows.

use crate::market_data::{
    sliding_windows, timestamp_to_iso, BarSeries, MarketDataError, Window,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("unknown parameter key '{0}'")]
    UnknownKey(String),
    #[error("bad parameter line '{0}' (expected key=value)")]
    BadLine(String),
    #[error("bad value for {key}: '{value}'")]
    BadValue { key: String, value: String },
}

/// The closed set of supported patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    BearishFlag,
    DoubleTop,
    DoubleBottom,
}

impl PatternKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatternKind::BearishFlag => "bearish_flag",
            PatternKind::DoubleTop => "double_top",
            PatternKind::DoubleBottom => "double_bottom",
        }
    }

    pub fn parse(text: &str) -> Option<PatternKind> {
        match text.to_ascii_lowercase().replace('-', "_").as_str() {
            "bearish_flag" | "flag" => Some(PatternKind::BearishFlag),
            "double_top" => Some(PatternKind::DoubleTop),
            "double_bottom" => Some(PatternKind::DoubleBottom),
            _ => None,
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Margins for the bearish-flag recognizer. All fractions are relative to the
/// window's close-price range except `max_flag_retrace`, which is relative to
/// the first pole's drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagParams {
    /// Minimum pole drop as a fraction of the window price range.
    pub min_pole_drop: f64,
    /// Maximum fraction of the pole-1 drop recovered during the flag.
    pub max_flag_retrace: f64,
    /// Bounds on the flag's net per-bar slope, normalized by the range.
    pub flag_slope_lo: f64,
    pub flag_slope_hi: f64,
    /// Pole-2 drop and length must be within this fraction of pole 1's.
    pub pole_ratio_tol: f64,
    /// Maximum pole length in bars.
    pub max_pole_len: usize,
    /// Minimum flag length in bars.
    pub min_flag_len: usize,
}

// Default strictness is calibrated so that pure random walks trigger at most
// a handful of detections per 10k windows while ideal-geometry patterns are
// always caught. Looser settings admit generic drop-pause-drop noise.
impl Default for FlagParams {
    fn default() -> Self {
        Self {
            min_pole_drop: 0.55,
            max_flag_retrace: 0.4,
            flag_slope_lo: 0.0,
            flag_slope_hi: 0.05,
            pole_ratio_tol: 0.15,
            max_pole_len: 10,
            min_flag_len: 6,
        }
    }
}

impl FlagParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let check = |ok: bool, name: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ParamError::Invalid {
                    name,
                    reason: reason.to_string(),
                })
            }
        };
        check(
            self.min_pole_drop > 0.0 && self.min_pole_drop <= 1.0,
            "min_pole_drop",
            "must be in (0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.max_flag_retrace),
            "max_flag_retrace",
            "must be in [0, 1)",
        )?;
        check(
            self.flag_slope_lo <= self.flag_slope_hi,
            "flag_slope_lo",
            "lower slope bound exceeds upper",
        )?;
        check(
            self.pole_ratio_tol > 0.0 && self.pole_ratio_tol <= 1.0,
            "pole_ratio_tol",
            "must be in (0, 1]",
        )?;
        check(self.max_pole_len >= 1, "max_pole_len", "must be >= 1")?;
        check(self.min_flag_len >= 1, "min_flag_len", "must be >= 1")?;
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "min_pole_drop={}\nmax_flag_retrace={}\nflag_slope_lo={}\nflag_slope_hi={}\npole_ratio_tol={}\nmax_pole_len={}\nmin_flag_len={}\n",
            self.min_pole_drop,
            self.max_flag_retrace,
            self.flag_slope_lo,
            self.flag_slope_hi,
            self.pole_ratio_tol,
            self.max_pole_len,
            self.min_flag_len
        )
    }

    pub fn from_kv(text: &str) -> Result<Self, ParamError> {
        let mut p = Self::default();
        for (key, value) in parse_kv_lines(text)? {
            match key.as_str() {
                "min_pole_drop" => p.min_pole_drop = parse_f64(&key, &value)?,
                "max_flag_retrace" => p.max_flag_retrace = parse_f64(&key, &value)?,
                "flag_slope_lo" => p.flag_slope_lo = parse_f64(&key, &value)?,
                "flag_slope_hi" => p.flag_slope_hi = parse_f64(&key, &value)?,
                "pole_ratio_tol" => p.pole_ratio_tol = parse_f64(&key, &value)?,
                "max_pole_len" => p.max_pole_len = parse_usize(&key, &value)?,
                "min_flag_len" => p.min_flag_len = parse_usize(&key, &value)?,
                _ => return Err(ParamError::UnknownKey(key)),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Margins for the double top/bottom recognizer. Fractions are relative to
/// the window price range (max high − min low).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleParams {
    /// The two extrema must agree within this fraction of the range.
    pub extrema_equality_tol: f64,
    /// The pullback must clear both extrema by this fraction of the range.
    pub min_pullback_depth: f64,
    /// Minimum bars between the two extrema.
    pub min_separation: usize,
    /// When set, the price must cross the pullback value again after the
    /// second extremum for the pattern to count.
    pub completion_required: bool,
}

impl Default for DoubleParams {
    fn default() -> Self {
        Self {
            extrema_equality_tol: 0.05,
            min_pullback_depth: 0.1,
            min_separation: 5,
            completion_required: true,
        }
    }
}

impl DoubleParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.extrema_equality_tol > 0.0 && self.extrema_equality_tol <= 1.0) {
            return Err(ParamError::Invalid {
                name: "extrema_equality_tol",
                reason: "must be in (0, 1]".into(),
            });
        }
        if !(self.min_pullback_depth > 0.0 && self.min_pullback_depth <= 1.0) {
            return Err(ParamError::Invalid {
                name: "min_pullback_depth",
                reason: "must be in (0, 1]".into(),
            });
        }
        if self.min_separation < 1 {
            return Err(ParamError::Invalid {
                name: "min_separation",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "extrema_equality_tol={}\nmin_pullback_depth={}\nmin_separation={}\ncompletion_required={}\n",
            self.extrema_equality_tol,
            self.min_pullback_depth,
            self.min_separation,
            self.completion_required
        )
    }

    pub fn from_kv(text: &str) -> Result<Self, ParamError> {
        let mut p = Self::default();
        for (key, value) in parse_kv_lines(text)? {
            match key.as_str() {
                "extrema_equality_tol" => p.extrema_equality_tol = parse_f64(&key, &value)?,
                "min_pullback_depth" => p.min_pullback_depth = parse_f64(&key, &value)?,
                "min_separation" => p.min_separation = parse_usize(&key, &value)?,
                "completion_required" => {
                    p.completion_required =
                        value.parse::<bool>().map_err(|_| ParamError::BadValue {
                            key: key.clone(),
                            value: value.clone(),
                        })?
                }
                _ => return Err(ParamError::UnknownKey(key)),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>, ParamError> {
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ParamError::BadLine(line.to_string()))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ParamError> {
    value.parse().map_err(|_| ParamError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ParamError> {
    value.parse().map_err(|_| ParamError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// A pattern recognizer with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Detector {
    BearishFlag(FlagParams),
    DoubleTop(DoubleParams),
    DoubleBottom(DoubleParams),
}

impl Detector {
    pub fn with_defaults(kind: PatternKind) -> Detector {
        match kind {
            PatternKind::BearishFlag => Detector::BearishFlag(FlagParams::default()),
            PatternKind::DoubleTop => Detector::DoubleTop(DoubleParams::default()),
            PatternKind::DoubleBottom => Detector::DoubleBottom(DoubleParams::default()),
        }
    }

    pub fn kind(&self) -> PatternKind {
        match self {
            Detector::BearishFlag(_) => PatternKind::BearishFlag,
            Detector::DoubleTop(_) => PatternKind::DoubleTop,
            Detector::DoubleBottom(_) => PatternKind::DoubleBottom,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            Detector::BearishFlag(p) => p.validate(),
            Detector::DoubleTop(p) | Detector::DoubleBottom(p) => p.validate(),
        }
    }

    pub fn detect(&self, window: &Window) -> Option<PatternMatch> {
        match self {
            Detector::BearishFlag(p) => detect_bearish_flag(window, p),
            Detector::DoubleTop(p) => detect_double(window, PatternKind::DoubleTop, p),
            Detector::DoubleBottom(p) => detect_double(window, PatternKind::DoubleBottom, p),
        }
    }

    pub fn to_kv(&self) -> String {
        let body = match self {
            Detector::BearishFlag(p) => p.to_kv(),
            Detector::DoubleTop(p) | Detector::DoubleBottom(p) => p.to_kv(),
        };
        format!("kind={}\n{}", self.kind().as_str(), body)
    }

    pub fn from_kv(text: &str) -> Result<Self, ParamError> {
        let pairs = parse_kv_lines(text)?;
        let kind_val = pairs
            .iter()
            .find(|(k, _)| k == "kind")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| ParamError::UnknownKey("missing 'kind'".into()))?;
        let kind = PatternKind::parse(&kind_val).ok_or_else(|| ParamError::BadValue {
            key: "kind".into(),
            value: kind_val,
        })?;
        let rest: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with("kind"))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(match kind {
            PatternKind::BearishFlag => Detector::BearishFlag(FlagParams::from_kv(&rest)?),
            PatternKind::DoubleTop => Detector::DoubleTop(DoubleParams::from_kv(&rest)?),
            PatternKind::DoubleBottom => Detector::DoubleBottom(DoubleParams::from_kv(&rest)?),
        })
    }

    /// Short hex digest of the canonical key=value form, recorded in dataset
    /// provenance so labels can be traced to the exact parameterization.
    pub fn params_hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest[..8].iter().map(|b| format!("{:02x}", b)).collect()
    }
}

/// Named anchor indices, relative to the window start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchors {
    Flag {
        pole1_start: usize,
        pole1_end: usize,
        flag_end: usize,
        pole2_end: usize,
    },
    Double {
        extremum1: usize,
        pullback: usize,
        extremum2: usize,
        completion: Option<usize>,
    },
}

impl Anchors {
    pub fn named(&self) -> Vec<(&'static str, usize)> {
        match *self {
            Anchors::Flag {
                pole1_start,
                pole1_end,
                flag_end,
                pole2_end,
            } => vec![
                ("pole1_start", pole1_start),
                ("pole1_end", pole1_end),
                ("flag_end", flag_end),
                ("pole2_end", pole2_end),
            ],
            Anchors::Double {
                extremum1,
                pullback,
                extremum2,
                completion,
            } => {
                let mut v = vec![
                    ("extremum1", extremum1),
                    ("pullback", pullback),
                    ("extremum2", extremum2),
                ];
                if let Some(c) = completion {
                    v.push(("completion", c));
                }
                v
            }
        }
    }

    pub fn first(&self) -> usize {
        self.named().first().unwrap().1
    }

    pub fn last(&self) -> usize {
        self.named().last().unwrap().1
    }
}

/// A detected pattern occurrence.
///
/// `window_start` is the absolute bar index of the window in its series;
/// anchors are window-relative and strictly increasing. `strength` is the
/// primary move (pole-1 drop for flags, pullback depth for doubles) and is
/// what overlap merging maximizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub kind: PatternKind,
    pub window_start: usize,
    pub window_len: usize,
    pub anchors: Anchors,
    pub strength: f64,
    /// Price of the intervening extremum (doubles only); the strategy's
    /// stop-loss level.
    pub pullback_value: Option<f64>,
}

impl PatternMatch {
    /// Absolute (first, last) bar index covered by the anchors.
    pub fn span(&self) -> (usize, usize) {
        (
            self.window_start + self.anchors.first(),
            self.window_start + self.anchors.last(),
        )
    }

    /// Checks the structural invariants against the series the match came
    /// from: anchors strictly increasing and inside the window, and the
    /// directional conditions of the pattern.
    pub fn check_invariants(&self, series: &BarSeries) -> Result<(), String> {
        let named = self.anchors.named();
        for pair in named.windows(2) {
            if pair[0].1 >= pair[1].1 {
                return Err(format!(
                    "anchors not strictly increasing: {} >= {}",
                    pair[0].1, pair[1].1
                ));
            }
        }
        if self.anchors.last() >= self.window_len {
            return Err("anchor outside window".into());
        }
        let bars = &series.bars()[self.window_start..self.window_start + self.window_len];
        match self.anchors {
            Anchors::Flag {
                pole1_start,
                pole1_end,
                flag_end,
                pole2_end,
            } => {
                if bars[pole1_end].close >= bars[pole1_start].close {
                    return Err("pole 1 does not drop".into());
                }
                if bars[pole2_end].close >= bars[flag_end].close {
                    return Err("pole 2 does not drop".into());
                }
            }
            Anchors::Double {
                extremum1,
                pullback,
                extremum2,
                completion,
            } => {
                let pv = self.pullback_value.ok_or("double match without pullback value")?;
                match self.kind {
                    PatternKind::DoubleBottom => {
                        if bars[pullback].high < bars[extremum1].low.max(bars[extremum2].low) {
                            return Err("pullback below extrema".into());
                        }
                        if let Some(c) = completion {
                            if bars[c].close <= pv {
                                return Err("completion does not cross pullback".into());
                            }
                        }
                    }
                    PatternKind::DoubleTop => {
                        if bars[pullback].low > bars[extremum1].high.min(bars[extremum2].high) {
                            return Err("pullback above extrema".into());
                        }
                        if let Some(c) = completion {
                            if bars[c].close >= pv {
                                return Err("completion does not cross pullback".into());
                            }
                        }
                    }
                    PatternKind::BearishFlag => return Err("flag kind with double anchors".into()),
                }
            }
        }
        Ok(())
    }

    /// JSONL record with ISO anchor timestamps.
    pub fn to_record(&self, series: &BarSeries) -> MatchRecord {
        let bars = series.bars();
        let anchors = self
            .anchors
            .named()
            .into_iter()
            .map(|(name, idx)| {
                (
                    name.to_string(),
                    timestamp_to_iso(bars[self.window_start + idx].timestamp),
                )
            })
            .collect();
        MatchRecord {
            symbol: series.symbol().to_string(),
            kind: self.kind,
            window_start: timestamp_to_iso(bars[self.window_start].timestamp),
            window_len: self.window_len,
            anchors,
            strength: self.strength,
            pullback_value: self.pullback_value,
        }
    }
}

/// Wire form of a [`PatternMatch`] (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub symbol: String,
    pub kind: PatternKind,
    pub window_start: String,
    pub window_len: usize,
    pub anchors: BTreeMap<String, String>,
    pub strength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pullback_value: Option<f64>,
}

// ---------------------------------------------------------------------------
// Bearish flag
// ---------------------------------------------------------------------------

/// Everything needed to test one (a, b, e, d) anchor tuple in O(1), using
/// precomputed interval min/max tables.
struct FlagContext<'a> {
    closes: &'a [f64],
    range: f64,
    params: &'a FlagParams,
    /// `seg_max[i][j]`, `seg_min[i][j]`: extremes of closes over `i..=j`.
    seg_max: Vec<Vec<f64>>,
    seg_min: Vec<Vec<f64>>,
    /// Running maximum of closes over `0..=i`.
    prefix_max: Vec<f64>,
}

impl<'a> FlagContext<'a> {
    fn new(closes: &'a [f64], range: f64, params: &'a FlagParams) -> Self {
        let n = closes.len();
        let mut seg_max = vec![vec![0.0; n]; n];
        let mut seg_min = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut mx = closes[i];
            let mut mn = closes[i];
            seg_max[i][i] = mx;
            seg_min[i][i] = mn;
            for j in (i + 1)..n {
                mx = mx.max(closes[j]);
                mn = mn.min(closes[j]);
                seg_max[i][j] = mx;
                seg_min[i][j] = mn;
            }
        }
        let mut prefix_max = Vec::with_capacity(n);
        let mut mx = f64::NEG_INFINITY;
        for &v in closes {
            mx = mx.max(v);
            prefix_max.push(mx);
        }
        Self {
            closes,
            range,
            params,
            seg_max,
            seg_min,
            prefix_max,
        }
    }

    /// Interior of `x..y` (exclusive) stays within the endpoint envelope:
    /// never above the pole top, never below the pole bottom.
    fn pole_contained(&self, x: usize, y: usize) -> bool {
        if y - x < 2 {
            return true;
        }
        self.seg_max[x + 1][y - 1] <= self.closes[x] && self.seg_min[x + 1][y - 1] >= self.closes[y]
    }

    /// Returns `(drop1, drop2)` if the tuple is a valid decomposition.
    fn tuple_ok(&self, a: usize, b: usize, e: usize, d: usize) -> Option<(f64, f64)> {
        let p = self.params;
        let c = self.closes;
        let len1 = b - a;
        let len2 = d - e;
        let len_flag = e - b;
        if len1 < 1 || len1 > p.max_pole_len || len2 < 1 || len2 > p.max_pole_len {
            return None;
        }
        if len_flag < p.min_flag_len {
            return None;
        }
        let drop1 = c[a] - c[b];
        if drop1 < p.min_pole_drop * self.range {
            return None;
        }
        // The flagpole begins at an extremum: no earlier close in the window
        // sits above the pole start.
        if c[a] < self.prefix_max[a] {
            return None;
        }
        let rise = c[e] - c[b];
        if rise > p.max_flag_retrace * drop1 {
            return None;
        }
        let slope = rise / len_flag as f64 / self.range;
        if slope < p.flag_slope_lo || slope > p.flag_slope_hi {
            return None;
        }
        let drop2 = c[e] - c[d];
        if drop2 < p.min_pole_drop * self.range {
            return None;
        }
        // Poles must fall faster per bar than the flag's slope ceiling, or
        // the pole/flag split would be arbitrary.
        if drop1 / len1 as f64 / self.range <= p.flag_slope_hi
            || drop2 / len2 as f64 / self.range <= p.flag_slope_hi
        {
            return None;
        }
        if (drop2 - drop1).abs() > p.pole_ratio_tol * drop1 {
            return None;
        }
        if (len2 as f64 - len1 as f64).abs() > p.pole_ratio_tol * len1 as f64 {
            return None;
        }
        // Structural containment. Poles are directed moves: their interiors
        // stay inside the endpoint envelope. The flag is a consolidation: it
        // may recover up to the retrace allowance but never undercuts the
        // pole bottom by more than one flag-slope unit of the range.
        if !self.pole_contained(a, b) || !self.pole_contained(e, d) {
            return None;
        }
        if e - b >= 2 {
            let upper = c[b] + p.max_flag_retrace * drop1;
            let lower = c[b] - p.flag_slope_hi * self.range;
            if self.seg_max[b + 1][e - 1] > upper || self.seg_min[b + 1][e - 1] < lower {
                return None;
            }
        }
        Some((drop1, drop2))
    }
}

fn close_range(closes: &[f64]) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in closes {
        min = min.min(*v);
        max = max.max(*v);
    }
    max - min
}

/// Detects a bearish flag: pole down, drifting flag, second pole down of
/// similar size and length.
///
/// Among valid decompositions the winner maximizes the pole-1 drop, then the
/// earliest `(pole1_start, pole1_end)`, then the largest pole-2 drop, then
/// the earliest `(flag_end, pole2_end)`. The tuple ordering makes detection
/// deterministic and lets the exhaustive reference search reproduce it.
pub fn detect_bearish_flag(window: &Window, params: &FlagParams) -> Option<PatternMatch> {
    let closes: Vec<f64> = window.bars().iter().map(|b| b.close).collect();
    let n = closes.len();
    if n < 4 {
        return None;
    }
    let range = close_range(&closes);
    if range <= 0.0 {
        return None;
    }
    let ctx = FlagContext::new(&closes, range, params);

    // Pole-1 candidates, best first.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..n.saturating_sub(3) {
        let b_hi = (a + params.max_pole_len).min(n - 3);
        for b in (a + 1)..=b_hi {
            let drop1 = closes[a] - closes[b];
            if drop1 >= params.min_pole_drop * range {
                candidates.push((drop1, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });

    for (_, a, b) in candidates {
        // Best completion for this pole: max drop2, then earliest (e, d).
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for e in (b + params.min_flag_len)..n.saturating_sub(1) {
            for d in (e + 1)..=(e + params.max_pole_len).min(n - 1) {
                if let Some((drop1, drop2)) = ctx.tuple_ok(a, b, e, d) {
                    let better = match &best {
                        None => true,
                        Some((bd2, ..)) => drop2 > *bd2,
                    };
                    if better {
                        best = Some((drop2, e, d, drop1));
                    }
                }
            }
        }
        if let Some((_, e, d, drop1)) = best {
            return Some(PatternMatch {
                kind: PatternKind::BearishFlag,
                window_start: window.start(),
                window_len: window.len(),
                anchors: Anchors::Flag {
                    pole1_start: a,
                    pole1_end: b,
                    flag_end: e,
                    pole2_end: d,
                },
                strength: drop1,
                pullback_value: None,
            });
        }
    }
    None
}

/// Plain-loop restatement of the flag tuple conditions, kept free of the
/// detector's precomputed tables so the reference search exercises an
/// independent code path.
fn naive_flag_tuple_ok(
    closes: &[f64],
    range: f64,
    p: &FlagParams,
    a: usize,
    b: usize,
    e: usize,
    d: usize,
) -> Option<(f64, f64)> {
    let len1 = b - a;
    let len2 = d - e;
    let len_flag = e - b;
    if len1 < 1 || len1 > p.max_pole_len || len2 < 1 || len2 > p.max_pole_len {
        return None;
    }
    if len_flag < p.min_flag_len {
        return None;
    }
    let drop1 = closes[a] - closes[b];
    if drop1 < p.min_pole_drop * range {
        return None;
    }
    for j in 0..a {
        if closes[j] > closes[a] {
            return None;
        }
    }
    let rise = closes[e] - closes[b];
    if rise > p.max_flag_retrace * drop1 {
        return None;
    }
    let slope = rise / len_flag as f64 / range;
    if slope < p.flag_slope_lo || slope > p.flag_slope_hi {
        return None;
    }
    let drop2 = closes[e] - closes[d];
    if drop2 < p.min_pole_drop * range {
        return None;
    }
    if drop1 / len1 as f64 / range <= p.flag_slope_hi
        || drop2 / len2 as f64 / range <= p.flag_slope_hi
    {
        return None;
    }
    if (drop2 - drop1).abs() > p.pole_ratio_tol * drop1 {
        return None;
    }
    if (len2 as f64 - len1 as f64).abs() > p.pole_ratio_tol * len1 as f64 {
        return None;
    }
    for i in (a + 1)..b {
        if closes[i] > closes[a] || closes[i] < closes[b] {
            return None;
        }
    }
    for i in (e + 1)..d {
        if closes[i] > closes[e] || closes[i] < closes[d] {
            return None;
        }
    }
    for i in (b + 1)..e {
        if closes[i] > closes[b] + p.max_flag_retrace * drop1
            || closes[i] < closes[b] - p.flag_slope_hi * range
        {
            return None;
        }
    }
    Some((drop1, drop2))
}

/// Exhaustive reference search for the bearish flag: enumerates every anchor
/// tuple and applies the same selection order as [`detect_bearish_flag`].
/// O(n^5); intended for verification on short windows only.
pub fn brute_force_flag(window: &Window, params: &FlagParams) -> Option<PatternMatch> {
    let closes: Vec<f64> = window.bars().iter().map(|b| b.close).collect();
    let n = closes.len();
    if n < 4 {
        return None;
    }
    let range = close_range(&closes);
    if range <= 0.0 {
        return None;
    }
    // Selection key: max drop1, min a, min b, max drop2, min e, min d.
    let mut best: Option<(f64, usize, usize, f64, usize, usize)> = None;
    for a in 0..n {
        for b in (a + 1)..n {
            for e in (b + 1)..n {
                for d in (e + 1)..n {
                    if let Some((drop1, drop2)) =
                        naive_flag_tuple_ok(&closes, range, params, a, b, e, d)
                    {
                        let cand = (drop1, a, b, drop2, e, d);
                        let better = match &best {
                            None => true,
                            Some(cur) => {
                                (cand.0, cur.1, cur.2, cand.3, cur.4, cur.5)
                                    .partial_cmp(&(cur.0, cand.1, cand.2, cur.3, cand.4, cand.5))
                                    .unwrap()
                                    == std::cmp::Ordering::Greater
                            }
                        };
                        if better {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
    }
    best.map(|(drop1, a, b, _, e, d)| PatternMatch {
        kind: PatternKind::BearishFlag,
        window_start: window.start(),
        window_len: window.len(),
        anchors: Anchors::Flag {
            pole1_start: a,
            pole1_end: b,
            flag_end: e,
            pole2_end: d,
        },
        strength: drop1,
        pullback_value: None,
    })
}

// ---------------------------------------------------------------------------
// Double top / bottom
// ---------------------------------------------------------------------------

/// Mirrors a double top onto the double-bottom logic: extrema values (lows
/// for bottoms, highs for tops, negated), pullback values (highs for bottoms,
/// lows for tops, negated), and closes (negated for tops).
struct DoubleContext {
    extrema: Vec<f64>,
    pullback: Vec<f64>,
    closes: Vec<f64>,
    range: f64,
}

impl DoubleContext {
    fn new(window: &Window, kind: PatternKind) -> Option<Self> {
        let bars = window.bars();
        let mut max_h = f64::NEG_INFINITY;
        let mut min_l = f64::INFINITY;
        for b in bars {
            max_h = max_h.max(b.high);
            min_l = min_l.min(b.low);
        }
        let range = max_h - min_l;
        if range <= 0.0 {
            return None;
        }
        let (extrema, pullback, closes) = match kind {
            PatternKind::DoubleBottom => (
                bars.iter().map(|b| b.low).collect(),
                bars.iter().map(|b| b.high).collect(),
                bars.iter().map(|b| b.close).collect(),
            ),
            PatternKind::DoubleTop => (
                bars.iter().map(|b| -b.high).collect(),
                bars.iter().map(|b| -b.low).collect(),
                bars.iter().map(|b| -b.close).collect(),
            ),
            PatternKind::BearishFlag => return None,
        };
        Some(Self {
            extrema,
            pullback,
            closes,
            range,
        })
    }

    fn is_local_extremum(&self, i: usize) -> bool {
        i >= 1
            && i + 1 < self.extrema.len()
            && self.extrema[i] <= self.extrema[i - 1]
            && self.extrema[i] <= self.extrema[i + 1]
    }

    /// Validates an extrema pair; on success returns
    /// `(depth, pullback_index, completion)`.
    fn pair_ok(
        &self,
        e1: usize,
        e2: usize,
        params: &DoubleParams,
    ) -> Option<(f64, usize, Option<usize>)> {
        let n = self.extrema.len();
        if e2 <= e1 + 1 || e2 - e1 < params.min_separation || e2 >= n {
            return None;
        }
        if !self.is_local_extremum(e1) || !self.is_local_extremum(e2) {
            return None;
        }
        if (self.extrema[e1] - self.extrema[e2]).abs() > params.extrema_equality_tol * self.range {
            return None;
        }
        // Earliest maximum of the pullback track strictly between the extrema.
        let mut p = e1 + 1;
        for i in (e1 + 1)..e2 {
            if self.pullback[i] > self.pullback[p] {
                p = i;
            }
        }
        let depth = self.pullback[p] - self.extrema[e1].max(self.extrema[e2]);
        if depth < params.min_pullback_depth * self.range {
            return None;
        }
        let completion = ((e2 + 1)..n).find(|&t| self.closes[t] > self.pullback[p]);
        if params.completion_required && completion.is_none() {
            return None;
        }
        Some((depth, p, completion))
    }

    fn pullback_price(&self, p: usize, kind: PatternKind) -> f64 {
        match kind {
            PatternKind::DoubleTop => -self.pullback[p],
            _ => self.pullback[p],
        }
    }
}

/// Detects a double top or bottom: two near-equal extrema separated by an
/// opposite pullback extremum, optionally completed by the price crossing the
/// pullback value again after the second extremum.
///
/// The winner maximizes pullback depth, then the earliest `(e1, e2)`.
pub fn detect_double(
    window: &Window,
    kind: PatternKind,
    params: &DoubleParams,
) -> Option<PatternMatch> {
    let ctx = DoubleContext::new(window, kind)?;
    let n = ctx.extrema.len();
    let locals: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| ctx.is_local_extremum(i))
        .collect();
    let mut best: Option<(f64, usize, usize, usize, Option<usize>)> = None;
    for (i, &e1) in locals.iter().enumerate() {
        for &e2 in &locals[i + 1..] {
            if let Some((depth, p, completion)) = ctx.pair_ok(e1, e2, params) {
                let better = match &best {
                    None => true,
                    Some(cur) => depth > cur.0,
                };
                if better {
                    best = Some((depth, e1, e2, p, completion));
                }
            }
        }
    }
    best.map(|(depth, e1, e2, p, completion)| PatternMatch {
        kind,
        window_start: window.start(),
        window_len: window.len(),
        anchors: Anchors::Double {
            extremum1: e1,
            pullback: p,
            extremum2: e2,
            completion,
        },
        strength: depth,
        pullback_value: Some(ctx.pullback_price(p, kind)),
    })
}

/// Exhaustive reference search for doubles: enumerates every `(e1, e2)` pair
/// and restates each condition with plain loops directly over the bars,
/// independent of [`detect_double`]'s mirrored context.
pub fn brute_force_double(
    window: &Window,
    kind: PatternKind,
    params: &DoubleParams,
) -> Option<PatternMatch> {
    if kind == PatternKind::BearishFlag {
        return None;
    }
    let bars = window.bars();
    let n = bars.len();
    let bottom = kind == PatternKind::DoubleBottom;
    let range = bars.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max)
        - bars.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    if range <= 0.0 {
        return None;
    }
    let ext = |i: usize| if bottom { bars[i].low } else { bars[i].high };
    let pull = |i: usize| if bottom { bars[i].high } else { bars[i].low };
    let is_local = |i: usize| {
        i >= 1
            && i + 1 < n
            && if bottom {
                ext(i) <= ext(i - 1) && ext(i) <= ext(i + 1)
            } else {
                ext(i) >= ext(i - 1) && ext(i) >= ext(i + 1)
            }
    };
    let mut best: Option<(f64, usize, usize, usize, Option<usize>)> = None;
    for e1 in 0..n {
        for e2 in (e1 + 2)..n {
            if e2 - e1 < params.min_separation || !is_local(e1) || !is_local(e2) {
                continue;
            }
            if (ext(e1) - ext(e2)).abs() > params.extrema_equality_tol * range {
                continue;
            }
            // Earliest most-extreme pullback strictly between the extrema.
            let mut p = e1 + 1;
            for i in (e1 + 1)..e2 {
                let more_extreme = if bottom { pull(i) > pull(p) } else { pull(i) < pull(p) };
                if more_extreme {
                    p = i;
                }
            }
            let depth = if bottom {
                pull(p) - ext(e1).max(ext(e2))
            } else {
                ext(e1).min(ext(e2)) - pull(p)
            };
            if depth < params.min_pullback_depth * range {
                continue;
            }
            let mut completion = None;
            for t in (e2 + 1)..n {
                let crossed = if bottom {
                    bars[t].close > pull(p)
                } else {
                    bars[t].close < pull(p)
                };
                if crossed {
                    completion = Some(t);
                    break;
                }
            }
            if params.completion_required && completion.is_none() {
                continue;
            }
            let better = match &best {
                None => true,
                Some(cur) => depth > cur.0,
            };
            if better {
                best = Some((depth, e1, e2, p, completion));
            }
        }
    }
    best.map(|(depth, e1, e2, p, completion)| PatternMatch {
        kind,
        window_start: window.start(),
        window_len: window.len(),
        anchors: Anchors::Double {
            extremum1: e1,
            pullback: p,
            extremum2: e2,
            completion,
        },
        strength: depth,
        pullback_value: Some(pull(p)),
    })
}

// ---------------------------------------------------------------------------
// Series scan
// ---------------------------------------------------------------------------

/// Runs a detector over every gap-free window at step 1 and merges
/// overlapping matches of the same kind, keeping the one with the larger
/// primary move (ties: earlier span, then earlier window).
pub fn scan_series(
    series: &BarSeries,
    detector: &Detector,
    window_len: usize,
) -> Result<Vec<PatternMatch>, MarketDataError> {
    let windows = sliding_windows(series, window_len, 1)?;
    let hits: Vec<Option<PatternMatch>> =
        crate::exec::map_slice(&windows, |w| detector.detect(w));
    let matches: Vec<PatternMatch> = hits.into_iter().flatten().collect();
    Ok(merge_matches(matches))
}

/// Deterministic overlap merge: matches whose anchor spans intersect
/// (transitively) collapse to the strongest one.
pub fn merge_matches(mut matches: Vec<PatternMatch>) -> Vec<PatternMatch> {
    if matches.is_empty() {
        return matches;
    }
    matches.sort_by(|a, b| {
        a.span()
            .cmp(&b.span())
            .then(a.window_start.cmp(&b.window_start))
    });
    let mut out: Vec<PatternMatch> = Vec::new();
    let mut cluster_end = 0usize;
    let mut current: Option<PatternMatch> = None;
    for m in matches {
        let (s, e) = m.span();
        match current.take() {
            None => {
                cluster_end = e;
                current = Some(m);
            }
            Some(best) => {
                if s <= cluster_end {
                    cluster_end = cluster_end.max(e);
                    let replace = m.strength > best.strength
                        || (m.strength == best.strength && m.span() < best.span());
                    current = Some(if replace { m } else { best });
                } else {
                    out.push(best);
                    cluster_end = e;
                    current = Some(m);
                }
            }
        }
    }
    if let Some(best) = current {
        out.push(best);
    }
    out
}

/// Serializes matches to JSON-lines.
pub fn matches_to_jsonl(series: &BarSeries, matches: &[PatternMatch]) -> String {
    let mut out = String::new();
    for m in matches {
        out.push_str(&serde_json::to_string(&m.to_record(series)).expect("match record"));
        out.push('\n');
    }
    out
}
