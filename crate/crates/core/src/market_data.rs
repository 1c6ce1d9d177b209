//! OHLCV bar series: CSV ingest and export, validation, session-gap tracking,
//! sliding windows, and per-window normalization.
//!
//! Timestamps are integer minutes since the Unix epoch. Consecutive in-session
//! bars are exactly one minute apart; any larger delta marks a session gap and
//! windows never straddle one.

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MarketDataError {
    #[error("csv is empty")]
    EmptyFile,
    #[error("csv header mismatch: expected column '{expected}', got '{got}'")]
    HeaderMismatch { expected: String, got: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-monotonic timestamp at line {line}")]
    NonMonotonicTimestamp { line: usize },
    #[error("window length {length} exceeds series length {series_len}")]
    LengthExceedsSeries { length: usize, series_len: usize },
    #[error("window [{start}, {start}+{length}) out of bounds or crossing a session gap")]
    InvalidWindow { start: usize, length: usize },
    #[error("window length must be at least {min}, got {got}")]
    WindowTooShort { min: usize, got: usize },
    #[error("window length must be in [{lo}, {hi}], got {got}")]
    LengthOutOfRange { lo: usize, hi: usize, got: usize },
    #[error("step must be >= 1")]
    ZeroStep,
    #[error("channel set is empty")]
    EmptyChannelSet,
    #[error("channel {0:?} not present")]
    MissingChannel(Channel),
    #[error("labels are degenerate (all identical)")]
    DegenerateLabels,
    #[error("expected {expected} labels for {expected} windows, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(String),
}

/// Bounds the window lengths produced by [`sliding_windows`] (minutes).
pub const MIN_WINDOW_LEN: usize = 15;
pub const MAX_WINDOW_LEN: usize = 180;

/// One minute of market data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar {
    /// Minutes since the Unix epoch.
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl OhlcvBar {
    pub fn validate(&self) -> Result<(), String> {
        let vals = [self.open, self.high, self.low, self.close, self.volume];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.open <= 0.0 || self.high <= 0.0 || self.low <= 0.0 || self.close <= 0.0 {
            return Err("prices must be positive".into());
        }
        if self.volume < 0.0 {
            return Err("volume must be non-negative".into());
        }
        if self.low > self.high {
            return Err("low > high".into());
        }
        if self.low > self.open.min(self.close) {
            return Err("low above open/close".into());
        }
        if self.high < self.open.max(self.close) {
            return Err("high below open/close".into());
        }
        Ok(())
    }
}

/// An ordered, validated sequence of bars for one symbol.
///
/// Construction checks every bar invariant and strict timestamp monotonicity.
/// Session gaps (timestamp delta > 1 minute) are recorded so window helpers
/// can skip them in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    symbol: String,
    bars: Vec<OhlcvBar>,
    /// For each bar, the index of the first bar of its contiguous run.
    segment_start: Vec<usize>,
}

impl BarSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<OhlcvBar>) -> Result<Self, MarketDataError> {
        if bars.is_empty() {
            return Err(MarketDataError::EmptyFile);
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|reason| MarketDataError::MalformedRow {
                line: i + 2, // 1-based, after the header
                reason,
            })?;
        }
        for i in 1..bars.len() {
            if bars[i].timestamp <= bars[i - 1].timestamp {
                return Err(MarketDataError::NonMonotonicTimestamp { line: i + 2 });
            }
        }
        let mut segment_start = vec![0; bars.len()];
        for i in 1..bars.len() {
            segment_start[i] = if bars[i].timestamp - bars[i - 1].timestamp == 1 {
                segment_start[i - 1]
            } else {
                i
            };
        }
        Ok(Self {
            symbol: symbol.into(),
            bars,
            segment_start,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[OhlcvBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// True if bars `start..start+len` contain no session gap.
    pub fn is_contiguous(&self, start: usize, len: usize) -> bool {
        len > 0
            && start + len <= self.bars.len()
            && self.segment_start[start + len - 1] <= start
    }

    /// Index of the bar with the given timestamp, if present.
    pub fn index_of_timestamp(&self, ts: i64) -> Option<usize> {
        self.bars.binary_search_by_key(&ts, |b| b.timestamp).ok()
    }
}

/// A gap-free view of `length` consecutive bars starting at `start`.
///
/// The pipeline produces windows of 15–180 minutes via [`sliding_windows`];
/// direct construction accepts any length >= 2 so detectors and tests can
/// work with short synthetic fragments.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    series: &'a BarSeries,
    start: usize,
    length: usize,
}

impl<'a> Window<'a> {
    pub fn new(series: &'a BarSeries, start: usize, length: usize) -> Result<Self, MarketDataError> {
        if length < 2 {
            return Err(MarketDataError::WindowTooShort { min: 2, got: length });
        }
        if !series.is_contiguous(start, length) {
            return Err(MarketDataError::InvalidWindow { start, length });
        }
        Ok(Self { series, start, length })
    }

    pub fn series(&self) -> &'a BarSeries {
        self.series
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn bars(&self) -> &'a [OhlcvBar] {
        &self.series.bars()[self.start..self.start + self.length]
    }

    pub fn start_timestamp(&self) -> i64 {
        self.series.bars()[self.start].timestamp
    }
}

/// All gap-free windows of `length` bars at the given step, in start order.
pub fn sliding_windows<'a>(
    series: &'a BarSeries,
    length: usize,
    step: usize,
) -> Result<Vec<Window<'a>>, MarketDataError> {
    if step == 0 {
        return Err(MarketDataError::ZeroStep);
    }
    if !(MIN_WINDOW_LEN..=MAX_WINDOW_LEN).contains(&length) {
        return Err(MarketDataError::LengthOutOfRange {
            lo: MIN_WINDOW_LEN,
            hi: MAX_WINDOW_LEN,
            got: length,
        });
    }
    if length > series.len() {
        return Err(MarketDataError::LengthExceedsSeries {
            length,
            series_len: series.len(),
        });
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + length <= series.len() {
        if series.is_contiguous(start, length) {
            out.push(Window {
                series,
                start,
                length,
            });
        }
        start += step;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Channels and normalization
// ---------------------------------------------------------------------------

/// OHLCV channel identifier, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    Open,
    High,
    Low,
    Close,
    Volume,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Open,
        Channel::High,
        Channel::Low,
        Channel::Close,
        Channel::Volume,
    ];

    pub fn letter(&self) -> char {
        match self {
            Channel::Open => 'O',
            Channel::High => 'H',
            Channel::Low => 'L',
            Channel::Close => 'C',
            Channel::Volume => 'V',
        }
    }

    pub fn from_letter(c: char) -> Option<Channel> {
        match c.to_ascii_uppercase() {
            'O' => Some(Channel::Open),
            'H' => Some(Channel::High),
            'L' => Some(Channel::Low),
            'C' => Some(Channel::Close),
            'V' => Some(Channel::Volume),
            _ => None,
        }
    }

    fn value(&self, bar: &OhlcvBar) -> f64 {
        match self {
            Channel::Open => bar.open,
            Channel::High => bar.high,
            Channel::Low => bar.low,
            Channel::Close => bar.close,
            Channel::Volume => bar.volume,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parses a channel set like "C", "OHLC", "ohlcv". Order is ignored; the
/// result is canonical.
pub fn parse_channels(text: &str) -> Result<Vec<Channel>, MarketDataError> {
    let mut set = Vec::new();
    for ch in text.chars() {
        let c = Channel::from_letter(ch).ok_or_else(|| {
            MarketDataError::Io(format!("unknown channel letter '{}'", ch))
        })?;
        if !set.contains(&c) {
            set.push(c);
        }
    }
    if set.is_empty() {
        return Err(MarketDataError::EmptyChannelSet);
    }
    set.sort();
    Ok(set)
}

/// Renders a channel set as letters, e.g. "OHLC".
pub fn channels_to_string(channels: &[Channel]) -> String {
    channels.iter().map(Channel::letter).collect()
}

/// How price channels are rescaled into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScheme {
    /// One shared min/max across O, H, L, C so candle bodies and wicks keep
    /// their relative sizes. Volume is scaled independently.
    #[default]
    JointPrice,
    /// Each channel scaled by its own min/max.
    PerChannel,
}

/// A `[channels x length]` matrix of values in [0, 1], with the channel ids
/// recorded in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow {
    pub channels: Vec<Channel>,
    pub rows: Vec<Vec<f64>>,
}

impl NormalizedWindow {
    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, channel: Channel) -> Result<&[f64], MarketDataError> {
        self.channels
            .iter()
            .position(|c| *c == channel)
            .map(|i| self.rows[i].as_slice())
            .ok_or(MarketDataError::MissingChannel(channel))
    }
}

fn scale_into(values: &mut [f64], min: f64, max: f64) {
    let range = max - min;
    if range <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.5);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - min) / range);
    }
}

/// Min-max scales a window into [0, 1]. Degenerate (constant) extents map to
/// an all-0.5 channel. The result always carries all five channels.
pub fn normalize(window: &Window, scheme: NormScheme) -> NormalizedWindow {
    let bars = window.bars();
    let mut rows: Vec<Vec<f64>> = Channel::ALL
        .iter()
        .map(|c| bars.iter().map(|b| c.value(b)).collect())
        .collect();
    match scheme {
        NormScheme::JointPrice => {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for row in rows.iter().take(4) {
                for v in row {
                    min = min.min(*v);
                    max = max.max(*v);
                }
            }
            for row in rows.iter_mut().take(4) {
                scale_into(row, min, max);
            }
        }
        NormScheme::PerChannel => {
            for row in rows.iter_mut().take(4) {
                let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                scale_into(row, min, max);
            }
        }
    }
    let vrow = &mut rows[4];
    let vmin = vrow.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = vrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scale_into(vrow, vmin, vmax);
    NormalizedWindow {
        channels: Channel::ALL.to_vec(),
        rows,
    }
}

/// Restricts a normalized matrix to a channel subset, keeping canonical
/// O, H, L, C, V row order regardless of the subset's order.
pub fn select_channels(
    normalized: &NormalizedWindow,
    channels: &[Channel],
) -> Result<NormalizedWindow, MarketDataError> {
    if channels.is_empty() {
        return Err(MarketDataError::EmptyChannelSet);
    }
    let mut wanted: Vec<Channel> = channels.to_vec();
    wanted.sort();
    wanted.dedup();
    let mut rows = Vec::with_capacity(wanted.len());
    for c in &wanted {
        rows.push(normalized.row(*c)?.to_vec());
    }
    Ok(NormalizedWindow {
        channels: wanted,
        rows,
    })
}

/// Point-biserial correlation between each channel's window mean (of the
/// normalized channel) and a boolean label, over step-1 windows.
pub fn channel_label_correlation(
    series: &BarSeries,
    labels: &[bool],
    window_len: usize,
    scheme: NormScheme,
) -> Result<[(Channel, f64); 5], MarketDataError> {
    let windows = sliding_windows(series, window_len, 1)?;
    if windows.len() != labels.len() {
        return Err(MarketDataError::LabelCountMismatch {
            expected: windows.len(),
            got: labels.len(),
        });
    }
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        return Err(MarketDataError::DegenerateLabels);
    }
    let means: Vec<[f64; 5]> = crate::exec::map_slice(&windows, |w| {
        let nw = normalize(w, scheme);
        let mut m = [0.0; 5];
        for (i, row) in nw.rows.iter().enumerate() {
            m[i] = row.iter().sum::<f64>() / row.len() as f64;
        }
        m
    });
    let n = labels.len() as f64;
    let y_mean = labels.iter().filter(|l| **l).count() as f64 / n;
    let mut out = [(Channel::Open, 0.0); 5];
    for (ci, channel) in Channel::ALL.iter().enumerate() {
        let x_mean = means.iter().map(|m| m[ci]).sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (m, l) in means.iter().zip(labels) {
            let dx = m[ci] - x_mean;
            let dy = (*l as u8 as f64) - y_mean;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        let r = if sxx <= 0.0 || syy <= 0.0 {
            0.0
        } else {
            sxy / (sxx * syy).sqrt()
        };
        out[ci] = (*channel, r);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Maps the expected CSV header names onto the OHLCV fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub timestamp: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for CsvSpec {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

/// Accepts integer epoch-minutes or ISO-8601 at minute resolution
/// (seconds must be zero when present).
fn parse_timestamp(text: &str, line: usize) -> Result<i64, MarketDataError> {
    let t = text.trim();
    if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '-') {
        return t.parse::<i64>().map_err(|_| MarketDataError::MalformedRow {
            line,
            reason: format!("bad epoch-minute timestamp '{}'", t),
        });
    }
    let t = t.strip_suffix('Z').unwrap_or(t);
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, fmt) {
            let secs = dt.and_utc().timestamp();
            if secs % 60 != 0 {
                return Err(MarketDataError::MalformedRow {
                    line,
                    reason: format!("timestamp '{}' is not minute-aligned", text),
                });
            }
            return Ok(secs / 60);
        }
    }
    Err(MarketDataError::MalformedRow {
        line,
        reason: format!("unparseable timestamp '{}'", text),
    })
}

/// Renders epoch-minutes as ISO-8601 at minute resolution (UTC).
pub fn timestamp_to_iso(minutes: i64) -> String {
    let dt: DateTime<Utc> = DateTime::from_timestamp(minutes * 60, 0)
        .unwrap_or_else(|| DateTime::from_timestamp(0, 0).unwrap());
    dt.format("%Y-%m-%dT%H:%MZ").to_string()
}

fn parse_price(text: &str, line: usize, what: &str) -> Result<f64, MarketDataError> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| MarketDataError::MalformedRow {
            line,
            reason: format!("bad {} value '{}'", what, text),
        })
}

/// Loads a validated series from CSV text. The symbol is taken from the
/// caller (usually the file stem).
pub fn load_csv_str(
    text: &str,
    symbol: &str,
    spec: &CsvSpec,
) -> Result<BarSeries, MarketDataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(MarketDataError::EmptyFile)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize, MarketDataError> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| MarketDataError::HeaderMismatch {
                expected: name.to_string(),
                got: header.to_string(),
            })
    };
    let idx = [
        find(&spec.timestamp)?,
        find(&spec.open)?,
        find(&spec.high)?,
        find(&spec.low)?,
        find(&spec.close)?,
        find(&spec.volume)?,
    ];
    let mut bars = Vec::new();
    for (i, raw) in lines {
        let line = i + 1; // 1-based line number
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() < cols.len() {
            return Err(MarketDataError::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let bar = OhlcvBar {
            timestamp: parse_timestamp(fields[idx[0]], line)?,
            open: parse_price(fields[idx[1]], line, "open")?,
            high: parse_price(fields[idx[2]], line, "high")?,
            low: parse_price(fields[idx[3]], line, "low")?,
            close: parse_price(fields[idx[4]], line, "close")?,
            volume: parse_price(fields[idx[5]], line, "volume")?,
        };
        bar.validate()
            .map_err(|reason| MarketDataError::MalformedRow { line, reason })?;
        if let Some(prev) = bars.last() {
            let prev: &OhlcvBar = prev;
            if bar.timestamp <= prev.timestamp {
                return Err(MarketDataError::NonMonotonicTimestamp { line });
            }
        }
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(MarketDataError::EmptyFile);
    }
    BarSeries::new(symbol, bars)
}

pub fn load_csv(path: &Path, spec: &CsvSpec) -> Result<BarSeries, MarketDataError> {
    let text = std::fs::read_to_string(path).map_err(|e| MarketDataError::Io(e.to_string()))?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "unknown".to_string());
    load_csv_str(&text, &symbol, spec)
}

/// Canonical float formatting: up to six decimals, trailing zeros stripped.
pub fn format_value(v: f64) -> String {
    let mut s = format!("{:.6}", v);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Serializes a series in the canonical CSV format: epoch-minute timestamps
/// and [`format_value`] floats. `write_csv(load_csv(x))` is a fixed point.
pub fn write_csv_string(series: &BarSeries) -> String {
    let mut out = String::from("timestamp,open,high,low,close,volume\n");
    for bar in series.bars() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            bar.timestamp,
            format_value(bar.open),
            format_value(bar.high),
            format_value(bar.low),
            format_value(bar.close),
            format_value(bar.volume),
        ));
    }
    out
}

pub fn write_csv(series: &BarSeries, path: &Path) -> Result<(), MarketDataError> {
    std::fs::write(path, write_csv_string(series)).map_err(|e| MarketDataError::Io(e.to_string()))
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn flat_bar(ts: i64, close: f64) -> OhlcvBar {
        OhlcvBar {
            timestamp: ts,
            open: close,
            high: close,
            low: close,
            close,
            volume: 100.0,
        }
    }

    /// Bars whose O=H=L=C equal the given closes (per-bar spread zero).
    pub fn series_from_closes(closes: &[f64]) -> BarSeries {
        BarSeries::new(
            "t",
            closes
                .iter()
                .enumerate()
                .map(|(i, c)| flat_bar(i as i64, *c))
                .collect(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::{flat_bar, series_from_closes};
    use super::*;

    fn flat_series(n: usize) -> BarSeries {
        BarSeries::new("t", (0..n).map(|i| flat_bar(i as i64, 50.0)).collect()).unwrap()
    }

    #[test]
    fn load_three_row_csv() {
        let text = "timestamp,open,high,low,close,volume\n\
                    0,10,11,9,10.5,100\n\
                    1,10.5,12,10,11,200\n\
                    2,11,11.5,10.5,11,150\n";
        let s = load_csv_str(text, "t", &CsvSpec::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.bars()[1].high, 12.0);
    }

    #[test]
    fn low_above_high_is_malformed() {
        let text = "timestamp,open,high,low,close,volume\n0,10,9,11,10,100\n";
        let err = load_csv_str(text, "t", &CsvSpec::default()).unwrap_err();
        assert!(matches!(err, MarketDataError::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let text = "timestamp,open,high,low,close,volume\n\
                    5,10,11,9,10,100\n\
                    5,10,11,9,10,100\n";
        let err = load_csv_str(text, "t", &CsvSpec::default()).unwrap_err();
        assert!(matches!(
            err,
            MarketDataError::NonMonotonicTimestamp { line: 3 }
        ));
    }

    #[test]
    fn empty_csv_rejected() {
        assert!(matches!(
            load_csv_str("", "t", &CsvSpec::default()),
            Err(MarketDataError::EmptyFile)
        ));
        assert!(matches!(
            load_csv_str(
                "timestamp,open,high,low,close,volume\n",
                "t",
                &CsvSpec::default()
            ),
            Err(MarketDataError::EmptyFile)
        ));
    }

    #[test]
    fn iso_timestamps_are_parsed() {
        let text = "timestamp,open,high,low,close,volume\n\
                    1970-01-01T00:05Z,10,11,9,10,100\n\
                    1970-01-01T00:06Z,10,11,9,10,100\n";
        let s = load_csv_str(text, "t", &CsvSpec::default()).unwrap();
        assert_eq!(s.bars()[0].timestamp, 5);
        assert_eq!(timestamp_to_iso(5), "1970-01-01T00:05Z");
    }

    #[test]
    fn csv_write_is_a_fixed_point_of_load() {
        let text = "timestamp,open,high,low,close,volume\n\
                    0,10.123456789,11,9.25,10.5,100\n\
                    1,10.5,12,10,11.000001,200\n";
        let s1 = load_csv_str(text, "t", &CsvSpec::default()).unwrap();
        let w1 = write_csv_string(&s1);
        let s2 = load_csv_str(&w1, "t", &CsvSpec::default()).unwrap();
        let w2 = write_csv_string(&s2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn window_count_matches_formula() {
        let s = flat_series(100);
        let ws = sliding_windows(&s, 30, 1).unwrap();
        assert_eq!(ws.len(), 71); // n - length + 1
        let exact = flat_series(30);
        let ws = sliding_windows(&exact, 30, 1).unwrap();
        assert_eq!(ws.len(), 1);
        assert!(matches!(
            sliding_windows(&flat_series(29), 30, 1),
            Err(MarketDataError::LengthExceedsSeries { .. })
        ));
    }

    #[test]
    fn windows_skip_session_gaps() {
        // 40 contiguous bars, a gap, then 40 more.
        let mut bars: Vec<OhlcvBar> = (0..40).map(|i| flat_bar(i, 50.0)).collect();
        bars.extend((0..40).map(|i| flat_bar(1000 + i, 50.0)));
        let s = BarSeries::new("t", bars).unwrap();
        let ws = sliding_windows(&s, 30, 1).unwrap();
        assert_eq!(ws.len(), 11 + 11);
        assert!(ws.iter().all(|w| s.is_contiguous(w.start(), w.len())));
        assert!(Window::new(&s, 35, 30).is_err());
    }

    #[test]
    fn normalize_scales_flat_closes() {
        let s = series_from_closes(&[10.0, 20.0, 30.0]);
        let w = Window::new(&s, 0, 3).unwrap();
        let n = normalize(&w, NormScheme::JointPrice);
        assert_eq!(n.row(Channel::Close).unwrap(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_window_is_half() {
        let s = flat_series(20);
        let w = Window::new(&s, 0, 20).unwrap();
        let n = normalize(&w, NormScheme::JointPrice);
        for c in [Channel::Open, Channel::High, Channel::Low, Channel::Close] {
            assert!(n.row(c).unwrap().iter().all(|v| *v == 0.5));
        }
    }

    #[test]
    fn normalize_uses_joint_price_extent() {
        // Highs span up to 30, lows reach down to 8: every price channel is
        // scaled by the shared min 8 and max 30.
        let bars = vec![
            OhlcvBar { timestamp: 0, open: 9.0, high: 10.0, low: 8.0, close: 9.5, volume: 1.0 },
            OhlcvBar { timestamp: 1, open: 9.5, high: 30.0, low: 9.5, close: 20.0, volume: 2.0 },
        ];
        let s = BarSeries::new("t", bars).unwrap();
        let w = Window::new(&s, 0, 2).unwrap();
        let n = normalize(&w, NormScheme::JointPrice);
        let scale = |v: f64| (v - 8.0) / 22.0;
        assert!((n.row(Channel::High).unwrap()[1] - scale(30.0)).abs() < 1e-12);
        assert!((n.row(Channel::High).unwrap()[0] - scale(10.0)).abs() < 1e-12);
        assert!((n.row(Channel::Low).unwrap()[0] - scale(8.0)).abs() < 1e-12);
        assert!((n.row(Channel::Close).unwrap()[1] - scale(20.0)).abs() < 1e-12);
    }

    #[test]
    fn select_channels_canonical_order() {
        let s = series_from_closes(&[10.0, 20.0, 30.0]);
        let w = Window::new(&s, 0, 3).unwrap();
        let n = normalize(&w, NormScheme::JointPrice);
        let only_close = select_channels(&n, &[Channel::Close]).unwrap();
        assert_eq!(only_close.rows.len(), 1);
        assert_eq!(only_close.rows[0], n.row(Channel::Close).unwrap());
        // Identity on the full set.
        let all = select_channels(&n, &Channel::ALL).unwrap();
        assert_eq!(all, n);
        // Request out of order: rows still come back in canonical order.
        let some = select_channels(&n, &[Channel::Volume, Channel::Open, Channel::Close]).unwrap();
        assert_eq!(
            some.channels,
            vec![Channel::Open, Channel::Close, Channel::Volume]
        );
        assert!(matches!(
            select_channels(&n, &[]),
            Err(MarketDataError::EmptyChannelSet)
        ));
    }

    #[test]
    fn degenerate_labels_rejected() {
        let s = flat_series(40);
        let n_windows = sliding_windows(&s, 15, 1).unwrap().len();
        let labels = vec![true; n_windows];
        assert!(matches!(
            channel_label_correlation(&s, &labels, 15, NormScheme::JointPrice),
            Err(MarketDataError::DegenerateLabels)
        ));
    }

    #[test]
    fn close_mean_drives_label_correlation() {
        // Closes alternate between regimes so window means vary; the label is
        // defined directly from the mean normalized close.
        let closes: Vec<f64> = (0..60)
            .map(|i| {
                if (i / 10) % 2 == 0 {
                    10.0 + (i % 10) as f64 * 0.01
                } else {
                    20.0 + (i % 10) as f64 * 0.01
                }
            })
            .collect();
        let s = series_from_closes(&closes);
        let windows = sliding_windows(&s, 15, 1).unwrap();
        let labels: Vec<bool> = windows
            .iter()
            .map(|w| {
                let n = normalize(w, NormScheme::JointPrice);
                let row = n.row(Channel::Close).unwrap();
                row.iter().sum::<f64>() / row.len() as f64 > 0.5
            })
            .collect();
        let scores = channel_label_correlation(&s, &labels, 15, NormScheme::JointPrice).unwrap();
        let close_r = scores.iter().find(|(c, _)| *c == Channel::Close).unwrap().1;
        assert!(close_r > 0.8, "close correlation {}", close_r);
        // Volume is constant by construction, hence uncorrelated.
        let vol_r = scores.iter().find(|(c, _)| *c == Channel::Volume).unwrap().1;
        assert!(vol_r.abs() < 0.1, "volume correlation {}", vol_r);
    }

    #[test]
    fn normalize_preserves_argmax() {
        let closes: Vec<f64> = (0..30).map(|i| 50.0 + ((i * 13) % 17) as f64).collect();
        let s = series_from_closes(&closes);
        let w = Window::new(&s, 0, 30).unwrap();
        let n1 = normalize(&w, NormScheme::JointPrice);
        let argmax = |vals: &[f64]| {
            vals.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&closes), argmax(n1.row(Channel::Close).unwrap()));
    }

    #[test]
    fn format_value_strips_trailing_zeros() {
        assert_eq!(format_value(100.0), "100");
        assert_eq!(format_value(10.5), "10.5");
        assert_eq!(format_value(10.123456789), "10.123457");
        assert_eq!(format_value(0.000001), "0.000001");
    }
}
