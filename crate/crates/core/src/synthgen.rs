//! Seeded synthetic OHLCV generation with ground-truth pattern injection.
//!
//! A geometric random walk provides pattern-free background data; [`inject`]
//! splices an ideal (lightly noised) pattern shape into a span, scaled to the
//! local price level, and returns a ground-truth record. Injection geometry
//! sampled by [`sample_geometry`] stays strictly inside the default detector
//! envelope, which is what ties the generator to the recognizers: detectors
//! are expected to fire on in-envelope injections and stay quiet on the pure
//! walk.

use crate::market_data::{BarSeries, OhlcvBar};
use crate::patterns::PatternKind;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("injection span [{at}, {at}+{len}) does not fit series of {series_len} bars")]
    SpanOutOfRange { at: usize, len: usize, series_len: usize },
    #[error("injection span [{at}, {at}+{len}) overlaps an existing injection")]
    OverlapWithExistingInjection { at: usize, len: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Shape parameters for an injected bearish flag. `retrace_frac` is the
/// fraction of the pole amplitude recovered during the flag; `noise_amp`
/// scales uniform noise applied to non-anchor path points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagGeometry {
    pub pole1_len: usize,
    pub flag_len: usize,
    pub pole2_len: usize,
    pub retrace_frac: f64,
    pub noise_amp: f64,
}

impl Default for FlagGeometry {
    fn default() -> Self {
        Self {
            pole1_len: 8,
            flag_len: 8,
            pole2_len: 8,
            retrace_frac: 0.35,
            noise_amp: 0.1,
        }
    }
}

/// Shape parameters for an injected double top/bottom: four legs of
/// `leg_len` bars each (drop, pullback, drop, completion for a bottom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleGeometry {
    pub leg_len: usize,
    /// Pullback height as a fraction of the leg amplitude.
    pub pullback_frac: f64,
    /// How far past the pullback value the completion leg travels, as a
    /// fraction of the leg amplitude.
    pub completion_rise: f64,
    pub noise_amp: f64,
}

impl Default for DoubleGeometry {
    fn default() -> Self {
        Self {
            leg_len: 6,
            pullback_frac: 0.6,
            completion_rise: 0.35,
            noise_amp: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Flag(FlagGeometry),
    Double(DoubleGeometry),
}

impl Geometry {
    pub fn default_for(kind: PatternKind) -> Geometry {
        match kind {
            PatternKind::BearishFlag => Geometry::Flag(FlagGeometry::default()),
            _ => Geometry::Double(DoubleGeometry::default()),
        }
    }

    /// Number of bars the injected span occupies.
    pub fn span_len(&self) -> usize {
        match self {
            Geometry::Flag(g) => g.pole1_len + g.flag_len + g.pole2_len + 1,
            Geometry::Double(g) => 4 * g.leg_len + 1,
        }
    }

    fn matches_kind(&self, kind: PatternKind) -> bool {
        matches!(
            (self, kind),
            (Geometry::Flag(_), PatternKind::BearishFlag)
                | (Geometry::Double(_), PatternKind::DoubleTop)
                | (Geometry::Double(_), PatternKind::DoubleBottom)
        )
    }
}

/// Ground truth for one injected pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub kind: PatternKind,
    pub start: usize,
    pub length: usize,
    pub scale: f64,
    pub seed: u64,
    pub geometry: Geometry,
}

impl InjectionRecord {
    pub fn overlaps(&self, at: usize, len: usize) -> bool {
        at < self.start + self.length && self.start < at + len
    }
}

/// Geometric random walk on the close with consistently derived O/H/L and
/// lognormal-ish volume. Deterministic per seed.
pub fn random_walk(n: usize, seed: u64, volatility: f64, start_price: f64) -> BarSeries {
    assert!(n >= 1, "need at least one bar");
    assert!(volatility > 0.0, "volatility must be positive");
    assert!(start_price > 0.0, "start price must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut bars = Vec::with_capacity(n);
    let mut close = start_price;
    let mut open = start_price;
    for t in 0..n {
        if t > 0 {
            open = close;
            let z: f64 = normal.sample(&mut rng);
            close *= (volatility * z).exp();
        }
        let wick_hi: f64 = normal.sample(&mut rng);
        let wick_lo: f64 = normal.sample(&mut rng);
        let hi = open.max(close) + wick_hi.abs() * volatility * close * 0.5;
        let lo = (open.min(close) - wick_lo.abs() * volatility * close * 0.5).max(close * 1e-6);
        let vol_z: f64 = normal.sample(&mut rng);
        bars.push(OhlcvBar {
            timestamp: t as i64,
            open,
            high: hi,
            low: lo,
            close,
            volume: 1000.0 * (0.1 * vol_z).exp(),
        });
    }
    BarSeries::new("synthetic", bars).expect("random walk invariants")
}

/// Ideal close path for a pattern, as (points, anchor indices). Anchors keep
/// their exact values when noise is applied.
fn ideal_path(
    kind: PatternKind,
    geometry: &Geometry,
    base: f64,
    amp: f64,
) -> (Vec<f64>, Vec<usize>) {
    match (geometry, kind) {
        (Geometry::Flag(g), PatternKind::BearishFlag) => {
            let mut p = Vec::with_capacity(geometry.span_len());
            for i in 0..=g.pole1_len {
                p.push(base - amp * i as f64 / g.pole1_len as f64);
            }
            let flag_base = base - amp;
            for j in 1..=g.flag_len {
                p.push(flag_base + g.retrace_frac * amp * j as f64 / g.flag_len as f64);
            }
            let flag_top = flag_base + g.retrace_frac * amp;
            for j in 1..=g.pole2_len {
                p.push(flag_top - amp * j as f64 / g.pole2_len as f64);
            }
            let anchors = vec![
                0,
                g.pole1_len,
                g.pole1_len + g.flag_len,
                g.pole1_len + g.flag_len + g.pole2_len,
            ];
            (p, anchors)
        }
        (Geometry::Double(g), PatternKind::DoubleBottom | PatternKind::DoubleTop) => {
            let sign = if kind == PatternKind::DoubleBottom { -1.0 } else { 1.0 };
            let l = g.leg_len;
            let mut p = Vec::with_capacity(4 * l + 1);
            // leg 1: away from base; leg 2: to the pullback; leg 3: back to
            // the extremum; leg 4: through the pullback value (completion).
            for i in 0..=l {
                p.push(base + sign * amp * i as f64 / l as f64);
            }
            let trough = base + sign * amp;
            for j in 1..=l {
                p.push(trough - sign * g.pullback_frac * amp * j as f64 / l as f64);
            }
            let pullback = trough - sign * g.pullback_frac * amp;
            for j in 1..=l {
                p.push(pullback + sign * g.pullback_frac * amp * j as f64 / l as f64);
            }
            for j in 1..=l {
                p.push(
                    trough
                        - sign * (g.pullback_frac + g.completion_rise) * amp * j as f64
                            / l as f64,
                );
            }
            let anchors = vec![0, l, 2 * l, 3 * l, 4 * l];
            (p, anchors)
        }
        _ => unreachable!("geometry/kind agreement checked by caller"),
    }
}

/// Replaces `[at, at+span)` with a noised ideal pattern scaled to the local
/// price (`amplitude = scale * close[at]`), re-basing the remainder of the
/// series so the path stays continuous. Existing injection records are
/// checked for overlap.
pub fn inject(
    series: &BarSeries,
    kind: PatternKind,
    at: usize,
    scale: f64,
    geometry: Geometry,
    seed: u64,
    existing: &[InjectionRecord],
) -> Result<(BarSeries, InjectionRecord), SynthError> {
    if !geometry.matches_kind(kind) {
        return Err(SynthError::InvalidGeometry(format!(
            "geometry {:?} cannot produce {}",
            geometry, kind
        )));
    }
    if !(scale > 0.0 && scale < 0.45) {
        return Err(SynthError::InvalidGeometry(format!(
            "scale {} outside (0, 0.45)",
            scale
        )));
    }
    let span = geometry.span_len();
    let n = series.len();
    if at + span > n {
        return Err(SynthError::SpanOutOfRange { at, len: span, series_len: n });
    }
    if !series.is_contiguous(at, span) {
        return Err(SynthError::InvalidGeometry(
            "injection span crosses a session gap".into(),
        ));
    }
    if existing.iter().any(|r| r.overlaps(at, span)) {
        return Err(SynthError::OverlapWithExistingInjection { at, len: span });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = series.bars()[at].close;
    let amp = scale * base;
    let (mut path, anchors) = ideal_path(kind, &geometry, base, amp);
    let noise_amp = match geometry {
        Geometry::Flag(g) => g.noise_amp,
        Geometry::Double(g) => g.noise_amp,
    };
    for (i, v) in path.iter_mut().enumerate() {
        if !anchors.contains(&i) {
            *v += (rng.gen::<f64>() * 2.0 - 1.0) * noise_amp * amp;
        }
    }

    let mut bars = series.bars().to_vec();
    for (i, &close) in path.iter().enumerate() {
        let idx = at + i;
        let open = if i == 0 { close } else { path[i - 1] };
        let wick: f64 = rng.gen::<f64>() * 0.05 * amp;
        let prev = bars[idx];
        bars[idx] = OhlcvBar {
            timestamp: prev.timestamp,
            open,
            high: open.max(close) + wick,
            low: (open.min(close) - wick).max(close * 1e-6),
            close,
            volume: prev.volume,
        };
    }
    // Re-base the tail so the walk continues from the pattern's end value.
    let offset = path[span - 1] - series.bars()[at + span - 1].close;
    for bar in bars.iter_mut().skip(at + span) {
        bar.open += offset;
        bar.high += offset;
        bar.low += offset;
        bar.close += offset;
        if bar.low <= 0.0 {
            return Err(SynthError::InvalidGeometry(
                "re-based tail reaches non-positive prices; reduce scale".into(),
            ));
        }
    }
    let out = BarSeries::new(series.symbol(), bars)
        .map_err(|e| SynthError::InvalidGeometry(e.to_string()))?;
    let record = InjectionRecord {
        kind,
        start: at,
        length: span,
        scale,
        seed,
        geometry,
    };
    Ok((out, record))
}

/// Samples geometry strictly inside the default detector parameter envelope,
/// so an injection with it must be detectable at default strictness.
pub fn sample_geometry(kind: PatternKind, rng: &mut ChaCha8Rng) -> Geometry {
    match kind {
        PatternKind::BearishFlag => {
            let pole1_len = rng.gen_range(6..=9);
            // Keep the length ratio well inside the 0.3 tolerance.
            let pole2_len = (pole1_len as i64 + rng.gen_range(-1..=1)).max(5) as usize;
            Geometry::Flag(FlagGeometry {
                pole1_len,
                flag_len: rng.gen_range(4..=8),
                pole2_len,
                retrace_frac: rng.gen_range(0.10..0.30),
                noise_amp: 0.08,
            })
        }
        PatternKind::DoubleTop | PatternKind::DoubleBottom => Geometry::Double(DoubleGeometry {
            leg_len: rng.gen_range(5..=7),
            pullback_frac: rng.gen_range(0.45..0.70),
            completion_rise: rng.gen_range(0.30..0.50),
            noise_amp: 0.08,
        }),
    }
}

/// Serializes ground-truth records to JSON-lines.
pub fn records_to_jsonl(records: &[InjectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("injection record"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<InjectionRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
