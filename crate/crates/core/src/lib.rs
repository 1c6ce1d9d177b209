//! Candlestick chart pattern detection and learned recognizers for OHLCV time series.
//!
//! The crate covers the full experiment pipeline:
//!
//! * [`market_data`] — CSV ingest, validation, sliding windows, normalization
//! * [`patterns`] — rule-based detectors for the bearish flag and double top/bottom;
//!   these act as the labeling oracle for everything downstream
//! * [`synthgen`] — seeded synthetic OHLCV generation with ground-truth pattern injection
//! * [`dataset`] — balanced, split, reproducible training corpora built from detector scans
//! * [`raster`] — binary vignette rendering (line and candlestick styles) for the 2D models
//! * [`nn`] — minimal dense/conv/LSTM network core with exact backpropagation and
//!   finite-difference gradient checking
//! * [`models`] — the three reference architectures (LSTM, 1D CNN, 2D CNN), training,
//!   and grid search
//! * [`eval`] — confusion-matrix metrics, audit export, and report tables
//! * [`dtw`] — dynamic-time-warping distance and template matching baseline
//! * [`backtest`] — double top/bottom pullback strategy simulation
//!
//! Window sweeps (scanning, dataset building, rendering, batch inference) run on a
//! rayon thread pool when the default `parallel` feature is enabled and fall back to
//! sequential iteration when it is not. Results are identical either way.

pub mod backtest;
pub mod dataset;
pub mod dtw;
pub mod eval;
pub mod exec;
pub mod market_data;
pub mod models;
pub mod nn;
pub mod patterns;
pub mod raster;
pub mod synthgen;



