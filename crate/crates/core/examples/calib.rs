// Scratch calibration harness (not part of the deliverable).
use chartscan::patterns::{scan_series, Detector, DoubleParams, FlagParams, PatternKind};
use chartscan::synthgen::{inject, random_walk, sample_geometry};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = FlagParams::default();
    let mut total_windows = 0usize;
    let mut flag_hits = 0usize;
    for seed in 0..10u64 {
        let s = random_walk(10_000, seed, 0.002, 100.0);
        total_windows += s.len() - 30 + 1;
        flag_hits += scan_series(&s, &Detector::BearishFlag(params), 30)
            .unwrap()
            .len();
    }
    println!(
        "flag fp per 10k = {:.2} ({} / {})",
        flag_hits as f64 / total_windows as f64 * 10_000.0,
        flag_hits,
        total_windows
    );
    let mut top = 0usize;
    let mut bottom = 0usize;
    for seed in 0..10u64 {
        let s = random_walk(10_000, seed, 0.002, 100.0);
        top += scan_series(&s, &Detector::DoubleTop(DoubleParams::default()), 30)
            .unwrap()
            .len();
        bottom += scan_series(&s, &Detector::DoubleBottom(DoubleParams::default()), 30)
            .unwrap()
            .len();
    }
    println!("double top/bottom per 10k = {:.2} / {:.2}",
        top as f64 / total_windows as f64 * 10_000.0,
        bottom as f64 / total_windows as f64 * 10_000.0);

    for kind in [
        PatternKind::BearishFlag,
        PatternKind::DoubleTop,
        PatternKind::DoubleBottom,
    ] {
        let mut detected = 0usize;
        for i in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
            let geometry = sample_geometry(kind, &mut rng);
            let s = random_walk(200, 77 + i, 0.002, 100.0);
            let (s, rec) = inject(&s, kind, 80, 0.05, geometry, 33 + i, &[]).unwrap();
            let det = Detector::with_defaults(kind);
            let matches = scan_series(&s, &det, 30).unwrap();
            if matches.iter().any(|m| {
                let (a, b) = m.span();
                b > rec.start && a < rec.start + rec.length
            }) {
                detected += 1;
            }
        }
        println!("recall {}: {}/100", kind, detected);
    }
}
