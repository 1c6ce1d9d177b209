use chartscan::patterns::{scan_series, Detector, FlagParams, PatternKind};
use chartscan::synthgen::{inject, random_walk, FlagGeometry, Geometry};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = FlagParams {
        min_pole_drop: 0.55,
        pole_ratio_tol: 0.15,
        max_flag_retrace: 0.4,
        max_pole_len: 10,
        min_flag_len: 6,
        ..FlagParams::default()
    };
    let mut total_windows = 0usize;
    let mut flag_hits = 0usize;
    for seed in 0..10u64 {
        let s = random_walk(10_000, seed, 0.002, 100.0);
        total_windows += s.len() - 30 + 1;
        flag_hits += scan_series(&s, &Detector::BearishFlag(params), 30).unwrap().len();
    }
    let mut detected = 0usize;
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let pole1_len = rng.gen_range(7..=8);
        let pole2_len = (pole1_len as i64 + rng.gen_range(-1..=1)) as usize;
        let geometry = Geometry::Flag(FlagGeometry {
            pole1_len,
            flag_len: rng.gen_range(7..=8),
            pole2_len,
            retrace_frac: rng.gen_range(0.30..0.38),
            noise_amp: 0.08,
        });
        let s = random_walk(200, 77 + i, 0.002, 100.0);
        let (s, rec) = inject(&s, PatternKind::BearishFlag, 80, 0.05, geometry, 33 + i, &[]).unwrap();
        let matches = scan_series(&s, &Detector::BearishFlag(params), 30).unwrap();
        if matches.iter().any(|m| {
            let (a, b) = m.span();
            b > rec.start && a < rec.start + rec.length
        }) {
            detected += 1;
        }
    }
    println!(
        "final: fp/10k = {:.2} ({} / {}), recall = {}/200",
        flag_hits as f64 / total_windows as f64 * 10_000.0,
        flag_hits, total_windows, detected
    );
}
