//! Binary cross-entropy with the prediction clamped away from {0, 1}.

const CLAMP: f64 = 1e-7;

/// Returns `(loss, dloss/dpred)` for a probability `pred` against a 0/1
/// `label`. `pred` is clamped to `[1e-7, 1 - 1e-7]` before the logs; the
/// derivative is taken at the clamped value.
pub fn bce_loss(pred: f64, label: f64) -> (f64, f64) {
    let p = pred.clamp(CLAMP, 1.0 - CLAMP);
    let loss = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
    let grad = (p - label) / (p * (1.0 - p));
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_prediction_costs_ln2() {
        let (loss, _) = bce_loss(0.5, 1.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn exact_prediction_clamps_to_tiny_loss() {
        let (loss, _) = bce_loss(1.0, 1.0);
        assert!(loss > 0.0 && loss < 1e-6);
        let (loss, _) = bce_loss(0.0, 0.0);
        assert!(loss > 0.0 && loss < 1e-6);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let eps = 1e-6;
        for (pred, label) in [(0.3, 0.0), (0.3, 1.0), (0.8, 1.0), (0.5, 0.0)] {
            let (_, g) = bce_loss(pred, label);
            let num = (bce_loss(pred + eps, label).0 - bce_loss(pred - eps, label).0) / (2.0 * eps);
            assert!(
                (g - num).abs() / num.abs().max(1.0) < 1e-6,
                "pred={} label={}: {} vs {}",
                pred,
                label,
                g,
                num
            );
        }
    }
}
