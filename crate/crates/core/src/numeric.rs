//! Small numeric helpers shared across modules.

/// log(Σ exp(x_i)) with the max subtracted for stability.
///
/// Returns -inf for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Σ (x_i − x̄)², centered two-pass form.
///
/// The algebraically equal `Σx² − (Σx)²/m` cancels catastrophically when the
/// x_i share a large common value and differ at rounding scale; centering
/// keeps the result accurate down to the square of that scale.
pub fn centered_sum_sq(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum_in_safe_range() {
        let xs: [f64; 3] = [0.1, -2.0, 1.5];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn survives_large_magnitudes() {
        let xs = [-120_000.0, -120_001.0];
        let got = log_sum_exp(&xs);
        assert!((got - (-120_000.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn centered_sum_sq_resolves_tiny_spreads() {
        // Around 0.3, spreads of 1e-15: the shortcut Σx² − (Σx)²/m carries
        // cancellation noise at ulp(0.09) ≈ 1e-17, drowning the true 2e-30.
        let xs = [0.3, 0.3 + 1.0e-15, 0.3 - 1.0e-15, 0.3];
        let got = centered_sum_sq(&xs);
        assert!(got > 1.0e-30 && got < 3.0e-30, "got {got:e}");

        let shortcut = {
            let m = xs.len() as f64;
            let sum: f64 = xs.iter().sum();
            let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
            sum_sq - sum * sum / m
        };
        // The shortcut lands on 0.0 or on cancellation noise ≥ ulp scale,
        // never near the true value: relative error at least 50%.
        assert!((shortcut - got).abs() > 0.5 * got, "shortcut is unusable here");

        assert_eq!(centered_sum_sq(&[]), 0.0);
        assert_eq!(centered_sum_sq(&[5.0]), 0.0);
        assert!((centered_sum_sq(&[1.0, 3.0]) - 2.0).abs() < 1e-15);
    }
}
