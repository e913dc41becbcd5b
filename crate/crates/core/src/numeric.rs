//! Small scalar helpers shared across modules.

/// Lower clamp applied to arguments of `ln` and to divisors.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Symmetric relative error `|a - b| / max(|a|, |b|)`; zero when both are zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Gradient comparison used by every finite-difference check: relative error
/// within `rel`, except that values below `small` in magnitude are compared
/// absolutely against `abs`.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64, small: f64, abs: f64) -> bool {
    if analytic.abs() < small {
        (analytic - numeric).abs() <= abs
    } else {
        rel_err(analytic, numeric) <= rel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(7.0) - 0.999_088_948_806_1).abs() < 1e-12);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn relative_error() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!((rel_err(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(grad_close(1e-9, 2e-9, 1e-5, 1e-6, 1e-8));
        assert!(!grad_close(1.0, 1.1, 1e-5, 1e-6, 1e-8));
    }
}
