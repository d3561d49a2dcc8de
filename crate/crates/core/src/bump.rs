//! C^∞ cutoffs built from a single smooth step.

/// Smooth monotone step: 0 for x ≤ 0, 1 for x ≥ 1, and `g(x) + g(1 - x) = 1`.
#[inline]
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// 1 on (-∞, lo], 0 on [hi, ∞), smooth and decreasing in between.
#[inline]
pub fn plateau(r: f64, lo: f64, hi: f64) -> f64 {
    smooth_step((hi - r) / (hi - lo))
}

/// Even bump: 1 on [-inner, inner], 0 outside (-outer, outer).
#[inline]
pub fn even_bump(x: f64, inner: f64, outer: f64) -> f64 {
    plateau(x.abs(), inner, outer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_symmetry_and_limits() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((smooth_step(x) + smooth_step(1.0 - x) - 1.0).abs() < 1e-15);
            assert!(smooth_step(x) >= smooth_step(x - 0.01));
        }
    }

    #[test]
    fn plateau_edges() {
        assert_eq!(plateau(1.0, 1.0, 2.0), 1.0);
        assert_eq!(plateau(2.0, 1.0, 2.0), 0.0);
        assert!((plateau(1.5, 1.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
