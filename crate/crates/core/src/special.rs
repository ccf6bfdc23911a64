//! Special functions.

/// Euler Gamma function.
///
/// Backed by the Lanczos approximation in `statrs`; relative accuracy on
/// `(1, 2)` is better than `1e-14`.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((gamma(1.5) - 0.5 * sqrt_pi).abs() < 1e-14);
        assert!((gamma(1.0) - 1.0).abs() < 1e-14);
        assert!((gamma(2.0) - 1.0).abs() < 1e-14);
        assert!((gamma(0.5) - sqrt_pi).abs() < 1e-13);
        // Γ(1.2) = 0.2 Γ(0.2)
        assert!((gamma(1.2) - 0.2 * gamma(0.2)).abs() / gamma(1.2) < 1e-13);
        assert!((gamma(1.25) - 0.906_402_477_055_477).abs() < 1e-14);
    }
}
