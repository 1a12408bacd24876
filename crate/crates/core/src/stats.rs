//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// `Φ(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    standard().cdf(z)
}

/// Upper tail `1 - Φ(z)`, accurate far into the tail.
pub fn norm_sf(z: f64) -> f64 {
    standard().sf(z)
}

/// `Φ⁻¹(p)`.
pub fn norm_quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_quantile(0.95) - 1.644_853_626_951_472).abs() < 1e-9);
        assert!((norm_sf(5.0) / 2.866_515_718_791_933e-7 - 1.0).abs() < 1e-9);
    }
}
