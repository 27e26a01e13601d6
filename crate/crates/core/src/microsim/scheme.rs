use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reservoir rates `(c_in⁻, c_out⁻, c_in⁺, c_out⁺)` at sites `0` and `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRates {
    pub in_left: f64,
    pub out_left: f64,
    pub in_right: f64,
    pub out_right: f64,
}

impl Default for BoundaryRates {
    fn default() -> Self {
        Self::uniform(0.5)
    }
}

impl BoundaryRates {
    pub fn uniform(rate: f64) -> Self {
        Self::new([rate; 4])
    }

    pub fn new([in_left, out_left, in_right, out_right]: [f64; 4]) -> Self {
        Self {
            in_left,
            out_left,
            in_right,
            out_right,
        }
    }

    pub fn closed() -> Self {
        Self::uniform(0.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.in_left, self.out_left, self.in_right, self.out_right]
    }
}

/// Lattice size, asymmetry, viscosity `σ_N` and block half-width `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingScheme {
    pub n: usize,
    pub p: f64,
    pub sigma: f64,
    pub k: usize,
    pub boundary: BoundaryRates,
}

pub const DEFAULT_SIGMA_EXPONENT: f64 = 2.0 / 3.0;
pub const DEFAULT_K_EXPONENT: f64 = 0.61;

impl ScalingScheme {
    /// Validated scheme: `p ∈ (1/2, 1]`, `σ_N/N < 1 ≤ σ_N²/N` and
    /// `N^{5/9} ≤ K ≤ σ_N`.
    pub fn new(n: usize, p: f64, sigma: f64, k: usize, boundary: BoundaryRates) -> Result<Self> {
        let scheme = Self::unchecked(n, p, sigma, k, boundary)?;
        if !(p > 0.5 && p <= 1.0) {
            return Err(invalid(format!("asymmetry p = {p} must lie in (1/2, 1]")));
        }
        scheme.check_windows()?;
        Ok(scheme)
    }

    /// `σ_N = round(N^a)` and `K = round(N^b)`.
    pub fn from_exponents(
        n: usize,
        p: f64,
        sigma_exponent: f64,
        k_exponent: f64,
        boundary: BoundaryRates,
    ) -> Result<Self> {
        let nf = n as f64;
        let sigma = nf.powf(sigma_exponent).round();
        let k = nf.powf(k_exponent).round() as usize;
        Self::new(n, p, sigma, k, boundary)
    }

    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::from_exponents(
            n,
            1.0,
            DEFAULT_SIGMA_EXPONENT,
            DEFAULT_K_EXPONENT,
            BoundaryRates::default(),
        )
    }

    /// Skips the asymptotic-window checks and allows any `p ∈ [0, 1]`;
    /// meant for small-system validation runs.
    pub fn unchecked(n: usize, p: f64, sigma: f64, k: usize, boundary: BoundaryRates) -> Result<Self> {
        if n < 1 {
            return Err(invalid("lattice size must be positive"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("asymmetry p = {p} must lie in [0, 1]")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("viscosity sigma = {sigma} must be nonnegative")));
        }
        if boundary.as_array().iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(invalid("boundary rates must be nonnegative"));
        }
        Ok(Self {
            n,
            p,
            sigma,
            k,
            boundary,
        })
    }

    pub fn check_windows(&self) -> Result<()> {
        let n = self.n as f64;
        if self.sigma / n >= 1.0 {
            return Err(invalid(format!("sigma_N/N = {} must be below 1", self.sigma / n)));
        }
        if self.sigma * self.sigma / n < 1.0 {
            return Err(invalid(format!(
                "sigma_N^2/N = {} must be at least 1",
                self.sigma * self.sigma / n
            )));
        }
        let k = self.k as f64;
        if k < n.powf(5.0 / 9.0) || k > self.sigma {
            return Err(invalid(format!(
                "block half-width K = {} outside [N^(5/9), sigma_N] = [{:.2}, {}]",
                self.k,
                n.powf(5.0 / 9.0),
                self.sigma
            )));
        }
        if 2 * self.k > self.n {
            return Err(invalid("block half-width leaves no interior band"));
        }
        Ok(())
    }

    /// `2p − 1`, the flux amplitude.
    pub fn drift(&self) -> f64 {
        2.0 * self.p - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fit_windows() {
        for n in [256, 512, 1024, 2048, 4096] {
            let s = ScalingScheme::with_defaults(n).unwrap();
            assert_eq!(s.sigma, (n as f64).powf(2.0 / 3.0).round());
        }
        let s = ScalingScheme::with_defaults(256).unwrap();
        assert_eq!((s.sigma, s.k), (40.0, 29));
        let s = ScalingScheme::with_defaults(2048).unwrap();
        assert_eq!((s.sigma, s.k), (161.0, 105));
    }

    #[test]
    fn rejects_out_of_window() {
        let b = BoundaryRates::default();
        assert!(ScalingScheme::new(256, 0.5, 40.0, 29, b).is_err());
        assert!(ScalingScheme::new(256, 1.0, 300.0, 29, b).is_err());
        assert!(ScalingScheme::new(256, 1.0, 10.0, 29, b).is_err());
        assert!(ScalingScheme::new(256, 1.0, 40.0, 5, b).is_err());
        assert!(ScalingScheme::new(256, 1.0, 40.0, 29, BoundaryRates::uniform(-1.0)).is_err());
        assert!(ScalingScheme::unchecked(4, 0.5, 0.0, 1, b).is_ok());
    }
}
