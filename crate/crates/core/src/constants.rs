//! Sphere volumes and the derived constants of the p-energy limit.

use crate::scalar::Real;

/// Target-dimension constants for maps into the unit sphere of R^n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants<F> {
    pub n: u32,
    /// H^{n-1} measure of the unit sphere in R^n.
    pub omega: F,
    /// `omega / n`, the Jacobian quantum.
    pub gamma: F,
    /// `(n-1)^{n/2} * omega`, the energy per unit mass of the limit current.
    pub limit: F,
}

impl<F: Real> Constants<F> {
    pub fn new(n: u32) -> Self {
        assert!(n >= 2, "target dimension must be at least 2");
        let omega = sphere_area::<F>(n);
        let nf = F::of(n as f64);
        Constants {
            n,
            omega,
            gamma: omega / nf,
            limit: (nf - F::one()).powf(nf / F::of(2.0)) * omega,
        }
    }
}

/// Gamma(n/2) for a positive integer n, computed exactly through the
/// integer and half-integer recursions.
fn half_gamma(n: u32) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(f64::from).product()
    } else {
        // Gamma(k + 1/2) = (k - 1/2)(k - 3/2)...(1/2) sqrt(pi)
        let k = n / 2;
        (0..k).map(|j| j as f64 + 0.5).product::<f64>() * std::f64::consts::PI.sqrt()
    }
}

/// `2 pi^{n/2} / Gamma(n/2)`: surface measure of the unit sphere in R^n.
pub fn sphere_area<F: Real>(n: u32) -> F {
    let pi = std::f64::consts::PI;
    F::of(2.0 * pi.powf(n as f64 / 2.0) / half_gamma(n))
}
