//! Small numeric helpers shared by the experiment and inference modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;

/// Predicted rates are kept this far from 0 and 1 when taking logs.
pub const RATE_FLOOR: f64 = 1e-12;

/// Two-sided tail probability of a standard normal: `P(|Z| >= |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `ln P(K = k)` for `K ~ Binomial(n, p)`, with `p` floored away from 0 and 1.
pub fn binomial_log_pmf(k: u64, n: u64, p: f64) -> f64 {
    debug_assert!(k <= n);
    let p = p.clamp(RATE_FLOOR, 1.0 - RATE_FLOOR);
    let kf = k as f64;
    let nf = n as f64;
    ln_binomial(n, k) + kf * p.ln() + (nf - kf) * (1.0 - p).ln()
}

/// Log-likelihood of the saturated model (`p = k/n`), without flooring.
pub fn binomial_log_pmf_saturated(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let nf = n as f64;
    let p = kf / nf;
    let mut ll = ln_binomial(n, k);
    if k > 0 {
        ll += kf * p.ln();
    }
    if k < n {
        ll += (nf - kf) * (1.0 - p).ln();
    }
    ll
}

/// Upper tail of a chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    match ChiSquared::new(df as f64) {
        Ok(d) => d.sf(x.max(0.0)),
        Err(_) => 1.0,
    }
}
