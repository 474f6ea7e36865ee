//! Standard normal density, distribution and quantile functions.
//!
//! The distribution function is evaluated through the complementary error
//! function, which keeps full relative precision in both tails. The quantile
//! starts from a rational tail approximation and is polished with Halley
//! steps against [`norm_cdf`].

use std::f64::consts::SQRT_2;

use libm::erfc;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density φ(x).
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// log φ(x).
#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal distribution function Φ(x). Accepts ±∞.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail 1 − Φ(x), computed without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// log Φ(x), accurate deep into the lower tail where Φ itself underflows.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        return (-norm_sf(x)).ln_1p();
    }
    if x > -30.0 {
        return norm_cdf(x).ln();
    }
    // Asymptotic expansion of Mills' ratio; terms beyond x^-10 are below 1e-15 here.
    let z = 1.0 / (x * x);
    let series = 1.0 - z * (1.0 - z * (3.0 - z * (15.0 - z * (105.0 - z * 945.0))));
    log_norm_pdf(x) - (-x).ln() + series.ln()
}

/// log(1 − Φ(x)).
#[inline]
pub fn log_norm_sf(x: f64) -> f64 {
    log_norm_cdf(-x)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1).
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        // 1 - p is exact for p >= 0.5
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 0.5);
    let t = (-2.0 * p.ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    let mut x = -(t - num / den);
    for _ in 0..50 {
        let e = (norm_cdf(x) - p) / norm_pdf(x);
        if !e.is_finite() {
            break;
        }
        let step = e / (1.0 + 0.5 * x * e);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Inverse Mills ratio φ(x) / (1 − Φ(x)), stable for large x.
pub fn mills_upper(x: f64) -> f64 {
    if x < 30.0 {
        norm_pdf(x) / norm_sf(x)
    } else {
        (log_norm_pdf(x) - log_norm_sf(x)).exp()
    }
}

/// φ(x) / Φ(x), stable for very negative x.
pub fn mills_lower(x: f64) -> f64 {
    mills_upper(-x)
}
