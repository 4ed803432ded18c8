//! Standard normal density, distribution function and Mills-ratio helpers,
//! with log-space variants that stay finite far into the tails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Below this argument `erfc` loses the left tail to underflow.
const LEFT_TAIL_CF: f64 = -37.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x), relative accuracy near machine precision on the left tail.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x) without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// ln Φ(x) for every finite x.
pub fn ln_cdf(x: f64) -> f64 {
    if x < LEFT_TAIL_CF {
        ln_pdf(x) + ln_mills(x)
    } else if x > 5.0 {
        (-sf(x)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// ln of Φ(x)/φ(x).
pub fn ln_mills(x: f64) -> f64 {
    if x < -5.0 {
        // Φ(x)/φ(x) = 1/(u + 1/(u + 2/(u + ...))) with u = −x.
        let u = -x;
        -(u + cf_tail(u, 1.0)).ln()
    } else {
        ln_cdf(x) - ln_pdf(x)
    }
}

/// Φ(x)/φ(x). Overflows to +∞ only for x beyond ~38.
pub fn mills(x: f64) -> f64 {
    ln_mills(x).exp()
}

/// h(z) = z + φ(z)/Φ(z), the mean of W ~ N(z, 1) conditioned on W ≥ 0.
/// Stable for very negative z, where the two terms nearly cancel.
pub fn truncated_mean_factor(z: f64) -> f64 {
    if z < -5.0 {
        let u = -z;
        1.0 / (u + cf_tail(u, 2.0))
    } else {
        z + (-ln_mills(z)).exp()
    }
}

/// k/(u + (k+1)/(u + (k+2)/(u + ...))) by the modified Lentz method.
fn cf_tail(u: f64, k: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for j in 0..10_000 {
        let a = k + j as f64;
        d = u + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = u + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-15);
        assert!((sf(6.0) - 9.865_876_450_376_981e-10).abs() < 1e-22);
    }

    #[test]
    fn mills_branches_agree_at_switch() {
        for &x in &[-5.0, -5.5, -8.0, -20.0, -36.0] {
            let direct = cdf(x).ln() - ln_pdf(x);
            let u = -x;
            let cf = -(u + cf_tail(u, 1.0)).ln();
            assert!((direct - cf).abs() < 1e-15 * (1.0 + x * x), "x={x}: {direct} vs {cf}");
        }
    }

    #[test]
    fn truncated_mean_branches_agree() {
        for &z in &[-5.0, -6.0, -9.0] {
            let direct = z + pdf(z) / cdf(z);
            let stable = truncated_mean_factor(z);
            assert!((direct - stable).abs() / stable < 1e-8, "z={z}");
        }
        assert!((truncated_mean_factor(0.0) - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn deep_left_tail_is_finite() {
        let l = ln_cdf(-60.0);
        assert!(l.is_finite());
        // ln Φ(x) ≈ ln φ(x) − ln(−x) for large −x.
        assert!((l - (ln_pdf(-60.0) - 60f64.ln())).abs() < 1e-3);
        assert!(truncated_mean_factor(-1e3) > 0.0);
    }
}
