//! Universal single-spin profile functions.
//!
//! Everything here derives from the one-dimensional integrals
//!
//! ```text
//! I_k(s) = int_0^inf x^k exp(-x^4/4 - s x^2/2) dx,        k > -1,
//! ```
//!
//! evaluated in log space so that large |s| neither overflows (s << 0, the
//! integrand peaks at height e^(s^2/4)) nor loses the ratio structure the
//! consumers need. The exported quantities are
//!
//! * `f_n(s) = I_(n+1)(s) / (n I_(n-1)(s))` - the effective-plateau profile
//!   for `n`-component spins; `f_n` is strictly decreasing with
//!   `f_n(s) ~ 1/s` as `s -> +inf` and `f_n(s) ~ -s/n` as `s -> -inf`;
//! * `sigma_moment(n, k, s) = I_(n+k-1)(s) / I_(n-1)(s)` - the radial
//!   reduction of the `R^n` moment `<|x|^k>` under the weight
//!   `exp(-|x|^4/4 - s |x|^2/2)`;
//! * `gaussian_moment(n, p, s) = (2/s)^p Gamma((n+2p)/2) / Gamma(n/2)` -
//!   the purely Gaussian counterpart `<|x|^(2p)>` for weight
//!   `exp(-s |x|^2 / 2)`, in closed form;
//! * `ik_zero_closed(k) = 4^((k+1)/4 - 1) Gamma((k+1)/4)` - the exact value
//!   of `I_k(0)`, kept as an independent check on the quadrature.

use crate::error::{Error, Result};
use crate::quad;
use crate::special;

/// Relative tolerance used for the profile quadratures.
const QUAD_REL_TOL: f64 = 1e-12;

fn check_s(s: f64) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::domain(format!("profile argument s must be finite, got {s}")));
    }
    Ok(())
}

/// Log-integrand `k ln x - x^4/4 - s x^2/2`.
fn log_integrand(k: f64, s: f64, x: f64) -> f64 {
    let x2 = x * x;
    if k == 0.0 {
        -0.25 * x2 * x2 - 0.5 * s * x2
    } else {
        k * x.ln() - 0.25 * x2 * x2 - 0.5 * s * x2
    }
}

/// Stationary point of the log-integrand: `x*^2 = (-s + sqrt(s^2 + 4k))/2`
/// (zero for `k = 0, s >= 0`).
fn peak(k: f64, s: f64) -> f64 {
    if k == 0.0 {
        (-s).max(0.0).sqrt()
    } else {
        (0.5 * (-s + (s * s + 4.0 * k).sqrt())).sqrt()
    }
}

/// `log I_k(s)`, computed by adaptive quadrature of the peak-normalised
/// integrand. Valid for every finite `s` and `k > -1`.
pub fn log_ik(k: f64, s: f64) -> Result<f64> {
    if !(k > -1.0) {
        return Err(Error::domain(format!("I_k needs k > -1, got k = {k}")));
    }
    check_s(s)?;
    let xs = peak(k, s);
    let m = if xs > 0.0 { log_integrand(k, s, xs) } else { 0.0 };

    // March outward until the integrand has dropped ~e^-46 below the peak;
    // beyond the stationary point the log-integrand is concave, so the
    // remaining tail is bounded by a single exponential.
    let mut hi = xs.max(1.0);
    loop {
        hi = hi * 1.5 + 0.5;
        if log_integrand(k, s, hi) - m < -46.0 {
            break;
        }
        if hi > 1e6 {
            return Err(Error::invariant(format!(
                "integrand support did not decay (k = {k}, s = {s})"
            )));
        }
    }

    // Breakpoints bracketing the peak so the first adaptive pass sees it.
    let mut pts = vec![0.0];
    if xs > 0.0 {
        // Width from the second derivative at the peak.
        let d2 = (k / (xs * xs) + 3.0 * xs * xs + s).abs().max(1e-12);
        let w = (1.0 / d2).sqrt();
        for p in [xs - 2.0 * w, xs - w, xs, xs + w, xs + 2.0 * w] {
            if p > 0.0 && p < hi {
                pts.push(p);
            }
        }
    }
    pts.push(hi);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-300);

    let r = quad::integrate_segmented(
        |x| (log_integrand(k, s, x) - m).exp(),
        &pts,
        QUAD_REL_TOL,
        0.0,
    )?;
    if !(r.value > 0.0) {
        return Err(Error::invariant(format!(
            "quadrature returned non-positive mass {} for I_{k}({s})",
            r.value
        )));
    }
    Ok(m + r.value.ln())
}

/// `I_k(s)` itself; may overflow to infinity for strongly negative `s`
/// (use [`log_ik`] there).
pub fn ik(k: f64, s: f64) -> Result<f64> {
    Ok(log_ik(k, s)?.exp())
}

/// Closed form `I_k(0) = 4^((k+1)/4 - 1) Gamma((k+1)/4)`.
pub fn ik_zero_closed(k: f64) -> Result<f64> {
    if !(k > -1.0) {
        return Err(Error::domain(format!("I_k needs k > -1, got k = {k}")));
    }
    let e = (k + 1.0) / 4.0;
    Ok(4.0f64.powf(e - 1.0) * special::gamma(e)?)
}

/// Effective plateau profile `f_n(s) = I_(n+1)(s) / (n I_(n-1)(s))` for
/// `n >= 1` spin components.
pub fn f_profile(n: u32, s: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("component count n must be >= 1"));
    }
    let nf = n as f64;
    Ok((log_ik(nf + 1.0, s)? - log_ik(nf - 1.0, s)?).exp() / nf)
}

/// Radial moment ratio `<|x|^k>` for the `R^n` weight
/// `exp(-|x|^4/4 - s|x|^2/2)`: equals `I_(n+k-1)(s) / I_(n-1)(s)`.
pub fn sigma_moment(n: u32, k: u32, s: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("component count n must be >= 1"));
    }
    let nf = n as f64;
    Ok((log_ik(nf + k as f64 - 1.0, s)? - log_ik(nf - 1.0, s)?).exp())
}

/// Gaussian moment `<|x|^(2p)>` for the `R^n` weight `exp(-s|x|^2/2)`,
/// `s > 0`, in closed form `(2/s)^p Gamma((n+2p)/2) / Gamma(n/2)`.
pub fn gaussian_moment(n: u32, p: u32, s: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("component count n must be >= 1"));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!("gaussian_moment needs s > 0, got {s}")));
    }
    let nf = n as f64;
    let pf = p as f64;
    Ok((2.0 / s).powf(pf)
        * (special::ln_gamma(0.5 * (nf + 2.0 * pf))? - special::ln_gamma(0.5 * nf)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn ik_at_zero_matches_closed_form() {
        for k in 0..10 {
            let kf = k as f64;
            assert_relative_eq!(
                ik(kf, 0.0).unwrap(),
                ik_zero_closed(kf).unwrap(),
                max_relative = 1e-11
            );
        }
        // Half-integer exponent too, since k is not restricted to integers.
        assert_relative_eq!(
            ik(0.5, 0.0).unwrap(),
            ik_zero_closed(0.5).unwrap(),
            max_relative = 1e-11
        );
    }

    #[test]
    fn f1_at_zero_is_gamma_ratio() {
        let expected =
            2.0 * special::gamma(0.75).unwrap() / special::gamma(0.25).unwrap();
        assert_abs_diff_eq!(f_profile(1, 0.0).unwrap(), expected, epsilon = 1e-10);
        // Six-decimal reference value.
        assert_abs_diff_eq!(f_profile(1, 0.0).unwrap(), 0.675_979, epsilon = 1e-6);
    }

    #[test]
    fn f_decays_like_inverse_s() {
        for n in 1..=3u32 {
            for s in [1e3, 1e4] {
                let f = f_profile(n, s).unwrap();
                assert!(
                    (s * f - 1.0).abs() < 0.02 * (1e3 / s),
                    "s f_{n}({s}) = {}",
                    s * f
                );
            }
        }
    }

    #[test]
    fn f_grows_linearly_for_negative_s() {
        // f_n(s) ~ -s/n as s -> -inf; log-space evaluation keeps this finite
        // far beyond where the raw integrand overflows.
        for (n, s) in [(1u32, -50.0f64), (1, -200.0), (2, -100.0), (3, -100.0)] {
            let f = f_profile(n, s).unwrap();
            assert_relative_eq!(f, -s / n as f64, max_relative = 0.05);
        }
    }

    #[test]
    fn f_is_strictly_decreasing_on_a_grid() {
        for n in [1u32, 2, 3] {
            let mut prev = f64::INFINITY;
            let mut s = -10.0;
            while s <= 10.0 + 1e-9 {
                let f = f_profile(n, s).unwrap();
                assert!(f < prev, "f_{n} not decreasing at s = {s}");
                prev = f;
                s += 0.25;
            }
        }
    }

    #[test]
    fn sigma_moment_matches_2d_cartesian_quadrature() {
        // Independent route for n = 2: reduce <|x|^2> over R^2 to iterated
        // one-dimensional integrals over Cartesian coordinates.
        let weight = |x: f64, y: f64, s: f64| {
            let r2 = x * x + y * y;
            (-0.25 * r2 * r2 - 0.5 * s * r2).exp()
        };
        for s in [-1.0, 0.0, 1.0] {
            let inner = |y: f64, pow: u32| {
                move |x: f64| (x * x + y * y).powi(pow as i32) * weight(x, y, s)
            };
            let outer = |pow: u32| {
                quad::integrate(
                    |y| {
                        quad::integrate(inner(y, pow), -6.0, 6.0, 1e-10, 1e-16)
                            .unwrap()
                            .value
                    },
                    -6.0,
                    6.0,
                    1e-10,
                    1e-16,
                )
                .unwrap()
                .value
            };
            let expected = outer(1) / outer(0);
            assert_relative_eq!(
                sigma_moment(2, 2, s).unwrap(),
                expected,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn gaussian_moment_closed_form_and_quadrature() {
        // (2/s)^1 Gamma((n+2)/2)/Gamma(n/2) = n/s exactly.
        for n in 1..=4u32 {
            for s in [0.5, 2.0, 10.0] {
                assert_relative_eq!(
                    gaussian_moment(n, 1, s).unwrap(),
                    n as f64 / s,
                    max_relative = 1e-12
                );
            }
        }
        // p = 2 against radial quadrature of the defining integral.
        let s = 1.5;
        let radial = |m: f64| {
            quad::integrate(|x| x.powf(m) * (-0.5 * s * x * x).exp(), 0.0, 20.0, 1e-11, 0.0)
                .unwrap()
                .value
        };
        for n in 1..=3u32 {
            let expected = radial(n as f64 + 3.0) / radial(n as f64 - 1.0);
            assert_relative_eq!(
                gaussian_moment(n, 2, s).unwrap(),
                expected,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn domain_errors() {
        assert!(log_ik(-1.0, 0.0).is_err());
        assert!(log_ik(0.0, f64::NAN).is_err());
        assert!(f_profile(0, 0.0).is_err());
        assert!(gaussian_moment(2, 1, 0.0).is_err());
        assert!(gaussian_moment(2, 1, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_monotone_random_pairs(n in 1u32..4, s in -20.0f64..20.0, ds in 0.01f64..5.0) {
            let f1 = f_profile(n, s).unwrap();
            let f2 = f_profile(n, s + ds).unwrap();
            prop_assert!(f2 < f1);
        }

        #[test]
        fn ik_recurrence(k in 0.0f64..6.0, s in -5.0f64..5.0) {
            // Integration by parts: (k+1) I_k = I_(k+4) + s I_(k+2).
            let lhs = (k + 1.0) * ik(k, s).unwrap();
            let rhs = ik(k + 4.0, s).unwrap() + s * ik(k + 2.0, s).unwrap();
            prop_assert!(
                (lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0),
                "lhs = {lhs}, rhs = {rhs}"
            );
        }
    }
}
