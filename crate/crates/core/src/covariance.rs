//! Hierarchical Laplacians, block covariances, and their finite-volume
//! Green functions.
//!
//! All kernels here are hierarchically translation invariant, hence
//! functions of the coalescence scale `jxy = j(x, y)` alone; routines take
//! that scale index rather than a pair of sites. The building blocks are
//! the block-averaging kernels
//!
//! ```text
//! Q_j(x, y) = L^(-d*j) * [x, y in the same j-block],    P_j = Q_(j-1) - Q_j,
//! ```
//!
//! which are orthogonal projections with `Q_0 = id` and `sum_j P_j + Q_N = id`.
//! The minus-Laplacians are, in spectral form,
//!
//! ```text
//! -Lap(periodic) = sum_{j=1..N} L^(-2(j-1)) P_j,
//! -Lap(free)     = -Lap(periodic) + q L^(-2N) Q_N,
//! ```
//!
//! with `q = (1 - L^-d) / (1 - L^-(d+2))`. Equivalently `-Lap = q (id - J)`
//! for the coupling matrices built in [`coupling_matrix`]. For mass `a` the
//! resolvent splits into per-scale block covariances plus a zero-mode part:
//!
//! ```text
//! (-Lap + a)^-1 = sum_{j=1..N} gamma_j(a) P_j + chat,
//! gamma_j(a)    = L^(2(j-1)) / (1 + a L^(2(j-1))),
//! chat          = Q_N / a_eff,
//! ```
//!
//! where the effective zero-mode mass `a_eff` is `a` for periodic and
//! `a + q L^(-2N)` for free boundary conditions. The dense-matrix builders
//! at the bottom of this module exist to verify these identities literally
//! on small volumes; every closed form above is tested against them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{Bc, Shape, Site};

/// Largest volume for which dense matrices may be built.
pub const DENSE_VOLUME_CAP: u64 = 10_000;

/// Normalisation `z = (1 - L^-d) / (L^2 - 1)` of the coupling weights.
pub fn coupling_z(d: u32, l: u32) -> f64 {
    let lf = l as f64;
    (1.0 - lf.powi(-(d as i32))) / (lf * lf - 1.0)
}

/// Spectral constant `q = (1 - L^-d) / (1 - L^-(d+2))`.
pub fn spectral_q(d: u32, l: u32) -> f64 {
    let lf = l as f64;
    (1.0 - lf.powi(-(d as i32))) / (1.0 - lf.powi(-(d as i32 + 2)))
}

/// Checks that the mass `a` keeps every `gamma_j`, `j = 1..N`, finite and
/// positive, i.e. `a > -L^(-2(N-1))`.
pub fn admissible_mass(shape: &Shape, a: f64) -> Result<()> {
    let floor = -shape.lpow(-2 * (shape.levels as i64 - 1));
    if !a.is_finite() || a <= floor {
        return Err(Error::domain(format!(
            "mass a = {a} outside admissible range (a > {floor})"
        )));
    }
    Ok(())
}

/// Per-scale covariance weight `gamma_j(a) = L^(2(j-1)) / (1 + a L^(2(j-1)))`
/// for `1 <= j <= N`.
pub fn gamma(shape: &Shape, j: u32, a: f64) -> Result<f64> {
    assert!(
        (1..=shape.levels).contains(&j),
        "scale {} outside 1..=N = {}",
        j,
        shape.levels
    );
    let l2 = shape.lpow(2 * (j as i64 - 1));
    let denom = 1.0 + a * l2;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::domain(format!(
            "gamma_{j}({a}) singular: 1 + a L^(2(j-1)) = {denom}"
        )));
    }
    Ok(l2 / denom)
}

/// Block-averaging kernel `Q_j(o, x)` for a site at coalescence scale `jxy`,
/// defined for `0 <= j <= N`.
pub fn q_kernel(shape: &Shape, j: u32, jxy: u32) -> f64 {
    assert!(j <= shape.levels && jxy <= shape.levels);
    if jxy <= j {
        shape.lpow(-(shape.d as i64) * j as i64)
    } else {
        0.0
    }
}

/// Spectral projector kernel `P_j(o, x) = Q_(j-1)(o, x) - Q_j(o, x)` for
/// `1 <= j <= N`.
pub fn p_kernel(shape: &Shape, j: u32, jxy: u32) -> f64 {
    assert!((1..=shape.levels).contains(&j));
    q_kernel(shape, j - 1, jxy) - q_kernel(shape, j, jxy)
}

/// Scale-`j` covariance `C_(a,j)(o, x) = gamma_j(a) P_j(o, x)`.
pub fn c_level(shape: &Shape, a: f64, j: u32, jxy: u32) -> Result<f64> {
    Ok(gamma(shape, j, a)? * p_kernel(shape, j, jxy))
}

/// Cumulative covariance `C_(a,<=N)(o, x) = sum_{j=1..N} C_(a,j)(o, x)`.
pub fn c_cum(shape: &Shape, a: f64, jxy: u32) -> Result<f64> {
    admissible_mass(shape, a)?;
    let mut sum = 0.0;
    // Only scales j >= jxy contribute (P_j vanishes below the coalescence
    // scale); summing from the top keeps the small terms last.
    for j in (jxy.max(1)..=shape.levels).rev() {
        sum += c_level(shape, a, j, jxy)?;
    }
    Ok(sum)
}

/// Effective zero-mode mass: `a` for periodic, `a + q L^(-2N)` for free
/// boundary conditions.
pub fn zero_mode_mass(shape: &Shape, a: f64) -> f64 {
    match shape.bc {
        Bc::Periodic => a,
        Bc::Free => a + spectral_q(shape.d, shape.l) * shape.lpow(-2 * shape.levels as i64),
    }
}

/// Zero-mode covariance `chat(o, x) = L^(-dN) / a_eff` (independent of `x`).
pub fn c_hat(shape: &Shape, a: f64) -> Result<f64> {
    let a_eff = zero_mode_mass(shape, a);
    if !(a_eff > 0.0) {
        return Err(Error::domain(format!(
            "zero-mode mass a_eff = {a_eff} <= 0 for a = {a} ({})",
            shape.bc
        )));
    }
    Ok(shape.lpow(-(shape.d as i64) * shape.levels as i64) / a_eff)
}

/// Finite-volume massive Green function
/// `G_a(o, x) = C_(a,<=N)(o, x) + chat(o, x)` at coalescence scale `jxy`.
pub fn green(shape: &Shape, a: f64, jxy: u32) -> Result<f64> {
    Ok(c_cum(shape, a, jxy)? + c_hat(shape, a)?)
}

/// [`green`] evaluated at a specific site.
pub fn green_site(shape: &Shape, a: f64, x: Site) -> Result<f64> {
    green(shape, a, shape.coalescence(Site::ORIGIN, x))
}

/// Sum over the whole lattice of a kernel that depends only on the
/// coalescence scale: `sum_x f(j(o, x)) = sum_j class_size(j) f(j)`.
pub fn class_weighted_sum(shape: &Shape, mut f: impl FnMut(u32) -> f64) -> f64 {
    (0..=shape.levels)
        .map(|j| shape.class_size(j) as f64 * f(j))
        .sum()
}

/// Gaussian susceptibility `sum_x G_a(o, x) = 1 / a_eff`.
///
/// The per-scale parts sum to zero over the lattice, so only the zero mode
/// survives; this is returned in closed form rather than by summation.
pub fn susceptibility(shape: &Shape, a: f64) -> Result<f64> {
    let a_eff = zero_mode_mass(shape, a);
    if !(a_eff > 0.0) {
        return Err(Error::domain(format!(
            "zero-mode mass a_eff = {a_eff} <= 0 for a = {a} ({})",
            shape.bc
        )));
    }
    Ok(1.0 / a_eff)
}

/// Massless infinite-volume Green function at coalescence scale `jxy`,
/// `C_(0,inf)(o, x) = sum_{j>=1} L^(2(j-1)) P_j(o, x)`, for `d > 2`.
///
/// Returns `(value, tail_bound)` where `value` is a partial sum truncated
/// once the exact geometric bound on the remainder drops below `tol`; the
/// realised bound is returned alongside.
pub fn green_infty(d: u32, l: u32, jxy: u32, tol: f64) -> Result<(f64, f64)> {
    if d <= 2 {
        return Err(Error::domain(format!(
            "massless infinite-volume Green function needs d > 2, got d = {d}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance must be positive, got {tol}")));
    }
    let lf = l as f64;
    let ratio = lf.powi(-(d as i32 - 2));
    // Terms for j > jxy are (1 - L^-d) L^(-(d-2)(j-1)); the remainder past
    // scale m is exactly (1 - L^-d) L^(-(d-2)m) / (1 - L^-(d-2)).
    let tail = |m: u32| {
        (1.0 - lf.powi(-(d as i32))) * lf.powi(-(((d - 2) * m) as i32)) / (1.0 - ratio)
    };
    let mut m = jxy.max(1);
    while tail(m) >= tol && m < 10_000 {
        m += 1;
    }
    let bound = tail(m);
    if bound >= tol {
        return Err(Error::invariant(format!(
            "tail bound {bound} did not reach tol = {tol} within 10^4 scales"
        )));
    }
    let mut sum = 0.0;
    for j in (jxy.max(1)..=m).rev() {
        // gamma_j(0) = L^(2(j-1)); the P_j kernel needs only d, L, not N.
        let p = if jxy <= j - 1 {
            lf.powi(-((d * (j - 1)) as i32)) - lf.powi(-((d * j) as i32))
        } else {
            -lf.powi(-((d * j) as i32))
        };
        sum += lf.powi(2 * (j as i32 - 1)) * p;
    }
    Ok((sum, bound))
}

/// Square-root metric on masses: `|sqrt|r| - sqrt|t||` when `r` and `t`
/// share a sign, `sqrt|r| + sqrt|t|` otherwise.
pub fn dsq(r: f64, t: f64) -> f64 {
    if r * t >= 0.0 {
        (r.abs().sqrt() - t.abs().sqrt()).abs()
    } else {
        r.abs().sqrt() + t.abs().sqrt()
    }
}

fn dense_guard(shape: &Shape) -> Result<usize> {
    let v = shape.volume();
    if v > DENSE_VOLUME_CAP {
        return Err(Error::config(format!(
            "dense builders capped at {DENSE_VOLUME_CAP} sites, shape has {v}"
        )));
    }
    Ok(v as usize)
}

/// Dense coupling matrix `J` for the shape's boundary condition.
///
/// The free matrix has entries `(1/z) L^(-(d+2) j(x,y))` off the diagonal
/// and `0` on it. The periodic matrix adds the constant `L^(-(d+2)N)` to
/// every entry (the weight of couplings wrapped beyond the box), which is
/// exactly what makes `q (id - J)` match the periodic spectral form.
pub fn coupling_matrix(shape: &Shape) -> Result<DMatrix<f64>> {
    let v = dense_guard(shape)?;
    let z = coupling_z(shape.d, shape.l);
    let dp2 = shape.d as i64 + 2;
    let wrap = match shape.bc {
        Bc::Free => 0.0,
        Bc::Periodic => shape.lpow(-dp2 * shape.levels as i64),
    };
    let mut m = DMatrix::zeros(v, v);
    for x in 0..v {
        for y in 0..v {
            let jxy = shape.coalescence(Site(x as u64), Site(y as u64));
            let free = if x == y {
                0.0
            } else {
                shape.lpow(-dp2 * jxy as i64) / z
            };
            m[(x, y)] = free + wrap;
        }
    }
    Ok(m)
}

/// Dense minus-Laplacian `q (id - J)` for the shape's boundary condition.
pub fn laplacian(shape: &Shape) -> Result<DMatrix<f64>> {
    let v = dense_guard(shape)?;
    let q = spectral_q(shape.d, shape.l);
    let mut m = coupling_matrix(shape)?;
    for x in 0..v {
        for y in 0..v {
            let delta = if x == y { 1.0 } else { 0.0 };
            m[(x, y)] = q * (delta - m[(x, y)]);
        }
    }
    Ok(m)
}

/// Dense block-averaging projector `Q_j`.
pub fn q_projector(shape: &Shape, j: u32) -> Result<DMatrix<f64>> {
    let v = dense_guard(shape)?;
    let mut m = DMatrix::zeros(v, v);
    for x in 0..v {
        for y in 0..v {
            let jxy = shape.coalescence(Site(x as u64), Site(y as u64));
            m[(x, y)] = q_kernel(shape, j, jxy);
        }
    }
    Ok(m)
}

/// Dense spectral projector `P_j = Q_(j-1) - Q_j`.
pub fn p_projector(shape: &Shape, j: u32) -> Result<DMatrix<f64>> {
    Ok(q_projector(shape, j - 1)? - q_projector(shape, j)?)
}

/// Dense massive Green function built from the closed-form kernels (the
/// per-scale sum plus the zero mode), for comparison against the matrix
/// inverse of `-Lap + a`.
pub fn green_matrix(shape: &Shape, a: f64) -> Result<DMatrix<f64>> {
    let v = dense_guard(shape)?;
    let mut m = DMatrix::zeros(v, v);
    for x in 0..v {
        for y in 0..v {
            let jxy = shape.coalescence(Site(x as u64), Site(y as u64));
            m[(x, y)] = green(shape, a, jxy)?;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn shape(d: u32, l: u32, n: u32, bc: Bc) -> Shape {
        Shape::new(d, l, n, bc).unwrap()
    }

    #[test]
    fn constants_match_definitions() {
        // d = 1, L = 2: z = (1/2)/3, q = (1/2)/(7/8).
        assert_abs_diff_eq!(coupling_z(1, 2), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_q(1, 2), 4.0 / 7.0, epsilon = 1e-15);
        // d = 4, L = 2: z = (15/16)/3, q = (15/16)/(63/64).
        assert_abs_diff_eq!(coupling_z(4, 2), 0.3125, epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_q(4, 2), 60.0 / 63.0, epsilon = 1e-15);
    }

    #[test]
    fn gamma_closed_values() {
        let s = shape(4, 2, 5, Bc::Periodic);
        assert_abs_diff_eq!(gamma(&s, 1, 0.25).unwrap(), 0.8, epsilon = 1e-15);
        for j in 1..=5 {
            assert_abs_diff_eq!(
                gamma(&s, j, 0.0).unwrap(),
                s.lpow(2 * (j as i64 - 1)),
                epsilon = 1e-12
            );
        }
        // Below the spectral floor the weight turns singular.
        assert!(gamma(&s, 5, -s.lpow(-8)).is_err());
        assert!(admissible_mass(&s, -s.lpow(-8)).is_err());
        assert!(admissible_mass(&s, -0.9 * s.lpow(-8)).is_ok());
    }

    #[test]
    fn kernel_sums_over_lattice() {
        let s = shape(3, 2, 4, Bc::Periodic);
        for j in 1..=4 {
            let qsum = class_weighted_sum(&s, |jxy| q_kernel(&s, j, jxy));
            let psum = class_weighted_sum(&s, |jxy| p_kernel(&s, j, jxy));
            assert_abs_diff_eq!(qsum, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(psum, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_site_matrices_by_hand() {
        // d = 1, L = 2, N = 1: small enough to check every entry on paper.
        let s = shape(1, 2, 1, Bc::Periodic);
        let j = coupling_matrix(&s).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(0, 1)], 0.875, epsilon = 1e-15);
        let lap = laplacian(&s).unwrap();
        assert_abs_diff_eq!(lap[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(lap[(0, 1)], -0.5, epsilon = 1e-15);

        let sf = shape(1, 2, 1, Bc::Free);
        let jf = coupling_matrix(&sf).unwrap();
        assert_abs_diff_eq!(jf[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(jf[(0, 1)], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn coupling_row_sums() {
        for (d, l, n) in [(1, 2, 3), (2, 2, 2), (2, 3, 2), (4, 2, 2)] {
            let sp = shape(d, l, n, Bc::Periodic);
            let sf = shape(d, l, n, Bc::Free);
            let jp = coupling_matrix(&sp).unwrap();
            let jf = coupling_matrix(&sf).unwrap();
            let rp: f64 = jp.row(0).iter().sum();
            let rf: f64 = jf.row(0).iter().sum();
            assert_abs_diff_eq!(rp, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rf, 1.0 - sp.lpow(-2 * n as i64), epsilon = 1e-12);
        }
    }

    #[test]
    fn projectors_are_orthogonal_and_complete() {
        let s = shape(2, 2, 3, Bc::Periodic);
        let v = s.volume() as usize;
        let mut acc = q_projector(&s, 3).unwrap();
        for j in 1..=3 {
            let p = p_projector(&s, j).unwrap();
            assert!(((&p * &p) - &p).abs().max() < 1e-12, "P_{j} not idempotent");
            for k in 1..=3 {
                if k != j {
                    let pk = p_projector(&s, k).unwrap();
                    assert!((&p * &pk).abs().max() < 1e-12, "P_{j} P_{k} != 0");
                }
            }
            acc += p;
        }
        assert!((acc - DMatrix::<f64>::identity(v, v)).abs().max() < 1e-12);
    }

    #[test]
    fn laplacian_matches_spectral_form() {
        for bc in [Bc::Free, Bc::Periodic] {
            let s = shape(2, 2, 2, bc);
            let v = s.volume() as usize;
            let mut spectral = DMatrix::<f64>::zeros(v, v);
            for j in 1..=2 {
                spectral += p_projector(&s, j).unwrap() * s.lpow(-2 * (j as i64 - 1));
            }
            if bc == Bc::Free {
                spectral +=
                    q_projector(&s, 2).unwrap() * spectral_q(2, 2) * s.lpow(-4);
            }
            let lap = laplacian(&s).unwrap();
            assert!(
                (lap - spectral).abs().max() < 1e-12,
                "q(id - J) != spectral form for {bc}"
            );
        }
    }

    #[test]
    fn resolvent_identity_small_shapes() {
        for (d, l, n) in [(1, 2, 3), (2, 2, 2), (3, 2, 1), (1, 3, 2)] {
            for bc in [Bc::Free, Bc::Periodic] {
                let s = shape(d, l, n, bc);
                for a in [0.5, 0.05, s.lpow(-2 * n as i64)] {
                    let v = s.volume() as usize;
                    let m = laplacian(&s).unwrap() + DMatrix::<f64>::identity(v, v) * a;
                    let inv = m.try_inverse().expect("resolvent invertible");
                    let from_kernels = green_matrix(&s, a).unwrap();
                    let err = (inv - from_kernels).abs().max();
                    assert!(
                        err < 1e-10,
                        "resolvent mismatch {err:.3e} for d={d} L={l} N={n} {bc} a={a}"
                    );
                }
            }
        }
    }

    #[test]
    fn susceptibility_closed_form() {
        let sp = shape(4, 2, 3, Bc::Periodic);
        let sf = shape(4, 2, 3, Bc::Free);
        let a = 0.01;
        // Direct lattice sum against the closed form.
        for s in [&sp, &sf] {
            let direct = class_weighted_sum(s, |jxy| green(s, a, jxy).unwrap());
            assert_abs_diff_eq!(
                direct,
                susceptibility(s, a).unwrap(),
                epsilon = 1e-9 * direct.abs()
            );
        }
        assert_abs_diff_eq!(
            susceptibility(&sp, a).unwrap(),
            1.0 / a,
            epsilon = 1e-12 / a
        );
    }

    #[test]
    fn free_green_allows_slightly_negative_mass() {
        let s = shape(4, 2, 3, Bc::Free);
        let q = spectral_q(4, 2);
        let a = -0.5 * q * s.lpow(-6);
        assert!(green(&s, a, 2).unwrap().is_finite());
        // At the free spectral floor the zero mode blows up.
        assert!(green(&s, -q * s.lpow(-6), 2).is_err());
    }

    #[test]
    fn green_infty_matches_geometric_closed_form() {
        for (d, l) in [(3u32, 2u32), (4, 2), (5, 2), (4, 3)] {
            let lf = l as f64;
            for jxy in 0..=6u32 {
                let (value, bound) = green_infty(d, l, jxy, 1e-14).unwrap();
                let head = (1.0 - lf.powi(-(d as i32)))
                    * lf.powi(-(((d - 2) * jxy) as i32))
                    / (1.0 - lf.powi(-(d as i32 - 2)));
                let exact = if jxy == 0 {
                    head
                } else {
                    head - lf.powi(-2) * lf.powi(-(((d - 2) * jxy) as i32))
                };
                assert!(bound < 1e-14);
                assert_abs_diff_eq!(value, exact, epsilon = 1e-13 + 1e-10 * exact.abs());
            }
        }
        // (d, L) = (4, 2): the closed form collapses to L^(-2 jxy).
        for jxy in 1..=8u32 {
            let (value, _) = green_infty(4, 2, jxy, 1e-14).unwrap();
            assert_abs_diff_eq!(value, 0.25f64.powi(jxy as i32), epsilon = 1e-12);
        }
        assert!(green_infty(2, 2, 0, 1e-10).is_err());
    }

    #[test]
    fn finite_volume_green_approaches_infinite_volume() {
        // |C_(0,<=N)(x) - C_(0,inf)(x)| = O(L^(-(d-2)N)) at fixed x.
        let d = 4;
        let l = 2;
        let jxy = 2;
        let (inf, _) = green_infty(d, l, jxy, 1e-14).unwrap();
        let mut prev = f64::INFINITY;
        for n in 3..=8 {
            let s = shape(d, l, n, Bc::Periodic);
            let gap = (c_cum(&s, 0.0, jxy).unwrap() - inf).abs();
            let scale = s.lpow(-2 * n as i64); // L^(-(d-2)N) with d-2 = 2
            assert!(gap < 10.0 * scale, "gap {gap:.3e} vs scale {scale:.3e}");
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn dsq_metric_cases() {
        assert_abs_diff_eq!(dsq(4.0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dsq(-4.0, -1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dsq(4.0, -1.0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dsq(0.0, 0.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mass_continuity_in_dsq_metric() {
        // |C_(a1,<=N)(x) - C_(a2,<=N)(x)| <= K dsq(a1, a2) / |x|^(d-3)
        // for d >= 4; probe the constant empirically on a modest shape.
        let s = shape(4, 2, 6, Bc::Periodic);
        let mut worst: f64 = 0.0;
        for jxy in 1..=6u32 {
            let xnorm = s.lpow(jxy as i64 - 1);
            for (a1, a2) in [(0.0, 1e-4), (1e-4, 4e-4), (0.0, -1e-4), (1e-3, 1e-2)] {
                let c1 = c_cum(&s, a1, jxy).unwrap();
                let c2 = c_cum(&s, a2, jxy).unwrap();
                let ratio = (c1 - c2).abs() * xnorm / dsq(a1, a2);
                worst = worst.max(ratio);
            }
        }
        assert!(worst < 5.0, "continuity constant blew up: {worst}");
    }

    #[test]
    fn dense_builders_reject_large_volumes() {
        let s = shape(4, 2, 4, Bc::Periodic); // 65536 sites
        assert!(coupling_matrix(&s).is_err());
        assert!(laplacian(&s).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn resolvent_identity_random(
            case in 0usize..4,
            bc_periodic in proptest::bool::ANY,
            a in 1e-3f64..0.5,
        ) {
            let (d, l, n) = [(1, 2, 2), (1, 3, 2), (2, 2, 2), (3, 2, 1)][case];
            let bc = if bc_periodic { Bc::Periodic } else { Bc::Free };
            let s = shape(d, l, n, bc);
            let v = s.volume() as usize;
            let m = laplacian(&s).unwrap() + DMatrix::<f64>::identity(v, v) * a;
            let inv = m.try_inverse().unwrap();
            let err = (inv - green_matrix(&s, a).unwrap()).abs().max();
            prop_assert!(err < 1e-9, "err = {err:.3e}");
        }

        #[test]
        fn gamma_monotone_in_mass(j in 1u32..6, a1 in 0.0f64..1.0, da in 1e-6f64..1.0) {
            let s = shape(4, 2, 6, Bc::Periodic);
            let g1 = gamma(&s, j, a1).unwrap();
            let g2 = gamma(&s, j, a1 + da).unwrap();
            prop_assert!(g2 < g1);
        }
    }
}
