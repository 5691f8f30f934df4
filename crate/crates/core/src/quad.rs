//! One-dimensional adaptive quadrature and Gauss-Hermite rules.
//!
//! The adaptive integrator is a globally adaptive Gauss-Kronrod 7/15 scheme
//! (the classic QUADPACK pairing): each interval is scored by |K15 - G7|,
//! and the worst interval is bisected until the summed error estimate meets
//! the requested tolerance. Callers integrating peaked functions should
//! pass breakpoints bracketing the peak so the first pass already sees it.

use crate::error::{Error, Result};

/// Kronrod-15 nodes on [0, 1] half-interval (symmetric about 0).
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_27,
    0.0,
];

/// Kronrod-15 weights matching [`XK`].
const WK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss-7 weights; the Gauss nodes are the odd-indexed entries of [`XK`].
const WG: [f64; 4] = [
    0.129_484_966_168_869_93,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    /// Estimated integral.
    pub value: f64,
    /// Error estimate (sum of per-interval |K15 - G7| based scores).
    pub abs_error: f64,
    /// Number of integrand evaluations performed.
    pub evals: usize,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut kron = 0.0;
    let mut gauss = 0.0;
    for i in 0..8 {
        let (fp, fm) = if i == 7 {
            let v = f(c);
            (v, 0.0) // centre node counted once
        } else {
            (f(c + h * XK[i]), f(c - h * XK[i]))
        };
        kron += WK[i] * (fp + fm);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (fp + fm);
        } else if i == 7 {
            gauss += WG[3] * fp;
        }
    }
    // The centre node belongs to both rules; the loop above added it to the
    // Kronrod sum once and to the Gauss sum once, as required.
    let kron = kron * h;
    let gauss = gauss * h;
    let err = (200.0 * (kron - gauss).abs()).powf(1.5).min((kron - gauss).abs());
    (kron, err)
}

/// Integrates `f` over the union of `[points[i], points[i+1]]`, refining
/// until `abs_error <= max(abs_tol, rel_tol * |value|)` or the interval
/// budget is exhausted (which is reported as an invariant error).
pub fn integrate_segmented(
    mut f: impl FnMut(f64) -> f64,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::config("need at least two breakpoints"));
    }
    if points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("breakpoints must be strictly increasing"));
    }
    if !(rel_tol > 0.0) && !(abs_tol > 0.0) {
        return Err(Error::config("at least one tolerance must be positive"));
    }
    // (error, lo, hi, value); a simple vector as priority queue - interval
    // counts stay small for smooth integrands.
    let mut intervals: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evals = 0usize;
    for w in points.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        intervals.push((e, w[0], w[1], v));
    }
    const MAX_INTERVALS: usize = 4096;
    loop {
        let value: f64 = intervals.iter().map(|t| t.3).sum();
        let error: f64 = intervals.iter().map(|t| t.0).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(QuadResult { value, abs_error: error, evals });
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::invariant(format!(
                "quadrature failed to converge: {} intervals, error {error:.3e} \
                 vs value {value:.3e}",
                intervals.len()
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, _)| i)
            .unwrap();
        let (_, lo, hi, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            return Err(Error::invariant(
                "quadrature interval collapsed below machine precision",
            ));
        }
        for (a, b) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(&mut f, a, b);
            evals += 15;
            intervals.push((e, a, b, v));
        }
    }
}

/// Convenience wrapper for a single interval.
pub fn integrate(
    f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    integrate_segmented(f, &[lo, hi], rel_tol, abs_tol)
}

/// Gauss-Hermite rule for the standard normal weight: returns `(nodes,
/// weights)` such that `sum_i w_i f(x_i)` approximates `E[f(Z)]`,
/// `Z ~ N(0,1)`, exactly for polynomials of degree `< 2n`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 200 {
        return Err(Error::config(format!("gauss_hermite size {n} out of range 1..=200")));
    }
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
    // polynomials: zero diagonal, off-diagonal sqrt(k).
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}
