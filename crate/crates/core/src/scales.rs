//! Critical scaling constants, windows, and finite-size predictions.
//!
//! For the `n`-component model at coupling `g` in dimension `d >= 4` this
//! module collects the closed-form scales that organise the critical
//! finite-size behaviour:
//!
//! * `B = (n+8)(1 - L^-d)` and the exponents `gamma_hat = (n+2)/(n+8)`,
//!   `theta_hat = 1/2 - gamma_hat`;
//! * the window scale `w_N` (width of the critical window in `nu`), the
//!   shift scale `v_N` (distance between the periodic and free effective
//!   critical points), the large-field scale `h_N`, and the Gaussian field
//!   scale `l_N = L^(-N(d-2)/2)`;
//! * the effective critical points: `nu_c` itself for periodic boundary
//!   conditions, `nu_c - q v_N (1 + c_free N^-gamma_hat)` for free ones
//!   (the correction constant only applies in `d = 4` and defaults to 0);
//! * leading-order renormalised masses for the covariance splitting inside
//!   the critical window (`s h_N^-2 L^-dN`, free boundary conditions
//!   subtracting `q L^-2N`) and in the Gaussian regime (`s L^-2N`
//!   likewise shifted);
//! * two-point and susceptibility predictions in both regimes.
//!
//! Amplitudes are resolved at leading order in `g` unless overridden:
//! `g_inf = g`, `A_4 = (B g / log L^2)^gamma_hat`, `A_d = 1` for `d > 4`,
//! and `nu_c = -(n+2) g C_(0,inf)(o)`.

use serde::{Deserialize, Serialize};

use crate::covariance;
use crate::error::{Error, Result};
use crate::lattice::{Bc, Shape};
use crate::profiles;

/// Model parameters plus optional amplitude overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleParams {
    /// Lattice geometry and boundary condition.
    pub shape: Shape,
    /// Number of spin components `n >= 1`.
    pub comps: u32,
    /// Quartic coupling `g > 0`.
    pub g: f64,
    /// Override for `g_inf` (defaults to `g`).
    pub g_inf: Option<f64>,
    /// Override for the amplitude `A_d` (defaults to the leading order).
    pub amp: Option<f64>,
    /// Free-boundary shift refinement constant `c_free` (`d = 4` only).
    pub c_free: f64,
    /// Override for the critical point `nu_c`.
    pub nu_c_override: Option<f64>,
}

/// Predicted decomposition of the two-point function at one site class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prediction {
    /// Decaying part (`|x|^-(d-2)`-like).
    pub decay: f64,
    /// Constant (plateau or zero-mode) part.
    pub plateau: f64,
    /// Sum of the two.
    pub total: f64,
}

impl ScaleParams {
    /// Validated constructor; requires `d >= 4`, `n >= 1`, `g > 0`.
    pub fn new(shape: Shape, comps: u32, g: f64) -> Result<Self> {
        if shape.d < 4 {
            return Err(Error::config(format!(
                "scaling formulas require d >= 4, got d = {}",
                shape.d
            )));
        }
        if comps == 0 {
            return Err(Error::config("component count n must be >= 1"));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::domain(format!("coupling g must be positive, got {g}")));
        }
        Ok(ScaleParams {
            shape,
            comps,
            g,
            g_inf: None,
            amp: None,
            c_free: 0.0,
            nu_c_override: None,
        })
    }

    /// `B = (n+8)(1 - L^-d)`.
    pub fn b_const(&self) -> f64 {
        (self.comps as f64 + 8.0) * (1.0 - self.shape.lpow(-(self.shape.d as i64)))
    }

    /// `gamma_hat = (n+2)/(n+8)`.
    pub fn gamma_hat(&self) -> f64 {
        (self.comps as f64 + 2.0) / (self.comps as f64 + 8.0)
    }

    /// `theta_hat = 1/2 - gamma_hat = (4-n)/(2(n+8))`.
    pub fn theta_hat(&self) -> f64 {
        0.5 - self.gamma_hat()
    }

    /// Effective `g_inf` (override or `g`).
    pub fn g_inf(&self) -> f64 {
        self.g_inf.unwrap_or(self.g)
    }

    /// Amplitude `A_d`: override, or `(B g / log L^2)^gamma_hat` in `d = 4`
    /// and `1` in `d > 4`.
    pub fn amp(&self) -> f64 {
        self.amp.unwrap_or_else(|| {
            if self.shape.d == 4 {
                let log_l2 = (self.shape.l as f64).powi(2).ln();
                (self.b_const() * self.g / log_l2).powf(self.gamma_hat())
            } else {
                1.0
            }
        })
    }

    /// Leading-order critical point `nu_c = -(n+2) g C_(0,inf)(o)`.
    pub fn nu_c(&self) -> f64 {
        self.nu_c_override.unwrap_or_else(|| {
            let (c0, _) = covariance::green_infty(self.shape.d, self.shape.l, 0, 1e-13)
                .expect("d >= 4 admits the massless kernel");
            -((self.comps + 2) as f64) * self.g * c0
        })
    }

    /// Window scale `w_N`.
    pub fn window_w(&self) -> f64 {
        let n = self.shape.levels as f64;
        if self.shape.d == 4 {
            let log_l2 = (self.shape.l as f64).powi(2).ln();
            self.amp() * log_l2.powf(self.gamma_hat()) * self.b_const().powf(-0.5)
                * n.powf(-self.theta_hat())
                * self.shape.lpow(-2 * self.shape.levels as i64)
        } else {
            self.amp()
                * self.g_inf().sqrt()
                * (self.shape.l as f64)
                    .powf(-(self.shape.levels as f64) * self.shape.d as f64 / 2.0)
        }
    }

    /// Shift scale `v_N` (separation of the two effective critical points).
    pub fn shift_v(&self) -> f64 {
        let n = self.shape.levels as f64;
        if self.shape.d == 4 {
            let log_l2 = (self.shape.l as f64).powi(2).ln();
            self.amp() * log_l2.powf(self.gamma_hat()) * n.powf(self.gamma_hat())
                * self.shape.lpow(-2 * self.shape.levels as i64)
        } else {
            self.amp() * self.shape.lpow(-2 * self.shape.levels as i64)
        }
    }

    /// Large-field scale `h_N`.
    pub fn large_field_h(&self) -> f64 {
        let n = self.shape.levels as f64;
        if self.shape.d == 4 {
            (self.b_const() * n).powf(0.25) * self.shape.lpow(-(self.shape.levels as i64))
        } else {
            self.g_inf().powf(-0.25)
                * (self.shape.l as f64)
                    .powf(-(self.shape.levels as f64) * self.shape.d as f64 / 4.0)
        }
    }

    /// Gaussian field scale `l_N = L^(-N(d-2)/2)`.
    pub fn gaussian_l(&self) -> f64 {
        (self.shape.l as f64)
            .powf(-(self.shape.levels as f64) * (self.shape.d as f64 - 2.0) / 2.0)
    }

    /// Effective critical point for the shape's boundary condition.
    pub fn nu_eff(&self) -> f64 {
        match self.shape.bc {
            Bc::Periodic => self.nu_c(),
            Bc::Free => {
                let q = covariance::spectral_q(self.shape.d, self.shape.l);
                let correction = if self.shape.d == 4 {
                    1.0 + self.c_free * (self.shape.levels as f64).powf(-self.gamma_hat())
                } else {
                    1.0
                };
                self.nu_c() - q * self.shift_v() * correction
            }
        }
    }

    /// Leading-order renormalised mass in the critical window:
    /// `a*_N(s) = s h_N^-2 L^-dN`, free boundary conditions subtracting
    /// `q L^-2N`.
    pub fn mass_window(&self, s: f64) -> f64 {
        let base = s * self.large_field_h().powi(-2)
            * self.shape.lpow(-(self.shape.d as i64) * self.shape.levels as i64);
        base + self.free_mass_shift()
    }

    /// Leading-order renormalised mass in the Gaussian regime:
    /// `a~*_N(s) = s l_N^-2 L^-dN = s L^-2N`, shifted likewise.
    pub fn mass_gaussian(&self, s: f64) -> f64 {
        let base = s * self.shape.lpow(-2 * self.shape.levels as i64);
        base + self.free_mass_shift()
    }

    fn free_mass_shift(&self) -> f64 {
        match self.shape.bc {
            Bc::Periodic => 0.0,
            Bc::Free => {
                -covariance::spectral_q(self.shape.d, self.shape.l)
                    * self.shape.lpow(-2 * self.shape.levels as i64)
            }
        }
    }

    /// Mass domain on which the renormalisation-group control holds:
    /// `(-L^(-2(N-1))/2, L^(-2N(1-1/sqrt(N))))` for `d = 4` and
    /// `(-L^(-2(N-1))/2, 2 L^(-3N/2))` for `d > 4`.
    pub fn critical_interval(&self) -> (f64, f64) {
        let n = self.shape.levels as f64;
        let lo = -0.5 * self.shape.lpow(-2 * (self.shape.levels as i64 - 1));
        let hi = if self.shape.d == 4 {
            (self.shape.l as f64).powf(-2.0 * n * (1.0 - n.powf(-0.5)))
        } else {
            2.0 * (self.shape.l as f64).powf(-1.5 * n)
        };
        (lo, hi)
    }

    /// Whether a mass lies in the controlled domain [`Self::critical_interval`].
    pub fn in_critical_interval(&self, a: f64) -> bool {
        let (lo, hi) = self.critical_interval();
        lo < a && a < hi
    }

    /// Crossover distance between decay- and plateau-dominated behaviour:
    /// `N^(-1/4) L^N` for `d = 4`, `L^(dN/(2(d-2)))` for `d > 4`.
    pub fn crossover_norm(&self) -> f64 {
        let n = self.shape.levels as f64;
        if self.shape.d == 4 {
            n.powf(-0.25) * (self.shape.l as f64).powf(n)
        } else {
            (self.shape.l as f64)
                .powf(self.shape.d as f64 * n / (2.0 * (self.shape.d as f64 - 2.0)))
        }
    }

    /// Two-point prediction in the critical window `nu = nu_eff + s w_N`:
    /// decaying part `C_(0,inf)(x)` plus plateau `f_n(s) h_N^2`, both at
    /// leading order.
    pub fn predict_plateau(&self, jxy: u32, s: f64) -> Result<Prediction> {
        let (decay, _) = covariance::green_infty(self.shape.d, self.shape.l, jxy, 1e-13)?;
        let plateau = profiles::f_profile(self.comps, s)? * self.large_field_h().powi(2);
        Ok(Prediction { decay, plateau, total: decay + plateau })
    }

    /// Two-point prediction in the Gaussian regime `nu = nu_eff + s v_N`,
    /// `s > 0`: the free-field Green function at the renormalised mass,
    /// split into its per-scale and zero-mode parts.
    pub fn predict_gaussian(&self, jxy: u32, s: f64) -> Result<Prediction> {
        if !(s > 0.0) {
            return Err(Error::domain(format!(
                "Gaussian regime needs s > 0, got s = {s}"
            )));
        }
        let a = self.mass_gaussian(s);
        let decay = covariance::c_cum(&self.shape, a, jxy)?;
        let plateau = covariance::c_hat(&self.shape, a)?;
        Ok(Prediction { decay, plateau, total: decay + plateau })
    }

    /// Susceptibility prediction in the critical window:
    /// `chi ~ L^dN h_N^2 f_n(s)`.
    pub fn chi_plateau(&self, s: f64) -> Result<f64> {
        Ok(self.shape.lpow((self.shape.d * self.shape.levels) as i64)
            * self.large_field_h().powi(2)
            * profiles::f_profile(self.comps, s)?)
    }

    /// Susceptibility prediction in the Gaussian regime: `s^-1 L^2N`.
    pub fn chi_gaussian(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain(format!(
                "Gaussian regime needs s > 0, got s = {s}"
            )));
        }
        Ok(self.shape.lpow(2 * self.shape.levels as i64) / s)
    }
}
