//! Exact block-spin renormalisation of the one-component model.
//!
//! The partition function with two marked sites `o` and `x` is carried as
//! four components `(Z, Z_o, Z_x, Z_ox)` — coefficients of the nilpotent
//! source pair — on a grid over the block-constant field. One step
//! integrates the scale-`(j+1)` fluctuation, which is an exchangeable
//! zero-sum Gaussian vector over the `L^d` sub-blocks:
//!
//! * bulk: `Z'(phi) = E prod_b Z(phi + zeta_b)`;
//! * below the pair's coalescence scale the marked-site coefficients ride
//!   along as `phi * Z(phi)` exactly, because the fluctuations sum to zero
//!   and the bulk product is exchangeable — so they need no storage;
//! * at the coalescence scale the joint component is born from two
//!   distinct sub-blocks, and above it it evolves inside one sub-block.
//!
//! The joint component is stored as the ratio `R = Z_ox / Z` (smooth,
//! even, and invariant under renormalisation), one channel per requested
//! coalescence class, so a single flow prices every distance class at
//! once. After the last step a one-dimensional integral over the constant
//! mode — Gaussian weight with variance `1/(V a_eff)` — produces the
//! two-point function `G = int R Z w / int Z w`, the susceptibility
//! `chi = V <y^2>`, and average-field moments.
//!
//! The fluctuation integral is Monte Carlo with common random numbers:
//! the same draws are reused for every grid point, every channel, and
//! every tuning iteration, so differences across parameters are smooth
//! and bisection on the tuned mass is reliable. Draws come from a
//! counter-based generator keyed by (seed, replica, scale), making
//! results bit-identical for any thread count.

use serde::{Deserialize, Serialize};

use crate::covariance;
use crate::error::{Error, Result};
use crate::lattice::{Bc, Shape};
use crate::quad;
use crate::rng;
use crate::scales::ScaleParams;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

/// How the fluctuation expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Monte Carlo with common random numbers across grid points.
    MonteCarlo { samples: u32, seed: u64 },
    /// Tensor Gauss-Hermite quadrature over all sub-block draws. Only
    /// feasible for very small node counts; exact for Gaussian flows.
    TensorQuad { nodes: u32 },
}

/// Per-step normalization of the bulk component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenormPolicy {
    /// Divide so the bulk equals 1 at the grid centre.
    CenterOne,
    /// Divide so the bulk has maximum 1.
    SupOne,
}

/// Placement of the two marked sub-blocks at the coalescence step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairBirth {
    /// Average over all ordered pairs of distinct sub-blocks. Because the
    /// fluctuation vector is exchangeable this has the same expectation
    /// as any fixed placement, with lower variance, and it reduces to a
    /// closed form per sample.
    Symmetrized,
    /// Two fixed distinct sub-block indices.
    Fixed(usize, usize),
}

/// Numerical parameters of the functional recursion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RgConfig {
    /// Grid points per scale (odd, at least 33).
    pub grid_points: usize,
    /// Grid half-width in predicted standard deviations of the remaining
    /// field (at least 6).
    pub width_sigmas: f64,
    /// Fluctuation sampler.
    pub sampler: Sampler,
    /// Use each draw with both signs (exact parity on finite samples,
    /// lower variance). Monte Carlo only.
    pub antithetic: bool,
    /// Per-step normalization policy.
    pub renorm: RenormPolicy,
    /// Independent repetitions used by the drivers for error bars.
    pub replicas: u32,
    /// Sub-block placement at the coalescence step.
    pub birth: PairBirth,
    /// Sub-block index that carries a joint component above coalescence.
    pub evolve_block: usize,
}

impl RgConfig {
    /// Monte Carlo configuration with the documented defaults.
    pub fn mc(samples: u32, seed: u64) -> Self {
        RgConfig {
            grid_points: 161,
            width_sigmas: 8.0,
            sampler: Sampler::MonteCarlo { samples, seed },
            antithetic: true,
            renorm: RenormPolicy::CenterOne,
            replicas: 4,
            birth: PairBirth::Symmetrized,
            evolve_block: 0,
        }
    }

    /// Check the configuration against a block arity `m = L^d`.
    pub fn validate(&self, arity: usize) -> Result<()> {
        if self.grid_points < 33 || self.grid_points % 2 == 0 {
            return Err(Error::config(format!(
                "grid points {} must be odd and at least 33",
                self.grid_points
            )));
        }
        if !(self.width_sigmas >= 6.0 && self.width_sigmas.is_finite()) {
            return Err(Error::config(format!(
                "grid half-width {} standard deviations is below 6",
                self.width_sigmas
            )));
        }
        match self.sampler {
            Sampler::MonteCarlo { samples, .. } => {
                if samples < 10_000 {
                    return Err(Error::config(format!(
                        "Monte Carlo sample count {samples} is below 10000"
                    )));
                }
            }
            Sampler::TensorQuad { nodes } => {
                if nodes == 0 {
                    return Err(Error::config("quadrature needs at least one node"));
                }
                let total = (nodes as u128).checked_pow(arity as u32);
                if !matches!(total, Some(t) if t <= 1 << 20) {
                    return Err(Error::config(format!(
                        "tensor quadrature with {nodes} nodes over {arity} sub-blocks \
                         exceeds the evaluation cap"
                    )));
                }
            }
        }
        if self.replicas == 0 {
            return Err(Error::config("at least one replica is required"));
        }
        if self.evolve_block >= arity {
            return Err(Error::config(format!(
                "evolve sub-block {} out of range for arity {arity}",
                self.evolve_block
            )));
        }
        if let PairBirth::Fixed(b1, b2) = self.birth {
            if b1 == b2 || b1 >= arity || b2 >= arity {
                return Err(Error::config(format!(
                    "coalescence sub-blocks ({b1}, {b2}) must be distinct and below {arity}"
                )));
            }
        }
        Ok(())
    }
}

/// Model the recursion acts on. `nu` is the full quadratic coefficient of
/// the model; the covariance carries `mass` of it, so the local potential
/// keeps `(g/4) phi^4 + ((nu - mass)/2) phi^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: Shape,
    /// Number of spin components (this grid recursion supports 1).
    pub comps: u32,
    /// Quartic coupling, nonnegative.
    pub g: f64,
    /// Total quadratic coefficient of the model.
    pub nu: f64,
    /// Part of the quadratic coefficient carried by the covariance.
    pub mass: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.comps != 1 {
            return Err(Error::config(format!(
                "grid recursion supports one component, got {}",
                self.comps
            )));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::config(format!("coupling {} must be >= 0", self.g)));
        }
        if !self.nu.is_finite() {
            return Err(Error::config("quadratic coefficient must be finite"));
        }
        covariance::admissible_mass(&self.shape, self.mass)
    }

    /// Quadratic coefficient of the local potential.
    pub fn potential_nu(&self) -> f64 {
        self.nu - self.mass
    }
}

// ---------------------------------------------------------------------
// Uniform grid with interpolation
// ---------------------------------------------------------------------

/// Uniform one-dimensional grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid {
    /// Symmetric grid on `[-half, half]` with an odd number of points, so
    /// zero is a node.
    pub fn symmetric(half: f64, len: usize) -> Result<Self> {
        if !(half > 0.0 && half.is_finite()) {
            return Err(Error::domain(format!("grid half-width {half} not positive")));
        }
        if len < 5 || len % 2 == 0 {
            return Err(Error::config(format!(
                "grid length {len} must be odd and at least 5"
            )));
        }
        Ok(Grid { min: -half, step: 2.0 * half / (len - 1) as f64, len })
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + self.step * i as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    pub fn center(&self) -> usize {
        self.len / 2
    }

    pub fn max(&self) -> f64 {
        self.value(self.len - 1)
    }

    /// Position of `x` in units of the step from the first node.
    #[inline]
    pub fn pos(&self, x: f64) -> f64 {
        (x - self.min) / self.step
    }

    /// Four-point cubic interpolation through the nodes; outside the grid
    /// the edge polynomial continues (polynomial extrapolation).
    #[inline]
    pub fn cubic(&self, data: &[f64], x: f64) -> f64 {
        let p = self.pos(x);
        let k = (p.floor() as isize).clamp(1, self.len as isize - 3) as usize;
        let u = p - k as f64;
        let wm = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let w0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let w1 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let w2 = (u + 1.0) * u * (u - 1.0) / 6.0;
        wm * data[k - 1] + w0 * data[k] + w1 * data[k + 1] + w2 * data[k + 2]
    }

    /// Linear interpolation; outside the grid the edge segment continues.
    #[inline]
    pub fn linear(&self, data: &[f64], x: f64) -> f64 {
        let p = self.pos(x);
        let k = (p.floor() as isize).clamp(0, self.len as isize - 2) as usize;
        let u = p - k as f64;
        (1.0 - u) * data[k] + u * data[k + 1]
    }
}

// ---------------------------------------------------------------------
// Fluctuation law and draws
// ---------------------------------------------------------------------

/// Zero-sum Gaussian fluctuation over the sub-blocks of one block at a
/// given scale: `zeta_b = sigma (eta_b - mean eta)` with independent
/// standard normals `eta_b`, so that
/// `Cov(zeta_b, zeta_c) = sigma^2 (delta_bc - 1/m)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FluctuationLaw {
    /// Scale being integrated (1-based).
    pub scale: u32,
    /// Covariance mass.
    pub mass: f64,
    /// Per-draw scale `sigma = sqrt(gamma_scale(mass)) L^(-d(scale-1)/2)`.
    pub sigma: f64,
    /// Sub-blocks per block, `m = L^d`.
    pub arity: usize,
}

impl FluctuationLaw {
    pub fn new(shape: &Shape, mass: f64, scale: u32) -> Result<Self> {
        if scale == 0 || scale > shape.levels {
            return Err(Error::domain(format!(
                "fluctuation scale {scale} outside 1..={}",
                shape.levels
            )));
        }
        let gamma = covariance::gamma(shape, scale, mass)?;
        let sigma = gamma.sqrt()
            * (shape.l as f64).powf(-(shape.d as f64) * (scale as f64 - 1.0) / 2.0);
        Ok(FluctuationLaw { scale, mass, sigma, arity: shape.block_arity() as usize })
    }

    /// Marginal variance of one sub-block value.
    pub fn marginal_variance(&self) -> f64 {
        self.sigma * self.sigma * (1.0 - 1.0 / self.arity as f64)
    }

    /// Covariance of two distinct sub-block values.
    pub fn cross_covariance(&self) -> f64 {
        -self.sigma * self.sigma / self.arity as f64
    }
}

/// Draw one fluctuation vector (length `arity`); its entries sum to zero
/// by construction.
pub fn sample_fluctuation(law: &FluctuationLaw, stream: &mut rng::Stream) -> Vec<f64> {
    let m = law.arity;
    let mut eta: Vec<f64> = (0..m).map(|_| stream.next_normal()).collect();
    let mean = eta.iter().sum::<f64>() / m as f64;
    for e in eta.iter_mut() {
        *e = law.sigma * (*e - mean);
    }
    eta
}

/// Precomputed fluctuation draws for one scale: `count` vectors of length
/// `arity`, each with a weight. Monte Carlo weights are uniform; tensor
/// quadrature carries the product Gauss-Hermite weights.
#[derive(Debug, Clone)]
pub struct FluctDraws {
    pub arity: usize,
    pub count: usize,
    /// Row-major `count x arity` fluctuation values.
    pub zeta: Vec<f64>,
    /// Per-draw weights, summing to 1.
    pub weight: Vec<f64>,
}

impl FluctDraws {
    /// Monte Carlo draws keyed by (seed, replica, scale): independent of
    /// scheduling and thread count.
    pub fn monte_carlo(law: &FluctuationLaw, samples: u32, seed: u64, replica: u64) -> Self {
        let m = law.arity;
        let key = rng::stream_key(&[seed, replica, law.scale as u64]);
        let mut zeta = Vec::with_capacity(samples as usize * m);
        for t in 0..samples as u64 {
            let base = t * m as u64;
            let mut row: Vec<f64> = (0..m as u64)
                .map(|b| rng::normal_pair_at(key, base + b).0)
                .collect();
            let mean = row.iter().sum::<f64>() / m as f64;
            for e in row.iter_mut() {
                *e = law.sigma * (*e - mean);
            }
            zeta.extend_from_slice(&row);
        }
        let w = 1.0 / samples as f64;
        FluctDraws {
            arity: m,
            count: samples as usize,
            zeta,
            weight: vec![w; samples as usize],
        }
    }

    /// Full tensor Gauss-Hermite rule over the independent normals, then
    /// centered. Deterministic; integrates Gaussian flows exactly because
    /// the centred sum collapses their draw dependence.
    pub fn tensor_quad(law: &FluctuationLaw, nodes: u32) -> Result<Self> {
        let m = law.arity;
        let total = (nodes as u128)
            .checked_pow(m as u32)
            .filter(|&t| t <= 1 << 20)
            .ok_or_else(|| {
                Error::config(format!(
                    "tensor quadrature with {nodes} nodes over {m} sub-blocks \
                     exceeds the evaluation cap"
                ))
            })? as usize;
        let (points, weights) = quad::gauss_hermite(nodes as usize)?;
        let mut zeta = Vec::with_capacity(total * m);
        let mut weight = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        for _ in 0..total {
            let mut w = 1.0;
            let mut row: Vec<f64> = idx
                .iter()
                .map(|&k| {
                    w *= weights[k];
                    points[k]
                })
                .collect();
            let mean = row.iter().sum::<f64>() / m as f64;
            for e in row.iter_mut() {
                *e = law.sigma * (*e - mean);
            }
            zeta.extend_from_slice(&row);
            weight.push(w);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes as usize {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(FluctDraws { arity: m, count: total, zeta, weight })
    }

    /// Build draws for a scale per the configured sampler.
    pub fn for_scale(
        law: &FluctuationLaw,
        cfg: &RgConfig,
        replica: u64,
    ) -> Result<Self> {
        match cfg.sampler {
            Sampler::MonteCarlo { samples, seed } => {
                Ok(FluctDraws::monte_carlo(law, samples, seed, replica))
            }
            Sampler::TensorQuad { nodes } => FluctDraws::tensor_quad(law, nodes),
        }
    }

    #[inline]
    fn row(&self, t: usize) -> &[f64] {
        &self.zeta[t * self.arity..(t + 1) * self.arity]
    }
}

// ---------------------------------------------------------------------
// Effective partition function on a grid
// ---------------------------------------------------------------------

/// What a channel tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Joint marked-pair component for sites with the given coalescence
    /// scale (0 means both marks on the same site).
    Pair { coalescence: u32 },
    /// Single-mark component, evolved explicitly as a diagnostic. Its
    /// ratio to the bulk should remain the identity within sampling
    /// noise, which is exactly what the zero-sum fluctuation predicts.
    Solo,
}

/// One observable channel: a ratio to the bulk on the grid, present once
/// the channel has been born.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Channel {
    pub spec: ChannelSpec,
    pub ratio: Option<Vec<f64>>,
}

impl Channel {
    fn birth_scale(&self) -> u32 {
        match self.spec {
            ChannelSpec::Pair { coalescence } => coalescence,
            ChannelSpec::Solo => 0,
        }
    }
}

/// Grid-sampled effective partition function at one scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveZ {
    pub scale: u32,
    pub grid: Grid,
    /// Log of the bulk component on the grid, normalized per policy.
    pub log_bulk: Vec<f64>,
    pub channels: Vec<Channel>,
    /// Accumulated log of everything divided out of the bulk.
    pub log_norm: f64,
    pub params: ModelParams,
}

impl EffectiveZ {
    /// Bulk component values `exp(log_bulk)`.
    pub fn bulk(&self) -> Vec<f64> {
        self.log_bulk.iter().map(|&v| v.exp()).collect()
    }

    /// Ratio of a pair channel to the bulk, if born.
    pub fn pair_ratio(&self, coalescence: u32) -> Option<&[f64]> {
        self.channels.iter().find_map(|c| match c.spec {
            ChannelSpec::Pair { coalescence: j } if j == coalescence => {
                c.ratio.as_deref()
            }
            _ => None,
        })
    }

    /// Largest deviation of a solo channel's ratio from the identity map,
    /// over the central region where the bulk carries the stated fraction
    /// of its sup (the far tail has no statistical weight).
    pub fn solo_deviation(&self, support_fraction: f64) -> Option<f64> {
        let ratio = self.channels.iter().find_map(|c| match c.spec {
            ChannelSpec::Solo => c.ratio.as_deref(),
            _ => None,
        })?;
        let sup = self
            .log_bulk
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let cut = sup + support_fraction.ln();
        let mut dev = 0f64;
        for i in 0..self.grid.len {
            if self.log_bulk[i] >= cut {
                dev = dev.max((ratio[i] - self.grid.value(i)).abs());
            }
        }
        Some(dev)
    }
}

/// Initial per-site partition function on the given grid: bulk
/// `exp(-(g/4) phi^4 - (pot/2) phi^2)` with `pot` the potential part of
/// the quadratic coefficient; a same-site pair channel starts as the
/// ratio `phi^2`, a solo channel as `phi`, and channels with positive
/// coalescence scale are born later.
pub fn init_z0(params: &ModelParams, specs: &[ChannelSpec], grid: Grid) -> Result<EffectiveZ> {
    params.validate()?;
    let pot = params.potential_nu();
    let mut log_bulk = Vec::with_capacity(grid.len);
    for i in 0..grid.len {
        let phi = grid.value(i);
        let phi2 = phi * phi;
        log_bulk.push(-(params.g / 4.0) * phi2 * phi2 - 0.5 * pot * phi2);
    }
    let mut channels = Vec::with_capacity(specs.len());
    for spec in specs {
        let ratio = match spec {
            ChannelSpec::Pair { coalescence: 0 } => {
                Some((0..grid.len).map(|i| grid.value(i).powi(2)).collect())
            }
            ChannelSpec::Pair { coalescence } => {
                if *coalescence > params.shape.levels {
                    return Err(Error::config(format!(
                        "coalescence scale {coalescence} beyond depth {}",
                        params.shape.levels
                    )));
                }
                None
            }
            ChannelSpec::Solo => Some((0..grid.len).map(|i| grid.value(i)).collect()),
        };
        channels.push(Channel { spec: *spec, ratio });
    }
    let mut z = EffectiveZ {
        scale: 0,
        grid,
        log_bulk,
        channels,
        log_norm: 0.0,
        params: params.clone(),
    };
    renormalize(&mut z)?;
    Ok(z)
}

fn renormalize(z: &mut EffectiveZ) -> Result<()> {
    // The initial state is normalized at the grid centre regardless of
    // the per-step policy; it only seeds the bookkeeping.
    let sub = z.log_bulk[z.grid.center()];
    apply_renorm(z, sub)
}

fn apply_renorm(z: &mut EffectiveZ, sub: f64) -> Result<()> {
    if !sub.is_finite() {
        return Err(Error::invariant(format!(
            "normalization at scale {} is not finite",
            z.scale
        )));
    }
    for v in z.log_bulk.iter_mut() {
        *v -= sub;
    }
    z.log_norm += sub;
    Ok(())
}

// ---------------------------------------------------------------------
// Grid width schedule
// ---------------------------------------------------------------------

/// Width (in field units, one standard-deviation equivalent) of the
/// constant mode after all scales are integrated: the smaller of the
/// Gaussian width from the total quadratic coefficient and the quartic
/// width from the accumulated `|Lambda| g y^4 / 4` well. `None` when
/// neither tames the mode — the flow itself is still well defined, only
/// its constant-mode integral is not.
fn zero_mode_width(params: &ModelParams) -> Option<f64> {
    let shape = &params.shape;
    let vol = shape.lpow((shape.d * shape.levels) as i64);
    let a_eff = covariance::zero_mode_mass(shape, params.mass);
    let curvature = a_eff + params.potential_nu();
    let gauss = if curvature > 0.0 {
        (1.0 / (vol * curvature)).sqrt()
    } else {
        f64::INFINITY
    };
    let quartic = if params.g > 0.0 {
        (4.0 / (params.g * vol)).powf(0.25)
    } else {
        f64::INFINITY
    };
    let width = gauss.min(quartic);
    width.is_finite().then_some(width)
}

/// Grid half-widths for scales `0..=N`: the configured number of standard
/// deviations of the not-yet-integrated field (per-scale fluctuation
/// variances at the covariance mass) plus the constant-mode width. When
/// the constant mode is not normalizable the total fluctuation scale
/// stands in for it, so non-integrable flows can still be run and probed.
pub fn width_schedule(params: &ModelParams, cfg: &RgConfig) -> Result<Vec<f64>> {
    let shape = &params.shape;
    let n = shape.levels;
    let mut diag = Vec::with_capacity(n as usize);
    for j in 1..=n {
        diag.push(covariance::c_level(shape, params.mass, j, 0)?);
    }
    let total: f64 = diag.iter().sum();
    let zero = zero_mode_width(params).unwrap_or(total.sqrt().max(1.0));
    let mut widths = Vec::with_capacity(n as usize + 1);
    for j in 0..=n {
        let tail: f64 = diag[j as usize..].iter().sum();
        widths.push(cfg.width_sigmas * (tail.max(0.0).sqrt() + zero));
    }
    Ok(widths)
}

// ---------------------------------------------------------------------
// One renormalisation step
// ---------------------------------------------------------------------

struct StepAccum {
    w: Vec<f64>,
    channels: Vec<Vec<f64>>,
}

impl StepAccum {
    fn zeros(points: usize, channels: usize) -> Self {
        StepAccum {
            w: vec![0.0; points],
            channels: vec![vec![0.0; points]; channels],
        }
    }

    fn add(&mut self, other: &StepAccum) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (ca, cb) in self.channels.iter_mut().zip(&other.channels) {
            for (a, b) in ca.iter_mut().zip(cb) {
                *a += b;
            }
        }
    }
}

enum ChannelTask<'a> {
    /// Already born: evolve its ratio inside the designated sub-block.
    Evolve(&'a [f64]),
    /// Born at this step from two distinct sub-blocks (closed-form
    /// pair average when symmetrized).
    Birth,
    /// Not yet born; carries nothing.
    Dormant,
}

/// Integrate one fluctuation scale: `Z'(phi) = E prod_b Z(phi + zeta_b)`
/// on `new_grid`, with channel ratios updated per their state.
pub fn rg_step(
    z: &EffectiveZ,
    law: &FluctuationLaw,
    draws: &FluctDraws,
    cfg: &RgConfig,
    new_grid: Grid,
) -> Result<EffectiveZ> {
    if law.scale != z.scale + 1 {
        return Err(Error::invariant(format!(
            "fluctuation scale {} does not follow state scale {}",
            law.scale, z.scale
        )));
    }
    if law.arity != draws.arity {
        return Err(Error::invariant("draw arity does not match the law"));
    }
    cfg.validate(law.arity)?;
    let tasks: Vec<ChannelTask> = z
        .channels
        .iter()
        .map(|c| match (&c.ratio, c.birth_scale()) {
            (Some(r), _) => ChannelTask::Evolve(r),
            (None, birth) if birth == law.scale => ChannelTask::Birth,
            (None, _) => ChannelTask::Dormant,
        })
        .collect();

    let points = new_grid.len;
    let phi: Vec<f64> = new_grid.values();
    // Per-point recentering of the log-weight so the exponentials stay in
    // range: the zero-fluctuation value of the product.
    let m = law.arity as f64;
    let center: Vec<f64> = phi.iter().map(|&p| m * z.grid.cubic(&z.log_bulk, p)).collect();

    let signs: &[f64] = if cfg.antithetic && matches!(cfg.sampler, Sampler::MonteCarlo { .. })
    {
        &[1.0, -1.0]
    } else {
        &[1.0]
    };

    let chunk = 256usize;
    let n_chunks = draws.count.div_ceil(chunk);
    let process = |c: usize| -> StepAccum {
        let mut acc = StepAccum::zeros(points, tasks.len());
        let mut s_log = vec![0.0f64; points];
        let mut r_buf = vec![0.0f64; points];
        let lo = c * chunk;
        let hi = ((c + 1) * chunk).min(draws.count);
        for t in lo..hi {
            let row = draws.row(t);
            let base_w = draws.weight[t] / signs.len() as f64;
            for &sign in signs {
                s_log.iter_mut().for_each(|v| *v = 0.0);
                let mut zeta_sq = 0.0;
                for &zb in row {
                    let s = sign * zb;
                    zeta_sq += s * s;
                    for (i, acc_v) in s_log.iter_mut().enumerate() {
                        *acc_v += z.grid.cubic(&z.log_bulk, phi[i] + s);
                    }
                }
                // Weight per grid point, recentred and clamped against
                // overflow; underflow to zero is harmless.
                for i in 0..points {
                    s_log[i] = ((s_log[i] - center[i]).min(700.0)).exp() * base_w;
                    acc.w[i] += s_log[i];
                }
                for (task, out) in tasks.iter().zip(acc.channels.iter_mut()) {
                    match task {
                        ChannelTask::Evolve(ratio) => {
                            let s = sign * row[cfg.evolve_block];
                            for i in 0..points {
                                r_buf[i] = z.grid.linear(ratio, phi[i] + s);
                            }
                            for i in 0..points {
                                out[i] += r_buf[i] * s_log[i];
                            }
                        }
                        ChannelTask::Birth => match cfg.birth {
                            PairBirth::Symmetrized => {
                                // Average of (phi + zeta_b1)(phi + zeta_b2)
                                // over ordered distinct pairs; the zero sum
                                // collapses it to phi^2 - sum zeta^2/(m(m-1)).
                                let c_t = zeta_sq / (m * (m - 1.0));
                                for i in 0..points {
                                    out[i] += (phi[i] * phi[i] - c_t) * s_log[i];
                                }
                            }
                            PairBirth::Fixed(b1, b2) => {
                                let s1 = sign * row[b1];
                                let s2 = sign * row[b2];
                                for i in 0..points {
                                    out[i] += (phi[i] + s1) * (phi[i] + s2) * s_log[i];
                                }
                            }
                        },
                        ChannelTask::Dormant => {}
                    }
                }
            }
        }
        acc
    };

    // Chunks are combined in index order, so the result is bit-identical
    // for any thread count.
    let partials: Vec<StepAccum> = {
        #[cfg(feature = "parallel")]
        {
            (0..n_chunks).into_par_iter().map(process).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_chunks).map(process).collect()
        }
    };
    let mut acc = StepAccum::zeros(points, tasks.len());
    for p in &partials {
        acc.add(p);
    }

    let mut log_bulk = Vec::with_capacity(points);
    for i in 0..points {
        let w = acc.w[i];
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invariant(format!(
                "normalization failure at scale {}, grid point {} (phi = {}): \
                 bulk weight {w}",
                law.scale, i, phi[i]
            )));
        }
        log_bulk.push(w.ln() + center[i]);
    }
    let mut channels = Vec::with_capacity(tasks.len());
    for (k, ch) in z.channels.iter().enumerate() {
        let ratio = match tasks[k] {
            ChannelTask::Dormant => None,
            _ => {
                let vals: Vec<f64> = (0..points)
                    .map(|i| acc.channels[k][i] / acc.w[i])
                    .collect();
                if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invariant(format!(
                        "normalization failure at scale {}, grid point {bad}: \
                         channel ratio not finite",
                        law.scale
                    )));
                }
                Some(vals)
            }
        };
        channels.push(Channel { spec: ch.spec, ratio });
    }

    let mut out = EffectiveZ {
        scale: law.scale,
        grid: new_grid,
        log_bulk,
        channels,
        log_norm: z.log_norm,
        params: z.params.clone(),
    };
    let sub = match cfg.renorm {
        RenormPolicy::CenterOne => out.log_bulk[out.grid.center()],
        RenormPolicy::SupOne => {
            out.log_bulk.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
    };
    apply_renorm(&mut out, sub)?;
    Ok(out)
}

/// Run the full recursion from the local potential to the final scale.
pub fn run_flow(
    params: &ModelParams,
    specs: &[ChannelSpec],
    cfg: &RgConfig,
    replica: u64,
) -> Result<EffectiveZ> {
    params.validate()?;
    cfg.validate(params.shape.block_arity() as usize)?;
    let widths = width_schedule(params, cfg)?;
    let mut z = init_z0(params, specs, Grid::symmetric(widths[0], cfg.grid_points)?)?;
    for scale in 1..=params.shape.levels {
        let law = FluctuationLaw::new(&params.shape, params.mass, scale)?;
        let draws = FluctDraws::for_scale(&law, cfg, replica)?;
        let grid = Grid::symmetric(widths[scale as usize], cfg.grid_points)?;
        z = rg_step(&z, &law, &draws, cfg, grid)?;
    }
    Ok(z)
}

// ---------------------------------------------------------------------
// Zero-mode integral
// ---------------------------------------------------------------------

/// One pair-channel estimate from the zero-mode integral.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEstimate {
    pub coalescence: u32,
    pub value: f64,
    /// Quadrature error estimate (mesh-refinement difference); sampling
    /// error is assessed across replicas by the drivers.
    pub quad_err: f64,
}

/// Result of integrating the constant mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroMode {
    /// Effective final mass for the requested boundary condition.
    pub a_eff: f64,
    pub pairs: Vec<PairEstimate>,
    /// Susceptibility `V <y^2>`.
    pub chi: f64,
    pub chi_quad_err: f64,
    /// Average-field moments `<y^(2p)>`, p = 1, 2, 3.
    pub moments: Vec<f64>,
    /// Fraction of integrand mass in the outer 5% of the grid range.
    pub tail_mass: f64,
}

fn zero_mode_log_weight(z: &EffectiveZ, bc: Bc) -> Result<(f64, f64)> {
    let p = &z.params;
    let shape = Shape::new(p.shape.d, p.shape.l, p.shape.levels, bc)?;
    let a_eff = covariance::zero_mode_mass(&shape, p.mass);
    let vol = shape.lpow((shape.d * shape.levels) as i64);
    if p.g == 0.0 && a_eff + p.potential_nu() <= 0.0 {
        return Err(Error::domain(format!(
            "constant-mode weight is singular: g = 0 with effective mass {}",
            a_eff + p.potential_nu()
        )));
    }
    Ok((a_eff, vol))
}

/// Integrate the constant mode against the bulk and channel grids:
/// Gaussian weight `exp(-V a_eff y^2 / 2)` per the boundary condition.
pub fn zero_mode_integrate(z: &EffectiveZ, bc: Bc) -> Result<ZeroMode> {
    if z.scale != z.params.shape.levels {
        return Err(Error::invariant(format!(
            "constant-mode integral needs the final scale, state is at {}",
            z.scale
        )));
    }
    let (a_eff, vol) = zero_mode_log_weight(z, bc)?;
    let log_integrand = |y: f64| z.grid.cubic(&z.log_bulk, y) - 0.5 * vol * a_eff * y * y;

    // Fine uniform mesh over the grid range; the shift keeps exponentials
    // in range.
    let refine = 8usize;
    let fine_len = (z.grid.len - 1) * refine + 1;
    let hs = z.grid.step / refine as f64;
    let shift = (0..z.grid.len)
        .map(|i| log_integrand(z.grid.value(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::invariant(
            "constant-mode integrand is not finite on the grid",
        ));
    }
    let ys: Vec<f64> = (0..fine_len).map(|i| z.grid.min + hs * i as f64).collect();
    let t: Vec<f64> = ys.iter().map(|&y| (log_integrand(y) - shift).exp()).collect();

    let simpson = |vals: &dyn Fn(usize) -> f64, stride: usize| -> f64 {
        // Composite Simpson over the fine mesh with the given stride.
        let n = (fine_len - 1) / stride;
        let h = hs * stride as f64;
        let mut sum = vals(0) + vals(n * stride);
        for k in 1..n {
            sum += vals(k * stride) * if k % 2 == 0 { 2.0 } else { 4.0 };
        }
        sum * h / 3.0
    };
    let integral = |f: &dyn Fn(usize) -> f64| -> (f64, f64) {
        let fine = simpson(f, 1);
        let coarse = simpson(f, 2);
        (fine, (fine - coarse).abs())
    };

    let (i0, i0_err) = integral(&|k| t[k]);
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(Error::invariant(format!(
            "constant-mode normalization {i0} is not positive"
        )));
    }

    // Mass in the outer 5% of the range on each side (trapezoid on the
    // fine mesh is ample for a threshold check).
    let edge = ((fine_len as f64) * 0.05).ceil() as usize;
    let trapz = |range: std::ops::Range<usize>| -> f64 {
        let mut s = 0.0;
        for k in range {
            s += 0.5 * (t[k] + t[k + 1]) * hs;
        }
        s
    };
    let tail_mass = (trapz(0..edge) + trapz(fine_len - 1 - edge..fine_len - 1)) / i0;
    if tail_mass > 1e-8 {
        return Err(Error::domain(format!(
            "constant-mode integrand leaks {tail_mass:.3e} of its mass into the \
             outer grid tail"
        )));
    }

    let mut pairs = Vec::new();
    for c in &z.channels {
        if let (ChannelSpec::Pair { coalescence }, Some(ratio)) = (c.spec, &c.ratio) {
            let (num, num_err) =
                integral(&|k| z.grid.linear(ratio, ys[k]) * t[k]);
            let value = num / i0;
            let quad_err = (num_err / i0).abs() + (value * i0_err / i0).abs();
            pairs.push(PairEstimate { coalescence, value, quad_err });
        }
    }

    let moment = |p: i32| -> (f64, f64) {
        let (num, err) = integral(&|k| ys[k].powi(2 * p) * t[k]);
        (num / i0, err / i0)
    };
    let (m2, m2_err) = moment(1);
    let (m4, _) = moment(2);
    let (m6, _) = moment(3);
    Ok(ZeroMode {
        a_eff,
        pairs,
        chi: vol * m2,
        chi_quad_err: vol * (m2_err + m2 * i0_err / i0),
        moments: vec![m2, m4, m6],
        tail_mass,
    })
}

/// Normalized density of the constant mode on a fine mesh, for shape
/// diagnostics of the final-scale integrand.
pub fn zero_mode_density(z: &EffectiveZ, bc: Bc) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a_eff, vol) = zero_mode_log_weight(z, bc)?;
    let refine = 8usize;
    let fine_len = (z.grid.len - 1) * refine + 1;
    let hs = z.grid.step / refine as f64;
    let log_integrand = |y: f64| z.grid.cubic(&z.log_bulk, y) - 0.5 * vol * a_eff * y * y;
    let shift = (0..z.grid.len)
        .map(|i| log_integrand(z.grid.value(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    let ys: Vec<f64> = (0..fine_len).map(|i| z.grid.min + hs * i as f64).collect();
    let mut t: Vec<f64> = ys.iter().map(|&y| (log_integrand(y) - shift).exp()).collect();
    let total: f64 = t.iter().sum::<f64>() * hs;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invariant("constant-mode density is degenerate"));
    }
    for v in t.iter_mut() {
        *v /= total;
    }
    Ok((ys, t))
}

// ---------------------------------------------------------------------
// Tuning and scans
// ---------------------------------------------------------------------

/// What the quadratic-coefficient tuner drives to its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneTarget {
    /// Susceptibility equal to the centre of the critical window band,
    /// `V h_N^2 f_n(0)`.
    WindowMid,
    /// Susceptibility equal to the given value.
    Chi(f64),
    /// Curvature of `-log Z` at the origin (second difference over the
    /// grid step squared) equal to the given value.
    Curvature(f64),
}

/// Outcome of the bisection on the quadratic coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneReport {
    pub nu_star: f64,
    /// Metric value at `nu_star`.
    pub value: f64,
    pub target: f64,
    pub iterations: u32,
    pub bracket: (f64, f64),
    /// Every evaluated (nu, metric) pair, in evaluation order.
    pub evals: Vec<(f64, f64)>,
}

fn tune_metric(
    shape: &Shape,
    g: f64,
    mass: f64,
    nu: f64,
    target: &TuneTarget,
    cfg: &RgConfig,
    replica: u64,
) -> Result<f64> {
    let params = ModelParams {
        shape: shape.clone(),
        comps: 1,
        g,
        nu,
        mass,
    };
    let z = run_flow(&params, &[], cfg, replica)?;
    match target {
        TuneTarget::WindowMid | TuneTarget::Chi(_) => {
            Ok(zero_mode_integrate(&z, shape.bc)?.chi)
        }
        TuneTarget::Curvature(_) => {
            let c = z.grid.center();
            Ok(-(z.log_bulk[c + 1] - 2.0 * z.log_bulk[c] + z.log_bulk[c - 1])
                / (z.grid.step * z.grid.step))
        }
    }
}

/// Bisect the total quadratic coefficient until the chosen metric meets
/// its target, to a tolerance of `1e-3` window widths. Common random
/// numbers make the metric a smooth deterministic function of `nu`, and
/// its monotonicity is checked across all evaluations.
pub fn tune_nu(
    shape: &Shape,
    comps: u32,
    g: f64,
    mass: f64,
    target: TuneTarget,
    bracket: Option<(f64, f64)>,
    cfg: &RgConfig,
) -> Result<TuneReport> {
    tune_nu_replica(shape, comps, g, mass, target, bracket, cfg, 0)
}

/// [`tune_nu`] against one specific replica's draws. With common random
/// numbers each replica is a smooth deterministic model, and near
/// criticality at deep hierarchies the replicas' effective critical
/// points scatter by many window widths; tuning each replica separately
/// removes that scatter from window-resolved scans.
#[allow(clippy::too_many_arguments)]
pub fn tune_nu_replica(
    shape: &Shape,
    comps: u32,
    g: f64,
    mass: f64,
    target: TuneTarget,
    bracket: Option<(f64, f64)>,
    cfg: &RgConfig,
    replica: u64,
) -> Result<TuneReport> {
    if comps != 1 {
        return Err(Error::config("tuning supports one component"));
    }
    let scales = ScaleParams::new(shape.clone(), comps, if g > 0.0 { g } else { 1e-4 })?;
    let window = scales.window_w();
    let (target_value, increasing) = match target {
        TuneTarget::WindowMid => (scales.chi_plateau(0.0)?, false),
        TuneTarget::Chi(v) => {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "susceptibility target {v} must be positive"
                )));
            }
            (v, false)
        }
        TuneTarget::Curvature(v) => (v, true),
    };

    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut eval = |nu: f64| -> Result<Option<f64>> {
        match tune_metric(shape, g, mass, nu, &target, cfg, replica) {
            Ok(m) => {
                evals.push((nu, m));
                Ok(Some(m))
            }
            // A Domain failure here means the effective constant-mode
            // integrand escaped the quadrature grid. With g > 0 that can
            // only happen when the trial coefficient sits deep in the
            // broken phase (the weight's minimum moves out to large
            // field values), so classify the point as "below critical"
            // instead of aborting the search.
            Err(Error::Domain(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    // Residual that is positive on the low-nu side for either direction.
    let resid = |m: Option<f64>| match m {
        Some(m) => {
            if increasing {
                target_value - m
            } else {
                m - target_value
            }
        }
        None => f64::INFINITY,
    };

    let (mut lo, mut hi) = bracket.unwrap_or_else(|| {
        let half = (50.0 * window).max(0.25 * scales.nu_c().abs()).max(1e-4);
        (scales.nu_c() - half, scales.nu_c() + half)
    });
    if !(lo < hi) {
        return Err(Error::config(format!("bad bracket ({lo}, {hi})")));
    }
    let mut f_lo = resid(eval(lo)?);
    let mut f_hi = resid(eval(hi)?);
    let mut expansions = 0;
    while f_lo.signum() == f_hi.signum() {
        expansions += 1;
        if expansions > 40 {
            return Err(Error::domain(format!(
                "no sign change while tuning: metric-target is {f_lo:.6e} at \
                 nu = {lo} and {f_hi:.6e} at nu = {hi}"
            )));
        }
        let width = hi - lo;
        if f_lo < 0.0 {
            lo -= width;
            f_lo = resid(eval(lo)?);
        } else {
            hi += width;
            f_hi = resid(eval(hi)?);
        }
    }
    if f_lo < 0.0 {
        return Err(Error::domain(format!(
            "metric runs the wrong way across the bracket ({lo}, {hi})"
        )));
    }

    let tol = 1e-3 * window;
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let f_mid = resid(eval(mid)?);
        if f_mid >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // The metric must be monotone in nu across everything we evaluated.
    let mut sorted = evals.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        let ok = if increasing {
            w[1].1 >= w[0].1
        } else {
            w[1].1 <= w[0].1
        };
        if !ok {
            return Err(Error::invariant(format!(
                "tuning metric is not monotone: {:?} then {:?}",
                w[0], w[1]
            )));
        }
    }

    let nu_star = 0.5 * (lo + hi);
    let value = tune_metric(shape, g, mass, nu_star, &target, cfg, replica)?;
    Ok(TuneReport {
        nu_star,
        value,
        target: target_value,
        iterations,
        bracket: (lo, hi),
        evals,
    })
}

/// Which finite-size regime a scan probes; fixes how `s` maps to the
/// quadratic coefficient and the covariance mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `nu = nu* + s w_N`, covariance mass `a*_N(s)`.
    Window,
    /// `nu = nu* + s v_N`, covariance mass `a~*_N(s)`.
    Gaussian,
}

/// One scan entry with replica statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub s: f64,
    pub nu: f64,
    pub mass: f64,
    pub coalescence: u32,
    pub mean: f64,
    /// Standard error over replicas (zero when only one replica ran).
    pub sem: f64,
}

/// Susceptibility statistics at one scan parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiPoint {
    pub s: f64,
    pub nu: f64,
    pub mass: f64,
    pub mean: f64,
    pub sem: f64,
}

/// Full two-point scan output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub chi: Vec<ChiPoint>,
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Scan the two-point function over window coordinates `s` and distance
/// classes, with replica error bars.
pub fn two_point_scan(
    shape: &Shape,
    comps: u32,
    g: f64,
    nu_star: f64,
    regime: Regime,
    s_list: &[f64],
    classes: &[u32],
    cfg: &RgConfig,
) -> Result<ScanResult> {
    let scales = ScaleParams::new(shape.clone(), comps, if g > 0.0 { g } else { 1e-4 })?;
    let mut points = Vec::new();
    let mut chi = Vec::new();
    for &s in s_list {
        if s.abs() > 10.0 {
            return Err(Error::config(format!(
                "scan parameter s = {s} outside the supported band |s| <= 10"
            )));
        }
        let (nu, mass) = match regime {
            Regime::Window => (nu_star + s * scales.window_w(), scales.mass_window(s)),
            Regime::Gaussian => {
                if s <= 0.0 {
                    return Err(Error::config(format!(
                        "Gaussian-regime scan needs s > 0, got {s}"
                    )));
                }
                (nu_star + s * scales.shift_v(), scales.mass_gaussian(s))
            }
        };
        if !scales.in_critical_interval(mass) {
            return Err(Error::domain(format!(
                "covariance mass {mass} for s = {s} leaves the controlled interval"
            )));
        }
        let params = ModelParams {
            shape: shape.clone(),
            comps: 1,
            g,
            nu,
            mass,
        };
        let specs: Vec<ChannelSpec> = classes
            .iter()
            .map(|&c| ChannelSpec::Pair { coalescence: c })
            .collect();
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); classes.len()];
        let mut chis = Vec::new();
        for r in 0..cfg.replicas {
            let z = run_flow(&params, &specs, cfg, r as u64)?;
            let zm = zero_mode_integrate(&z, shape.bc)?;
            for (k, &c) in classes.iter().enumerate() {
                let est = zm
                    .pairs
                    .iter()
                    .find(|p| p.coalescence == c)
                    .ok_or_else(|| Error::invariant("missing channel in output"))?;
                per_class[k].push(est.value);
            }
            chis.push(zm.chi);
        }
        for (k, &c) in classes.iter().enumerate() {
            let (mean, sem) = mean_sem(&per_class[k]);
            points.push(ScanPoint { s, nu, mass, coalescence: c, mean, sem });
        }
        let (mean, sem) = mean_sem(&chis);
        chi.push(ChiPoint { s, nu, mass, mean, sem });
    }
    Ok(ScanResult { points, chi })
}

// ---------------------------------------------------------------------
// Direct small-box reference sampler
// ---------------------------------------------------------------------

/// Draw one exact Gaussian field at the given covariance mass: the
/// constant mode plus independent zero-sum fluctuations per block and
/// scale. Used as an independent reference for small boxes.
pub fn sample_free_field(
    shape: &Shape,
    mass: f64,
    stream: &mut rng::Stream,
) -> Result<Vec<f64>> {
    let vol = shape.volume() as usize;
    let a_eff = covariance::zero_mode_mass(shape, mass);
    if a_eff <= 0.0 {
        return Err(Error::domain(format!(
            "free-field sampling needs a positive effective mass, got {a_eff}"
        )));
    }
    let c_hat = covariance::c_hat(shape, mass)?;
    let mut field = vec![stream.next_normal() * c_hat.sqrt(); vol];
    for scale in 1..=shape.levels {
        let law = FluctuationLaw::new(shape, mass, scale)?;
        let block_vol = shape.block_volume(scale) as usize;
        let sub_vol = shape.block_volume(scale - 1) as usize;
        for block in 0..shape.blocks_at_scale(scale) as usize {
            let zeta = sample_fluctuation(&law, stream);
            for (b, &value) in zeta.iter().enumerate() {
                let start = block * block_vol + b * sub_vol;
                for site in start..start + sub_vol {
                    field[site] += value;
                }
            }
        }
    }
    Ok(field)
}

/// Two-point estimate `<phi_o phi_x>` with batch-mean error bars, by
/// direct importance sampling of the full field: Gaussian reference at
/// the covariance mass, reweighted by the local potential. Only viable
/// for small volumes; serves as an oracle for the grid recursion.
pub fn direct_two_point_mc(
    params: &ModelParams,
    x: crate::lattice::Site,
    samples: u32,
    seed: u64,
    batches: u32,
) -> Result<(f64, f64)> {
    params.validate()?;
    let shape = &params.shape;
    if shape.volume() > 4096 {
        return Err(Error::config(format!(
            "direct sampler is for small boxes, volume {} is too large",
            shape.volume()
        )));
    }
    if batches < 2 || samples < batches {
        return Err(Error::config("need at least two batches of samples"));
    }
    let pot = params.potential_nu();
    let xi = x.0 as usize;
    let per_batch = (samples / batches) as usize;
    let mut ratios = Vec::with_capacity(batches as usize);
    for batch in 0..batches {
        let mut stream = rng::Stream::from_parts(&[seed, batch as u64]);
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..per_batch {
            let field = sample_free_field(shape, params.mass, &mut stream)?;
            let mut action = 0.0;
            for &v in &field {
                let v2 = v * v;
                action += 0.25 * params.g * v2 * v2 + 0.5 * pot * v2;
            }
            let w = (-action).exp();
            num += field[0] * field[xi] * w;
            den += w;
        }
        if !(den > 0.0) {
            return Err(Error::invariant("all direct-sampling weights vanished"));
        }
        ratios.push(num / den);
    }
    Ok(mean_sem(&ratios))
}
