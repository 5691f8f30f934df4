//! Block-spin recursion for `n >= 2` spin components.
//!
//! The bulk is O(n)-invariant, so it lives on a radial grid: `log F(r)`
//! with `Z(phi) = F(|phi|)`. Marked components single out the first spin
//! axis, so the pair channel lives on a two-dimensional grid over
//! `(phi_1, rho)` with `rho = |phi_perp|`, stored as a ratio to the bulk.
//! Both grids are stored symmetrically about zero so interpolation is
//! even across the axis by construction.
//!
//! One step integrates the same exchangeable zero-sum fluctuation as the
//! scalar engine, drawn independently per component. The coalescence
//! birth uses the first components only and collapses to the same closed
//! form. The final integral over the constant mode is two-dimensional
//! with the `rho^(n-2)` surface weight.

use crate::covariance;
use crate::error::{Error, Result};
use crate::lattice::{Bc, Shape};
use crate::rg::{
    width_schedule, ChannelSpec, FluctuationLaw, Grid, ModelParams, PairBirth,
    RenormPolicy, RgConfig, Sampler,
};
use crate::rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fluctuation draws with `comps` components per sub-block: zero-sum over
/// the sub-blocks independently in every component.
#[derive(Debug, Clone)]
pub struct VectorDraws {
    pub arity: usize,
    pub comps: usize,
    pub count: usize,
    /// Layout: `[draw][sub-block][component]`.
    pub zeta: Vec<f64>,
    pub weight: Vec<f64>,
}

impl VectorDraws {
    pub fn monte_carlo(
        law: &FluctuationLaw,
        comps: usize,
        samples: u32,
        seed: u64,
        replica: u64,
    ) -> Self {
        let m = law.arity;
        let key = rng::stream_key(&[seed, replica, law.scale as u64]);
        let mut zeta = vec![0.0; samples as usize * m * comps];
        for t in 0..samples as usize {
            let row = &mut zeta[t * m * comps..(t + 1) * m * comps];
            for (i, v) in row.iter_mut().enumerate() {
                *v = rng::normal_pair_at(key, (t * m * comps + i) as u64).0;
            }
            for k in 0..comps {
                let mean =
                    (0..m).map(|b| row[b * comps + k]).sum::<f64>() / m as f64;
                for b in 0..m {
                    row[b * comps + k] = law.sigma * (row[b * comps + k] - mean);
                }
            }
        }
        let w = 1.0 / samples as f64;
        VectorDraws {
            arity: m,
            comps,
            count: samples as usize,
            zeta,
            weight: vec![w; samples as usize],
        }
    }

    #[inline]
    fn row(&self, t: usize) -> &[f64] {
        let stride = self.arity * self.comps;
        &self.zeta[t * stride..(t + 1) * stride]
    }
}

/// Bilinear interpolation on a tensor grid, clamped-cell with linear
/// extrapolation outside (matching the one-dimensional ratio storage).
#[inline]
fn bilinear(gx: &Grid, gy: &Grid, data: &[f64], x: f64, y: f64) -> f64 {
    let px = gx.pos(x);
    let kx = (px.floor() as isize).clamp(0, gx.len as isize - 2) as usize;
    let ux = px - kx as f64;
    let py = gy.pos(y);
    let ky = (py.floor() as isize).clamp(0, gy.len as isize - 2) as usize;
    let uy = py - ky as f64;
    let row0 = &data[kx * gy.len..];
    let row1 = &data[(kx + 1) * gy.len..];
    (1.0 - ux) * ((1.0 - uy) * row0[ky] + uy * row0[ky + 1])
        + ux * ((1.0 - uy) * row1[ky] + uy * row1[ky + 1])
}

/// One pair channel on the `(phi_1, rho)` grid.
#[derive(Debug, Clone)]
pub struct VectorChannel {
    pub coalescence: u32,
    /// Row-major `axis.len x trans.len` ratio to the bulk, if born.
    pub ratio: Option<Vec<f64>>,
}

/// Effective partition function of the vector model at one scale.
#[derive(Debug, Clone)]
pub struct VectorZ {
    pub scale: u32,
    /// Radial grid (symmetric about zero; the data are even).
    pub radial: Grid,
    /// `log F` on the radial grid.
    pub log_bulk: Vec<f64>,
    /// First-component axis of the channel grids.
    pub axis: Grid,
    /// Transverse-radius axis (symmetric; the data are even).
    pub trans: Grid,
    pub channels: Vec<VectorChannel>,
    pub log_norm: f64,
    pub params: ModelParams,
}

fn mirror_even(grid: &Grid, data: &mut [f64]) {
    let c = grid.center();
    for k in 1..=c {
        data[c - k] = data[c + k];
    }
}

fn validate_vector(params: &ModelParams) -> Result<()> {
    if params.comps < 2 {
        return Err(Error::config(format!(
            "vector recursion needs at least two components, got {}",
            params.comps
        )));
    }
    if !(params.g >= 0.0 && params.g.is_finite()) {
        return Err(Error::config(format!("coupling {} must be >= 0", params.g)));
    }
    if !params.nu.is_finite() {
        return Err(Error::config("quadratic coefficient must be finite"));
    }
    covariance::admissible_mass(&params.shape, params.mass)
}

fn vector_config_check(params: &ModelParams, cfg: &RgConfig) -> Result<()> {
    let m = params.shape.block_arity() as usize;
    // Tensor quadrature would need nodes^(m * comps) evaluations.
    cfg.validate(m * params.comps as usize)?;
    if let Sampler::TensorQuad { .. } = cfg.sampler {
        // validate() already caps the count; reaching here means a tiny
        // rule passed the cap, which cannot resolve a radial density.
        return Err(Error::config(
            "tensor quadrature is not supported for vector models; use Monte Carlo",
        ));
    }
    Ok(())
}

/// Initial state: `log F(r) = -(g/4) r^4 - (pot/2) r^2`; a same-site pair
/// channel starts as `phi_1^2`, later channels are dormant.
pub fn init_vector(
    params: &ModelParams,
    specs: &[ChannelSpec],
    radial: Grid,
    axis: Grid,
    trans: Grid,
) -> Result<VectorZ> {
    validate_vector(params)?;
    let pot = params.potential_nu();
    let mut log_bulk: Vec<f64> = (0..radial.len)
        .map(|i| {
            let r2 = radial.value(i).powi(2);
            -(params.g / 4.0) * r2 * r2 - 0.5 * pot * r2
        })
        .collect();
    mirror_even(&radial, &mut log_bulk);
    let mut channels = Vec::new();
    for spec in specs {
        let ChannelSpec::Pair { coalescence } = *spec else {
            return Err(Error::config(
                "vector recursion carries pair channels only",
            ));
        };
        if coalescence > params.shape.levels {
            return Err(Error::config(format!(
                "coalescence scale {coalescence} beyond depth {}",
                params.shape.levels
            )));
        }
        let ratio = (coalescence == 0).then(|| {
            let mut data = vec![0.0; axis.len * trans.len];
            for i in 0..axis.len {
                let v = axis.value(i).powi(2);
                for k in 0..trans.len {
                    data[i * trans.len + k] = v;
                }
            }
            data
        });
        channels.push(VectorChannel { coalescence, ratio });
    }
    let mut z = VectorZ {
        scale: 0,
        radial,
        log_bulk,
        axis,
        trans,
        channels,
        log_norm: 0.0,
        params: params.clone(),
    };
    let sub = z.log_bulk[z.radial.center()];
    for v in z.log_bulk.iter_mut() {
        *v -= sub;
    }
    z.log_norm += sub;
    Ok(z)
}

struct VecAccum {
    w_rad: Vec<f64>,
    w_plane: Vec<f64>,
    channels: Vec<Vec<f64>>,
}

impl VecAccum {
    fn zeros(rad: usize, plane: usize, channels: usize) -> Self {
        VecAccum {
            w_rad: vec![0.0; rad],
            w_plane: vec![0.0; plane],
            channels: vec![vec![0.0; plane]; channels],
        }
    }

    fn add(&mut self, other: &VecAccum) {
        for (a, b) in self.w_rad.iter_mut().zip(&other.w_rad) {
            *a += b;
        }
        for (a, b) in self.w_plane.iter_mut().zip(&other.w_plane) {
            *a += b;
        }
        for (ca, cb) in self.channels.iter_mut().zip(&other.channels) {
            for (a, b) in ca.iter_mut().zip(cb) {
                *a += b;
            }
        }
    }
}

/// One renormalisation step of the vector state.
pub fn rg_step_vector(
    z: &VectorZ,
    law: &FluctuationLaw,
    draws: &VectorDraws,
    cfg: &RgConfig,
    radial: Grid,
    axis: Grid,
    trans: Grid,
) -> Result<VectorZ> {
    if law.scale != z.scale + 1 {
        return Err(Error::invariant(format!(
            "fluctuation scale {} does not follow state scale {}",
            law.scale, z.scale
        )));
    }
    let n = z.params.comps as usize;
    if draws.arity != law.arity || draws.comps != n {
        return Err(Error::invariant("draw shape does not match the law"));
    }
    let m = law.arity;
    let mf = m as f64;

    // Only the upper half of any even axis is computed; the mirror fills
    // the rest.
    let rad_c = radial.center();
    let rad_pts: Vec<f64> = (rad_c..radial.len).map(|i| radial.value(i)).collect();
    let trans_c = trans.center();
    let plane_rows = axis.len;
    let plane_cols = trans.len - trans_c;
    let plane = plane_rows * plane_cols;
    let plane_pt = |idx: usize| -> (f64, f64) {
        let (i, k) = (idx / plane_cols, idx % plane_cols);
        (axis.value(i), trans.value(trans_c + k))
    };

    // Recentre exponents by the zero-fluctuation product value.
    let center_rad: Vec<f64> = rad_pts
        .iter()
        .map(|&r| mf * z.radial.cubic(&z.log_bulk, r))
        .collect();
    let center_plane: Vec<f64> = (0..plane)
        .map(|idx| {
            let (p1, rho) = plane_pt(idx);
            mf * z.radial.cubic(&z.log_bulk, (p1 * p1 + rho * rho).sqrt())
        })
        .collect();

    let tasks: Vec<(u32, Option<&[f64]>)> = z
        .channels
        .iter()
        .map(|c| (c.coalescence, c.ratio.as_deref()))
        .collect();
    let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };

    let chunk = 64usize;
    let n_chunks = draws.count.div_ceil(chunk);
    let process = |c: usize| -> VecAccum {
        let mut acc = VecAccum::zeros(rad_pts.len(), plane, tasks.len());
        let mut s_rad = vec![0.0f64; rad_pts.len()];
        let mut s_plane = vec![0.0f64; plane];
        let lo = c * chunk;
        let hi = ((c + 1) * chunk).min(draws.count);
        for t in lo..hi {
            let row = draws.row(t);
            let base_w = draws.weight[t] / signs.len() as f64;
            for &sign in signs {
                s_rad.iter_mut().for_each(|v| *v = 0.0);
                s_plane.iter_mut().for_each(|v| *v = 0.0);
                let mut zeta1_sq = 0.0;
                for b in 0..m {
                    let zb = &row[b * n..(b + 1) * n];
                    let z1 = sign * zb[0];
                    zeta1_sq += z1 * z1;
                    // Norm of the components beyond the first two.
                    let tail_sq: f64 =
                        zb[2..].iter().map(|&v| v * v).sum::<f64>();
                    let z2 = sign * zb[1];
                    for (i, &r) in rad_pts.iter().enumerate() {
                        // phi = r e_1: |phi + zeta|^2.
                        let a = r + z1;
                        s_rad[i] += z.radial.cubic(
                            &z.log_bulk,
                            (a * a + z2 * z2 + tail_sq).sqrt(),
                        );
                    }
                    for (idx, sv) in s_plane.iter_mut().enumerate() {
                        let (p1, rho) = plane_pt(idx);
                        let a = p1 + z1;
                        let b2 = rho + z2;
                        *sv += z.radial.cubic(
                            &z.log_bulk,
                            (a * a + b2 * b2 + tail_sq).sqrt(),
                        );
                    }
                }
                for i in 0..rad_pts.len() {
                    acc.w_rad[i] +=
                        ((s_rad[i] - center_rad[i]).min(700.0)).exp() * base_w;
                }
                for idx in 0..plane {
                    s_plane[idx] =
                        ((s_plane[idx] - center_plane[idx]).min(700.0)).exp() * base_w;
                    acc.w_plane[idx] += s_plane[idx];
                }
                for ((coalescence, ratio), out) in
                    tasks.iter().zip(acc.channels.iter_mut())
                {
                    match ratio {
                        Some(r) => {
                            let zb = &row[cfg.evolve_block * n..(cfg.evolve_block + 1) * n];
                            let z1 = sign * zb[0];
                            let z2 = sign * zb[1];
                            let tail_sq: f64 =
                                zb[2..].iter().map(|&v| v * v).sum::<f64>();
                            for idx in 0..plane {
                                let (p1, rho) = plane_pt(idx);
                                let b2 = rho + z2;
                                let val = bilinear(
                                    &z.axis,
                                    &z.trans,
                                    r,
                                    p1 + z1,
                                    (b2 * b2 + tail_sq).sqrt(),
                                );
                                out[idx] += val * s_plane[idx];
                            }
                        }
                        None if *coalescence == law.scale => match cfg.birth {
                            PairBirth::Symmetrized => {
                                let c_t = zeta1_sq / (mf * (mf - 1.0));
                                for idx in 0..plane {
                                    let (p1, _) = plane_pt(idx);
                                    out[idx] += (p1 * p1 - c_t) * s_plane[idx];
                                }
                            }
                            PairBirth::Fixed(b1, b2) => {
                                let s1 = sign * row[b1 * n];
                                let s2 = sign * row[b2 * n];
                                for idx in 0..plane {
                                    let (p1, _) = plane_pt(idx);
                                    out[idx] +=
                                        (p1 + s1) * (p1 + s2) * s_plane[idx];
                                }
                            }
                        },
                        None => {}
                    }
                }
            }
        }
        acc
    };

    let partials: Vec<VecAccum> = {
        #[cfg(feature = "parallel")]
        {
            (0..n_chunks).into_par_iter().map(process).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_chunks).map(process).collect()
        }
    };
    let mut acc = VecAccum::zeros(rad_pts.len(), plane, tasks.len());
    for p in &partials {
        acc.add(p);
    }

    let mut log_bulk = vec![0.0; radial.len];
    for (i, &w) in acc.w_rad.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invariant(format!(
                "normalization failure at scale {}, radius {}: bulk weight {w}",
                law.scale, rad_pts[i]
            )));
        }
        log_bulk[rad_c + i] = w.ln() + center_rad[i];
    }
    mirror_even(&radial, &mut log_bulk);

    let mut channels = Vec::new();
    for (k, (coalescence, ratio)) in tasks.iter().enumerate() {
        let born = ratio.is_some() || *coalescence == law.scale;
        let ratio = born
            .then(|| -> Result<Vec<f64>> {
                let mut data = vec![0.0; axis.len * trans.len];
                for idx in 0..plane {
                    let (i, kk) = (idx / plane_cols, idx % plane_cols);
                    let v = acc.channels[k][idx] / acc.w_plane[idx];
                    if !v.is_finite() {
                        return Err(Error::invariant(format!(
                            "normalization failure at scale {}: channel ratio \
                             not finite at plane point {idx}",
                            law.scale
                        )));
                    }
                    data[i * trans.len + trans_c + kk] = v;
                    data[i * trans.len + trans_c - kk] = v;
                }
                Ok(data)
            })
            .transpose()?;
        channels.push(VectorChannel { coalescence: *coalescence, ratio });
    }

    let mut out = VectorZ {
        scale: law.scale,
        radial,
        log_bulk,
        axis,
        trans,
        channels,
        log_norm: z.log_norm,
        params: z.params.clone(),
    };
    let sub = match cfg.renorm {
        RenormPolicy::CenterOne => out.log_bulk[out.radial.center()],
        RenormPolicy::SupOne => {
            out.log_bulk.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
    };
    if !sub.is_finite() {
        return Err(Error::invariant(format!(
            "normalization at scale {} is not finite",
            out.scale
        )));
    }
    for v in out.log_bulk.iter_mut() {
        *v -= sub;
    }
    out.log_norm += sub;
    Ok(out)
}

/// Run the vector recursion from the local potential to the final scale.
/// Grid widths follow the scalar per-component schedule, scaled by
/// `sqrt(n)` for the norm-like axes.
pub fn run_flow_vector(
    params: &ModelParams,
    specs: &[ChannelSpec],
    cfg: &RgConfig,
    replica: u64,
) -> Result<VectorZ> {
    validate_vector(params)?;
    vector_config_check(params, cfg)?;
    let scalar_widths = {
        let mut p = params.clone();
        p.comps = 1;
        width_schedule(&p, cfg)?
    };
    let sqrt_n = (params.comps as f64).sqrt();
    let grids = |j: usize| -> Result<(Grid, Grid, Grid)> {
        let w = scalar_widths[j];
        Ok((
            Grid::symmetric(w * sqrt_n, cfg.grid_points)?,
            Grid::symmetric(w, cfg.grid_points)?,
            Grid::symmetric(w * sqrt_n, cfg.grid_points)?,
        ))
    };
    let (r0, a0, t0) = grids(0)?;
    let mut z = init_vector(params, specs, r0, a0, t0)?;
    for scale in 1..=params.shape.levels {
        let law = FluctuationLaw::new(&params.shape, params.mass, scale)?;
        let draws = match cfg.sampler {
            Sampler::MonteCarlo { samples, seed } => VectorDraws::monte_carlo(
                &law,
                params.comps as usize,
                samples,
                seed,
                replica,
            ),
            Sampler::TensorQuad { .. } => unreachable!("rejected by config check"),
        };
        let (r, a, t) = grids(scale as usize)?;
        z = rg_step_vector(&z, &law, &draws, cfg, r, a, t)?;
    }
    Ok(z)
}

/// Result of the vector constant-mode integral.
#[derive(Debug, Clone)]
pub struct VectorZeroMode {
    pub a_eff: f64,
    /// `(coalescence, G)` per channel: first-component correlation.
    pub pairs: Vec<(u32, f64)>,
    /// Susceptibility per component, `V <y_1^2>`.
    pub chi: f64,
    /// Norm moments `<|y|^(2p)>`, p = 1, 2, 3.
    pub moments: Vec<f64>,
}

/// Integrate the constant mode: two-dimensional quadrature over
/// `(y_1, rho)` with the `rho^(n-2)` surface weight and the per-component
/// Gaussian zero-mode factor.
pub fn zero_mode_integrate_vector(z: &VectorZ, bc: Bc) -> Result<VectorZeroMode> {
    if z.scale != z.params.shape.levels {
        return Err(Error::invariant(format!(
            "constant-mode integral needs the final scale, state is at {}",
            z.scale
        )));
    }
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
    let n = p.comps as f64;

    let refine = 4usize;
    let rows = (z.axis.len - 1) * refine + 1;
    let trans_c = z.trans.center();
    let cols = (z.trans.len - 1 - trans_c) * refine + 1;
    let hy = z.axis.step / refine as f64;
    let hr = z.trans.step / refine as f64;
    let log_t = |y1: f64, rho: f64| -> f64 {
        let r2 = y1 * y1 + rho * rho;
        z.radial.cubic(&z.log_bulk, r2.sqrt()) - 0.5 * vol * a_eff * r2
    };
    // Shift by the max over coarse nodes to keep exponentials in range.
    let mut shift = f64::NEG_INFINITY;
    for i in 0..z.axis.len {
        for k in trans_c..z.trans.len {
            shift = shift.max(log_t(z.axis.value(i), z.trans.value(k)));
        }
    }
    if !shift.is_finite() {
        return Err(Error::invariant(
            "constant-mode integrand is not finite on the grid",
        ));
    }

    // Composite Simpson weights along each axis.
    let simpson_w = |len: usize| -> Vec<f64> {
        let mut w = vec![0.0; len];
        w[0] = 1.0;
        w[len - 1] = 1.0;
        for k in 1..len - 1 {
            w[k] = if k % 2 == 0 { 2.0 } else { 4.0 };
        }
        w
    };
    let wy = simpson_w(rows);
    let wr = simpson_w(cols);

    let mut i0 = 0.0;
    let mut i_y1sq = 0.0;
    let mut i_r = [0.0; 3];
    let mut i_ch = vec![0.0; z.channels.len()];
    for iy in 0..rows {
        let y1 = z.axis.min + hy * iy as f64;
        for ir in 0..cols {
            let rho = hr * ir as f64;
            let surf = if p.comps == 2 { 1.0 } else { rho.powi(p.comps as i32 - 2) };
            let t = (log_t(y1, rho) - shift).exp() * surf * wy[iy] * wr[ir];
            i0 += t;
            i_y1sq += y1 * y1 * t;
            let r2 = y1 * y1 + rho * rho;
            i_r[0] += r2 * t;
            i_r[1] += r2 * r2 * t;
            i_r[2] += r2 * r2 * r2 * t;
            for (k, ch) in z.channels.iter().enumerate() {
                if let Some(ratio) = &ch.ratio {
                    i_ch[k] += bilinear(&z.axis, &z.trans, ratio, y1, rho) * t;
                }
            }
        }
    }
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(Error::invariant(format!(
            "constant-mode normalization {i0} is not positive"
        )));
    }
    let _ = n;
    let pairs = z
        .channels
        .iter()
        .zip(&i_ch)
        .filter(|(ch, _)| ch.ratio.is_some())
        .map(|(ch, &num)| (ch.coalescence, num / i0))
        .collect();
    Ok(VectorZeroMode {
        a_eff,
        pairs,
        chi: vol * i_y1sq / i0,
        moments: i_r.iter().map(|&v| v / i0).collect(),
    })
}
