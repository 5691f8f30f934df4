//! Browser bindings for the hierarchical-lattice toolkit.
//!
//! Each exported function runs a small, deterministic computation and
//! returns the result as a JSON string so the page can plot it without
//! any extra glue:
//!
//! - [`green_curve`]: per-class two-point function of the Gaussian model
//!   on a hierarchical box, with the susceptibility and the zero-mode
//!   plateau level.
//! - [`profile_curve`]: the universal scaling profile `f_n(s)` and the
//!   second `sigma`-moment over a range of window parameters.
//! - [`flow_trace`]: the perturbative coupling recursion
//!   `g_{j+1} = g_j - beta_j g_j^2` with its crossover diagnostics.

use hrg_core::covariance;
use hrg_core::flow;
use hrg_core::lattice::{Bc, Shape};
use hrg_core::profiles;
use hrg_core::scales::ScaleParams;
use serde::Serialize;

#[derive(Serialize)]
struct GreenRow {
    jxy: u32,
    norm: f64,
    class_size: u64,
    green: f64,
    cum_class_sum: f64,
}

#[derive(Serialize)]
struct GreenCurve {
    d: u32,
    l: u32,
    levels: u32,
    bc: String,
    mass: f64,
    chi: f64,
    plateau: f64,
    rows: Vec<GreenRow>,
}

fn parse_bc(bc: &str) -> Result<Bc, String> {
    match bc.to_ascii_lowercase().as_str() {
        "periodic" | "p" => Ok(Bc::Periodic),
        "free" | "f" => Ok(Bc::Free),
        other => Err(format!("unknown boundary condition `{other}`")),
    }
}

/// Two-point function of the Gaussian hierarchical model, one row per
/// coalescence class (0 = same site, `levels` = farthest class).
pub fn green_curve_json(
    d: u32,
    l: u32,
    levels: u32,
    bc: &str,
    mass: f64,
) -> Result<String, String> {
    let bc = parse_bc(bc)?;
    let shape = Shape::new(d, l, levels, bc).map_err(|e| e.to_string())?;
    let chi = covariance::susceptibility(&shape, mass).map_err(|e| e.to_string())?;
    let plateau = covariance::c_hat(&shape, mass).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut cum = 0.0;
    for jxy in 0..=levels {
        let g = covariance::green(&shape, mass, jxy).map_err(|e| e.to_string())?;
        let size = shape.class_size(jxy);
        cum += g * size as f64;
        rows.push(GreenRow {
            jxy,
            norm: shape.euclid_norm(shape.class_representative(jxy)),
            class_size: size,
            green: g,
            cum_class_sum: cum,
        });
    }
    let out = GreenCurve {
        d,
        l,
        levels,
        bc: match bc {
            Bc::Periodic => "periodic".into(),
            Bc::Free => "free".into(),
        },
        mass,
        chi,
        plateau,
        rows,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ProfileRow {
    s: f64,
    f: f64,
    m2: f64,
}

#[derive(Serialize)]
struct ProfileCurve {
    n: u32,
    f_at_zero: f64,
    rows: Vec<ProfileRow>,
}

/// Universal profile `f_n(s)` and second moment on a uniform grid of
/// window parameters `s` in `[s_min, s_max]`.
pub fn profile_curve_json(
    n: u32,
    s_min: f64,
    s_max: f64,
    count: u32,
) -> Result<String, String> {
    if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
        return Err(format!("bad range [{s_min}, {s_max}]"));
    }
    if !(2..=4097).contains(&count) {
        return Err(format!("point count {count} outside 2..=4097"));
    }
    let mut rows = Vec::new();
    let step = (s_max - s_min) / (count - 1) as f64;
    for i in 0..count {
        let s = s_min + step * i as f64;
        let f = profiles::f_profile(n, s).map_err(|e| e.to_string())?;
        let m2 = profiles::sigma_moment(n, 2, s).map_err(|e| e.to_string())?;
        rows.push(ProfileRow { s, f, m2 });
    }
    let out = ProfileCurve {
        n,
        f_at_zero: profiles::f_profile(n, 0.0).map_err(|e| e.to_string())?,
        rows,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FlowRow {
    j: u32,
    gtilde: f64,
    beta: f64,
    vartheta: f64,
    product: f64,
}

#[derive(Serialize)]
struct FlowCurve {
    g0: f64,
    atilde: f64,
    d: u32,
    l: u32,
    b: f64,
    mass_scale: Option<u32>,
    rows: Vec<FlowRow>,
}

/// Perturbative coupling flow. `product` is `gtilde * b * j`, which
/// tends to 1 at the marginal dimension and to 0 above it.
pub fn flow_trace_json(
    g0: f64,
    atilde: f64,
    d: u32,
    l: u32,
    jmax: u32,
) -> Result<String, String> {
    let shape = Shape::new(d, l, 1, Bc::Periodic).map_err(|e| e.to_string())?;
    let b = ScaleParams::new(shape, 1, if g0 > 0.0 { g0 } else { 1e-4 })
        .map_err(|e| e.to_string())?
        .b_const();
    let states = flow::gtilde_flow(g0, atilde, d, l, b, jmax).map_err(|e| e.to_string())?;
    let mass_scale = states.first().and_then(|s| s.mass_scale);
    let rows = states
        .iter()
        .map(|s| FlowRow {
            j: s.j,
            gtilde: s.gtilde,
            beta: s.beta,
            vartheta: s.vartheta,
            product: s.gtilde * b * s.j as f64,
        })
        .collect();
    let out = FlowCurve {
        g0,
        atilde,
        d,
        l,
        b,
        mass_scale,
        rows,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn green_curve(
        d: u32,
        l: u32,
        levels: u32,
        bc: &str,
        mass: f64,
    ) -> Result<String, JsValue> {
        super::green_curve_json(d, l, levels, bc, mass).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn profile_curve(
        n: u32,
        s_min: f64,
        s_max: f64,
        count: u32,
    ) -> Result<String, JsValue> {
        super::profile_curve_json(n, s_min, s_max, count).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn flow_trace(
        g0: f64,
        atilde: f64,
        d: u32,
        l: u32,
        jmax: u32,
    ) -> Result<String, JsValue> {
        super::flow_trace_json(g0, atilde, d, l, jmax).map_err(|e| JsValue::from_str(&e))
    }
}
