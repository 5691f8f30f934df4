//! Command implementations. Every command resolves its parameters with
//! flag-over-file precedence, echoes the resolved configuration into the
//! output metadata, and renders through one deterministic formatter so
//! reruns are byte-identical.

use crate::fmt::{g17, Cell, Meta, Table};
use crate::opts::{
    BcArg, Cli, Command, FileCfg, FlowArgs, Format, GreenArgs, McmcArgs, PlateauArgs, ProfileArgs,
    RegimeArg, RgArgs, ScalesArgs, ShapeArgs, VerifyArgs,
};
use hrg_core::error::{Error, Result};
use hrg_core::lattice::{Bc, Shape};
use hrg_core::rg::{self, ChannelSpec, ModelParams, Regime, RgConfig, TuneReport, TuneTarget};
use hrg_core::scales::ScaleParams;
use hrg_core::{covariance, flow, mcmc, profiles, rng};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Map an error to the process exit code contract: configuration
/// problems are 2, analytic-domain violations are 3, broken runtime
/// invariants are 4.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Domain(_) => 3,
        Error::Invariant(_) => 4,
    }
}

/// Parse global options, configure the worker pool, and run the chosen
/// subcommand.
pub fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => load_file_cfg(path)?,
        None => FileCfg::default(),
    };
    init_threads(cli.threads.or(file.threads))?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = cli.out.clone();
    match &cli.command {
        Command::Verify(args) => cmd_verify(args, cli.format.unwrap_or(Format::Csv), &out),
        Command::Green(args) => cmd_green(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out),
        Command::Profile(args) => {
            cmd_profile(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out)
        }
        Command::Scales(args) => {
            // This command reports one record of derived constants, so it
            // defaults to the JSON mirror rather than CSV.
            cmd_scales(args, &file, seed, cli.format.unwrap_or(Format::Json), &out)
        }
        Command::Flow(args) => cmd_flow(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out),
        Command::RgExact(args) => cmd_rg(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out),
        Command::Mcmc(args) => cmd_mcmc(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out),
        Command::Plateau(args) => {
            cmd_plateau(args, &file, seed, cli.format.unwrap_or(Format::Csv), &out)
        }
    }
}

// ---------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------

fn load_file_cfg(path: &Path) -> Result<FileCfg> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("bad config {}: {e}", path.display())))
}

fn init_threads(requested: Option<usize>) -> Result<()> {
    let n = match requested {
        Some(n) => Some(n),
        None => match std::env::var("HRG_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|e| {
                Error::config(format!("HRG_THREADS must be an integer, got '{v}': {e}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("thread count must be at least 1"));
        }
        // A second initialization in the same process is harmless: the
        // first pool wins and results are thread-count independent anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn emit(table: &Table, format: Format, out: &Option<PathBuf>) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => table.write_csv(&mut buf),
        Format::Json => table.write_json(&mut buf),
    }
    .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
    write_bytes(&buf, out)
}

fn write_bytes(buf: &[u8], out: &Option<PathBuf>) -> Result<()> {
    match out {
        None => std::io::stdout()
            .write_all(buf)
            .map_err(|e| Error::config(format!("cannot write to stdout: {e}"))),
        Some(p) => std::fs::write(p, buf)
            .map_err(|e| Error::config(format!("cannot write {}: {e}", p.display()))),
    }
}

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    if t.is_empty() {
        return Ok(Vec::new());
    }
    t.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("bad number '{tok}' in list: {e}")))
        })
        .collect()
}

fn parse_u32_list(text: &str) -> Result<Vec<u32>> {
    let t = text.trim();
    if t.is_empty() {
        return Ok(Vec::new());
    }
    t.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .map_err(|e| Error::config(format!("bad integer '{tok}' in list: {e}")))
        })
        .collect()
}

fn list_f64(flag: &Option<String>, file: Option<&Vec<f64>>, default: &[f64]) -> Result<Vec<f64>> {
    match flag {
        Some(text) => parse_f64_list(text),
        None => Ok(file.cloned().unwrap_or_else(|| default.to_vec())),
    }
}

fn list_u32(flag: &Option<String>, file: Option<&Vec<u32>>, default: &[u32]) -> Result<Vec<u32>> {
    match flag {
        Some(text) => parse_u32_list(text),
        None => Ok(file.cloned().unwrap_or_else(|| default.to_vec())),
    }
}

fn resolve_bc(flag: Option<BcArg>, file: &Option<String>) -> Result<Bc> {
    if let Some(b) = flag {
        return Ok(match b {
            BcArg::Periodic => Bc::Periodic,
            BcArg::Free => Bc::Free,
        });
    }
    match file.as_deref() {
        None => Ok(Bc::Periodic),
        Some(s) if s.eq_ignore_ascii_case("periodic") => Ok(Bc::Periodic),
        Some(s) if s.eq_ignore_ascii_case("free") => Ok(Bc::Free),
        Some(other) => Err(Error::config(format!(
            "unknown boundary condition '{other}' (expected periodic or free)"
        ))),
    }
}

fn bc_name(bc: Bc) -> &'static str {
    match bc {
        Bc::Periodic => "periodic",
        Bc::Free => "free",
    }
}

fn resolve_shape(
    args: &ShapeArgs,
    file: &FileCfg,
    levels_default: u32,
) -> Result<(Shape, u32)> {
    let d = pick(args.d, file.d, 4);
    let l = pick(args.l, file.l, 2);
    let n = pick(args.levels, file.levels, levels_default);
    let comps = pick(args.comps, file.n, 1);
    let bc = resolve_bc(args.bc, &file.bc)?;
    Ok((Shape::new(d, l, n, bc)?, comps))
}

fn coords_string(shape: &Shape, x: hrg_core::lattice::Site) -> String {
    shape
        .coords(x)
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

fn cmd_verify(args: &VerifyArgs, format: Format, out: &Option<PathBuf>) -> Result<()> {
    let mut checks: Vec<(&'static str, std::result::Result<(), String>)> = Vec::new();
    checks.push(("rng-determinism", check_rng()));
    checks.push(("resolvent-identity", check_resolvent()));
    checks.push(("level-sums-and-susceptibility", check_level_sums()));
    checks.push(("free-bc-zero-mode", check_zero_mode(args.inject_bad_q)));
    checks.push(("profile-closed-forms", check_profiles()));
    checks.push(("scale-consistency", check_scales()));
    checks.push(("coupling-flow-bounds", check_flow()));

    let config = json!({ "inject_bad_q": args.inject_bad_q });
    let mut meta = Meta::new("verify", 0, config);
    let failures = checks.iter().filter(|(_, r)| r.is_err()).count();
    meta.push_extra("checks", checks.len().to_string());
    meta.push_extra("failures", failures.to_string());
    let mut table = Table::new(meta, &["check", "status", "detail"]);
    for (name, result) in &checks {
        match result {
            Ok(()) => table.push(vec![
                Cell::S(name.to_string()),
                Cell::S("ok".into()),
                Cell::S(String::new()),
            ]),
            Err(detail) => table.push(vec![
                Cell::S(name.to_string()),
                Cell::S("FAIL".into()),
                Cell::S(detail.replace([',', '\n'], ";")),
            ]),
        }
    }
    emit(&table, format, out)?;
    if failures > 0 {
        let names: Vec<&str> = checks
            .iter()
            .filter(|(_, r)| r.is_err())
            .map(|(n, _)| *n)
            .collect();
        return Err(Error::invariant(format!(
            "{failures} of {} checks failed: {}",
            checks.len(),
            names.join(", ")
        )));
    }
    Ok(())
}

fn check_rng() -> std::result::Result<(), String> {
    let key = rng::stream_key(&[7, 11]);
    let mut a = rng::Stream::new(key);
    for ctr in 1..=16u64 {
        let direct = rng::word_at(key, ctr);
        let streamed = a.next_u64();
        if direct != streamed {
            return Err(format!(
                "stream and counter access disagree at counter {ctr}: {streamed} vs {direct}"
            ));
        }
    }
    let mut b = rng::Stream::from_parts(&[7, 11]);
    for _ in 0..4 {
        let u = b.next_uniform();
        if !(0.0..1.0).contains(&u) {
            return Err(format!("uniform draw {u} outside [0, 1)"));
        }
    }
    let (z1, z2) = rng::normal_pair_at(key, 0);
    if !z1.is_finite() || !z2.is_finite() {
        return Err(format!("non-finite normal pair ({z1}, {z2})"));
    }
    Ok(())
}

fn check_resolvent() -> std::result::Result<(), String> {
    use nalgebra::DMatrix;
    for (d, l, n) in [(4u32, 2u32, 2u32), (5, 2, 2)] {
        for bc in [Bc::Periodic, Bc::Free] {
            let shape = Shape::new(d, l, n, bc).map_err(|e| e.to_string())?;
            for a in [0.1, shape.lpow(-2 * n as i64)] {
                let v = shape.volume() as usize;
                let lap = covariance::laplacian(&shape).map_err(|e| e.to_string())?;
                let green = covariance::green_matrix(&shape, a).map_err(|e| e.to_string())?;
                let m = lap + DMatrix::<f64>::identity(v, v) * a;
                let err = ((m * green) - DMatrix::<f64>::identity(v, v)).abs().max();
                if err >= 1e-10 {
                    return Err(format!(
                        "resolvent residual {err:.3e} for d={d} L={l} N={n} {bc} a={a}"
                    ));
                }
            }
        }
    }
    Ok(())
}

fn check_level_sums() -> std::result::Result<(), String> {
    for bc in [Bc::Periodic, Bc::Free] {
        let shape = Shape::new(4, 2, 4, bc).map_err(|e| e.to_string())?;
        for a in [0.01, 0.05, 0.1, 0.5, 1.0, shape.lpow(-8)] {
            for j in 1..=shape.levels {
                let sum = covariance::class_weighted_sum(&shape, |jxy| {
                    covariance::c_level(&shape, a, j, jxy).unwrap_or(f64::NAN)
                });
                if !(sum.abs() < 1e-12) {
                    return Err(format!(
                        "per-level covariance sum {sum:.3e} != 0 at j={j} a={a} {bc}"
                    ));
                }
            }
        }
        if bc == Bc::Periodic {
            for a in [0.01, 0.05, 0.1, 0.5, 1.0] {
                let chi = covariance::susceptibility(&shape, a).map_err(|e| e.to_string())?;
                let rel = (chi - 1.0 / a).abs() * a;
                if !(rel < 1e-12) {
                    return Err(format!(
                        "susceptibility {chi} differs from 1/a at a={a} (rel {rel:.3e})"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The free-boundary zero mode must carry the spectral constant `q`; the
/// expected value is recomputed here from an explicit geometric series so
/// a corrupted constant is pinpointed by this check alone.
fn check_zero_mode(inject_bad_q: bool) -> std::result::Result<(), String> {
    for (d, l, n) in [(4u32, 2u32, 3u32), (5, 2, 2)] {
        let shape = Shape::new(d, l, n, Bc::Free).map_err(|e| e.to_string())?;
        let ld = (l as f64).powi(-(d as i32));
        let mut q = (1.0 - ld) / (1.0 - ld * (l as f64).powi(-2));
        if inject_bad_q {
            q *= 1.0 + 1e-3;
        }
        for a in [0.1, 0.01] {
            let a_eff = covariance::zero_mode_mass(&shape, a);
            let expected = a + q * shape.lpow(-2 * n as i64);
            let rel = (a_eff - expected).abs() / expected.abs();
            if !(rel < 1e-12) {
                return Err(format!(
                    "zero-mode mass {a_eff} != a + q L^-2N = {expected} at d={d} L={l} a={a} (rel {rel:.3e})"
                ));
            }
            let chi = covariance::susceptibility(&shape, a).map_err(|e| e.to_string())?;
            let rel = (chi - 1.0 / a_eff).abs() * a_eff;
            if !(rel < 1e-12) {
                return Err(format!(
                    "free-boundary susceptibility {chi} != 1/a_eff at a={a} (rel {rel:.3e})"
                ));
            }
        }
    }
    Ok(())
}

fn check_profiles() -> std::result::Result<(), String> {
    for k in [0.5, 1.0, 1.5, 2.5] {
        let series = profiles::ik(k, 0.0).map_err(|e| e.to_string())?;
        let closed = profiles::ik_zero_closed(k).map_err(|e| e.to_string())?;
        let rel = (series - closed).abs() / closed.abs();
        if !(rel < 1e-9) {
            return Err(format!(
                "I_k(0) mismatch at k={k}: series {series} vs closed form {closed}"
            ));
        }
    }
    for n in [1u32, 2, 3] {
        let mut prev = f64::INFINITY;
        for s in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let f = profiles::f_profile(n, s).map_err(|e| e.to_string())?;
            if !(f > 0.0 && f < prev) {
                return Err(format!(
                    "profile f_{n} not positive-decreasing at s={s}: {f} (prev {prev})"
                ));
            }
            prev = f;
        }
    }
    Ok(())
}

fn check_scales() -> std::result::Result<(), String> {
    let shape = Shape::new(4, 2, 8, Bc::Periodic).map_err(|e| e.to_string())?;
    let sc = ScaleParams::new(shape, 1, 0.05).map_err(|e| e.to_string())?;
    if !(sc.window_w() > 0.0 && sc.shift_v() > 0.0 && sc.large_field_h() > 0.0) {
        return Err("window, shift, or large-field scale not positive".into());
    }
    if !(sc.nu_c() < 0.0) {
        return Err(format!("critical point {} not below zero coupling shift", sc.nu_c()));
    }
    for s in [-2.0, 0.0, 2.0] {
        let mass = sc.mass_window(s);
        if !sc.in_critical_interval(mass) {
            return Err(format!("window mass {mass} at s={s} leaves the critical interval"));
        }
    }
    for jxy in [1u32, 4, 8] {
        let p = sc.predict_plateau(jxy, 0.0).map_err(|e| e.to_string())?;
        let rel = (p.total - (p.decay + p.plateau)).abs() / p.total.abs();
        if !(rel < 1e-12) {
            return Err(format!(
                "prediction total {} != decay {} + plateau {} at jxy={jxy}",
                p.total, p.decay, p.plateau
            ));
        }
    }
    let chi = sc.chi_plateau(0.0).map_err(|e| e.to_string())?;
    if !(chi.is_finite() && chi > 0.0) {
        return Err(format!("plateau susceptibility {chi} not positive"));
    }
    Ok(())
}

fn check_flow() -> std::result::Result<(), String> {
    let (g0, b, jmax) = (0.05, 8.4375, 64u32);
    let states = flow::gtilde_flow(g0, 0.0, 4, 2, b, jmax).map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    for st in &states {
        if !(st.gtilde > 0.0 && st.gtilde < prev) {
            return Err(format!("coupling not strictly decreasing at j={}", st.j));
        }
        if !(st.beta > 0.0 && st.beta <= b * (1.0 + 1e-12)) {
            return Err(format!("step coefficient {} outside (0, B] at j={}", st.beta, st.j));
        }
        prev = st.gtilde;
    }
    let last = states.last().expect("nonempty flow").gtilde;
    let j = jmax as f64;
    let lower = g0 / (1.0 + 2.0 * b * g0 * j);
    let upper = 1.0 / (1.0 / g0 + states[0].beta * j);
    if !(last >= lower && last <= upper) {
        return Err(format!(
            "terminal coupling {last} outside the two-sided band [{lower}, {upper}]"
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------
// green
// ---------------------------------------------------------------------

fn cmd_green(
    args: &GreenArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let (shape, _) = resolve_shape(&args.shape, file, 6)?;
    let mass = pick(args.mass, file.mass, shape.lpow(-2 * shape.levels as i64));
    covariance::admissible_mass(&shape, mass)?;
    let flipped = Shape::new(
        shape.d,
        shape.l,
        shape.levels,
        match shape.bc {
            Bc::Periodic => Bc::Free,
            Bc::Free => Bc::Periodic,
        },
    )?;
    let (periodic, free) = match shape.bc {
        Bc::Periodic => (&shape, &flipped),
        Bc::Free => (&flipped, &shape),
    };

    let config = json!({
        "d": shape.d, "L": shape.l, "N": shape.levels, "bc": bc_name(shape.bc),
        "mass": mass,
    });
    let mut meta = Meta::new("green", seed, config);
    let chi = covariance::susceptibility(&shape, mass)?;
    let a_eff = covariance::zero_mode_mass(&shape, mass);
    meta.push_extra("chi", g17(chi));
    meta.push_extra("one-over-a-eff", g17(1.0 / a_eff));
    let mut table = Table::new(
        meta,
        &["jxy", "norm", "class_size", "green", "cum_class_sum", "bc_diff"],
    );
    let mut cum = 0.0;
    for jxy in 0..=shape.levels {
        let g = covariance::green(&shape, mass, jxy)?;
        let gp = covariance::green(periodic, mass, jxy)?;
        let gf = covariance::green(free, mass, jxy)?;
        let size = shape.class_size(jxy) as f64;
        cum += size * g;
        table.push(vec![
            Cell::I(jxy as i64),
            Cell::F(shape.euclid_norm(shape.class_representative(jxy))),
            Cell::F(size),
            Cell::F(g),
            Cell::F(cum),
            Cell::F(gp - gf),
        ]);
    }
    emit(&table, format, out)
}

// ---------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------

fn cmd_profile(
    args: &ProfileArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let n_list = list_u32(&args.n_list, file.n_list.as_ref(), &[1, 2])?;
    let s_list = list_f64(
        &args.s_list,
        file.s_list.as_ref(),
        &[-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0],
    )?;
    let config = json!({ "n": n_list, "s": s_list });
    let meta = Meta::new("profile", seed, config);
    let mut table = Table::new(meta, &["n", "s", "f", "m2"]);
    for &n in &n_list {
        if n == 0 {
            return Err(Error::config("component count n must be >= 1"));
        }
        for &s in &s_list {
            table.push(vec![
                Cell::I(n as i64),
                Cell::F(s),
                Cell::F(profiles::f_profile(n, s)?),
                Cell::F(profiles::sigma_moment(n, 2, s)?),
            ]);
        }
    }
    emit(&table, format, out)
}

// ---------------------------------------------------------------------
// scales
// ---------------------------------------------------------------------

fn cmd_scales(
    args: &ScalesArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let (shape, comps) = resolve_shape(&args.shape, file, 8)?;
    let g = pick(args.g, file.g, 0.05);
    let sc = ScaleParams::new(shape.clone(), comps, g)?;
    let config = json!({
        "d": shape.d, "L": shape.l, "N": shape.levels, "bc": bc_name(shape.bc),
        "n": comps, "g": g,
    });
    let meta = Meta::new("scales", seed, config);
    let mut table = Table::new(meta, &["quantity", "value"]);
    let (lo, hi) = sc.critical_interval();
    let rows: Vec<(&str, f64)> = vec![
        ("b_const", sc.b_const()),
        ("gamma_hat", sc.gamma_hat()),
        ("theta_hat", sc.theta_hat()),
        ("g_inf", sc.g_inf()),
        ("amp", sc.amp()),
        ("nu_c", sc.nu_c()),
        ("nu_eff", sc.nu_eff()),
        ("window_w", sc.window_w()),
        ("shift_v", sc.shift_v()),
        ("large_field_h", sc.large_field_h()),
        ("gaussian_l", sc.gaussian_l()),
        ("critical_lo", lo),
        ("critical_hi", hi),
        ("crossover_norm", sc.crossover_norm()),
        ("mass_window_s0", sc.mass_window(0.0)),
        ("mass_gaussian_s1", sc.mass_gaussian(1.0)),
    ];
    for (name, value) in rows {
        table.push(vec![Cell::S(name.to_string()), Cell::F(value)]);
    }
    emit(&table, format, out)
}

// ---------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------

fn cmd_flow(
    args: &FlowArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let d = pick(args.shape.d, file.d, 4);
    let l = pick(args.shape.l, file.l, 2);
    let comps = pick(args.shape.comps, file.n, 1);
    let g0 = pick(args.g0, file.g0, 0.1);
    let atilde = pick(args.atilde, file.atilde, 0.0);
    let jmax = pick(args.jmax, file.jmax, 32);
    let b = match args.b.or(file.b) {
        Some(b) => b,
        None => ScaleParams::new(Shape::new(d, l, 1, Bc::Periodic)?, comps, g0)?.b_const(),
    };
    let mut states = flow::gtilde_flow(g0, atilde, d, l, b, jmax)?;

    // Optional vacuum-energy column: partial sums of the pair covariance
    // for a concrete box, attached when a depth is requested.
    let levels = args.shape.levels.or(file.levels);
    let mut pair_meta = json!(null);
    if let Some(n) = levels {
        let bc = resolve_bc(args.shape.bc, &file.bc)?;
        let shape = Shape::new(d, l, n, bc)?;
        let mass = pick(args.mass, file.mass, shape.lpow(-2 * n as i64));
        let jxy = pick(args.jxy, file.jxy, 1);
        if jxy > n {
            return Err(Error::config(format!(
                "coalescence scale {jxy} exceeds depth {n}"
            )));
        }
        let x = shape.class_representative(jxy);
        flow::attach_u_ox(&mut states, &shape, mass, x, |_| 0.0)?;
        pair_meta = json!({ "N": n, "bc": bc_name(bc), "mass": mass, "jxy": jxy });
    }

    let config = json!({
        "d": d, "L": l, "n": comps, "g0": g0, "atilde": atilde, "jmax": jmax, "b": b,
        "pair": pair_meta,
    });
    let mut meta = Meta::new("flow", seed, config);
    meta.push_extra("b", g17(b));
    let mut table = Table::new(
        meta,
        &["j", "gtilde", "beta", "vartheta", "atilde", "mass_scale", "u_ox_partial"],
    );
    for st in &states {
        table.push(vec![
            Cell::I(st.j as i64),
            Cell::F(st.gtilde),
            Cell::F(st.beta),
            Cell::F(st.vartheta),
            Cell::F(st.atilde),
            Cell::I(st.mass_scale.map_or(-1, |j| j as i64)),
            Cell::F(st.u_ox),
        ]);
    }
    emit(&table, format, out)
}

// ---------------------------------------------------------------------
// rg-exact and plateau share their scan resolution
// ---------------------------------------------------------------------

struct ScanSetup {
    shape: Shape,
    comps: u32,
    g: f64,
    nu_star: f64,
    regime: Regime,
    s_list: Vec<f64>,
    classes: Vec<u32>,
    cfg: RgConfig,
    scales: ScaleParams,
    tune: Option<TuneReport>,
    config: serde_json::Value,
}

fn resolve_regime(flag: Option<RegimeArg>, file: &Option<String>) -> Result<Regime> {
    if let Some(r) = flag {
        return Ok(match r {
            RegimeArg::Window => Regime::Window,
            RegimeArg::Gaussian => Regime::Gaussian,
        });
    }
    match file.as_deref() {
        None => Ok(Regime::Window),
        Some(s) if s.eq_ignore_ascii_case("window") => Ok(Regime::Window),
        Some(s) if s.eq_ignore_ascii_case("gaussian") => Ok(Regime::Gaussian),
        Some(other) => Err(Error::config(format!(
            "unknown regime '{other}' (expected window or gaussian)"
        ))),
    }
}

fn regime_name(regime: Regime) -> &'static str {
    match regime {
        Regime::Window => "window",
        Regime::Gaussian => "gaussian",
    }
}

/// Map a window coordinate to the quadratic coefficient and covariance
/// mass used at that scan point (mirrors the scan's own convention).
fn regime_point(scales: &ScaleParams, regime: Regime, nu_star: f64, s: f64) -> (f64, f64) {
    match regime {
        Regime::Window => (nu_star + s * scales.window_w(), scales.mass_window(s)),
        Regime::Gaussian => (nu_star + s * scales.shift_v(), scales.mass_gaussian(s)),
    }
}

fn resolve_scan(
    args: &RgArgs,
    file: &FileCfg,
    seed: u64,
    default_classes: &[u32],
) -> Result<ScanSetup> {
    let (shape, comps) = resolve_shape(&args.shape, file, 3)?;
    if comps != 1 {
        return Err(Error::config(
            "the block-spin recursion commands are scalar; use --n 1",
        ));
    }
    let g = pick(args.g, file.g, 0.05);
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::config(format!("coupling g must be >= 0, got {g}")));
    }
    let regime = resolve_regime(args.regime, &file.regime)?;
    let s_list = list_f64(&args.s_list, file.s_list.as_ref(), &[0.0])?;
    let classes = list_u32(&args.classes, file.classes.as_ref(), default_classes)?;
    for &c in &classes {
        if c > shape.levels {
            return Err(Error::config(format!(
                "distance class {c} exceeds depth {}",
                shape.levels
            )));
        }
    }
    let samples = pick(args.samples, file.samples, 20_000);
    let mut cfg = RgConfig::mc(samples, seed);
    cfg.grid_points = pick(args.grid_points, file.grid_points, cfg.grid_points);
    cfg.width_sigmas = pick(args.width_sigmas, file.width_sigmas, cfg.width_sigmas);
    cfg.replicas = pick(args.replicas, file.replicas, cfg.replicas);
    if args.no_antithetic {
        cfg.antithetic = false;
    }
    // The coupling enters the scale formulas only through logarithms; a
    // free model borrows a tiny value so the window widths stay defined.
    let scales = ScaleParams::new(shape.clone(), comps, if g > 0.0 { g } else { 1e-4 })?;
    let (nu_star, tune) = if args.tune {
        let report = rg::tune_nu(
            &shape,
            comps,
            g,
            scales.mass_window(0.0),
            TuneTarget::WindowMid,
            None,
            &cfg,
        )?;
        (report.nu_star, Some(report))
    } else {
        (pick(args.nu, file.nu, scales.nu_c()), None)
    };
    let config = json!({
        "d": shape.d, "L": shape.l, "N": shape.levels, "bc": bc_name(shape.bc),
        "n": comps, "g": g, "nu": nu_star, "tuned": tune.is_some(),
        "regime": regime_name(regime), "s": s_list, "classes": classes,
        "samples": samples, "grid_points": cfg.grid_points,
        "width_sigmas": cfg.width_sigmas, "replicas": cfg.replicas,
        "antithetic": cfg.antithetic, "seed": seed,
    });
    Ok(ScanSetup {
        shape,
        comps,
        g,
        nu_star,
        regime,
        s_list,
        classes,
        cfg,
        scales,
        tune,
        config,
    })
}

fn scan_meta(command: &str, seed: u64, setup: &ScanSetup) -> Meta {
    let mut meta = Meta::new(command, seed, setup.config.clone());
    if let Some(report) = &setup.tune {
        meta.push_extra("tuned-nu", g17(report.nu_star));
        meta.push_extra("tune-iterations", report.iterations.to_string());
        meta.push_extra("tune-target", g17(report.target));
        meta.push_extra("tune-value", g17(report.value));
    }
    meta
}

fn run_scan(setup: &ScanSetup) -> Result<rg::ScanResult> {
    if setup.s_list.is_empty() || setup.classes.is_empty() {
        return Ok(rg::ScanResult {
            points: Vec::new(),
            chi: Vec::new(),
        });
    }
    rg::two_point_scan(
        &setup.shape,
        setup.comps,
        setup.g,
        setup.nu_star,
        setup.regime,
        &setup.s_list,
        &setup.classes,
        &setup.cfg,
    )
}

fn cmd_rg(
    args: &RgArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let setup = resolve_scan(args, file, seed, &[1])?;
    if let Some(path) = &args.dump_effective {
        dump_effective(&setup, seed, path)?;
    }
    let scan = run_scan(&setup)?;
    let mut meta = scan_meta("rg-exact", seed, &setup);
    for cp in &scan.chi {
        meta.push_extra(
            &format!("chi[s={}]", g17(cp.s)),
            format!("{},{}", g17(cp.mean), g17(cp.sem)),
        );
    }
    let mut table = Table::new(
        meta,
        &["s", "nu", "mass", "jxy", "norm", "green", "green_err"],
    );
    for p in &scan.points {
        table.push(vec![
            Cell::F(p.s),
            Cell::F(p.nu),
            Cell::F(p.mass),
            Cell::I(p.coalescence as i64),
            Cell::F(setup
                .shape
                .euclid_norm(setup.shape.class_representative(p.coalescence))),
            Cell::F(p.mean),
            Cell::F(p.sem),
        ]);
    }
    emit(&table, format, out)
}

/// Write the per-scale effective integrand grids for the first scan
/// point: field value, bulk weight, one- and two-insertion values, and
/// the accumulated log-normalization.
fn dump_effective(setup: &ScanSetup, seed: u64, path: &Path) -> Result<()> {
    let mut meta = Meta::new("rg-exact.dump-effective", seed, setup.config.clone());
    let first_class = setup.classes.first().copied();
    if let Some(c) = first_class {
        meta.push_extra("pair-class", c.to_string());
    }
    let mut table = Table::new(
        meta,
        &["scale", "phi", "z_empty", "z_o", "z_x", "z_ox", "log_norm"],
    );
    if let Some(&s0) = setup.s_list.first() {
        let (nu, mass) = regime_point(&setup.scales, setup.regime, setup.nu_star, s0);
        let params = ModelParams {
            shape: setup.shape.clone(),
            comps: 1,
            g: setup.g,
            nu,
            mass,
        };
        let specs: Vec<ChannelSpec> = setup
            .classes
            .iter()
            .map(|&c| ChannelSpec::Pair { coalescence: c })
            .collect();
        let widths = rg::width_schedule(&params, &setup.cfg)?;
        let mut z = rg::init_z0(
            &params,
            &specs,
            rg::Grid::symmetric(widths[0], setup.cfg.grid_points)?,
        )?;
        push_dump_rows(&mut table, &z, first_class);
        for scale in 1..=params.shape.levels {
            let law = rg::FluctuationLaw::new(&params.shape, params.mass, scale)?;
            let draws = rg::FluctDraws::for_scale(&law, &setup.cfg, 0)?;
            let grid = rg::Grid::symmetric(widths[scale as usize], setup.cfg.grid_points)?;
            z = rg::rg_step(&z, &law, &draws, &setup.cfg, grid)?;
            push_dump_rows(&mut table, &z, first_class);
        }
    }
    let mut buf = Vec::new();
    table
        .write_csv(&mut buf)
        .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
    std::fs::write(path, &buf)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))
}

fn push_dump_rows(table: &mut Table, z: &rg::EffectiveZ, first_class: Option<u32>) {
    let bulk = z.bulk();
    let ratio = first_class.and_then(|c| z.pair_ratio(c));
    for i in 0..z.grid.len {
        let phi = z.grid.value(i);
        let z_empty = bulk[i];
        // One-insertion values equal phi * Z_empty identically (the
        // fluctuations are exchangeable and sum to zero), so both
        // single-site columns carry that product; the pair column is NaN
        // until its channel is born.
        let z_ox = ratio.map_or(f64::NAN, |r| r[i] * z_empty);
        table.push(vec![
            Cell::I(z.scale as i64),
            Cell::F(phi),
            Cell::F(z_empty),
            Cell::F(phi * z_empty),
            Cell::F(phi * z_empty),
            Cell::F(z_ox),
            Cell::F(z.log_norm),
        ]);
    }
}

// ---------------------------------------------------------------------
// mcmc
// ---------------------------------------------------------------------

fn cmd_mcmc(
    args: &McmcArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let (shape, comps) = resolve_shape(&args.shape, file, 3)?;
    let g = pick(args.g, file.g, 0.05);
    let nu = match args.nu.or(file.nu) {
        Some(nu) => nu,
        None if g > 0.0 => ScaleParams::new(shape.clone(), comps, g)?.nu_c(),
        None => 0.1,
    };
    let sweeps = pick(args.sweeps, file.sweeps, 20_000);
    let burnin = pick(args.burnin, file.burnin, 2_000);
    let mut cfg = mcmc::MarkovConfig::new(sweeps, burnin, seed);
    cfg.stride = pick(args.stride, file.stride, cfg.stride);
    cfg.width = pick(args.width, file.width, cfg.width);
    cfg.batches = pick(args.batches, file.batches, cfg.batches);

    let run = mcmc::run_chain(&shape, comps, g, nu, &cfg)?;

    let config = json!({
        "d": shape.d, "L": shape.l, "N": shape.levels, "bc": bc_name(shape.bc),
        "n": comps, "g": g, "nu": nu, "sweeps": sweeps, "burnin": burnin,
        "stride": cfg.stride, "width": cfg.width, "batches": cfg.batches, "seed": seed,
    });
    let mut meta = Meta::new("mcmc", seed, config);
    meta.push_extra("chi", g17(run.chi.value));
    meta.push_extra("chi_err", g17(run.chi.sem));
    meta.push_extra("acceptance", g17(run.acceptance));
    meta.push_extra("tau_chi", g17(run.tau_chi));
    meta.push_extra("width", g17(run.width));
    meta.push_extra("measurements", run.measurements.to_string());
    meta.push_extra("sweeps", sweeps.to_string());

    let mut table = Table::new(
        meta,
        &["x", "jxy", "norm", "class_size", "green", "green_err"],
    );
    for (j, est) in run.green.iter().enumerate() {
        let jxy = j as u32;
        let x = shape.class_representative(jxy);
        table.push(vec![
            Cell::S(coords_string(&shape, x)),
            Cell::I(jxy as i64),
            Cell::F(shape.euclid_norm(x)),
            Cell::F(shape.class_size(jxy) as f64),
            Cell::F(est.value),
            Cell::F(est.sem),
        ]);
    }
    emit(&table, format, out)
}

// ---------------------------------------------------------------------
// plateau
// ---------------------------------------------------------------------

fn cmd_plateau(
    args: &PlateauArgs,
    file: &FileCfg,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let default_classes: Vec<u32> = {
        // The joined table is most useful across every distance class.
        let levels = pick(args.rg.shape.levels, file.levels, 3);
        (1..=levels).collect()
    };
    let setup = resolve_scan(&args.rg, file, seed, &default_classes)?;
    if let Some(path) = &args.rg.dump_effective {
        dump_effective(&setup, seed, path)?;
    }
    let scan = run_scan(&setup)?;

    // Optional direct-sampling overlay: one Metropolis chain per scan
    // coordinate, reusing the scan's own coefficient mapping.
    let mut overlay: Vec<(f64, mcmc::MarkovRun)> = Vec::new();
    if args.with_mcmc {
        let sweeps = pick(args.sweeps, file.sweeps, 20_000);
        let burnin = pick(args.burnin, file.burnin, 2_000);
        let cfg = mcmc::MarkovConfig::new(sweeps, burnin, seed);
        for cp in &scan.chi {
            let run = mcmc::run_chain(&setup.shape, setup.comps, setup.g, cp.nu, &cfg)?;
            overlay.push((cp.s, run));
        }
    }

    let mut meta = scan_meta("plateau", seed, &setup);
    meta.push_extra("with-mcmc", args.with_mcmc.to_string());
    for cp in &scan.chi {
        meta.push_extra(
            &format!("chi[s={}]", g17(cp.s)),
            format!("{},{}", g17(cp.mean), g17(cp.sem)),
        );
    }
    let mut columns = vec![
        "x",
        "jxy",
        "norm",
        "s",
        "nu",
        "mass",
        "green",
        "green_err",
        "pred_decay",
        "pred_plateau",
        "pred_total",
        "ratio_plateau",
        "ratio_total",
    ];
    if args.with_mcmc {
        columns.push("mcmc_green");
        columns.push("mcmc_err");
    }
    let mut table = Table::new(meta, &columns);
    for p in &scan.points {
        let pred = match setup.regime {
            Regime::Window => setup.scales.predict_plateau(p.coalescence, p.s)?,
            Regime::Gaussian => setup.scales.predict_gaussian(p.coalescence, p.s)?,
        };
        let x = setup.shape.class_representative(p.coalescence);
        let mut row = vec![
            Cell::S(coords_string(&setup.shape, x)),
            Cell::I(p.coalescence as i64),
            Cell::F(setup.shape.euclid_norm(x)),
            Cell::F(p.s),
            Cell::F(p.nu),
            Cell::F(p.mass),
            Cell::F(p.mean),
            Cell::F(p.sem),
            Cell::F(pred.decay),
            Cell::F(pred.plateau),
            Cell::F(pred.total),
            Cell::F(p.mean / pred.plateau),
            Cell::F(p.mean / pred.total),
        ];
        if args.with_mcmc {
            let chain = overlay.iter().find(|(s, _)| *s == p.s).map(|(_, r)| r);
            let est = chain.and_then(|r| r.green.get(p.coalescence as usize));
            row.push(Cell::F(est.map_or(f64::NAN, |e| e.value)));
            row.push(Cell::F(est.map_or(f64::NAN, |e| e.sem)));
        }
        table.push(row);
    }
    emit(&table, format, out)
}
