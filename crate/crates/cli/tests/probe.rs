//! Scratch calibration runs (deleted before the suite is final).

use hrg_core::lattice::{Bc, Shape};
use hrg_core::mcmc::{self, MarkovConfig};
use hrg_core::profiles;
use hrg_core::rg::{
    self, ChannelSpec, ModelParams, RgConfig, TuneTarget,
};
use hrg_core::scales::ScaleParams;
use std::time::Instant;

fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Tune every replica to its curvature-zero point, reusing replica 0's
/// result to narrow the later brackets.
fn tune_replicas(
    shape: &Shape,
    g: f64,
    cfg: &RgConfig,
    replicas: u32,
) -> Vec<f64> {
    let scales = ScaleParams::new(shape.clone(), 1, g).unwrap();
    let w = scales.window_w();
    let nu_c = scales.nu_c();
    let mut out = Vec::new();
    for r in 0..replicas {
        let bracket = if out.is_empty() {
            (nu_c - 0.1 * nu_c.abs(), nu_c + 0.1 * nu_c.abs())
        } else {
            (out[0] - 30.0 * w, out[0] + 30.0 * w)
        };
        let t0 = Instant::now();
        let rep = rg::tune_nu_replica(
            shape,
            1,
            g,
            scales.mass_window(0.0),
            TuneTarget::Curvature(0.0),
            Some(bracket),
            cfg,
            r as u64,
        )
        .unwrap();
        println!(
            "  replica {r}: nu_hat = {:.12} offset/w = {:+.3} ({} evals, {:?})",
            rep.nu_star,
            (rep.nu_star - out.first().copied().unwrap_or(rep.nu_star)) / w,
            rep.evals.len(),
            t0.elapsed()
        );
        out.push(rep.nu_star);
    }
    out
}

#[test]
fn probe_curvature_tuned_plateau() {
    let g = 0.05;
    let cfg = RgConfig::mc(20_000, 23);
    let f0 = profiles::f_profile(1, 0.0).unwrap();

    for levels in [6u32, 8] {
        let shape = Shape::new(4, 2, levels, Bc::Periodic).unwrap();
        let scales = ScaleParams::new(shape.clone(), 1, g).unwrap();
        let w = scales.window_w();
        let h2 = scales.large_field_h().powi(2);
        println!(
            "N={levels}: nu_c={:.6} w={:.3e} v={:.3e} h^2={:.3e} chi_pred(0)={:.4e}",
            scales.nu_c(),
            w,
            scales.shift_v(),
            h2,
            scales.chi_plateau(0.0).unwrap()
        );
        let nu_hats = tune_replicas(&shape, g, &cfg, 4);

        let s_list: &[f64] = if levels == 6 {
            &[0.0]
        } else {
            &[-2.0, -1.0, 0.0, 1.0, 2.0, 4.0]
        };
        let classes = [levels - 1, levels];
        let specs: Vec<ChannelSpec> = classes
            .iter()
            .map(|&c| ChannelSpec::Pair { coalescence: c })
            .collect();
        let mut mean_plateau = Vec::new();
        let mut profile = Vec::new();
        for &s in s_list {
            let mut per_low = Vec::new();
            let mut per_high = Vec::new();
            let mut per_chi = Vec::new();
            let t0 = Instant::now();
            for (r, &nu_hat) in nu_hats.iter().enumerate() {
                let params = ModelParams {
                    shape: shape.clone(),
                    comps: 1,
                    g,
                    nu: nu_hat + s * w,
                    mass: scales.mass_window(s),
                };
                let z = rg::run_flow(&params, &specs, &cfg, r as u64).unwrap();
                let zm = rg::zero_mode_integrate(&z, Bc::Periodic).unwrap();
                per_low.push(zm.pairs[0].value);
                per_high.push(zm.pairs[1].value);
                per_chi.push(zm.chi);
            }
            let dec_low = scales.predict_plateau(classes[0], s).unwrap().decay;
            let dec_high = scales.predict_plateau(classes[1], s).unwrap().decay;
            let (glo, glo_sem) = mean_sem(&per_low);
            let (ghi, ghi_sem) = mean_sem(&per_high);
            let (chi, chi_sem) = mean_sem(&per_chi);
            let plat = ghi - dec_high;
            println!(
                "  s={s}: G({})={:.4e}+-{:.1e} G({})={:.4e}+-{:.1e} flat={:.3} plat/h2={:.4} f1(s)={:.4} chi={:.4e}+-{:.1e} ({:?})",
                classes[0], glo, glo_sem,
                classes[1], ghi, ghi_sem,
                glo / ghi,
                plat / h2,
                profiles::f_profile(1, s).unwrap(),
                chi, chi_sem,
                t0.elapsed()
            );
            println!(
                "    per-replica plat/h2: {:?}",
                per_high
                    .iter()
                    .map(|&v| ((v - dec_high) / h2 * 1e4).round() / 1e4)
                    .collect::<Vec<_>>()
            );
            mean_plateau.push(plat);
            profile.push(profiles::f_profile(1, s).unwrap());
        }
        if s_list.len() > 2 {
            println!("  pearson r = {:.6}", pearson(&mean_plateau, &profile));
        }

        if levels == 8 {
            // Gaussian-regime scan for the decay/no-plateau check.
            let classes: Vec<u32> = (1..=8).collect();
            let specs: Vec<ChannelSpec> = classes
                .iter()
                .map(|&c| ChannelSpec::Pair { coalescence: c })
                .collect();
            let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); classes.len()];
            let mut per_chi = Vec::new();
            let t0 = Instant::now();
            for (r, &nu_hat) in nu_hats.iter().enumerate() {
                let params = ModelParams {
                    shape: shape.clone(),
                    comps: 1,
                    g,
                    nu: nu_hat + 1.0 * scales.shift_v(),
                    mass: scales.mass_gaussian(1.0),
                };
                let z = rg::run_flow(&params, &specs, &cfg, r as u64).unwrap();
                let zm = rg::zero_mode_integrate(&z, Bc::Periodic).unwrap();
                for (k, p) in zm.pairs.iter().enumerate() {
                    per_class[k].push(p.value);
                }
                per_chi.push(zm.chi);
            }
            println!("  gaussian s=1 ({:?}):", t0.elapsed());
            let mut weighted = Vec::new();
            for (k, &c) in classes.iter().enumerate() {
                let (m, sem) = mean_sem(&per_class[k]);
                let wgt = shape.lpow(2 * (c as i64 - 1)) * m;
                println!(
                    "    class {c}: G={:.4e}+-{:.1e} |x|^2 G={:.4e}",
                    m, sem, wgt
                );
                weighted.push(wgt);
            }
            let maxw = weighted.iter().cloned().fold(f64::MIN, f64::max);
            let minw = weighted.iter().cloned().fold(f64::MAX, f64::min);
            let (chi, chi_sem) = mean_sem(&per_chi);
            println!(
                "    max/min = {:.3} chi = {:.5e}+-{:.1e} vs L^2N = {:.5e} flat(7/8) = {:.3}",
                maxw / minw,
                chi,
                chi_sem,
                2f64.powi(16),
                per_class[6].iter().sum::<f64>() / per_class[7].iter().sum::<f64>()
            );
        }
        let _ = f0;
    }
}

#[test]
fn probe_small_box_chain_vs_recursion() {
    let g = 0.05;
    let cfg = RgConfig::mc(20_000, 23);
    let shape = Shape::new(4, 2, 3, Bc::Periodic).unwrap();
    let scales = ScaleParams::new(shape.clone(), 1, g).unwrap();
    let nu_c = scales.nu_c();
    let t0 = Instant::now();
    let rep = rg::tune_nu_replica(
        &shape,
        1,
        g,
        scales.mass_window(0.0),
        TuneTarget::Curvature(0.0),
        Some((nu_c - 0.1 * nu_c.abs(), nu_c + 0.1 * nu_c.abs())),
        &cfg,
        0,
    )
    .unwrap();
    println!(
        "N=3 curvature tune: nu_hat = {:.10} ({} evals, {:?})",
        rep.nu_star,
        rep.evals.len(),
        t0.elapsed()
    );
    let nu_hat = rep.nu_star;

    // Recursion side with solo diagnostics per scale: evolve manually so
    // every scale's solo ratio is captured, across 8 replicas.
    let specs = [
        ChannelSpec::Solo,
        ChannelSpec::Pair { coalescence: 1 },
        ChannelSpec::Pair { coalescence: 2 },
        ChannelSpec::Pair { coalescence: 3 },
    ];
    let params = ModelParams {
        shape: shape.clone(),
        comps: 1,
        g,
        nu: nu_hat,
        mass: scales.mass_window(0.0),
    };
    let replicas = 8usize;
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); 3];
    // solo[scale][replica] = (grid phis, ratio, log_bulk)
    let mut solo: Vec<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> = vec![Vec::new(); 4];
    for r in 0..replicas {
        let widths = rg::width_schedule(&params, &cfg).unwrap();
        let mut z = rg::init_z0(
            &params,
            &specs,
            rg::Grid::symmetric(widths[0], cfg.grid_points).unwrap(),
        )
        .unwrap();
        for scale in 1..=3u32 {
            let law = rg::FluctuationLaw::new(&shape, params.mass, scale).unwrap();
            let draws = rg::FluctDraws::for_scale(&law, &cfg, r as u64).unwrap();
            let grid =
                rg::Grid::symmetric(widths[scale as usize], cfg.grid_points).unwrap();
            z = rg::rg_step(&z, &law, &draws, &cfg, grid).unwrap();
            let ratio = z
                .channels
                .iter()
                .find_map(|c| match c.spec {
                    ChannelSpec::Solo => c.ratio.clone(),
                    _ => None,
                })
                .unwrap();
            solo[scale as usize].push((z.grid.values(), ratio, z.log_bulk.clone()));
        }
        if r < 4 {
            let zm = rg::zero_mode_integrate(&z, Bc::Periodic).unwrap();
            for k in 0..3 {
                per_class[k].push(zm.pairs[k].value);
            }
        }
    }
    for scale in 1..=3usize {
        let reps = &solo[scale];
        let phis = &reps[0].0;
        let sup = reps
            .iter()
            .flat_map(|(_, _, lb)| lb.iter().cloned())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut worst = f64::MIN;
        let mut worst_x = 0.0;
        let mut max_pull = f64::MIN;
        for i in 0..phis.len() {
            // Only points carrying at least 1% of the sup weight in every
            // replica participate.
            if reps.iter().any(|(_, _, lb)| lb[i] < sup + (0.01f64).ln()) {
                continue;
            }
            let vals: Vec<f64> = reps.iter().map(|(_, ratio, _)| ratio[i]).collect();
            let (m, sem) = mean_sem(&vals);
            let dev = (m - phis[i]).abs();
            let pull = dev / (sem + 1e-13);
            if dev > worst {
                worst = dev;
                worst_x = phis[i];
            }
            max_pull = max_pull.max(pull);
        }
        println!(
            "  scale {scale}: worst |mean ratio - phi| = {:.3e} at phi={:.3}, max dev/sem = {:.2}",
            worst, worst_x, max_pull
        );
    }

    // Chain side.
    let t0 = Instant::now();
    let mc = MarkovConfig::new(60_000, 6_000, 91);
    let run = mcmc::run_chain(&shape, 1, g, nu_hat, &mc).unwrap();
    println!(
        "chain: acc={:.3} tau={:.1} measurements={} ({:?})",
        run.acceptance,
        run.tau_chi,
        run.measurements,
        t0.elapsed()
    );
    for (k, c) in [1u32, 2, 3].iter().enumerate() {
        let (m, sem) = mean_sem(&per_class[k]);
        let est = &run.green[*c as usize];
        let tol = (sem * sem + est.sem * est.sem).sqrt();
        println!(
            "  class {c}: rg {:.5e}+-{:.1e} chain {:.5e}+-{:.1e} pull={:+.2}",
            m,
            sem,
            est.value,
            est.sem,
            (m - est.value) / tol
        );
    }
    println!(
        "  chi: chain {:.4e}+-{:.1e}",
        run.chi.value, run.chi.sem
    );
}
