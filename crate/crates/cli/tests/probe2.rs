//! Scratch: grid- and sample-count scaling of the pair-transport bias.

use hrg_core::covariance;
use hrg_core::lattice::{Bc, Shape};
use hrg_core::rg::{self, ChannelSpec, ModelParams, RgConfig};

#[test]
fn bias_scaling() {
    let shape = Shape::new(4, 2, 3, Bc::Periodic).unwrap();
    let a = 2f64.powi(-6);
    let params = ModelParams {
        shape: shape.clone(),
        comps: 1,
        g: 0.0,
        nu: a,
        mass: a,
    };
    let specs = [ChannelSpec::Pair { coalescence: 3 }];
    let oracle = covariance::green(&shape, a, 3).unwrap();
    println!("kernel class 3: {oracle:.10e}");
    for samples in [20_000u32, 80_000] {
        for grid in [161usize, 321, 641, 1281] {
            let mut cfg = RgConfig::mc(samples, 17);
            cfg.grid_points = grid;
            let mut vals = Vec::new();
            for r in 0..4u64 {
                let z = rg::run_flow(&params, &specs, &cfg, r).unwrap();
                let zm = rg::zero_mode_integrate(&z, Bc::Periodic).unwrap();
                vals.push(zm.pairs[0].value);
            }
            let m = vals.iter().sum::<f64>() / 4.0;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0).sqrt();
            println!(
                "samples {samples:6} grid {grid:5}: mean {m:.10e} rel-dev {:+.3e} sem {:.2e}  r0 {:+.3e}",
                (m - oracle) / oracle,
                sd / 2.0 / oracle.abs(),
                (vals[0] - oracle) / oracle,
            );
        }
    }
}
