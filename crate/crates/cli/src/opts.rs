//! Command-line surface: flags, subcommands, and the JSON run-config
//! file. Every tunable is optional on the command line; missing values
//! fall back to the config file and then to built-in defaults, so flags
//! always win over the file.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "hrg",
    version,
    about = "Hierarchical |phi|^4 laboratory: kernels, scaling profiles, \
             coupling flows, block-spin recursion, and direct sampling."
)]
pub struct Cli {
    /// JSON run-configuration file; explicit flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: HRG_THREADS or all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BcArg {
    Periodic,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    /// Critical window: quadratic coefficient offsets in units of w_N.
    Window,
    /// Gaussian regime: offsets in units of v_N.
    Gaussian,
}

/// Lattice geometry flags shared by most commands.
#[derive(Debug, Clone, Args)]
pub struct ShapeArgs {
    /// Spatial dimension.
    #[arg(long)]
    pub d: Option<u32>,
    /// Block side length.
    #[arg(long = "L")]
    pub l: Option<u32>,
    /// Hierarchy depth (number of scales).
    #[arg(long = "N")]
    pub levels: Option<u32>,
    /// Boundary condition.
    #[arg(long, value_enum)]
    pub bc: Option<BcArg>,
    /// Spin components.
    #[arg(long = "n")]
    pub comps: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the built-in identity suites (kernels, profiles, scales, flow).
    Verify(VerifyArgs),
    /// Tabulate the finite-volume two-point kernel by distance class.
    Green(GreenArgs),
    /// Tabulate the universal scaling profiles f_n(s).
    Profile(ProfileArgs),
    /// Emit every derived scaling constant for a model as JSON.
    Scales(ScalesArgs),
    /// Iterate the perturbative coupling recursion.
    Flow(FlowArgs),
    /// Run the block-spin recursion and scan the two-point function.
    RgExact(RgArgs),
    /// Sample the full model with a Metropolis chain.
    Mcmc(McmcArgs),
    /// Join measured two-point scans against predicted plateau/decay.
    Plateau(PlateauArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Corrupt the spectral constant before checking (failure-path test).
    #[arg(long, hide = true)]
    pub inject_bad_q: bool,
}

#[derive(Debug, Args)]
pub struct GreenArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Covariance mass.
    #[arg(long, allow_negative_numbers = true)]
    pub mass: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Component counts, comma separated.
    #[arg(long = "n", value_name = "LIST")]
    pub n_list: Option<String>,
    /// Window coordinates, comma separated.
    #[arg(long = "s", value_name = "LIST", allow_hyphen_values = true)]
    pub s_list: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScalesArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Quartic coupling.
    #[arg(long)]
    pub g: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// Initial coupling.
    #[arg(long, allow_negative_numbers = true)]
    pub g0: Option<f64>,
    /// Rescaled mass parameter of the recursion.
    #[arg(long, allow_negative_numbers = true)]
    pub atilde: Option<f64>,
    /// Number of recursion steps.
    #[arg(long)]
    pub jmax: Option<u32>,
    /// Recursion constant override (default (n+8)(1-L^-d)).
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Covariance mass for the pair vacuum-energy column.
    #[arg(long, allow_negative_numbers = true)]
    pub mass: Option<f64>,
    /// Coalescence scale for the pair vacuum-energy column.
    #[arg(long)]
    pub jxy: Option<u32>,
}

#[derive(Debug, Args)]
pub struct RgArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Quartic coupling.
    #[arg(long)]
    pub g: Option<f64>,
    /// Baseline quadratic coefficient (total); see also --tune.
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Tune the baseline to the window-centre susceptibility first.
    #[arg(long)]
    pub tune: bool,
    /// Scan regime.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Window coordinates, comma separated.
    #[arg(long = "s", value_name = "LIST", allow_hyphen_values = true)]
    pub s_list: Option<String>,
    /// Distance classes (coalescence scales), comma separated; an empty
    /// string yields a header-only table.
    #[arg(long, value_name = "LIST")]
    pub classes: Option<String>,
    /// Monte Carlo samples per scale.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Grid points per scale (odd).
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Grid half-width in standard deviations.
    #[arg(long)]
    pub width_sigmas: Option<f64>,
    /// Independent replicas for error bars.
    #[arg(long)]
    pub replicas: Option<u32>,
    /// Disable antithetic sampling.
    #[arg(long)]
    pub no_antithetic: bool,
    /// Write the per-scale effective grids to this CSV path.
    #[arg(long, value_name = "PATH")]
    pub dump_effective: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Quartic coupling.
    #[arg(long)]
    pub g: Option<f64>,
    /// Total quadratic coefficient.
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Measured sweeps.
    #[arg(long)]
    pub sweeps: Option<u32>,
    /// Burn-in sweeps.
    #[arg(long)]
    pub burnin: Option<u32>,
    /// Sweeps between measurements.
    #[arg(long)]
    pub stride: Option<u32>,
    /// Initial proposal half-width.
    #[arg(long)]
    pub width: Option<f64>,
    /// Batches for error bars.
    #[arg(long)]
    pub batches: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PlateauArgs {
    #[command(flatten)]
    pub rg: RgArgs,
    /// Also run the Metropolis chain at each scan point and join it in.
    #[arg(long)]
    pub with_mcmc: bool,
    /// Measured sweeps for the chain overlay.
    #[arg(long)]
    pub sweeps: Option<u32>,
    /// Burn-in sweeps for the chain overlay.
    #[arg(long)]
    pub burnin: Option<u32>,
}

/// Flat JSON run-configuration file: any subset of these keys; explicit
/// command-line flags take precedence over entries here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileCfg {
    pub d: Option<u32>,
    #[serde(rename = "L")]
    pub l: Option<u32>,
    #[serde(rename = "N")]
    pub levels: Option<u32>,
    pub bc: Option<String>,
    pub n: Option<u32>,
    pub g: Option<f64>,
    pub nu: Option<f64>,
    pub mass: Option<f64>,
    pub g0: Option<f64>,
    pub atilde: Option<f64>,
    pub jmax: Option<u32>,
    pub b: Option<f64>,
    pub jxy: Option<u32>,
    pub regime: Option<String>,
    pub s_list: Option<Vec<f64>>,
    pub classes: Option<Vec<u32>>,
    pub n_list: Option<Vec<u32>>,
    pub samples: Option<u32>,
    pub grid_points: Option<usize>,
    pub width_sigmas: Option<f64>,
    pub replicas: Option<u32>,
    pub sweeps: Option<u32>,
    pub burnin: Option<u32>,
    pub stride: Option<u32>,
    pub width: Option<f64>,
    pub batches: Option<u32>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}
