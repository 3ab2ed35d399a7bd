//! `endocert`: certification and experiment runner for torus endomorphisms.
//!
//! ```text
//! endocert certify --map cat --grid 256
//! endocert arcs --map diag --iterates 10
//! endocert perturb --recipe full-kernel --half-period 6 --epsilon 1
//! ```
//!
//! Exit status: 0 certified or consistent, 1 negative result, 2
//! inconclusive, 3 configuration or runtime error.

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use endocert::pipeline::{run_command, write_outputs, PerturbRecipe, PipelineError, RunConfig};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "endocert", version, about = "Numerical certificates for surface endomorphisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical set, splitting, cone certificate and homology verdict.
    Certify(Common),
    /// u-arc growth series, δ-escape check and area/length ratio.
    Arcs(Common),
    /// Domination certificate or rotation witness.
    Dichotomy(Common),
    /// Action on homology and the radius verdict.
    Homology(Common),
    /// Local surgery experiment with before/after transitivity probes.
    Perturb(Common),
    /// Box-method periodic point and period census.
    Periodic(Common),
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::Certify(c) => ("certify", c),
            Command::Arcs(c) => ("arcs", c),
            Command::Dichotomy(c) => ("dichotomy", c),
            Command::Homology(c) => ("homology", c),
            Command::Perturb(c) => ("perturb", c),
            Command::Periodic(c) => ("periodic", c),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Recipe {
    Noop,
    Franks,
    FullKernel,
    Sink,
}

#[derive(Args, Debug)]
struct Common {
    /// Canonical map name (cat, exp, diag, shearcrit, idhom) or map file.
    #[arg(long)]
    map: Option<String>,
    /// Output directory.
    #[arg(long, env = "ENDOCERT_OUT", default_value = "endocert-out")]
    out: PathBuf,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    /// Horizon for E and backward branches.
    #[arg(long)]
    horizon: Option<usize>,
    /// Cone half-angle.
    #[arg(long)]
    eta: Option<f64>,
    /// Largest ℓ searched for domination and expansion.
    #[arg(long)]
    ell: Option<usize>,
    /// Largest k searched for cone invariance.
    #[arg(long)]
    k: Option<usize>,
    /// C¹ budget.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Box size for the periodic-point search.
    #[arg(long)]
    nu: Option<f64>,
    /// Length threshold for the δ-escape check.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Arc iterates.
    #[arg(long)]
    iterates: Option<usize>,
    /// Orbit length of each transitivity probe start.
    #[arg(long)]
    probe_steps: Option<usize>,
    #[arg(long, value_enum)]
    recipe: Option<Recipe>,
    /// Surgery point `x,y` for noop and franks.
    #[arg(long, value_delimiter = ',')]
    point: Option<Vec<f64>>,
    /// Target `scale · Df` for franks.
    #[arg(long)]
    scale: Option<f64>,
    /// Explicit franks target `a,b,c,d` (rows); overrides `--scale`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
    /// Shear amplitude for full-kernel.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    half_period: Option<usize>,
    /// Fixed-point multiplier of the shear sink variant; without it the
    /// sink recipe works on `--map` at (0,0).
    #[arg(long)]
    mu: Option<f64>,
    /// Inner surgery radius.
    #[arg(long)]
    radius: Option<f64>,
}

fn fixed<const N: usize>(flag: &str, v: &Option<Vec<f64>>) -> anyhow::Result<Option<[f64; N]>> {
    v.as_ref()
        .map(|v| <[f64; N]>::try_from(v.as_slice()).map_err(|_| anyhow::anyhow!("--{flag} takes {N} comma-separated numbers")))
        .transpose()
}

/// `None` keeps the recipe from the config file.
fn recipe_from(c: &Common) -> anyhow::Result<Option<PerturbRecipe>> {
    let r = c.radius;
    let point = fixed::<2>("point", &c.point)?;
    let target = fixed::<4>("target", &c.target)?;
    let Some(recipe) = c.recipe else { return Ok(None) };
    let recipe = match recipe {
        Recipe::Noop => PerturbRecipe::Noop {
            point: point.unwrap_or([0.3, 0.7]),
            inner_radius: r.unwrap_or(0.01),
            outer_radius: 2.0 * r.unwrap_or(0.01),
        },
        Recipe::Franks => PerturbRecipe::Franks {
            point: point.unwrap_or([0.3, 0.7]),
            scale: c.scale.unwrap_or(0.99),
            target: target.map(|t| [[t[0], t[1]], [t[2], t[3]]]),
            inner_radius: r.unwrap_or(0.01),
            outer_radius: 2.0 * r.unwrap_or(0.01),
        },
        Recipe::FullKernel => PerturbRecipe::FullKernel {
            amplitude: c.amplitude.unwrap_or(4.0),
            half_period: c.half_period.unwrap_or(6),
            inner_radius: r.unwrap_or(1e-5),
        },
        Recipe::Sink => PerturbRecipe::Sink {
            mu: c.mu,
            inner_radius: r.unwrap_or(0.01),
        },
    };
    Ok(Some(recipe))
}

fn build_config(c: &Common, command: &str) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if command == "perturb" && c.map.is_none() && cfg.map.is_empty() {
        // Recipes that build their own map still need a placeholder to validate.
        cfg.map = "shearcrit".into();
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$( if let Some(v) = c.$flag.clone() { cfg.$field = v; } )*};
    }
    set!(map => map, grid => grid, horizon => horizon, eta => eta, ell => ell_max, k => k_max,
         epsilon => epsilon, nu => nu, delta => delta, seed => seed, iterates => arc_iterates,
         probe_steps => probe_steps);
    if let Some(r) = recipe_from(c)? {
        cfg.perturb = r;
    }
    cfg.out = c.out.clone();
    cfg.threads = c.threads;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let (command, common) = cli.command.split();
    let cfg = build_config(&common, command)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let output = run_command(command, &cfg)?;
    let files = write_outputs(&cfg.out, &output)?;
    print!("{}", output.report.to_text());
    eprintln!("wrote {} files to {}", files.len(), cfg.out.display());
    Ok(output.report.exit_code())
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("endocert: {e:#}");
            e.downcast_ref::<PipelineError>().map_or(3, |p| p.exit_code())
        }
    };
    std::process::exit(code);
}
