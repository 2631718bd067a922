//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{all_bounds, BoundQuery};
use crate::corpus;
use crate::curvature::{total_abs_curvature_mc, CurvatureMc};
use crate::deformation::{build_family, convergence_experiment, spherical_family};
use crate::error::Result;
use crate::harness::{emit_report, run_scenario, Scenario};
use crate::oracle::{tube_probability_mc, McConfig};
use crate::poly::PolySystem;

#[derive(Debug, Parser)]
#[command(name = "tubevol", version, about = "Volume-of-tube bounds for real algebraic sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every applicable bound for one query.
    Bounds(BoundsArgs),
    /// Estimate a tube probability for a corpus variety and compare it with the bounds.
    TubeMc(TubeMcArgs),
    /// Run the deformation convergence experiment on a corpus variety.
    Deform(DeformArgs),
    /// Estimate a total absolute curvature integral on the sphere.
    Curvature(CurvatureArgs),
    /// Run a scenario file (or a corpus default scenario) and write its report.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Space {
    Euclidean,
    Sphere,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "euclidean")]
    pub space: Space,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub delta: u32,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub sigma: f64,
    /// Include the complete-intersection formulas.
    #[arg(long)]
    pub smooth_ci: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TubeMcArgs {
    #[arg(long)]
    pub corpus: String,
    /// Comma-separated center; defaults to the corpus center.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.99)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[arg(long)]
    pub corpus: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 400)]
    pub cloud_size: usize,
}

#[derive(Debug, Args)]
pub struct CurvatureArgs {
    /// Polynomials in X0..Xn cutting out the submanifold of S^n.
    #[arg(long, required = true, num_args = 1..)]
    pub poly: Vec<String>,
    /// Sphere dimension n.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0.2)]
    pub tube_radius: f64,
    #[arg(long, default_value_t = 2)]
    pub normals: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file.
    #[arg(required_unless_present = "corpus", conflicts_with = "corpus")]
    pub scenario: Option<PathBuf>,
    /// Run the default scenario of a corpus entry instead of a file.
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, env = "TUBEVOL_OUT", default_value = "tubevol-out")]
    pub out: PathBuf,
}

/// Runs a parsed command and returns the process exit code: 0 when every
/// verdict passes, 1 otherwise.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Bounds(a) => bounds(a),
        Command::TubeMc(a) => tube_mc(a),
        Command::Deform(a) => deform(a),
        Command::Curvature(a) => curvature(a),
        Command::Run(a) => run(a),
    }
}

fn bounds(a: BoundsArgs) -> Result<i32> {
    let q = match a.space {
        Space::Euclidean => BoundQuery::euclidean(a.n, a.m, a.delta, a.eps, a.sigma),
        Space::Sphere => BoundQuery::spherical(a.n, a.m, a.delta, a.eps, a.sigma),
    };
    let report = all_bounds(&q, a.smooth_ci)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{:<26} {:>14} {:>10}", "formula", "raw", "clamped");
        for e in &report.entries {
            println!("{:<26} {:>14.6e} {:>10.6}", e.name, e.raw, e.clamped);
        }
    }
    Ok(0)
}

fn tube_mc(a: TubeMcArgs) -> Result<i32> {
    let e = corpus::get(&a.corpus)?;
    let center = a.center.unwrap_or(e.center);
    let cfg = McConfig {
        level: a.level,
        ..McConfig::new(a.trials, a.seed)
    };
    let run = tube_probability_mc(&e.spec, &center, a.sigma, a.eps, &cfg)?;
    let est = run.estimate;
    println!(
        "p_hat = {:.6}  CI{:.0}% = [{:.6}, {:.6}]  trials = {}  undecided = {}",
        est.p_hat,
        100.0 * a.level,
        est.ci_low,
        est.ci_high,
        est.trials,
        run.undecided
    );
    let q = BoundQuery {
        n: e.spec.space.dim(),
        m: e.spec.m,
        delta: e.spec.delta,
        eps: a.eps,
        sigma: a.sigma,
        space: e.spec.space,
    };
    let mut failed = false;
    for b in all_bounds(&q, e.spec.smooth_ci)?.entries {
        let pass = est.ci_low <= b.clamped;
        failed |= !pass;
        println!("{:<26} {:>10.6} {}", b.name, b.clamped, if pass { "pass" } else { "fail" });
    }
    Ok(i32::from(failed))
}

fn deform(a: DeformArgs) -> Result<i32> {
    let e = corpus::get(&a.corpus)?;
    let fam = if e.spec.space.is_sphere() {
        spherical_family(&e.spec.system, e.spec.m, a.seed)?
    } else {
        build_family(&e.spec.system, e.spec.m, a.seed)?
    };
    let table = convergence_experiment(&fam, &e.spec, a.radius, a.cloud_size, a.seed)?;
    println!("{:>10} {:>12} {:>12} {:>6}", "t", "hausdorff", "min_sv", "kept");
    for r in &table.rows {
        let h = r.hausdorff.map_or("-".to_string(), |h| format!("{:.4e}", h.value));
        println!("{:>10.1e} {:>12} {:>12.3e} {:>6}", r.t, h, r.min_sv, r.kept);
    }
    match table.t0 {
        Some(t) => println!("t0 = {t:e}"),
        None => println!("no grid value passed the smoothness audit"),
    }
    Ok(0)
}

fn curvature(a: CurvatureArgs) -> Result<i32> {
    let s = PolySystem::parse(&a.poly, a.n + 1, 0)?;
    let cfg = CurvatureMc {
        trials: a.trials,
        tube_radius: a.tube_radius,
        normals_per_point: a.normals,
        seed: a.seed,
    };
    let k = total_abs_curvature_mc(&s, a.index, &cfg)?;
    println!(
        "|K_{}| = {:.6} ± {:.6}  (in tube {}, skipped {}, trials {})",
        a.index, k.value, k.std_error, k.in_tube, k.skipped, k.trials
    );
    Ok(0)
}

fn run(a: RunArgs) -> Result<i32> {
    let scenario = match (&a.scenario, &a.corpus) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => Scenario::for_corpus(name, a.trials, a.seed)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let report = run_scenario(&scenario)?;
    let files = emit_report(&report, &a.out)?;
    println!(
        "{}: {} rows, {} failing{}",
        report.scenario,
        report.rows.len(),
        report.failures(),
        if report.any_reduced() { " (trials reduced by budget)" } else { "" }
    );
    println!("wrote {}", files.csv.display());
    println!("wrote {}", files.json.display());
    if let Some(p) = files.convergence {
        println!("wrote {}", p.display());
    }
    Ok(i32::from(!report.all_pass()))
}
