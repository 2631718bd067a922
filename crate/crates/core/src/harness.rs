//! Scenario files, the scenario runner and the CSV/JSON report.
//!
//! A scenario is a TOML file:
//!
//! ```toml
//! name = "line2d"
//!
//! [variety]
//! corpus = "line2d"          # or: space, n, polys, m, delta, smooth_ci
//!
//! [[queries]]
//! center = [0.0, 0.0]        # defaults to the corpus center
//! sigma = 1.0
//! eps = [0.01, 0.05, 0.1]
//!
//! [mc]
//! trials = 10000
//! seed = 7
//! level = 0.99
//! ```
//!
//! Optional tables: `[deformation]` with `seed`, `radius`, `cloud_size` and
//! `t_grid`, and `[output]` with `prefix` and `budget_secs`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{all_bounds, BoundQuery};
use crate::corpus;
use crate::deformation::{build_family, spherical_family, convergence_experiment, ConvergenceTable};
use crate::error::{Error, Result};
use crate::geometry::AmbientSpace;
use crate::oracle::{tube_probability_mc, McConfig, McRun, VarietySpec};
use crate::poly::PolySystem;
use crate::rng::derive_seed;

pub const CSV_HEADER: &str =
    "scenario,formula,n,m,delta,eps,sigma,bound_raw,bound_clamped,p_hat,ci_low,ci_high,verdict,seed";

pub const DEFAULT_BUDGET: Duration = Duration::from_secs(300);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    variety: VarietyFile,
    queries: Vec<QueryFile>,
    mc: McFile,
    deformation: Option<DeformationParams>,
    output: Option<OutputFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarietyFile {
    corpus: Option<String>,
    space: Option<String>,
    n: Option<usize>,
    polys: Option<Vec<String>>,
    m: Option<usize>,
    delta: Option<u32>,
    smooth_ci: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryFile {
    center: Option<Vec<f64>>,
    sigma: f64,
    eps: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct McFile {
    trials: u64,
    seed: u64,
    #[serde(default = "default_level")]
    level: f64,
}

fn default_level() -> f64 {
    0.99
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    prefix: Option<String>,
    budget_secs: Option<f64>,
}

/// Parameters of the optional deformation experiment.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationParams {
    pub seed: u64,
    pub radius: f64,
    pub cloud_size: usize,
    pub t_grid: Option<Vec<f64>>,
}

/// One point of the query grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioQuery {
    pub center: Vec<f64>,
    pub query: BoundQuery,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McParams {
    pub trials: u64,
    pub seed: u64,
    pub level: f64,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub variety: VarietySpec,
    pub queries: Vec<ScenarioQuery>,
    pub mc: McParams,
    pub deformation: Option<DeformationParams>,
    pub prefix: String,
    pub budget: Duration,
}

fn scenario_err(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn parse_space(text: &str, n: usize) -> Result<AmbientSpace> {
    let space = match text {
        "euclidean" | "R" => AmbientSpace::Euclidean(n),
        "sphere" | "S" => AmbientSpace::Sphere(n),
        other => return Err(scenario_err(format!("unknown space '{other}', expected 'euclidean' or 'sphere'"))),
    };
    space.validate()?;
    Ok(space)
}

fn build_variety(v: &VarietyFile) -> Result<(VarietySpec, Option<Vec<f64>>)> {
    if let Some(name) = &v.corpus {
        let explicit = v.space.is_some() || v.n.is_some() || v.polys.is_some() || v.m.is_some() || v.delta.is_some();
        if explicit {
            return Err(scenario_err("give either a corpus name or an explicit variety, not both"));
        }
        let e = corpus::get(name)?;
        let mut spec = e.spec;
        if let Some(ci) = v.smooth_ci {
            spec.smooth_ci = ci;
        }
        return Ok((spec, Some(e.center)));
    }
    let missing = |f: &str| scenario_err(format!("variety needs '{f}' when no corpus is given"));
    let n = v.n.ok_or_else(|| missing("n"))?;
    let space = parse_space(v.space.as_deref().ok_or_else(|| missing("space"))?, n)?;
    let polys = v.polys.as_ref().ok_or_else(|| missing("polys"))?;
    // Affine polynomials are written in X1..Xn, spherical ones in X0..Xn.
    let first_var = usize::from(!space.is_sphere());
    let system = PolySystem::parse(polys, space.coords(), first_var)?;
    let m = v.m.ok_or_else(|| missing("m"))?;
    let delta = v.delta.unwrap_or_else(|| system.max_degree());
    let spec = VarietySpec::new(system, space, m, delta, v.smooth_ci.unwrap_or(false))?;
    Ok((spec, None))
}

fn check_name(name: &str, what: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(scenario_err(format!("{what} '{name}' may only use ASCII letters, digits, '_', '-' and '.'")))
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        check_name(&file.name, "scenario name")?;
        let (variety, default_center) = build_variety(&file.variety)?;
        if file.queries.is_empty() {
            return Err(scenario_err("scenario has no queries"));
        }
        let space = variety.space;
        let mut queries = Vec::new();
        for (k, q) in file.queries.iter().enumerate() {
            let center = q
                .center
                .clone()
                .or_else(|| default_center.clone())
                .ok_or_else(|| scenario_err(format!("query {k} needs a center")))?;
            space.check_point(&center, 1e-9)?;
            if q.eps.is_empty() {
                return Err(scenario_err(format!("query {k} has an empty eps list")));
            }
            for &eps in &q.eps {
                let query = BoundQuery {
                    n: space.dim(),
                    m: variety.m,
                    delta: variety.delta,
                    eps,
                    sigma: q.sigma,
                    space,
                };
                query.validate()?;
                queries.push(ScenarioQuery {
                    center: center.clone(),
                    query,
                });
            }
        }
        let mc = McParams {
            trials: file.mc.trials,
            seed: file.mc.seed,
            level: file.mc.level,
        };
        if mc.trials == 0 {
            return Err(scenario_err("mc.trials must be positive"));
        }
        if !(mc.level > 0.0 && mc.level < 1.0) {
            return Err(scenario_err(format!("mc.level must lie in (0, 1), got {}", mc.level)));
        }
        if let Some(d) = &file.deformation {
            if !(d.radius > 0.0) || d.cloud_size == 0 {
                return Err(scenario_err("deformation needs a positive radius and cloud_size"));
            }
        }
        let prefix = file
            .output
            .as_ref()
            .and_then(|o| o.prefix.clone())
            .unwrap_or_else(|| file.name.clone());
        check_name(&prefix, "output prefix")?;
        let budget = match file.output.as_ref().and_then(|o| o.budget_secs) {
            Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
            Some(s) => return Err(scenario_err(format!("budget_secs must be positive, got {s}"))),
            None => DEFAULT_BUDGET,
        };
        Ok(Scenario {
            name: file.name,
            variety,
            queries,
            mc,
            deformation: file.deformation,
            prefix,
            budget,
        })
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }

    /// Default scenario for a corpus entry: queries at its center with
    /// `σ = 1` (or `π/2` on the sphere) and `ε ∈ {0.01, 0.05, 0.1}`.
    pub fn for_corpus(name: &str, trials: u64, seed: u64) -> Result<Scenario> {
        let e = corpus::get(name)?;
        let sigma = if e.spec.space.is_sphere() { std::f64::consts::FRAC_PI_2 } else { 1.0 };
        let text = format!(
            "name = \"{name}\"\n[variety]\ncorpus = \"{name}\"\n[[queries]]\nsigma = {sigma:?}\neps = [0.01, 0.05, 0.1]\n[mc]\ntrials = {trials}\nseed = {seed}\n"
        );
        Scenario::from_toml_str(&text)
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub formula: String,
    pub query_index: usize,
    pub n: usize,
    pub m: usize,
    pub delta: u32,
    pub eps: f64,
    pub sigma: f64,
    pub bound_raw: f64,
    pub bound_clamped: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
    pub seed: u64,
}

impl ReportRow {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else {
            "fail"
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            self.scenario,
            self.formula,
            self.n,
            self.m,
            self.delta,
            self.eps,
            self.sigma,
            self.bound_raw,
            self.bound_clamped,
            self.p_hat,
            self.ci_low,
            self.ci_high,
            self.verdict(),
            self.seed
        )
    }
}

/// Bookkeeping for one Monte Carlo run.
#[derive(Clone, Debug, Serialize)]
pub struct McRecord {
    pub query_index: usize,
    pub center: Vec<f64>,
    pub eps: f64,
    pub sigma: f64,
    pub seed: u64,
    pub run: McRun,
    pub undecided_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub bounds_secs: f64,
    pub mc_secs: f64,
    pub deformation_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub prefix: String,
    pub rows: Vec<ReportRow>,
    pub mc_runs: Vec<McRecord>,
    pub deformation: Option<ConvergenceTable>,
    pub timings: Timings,
    pub budget_secs: f64,
}

impl ScenarioReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn any_reduced(&self) -> bool {
        self.mc_runs.iter().any(|r| r.run.reduced)
    }

    pub fn csv(&self) -> String {
        let mut s = String::with_capacity(128 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

/// Runs every query of `s`: all applicable bounds, one Monte Carlo estimate
/// per query and, if requested, the deformation experiment.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport> {
    let start = Instant::now();
    let per_query = s.budget.div_f64(s.queries.len().max(1) as f64);
    let results: Vec<(Vec<ReportRow>, McRecord, f64)> = s
        .queries
        .par_iter()
        .enumerate()
        .map(|(k, sq)| {
            let tb = Instant::now();
            let bounds = all_bounds(&sq.query, s.variety.smooth_ci)?;
            let bounds_secs = tb.elapsed().as_secs_f64();
            let seed = derive_seed(s.mc.seed, k as u64);
            let cfg = McConfig {
                level: s.mc.level,
                budget: Some(per_query),
                ..McConfig::new(s.mc.trials, seed)
            };
            let run = tube_probability_mc(&s.variety, &sq.center, sq.query.sigma, sq.query.eps, &cfg)?;
            let est = run.estimate;
            let rows = bounds
                .entries
                .iter()
                .map(|b| ReportRow {
                    scenario: s.name.clone(),
                    formula: b.name.to_string(),
                    query_index: k,
                    n: sq.query.n,
                    m: sq.query.m,
                    delta: sq.query.delta,
                    eps: sq.query.eps,
                    sigma: sq.query.sigma,
                    bound_raw: b.raw,
                    bound_clamped: b.clamped,
                    p_hat: est.p_hat,
                    ci_low: est.ci_low,
                    ci_high: est.ci_high,
                    pass: est.ci_low <= b.clamped,
                    seed,
                })
                .collect();
            let record = McRecord {
                query_index: k,
                center: sq.center.clone(),
                eps: sq.query.eps,
                sigma: sq.query.sigma,
                seed,
                undecided_rate: run.undecided_rate(),
                run,
            };
            Ok((rows, record, bounds_secs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut mc_runs = Vec::new();
    let mut bounds_secs = 0.0;
    for (r, rec, b) in results {
        rows.extend(r);
        mc_runs.push(rec);
        bounds_secs += b;
    }
    // Stable sort keeps query order within each formula.
    rows.sort_by(|a, b| a.scenario.cmp(&b.scenario).then_with(|| a.formula.cmp(&b.formula)));
    let mc_secs = mc_runs.iter().map(|r| r.run.elapsed_secs).sum();

    let td = Instant::now();
    let deformation = match &s.deformation {
        None => None,
        Some(d) => Some(run_deformation(&s.variety, d)?),
    };
    Ok(ScenarioReport {
        scenario: s.name.clone(),
        prefix: s.prefix.clone(),
        rows,
        mc_runs,
        deformation,
        timings: Timings {
            bounds_secs,
            mc_secs,
            deformation_secs: td.elapsed().as_secs_f64(),
            total_secs: start.elapsed().as_secs_f64(),
        },
        budget_secs: s.budget.as_secs_f64(),
    })
}

fn run_deformation(v: &VarietySpec, d: &DeformationParams) -> Result<ConvergenceTable> {
    let fam = if v.space.is_sphere() {
        spherical_family(&v.system, v.m, d.seed)?
    } else {
        build_family(&v.system, v.m, d.seed)?
    };
    let fam = match &d.t_grid {
        Some(g) => fam.with_t_grid(g.clone())?,
        None => fam,
    };
    convergence_experiment(&fam, v, d.radius, d.cloud_size, d.seed)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    schema: &'static str,
    scenario: &'a str,
    rows: usize,
    failures: usize,
    reduced: bool,
    budget_secs: f64,
    timings: &'a Timings,
    mc_runs: &'a [McRecord],
    deformation: &'a Option<ConvergenceTable>,
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub convergence: Option<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<prefix>.csv`, `<prefix>.json` and, with a deformation run,
/// `<prefix>_convergence.csv` into `dir`.
pub fn emit_report(report: &ScenarioReport, dir: &Path) -> Result<ReportFiles> {
    if report.rows.is_empty() {
        return Err(Error::InvalidArgument("report has no rows".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let csv = dir.join(format!("{}.csv", report.prefix));
    write(&csv, &report.csv())?;

    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        schema: CSV_HEADER,
        scenario: &report.scenario,
        rows: report.rows.len(),
        failures: report.failures(),
        reduced: report.any_reduced(),
        budget_secs: report.budget_secs,
        timings: &report.timings,
        mc_runs: &report.mc_runs,
        deformation: &report.deformation,
    };
    let json = dir.join(format!("{}.json", report.prefix));
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write(&json, &text)?;

    let convergence = match &report.deformation {
        None => None,
        Some(table) => {
            let mut s = String::from("t,hausdorff,min_sv,z_count,vt_count,kept\n");
            for r in &table.rows {
                let h = r.hausdorff.map(|h| format!("{:?}", h.value)).unwrap_or_default();
                let _ = writeln!(s, "{:?},{h},{:?},{},{},{}", r.t, r.min_sv, r.z_count, r.vt_count, r.kept);
            }
            let path = dir.join(format!("{}_convergence.csv", report.prefix));
            write(&path, &s)?;
            Some(path)
        }
    };
    Ok(ReportFiles { csv, json, convergence })
}
