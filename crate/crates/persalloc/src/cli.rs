//! Command-line surface: argument parsing, scenario files, and CSV/JSON
//! output. Exit codes: 0 success, 1 config error, 2 infeasible/solver error,
//! 3 I/O error.

use crate::experiments::{
    run_q1, run_q2, run_q3, ExperimentError, Q3Axis, SweepSpec,
};
use crate::metrics::FitResult;
use crate::model::{validate_instance, ScenarioInstance, TreatmentConfig};
use crate::scenario::{bc_catalog, bc_illness_names, mix_seed, realize_instance, sample_population};
use crate::solver::{lp_relaxation_bound, solve, SolveError, SolverKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "persalloc", version, about = "Budget-constrained personalized-treatment allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Exhaustive,
    Dp,
    Bnb,
}

impl From<SolverArg> for SolverKind {
    fn from(v: SolverArg) -> Self {
        match v {
            SolverArg::Exhaustive => SolverKind::Exhaustive,
            SolverArg::Dp => SolverKind::DynamicProgram,
            SolverArg::Bnb => SolverKind::BranchAndBound,
        }
    }
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Exhaustive => "exhaustive",
        SolverKind::DynamicProgram => "dp",
        SolverKind::BranchAndBound => "bnb",
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    PatientCount,
    AvgDeltaOeb,
    AvgDeltaCsr,
}

impl From<AxisArg> for Q3Axis {
    fn from(v: AxisArg) -> Self {
        match v {
            AxisArg::PatientCount => Q3Axis::PatientCount,
            AxisArg::AvgDeltaOeb => Q3Axis::AvgDeltaOeb,
            AxisArg::AvgDeltaCsr => Q3Axis::AvgDeltaCsr,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Root RNG seed; per-repetition seeds derive from it deterministically.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Monte-Carlo repetitions per grid point.
    #[arg(long, default_value_t = 1000)]
    repetitions: u32,
    #[arg(long, value_enum, default_value_t = SolverArg::Bnb)]
    solver: SolverArg,
    /// Costs are rounded up to multiples of this before solving.
    #[arg(long, default_value_t = 1e-4)]
    cost_resolution: f64,
    /// Output directory for result files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for repetitions (0 = auto); never affects results.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a single scenario and write the assignment as JSON.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenario file path, or the built-in keyword `bc-table1`.
        #[arg(long)]
        scenario: String,
        /// Overhead fraction used when the scenario samples its population.
        #[arg(long, default_value_t = 0.075)]
        f: f64,
    },
    /// Q1: sweep the overhead fraction f over the bladder-cancer scenario.
    Q1 {
        #[command(flatten)]
        common: CommonArgs,
        /// f grid as lo:hi:step.
        #[arg(long, default_value = "0:0.25:0.01")]
        grid: String,
    },
    /// Q2: abstract-catalog selection heatmap at fixed f.
    Q2 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.075)]
        f: f64,
    },
    /// Q3: sensitivity of the personalization level along one axis.
    Q3 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Axis grid as lo:hi:step (default depends on the axis).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.075)]
        f: f64,
    },
    /// Load a scenario file and report every validation violation.
    Validate {
        /// Scenario file path, or the built-in keyword `bc-table1`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.075)]
        f: f64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solve(s) => CliError::Solver(s.to_string()),
            ExperimentError::Fit(f) => CliError::Solver(format!("fit failed: {f}")),
            ExperimentError::Spec(s) => CliError::Config(s),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solver(e.to_string())
    }
}

/// Parse `lo:hi:step` into an inclusive grid, rounding each value to 9
/// decimals so grid arithmetic never leaks floating-point noise into output.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid '{text}' must have the form lo:hi:step"
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<f64>()
            .map_err(|_| CliError::Config(format!("grid {what} '{s}' is not a number")))
    };
    let lo = parse(parts[0], "lo")?;
    let hi = parse(parts[1], "hi")?;
    let step = parse(parts[2], "step")?;
    if step <= 0.0 || hi < lo {
        return Err(CliError::Config(format!(
            "grid '{text}' needs step > 0 and hi >= lo"
        )));
    }
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let v = ((lo + i as f64 * step) * 1e9).round() / 1e9;
        if v > hi + step * 1e-6 {
            break;
        }
        out.push(v);
        i += 1;
        if i > 1_000_000 {
            return Err(CliError::Config(format!("grid '{text}' has too many points")));
        }
    }
    Ok(out)
}

// ------------------------------------------------------------ scenario files

/// On-disk scenario format (JSON).
#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub illnesses: Vec<String>,
    pub treatments: Vec<TreatmentConfig>,
    pub population: PopulationField,
    pub f: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationField {
    Keyword(String),
    Fixed { n1: u32, n2: u32 },
}

pub fn bc_table1_file() -> ScenarioFile {
    ScenarioFile {
        illnesses: bc_illness_names(),
        treatments: bc_catalog(),
        population: PopulationField::Keyword("sample".into()),
        f: 0.075,
    }
}

/// Load a scenario description: either the built-in `bc-table1` keyword or a
/// JSON file on disk.
pub fn load_scenario(spec: &str) -> Result<ScenarioFile, CliError> {
    if spec == "bc-table1" {
        return Ok(bc_table1_file());
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read scenario file '{spec}': {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse scenario file '{spec}': {e}")))
}

/// Instantiate a loaded scenario: resolve the population (fixed or sampled
/// from the seed), draw realized CSRs, compute the budget, and validate.
pub fn instantiate_scenario(
    file: &ScenarioFile,
    seed: u64,
    f_override: Option<f64>,
) -> Result<ScenarioInstance, CliError> {
    let f = f_override.unwrap_or(file.f);
    if f < 0.0 {
        return Err(CliError::Config(format!("f must be >= 0, got {f}")));
    }
    let n_illnesses = file.illnesses.len();
    for (j, t) in file.treatments.iter().enumerate() {
        if t.illness.0 >= n_illnesses {
            return Err(CliError::Config(format!(
                "treatment {j} ({}) references unknown illness {}",
                t.label, t.illness.0
            )));
        }
    }
    let counts: Vec<u32> = match &file.population {
        PopulationField::Fixed { n1, n2 } => {
            let mut c = vec![0u32; n_illnesses];
            if !c.is_empty() {
                c[0] = *n1;
            }
            if c.len() > 1 {
                c[1] = *n2;
            }
            c
        }
        PopulationField::Keyword(k) if k == "sample" => {
            let d = sample_population(mix_seed(seed, 0));
            let mut c = vec![0u32; n_illnesses];
            if !c.is_empty() {
                c[0] = d.n1;
            }
            if c.len() > 1 {
                c[1] = d.n2;
            }
            c
        }
        PopulationField::Keyword(k) => {
            return Err(CliError::Config(format!(
                "population must be {{n1, n2}} or \"sample\", got \"{k}\""
            )));
        }
    };
    let inst = realize_instance(&file.treatments, &counts, f, mix_seed(seed, 1));
    let violations = validate_instance(&inst);
    if !violations.is_empty() {
        return Err(CliError::Config(format!(
            "scenario failed validation:\n  {}",
            violations.join("\n  ")
        )));
    }
    Ok(inst)
}

// ------------------------------------------------------------------- output

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create output dir '{}': {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write '{}': {e}", path.display())))
}

/// Build the `#` comment header every output file starts with: tool version,
/// the fully resolved config, and the root seed.
fn csv_header(config: &str, seed: u64) -> String {
    format!("# persalloc {VERSION}\n# config: {config}\n# root_seed: {seed}\n")
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fit_csv(fit: &FitResult, names: &[&str], header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("coef_name,value\n");
    for (name, c) in names.iter().zip(&fit.coefficients) {
        let _ = writeln!(s, "{name},{}", fmt_f64(*c));
    }
    let _ = writeln!(s, "r_squared,{}", fmt_f64(fit.r_squared));
    s
}

// ------------------------------------------------------------------ running

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help/version are successes, everything else is a config error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn log_config(config: &str, out: &Path) {
    // the thread count and output directory are logged but kept out of file
    // headers: they never affect results, and output files must be identical
    // across them
    eprintln!("resolved config: {config} out={}", out.display());
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { common, scenario, f } => cmd_solve(common, &scenario, f),
        Command::Q1 { common, grid } => cmd_q1(common, &grid),
        Command::Q2 { common, f } => cmd_q2(common, f),
        Command::Q3 { common, axis, grid, f } => cmd_q3(common, axis.into(), grid.as_deref(), f),
        Command::Validate { scenario, seed, f } => cmd_validate(&scenario, seed, f),
    }
}

#[derive(Debug, Serialize)]
struct AssignmentJson {
    version: String,
    config: String,
    root_seed: u64,
    chosen: Vec<usize>,
    objective: f64,
    total_cost: f64,
    budget: f64,
    solver: String,
    nodes_or_states: u64,
    lp_bound: Option<f64>,
    lp_relaxation_bound: f64,
    personalization_level: f64,
}

fn cmd_solve(common: CommonArgs, scenario: &str, f: f64) -> Result<(), CliError> {
    let config = format!(
        "command=solve scenario={scenario} f={f} seed={} solver={} cost_resolution={}",
        common.seed,
        solver_name(common.solver.into()),
        fmt_f64(common.cost_resolution)
    );
    log_config(&config, &common.out);
    let file = load_scenario(scenario)?;
    let inst = instantiate_scenario(&file, common.seed, Some(f))?;
    let report = solve(&inst, common.solver.into(), common.cost_resolution)?;
    let rho = crate::metrics::personalization_level(&inst, &report.assignment);
    let relax = lp_relaxation_bound(&inst)?;
    ensure_out_dir(&common.out)?;
    let json = AssignmentJson {
        version: VERSION.into(),
        config,
        root_seed: common.seed,
        chosen: report.assignment.chosen.clone(),
        objective: report.assignment.objective,
        total_cost: report.assignment.total_cost,
        budget: inst.budget,
        solver: solver_name(report.kind).into(),
        nodes_or_states: report.nodes_or_states,
        lp_bound: report.lp_bound,
        lp_relaxation_bound: relax,
        personalization_level: rho,
    };
    let path = common.out.join("assignment.json");
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::Io(format!("cannot serialize assignment: {e}")))?;
    write_file(&path, &text)?;
    println!(
        "objective {} cost {} / budget {} rho {} -> {}",
        fmt_f64(report.assignment.objective),
        fmt_f64(report.assignment.total_cost),
        fmt_f64(inst.budget),
        fmt_f64(rho),
        path.display()
    );
    Ok(())
}

fn sweep_spec(common: &CommonArgs, grid: Vec<f64>) -> SweepSpec {
    SweepSpec {
        repetitions: common.repetitions,
        root_seed: common.seed,
        solver: common.solver.into(),
        grid,
        cost_resolution: common.cost_resolution,
        threads: common.threads,
    }
}

fn cmd_q1(common: CommonArgs, grid_text: &str) -> Result<(), CliError> {
    let grid = parse_grid(grid_text)?;
    let config = format!(
        "command=q1 grid={grid_text} repetitions={} seed={} solver={} cost_resolution={}",
        common.repetitions,
        common.seed,
        solver_name(common.solver.into()),
        fmt_f64(common.cost_resolution)
    );
    log_config(&config, &common.out);
    let out = run_q1(&sweep_spec(&common, grid))?;
    ensure_out_dir(&common.out)?;
    let header = csv_header(&config, common.seed);

    let mut samples = header.clone();
    samples.push_str("f,repetition,rho,objective,total_cost\n");
    for s in &out.samples {
        let _ = writeln!(
            samples,
            "{},{},{},{},{}",
            fmt_f64(s.x),
            s.repetition,
            fmt_f64(s.rho),
            fmt_f64(s.objective),
            fmt_f64(s.total_cost)
        );
    }
    write_file(&common.out.join("q1_samples.csv"), &samples)?;

    let mut agg = header.clone();
    agg.push_str("f,mean_rho,std_rho\n");
    for p in &out.points {
        let _ = writeln!(
            agg,
            "{},{},{}",
            fmt_f64(p.x),
            fmt_f64(p.mean_rho),
            fmt_f64(p.std_rho)
        );
    }
    write_file(&common.out.join("q1_aggregate.csv"), &agg)?;

    write_file(
        &common.out.join("q1_fit.csv"),
        &fit_csv(&out.fit, &["intercept", "slope"], &header),
    )?;
    println!(
        "q1: fit rho = {}*f + {} (R^2 = {}) -> {}",
        fmt_f64(out.fit.coefficients[1]),
        fmt_f64(out.fit.coefficients[0]),
        fmt_f64(out.fit.r_squared),
        common.out.display()
    );
    Ok(())
}

const Q2_FIT_COEF_NAMES: [&str; 5] = [
    "intercept",
    "delta_oeb",
    "delta_oeb_sq",
    "delta_csr",
    "delta_oeb_delta_csr",
];

fn cmd_q2(common: CommonArgs, f: f64) -> Result<(), CliError> {
    if f < 0.0 {
        return Err(CliError::Config(format!("f must be >= 0, got {f}")));
    }
    let config = format!(
        "command=q2 f={} repetitions={} seed={} solver={} cost_resolution={}",
        fmt_f64(f),
        common.repetitions,
        common.seed,
        solver_name(common.solver.into()),
        fmt_f64(common.cost_resolution)
    );
    log_config(&config, &common.out);
    let out = run_q2(
        common.repetitions,
        f,
        common.seed,
        common.solver.into(),
        common.cost_resolution,
        common.threads,
    )?;
    ensure_out_dir(&common.out)?;
    let header = csv_header(&config, common.seed);

    let mut hm = header.clone();
    hm.push_str("delta_oeb_bin,delta_csr_bin,normalized_count\n");
    for (&(bo, bc), &v) in &out.heatmap.cells {
        let w = out.heatmap.bin_width;
        let _ = writeln!(
            hm,
            "{},{},{}",
            fmt_f64(((bo as f64) * w * 1e9).round() / 1e9),
            fmt_f64(((bc as f64) * w * 1e9).round() / 1e9),
            fmt_f64(v)
        );
    }
    write_file(&common.out.join("heatmap.csv"), &hm)?;
    write_file(
        &common.out.join("q2_fit.csv"),
        &fit_csv(&out.fit, &Q2_FIT_COEF_NAMES, &header),
    )?;
    println!(
        "q2: {} personalized selections, {} populated cells, fit R^2 = {} -> {}",
        out.total_selections,
        out.heatmap.cells.len(),
        fmt_f64(out.fit.r_squared),
        common.out.display()
    );
    Ok(())
}

fn default_q3_grid(axis: Q3Axis) -> Vec<f64> {
    match axis {
        Q3Axis::PatientCount => vec![20.0, 60.0, 100.0, 140.0, 180.0],
        Q3Axis::AvgDeltaOeb => vec![0.01, 0.03, 0.05, 0.075, 0.10, 0.15, 0.20, 0.25],
        Q3Axis::AvgDeltaCsr => vec![0.01, 0.04, 0.08, 0.12, 0.16, 0.20],
    }
}

fn cmd_q3(common: CommonArgs, axis: Q3Axis, grid_text: Option<&str>, f: f64) -> Result<(), CliError> {
    let grid = match grid_text {
        Some(t) => parse_grid(t)?,
        None => default_q3_grid(axis),
    };
    let config = format!(
        "command=q3 axis={} grid={} f={} repetitions={} seed={} solver={} cost_resolution={}",
        axis.name(),
        grid_text.unwrap_or("default"),
        fmt_f64(f),
        common.repetitions,
        common.seed,
        solver_name(common.solver.into()),
        fmt_f64(common.cost_resolution)
    );
    log_config(&config, &common.out);
    let points = run_q3(&sweep_spec(&common, grid), axis, f)?;
    ensure_out_dir(&common.out)?;
    let mut csv = csv_header(&config, common.seed);
    csv.push_str("axis,x,mean_rho,std_rho\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            axis.name(),
            fmt_f64(p.x),
            fmt_f64(p.mean_rho),
            fmt_f64(p.std_rho)
        );
    }
    write_file(&common.out.join("q3.csv"), &csv)?;
    println!("q3 {}: {} grid points -> {}", axis.name(), points.len(), common.out.display());
    Ok(())
}

fn cmd_validate(scenario: &str, seed: u64, f: f64) -> Result<(), CliError> {
    let file = load_scenario(scenario)?;
    match instantiate_scenario(&file, seed, Some(f)) {
        Ok(inst) => {
            println!(
                "scenario ok: {} patients, {} treatments, budget {}",
                inst.n_patients(),
                inst.treatments.len(),
                fmt_f64(inst.budget)
            );
            Ok(())
        }
        Err(e) => Err(e),
    }
}
