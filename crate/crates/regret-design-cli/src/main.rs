//! Command-line front end: problem ingestion, solver invocation, sweeps,
//! simulation, application replication, and validation suites.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 solver
//! infeasibility, 4 validation-suite failure.

use regret_design_cli::report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use regret_design::apps::{
    build_ge_problem, build_site_problem, sweep, GeCalibration, SiteTable, SweepRow,
};
use regret_design::ci::{ci_regret, worst_case_interval};
use regret_design::error::Error as LibError;
use regret_design::files::{parse_document, Document, DocumentKind};
use regret_design::gmm::{candidate_sigma, gamma_matrix};
use regret_design::model::{design_bits, DesignProblem, FeasibilitySet, GammaPolicy, NormSpec};
use regret_design::regret::{oracle_alpha_star, oracle_beta_star, EffectiveShrinkage};
use regret_design::solver::{neyman_design, solve, solve_bounded};
use regret_design::validation::{monte_carlo_mse, validation_report, worst_bias_vertex};

use report::{fmt_f64, solution_csv, solution_text, write_atomic};

const GE_CALIBRATION_TOML: &str = include_str!("../data/ge_calibration.toml");
const KARNATAKA_AREAS_TOML: &str = include_str!("../data/karnataka_areas.toml");

/// Thread-count environment variable (overridden by `--threads`).
const THREADS_ENV: &str = "REGRET_DESIGN_THREADS";

#[derive(Parser)]
#[command(
    name = "regret-design",
    about = "Minimax-regret experimental design: arm selection, sample allocation, shrinkage",
    version
)]
struct Cli {
    /// Worker threads (default: REGRET_DESIGN_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a design problem for the regret-optimal design.
    Solve(SolveArgs),
    /// Report the variance/bias oracle values and their designs.
    Oracles(ProblemArgs),
    /// Solve across a budget grid with the Neyman baseline side by side.
    Sweep(SweepArgs),
    /// Confidence-interval-length indices and regret for a moment model.
    Ci(CiArgs),
    /// Monte-Carlo verification of the solved design's MSE.
    Simulate(SimulateArgs),
    /// Run the bundled cash-transfer application end to end.
    ReplicateGe(ReplicateArgs),
    /// Run the bundled site-selection application end to end.
    ReplicateSites(ReplicateArgs),
    /// Run the numerical validation suites (nonzero exit on failure).
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Input problem document (TOML).
    #[arg(long)]
    input: PathBuf,
    /// CSV output path (atomic write).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the total budget.
    #[arg(long)]
    budget: Option<f64>,
    /// Override feasibility with an at-most-k arm cap.
    #[arg(long)]
    max_arms: Option<usize>,
    /// Override the bias ambiguity norm.
    #[arg(long, value_enum)]
    norm: Option<NormFlag>,
    /// Override the shrinkage policy.
    #[arg(long, value_enum)]
    gamma_policy: Option<GammaFlag>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Known bias bound: solve the bounded-bias variant instead.
    #[arg(long)]
    bias_bound: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Budget grid `lo:hi:count`.
    #[arg(long, default_value = "100:2000:39")]
    grid: String,
}

#[derive(Args)]
struct CiArgs {
    /// Input moment-model document with an `[envelope]` section.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated bias radii for the worst-case intervals.
    #[arg(long, default_value = "0")]
    bias_bound: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Replications per report.
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra report at the worst-case bias vertex of this radius.
    #[arg(long)]
    bias_bound: Option<f64>,
}

#[derive(Args)]
struct ReplicateArgs {
    /// Calibration/table document overriding the bundled one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Budget grid `lo:hi:count` (defaults fit the application).
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormFlag {
    Linf,
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum GammaFlag {
    Free,
    ExperimentOnly,
}

enum CliError {
    Config(String),
    Infeasible(String),
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Validation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Validation(m) => m,
        }
    }
}

fn lib_error(e: LibError) -> CliError {
    match e {
        LibError::AllInfeasible
        | LibError::Infeasible { .. }
        | LibError::NonConvergence(_)
        | LibError::NoActiveArm => CliError::Infeasible(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Solve(args) => cmd_solve(args),
        Command::Oracles(args) => cmd_oracles(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ci(args) => cmd_ci(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::ReplicateGe(args) => cmd_replicate_ge(args),
        Command::ReplicateSites(args) => cmd_replicate_sites(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn read_document(path: &PathBuf) -> CliResult<Document> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_document(&text).map_err(lib_error)
}

fn load_problem(args: &ProblemArgs) -> CliResult<DesignProblem> {
    let doc = read_document(&args.input)?;
    if doc.kind != DocumentKind::DesignProblem {
        return Err(CliError::Config(format!(
            "{} is not a design_problem document",
            args.input.display()
        )));
    }
    let mut problem = doc
        .problem
        .as_ref()
        .expect("kind checked")
        .to_problem()
        .map_err(lib_error)?;
    if let Some(budget) = args.budget {
        problem = problem.with_budget(budget).map_err(lib_error)?;
    }
    if args.max_arms.is_some() || args.norm.is_some() || args.gamma_policy.is_some() {
        problem = rebuild_with_overrides(problem, args)?;
    }
    Ok(problem)
}

fn rebuild_with_overrides(problem: DesignProblem, args: &ProblemArgs) -> CliResult<DesignProblem> {
    use regret_design::model::{ObservationalEvidence, SensitivityVector};
    let feasibility = match args.max_arms {
        Some(k) => FeasibilitySet::AtMostK(k),
        None => problem.feasibility().clone(),
    };
    let norm = match args.norm {
        Some(NormFlag::Linf) => NormSpec::Linf,
        Some(NormFlag::L1) => NormSpec::L1,
        Some(NormFlag::L2) => NormSpec::L2,
        None => problem.norm().clone(),
    };
    let gamma_policy = match args.gamma_policy {
        Some(GammaFlag::Free) => GammaPolicy::Free,
        Some(GammaFlag::ExperimentOnly) => GammaPolicy::ExperimentOnly,
        None => problem.gamma_policy(),
    };
    DesignProblem::new(
        SensitivityVector::new(problem.omega().to_vec()).map_err(lib_error)?,
        ObservationalEvidence::new(
            problem.obs().theta().iter().cloned().collect(),
            problem.sigma_obs().clone(),
        )
        .map_err(lib_error)?,
        problem.arms().to_vec(),
        problem.budget(),
        feasibility,
        norm,
        gamma_policy,
    )
    .map_err(lib_error)
}

fn emit(output: &Option<PathBuf>, csv: &str) -> CliResult<()> {
    if let Some(path) = output {
        write_atomic(path, csv.as_bytes())
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let (sol, title) = match args.bias_bound {
        Some(b) => (
            solve_bounded(&problem, b).map_err(lib_error)?,
            format!("bounded-bias regret-optimal design (bound {b})"),
        ),
        None => (
            solve(&problem).map_err(lib_error)?,
            "regret-optimal design".to_string(),
        ),
    };
    print!("{}", solution_text(&problem, &sol, &title));
    emit(&args.problem.output, &solution_csv(&problem, &sol))
}

fn cmd_oracles(args: ProblemArgs) -> CliResult<()> {
    let problem = load_problem(&args)?;
    let (alpha_star, (ax, agamma)) = oracle_alpha_star(&problem).map_err(lib_error)?;
    let (beta_star, bx) = oracle_beta_star(&problem).map_err(lib_error)?;
    println!("variance oracle : {} at design {}", fmt_f64(alpha_star), design_bits(&ax));
    println!(
        "  shrinkage     : [{}]",
        agamma
            .iter()
            .map(|g| format!("{g:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("bias oracle     : {} at design {}", fmt_f64(beta_star), design_bits(&bx));
    let mut csv = String::from("quantity,value,design,gamma\n");
    csv.push_str(&format!(
        "alpha_star,{},{},{}\n",
        fmt_f64(alpha_star),
        design_bits(&ax),
        agamma.iter().map(|g| fmt_f64(*g)).collect::<Vec<_>>().join(";"),
    ));
    csv.push_str(&format!(
        "beta_star,{},{},\n",
        fmt_f64(beta_star),
        design_bits(&bx),
    ));
    emit(&args.output, &csv)
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid must be lo:hi:count, got {text:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid lower bound {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid upper bound {:?}", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid count {:?}", parts[2])))?;
    if count < 2 || hi <= lo || hi.is_nan() || lo.is_nan() {
        return Err(CliError::Config(
            "grid needs hi > lo and at least 2 points".to_string(),
        ));
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

fn sweep_csv(problem: &DesignProblem, rows: &[SweepRow], prefix: &str) -> String {
    let names: Vec<&str> = problem.arms().iter().map(|a| a.name.as_str()).collect();
    let mut csv = String::new();
    csv.push_str(prefix);
    csv.push_str("n_tot,x");
    for n in &names {
        csv.push_str(&format!(",gamma_{n}"));
    }
    for n in &names {
        csv.push_str(&format!(",n_{n}"));
    }
    csv.push_str(",alpha,beta,regret,ney_x");
    for n in &names {
        csv.push_str(&format!(",ney_gamma_{n}"));
    }
    for n in &names {
        csv.push_str(&format!(",ney_n_{n}"));
    }
    csv.push_str(",ney_alpha,ney_beta,ney_regret\n");
    for row in rows {
        csv.push_str(&sweep_row_csv(row, prefix.is_empty(), None));
    }
    csv
}

fn sweep_row_csv(row: &SweepRow, bare: bool, tag: Option<&str>) -> String {
    let mut line = String::new();
    if !bare {
        line.push_str(tag.unwrap_or(""));
        line.push(',');
    }
    line.push_str(&fmt_f64(row.n_tot));
    line.push(',');
    line.push_str(&design_bits(&row.optimal.x_star));
    for g in &row.optimal.gamma_star {
        line.push_str(&format!(",{}", fmt_f64(*g)));
    }
    for n in &row.optimal.n_star {
        line.push_str(&format!(",{}", fmt_f64(*n)));
    }
    line.push_str(&format!(
        ",{},{},{}",
        fmt_f64(row.optimal.breakdown.alpha),
        fmt_f64(row.optimal.breakdown.beta),
        fmt_f64(row.optimal.t_star)
    ));
    line.push(',');
    line.push_str(&design_bits(&row.neyman.x_star));
    for g in &row.neyman.gamma_star {
        line.push_str(&format!(",{}", fmt_f64(*g)));
    }
    for n in &row.neyman.n_star {
        line.push_str(&format!(",{}", fmt_f64(*n)));
    }
    line.push_str(&format!(
        ",{},{},{}\n",
        fmt_f64(row.neyman.breakdown.alpha),
        fmt_f64(row.neyman.breakdown.beta),
        fmt_f64(row.neyman.t_star)
    ));
    line
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let grid = parse_grid(&args.grid)?;
    let builder = |n: f64| problem.clone().with_budget(n);
    let rows = sweep(&builder, &grid).map_err(lib_error)?;
    for row in &rows {
        println!(
            "n_tot {:>10.1}: optimal {} t={:.4} | neyman {} t={:.4}",
            row.n_tot,
            design_bits(&row.optimal.x_star),
            row.optimal.t_star,
            design_bits(&row.neyman.x_star),
            row.neyman.t_star
        );
    }
    emit(&args.problem.output, &sweep_csv(&problem, &rows, ""))
}

fn cmd_ci(args: CiArgs) -> CliResult<()> {
    let doc = read_document(&args.input)?;
    if doc.kind != DocumentKind::MomentModel {
        return Err(CliError::Config(format!(
            "{} is not a moment_model document",
            args.input.display()
        )));
    }
    let model = doc
        .moment_model
        .as_ref()
        .expect("kind checked")
        .to_model()
        .map_err(lib_error)?;
    let env_doc = doc.envelope.as_ref().ok_or_else(|| {
        CliError::Config("ci requires an [envelope] section in the document".to_string())
    })?;
    let envelope = env_doc.to_envelope().map_err(lib_error)?;
    let radii: Vec<f64> = args
        .bias_bound
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad bias radius {t:?}")))
        })
        .collect::<CliResult<_>>()?;

    let mut csv = String::from("record,index,a,c,regret,binding,radius,lower,upper\n");
    let mut best = (0usize, f64::INFINITY);
    for i in 0..model.candidates().len() {
        let b = ci_regret(&envelope, &model, i).map_err(lib_error)?;
        println!(
            "candidate {i}: A = {} C = {} regret = {:.6}",
            fmt_f64(b.alpha),
            fmt_f64(b.beta),
            b.regret
        );
        csv.push_str(&format!(
            "candidate,{i},{},{},{},{},,,\n",
            fmt_f64(b.alpha),
            fmt_f64(b.beta),
            fmt_f64(b.regret),
            b.binding
        ));
        if b.regret < best.1 {
            best = (i, b.regret);
        }
    }
    println!("length-regret optimal candidate: {}", best.0);
    let theta_hat = vec![0.0; model.lambda().ncols()];
    let gamma = gamma_matrix(model.lambda(), &model.candidates()[best.0].w).map_err(lib_error)?;
    let sigma = candidate_sigma(&model, best.0).map_err(lib_error)?;
    for &radius in &radii {
        let iv = worst_case_interval(
            &envelope,
            &gamma,
            &sigma,
            model.experimental_idx(),
            model.norm(),
            &theta_hat,
            radius,
        )
        .map_err(lib_error)?;
        println!(
            "radius {radius}: [{}, {}] (around a zero point estimate)",
            fmt_f64(iv.lower),
            fmt_f64(iv.upper)
        );
        csv.push_str(&format!(
            "interval,{},,,,,{},{},{}\n",
            best.0,
            fmt_f64(radius),
            fmt_f64(iv.lower),
            fmt_f64(iv.upper)
        ));
    }
    emit(&args.output, &csv)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let sol = solve(&problem).map_err(lib_error)?;
    let zero_bias = vec![0.0; problem.dim()];
    let mut reports = vec![(
        "zero-bias".to_string(),
        0.0,
        monte_carlo_mse(&problem, &sol.x_star, &sol.gamma_star, &zero_bias, args.reps, args.seed)
            .map_err(lib_error)?,
    )];
    if let Some(radius) = args.bias_bound {
        let s = EffectiveShrinkage::from_design(&sol.x_star, &sol.gamma_star).map_err(lib_error)?;
        let vertex = worst_bias_vertex(&problem, &s, radius);
        reports.push((
            "worst-vertex".to_string(),
            radius,
            monte_carlo_mse(&problem, &sol.x_star, &sol.gamma_star, &vertex, args.reps, args.seed)
                .map_err(lib_error)?,
        ));
    }
    let mut csv =
        String::from("label,radius,empirical_mse,std_error,theoretical_mse,reps,seed\n");
    for (label, radius, r) in &reports {
        println!(
            "{label}: empirical {} +- {} vs closed form {} ({} reps)",
            fmt_f64(r.empirical_mse),
            fmt_f64(r.std_error),
            fmt_f64(r.theoretical_mse),
            r.reps
        );
        csv.push_str(&format!(
            "{label},{},{},{},{},{},{}\n",
            fmt_f64(*radius),
            fmt_f64(r.empirical_mse),
            fmt_f64(r.std_error),
            fmt_f64(r.theoretical_mse),
            r.reps,
            r.seed
        ));
    }
    emit(&args.problem.output, &csv)
}

fn load_ge_calibration(input: &Option<PathBuf>) -> CliResult<GeCalibration> {
    let doc = match input {
        Some(path) => read_document(path)?,
        None => parse_document(GE_CALIBRATION_TOML).map_err(lib_error)?,
    };
    if doc.kind != DocumentKind::GeCalibration {
        return Err(CliError::Config(
            "expected a ge_calibration document".to_string(),
        ));
    }
    doc.ge_calibration
        .as_ref()
        .expect("kind checked")
        .to_calibration()
        .map_err(lib_error)
}

fn load_site_table(input: &Option<PathBuf>) -> CliResult<SiteTable> {
    let doc = match input {
        Some(path) => read_document(path)?,
        None => parse_document(KARNATAKA_AREAS_TOML).map_err(lib_error)?,
    };
    if doc.kind != DocumentKind::SiteTable {
        return Err(CliError::Config("expected a site_table document".to_string()));
    }
    doc.site_table
        .as_ref()
        .expect("kind checked")
        .to_table()
        .map_err(lib_error)
}

fn replicate_csv(problem: &DesignProblem, per_k: &[(usize, Vec<SweepRow>)]) -> String {
    let mut csv = sweep_csv(problem, &[], "max_arms,");
    for (k, rows) in per_k {
        for row in rows {
            csv.push_str(&sweep_row_csv(row, false, Some(&k.to_string())));
        }
    }
    csv
}

fn cmd_replicate_ge(args: ReplicateArgs) -> CliResult<()> {
    let cal = load_ge_calibration(&args.input)?;
    let grid = parse_grid(args.grid.as_deref().unwrap_or("100:2000:39"))?;
    let mut per_k = Vec::new();
    for k in [1usize, 2] {
        let builder = |n: f64| build_ge_problem(&cal, n, k);
        let rows = sweep(&builder, &grid).map_err(lib_error)?;
        per_k.push((k, rows));
    }
    // Summary: arm switch and budget-1000 comparisons.
    let two_arm = &per_k[1].1;
    let switch = two_arm
        .iter()
        .find(|r| r.optimal.x_star[2])
        .map(|r| r.n_tot);
    match switch {
        Some(n) => println!("two-arm designs bring in the job arm from budget ~{n:.0}"),
        None => println!("two-arm designs never select the job arm on this grid"),
    }
    for (k, _) in &per_k {
        let problem = build_ge_problem(&cal, 1000.0, *k).map_err(lib_error)?;
        let sol = solve(&problem).map_err(lib_error)?;
        let ney = neyman_design(&problem).map_err(lib_error)?;
        println!(
            "budget 1000, up to {k} arm(s): {} | bias x{:.2} below neyman, variance x{:.2} above",
            solution_text(&problem, &sol, "optimal design").trim_end(),
            ney.breakdown.beta / sol.breakdown.beta,
            sol.breakdown.alpha / ney.breakdown.alpha,
        );
    }
    let problem = build_ge_problem(&cal, 1000.0, 2).map_err(lib_error)?;
    emit(&args.output, &replicate_csv(&problem, &per_k))
}

fn cmd_replicate_sites(args: ReplicateArgs) -> CliResult<()> {
    let table = load_site_table(&args.input)?;
    let grid = parse_grid(args.grid.as_deref().unwrap_or("10:80:36"))?;
    let mut per_k = Vec::new();
    for k in [1usize, 2] {
        let builder = |n: f64| build_site_problem(&table, n, k);
        let rows = sweep(&builder, &grid).map_err(lib_error)?;
        per_k.push((k, rows));
    }
    for k in [1usize, 2] {
        let problem = build_site_problem(&table, 52.0, k).map_err(lib_error)?;
        let sol = solve(&problem).map_err(lib_error)?;
        println!(
            "{}",
            solution_text(
                &problem,
                &sol,
                &format!("52 treated villages, up to {k} area(s)")
            )
            .trim_end()
        );
    }
    let problem = build_site_problem(&table, 52.0, 2).map_err(lib_error)?;
    emit(&args.output, &replicate_csv(&problem, &per_k))
}

fn cmd_validate(args: ValidateArgs) -> CliResult<()> {
    let outcomes = validation_report(args.seed);
    let mut csv = String::from("suite,passed,detail\n");
    let mut all_ok = true;
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        csv.push_str(&format!(
            "{},{},{}\n",
            o.name,
            u8::from(o.passed),
            o.detail.replace(',', ";")
        ));
        all_ok &= o.passed;
    }
    emit(&args.output, &csv)?;
    if all_ok {
        println!("all {} suites passed", outcomes.len());
        Ok(())
    } else {
        Err(CliError::Validation(
            "one or more validation suites failed".to_string(),
        ))
    }
}
