//! The `lexmarket` command line.
//!
//! Every command prints one JSON report (or aligned text with `--human`) and exits with
//! 0 on success or membership, 1 on a definite negative carrying a witness, 2 on input
//! errors and 3 when the solver is inconclusive.

use crate::core_stability::{
    block_search, is_fpo, is_ir, is_stable, recheck_witness, reject_search, verify_in_replica,
    BlockMode, CoalitionWitness, CoreError, Replicas, StabilityVerdict, StabilityWitness,
};
use crate::economy::{validate_economy, Allocation, Economy};
use crate::hyperplane_certifier::{certify, strengthen, CertError, CertifyOutcome};
use crate::io::{self, IoError};
use crate::lde_model::{
    check_aggregate_cbp, check_simple_prices, check_strong_cbp, check_weak_cbp, verify_lde,
    LexPriceSystem, ModelError, VerificationReport,
};
use crate::lde_solver::{extract_lde, ExtractParams, FixedPointParams, SolverError};
use crate::lp_kernel::{decompose_allocation, reconstruct, BvnError};
use crate::rational::{fmt_q, Q};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "LEXMARKET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lexmarket", version, about = "Lexicographic dividend equilibria and core stability for matching markets with endowments")]
pub struct Cli {
    /// Print aligned text tables instead of JSON
    #[arg(long, global = true)]
    pub human: bool,
    /// Directory receiving the output files of the command
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the invariants of an economy file
    Validate { economy: PathBuf },
    /// Verify an allocation and price system as a lexicographic dividend equilibrium
    VerifyLde {
        economy: PathBuf,
        allocation: PathBuf,
        prices: PathBuf,
        #[arg(long, value_enum, default_value_t = Cbp::Strong)]
        cbp: Cbp,
    },
    /// Compute an equilibrium and verify it exactly
    Solve {
        economy: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Decide membership of an allocation in a core notion
    Core {
        economy: PathBuf,
        allocation: PathBuf,
        #[arg(long, value_enum)]
        notion: Notion,
        /// Replica level for the rejective core: a positive integer or `inf`
        #[arg(long, default_value = "1", value_parser = parse_replicas)]
        replicas: Replicas,
    },
    /// Build strong-CBP prices for an allocation, or refute rejective-core membership
    Certify { economy: PathBuf, allocation: PathBuf },
    /// Write an allocation as a lottery over deterministic assignments
    Decompose { allocation: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Cbp {
    Strong,
    Weak,
    Aggregate,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Notion {
    Fpo,
    Ir,
    Weak,
    Strong,
    Stable,
    Rejective,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Grid `eps = 2^-t` for `t` in `T_MIN..T_MAX`
    #[arg(long, default_value = "4..16", value_parser = parse_grid)]
    pub eps_grid: (u32, u32),
    /// Fixed-point residual tolerance
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Random restarts per grid point
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest denominator used when rationalizing limits
    #[arg(long, default_value_t = 1_000_000)]
    pub denominator_cap: u64,
}

fn parse_replicas(s: &str) -> Result<Replicas, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Replicas::Infinite);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `inf`, got `{s}`")),
        Ok(n) => Ok(Replicas::Finite(n)),
    }
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected T_MIN..T_MAX, got `{s}`"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad T_MIN in `{s}`"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad T_MAX in `{s}`"))?;
    if a == 0 || a > b || b > 60 {
        return Err(format!("need 1 <= T_MIN <= T_MAX <= 60, got `{s}`"));
    }
    Ok((a, b))
}

/// Result of one invocation: exit code, stdout text and diagnostics for stderr.
#[derive(Debug, Clone)]
pub struct Execution {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    role: &'static str,
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunReport {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    options: BTreeMap<&'static str, String>,
    inputs: Vec<InputDigest>,
    exit_code: i32,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    result: Value,
}

fn status_of(code: i32) -> &'static str {
    match code {
        EXIT_OK => "success",
        EXIT_NEGATIVE => "negative",
        EXIT_INPUT => "input_error",
        _ => "inconclusive",
    }
}

/// Failure of a command before a verdict was reached.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
    fn inconclusive(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INCONCLUSIVE,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Length(_) | ModelError::Lottery(_) => Failure::input(e.to_string()),
            _ => Failure::inconclusive(e.to_string()),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Lp(_) => Failure::inconclusive(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<CertError> for Failure {
    fn from(e: CertError) -> Self {
        match e {
            CertError::Allocation(_) | CertError::Core(CoreError::TooLarge(_)) => {
                Failure::input(e.to_string())
            }
            CertError::Vertex(_) => Failure::input(e.to_string()),
            _ => Failure::inconclusive(e.to_string()),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Shape(_) | SolverError::Grid(_) | SolverError::Economy(_) => {
                Failure::input(e.to_string())
            }
            _ => Failure::inconclusive(e.to_string()),
        }
    }
}

/// Everything a command produced: verdict code, JSON result, text rendering and files.
struct Output {
    code: i32,
    result: Value,
    human: String,
    files: Vec<(String, String)>,
}

struct Context {
    inputs: Vec<InputDigest>,
}

impl Context {
    fn read(&mut self, role: &'static str, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = io::read_file(path)?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(InputDigest {
            role,
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(bytes)
    }

    fn economy(&mut self, path: &Path) -> Result<Economy, Failure> {
        let e = io::parse_economy(&self.read("economy", path)?)?;
        let violations = validate_economy(&e);
        if let Some(v) = violations.first() {
            return Err(Failure::input(format!(
                "invalid economy ({} violations; first: {}: {})",
                violations.len(),
                v.invariant,
                v.detail
            )));
        }
        Ok(e)
    }

    fn allocation(&mut self, path: &Path, e: Option<&Economy>) -> Result<Allocation, Failure> {
        let x = io::parse_allocation(&self.read("allocation", path)?)?;
        if let Some(e) = e {
            if x.n_rows() != e.n_agents() || x.n_cols() != e.n_goods() {
                return Err(Failure::input(format!(
                    "allocation is {}x{}, economy has {} agents and {} goods",
                    x.n_rows(),
                    x.n_cols(),
                    e.n_agents(),
                    e.n_goods()
                )));
            }
        }
        Ok(x)
    }

    fn prices(&mut self, path: &Path, e: &Economy) -> Result<LexPriceSystem, Failure> {
        let sys = io::parse_price_system(&self.read("prices", path)?)?;
        sys.check_shape(e)?;
        Ok(sys)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::VerifyLde { .. } => "verify-lde",
        Command::Solve { .. } => "solve",
        Command::Core { .. } => "core",
        Command::Certify { .. } => "certify",
        Command::Decompose { .. } => "decompose",
    }
}

fn options_of(cli: &Cli) -> BTreeMap<&'static str, String> {
    let mut o = BTreeMap::new();
    match &cli.command {
        Command::VerifyLde { cbp, .. } => {
            o.insert("cbp", format!("{cbp:?}").to_lowercase());
        }
        Command::Solve { solver, .. } => {
            o.insert("eps_grid", format!("{}..{}", solver.eps_grid.0, solver.eps_grid.1));
            o.insert("tol", format!("{:e}", solver.tol));
            o.insert("restarts", solver.restarts.to_string());
            o.insert("seed", solver.seed.to_string());
            o.insert("denominator_cap", solver.denominator_cap.to_string());
        }
        Command::Core {
            notion, replicas, ..
        } => {
            o.insert("notion", format!("{notion:?}").to_lowercase());
            o.insert(
                "replicas",
                match replicas {
                    Replicas::Finite(n) => n.to_string(),
                    Replicas::Infinite => "inf".into(),
                },
            );
        }
        _ => {}
    }
    o
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Execution
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Execution {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Execution {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Execution {
    let started = Instant::now();
    let mut ctx = Context { inputs: Vec::new() };
    let outcome = match &cli.command {
        Command::Validate { economy } => cmd_validate(&mut ctx, economy),
        Command::VerifyLde {
            economy,
            allocation,
            prices,
            cbp,
        } => cmd_verify_lde(&mut ctx, economy, allocation, prices, *cbp),
        Command::Solve { economy, solver } => cmd_solve(&mut ctx, economy, solver),
        Command::Core {
            economy,
            allocation,
            notion,
            replicas,
        } => cmd_core(&mut ctx, economy, allocation, *notion, *replicas),
        Command::Certify {
            economy,
            allocation,
        } => cmd_certify(&mut ctx, economy, allocation),
        Command::Decompose { allocation } => cmd_decompose(&mut ctx, allocation),
    };
    let (code, result, human, files, error) = match outcome {
        Ok(o) => (o.code, o.result, o.human, o.files, None),
        Err(f) => (f.code, Value::Null, String::new(), Vec::new(), Some(f.message)),
    };
    let report = RunReport {
        tool: "lexmarket",
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command),
        options: options_of(cli),
        inputs: ctx.inputs,
        exit_code: code,
        status: status_of(code),
        error: error.clone(),
        result,
    };
    let report_json = io::to_json_string(&report);
    let mut stderr = String::new();
    if let Some(dir) = &cli.out {
        let mut all = files;
        all.push(("report.json".into(), report_json.clone()));
        for (name, contents) in all {
            if let Err(e) = io::write_file(&dir.join(&name), &contents) {
                stderr.push_str(&format!("error: {e}\n"));
                return Execution {
                    code: EXIT_INPUT,
                    stdout: String::new(),
                    stderr,
                };
            }
        }
    }
    let stdout = if cli.human {
        let mut s = format!("lexmarket {}: {}\n", report.command, report.status);
        for d in &report.inputs {
            s.push_str(&format!("  {:<10} {} (sha256 {})\n", d.role, d.path, &d.sha256[..16]));
        }
        if let Some(err) = &error {
            s.push_str(&format!("error: {err}\n"));
        }
        s.push_str(&human);
        s.push_str(&format!("elapsed {:.3}s\n", started.elapsed().as_secs_f64()));
        s
    } else {
        report_json
    };
    if let Some(err) = error {
        stderr.push_str(&format!("error: {err}\n"));
    }
    Execution {
        code,
        stdout,
        stderr,
    }
}

/// Runs the binary: configures the thread pool, executes and prints.
pub fn main_entry() -> i32 {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot configure {n} threads: {e}");
                    return EXIT_INPUT;
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return EXIT_INPUT;
            }
        }
    }
    let exec = run(std::env::args_os());
    print!("{}", exec.stdout);
    eprint!("{}", exec.stderr);
    exec.code
}

// ---------------------------------------------------------------------------------------
// text rendering

/// Left-aligned columns separated by two spaces.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (c, cell) in r.iter().enumerate().take(cols) {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  ", w = width[c]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(|s| s.as_str()).collect()));
    }
    out
}

fn matrix_table(corner: &str, row_labels: &[String], col_labels: &[String], m: &[Vec<Q>]) -> String {
    let mut headers = vec![corner];
    headers.extend(col_labels.iter().map(|s| s.as_str()));
    let rows: Vec<Vec<String>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = vec![row_labels.get(i).cloned().unwrap_or_else(|| (i + 1).to_string())];
            v.extend(r.iter().map(fmt_q));
            v
        })
        .collect();
    text_table(&headers, &rows)
}

fn currency_labels(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("p({k})")).collect()
}

fn price_tables(e: &Economy, sys: &LexPriceSystem) -> String {
    let mut s = String::from("prices\n");
    s.push_str(&matrix_table("currency", &currency_labels(sys.d), &e.good_labels, &sys.p));
    s.push_str("dividends\n");
    s.push_str(&matrix_table(
        "currency",
        &(1..=sys.d).map(|k| format!("alpha({k})")).collect::<Vec<_>>(),
        &e.agent_labels,
        &sys.alpha,
    ));
    s
}

fn report_table(r: &VerificationReport) -> String {
    let rows: Vec<Vec<String>> = r
        .conditions
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                if c.passed { "pass" } else { "FAIL" }.into(),
                c.agent.map_or(String::new(), |a| a.to_string()),
                c.currency.map_or(String::new(), |k| k.to_string()),
                c.detail.clone(),
            ]
        })
        .collect();
    text_table(&["check", "status", "agent", "currency", "detail"], &rows)
}

fn witness_table(w: &CoalitionWitness) -> String {
    let rows: Vec<Vec<String>> = w
        .members
        .iter()
        .map(|m| {
            vec![
                m.agent.to_string(),
                format!("{:?}", m.role).to_lowercase(),
                fmt_q(&m.multiplicity),
                format!("({})", m.y.iter().map(fmt_q).collect::<Vec<_>>().join(", ")),
                if m.strict { "yes" } else { "no" }.into(),
            ]
        })
        .collect();
    text_table(&["agent", "brings", "multiplicity", "consumes", "strict"], &rows)
}

fn verdict_text(v: &StabilityVerdict) -> String {
    let mut s = format!(
        "{}: {}\n",
        v.notion,
        if v.verdict { "member" } else { "not a member" }
    );
    match &v.witness {
        Some(StabilityWitness::Coalition(w)) => {
            s.push_str(&format!("coalition witness (slack {})\n", fmt_q(&w.slack)));
            s.push_str(&witness_table(w));
        }
        Some(StabilityWitness::Improvement { rows }) => {
            s.push_str("Pareto improvement\n");
            let labels: Vec<String> = (1..=rows.len()).map(|i| i.to_string()).collect();
            let cols: Vec<String> = (1..=rows.first().map_or(0, |r| r.len())).map(|j| j.to_string()).collect();
            s.push_str(&matrix_table("agent", &labels, &cols, rows));
        }
        Some(StabilityWitness::Agent {
            agent,
            allocation_utility,
            endowment_utility,
        }) => s.push_str(&format!(
            "agent {agent} gets {} but owns {}\n",
            fmt_q(allocation_utility),
            fmt_q(endowment_utility)
        )),
        None => {}
    }
    s
}

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

// ---------------------------------------------------------------------------------------
// commands

fn cmd_validate(ctx: &mut Context, path: &Path) -> Result<Output, Failure> {
    let e = io::parse_economy(&ctx.read("economy", path)?)?;
    let violations = validate_economy(&e);
    let valid = violations.is_empty();
    let mut human = format!(
        "{} agents, {} goods: {}\n",
        e.n_agents(),
        e.n_goods(),
        if valid { "valid" } else { "invalid" }
    );
    if !valid {
        let rows: Vec<Vec<String>> = violations
            .iter()
            .map(|v| {
                vec![
                    v.invariant.clone(),
                    v.agent.map_or(String::new(), |a| a.to_string()),
                    v.good.map_or(String::new(), |g| g.to_string()),
                    v.detail.clone(),
                ]
            })
            .collect();
        human.push_str(&text_table(&["invariant", "agent", "good", "detail"], &rows));
    }
    Ok(Output {
        code: if valid { EXIT_OK } else { EXIT_NEGATIVE },
        result: json!({
            "valid": valid,
            "agents": e.n_agents(),
            "goods": e.n_goods(),
            "violations": violations,
        }),
        human,
        files: Vec::new(),
    })
}

fn cmd_verify_lde(
    ctx: &mut Context,
    economy: &Path,
    allocation: &Path,
    prices: &Path,
    cbp: Cbp,
) -> Result<Output, Failure> {
    let e = ctx.economy(economy)?;
    let x = ctx.allocation(allocation, Some(&e))?;
    let sys = ctx.prices(prices, &e)?;
    let mut sections: Vec<(&str, VerificationReport)> = vec![("lde", verify_lde(&e, &x, &sys)?)];
    if matches!(cbp, Cbp::Strong | Cbp::All) {
        sections.push(("strong_cbp", check_strong_cbp(&e, &x, &sys)?));
    }
    if matches!(cbp, Cbp::Weak | Cbp::All) {
        sections.push(("weak_cbp", check_weak_cbp(&e, &x, &sys)?));
    }
    if matches!(cbp, Cbp::Aggregate | Cbp::All) {
        sections.push(("aggregate_cbp", check_aggregate_cbp(&e, &x, &sys)?));
    }
    let verdict = sections.iter().all(|(_, r)| r.verdict);
    let mut human = format!("verdict: {}\n", if verdict { "pass" } else { "fail" });
    human.push_str(&format!("simple prices: {}\n", check_simple_prices(&sys)));
    let mut checks = serde_json::Map::new();
    for (name, r) in &sections {
        human.push_str(&format!("[{name}]\n"));
        human.push_str(&report_table(r));
        checks.insert((*name).to_string(), json(r));
    }
    Ok(Output {
        code: if verdict { EXIT_OK } else { EXIT_NEGATIVE },
        result: json!({
            "verdict": verdict,
            "simple_prices": check_simple_prices(&sys),
            "checks": Value::Object(checks),
        }),
        human,
        files: Vec::new(),
    })
}

fn cmd_solve(ctx: &mut Context, economy: &Path, args: &SolverArgs) -> Result<Output, Failure> {
    let e = ctx.economy(economy)?;
    if !args.tol.is_finite() || args.tol <= 0.0 {
        return Err(Failure::input(format!("--tol must be positive, got {}", args.tol)));
    }
    if args.denominator_cap == 0 {
        return Err(Failure::input("--denominator-cap must be positive"));
    }
    let params = ExtractParams {
        fixed_point: FixedPointParams {
            residual_tol: args.tol,
            restarts: args.restarts,
            seed: args.seed,
            ..FixedPointParams::default()
        },
        t_min: args.eps_grid.0,
        t_max: args.eps_grid.1,
        denominator_cap: args.denominator_cap,
    };
    let out = extract_lde(&e, &params)?;
    let samples: Vec<Value> = out
        .curve
        .samples
        .iter()
        .map(|s| {
            json!({
                "eps": s.eps,
                "residual": s.eq.residual,
                "alpha": s.eq.alpha,
                "p": s.eq.p,
                "lambda": s.eq.lambda,
            })
        })
        .collect();
    let code = if out.report.verdict {
        EXIT_OK
    } else {
        EXIT_INCONCLUSIVE
    };
    let mut human = format!(
        "construction: {}\nverdict: {}\ncurve: {} samples, {} dropped\n",
        json(&out.path).as_str().unwrap_or(""),
        if out.report.verdict { "verified" } else { "unverified" },
        out.curve.samples.len(),
        out.curve.dropped.len()
    );
    human.push_str("allocation\n");
    human.push_str(&matrix_table("agent", &e.agent_labels, &e.good_labels, &out.x.rows));
    human.push_str(&price_tables(&e, &out.system));
    human.push_str(&report_table(&out.report));
    let files = vec![
        ("allocation.json".to_string(), io::to_json_string(&out.x)),
        ("prices.json".to_string(), io::to_json_string(&out.system)),
        ("curve.csv".to_string(), out.curve.to_csv()),
    ];
    Ok(Output {
        code,
        result: json!({
            "verdict": out.report.verdict,
            "construction": out.path,
            "allocation": out.x,
            "prices": out.system,
            "report": out.report,
            "decomposition": out.decomposition,
            "decomposition_error": out.decomposition_error,
            "curve": {"samples": samples, "dropped": out.curve.dropped},
            "attempts": out.attempts,
        }),
        human,
        files,
    })
}

fn witness_recheck(e: &Economy, x: &Allocation, v: &StabilityVerdict) -> Option<Value> {
    let Some(StabilityWitness::Coalition(w)) = &v.witness else {
        return None;
    };
    if !v.notion.starts_with("rejective") {
        return None;
    }
    let direct = recheck_witness(e, x, w);
    let replica = verify_in_replica(e, x, w);
    Some(json!({
        "recheck": direct.as_ref().map(|_| "ok".to_string()).unwrap_or_else(|m| m.clone()),
        "replica_recheck": match replica {
            Ok(n) => json!({"replicas": n, "status": "ok"}),
            Err(m) => json!({"status": m}),
        },
    }))
}

fn cmd_core(
    ctx: &mut Context,
    economy: &Path,
    allocation: &Path,
    notion: Notion,
    replicas: Replicas,
) -> Result<Output, Failure> {
    let e = ctx.economy(economy)?;
    let x = ctx.allocation(allocation, Some(&e))?;
    x.check_feasible(&e)
        .map_err(|err| Failure::input(err.to_string()))?;
    let v = match notion {
        Notion::Fpo => is_fpo(&e, &x)?,
        Notion::Ir => is_ir(&e, &x)?,
        Notion::Weak => block_search(&e, &x, BlockMode::StrongBlocking)?,
        Notion::Strong => block_search(&e, &x, BlockMode::WeakBlocking)?,
        Notion::Stable => is_stable(&e, &x)?,
        Notion::Rejective => reject_search(&e, &x, replicas)?,
    };
    let recheck = witness_recheck(&e, &x, &v);
    let mut result = json(&v);
    if let (Some(r), Value::Object(map)) = (recheck, &mut result) {
        map.insert("witness_check".into(), r);
    }
    Ok(Output {
        code: if v.verdict { EXIT_OK } else { EXIT_NEGATIVE },
        human: verdict_text(&v),
        result,
        files: Vec::new(),
    })
}

fn cmd_certify(ctx: &mut Context, economy: &Path, allocation: &Path) -> Result<Output, Failure> {
    let e = ctx.economy(economy)?;
    let x = ctx.allocation(allocation, Some(&e))?;
    match certify(&e, &x)? {
        CertifyOutcome::Certified {
            system,
            report,
            trace,
        } => {
            let (strong, strong_report) = strengthen(&e, &x, &system)?;
            let verdict = report.verdict && strong_report.verdict;
            let mut human = String::from("certified prices\n");
            human.push_str(&price_tables(&e, &system));
            human.push_str(&report_table(&report));
            human.push_str("strengthened prices\n");
            human.push_str(&price_tables(&e, &strong.system));
            human.push_str(&report_table(&strong_report));
            Ok(Output {
                code: if verdict { EXIT_OK } else { EXIT_INCONCLUSIVE },
                result: json!({
                    "outcome": "certified",
                    "verdict": verdict,
                    "certified": {"prices": system, "report": report, "trace": trace},
                    "strengthened": {
                        "prices": strong.system,
                        "modifications": json(&strong)["modifications"],
                        "report": strong_report,
                    },
                }),
                human,
                files: vec![
                    ("prices.json".into(), io::to_json_string(&strong.system)),
                    ("certified-prices.json".into(), io::to_json_string(&system)),
                ],
            })
        }
        CertifyOutcome::Refuted {
            witness,
            replica_level,
            trace,
        } => {
            let recheck = recheck_witness(&e, &x, &witness);
            let mut human = format!(
                "refuted: the allocation is not in the rejective core{}\n",
                replica_level.map_or(String::new(), |n| format!(" (witness verified with {n} replicas)"))
            );
            human.push_str(&witness_table(&witness));
            Ok(Output {
                code: EXIT_NEGATIVE,
                result: json!({
                    "outcome": "refuted",
                    "verdict": false,
                    "witness": witness,
                    "replica_level": replica_level,
                    "recheck": recheck.map(|_| "ok".to_string()).unwrap_or_else(|m| m),
                    "trace": trace,
                }),
                human,
                files: vec![("witness.json".into(), io::to_json_string(&witness))],
            })
        }
    }
}

fn cmd_decompose(ctx: &mut Context, allocation: &Path) -> Result<Output, Failure> {
    let x = ctx.allocation(allocation, None)?;
    let supply = x.column_sums();
    let terms = decompose_allocation(&x.rows, &supply).map_err(|err| match err {
        BvnError::NotBistochastic(_) => Failure::input(err.to_string()),
        BvnError::NoPermutation => Failure::inconclusive(err.to_string()),
    })?;
    let n = x.n_rows();
    let exact = reconstruct(&terms, n, x.n_cols()) == x.rows;
    let listed: Vec<Value> = terms
        .iter()
        .map(|t| {
            json!({
                "weight": fmt_q(&t.weight),
                "assignment": t.perm.iter().map(|j| j + 1).collect::<Vec<_>>(),
            })
        })
        .collect();
    let rows: Vec<Vec<String>> = terms
        .iter()
        .map(|t| {
            vec![
                fmt_q(&t.weight),
                t.perm.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" "),
            ]
        })
        .collect();
    let mut human = format!(
        "{} assignments, reconstruction {}\n",
        terms.len(),
        if exact { "exact" } else { "MISMATCH" }
    );
    human.push_str(&text_table(&["weight", "goods of agents 1..n"], &rows));
    let result = json!({
        "terms": listed,
        "count": terms.len(),
        "reconstruction_exact": exact,
    });
    Ok(Output {
        code: if exact { EXIT_OK } else { EXIT_INCONCLUSIVE },
        result: result.clone(),
        human,
        files: vec![("decomposition.json".into(), io::to_json_string(&result))],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_replica_parsers() {
        assert_eq!(parse_grid("4..16"), Ok((4, 16)));
        assert!(parse_grid("0..3").is_err());
        assert!(parse_grid("5..4").is_err());
        assert_eq!(parse_replicas("inf"), Ok(Replicas::Infinite));
        assert_eq!(parse_replicas("3"), Ok(Replicas::Finite(3)));
        assert!(parse_replicas("0").is_err());
    }

    #[test]
    fn table_aligns_columns() {
        let t = text_table(&["a", "bb"], &[vec!["xxx".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxxx  1\n");
    }

    #[test]
    fn usage_errors_exit_two() {
        let exec = run(["lexmarket", "core"]);
        assert_eq!(exec.code, EXIT_INPUT);
        let exec = run(["lexmarket", "validate", "/nonexistent/economy.json"]);
        assert_eq!(exec.code, EXIT_INPUT);
        assert!(exec.stdout.contains("\"status\": \"input_error\""));
    }
}
