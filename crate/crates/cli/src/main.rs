use clap::{Args, Parser, Subcommand};
use fieldex::covmodels::CovarianceModel;
use fieldex::fieldsim::write_dump;
use fieldex::harness::{
    convergence_study, fmt_f64, plan_lattice, replicate_field, resolve_norming, run_experiment, tail_validation,
    write_outputs, ExperimentConfig,
};
use fieldex::limitlaws::{evaluate, LimitParams, Theorem};
use fieldex::pickands::{simulate_paths, BivariateTable, Estimator, PickandsConfig};
use fieldex::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

mod manifest;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "fieldex", version, about = "Joint extremes of Gaussian fields on continuous domains and grids")]
struct Cli {
    /// Worker threads for simulation.
    #[arg(long, global = true, env = "FIELDEX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one replication of the configured field.
    Simulate(SimulateArgs),
    /// Monte Carlo estimate of a Pickands constant.
    Pickands(PickandsArgs),
    /// Evaluate a limit distribution on an argument grid.
    LimitCdf(LimitCdfArgs),
    /// Run an experiment and check its acceptance thresholds.
    Verify(ConfigArgs),
    /// Print the norming constants for a configuration.
    Norming(ConfigArgs),
    /// Exact grid tail probability against the single-point asymptotic.
    TailCheck(TailArgs),
    /// Run a configuration over a ladder of domain sizes.
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    rep: u64,
    /// Also write the binary FEXS dump.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PickandsArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 64.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grid spacing; 0 selects the continuous constant.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, requires = "y")]
    x: Option<f64>,
    #[arg(long, requires = "x")]
    y: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct LimitCdfArgs {
    #[arg(long)]
    theorem: u32,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Values used for all four arguments unless overridden.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    x1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    y1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    x2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    y2: Option<Vec<f64>>,
    /// Pickands constants file, required for theorem 2.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TailArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    u: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ladder: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings for the Pickands path set behind theorem 2.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ConstantsFile {
    alpha: f64,
    a: f64,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default)]
    step: Option<f64>,
    #[serde(default = "default_reps")]
    reps: usize,
    #[serde(default)]
    seed: u64,
    /// Overrides for the estimated constants.
    #[serde(default)]
    h_alpha: Option<f64>,
    #[serde(default)]
    h_a_alpha: Option<f64>,
}

fn default_lambda() -> f64 {
    64.0
}

fn default_reps() -> usize {
    4000
}

#[derive(Serialize)]
struct PickandsOutput {
    kind: &'static str,
    alpha: f64,
    a: f64,
    lambda: f64,
    step: f64,
    reps: usize,
    value: f64,
    stderr: f64,
    xy: Option<[f64; 2]>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = std::result::Result<bool, Failure>;

fn load_config(path: &Path) -> std::result::Result<(ExperimentConfig, String), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, text))
}

fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `text` to `name` inside `out`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> std::io::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text)
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                so.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// Runs `body` between the two manifest writes when an output directory is given.
fn with_manifest<F>(command: &str, config: Option<(&Path, &str)>, seed: Option<u64>, out: Option<&Path>, body: F) -> CmdResult
where
    F: FnOnce() -> CmdResult,
{
    let Some(dir) = out else {
        return body();
    };
    std::fs::create_dir_all(dir)?;
    let mut m = RunManifest::start(command, config.map(|c| c.0), dir, seed, config.map(|c| content_hash(c.1.as_bytes())));
    m.write(dir)?;
    let t = Instant::now();
    let result = body();
    m.finish(t.elapsed().as_secs_f64(), &result_status(&result), dir)?;
    m.write(dir)?;
    result
}

fn result_status(r: &CmdResult) -> String {
    match r {
        Ok(true) => "pass".into(),
        Ok(false) => "fail".into(),
        Err(Failure::Usage(_)) => "usage-error".into(),
        Err(Failure::Runtime(_)) => "error".into(),
    }
}

fn cmd_simulate(a: &SimulateArgs, _threads: Option<usize>) -> CmdResult {
    let (cfg, text) = load_config(&a.config)?;
    with_manifest("simulate", Some((&a.config, &text)), Some(cfg.master_seed), a.out.as_deref(), || {
        let sample = replicate_field(&cfg, a.rep)?;
        let lat = &sample.lattice;
        let mut csv = String::new();
        match lat.dim() {
            1 => {
                csv.push_str("t,value\n");
                for (k, v) in sample.values.iter().enumerate() {
                    csv.push_str(&format!("{},{}\n", fmt_f64(k as f64 * lat.step()[0]), fmt_f64(*v)));
                }
            }
            _ => {
                csv.push_str("t1,t2,value\n");
                let n2 = lat.counts()[1];
                for (k, v) in sample.values.iter().enumerate() {
                    let (i, j) = (k / n2, k % n2);
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        fmt_f64(i as f64 * lat.step()[0]),
                        fmt_f64(j as f64 * lat.step()[1]),
                        fmt_f64(*v)
                    ));
                }
            }
        }
        emit(a.out.as_deref(), "field.csv", &csv)?;
        if a.dump {
            let dir = a.out.as_deref().ok_or_else(|| Failure::Usage("--dump needs --out".into()))?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("field.fexs"))?);
            write_dump(&sample, &mut f)?;
            f.flush()?;
        }
        Ok(true)
    })
}

fn pickands_config(alpha: f64, lambda: f64, step: f64, reps: usize, seed: u64, a: f64) -> PickandsConfig {
    PickandsConfig {
        alphas: vec![alpha],
        lambda_vec: vec![lambda],
        fine_step: step,
        grid_a: if a > 0.0 { vec![a] } else { vec![] },
        reps,
        seed,
        estimator: Estimator::Shift,
    }
}

fn cmd_pickands(a: &PickandsArgs, threads: Option<usize>) -> CmdResult {
    if a.a < 0.0 {
        return Err(Failure::Usage("--a must be nonnegative".into()));
    }
    if a.x.is_some() && a.a == 0.0 {
        return Err(Failure::Usage("--x/--y need a grid spacing --a > 0".into()));
    }
    let cfg = pickands_config(a.alpha, a.lambda, a.step, a.reps, a.seed, a.a);
    cfg.validate()?;
    with_manifest("pickands", None, Some(a.seed), a.out.as_deref(), || {
        let grids: Vec<Vec<f64>> = if a.a > 0.0 { vec![vec![a.a]] } else { vec![] };
        let set = in_pool(threads, || simulate_paths(&cfg, &grids))?;
        let (kind, est) = match (a.a > 0.0, a.x.zip(a.y)) {
            (false, _) => ("continuous", set.continuous()),
            (true, None) => ("discrete", set.discrete(0)),
            (true, Some((x, y))) => ("bivariate", set.bivariate(0, x, y)),
        };
        let out = PickandsOutput {
            kind,
            alpha: a.alpha,
            a: a.a,
            lambda: a.lambda,
            step: a.step,
            reps: a.reps,
            value: est.value,
            stderr: est.stderr,
            xy: a.x.zip(a.y).map(|(x, y)| [x, y]),
        };
        emit(a.out.as_deref(), "pickands.json", &serde_json::to_string_pretty(&out)?)?;
        Ok(true)
    })
}

fn in_pool<T: Send, F: FnOnce() -> T + Send>(threads: Option<usize>, f: F) -> T {
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn limit_params(a: &LimitCdfArgs, threads: Option<usize>) -> std::result::Result<LimitParams, Failure> {
    let theorem = Theorem::from_number(a.theorem).ok_or_else(|| Failure::Usage(format!("--theorem must be 1, 2 or 3, got {}", a.theorem)))?;
    let p = match theorem {
        Theorem::SparseT1 => LimitParams::sparse(a.r),
        Theorem::DenseT3 => LimitParams::dense(a.r),
        Theorem::PickandsT2 => {
            let path = a.constants.as_ref().ok_or_else(|| Failure::Usage("theorem 2 needs --constants".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let c: ConstantsFile = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let step = c.step.unwrap_or(0.01 * c.a.min(1.0));
            let cfg = pickands_config(c.alpha, c.lambda, step, c.reps, c.seed, c.a);
            if c.a <= 0.0 {
                return Err(Failure::Usage("constants file needs a > 0".into()));
            }
            cfg.validate()?;
            let set = Arc::new(in_pool(threads, || simulate_paths(&cfg, &[vec![c.a]]))?);
            let h = c.h_alpha.unwrap_or(set.continuous().value);
            let hg = c.h_a_alpha.unwrap_or(set.discrete(0).value);
            LimitParams::pickands(a.r, h, hg.min(h), Arc::new(BivariateTable::new(set, 0)?))
        }
    };
    p.validate()?;
    Ok(p)
}

fn cmd_limit_cdf(a: &LimitCdfArgs, threads: Option<usize>) -> CmdResult {
    if !(a.r >= 0.0) {
        return Err(Failure::Usage(format!("--r must be nonnegative, got {}", a.r)));
    }
    let p = limit_params(a, threads)?;
    let pick = |v: &Option<Vec<f64>>| v.clone().unwrap_or_else(|| a.grid.clone());
    let (x1s, y1s, x2s, y2s) = (pick(&a.x1), pick(&a.y1), pick(&a.x2), pick(&a.y2));
    with_manifest("limit-cdf", None, None, a.out.as_deref(), || {
        let mut csv = String::from("theorem,r,x1,y1,x2,y2,value\n");
        for &x1 in &x1s {
            for &y1 in &y1s {
                for &x2 in &x2s {
                    for &y2 in &y2s {
                        let v = evaluate(&p, x1, y1, x2, y2)?;
                        csv.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            a.theorem,
                            fmt_f64(a.r),
                            fmt_f64(x1),
                            fmt_f64(y1),
                            fmt_f64(x2),
                            fmt_f64(y2),
                            fmt_f64(v.value)
                        ));
                    }
                }
            }
        }
        emit(a.out.as_deref(), "limit_cdf.csv", &csv)?;
        Ok(true)
    })
}

fn cmd_verify(a: &ConfigArgs, threads: Option<usize>) -> CmdResult {
    let (cfg, text) = load_config(&a.config)?;
    with_manifest("verify", Some((&a.config, &text)), Some(cfg.master_seed), a.out.as_deref(), || {
        let out = run_experiment(&cfg, threads)?;
        if let Some(dir) = &a.out {
            write_outputs(&out, dir)?;
        }
        let checks = cfg.acceptance.check(&out.report);
        let mut summary = format!("supDefect {}\n", fmt_f64(out.report.sup_defect));
        for c in &checks {
            let tag = if c.passed { "pass" } else { "FAIL" };
            summary.push_str(&format!("{tag} {} = {} (threshold {})\n", c.name, fmt_f64(c.value), fmt_f64(c.threshold)));
        }
        eprint!("{summary}");
        if a.out.is_none() {
            emit(None, "report.json", &serde_json::to_string_pretty(&out.report)?)?;
        }
        Ok(checks.iter().all(|c| c.passed))
    })
}

fn cmd_norming(a: &ConfigArgs, _threads: Option<usize>) -> CmdResult {
    let (cfg, text) = load_config(&a.config)?;
    with_manifest("norming", Some((&a.config, &text)), Some(cfg.master_seed), a.out.as_deref(), || {
        let (norming, pickands) = resolve_norming(&cfg)?;
        let plan = plan_lattice(&cfg)?;
        let body = serde_json::json!({
            "norming": norming,
            "pickands": pickands,
            "spacings": plan.spacings,
            "latticeStep": plan.lattice.step(),
            "latticeCounts": plan.lattice.counts(),
            "gridStride": plan.stride,
        });
        emit(a.out.as_deref(), "norming.json", &serde_json::to_string_pretty(&body)?)?;
        Ok(true)
    })
}

fn cmd_tail(a: &TailArgs, _threads: Option<usize>) -> CmdResult {
    let model = CovarianceModel::exponential(vec![a.alpha])?;
    with_manifest("tail-check", None, None, a.out.as_deref(), || {
        let v = tail_validation(&model, a.s, a.delta, a.u)?;
        emit(a.out.as_deref(), "tail.json", &serde_json::to_string_pretty(&v)?)?;
        Ok(true)
    })
}

fn cmd_converge(a: &ConvergeArgs, threads: Option<usize>) -> CmdResult {
    let (cfg, text) = load_config(&a.config)?;
    if a.ladder.iter().any(|&t| !(t > 1.0)) {
        return Err(Failure::Usage("ladder sizes must exceed 1".into()));
    }
    with_manifest("converge", Some((&a.config, &text)), Some(cfg.master_seed), a.out.as_deref(), || {
        let table = convergence_study(&cfg, &a.ladder, threads)?;
        let mut csv = String::from("extent,masterSeed,supDefect,ksMaxCont,ksMaxGrid,ksMinCont,ksMinGrid,maxMinCorr\n");
        for r in &table.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_f64(r.extent),
                r.master_seed,
                fmt_f64(r.sup_defect),
                fmt_f64(r.ks.max_cont),
                fmt_f64(r.ks.max_grid),
                fmt_f64(r.ks.min_cont),
                fmt_f64(r.ks.min_grid),
                fmt_f64(r.max_min_corr)
            ));
        }
        emit(a.out.as_deref(), "convergence.csv", &csv)?;
        if a.out.is_some() {
            emit(a.out.as_deref(), "convergence.json", &serde_json::to_string_pretty(&table)?)?;
        }
        Ok(true)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.threads;
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, threads),
        Command::Pickands(a) => cmd_pickands(a, threads),
        Command::LimitCdf(a) => cmd_limit_cdf(a, threads),
        Command::Verify(a) => cmd_verify(a, threads),
        Command::Norming(a) => cmd_norming(a, threads),
        Command::TailCheck(a) => cmd_tail(a, threads),
        Command::Converge(a) => cmd_converge(a, threads),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
