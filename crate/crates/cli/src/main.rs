use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ia_kit::alloc::{init_allocation, run_ptt, run_ptt_symmetric, verify_allocation, PttOutcome, TransferOrder};
use ia_kit::conditions::stuck_tree_witness;
use ia_kit::field::DEFAULT_PRIME;
use ia_kit::{
    build_hall, check_config, sample_channels, CheckOptions, ConfigFile, NetworkConfig, PairConfig, RankMode,
    ScalarField, SweepFooter, TolerancePolicy, VerdictReport,
};

/// Exit code for malformed input and other errors.
const EXIT_ERROR: u8 = 3;
/// Exit code for a sweep that found a soundness violation.
const EXIT_UNSOUND: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ia-kit",
    version,
    about = "Interference alignment feasibility for MIMO interference networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Numeric,
    Gf,
}

#[derive(clap::Args, Clone)]
struct TestFlags {
    /// Rank-test arithmetic; defaults to gf unless the config asks for complex channels.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Channel draws for the rank test.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Also run the numerical solver.
    #[arg(long)]
    solve: bool,
    /// Master seed. Falls back to the config file, then IA_KIT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full verdict report for one configuration.
    Check {
        config: PathBuf,
        #[command(flatten)]
        flags: TestFlags,
    },
    /// Verdict reports for a symmetric grid or a list of configurations, as JSON lines.
    Sweep {
        /// Range of K, e.g. 3..5 (inclusive).
        #[arg(long)]
        k: Option<String>,
        /// Range of d.
        #[arg(long)]
        d: Option<String>,
        /// Range of M.
        #[arg(long)]
        m: Option<String>,
        /// Range of N; when omitted N equals M.
        #[arg(long)]
        n: Option<String>,
        /// JSON array of configurations, instead of a grid.
        #[arg(long, conflicts_with_all = ["k", "d", "m", "n"])]
        configs: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        flags: TestFlags,
    },
    /// Dump the coefficient matrix as sparse triplets.
    Hall {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Channel field; defaults to the config's field, else complex.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Run the pressure transfer procedure and print the allocation.
    Alloc {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle constraints so the allocation is uniform across a stream index.
        #[arg(long)]
        symmetric: bool,
    },
}

type CliResult<T> = std::result::Result<T, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Check { config, flags } => cmd_check(&config, &flags),
        Command::Sweep {
            k,
            d,
            m,
            n,
            configs,
            workers,
            flags,
        } => cmd_sweep(k, d, m, n, configs, workers, &flags),
        Command::Hall { config, seed, mode } => cmd_hall(&config, seed, mode),
        Command::Alloc {
            config,
            seed,
            symmetric,
        } => cmd_alloc(&config, seed, symmetric),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ConfigFile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("IA_KIT_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("IA_KIT_SEED is not an unsigned integer: {s:?}")),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    Ok(match (flag, file) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => env_seed()?.unwrap_or(0),
    })
}

fn resolve_mode(flag: Option<Mode>, field: Option<ScalarField>) -> RankMode {
    match (flag, field) {
        (Some(Mode::Numeric), _) | (None, Some(ScalarField::Complex)) => RankMode::Numeric {
            policy: TolerancePolicy::Standard,
        },
        (Some(Mode::Gf), Some(ScalarField::Prime(p))) | (None, Some(ScalarField::Prime(p))) => {
            RankMode::PrimeField { modulus: p }
        }
        (Some(Mode::Gf), _) | (None, None) => RankMode::PrimeField { modulus: DEFAULT_PRIME },
    }
}

fn options(flags: &TestFlags, file: Option<&ConfigFile>) -> CliResult<CheckOptions> {
    Ok(CheckOptions {
        mode: resolve_mode(flags.mode, file.and_then(|f| f.field)),
        trials: flags.trials,
        seed: resolve_seed(flags.seed, file.and_then(|f| f.seed))?,
        solve: flags.solve,
        solver_tol: flags.tol,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn cmd_check(path: &Path, flags: &TestFlags) -> CliResult<u8> {
    let file = load(path)?;
    let opts = options(flags, Some(&file))?;
    let report = check_config(&file.config, &opts).map_err(|e| e.to_string())?;
    println!("{}", to_json(&report)?);
    Ok(report.exit_code() as u8)
}

fn parse_range(name: &str, text: &str) -> CliResult<RangeInclusive<usize>> {
    let bad = || format!("--{name}: expected a value or a range like 2..6, got {text:?}");
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().trim_start_matches('=').parse().map_err(|_| bad())?,
        ),
        None => {
            let v = text.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    Ok(lo..=hi)
}

fn grid(k: &str, d: &str, m: &str, n: Option<&str>) -> CliResult<Vec<NetworkConfig>> {
    let (ks, ds, ms) = (parse_range("k", k)?, parse_range("d", d)?, parse_range("m", m)?);
    let ns = n.map(|n| parse_range("n", n)).transpose()?;
    let mut out = Vec::new();
    for kk in ks {
        for dd in ds.clone() {
            for mm in ms.clone() {
                let n_values: Vec<usize> = match &ns {
                    Some(r) => r.clone().collect(),
                    None => vec![mm],
                };
                for nn in n_values {
                    if kk == 0 || dd == 0 || dd > mm.min(nn) {
                        continue;
                    }
                    out.push(NetworkConfig::new(vec![PairConfig::new(mm, nn, dd); kk]).map_err(|e| e.to_string())?);
                }
            }
        }
    }
    Ok(out)
}

fn cmd_sweep(
    k: Option<String>,
    d: Option<String>,
    m: Option<String>,
    n: Option<String>,
    configs: Option<PathBuf>,
    workers: usize,
    flags: &TestFlags,
) -> CliResult<u8> {
    let list = match configs {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<Vec<NetworkConfig>>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => match (k, d, m) {
            (Some(k), Some(d), Some(m)) => grid(&k, &d, &m, n.as_deref())?,
            _ => return Err("sweep needs --k, --d and --m, or --configs".into()),
        },
    };
    if list.is_empty() {
        return Err("the sweep grid is empty".into());
    }
    let opts = options(flags, None)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    let mut footer = SweepFooter::default();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    // chunks keep output ordered while flushing partial results early
    for chunk in list.chunks(workers.max(1) * 4) {
        let reports: Vec<Result<VerdictReport, String>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|cfg| check_config(cfg, &opts).map_err(|e| format!("{cfg}: {e}")))
                .collect()
        });
        for r in reports {
            let r = r?;
            footer.add(&r);
            writeln!(out, "{}", to_json(&r)?).map_err(|e| e.to_string())?;
        }
        out.flush().map_err(|e| e.to_string())?;
    }
    writeln!(out, "{}", to_json(&serde_json::json!({ "footer": footer }))?).map_err(|e| e.to_string())?;
    Ok(if footer.soundness_violations > 0 {
        EXIT_UNSOUND
    } else {
        0
    })
}

fn cmd_hall(path: &Path, seed: Option<u64>, mode: Option<Mode>) -> CliResult<u8> {
    let file = load(path)?;
    let seed = resolve_seed(seed, file.seed)?;
    let field = match (mode, file.field) {
        (Some(Mode::Numeric), _) => ScalarField::Complex,
        (Some(Mode::Gf), Some(ScalarField::Prime(p))) => ScalarField::Prime(p),
        (Some(Mode::Gf), _) => ScalarField::Prime(DEFAULT_PRIME),
        (None, f) => f.unwrap_or(ScalarField::Complex),
    };
    let channels = sample_channels(&file.config, seed, field).map_err(|e| e.to_string())?;
    let hall = build_hall(&file.config, &channels).map_err(|e| e.to_string())?;
    print!("{}", hall.dump());
    Ok(0)
}

fn cmd_alloc(path: &Path, seed: Option<u64>, symmetric: bool) -> CliResult<u8> {
    let file = load(path)?;
    let cfg = &file.config;
    let seed = resolve_seed(seed, file.seed)?;
    let err = |e: ia_kit::Error| e.to_string();
    let outcome = if symmetric {
        run_ptt_symmetric(cfg, None, TransferOrder::Seeded(seed)).map_err(err)?
    } else {
        let start = init_allocation(cfg, seed, false).map_err(err)?;
        run_ptt(cfg, &start, TransferOrder::Deterministic).map_err(err)?
    };
    let value = match &outcome {
        PttOutcome::Balanced { allocation, .. } => serde_json::json!({
            "seed": seed,
            "outcome": outcome,
            "allocation": allocation.to_json(cfg).map_err(err)?,
            "report": verify_allocation(cfg, allocation).map_err(err)?,
        }),
        PttOutcome::Stuck { .. } => serde_json::json!({
            "seed": seed,
            "outcome": outcome,
            "witness": stuck_tree_witness(cfg, &outcome).map_err(err)?,
        }),
    };
    println!("{}", to_json(&value)?);
    Ok(if outcome.is_balanced() { 0 } else { 1 })
}
