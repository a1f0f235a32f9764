use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use occupancy::exactdist::{exact_pmf, DpConfig};
use occupancy::experiments::{rate_study, write_csv, RateMethod};
use occupancy::lemmas::run_suite;
use occupancy::metrics::{empirical_pmf, local_distance, total_variation, Pmf};
use occupancy::moments::{moments, MomentMode, Statistic};
use occupancy::occusim::{decomposition_estimate, sample_histogram};
use occupancy::tpoisson::TranslatedPoisson;
use occupancy::weights::{ModelSpec, WeightModel};
use occupancy::Error;

#[derive(Parser)]
#[command(
    name = "occupancy",
    version,
    about = "Translated Poisson approximation for occupancy counts"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores); results do not depend on it
    #[arg(long, global = true, value_name = "COUNT")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// every pair of boxes up to a tail of 1e-12
    Exact,
    /// exact head, separable expansion for the tail
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// dynamic program (small models only)
    Exact,
    /// Monte Carlo histogram
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Mean and variance of a statistic; prints {mu, var, truncation_error, mode}
    Moments {
        /// Model JSON file: {"kind":"explicit","probs":[...]} or {"kind":"zeta","exponent":a}
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Statistic: kn | knr:<r>, optionally @<j> to count boxes j and above only
        #[arg(long, default_value = "kn", value_name = "STAT")]
        stat: Statistic,
        /// Number of balls
        #[arg(long, value_name = "BALLS")]
        n: u64,
        /// Summation mode
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: ModeArg,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Exact law of a statistic; prints a Pmf {offset, masses, tail_defect}
    ExactPmf {
        /// Model JSON file
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Statistic: kn | knr:<r>[@<j>]
        #[arg(long, default_value = "kn", value_name = "STAT")]
        stat: Statistic,
        /// Number of balls
        #[arg(long, value_name = "BALLS")]
        n: u64,
        /// Boxes processed exactly (default: whole support of an explicit model)
        #[arg(long, value_name = "BOXES")]
        boxes: Option<usize>,
        /// Drop states of probability below this (0 to 1e-9)
        #[arg(long, default_value_t = 0.0, value_name = "PROB")]
        prune_eps: f64,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Fit a translated Poisson law; prints {shift, rate}
    TpFit {
        /// Target mean
        #[arg(long, allow_negative_numbers = true, value_name = "MEAN")]
        mu: f64,
        /// Target variance (>= 0)
        #[arg(long, value_name = "VARIANCE")]
        var: f64,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Distances between two Pmf JSON files; prints {tv, tv_uncertainty, loc, loc_uncertainty}
    Distance {
        /// First Pmf JSON file
        #[arg(long, value_name = "PATH")]
        p: PathBuf,
        /// Second Pmf JSON file
        #[arg(long, value_name = "PATH")]
        q: PathBuf,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Empirical law of a statistic from seeded replicates; prints a Pmf
    Simulate {
        /// Model JSON file
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Statistic: kn | knr:<r>[@<j>]
        #[arg(long, default_value = "kn", value_name = "STAT")]
        stat: Statistic,
        /// Number of balls
        #[arg(long, value_name = "BALLS")]
        n: u64,
        /// Number of replicates
        #[arg(long, value_name = "COUNT")]
        samples: u64,
        /// Master seed (required)
        #[arg(long, value_name = "U64")]
        seed: u64,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Two-stage variance decomposition; prints the Decomposition
    Decompose {
        /// Model JSON file
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Statistic: kn | knr:<r>[@<j>] (unrestricted means boxes j >= j_n)
        #[arg(long, default_value = "kn", value_name = "STAT")]
        stat: Statistic,
        /// Number of balls
        #[arg(long, value_name = "BALLS")]
        n: u64,
        /// Stage-one replicates (>= 1000)
        #[arg(long, default_value_t = 4000, value_name = "COUNT")]
        reps: usize,
        /// Master seed (required)
        #[arg(long, value_name = "U64")]
        seed: u64,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Distance-versus-sigma table along a grid of n; writes CSV
    Rates {
        /// Model JSON file
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Statistic: kn | knr:<r>[@<j>]
        #[arg(long, default_value = "kn", value_name = "STAT")]
        stat: Statistic,
        /// Strictly increasing ball counts, comma separated, each >= 3
        #[arg(long, value_delimiter = ',', required = true, value_name = "BALLS,...")]
        grid: Vec<u64>,
        /// Law of the statistic: exact dynamic program or Monte Carlo
        #[arg(long, value_enum, default_value = "mc")]
        method: MethodArg,
        /// Monte Carlo replicates per grid point (>= 100000)
        #[arg(long, default_value_t = 1_000_000, value_name = "COUNT")]
        samples: u64,
        /// Master seed (required)
        #[arg(long, value_name = "U64")]
        seed: u64,
        /// CSV output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also write fits, spreads and warnings as JSON to this file
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
    /// Randomized oracle suite for the moment lemmas; prints a JSON report array
    Lemmas {
        /// Master seed (required)
        #[arg(long, value_name = "U64")]
        seed: u64,
        /// Random instances per lemma part
        #[arg(long, default_value_t = 10_000, value_name = "COUNT")]
        instances: usize,
        /// Output file (default: standard output)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Lib(Error),
    Io(String),
    Suite,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = Result<(), Failure>;

fn read_model(path: &Path) -> Result<WeightModel, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Lib(Error::Validation(format!("model {}: {e}", path.display()))))?;
    let spec: ModelSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Lib(Error::Validation(format!("model {}: {e}", path.display()))))?;
    Ok(WeightModel::from_spec(&spec)?)
}

fn read_pmf(path: &Path) -> Result<Pmf, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Lib(Error::Validation(format!("pmf {}: {e}", path.display()))))?;
    let pmf: Pmf = serde_json::from_str(&text)
        .map_err(|e| Failure::Lib(Error::Validation(format!("pmf {}: {e}", path.display()))))?;
    pmf.validate()?;
    Ok(pmf)
}

fn check_out(out: &Option<PathBuf>) -> CliResult {
    if let Some(path) = out {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(dir) = parent {
            if !dir.is_dir() {
                return Err(Failure::Lib(Error::Validation(format!(
                    "out: directory {} does not exist",
                    dir.display()
                ))));
            }
        }
    }
    Ok(())
}

fn emit_bytes(out: &Option<PathBuf>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    emit_bytes(out, text.as_bytes())
}

#[derive(Serialize)]
struct DistanceOut {
    tv: f64,
    tv_uncertainty: f64,
    loc: f64,
    loc_uncertainty: f64,
}

fn run(cli: Cli) -> CliResult {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Lib(Error::Validation(
                "threads must be at least 1".into(),
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    match cli.command {
        Command::Moments {
            model,
            stat,
            n,
            mode,
            out,
        } => {
            check_out(&out)?;
            let model = read_model(&model)?;
            let mode = match mode {
                ModeArg::Exact => MomentMode::ExactPairwise,
                ModeArg::Hybrid => MomentMode::HybridLargeScale,
            };
            emit_json(&out, &moments(&model, n, stat, mode)?)
        }
        Command::ExactPmf {
            model,
            stat,
            n,
            boxes,
            prune_eps,
            out,
        } => {
            check_out(&out)?;
            let model = read_model(&model)?;
            let boxes = match (boxes, model.support_len()) {
                (Some(b), _) => b,
                (None, Some(l)) => l,
                (None, None) => {
                    return Err(Failure::Lib(Error::Validation(
                        "boxes: required for a model with infinite support".into(),
                    )))
                }
            };
            let pmf = exact_pmf(&model, n, stat, DpConfig::new(boxes, prune_eps))?;
            emit_json(&out, &pmf)
        }
        Command::TpFit { mu, var, out } => {
            check_out(&out)?;
            emit_json(&out, &TranslatedPoisson::fit(mu, var)?)
        }
        Command::Distance { p, q, out } => {
            check_out(&out)?;
            let (p, q) = (read_pmf(&p)?, read_pmf(&q)?);
            let tv = total_variation(&p, &q);
            let loc = local_distance(&p, &q);
            emit_json(
                &out,
                &DistanceOut {
                    tv: tv.value,
                    tv_uncertainty: tv.uncertainty,
                    loc: loc.value,
                    loc_uncertainty: loc.uncertainty,
                },
            )
        }
        Command::Simulate {
            model,
            stat,
            n,
            samples,
            seed,
            out,
        } => {
            check_out(&out)?;
            let model = read_model(&model)?;
            let hist = sample_histogram(&model, n, stat, samples, seed)?;
            emit_json(&out, &empirical_pmf(&hist)?)
        }
        Command::Decompose {
            model,
            stat,
            n,
            reps,
            seed,
            out,
        } => {
            check_out(&out)?;
            let model = read_model(&model)?;
            emit_json(&out, &decomposition_estimate(&model, n, stat, reps, seed)?)
        }
        Command::Rates {
            model,
            stat,
            grid,
            method,
            samples,
            seed,
            out,
            summary,
        } => {
            check_out(&out)?;
            check_out(&summary)?;
            let model = read_model(&model)?;
            let method = match method {
                MethodArg::Exact => RateMethod::Exact,
                MethodArg::Mc => RateMethod::MonteCarlo,
            };
            // warnings go through the logger
            let study = rate_study(&model, stat, &grid, method, samples, seed)?;
            let mut csv = Vec::new();
            write_csv(&study.rows, &mut csv).map_err(|e| Failure::Io(e.to_string()))?;
            emit_bytes(&out, &csv)?;
            if summary.is_some() {
                emit_json(&summary, &study)?;
            }
            Ok(())
        }
        Command::Lemmas {
            seed,
            instances,
            out,
        } => {
            check_out(&out)?;
            if instances == 0 {
                return Err(Failure::Lib(Error::Validation(
                    "instances must be at least 1".into(),
                )));
            }
            let report = run_suite(seed, instances);
            emit_json(&out, &report.parts)?;
            for part in &report.parts {
                if part.failed > 0 {
                    eprintln!(
                        "{}: {} of {} instances failed{}",
                        part.lemma_id,
                        part.failed,
                        part.instances,
                        if part.informational {
                            " (informational)"
                        } else {
                            ""
                        }
                    );
                }
            }
            if report.all_pass {
                Ok(())
            } else {
                Err(Failure::Suite)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) | Error::Degenerate(_) => 1,
                Error::Resource(_) => 2,
            })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Suite) => {
            eprintln!("error: lemma suite has non-vacuous failures");
            ExitCode::from(3)
        }
    }
}
