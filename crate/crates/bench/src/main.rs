use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use uplif::bmat::Backend;
use uplif::index::{IndexConfig, UplifIndex};
use uplif::tuner::{Agent, AgentConfig, QTable};
use uplif_bench::{
    emit_report, gen_lognormal, gen_uniform, generate_workload, load_dataset, run_benchmark, run_range_benchmark,
    run_with_agent, train_agent, write_dataset, Metrics, RunLimit, WorkloadKind, WorkloadSpec,
};

#[derive(Parser)]
#[command(name = "uplif", version, about = "Benchmark driver for the uplif learned index")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Lognormal,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Rb,
    Bplus,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Rb => Backend::RedBlack,
            BackendArg::Bplus => Backend::BPlus,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key file.
    Gen {
        #[arg(long, value_enum, default_value = "lognormal")]
        dist: Dist,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bulk-load a key file and write structural statistics as JSON.
    BulkLoad {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_stats: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rb")]
        backend: BackendArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a timed workload and write a CSV report.
    Bench {
        #[arg(long)]
        data: PathBuf,
        /// One of ro, rh, wh, wo, shift.
        #[arg(long)]
        workload: String,
        #[arg(long, default_value_t = 60.0)]
        secs: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `off` or `qtable:PATH`.
        #[arg(long, default_value = "off")]
        agent: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0.5)]
        init_fraction: f64,
        #[arg(long, value_enum, default_value = "rb")]
        backend: BackendArg,
    },
    /// Train a tuning agent on a workload and save its Q-table.
    TrainAgent {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        workload: String,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        out_qtable: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        init_fraction: f64,
    },
    /// Time random range scans over a bulk-loaded key file.
    RangeBench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        /// Fraction of the key domain covered by each query.
        #[arg(long, default_value_t = 0.001)]
        span: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// `UPLIF_SEED`, when set, takes precedence over `--seed`.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("UPLIF_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| invalid(format!("UPLIF_SEED is not a u64: {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn load_keys(path: &Path) -> Result<Vec<u64>, CliError> {
    load_dataset(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn with_values(keys: &[u64], seed: u64) -> Vec<(u64, u64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    keys.iter().map(|&k| (k, rng.gen())).collect()
}

#[derive(Serialize)]
struct LoadStats {
    keys: usize,
    build_secs: f64,
    backend: String,
    height: usize,
    segments: usize,
    nodes: usize,
    min_segment_keys: usize,
    max_alpha: f64,
    memory_bytes: usize,
    key_slot_bytes: usize,
    null_slot_bytes: usize,
    model_bytes: usize,
    node_bytes: usize,
}

fn parse_workload(s: &str) -> Result<WorkloadKind, CliError> {
    s.parse().map_err(invalid)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Gen {
            dist,
            n,
            seed,
            mu,
            sigma,
            out,
        } => {
            let seed = effective_seed(seed)?;
            let keys = match dist {
                Dist::Lognormal => gen_lognormal(n, mu, sigma, seed),
                Dist::Uniform => gen_uniform(n, seed),
            }
            .map_err(invalid)?;
            write_dataset(&out, &keys).map_err(failed)?;
            println!("wrote {} keys to {}", keys.len(), out.display());
        }
        Command::BulkLoad {
            data,
            out_stats,
            backend,
            seed,
        } => {
            let seed = effective_seed(seed)?;
            let pairs = with_values(&load_keys(&data)?, seed);
            let cfg = IndexConfig {
                backend: backend.into(),
                ..IndexConfig::default()
            };
            let t0 = Instant::now();
            let idx = UplifIndex::bulk_load(&pairs, cfg).map_err(invalid)?;
            let build_secs = t0.elapsed().as_secs_f64();
            let pm = idx.stats();
            let mem = idx.memory_breakdown();
            let stats = LoadStats {
                keys: idx.len(),
                build_secs,
                backend: pm.backend.to_string(),
                height: pm.height,
                segments: pm.model_count,
                nodes: pm.node_count,
                min_segment_keys: pm.granularity,
                max_alpha: pm.error_scaling,
                memory_bytes: mem.total(),
                key_slot_bytes: mem.key_slots,
                null_slot_bytes: mem.null_slots,
                model_bytes: mem.models,
                node_bytes: mem.nodes,
            };
            let json = serde_json::to_string_pretty(&stats).map_err(failed)?;
            match out_stats {
                Some(p) => std::fs::write(&p, json + "\n").map_err(failed)?,
                None => println!("{json}"),
            }
        }
        Command::Bench {
            data,
            workload,
            secs,
            seed,
            agent,
            report,
            runs,
            init_fraction,
            backend,
        } => {
            let seed = effective_seed(seed)?;
            let kind = parse_workload(&workload)?;
            if !(secs >= 0.0 && secs.is_finite()) {
                return Err(invalid("--secs must be a non-negative number"));
            }
            if runs == 0 {
                return Err(invalid("--runs must be at least 1"));
            }
            let table = match agent.as_str() {
                "off" => None,
                other => {
                    let path = other
                        .strip_prefix("qtable:")
                        .ok_or_else(|| invalid(format!("--agent must be off or qtable:PATH, got {other:?}")))?;
                    Some(QTable::load(path).map_err(|e| invalid(format!("{path}: {e}")))?)
                }
            };
            let keys = load_keys(&data)?;
            let label = dataset_label(&data);
            let mut all: Vec<Metrics> = Vec::with_capacity(runs);
            for run in 0..runs {
                let spec = WorkloadSpec {
                    duration_secs: Some(secs),
                    ..WorkloadSpec::new(kind, seed.wrapping_add(run as u64)).with_init_fraction(init_fraction)
                };
                let w = generate_workload(&spec, &keys).map_err(invalid)?;
                let cfg = IndexConfig {
                    backend: backend.into(),
                    ..IndexConfig::default()
                };
                let mut idx = UplifIndex::bulk_load(&w.initial, cfg).map_err(invalid)?;
                let mut stream = w.stream;
                let limit = RunLimit::secs(secs);
                let m = match &table {
                    None => run_benchmark(&mut idx, &mut stream, limit),
                    Some(q) => {
                        let mut a = Agent::frozen(AgentConfig::default(), q.clone(), spec.seed).map_err(invalid)?;
                        run_with_agent(&mut idx, &mut stream, limit, &mut a).map_err(failed)?
                    }
                };
                let m = m.labelled(kind.short_name(), &label, run);
                println!(
                    "run {run}: {:.3} Mops/s, p50 {:.3} us, p99 {:.3} us, {} bytes{}",
                    m.throughput / 1e6,
                    m.p50_us,
                    m.p99_us,
                    m.index_bytes,
                    if stream.pool_exhausted() { " (insert pool exhausted)" } else { "" }
                );
                all.push(m);
            }
            let mean = all.iter().map(|m| m.throughput).sum::<f64>() / all.len() as f64;
            println!("mean throughput over {runs} runs: {:.3} Mops/s", mean / 1e6);
            emit_report(&all, &report).map_err(failed)?;
        }
        Command::TrainAgent {
            data,
            workload,
            steps,
            out_qtable,
            seed,
            init_fraction,
        } => {
            let seed = effective_seed(seed)?;
            let kind = parse_workload(&workload)?;
            let keys = load_keys(&data)?;
            let spec = WorkloadSpec::new(kind, seed).with_init_fraction(init_fraction);
            let w = generate_workload(&spec, &keys).map_err(invalid)?;
            let mut idx = UplifIndex::bulk_load(&w.initial, IndexConfig::default()).map_err(invalid)?;
            let mut agent = Agent::new(AgentConfig::default(), seed).map_err(invalid)?;
            let mut stream = w.stream;
            let taken = train_agent(&mut idx, &mut stream, steps, &mut agent).map_err(failed)?;
            agent.q_table().save(&out_qtable).map_err(failed)?;
            println!(
                "trained {taken} steps, {} q-values, final epsilon {:.4}, wrote {}",
                agent.q_table().len(),
                agent.epsilon(),
                out_qtable.display()
            );
        }
        Command::RangeBench {
            data,
            queries,
            span,
            seed,
        } => {
            let seed = effective_seed(seed)?;
            if !(0.0..=1.0).contains(&span) {
                return Err(invalid("--span must be within [0, 1]"));
            }
            let keys = load_keys(&data)?;
            let domain = (keys[0], keys[keys.len() - 1]);
            let mut idx = UplifIndex::bulk_load(&with_values(&keys, seed), IndexConfig::default()).map_err(invalid)?;
            let m = run_range_benchmark(&mut idx, domain, queries, span, seed).map_err(failed)?;
            println!(
                "{} queries, {} rows, {:.3} queries/s, p50 {:.3} us, p99 {:.3} us",
                m.ops_completed, m.rows, m.throughput, m.p50_us, m.p99_us
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Invalid(_) => ExitCode::from(2),
                CliError::Failed(_) => ExitCode::FAILURE,
            }
        }
    }
}
