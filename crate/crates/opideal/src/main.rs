//! Command-line entry point: seeded, thread-pinned experiment runs with
//! JSON reports. Exit codes: 0 all non-conditional verdicts pass, 1 a
//! verdict failed, 2 usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opideal::run::{canonical_payload, run, validate_report, ExperimentReport, RunConfig, REPORT_SCHEMA};

#[derive(Parser)]
#[command(name = "opideal", version, about = "Numerical laboratory for operators between sequence-space sums")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON RunConfig file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Schedule preset name (tiny, small) unless the config gives one.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to OPIDEAL_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Subset-enumeration / sampling budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Report output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Column family generation and subset certification.
    Rip {
        #[command(subcommand)]
        action: RipAction,
    },
    /// Schedule checks and the full masked diagonal.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Factorization experiments (variants: formal, identity).
    Factorize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "formal")]
        variant: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 34)]
        m_cols: usize,
        #[arg(long, default_value_t = 1000)]
        max_tries: usize,
        /// Level for the identity variant, or target levels for formal.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
    },
    /// Separating-functional experiment over masks M and N.
    Separate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        mask_m: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        mask_n: Vec<usize>,
    },
    /// Sampled finite-strict-singularity profile of a masked diagonal.
    FssProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        mask: Vec<usize>,
    },
    /// Report utilities.
    Report {
        #[command(subcommand)]
        action: ReportAction,
    },
}

#[derive(Subcommand)]
enum RipAction {
    /// Generate and summarize the seeded column family.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Certify eigenvalue bounds over column subsets.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long)]
        besselian_only: bool,
    },
}

#[derive(Subcommand)]
enum ReportAction {
    /// Validate a report file against the shipped schema.
    Validate {
        path: PathBuf,
    },
}

fn load_config(common: &Common, command: &str) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::new(command),
    };
    cfg.command = command.to_string();
    if let Some(p) = &common.preset {
        cfg.schedule = opideal::run::ScheduleSpec::Preset(p.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = common.budget {
        cfg.budget = b;
    }
    if let Some(s) = common.samples {
        cfg.samples = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn thread_count(common: &Common) -> Option<usize> {
    common.threads.or_else(|| {
        std::env::var("OPIDEAL_THREADS").ok().and_then(|v| v.parse().ok())
    })
}

fn execute(cfg: RunConfig, threads: Option<usize>) -> ExitCode {
    let outcome = match threads {
        Some(t) => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("thread pool: {e}");
                    return ExitCode::from(2);
                }
            };
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    };
    let report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &report.config.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("write {path}: {e}");
                return ExitCode::from(2);
            }
            // Echo the determinism-relevant payload digest to stdout.
            let canon = canonical_payload(&serde_json::to_value(&report).expect("value"));
            println!("report written to {path} ({} canonical bytes)", canon.to_string().len());
        }
        None => println!("{json}"),
    }
    ExitCode::from(report.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Rip { action } => match action {
            RipAction::Gen { common } => match load_config(&common, "rip-gen") {
                Ok(cfg) => execute(cfg, thread_count(&common)),
                Err(e) => usage(&e),
            },
            RipAction::Certify { common, order, besselian_only } => {
                match load_config(&common, "rip-certify") {
                    Ok(mut cfg) => {
                        cfg.order = order;
                        cfg.besselian_only = besselian_only;
                        execute(cfg, thread_count(&common))
                    }
                    Err(e) => usage(&e),
                }
            }
        },
        Command::Build { common } => match load_config(&common, "build") {
            Ok(cfg) => execute(cfg, thread_count(&common)),
            Err(e) => usage(&e),
        },
        Command::Factorize { common, variant, m, m_cols, max_tries, levels } => {
            match load_config(&common, "factorize") {
                Ok(mut cfg) => {
                    cfg.variant = Some(variant);
                    cfg.m = m;
                    cfg.m_cols = m_cols;
                    cfg.max_tries = max_tries;
                    if !levels.is_empty() {
                        // The identity variant reads its level from `order`.
                        cfg.order = levels[0];
                        cfg.mask_n = levels;
                    }
                    execute(cfg, thread_count(&common))
                }
                Err(e) => usage(&e),
            }
        }
        Command::Separate { common, m, mask_m, mask_n } => {
            match load_config(&common, "separate") {
                Ok(mut cfg) => {
                    cfg.m = m;
                    cfg.mask_m = mask_m;
                    cfg.mask_n = mask_n;
                    execute(cfg, thread_count(&common))
                }
                Err(e) => usage(&e),
            }
        }
        Command::FssProbe { common, dims, mask } => match load_config(&common, "fss-probe") {
            Ok(mut cfg) => {
                if !dims.is_empty() {
                    cfg.dims = dims;
                }
                cfg.mask_m = mask;
                execute(cfg, thread_count(&common))
            }
            Err(e) => usage(&e),
        },
        Command::Report { action } => match action {
            ReportAction::Validate { path } => {
                let text = match std::fs::read_to_string(&path) {
                    Ok(t) => t,
                    Err(e) => return usage(&format!("read {}: {e}", path.display())),
                };
                let value: serde_json::Value = match serde_json::from_str(&text) {
                    Ok(v) => v,
                    Err(e) => return usage(&format!("parse: {e}")),
                };
                let schema: serde_json::Value =
                    serde_json::from_str(REPORT_SCHEMA).expect("shipped schema parses");
                match validate_report(&value, &schema) {
                    Ok(()) => {
                        let typed: ExperimentReport =
                            serde_json::from_value(value).expect("validated above");
                        println!(
                            "valid report: command {}, {} verdicts, exit contract {}",
                            typed.config.command,
                            typed.verdicts.len(),
                            typed.exit_code()
                        );
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("invalid report: {e}");
                        ExitCode::from(1)
                    }
                }
            }
        },
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("usage error: {msg}");
    ExitCode::from(2)
}
