mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tea_core::config::{ConfigError, ConfigFile, OutputFormat};
use tea_core::model::{validate, PulseSchedule};
use tea_core::protocol::{self, Experiment, Table};
use tea_core::SCHEMA_VERSION;

/// Pulsed two-tone electromechanics: simulate, infer and plot.
#[derive(Parser)]
#[command(name = "tea", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured experiment and write its results.
    Run(RunArgs),
    /// Write the analytic curves for the configured sweep (no simulation).
    Theory(RunArgs),
    /// Check a configuration and list physics warnings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,svg (overrides `output`).
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<OutputFormat>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    serde_json::from_value(json!(s.trim()))
        .map_err(|_| format!("unknown format `{s}` (expected csv, json or svg)"))
}

enum Failure {
    /// Exit status 2.
    Config(String),
    /// Exit status 1.
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, false),
        Command::Theory(a) => cmd_run(&a, true),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: config: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<ConfigFile, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs, theory: bool) -> Result<(), Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let exp = cfg.experiment()?;
    let formats = match &args.format {
        Some(f) if f.is_empty() => {
            return Err(Failure::Config(
                "--format: at least one format is required".into(),
            ))
        }
        Some(f) => f.clone(),
        None => cfg.formats()?,
    };
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }

    let name = exp.kind.name();
    let (stem, table, summary, result) = if theory {
        let table = protocol::theory_table(&exp).map_err(|e| Failure::Runtime(e.to_string()))?;
        let summary = theory_summary(&exp, &table);
        (
            format!("{name}_theory"),
            table,
            summary,
            serde_json::Value::Null,
        )
    } else {
        let out = protocol::run(&exp).map_err(|e| Failure::Runtime(e.to_string()))?;
        let result = serde_json::to_value(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
        (name.to_string(), out.table(), out.summary(), result)
    };

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for f in &formats {
        let (ext, body) = match f {
            OutputFormat::Csv => ("csv", table.to_csv_string()),
            OutputFormat::Json => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "command": if theory { "theory" } else { "run" },
                    "experiment": name,
                    "seed": cfg.seed,
                    "summary": summary,
                    "config": cfg,
                    "table": table,
                    "result": result,
                });
                let mut s = serde_json::to_string_pretty(&doc)
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                s.push('\n');
                ("json", s)
            }
            OutputFormat::Svg => ("svg", svg::render(&table, &stem, theory)),
        };
        files.push((dir.join(format!("{stem}.{ext}")), body));
    }
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    for (path, body) in files {
        fs::write(&path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    println!("{summary}");
    Ok(())
}

/// Headline of an analytic table: the minimum of its first dB column.
fn theory_summary(exp: &Experiment, table: &Table) -> String {
    let name = exp.kind.name();
    let x_name = &table.columns[0].name;
    let Some(col) = table
        .columns
        .iter()
        .skip(1)
        .find(|c| c.name.ends_with("_db"))
    else {
        let first = table.rows.first().and_then(|r| r.get(1).copied().flatten());
        return format!(
            "{name} theory: {} = {}",
            table.columns.get(1).map_or("n/a", |c| c.name.as_str()),
            first.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
    };
    let c = table.index(&col.name).expect("column exists");
    let best = table
        .rows
        .iter()
        .filter_map(|r| Some((r[0]?, r[c]?)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match best {
        Some((x, v)) => format!(
            "{name} theory: {} minimum {v:.3} dB at {x_name} = {x:.4}",
            col.name
        ),
        None => format!("{name} theory: no valid points"),
    }
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    let dev = cfg.device.to_device();
    dev.check()
        .map_err(|e| Failure::Config(format!("device: {e}")))?;
    cfg.receiver
        .to_receiver()
        .check()
        .map_err(|e| Failure::Config(format!("receiver: {e}")))?;
    cfg.formats()?;
    let mut warnings = Vec::new();
    let explicit = PulseSchedule::new(cfg.schedule());
    for seg in explicit.iter() {
        seg.check()
            .map_err(|e| Failure::Config(format!("schedule: {e}")))?;
    }
    warnings.extend(
        validate(&explicit, &dev)
            .into_iter()
            .map(|w| format!("schedule: {w}")),
    );
    if cfg.experiment.is_some() {
        let exp = cfg.experiment()?;
        let generated = exp
            .schedules()
            .map_err(|e| Failure::Config(e.to_string()))?;
        for (k, s) in generated.iter().enumerate() {
            warnings.extend(
                validate(s, &dev)
                    .into_iter()
                    .map(|w| format!("{} pulse sequence {k}: {w}", exp.kind.name())),
            );
        }
    }
    for w in &warnings {
        println!("warning: {w}");
    }
    println!("{}: ok, {} warning(s)", path.display(), warnings.len());
    Ok(())
}
