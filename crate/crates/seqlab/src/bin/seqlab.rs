//! Thin command-line front end over the library. Every subcommand reads a
//! JSON experiment configuration, drives the matching `experiment`/`verify`
//! entry point, and writes deterministic artifacts plus a `manifest.json`
//! recording the config hash, library version, and effective seed.
//!
//! Exit codes: 0 on success, 1 on runtime failure (including any asserted
//! verification check failing), 2 on configuration or usage errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqlab::config::ExperimentConfig;
use seqlab::error::Error;
use seqlab::experiment::{self, Manifest};
use seqlab::verify::{all_asserted_passed, run_battery};

/// `echo!` that shrugs off a closed stdout (e.g. piping into `head`)
/// instead of panicking; artifacts are already on disk either way.
macro_rules! echo {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "seqlab",
    version,
    about = "Sequential-prediction laboratory: simulation grids, verification battery, \
             bottleneck curves, in-context sweeps, and bound tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the m_docs × t_len simulation grid and write result rows.
    Simulate(RunArgs),
    /// Run the inequality and decomposition check battery.
    Verify(VerifyArgs),
    /// Information-bottleneck curve with the rate–distortion sandwich.
    RdCurve(RunArgs),
    /// In-context prediction sweep over query lengths.
    Icl(RunArgs),
    /// Closed-form bound table over configured parameter grids.
    Bounds(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory artifacts are written into.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Artifact format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional configuration; only its `checks` selection and seed are
    /// read — the battery carries its own fixtures.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run every check family regardless of the config selection.
    #[arg(long)]
    all: bool,
    /// Battery seed (overrides the config's master seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the JSON report is written into.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(args) => run_subcommand(args, simulate),
        Command::Verify(args) => verify(args),
        Command::RdCurve(args) => run_subcommand(args, rd_curve),
        Command::Icl(args) => run_subcommand(args, icl),
        Command::Bounds(args) => run_subcommand(args, bounds),
    }
}

/// Configuration and usage problems exit 2; everything else that fails
/// exits 1.
fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn run_subcommand(
    args: RunArgs,
    body: fn(&ExperimentConfig, &str, &RunArgs) -> seqlab::Result<()>,
) -> ExitCode {
    let loaded = load_config(&args.config, args.seed).and_then(|(config, text)| {
        init_threads(args.threads)?;
        Ok((config, text))
    });
    let (config, text) = match loaded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("seqlab: {e}");
            return exit_for(&e);
        }
    };
    match body(&config, &text, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqlab: {e}");
            exit_for(&e)
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> seqlab::Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    Ok((config, text))
}

fn init_threads(threads: Option<usize>) -> seqlab::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads: need at least one worker".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("--threads: {e}")))
}

/// Writes the artifact files plus `manifest.json` into the output
/// directory and echoes their paths.
fn write_artifacts(
    args: &RunArgs,
    command: &str,
    config_text: &str,
    seed: u64,
    files: Vec<(String, String)>,
) -> seqlab::Result<()> {
    fs::create_dir_all(&args.out)?;
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    for (name, body) in &files {
        fs::write(args.out.join(name), body)?;
    }
    names.push("manifest.json".into());
    let manifest = Manifest::new(command, config_text, seed, names.clone());
    fs::write(args.out.join("manifest.json"), manifest.to_json())?;
    for name in &names {
        echo!("wrote {}", args.out.join(name).display());
    }
    Ok(())
}

fn artifact_name(stem: &str, suffix: &str, format: Format) -> String {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    format!("{stem}{suffix}.{ext}")
}

fn simulate(config: &ExperimentConfig, text: &str, args: &RunArgs) -> seqlab::Result<()> {
    let rows = experiment::simulate(config)?;
    let body = match args.format {
        Format::Csv => experiment::render_results_csv(&rows),
        Format::Json => experiment::render_json(&rows)?,
    };
    echo!(
        "simulate: {} rows over {} grid points (seed {})",
        rows.len(),
        config.grid.m_docs.len() * config.grid.t_len.len(),
        config.master_seed
    );
    write_artifacts(
        args,
        "simulate",
        text,
        config.master_seed,
        vec![(artifact_name(&config.output, "", args.format), body)],
    )
}

fn rd_curve(config: &ExperimentConfig, text: &str, args: &RunArgs) -> seqlab::Result<()> {
    let (rows, summaries) = experiment::rd_curve(config)?;
    for s in &summaries {
        echo!(
            "rd-curve M={} T={}: lower {:.9} ≤ I/T {:.9} ≤ upper {:.9}",
            s.m_docs, s.t_len, s.lower, s.mi_per_step, s.upper
        );
    }
    let (curve, summary) = match args.format {
        Format::Csv => {
            (experiment::render_rd_csv(&rows), experiment::render_rd_summary_csv(&summaries))
        }
        Format::Json => (experiment::render_json(&rows)?, experiment::render_json(&summaries)?),
    };
    write_artifacts(
        args,
        "rd-curve",
        text,
        config.master_seed,
        vec![
            (artifact_name(&config.output, "_rd", args.format), curve),
            (artifact_name(&config.output, "_rd_summary", args.format), summary),
        ],
    )
}

fn icl(config: &ExperimentConfig, text: &str, args: &RunArgs) -> seqlab::Result<()> {
    let rows = experiment::icl_table(config)?;
    let violations = rows.iter().filter(|r| r.margin < 0.0).count();
    echo!("icl: {} rows, {} bound violations", rows.len(), violations);
    let body = match args.format {
        Format::Csv => experiment::render_icl_csv(&rows),
        Format::Json => experiment::render_json(&rows)?,
    };
    write_artifacts(
        args,
        "icl",
        text,
        config.master_seed,
        vec![(artifact_name(&config.output, "_icl", args.format), body)],
    )
}

fn bounds(config: &ExperimentConfig, text: &str, args: &RunArgs) -> seqlab::Result<()> {
    let rows = experiment::bounds_table(config)?;
    echo!("{:<22} {:<44} {:>24}  note", "family", "params", "value");
    for row in &rows {
        let value = row.value.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
        echo!("{:<22} {:<44} {:>24}  {}", row.family, row.params, value, row.note);
    }
    let body = match args.format {
        Format::Csv => experiment::render_bounds_csv(&rows),
        Format::Json => experiment::render_json(&rows)?,
    };
    write_artifacts(
        args,
        "bounds",
        text,
        config.master_seed,
        vec![(artifact_name(&config.output, "_bounds", args.format), body)],
    )
}

fn verify(args: VerifyArgs) -> ExitCode {
    let loaded = match &args.config {
        Some(path) => match load_config(path, args.seed) {
            Ok((config, text)) => Some((config, text)),
            Err(e) => {
                eprintln!("seqlab: {e}");
                return exit_for(&e);
            }
        },
        None => None,
    };
    if let Err(e) = init_threads(args.threads) {
        eprintln!("seqlab: {e}");
        return exit_for(&e);
    }

    let seed = args
        .seed
        .or_else(|| loaded.as_ref().map(|(c, _)| c.master_seed))
        .unwrap_or(0);
    let selection: Option<Vec<&str>> = if args.all {
        None
    } else {
        loaded.as_ref().and_then(|(config, _)| {
            (!config.checks.is_empty())
                .then(|| config.checks.iter().map(String::as_str).collect())
        })
    };

    let reports = match run_battery(seed, selection.as_deref()) {
        Ok(reports) => reports,
        Err(e) => {
            eprintln!("seqlab: {e}");
            return exit_for(&e);
        }
    };
    for report in &reports {
        echo!("{report}");
    }
    let asserted = reports.iter().filter(|r| r.asserted).count();
    let passed = reports.iter().filter(|r| r.asserted && r.passed).count();
    echo!(
        "verify: {passed}/{asserted} asserted checks passed, {} report-only (seed {seed})",
        reports.len() - asserted
    );

    let written = experiment::render_json(&reports).and_then(|body| {
        fs::create_dir_all(&args.out)?;
        let path = args.out.join("verify.json");
        fs::write(&path, body)?;
        echo!("wrote {}", path.display());
        let config_text = loaded.as_ref().map(|(_, t)| t.as_str()).unwrap_or("");
        let manifest = Manifest::new("verify", config_text, seed, vec!["verify.json".into()]);
        fs::write(args.out.join("manifest.json"), manifest.to_json())?;
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("seqlab: {e}");
        return exit_for(&e);
    }

    if all_asserted_passed(&reports) {
        ExitCode::SUCCESS
    } else {
        eprintln!("seqlab: asserted verification checks failed");
        ExitCode::FAILURE
    }
}
