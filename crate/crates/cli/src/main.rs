//! Command-line front end for generating regime-switching streams, running the
//! online classifier and aggregating results into tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hsdf::experiment::{
    aggregate, algorithm_label, generate, provenance, read_report_json, run_experiment, run_grid, table_grid,
    write_report_json, write_series_csv, write_table_csv, write_trace_jsonl, ExperimentConfig, ScoreReport, TableRow,
};
use hsdf::simulators::export_stream;
use hsdf::Snr;

#[derive(Parser)]
#[command(name = "hsdf", version, about = "Streaming regime discovery with symbolic dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled stream and write it as CSV plus a JSON sidecar.
    Generate(ExperimentArgs),
    /// Classify one stream and write its report and per-epoch trace.
    Run(ExperimentArgs),
    /// Merge run reports into a table and a log-likelihood series.
    Report(ReportArgs),
    /// Run classical, classical+revision and adaptive over SNRs and seeds.
    Grid(GridArgs),
}

#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// Flat `key = value` file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// duffing2, duffing_vdp3 or external-csv [default: duffing2, or external-csv with --in]
    #[arg(long)]
    scenario: Option<String>,
    /// Linear signal-to-noise ratio: inf or a positive real [default: inf]
    #[arg(long)]
    snr: Option<String>,
    /// CRP parameter [default: 0.02]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Stickiness [default: 0.6]
    #[arg(long)]
    kappa: Option<f64>,
    /// Likelihood-rate memory in epochs [default: 4]
    #[arg(long)]
    delta: Option<usize>,
    /// Likelihood-rate threshold [default: 0.05]
    #[arg(long)]
    nu: Option<f64>,
    /// D-Markov depth [default: 1]
    #[arg(long)]
    depth: Option<usize>,
    /// Number of symbols [default: 7]
    #[arg(long)]
    alphabet: Option<usize>,
    /// classical or adaptive [default: adaptive]
    #[arg(long)]
    crp: Option<String>,
    /// Merge near-duplicate classes after the online pass.
    #[arg(long)]
    revise: bool,
    /// Run seed; derives the switching, noise and sampling seeds [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of epochs to simulate [default: 400]
    #[arg(long)]
    epochs: Option<usize>,
    /// Any further `key=value` setting (repeatable), e.g. `--set fit_window=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Input stream CSV with columns `x` and optionally `t,epoch,label`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output path [default: stream.csv for generate, report.json for run]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run reports to merge (repeatable).
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Table CSV; the series goes next to it as `<stem>.series.csv` [default: table.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    base: ExperimentArgs,
    /// Comma-separated SNR values.
    #[arg(long, default_value = "inf,9,1")]
    snrs: String,
    /// Seeds as a range `a-b` or a comma-separated list.
    #[arg(long, default_value = "1-10")]
    seeds: String,
}

fn build_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_kv_str(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(p) = &args.input {
        cfg.input = Some(p.clone());
        if args.scenario.is_none() {
            cfg.set("scenario", "external-csv")?;
        }
    }
    let flags: [(&str, Option<String>); 11] = [
        ("scenario", args.scenario.clone()),
        ("snr", args.snr.clone()),
        ("epsilon", args.epsilon.map(|v| v.to_string())),
        ("kappa", args.kappa.map(|v| v.to_string())),
        ("delta", args.delta.map(|v| v.to_string())),
        ("nu", args.nu.map(|v| v.to_string())),
        ("depth", args.depth.map(|v| v.to_string())),
        ("alphabet", args.alphabet.map(|v| v.to_string())),
        ("crp", args.crp.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v).with_context(|| format!("--{key}"))?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v).with_context(|| format!("--set {kv}"))?;
    }
    if args.revise {
        cfg.revise = true;
    }
    if let Some(p) = &args.out {
        cfg.output = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_generate(args: &ExperimentArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("stream.csv"));
    let stream = generate(&cfg)?;
    drop(create(&out)?);
    export_stream(&stream, &provenance(&cfg, &stream), &out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} samples in {} epochs to {}",
        stream.samples.len(),
        stream.epochs(),
        out.display()
    );
    Ok(())
}

fn summary(r: &ScoreReport) -> String {
    let err = r.error_pct().map_or("n/a".to_string(), |e| format!("{e:.2}%"));
    format!(
        "{} {} snr={} seed={} error={} classes={} time={:.2}s",
        r.scenario,
        algorithm_label(r.crp, r.revised),
        r.snr,
        r.seed,
        err,
        r.classes(),
        r.wall_time_s
    )
}

fn cmd_run(args: &ExperimentArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    let report = run_experiment(&cfg)?;
    drop(create(&out)?);
    write_report_json(&report, &out).with_context(|| format!("writing {}", out.display()))?;
    let trace = sibling(&out, ".trace.jsonl");
    write_trace_jsonl(&report, create(&trace)?)?;
    println!("{}", summary(&report));
    Ok(())
}

fn print_table(rows: &[TableRow]) {
    println!("{:<14} {:<20} {:>5} {:>4} {:>9} {:>8} {:>8} {:>9}", "scenario", "algorithm", "snr", "runs", "error%", "std", "classes", "time_s");
    for r in rows {
        println!(
            "{:<14} {:<20} {:>5} {:>4} {:>9.2} {:>8.2} {:>8.2} {:>9.2}",
            r.scenario, r.algorithm, r.snr, r.runs, r.error_pct_mean, r.error_pct_std, r.classes_mean, r.time_s_mean
        );
    }
}

fn write_tables(reports: &[ScoreReport], out: &Path) -> Result<()> {
    let rows = aggregate(reports)?;
    write_table_csv(&rows, create(out)?)?;
    write_series_csv(reports, create(&sibling(out, ".series.csv"))?)?;
    print_table(&rows);
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let reports = args
        .input
        .iter()
        .map(|p| read_report_json(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("table.csv"));
    write_tables(&reports, &out)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range `{text}`");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let base = build_config(&args.base)?;
    let snrs = args
        .snrs
        .split(',')
        .map(|s| s.trim().parse::<Snr>().with_context(|| format!("bad SNR `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    let seeds = parse_seeds(&args.seeds)?;
    let dir = base.output.clone().unwrap_or_else(|| PathBuf::from("grid"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let configs = table_grid(&base, &snrs, &seeds);
    let mut reports = Vec::with_capacity(configs.len());
    for result in run_grid(&configs) {
        let report = result?;
        let name = format!(
            "{}_{}_snr{}_seed{}.json",
            report.scenario,
            algorithm_label(report.crp, report.revised).replace('+', "_"),
            report.snr,
            report.seed
        );
        write_report_json(&report, &dir.join(name))?;
        reports.push(report);
    }
    write_tables(&reports, &dir.join("table.csv"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Grid(a) => cmd_grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
