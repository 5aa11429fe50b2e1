use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fairhc::data::{load_csv, subsample, ColorMap, Dataset, IngestConfig};
use fairhc::metrics::{aggregate, DEFAULT_BINS};
use fairhc::pipeline::{audit_tree, run_replication, InPhase, Phase, PhaseError, RunConfig};
use fairhc::tree::TreeFile;
use fairhc::{Dendrogram, Error, FairParams, FairnessSpec};

/// Fair hierarchical clustering experiments.
#[derive(Debug, Parser)]
#[command(name = "fairhc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, subsample, cluster, rebuild fairly and report.
    Run(RunArgs),
    /// Check a tree file against a dataset.
    Audit(AuditArgs),
    /// Write a synthetic census-style CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated numeric feature columns.
    #[arg(long, value_delimiter = ',', required = true)]
    numeric_cols: Vec<String>,
    /// Column holding the group attribute.
    #[arg(long)]
    color_col: String,
    /// `value=id` pairs, comma-separated or repeated; `*=id` catches the rest.
    #[arg(long, value_delimiter = ',', required = true)]
    color_map: Vec<String>,
    /// Rows to sample per replication (default: all rows).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Min-max rescale every feature to [0, 1].
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct FairArgs {
    /// Split arity.
    #[arg(long, default_value_t = 4)]
    h: usize,
    /// Fold width.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// eps = 1 / (c * log2 n).
    #[arg(long, default_value_t = 8.0)]
    eps_c: f64,
    /// Explicit eps, overriding --eps-c.
    #[arg(long)]
    eps: Option<f64>,
    /// Per-color lower bounds (comma-separated); requires --beta.
    #[arg(long, value_delimiter = ',', requires = "beta")]
    alpha: Option<Vec<f64>>,
    /// Per-color upper bounds (comma-separated); requires --alpha.
    #[arg(long, value_delimiter = ',', requires = "alpha")]
    beta: Option<Vec<f64>>,
}

impl FairArgs {
    fn spec(&self) -> Result<Option<FairnessSpec>, Error> {
        match (&self.alpha, &self.beta) {
            (Some(a), Some(b)) => FairnessSpec::new(a.clone(), b.clone()).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fair: FairArgs,
    /// Replications with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    replications: usize,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fair tree; with several replications `.seed<N>` is added
    /// before the extension.
    #[arg(long)]
    emit_tree: Option<PathBuf>,
    /// Write the average-linkage tree, named like --emit-tree.
    #[arg(long)]
    emit_vanilla: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Color binned in the histogram.
    #[arg(long, default_value_t = 0)]
    histogram_color: usize,
    /// Write the (merged) histogram as bin_midpoint,count CSV.
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
    /// Record pair separations and include their audit.
    #[arg(long)]
    separations: bool,
    /// Report audit failures without failing the run.
    #[arg(long)]
    no_strict: bool,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Tree JSON written by `run --emit-tree`.
    #[arg(long)]
    tree: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fair: FairArgs,
    /// Audit path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 0 even when violations are found.
    #[arg(long)]
    no_strict: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 32_561)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Audit(args) => audit(args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "phase": e.phase, "kind": kind(&e.source), "message": e.source.to_string() } })
            );
            ExitCode::from(exit_code(&e))
        }
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidNode(_) => "invalid_node",
        Error::InvalidPair(_) => "invalid_pair",
        Error::Shape(_) => "shape",
        Error::Precondition(_) => "precondition",
        Error::Parameter(_) => "parameter",
        Error::Input(_) => "input",
        Error::TooSmall { .. } => "too_small",
        Error::Ingest(_) => "ingest",
        Error::Degenerate(_) => "degenerate",
        Error::Aggregation(_) => "aggregation",
        Error::Parse(_) => "parse",
        Error::Invariant(_) => "invariant",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

fn exit_code(e: &PhaseError) -> u8 {
    match (&e.phase, &e.source) {
        (Phase::Usage, _) | (_, Error::Parameter(_)) => 1,
        (_, Error::Invariant(_)) => 3,
        _ => 2,
    }
}

fn ingest(args: &DataArgs) -> Result<(IngestConfig, Dataset), PhaseError> {
    let config = IngestConfig {
        path: args.input.clone(),
        numeric_cols: args.numeric_cols.clone(),
        color_col: args.color_col.clone(),
        color_map: ColorMap::parse(&args.color_map).phase(Phase::Usage)?,
        normalize: args.normalize,
    };
    let data = load_csv(&config).phase(Phase::Ingest)?;
    Ok((config, data))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), PhaseError> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(Error::from).phase(Phase::Output),
        None => {
            // A closed pipe on stdout is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn seeded_path(path: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn run(args: RunArgs) -> Result<u8, PhaseError> {
    if args.replications == 0 {
        return Err(Error::Parameter("at least one replication is required".into())).phase(Phase::Usage);
    }
    let (ingest_cfg, data) = ingest(&args.data)?;
    let config = RunConfig {
        h: args.fair.h,
        k: args.fair.k,
        eps_c: args.fair.eps_c,
        eps: args.fair.eps,
        n: args.data.n.unwrap_or(data.len()),
        bins: args.bins,
        histogram_color: args.histogram_color,
        spec: args.fair.spec().phase(Phase::Usage)?,
        record_separations: args.separations,
        dataset: ingest_cfg.path.display().to_string(),
        numeric_cols: ingest_cfg.numeric_cols.clone(),
        color_col: ingest_cfg.color_col.clone(),
        normalize: ingest_cfg.normalize,
    };
    config.fair_params(config.n).phase(Phase::Usage)?;

    let many = args.replications > 1;
    let mut reports = Vec::with_capacity(args.replications);
    for r in 0..args.replications {
        let seed = args.data.seed.wrapping_add(r as u64);
        let out = run_replication(&data, &config, seed)?;
        if let Some(p) = &args.emit_tree {
            write_output(Some(&seeded_path(p, seed, many)), &out.fair.to_json())?;
        }
        if let Some(p) = &args.emit_vanilla {
            write_output(Some(&seeded_path(p, seed, many)), &out.vanilla.to_json())?;
        }
        reports.push(out.report);
    }

    let text = if many {
        let summary = aggregate(&reports).phase(Phase::Metrics)?;
        if let Some(p) = &args.histogram_csv {
            summary
                .histogram
                .write_csv(fs::File::create(p).map_err(Error::from).phase(Phase::Output)?)
                .phase(Phase::Output)?;
        }
        serde_json::to_string_pretty(&json!({ "summary": summary, "reports": reports }))
    } else {
        if let Some(p) = &args.histogram_csv {
            reports[0]
                .histogram
                .write_csv(fs::File::create(p).map_err(Error::from).phase(Phase::Output)?)
                .phase(Phase::Output)?;
        }
        serde_json::to_string_pretty(&reports[0])
    }
    .map_err(Error::from)
    .phase(Phase::Output)?;
    write_output(args.out.as_deref(), &text)?;

    let failed: Vec<u64> = reports.iter().filter(|r| !r.audit.passed).map(|r| r.params.seed).collect();
    if !failed.is_empty() && !args.no_strict {
        return Err(Error::Invariant(format!("audit failed for seeds {failed:?}"))).phase(Phase::Audit);
    }
    Ok(0)
}

fn audit(args: AuditArgs) -> Result<u8, PhaseError> {
    let (_, data) = ingest(&args.data)?;
    let sample = match args.data.n {
        Some(n) => subsample(&data, n, args.data.seed).phase(Phase::Subsample)?,
        None => data,
    };
    let text = fs::read_to_string(&args.tree).map_err(Error::from).phase(Phase::Ingest)?;
    let file: TreeFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string())).phase(Phase::Ingest)?;
    let params = match args.fair.eps {
        Some(eps) => FairParams::new(args.fair.h, args.fair.k, eps),
        None => FairParams::with_eps_c(args.fair.h, args.fair.k, args.fair.eps_c, sample.len()),
    }
    .phase(Phase::Usage)?;
    let spec = args.fair.spec().phase(Phase::Usage)?;

    let issues = file.structural_issues(sample.len());
    let report = if issues.is_empty() {
        let tree = Dendrogram::from_tree_file(&file, &sample.colors, sample.num_colors).phase(Phase::Audit)?;
        let (audit, details) = audit_tree(&tree, &params, spec.as_ref()).phase(Phase::Audit)?;
        json!({ "passed": audit.passed, "audit": audit, "violations": details })
    } else {
        json!({ "passed": false, "violations": { "conservation": issues } })
    };
    let passed = report["passed"].as_bool().unwrap_or(false);
    let text = serde_json::to_string_pretty(&report).map_err(Error::from).phase(Phase::Output)?;
    write_output(args.out.as_deref(), &text)?;
    Ok(if passed || args.no_strict { 0 } else { 3 })
}

fn synth(args: SynthArgs) -> Result<u8, PhaseError> {
    let file = fs::File::create(&args.out).map_err(Error::from).phase(Phase::Output)?;
    fairhc::synth::write_census_csv(std::io::BufWriter::new(file), args.rows, args.seed).phase(Phase::Output)?;
    Ok(0)
}
