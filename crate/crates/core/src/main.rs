use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcsurv::anchor;
use dcsurv::data::{self, CsvSchema, PartitionScheme};
use dcsurv::error::{Error, Result};
use dcsurv::pipeline::{self, ExperimentConfig};
use dcsurv::prep::{preprocess_csv, PreprocessOptions};
use dcsurv::protocol::{self, AnalysisConfig, PartyConfig};
use dcsurv::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(
    name = "dcsurv",
    version,
    about = "Covariate-adjusted survival curves from data partitioned across parties"
)]
struct Cli {
    /// Override the seed found in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for repeated experiments (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Default output location when a subcommand flag is omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark dataset as CSV plus a JSON sidecar.
    Synth(SynthArgs),
    /// Generate the shared anchor into an exchange directory.
    Anchor(AnchorArgs),
    /// Split a dataset CSV into per-party raw files (simulation helper).
    Split(SplitArgs),
    /// User side: publish one party's reduced data and anchor shares.
    UserEncode(UserEncodeArgs),
    /// Analyst side: verify the exchange, fuse shares, estimate curves.
    Analyst(AnalystArgs),
    /// Verify exchange-directory integrity and the privacy constraint.
    Audit(AuditArgs),
    /// Run a repeated benchmark experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Impute missing numeric cells and one-hot encode categorical columns.
    Preprocess(PreprocessArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (JSON); defaults to the built-in benchmark settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnchorArgs {
    #[arg(long)]
    exchange: PathBuf,
    /// JSON file with per-column [min, max] pairs.
    #[arg(long, conflicts_with = "from_data")]
    ranges: Option<PathBuf>,
    /// Take ranges from a dataset CSV instead (benchmark convenience).
    #[arg(long, requires = "schema")]
    from_data: Option<PathBuf>,
    /// Schema JSON for `--from-data`.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Anchor rows; defaults to the dataset size with `--from-data`.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON; defaults to the synthetic dataset's column names.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    institutions: usize,
    #[arg(long, default_value_t = 1)]
    covariate_groups: usize,
    /// Explicit column groups as JSON, e.g. "[[0,1,2],[3,4,5]]".
    #[arg(long)]
    column_groups: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pre-fill party configs with standardization enabled.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct UserEncodeArgs {
    /// Party config JSON (k, l, col_indices, target_dim, ...).
    #[arg(long)]
    party: PathBuf,
    /// The party's raw covariate CSV (id + columns).
    #[arg(long)]
    data: PathBuf,
    /// Outcome CSV (id,time,event,treat); required for the outcome holder.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[arg(long)]
    exchange: PathBuf,
}

#[derive(Args)]
struct AnalystArgs {
    #[arg(long)]
    exchange: PathBuf,
    /// Analysis config JSON (parties, fused_dim, match, emit flags).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    exchange: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render mean curves as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    impute_mean: bool,
    #[arg(long)]
    one_hot: bool,
    /// Comma-separated columns copied through untouched.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn out_or(default_from: &Option<PathBuf>, flag: Option<PathBuf>, fallback: &str) -> PathBuf {
    flag.or_else(|| default_from.clone()).unwrap_or_else(|| PathBuf::from(fallback))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let mut config: SynthConfig = match &args.config {
                Some(path) => read_json(path)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            config.validate()?;
            let out = out_or(&cli.out, args.out, "dataset.csv");
            let dataset = synth::generate(&config)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            data::write_dataset_csv(&dataset, &out)?;
            let sidecar = out.with_extension("meta.json");
            std::fs::write(&sidecar, serde_json::to_string_pretty(&config)?)?;
            println!(
                "wrote {} ({} samples, {} covariates) and {}",
                out.display(),
                dataset.n(),
                dataset.m(),
                sidecar.display()
            );
            Ok(())
        }
        Command::Anchor(args) => {
            let seed = cli.seed.unwrap_or(args.seed);
            let (ranges, default_rows) = if let Some(data_path) = &args.from_data {
                let schema: CsvSchema = read_json(args.schema.as_ref().unwrap())?;
                let (dataset, _) = data::load_csv(data_path, &schema)?;
                (anchor::ranges_from_dataset(&dataset), Some(dataset.n()))
            } else {
                let path = args.ranges.as_ref().ok_or_else(|| {
                    Error::Config("either --ranges or --from-data is required".into())
                })?;
                let ranges: Vec<(f64, f64)> = read_json(path)?;
                (ranges, None)
            };
            let rows = args.rows.or(default_rows).ok_or_else(|| {
                Error::Config("--rows is required when ranges are given directly".into())
            })?;
            protocol::publish_anchor(&args.exchange, &ranges, rows, seed)?;
            println!(
                "anchor with {rows} rows over {} columns published to {}",
                ranges.len(),
                args.exchange.display()
            );
            Ok(())
        }
        Command::Split(args) => {
            let schema: CsvSchema = match &args.schema {
                Some(path) => read_json(path)?,
                None => CsvSchema {
                    time: "time".into(),
                    event: Some("event".into()),
                    event_rule: None,
                    treat: Some("treat".into()),
                    treat_rule: None,
                    delimiter: None,
                    drop: vec![],
                    keep_rule_column: false,
                },
            };
            let (dataset, _) = data::load_csv(&args.data, &schema)?;
            let col_groups = match &args.column_groups {
                Some(text) => serde_json::from_str(text)
                    .map_err(|e| Error::Config(format!("--column-groups: {e}")))?,
                None => data::even_groups(dataset.m(), args.covariate_groups)?,
            };
            let seed = cli.seed.unwrap_or(args.seed);
            let mut rng = dcsurv::seeding::rng_for(seed, "rows");
            let scheme = PartitionScheme::new(
                data::random_row_groups(dataset.n(), args.institutions, &mut rng)?,
                col_groups,
            )?;
            let out_dir = out_or(&cli.out, args.out_dir, "private");
            let written =
                protocol::split_to_private_dir(&dataset, &scheme, &out_dir, args.standardize)?;
            println!("wrote {} files to {}", written.len(), out_dir.display());
            Ok(())
        }
        Command::UserEncode(args) => {
            let party: PartyConfig = read_json(&args.party)?;
            protocol::user_encode(&args.exchange, &party, &args.data, args.outcomes.as_deref())?;
            println!(
                "party ({},{}) shares published to {}",
                party.k,
                party.l,
                args.exchange.display()
            );
            Ok(())
        }
        Command::Analyst(args) => {
            let config: AnalysisConfig = read_json(&args.config)?;
            let out = out_or(&cli.out, args.out, "analysis");
            let summary = protocol::analyst_run(&args.exchange, &config, &out)?;
            println!(
                "{}: {} samples, fused dimension {}, matched sample size {} -> {}",
                summary.label,
                summary.samples,
                summary.fused_dim,
                summary.matched_sample_size,
                out.display()
            );
            Ok(())
        }
        Command::Audit(args) => {
            let report = protocol::audit(&args.exchange)?;
            println!(
                "audit passed: {} files verified, {} parties",
                report.files_checked, report.parties
            );
            Ok(())
        }
        Command::Experiment(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            if let Some(seed) = cli.seed {
                config.master_seed = seed;
            }
            let out = out_or(&cli.out, args.out, "experiment");
            let report = pipeline::run_experiment(&config, cli.workers)?;
            pipeline::write_report_files(&report, &out, args.svg)?;
            print!("{}", report.table.to_text());
            println!("report written to {}", out.display());
            if report.metadata.failed_repetitions > 0 {
                for line in &report.metadata.rep_errors {
                    eprintln!("{line}");
                }
                return Err(Error::Data(format!(
                    "{} of {} repetitions failed",
                    report.metadata.failed_repetitions, report.metadata.repetitions
                )));
            }
            Ok(())
        }
        Command::Preprocess(args) => {
            let output = out_or(&cli.out, args.output, "preprocessed.csv");
            let options = PreprocessOptions {
                impute_mean: args.impute_mean,
                one_hot: args.one_hot,
                exclude: args.exclude,
                delimiter: None,
            };
            let summary = preprocess_csv(&args.input, &output, &options)?;
            println!(
                "{} rows; imputed {} cells; encoded columns: {:?}",
                summary.rows, summary.imputed_cells, summary.encoded_columns
            );
            if !summary.remaining_categorical.is_empty() {
                eprintln!(
                    "note: categorical columns left unencoded: {:?} (use --one-hot)",
                    summary.remaining_categorical
                );
            }
            Ok(())
        }
    }
}
