//! Command-line entry point: graph caches, corrupted exports, training,
//! evaluation and reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use mapper_gin::config::{help_text, Config, CACHE_DIR_ENV};
use mapper_gin::mapper::{graphs_to_json, read_graph_cache};
use mapper_gin::pointcloud::{serialize_xyz, Split};
use mapper_gin::train_eval::{
    aggregate_csv, cell_name, metrics_csv, parse_metrics_csv, render_markdown, run_protocol,
    write_text, Experiment, PerfectPredictor, SeedSummary,
};
use mapper_gin::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const EXIT_USAGE: u8 = 2;
const EXIT_PREREQUISITE: u8 = 3;
const EXIT_DATA: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "mapper-gin",
    version,
    about = "Mapper graphs + GIN for point cloud classification"
)]
#[command(after_help = after_help())]
struct Cli {
    /// TOML config file; keys not given keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set model.hidden_dim=64.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Long schedule: 400 epochs, batch size 512.
    #[arg(long, global = true)]
    full: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build Mapper graph caches for dataset splits.
    BuildGraphs {
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        /// Also build every corruption cell of the test split.
        #[arg(long)]
        corrupted: bool,
        /// `json` also writes a readable `<cell>.json` next to each cache.
        #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
        format: FormatArg,
    },
    /// Export the corrupted test split as .xyz files.
    Corrupt {
        /// Output root; defaults to <paths.out_dir>/corrupted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per seed, keeping the best clean-accuracy checkpoint.
    Train {
        /// Shorthand for --set run.epochs=N.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate checkpoints on the clean and corrupted test split.
    Eval {
        /// Replace the model with a stub predictor.
        #[arg(long, value_enum)]
        stub: Option<StubArg>,
    },
    /// Render the markdown table from metrics CSV files.
    Report {
        /// Metrics files; defaults to every <paths.out_dir>/*/metrics.csv.
        #[arg(long = "metrics")]
        metrics: Vec<PathBuf>,
        /// Output file; defaults to <paths.out_dir>/report.md.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FormatArg {
    Binary,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StubArg {
    /// Predicts the true label.
    Perfect,
}

fn after_help() -> String {
    format!(
        "Config keys (defaults shown):\n{}\nEnvironment:\n  {CACHE_DIR_ENV}  overrides paths.cache_dir\n\n\
         Exit codes: 0 success, 2 usage, 3 missing prerequisite, 4 data error",
        help_text()
    )
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::UnknownCorruption(_)
        | Error::Severity(_) => EXIT_USAGE,
        Error::MissingPrerequisite { .. }
        | Error::Stale { .. }
        | Error::ConfigHashMismatch { .. } => EXIT_PREREQUISITE,
        _ => EXIT_DATA,
    }
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if cli.full {
        config.apply_full();
    }
    for o in &cli.overrides {
        config.set(o)?;
    }
    Ok(config)
}

fn build_graphs(
    exp: &Experiment,
    split: SplitArg,
    corrupted: bool,
    format: FormatArg,
) -> Result<(), Error> {
    let splits = match split {
        SplitArg::Train => vec![Split::Train],
        SplitArg::Test => vec![Split::Test],
        SplitArg::All => vec![Split::Train, Split::Test],
    };
    for (path, n) in exp.build_graph_caches(&splits, corrupted)? {
        println!("{} ({n} graphs)", path.display());
        if format == FormatArg::Json {
            let cell = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let key = exp.config.graph_key(cell);
            let json = graphs_to_json(&key, &read_graph_cache(&path, Some(&key))?);
            let out = path.with_extension("json");
            write_text(&out, &json)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn corrupt(exp: &Experiment, out: &Path) -> Result<(), Error> {
    let clean = exp.clouds(Split::Test)?;
    let mut written = 0usize;
    for (kind, severity) in exp.catalog.cells() {
        let dir = out.join(kind.name()).join(severity.to_string());
        for (i, pc) in exp
            .corrupted_clouds(&clean, kind, severity)?
            .iter()
            .enumerate()
        {
            let class = pc.label.map_or("unlabelled".to_string(), |c| {
                exp.manifest.class_names[c].clone()
            });
            write_text(&dir.join(format!("{i:05}_{class}.xyz")), &serialize_xyz(pc))?;
            written += 1;
        }
        eprintln!("{}: {} clouds", cell_name(kind, severity), clean.len());
    }
    println!("{written} files under {}", out.display());
    Ok(())
}

fn train(exp: &Experiment) -> Result<(), Error> {
    let start = Instant::now();
    let train_set = exp.samples(Split::Train)?;
    let test_set = exp.samples(Split::Test)?;
    eprintln!(
        "{} train / {} test samples ready in {:.1}s",
        train_set.len(),
        test_set.len(),
        start.elapsed().as_secs_f64()
    );
    for &seed in &exp.run.seeds {
        let start = Instant::now();
        let outcome = exp.train_seed(seed, &train_set, &test_set, |r| {
            eprintln!(
                "seed {seed} epoch {:>3}  lr {:.6}  loss {:.4}  clean {:.4}  {:.0}s",
                r.epoch,
                r.lr,
                r.loss,
                r.clean_accuracy,
                start.elapsed().as_secs_f64()
            );
        })?;
        let best = outcome.history[outcome.best_epoch];
        println!(
            "seed {seed}: best epoch {} clean accuracy {:.4} -> {}",
            best.epoch,
            best.clean_accuracy,
            exp.checkpoint_path(seed).display()
        );
    }
    Ok(())
}

fn eval(exp: &Experiment, stub: Option<StubArg>) -> Result<(), Error> {
    let clean_clouds = exp.clouds(Split::Test)?;
    let clean = exp.samples(Split::Test)?;
    let summary: SeedSummary = run_protocol(&exp.run.seeds, |seed| {
        let table = match stub {
            Some(StubArg::Perfect) => exp.evaluate(&PerfectPredictor, &clean_clouds, &clean)?,
            None => exp.evaluate(&exp.load_checkpoint(seed)?, &clean_clouds, &clean)?,
        };
        eprintln!("seed {seed}: clean {:.4}", table.clean);
        Ok(table)
    })?;
    let models: BTreeMap<String, SeedSummary> = [(exp.model.variant.name().to_string(), summary)]
        .into_iter()
        .collect();
    let dir = exp.out_dir.join(exp.model.variant.name());
    let metrics = dir.join("metrics.csv");
    let aggregate = dir.join("aggregate.csv");
    write_text(&metrics, &metrics_csv(&models))?;
    write_text(&aggregate, &aggregate_csv(&models))?;
    println!("{}\n{}", metrics.display(), aggregate.display());
    Ok(())
}

fn report(exp_out: &Path, metrics: &[PathBuf], out: Option<PathBuf>) -> Result<(), Error> {
    let mut files = metrics.to_vec();
    if files.is_empty() {
        if let Ok(entries) = std::fs::read_dir(exp_out) {
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path().join("metrics.csv")))
                .filter(|p| p.is_file())
                .collect();
            found.sort();
            files = found;
        }
    }
    if files.is_empty() {
        return Err(Error::MissingPrerequisite {
            path: exp_out.join("*/metrics.csv"),
            hint: "run `mapper-gin eval` first or pass --metrics".into(),
        });
    }
    let mut models: BTreeMap<String, SeedSummary> = BTreeMap::new();
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| Error::MissingPrerequisite {
            path: path.clone(),
            hint: e.to_string(),
        })?;
        let parsed = parse_metrics_csv(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            e => e,
        })?;
        for (model, summary) in parsed {
            models.entry(model).or_default().runs.extend(summary.runs);
        }
    }
    let md = render_markdown(&models);
    let out = out.unwrap_or_else(|| exp_out.join("report.md"));
    write_text(&out, &md)?;
    print!("{md}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = load_config(&cli)?;
    if let Command::Train { epochs: Some(n) } = cli.command {
        config.set(&format!("run.epochs={n}"))?;
    }
    if let Command::Report { metrics, out } = &cli.command {
        return report(&config.out_dir()?, metrics, out.clone());
    }
    let exp = Experiment::new(config)?;
    match cli.command {
        Command::BuildGraphs {
            split,
            corrupted,
            format,
        } => build_graphs(&exp, split, corrupted, format),
        Command::Corrupt { out } => {
            let out = out.unwrap_or_else(|| exp.out_dir.join("corrupted"));
            corrupt(&exp, &out)
        }
        Command::Train { .. } => train(&exp),
        Command::Eval { stub } => eval(&exp, stub),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
