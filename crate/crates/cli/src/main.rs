use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kiln_core::curation::{Catalog, Predicate};
use kiln_core::mapreduce::HrmcConnector;
use kiln_core::model::{validate_run_spec, RunSpec};
use kiln_core::platform::Backend;
use kiln_core::scheduler::{self, RunReport};
use kiln_core::sweep::{run_sweep, SweepSpec};
use serde_json::Value;

const OK: u8 = 0;
const RUN_FAILED: u8 = 1;
const INVALID: u8 = 2;
const IO_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "kiln", version, about = "Run, sweep and curate seeded annealing experiments")]
struct Cli {
    /// Catalog root directory.
    #[arg(long, global = true, default_value = "./catalog")]
    catalog: PathBuf,

    /// Overrides the spec's master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Checks a run spec and prints every error, or OK.
    Validate { spec: PathBuf },
    /// Runs a spec end to end.
    Submit { spec: PathBuf },
    /// Runs every combination of a sweep file.
    Sweep { spec: PathBuf },
    /// Queries the dataset catalog.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Prints every dataset id.
    List,
    /// Prints ids whose metadata satisfies all predicates (key=v, key<v, key>v).
    Search { predicates: Vec<String> },
}

struct Failure(u8);

type CmdResult = Result<u8, Failure>;

fn fail(code: u8, msg: impl std::fmt::Display) -> Failure {
    eprintln!("error: {msg}");
    Failure(code)
}

/// Writes one stdout line, tolerating a closed pipe.
fn out(line: impl std::fmt::Display) {
    let _ = writeln!(io::stdout().lock(), "{line}");
}

fn read_document(path: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(IO_ERROR, format!("{}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| fail(INVALID, format!("{}: {e}", path.display())))?;
    if let (Some(seed), Some(map)) = (seed, doc.as_object_mut()) {
        map.insert("master_seed".into(), seed.into());
    }
    Ok(doc)
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<RunSpec, Failure> {
    let doc = read_document(path, seed)?;
    validate_run_spec(&doc).map_err(|errs| {
        for e in errs.iter() {
            eprintln!("{e}");
        }
        Failure(INVALID)
    })
}

fn print_report(report: &RunReport) {
    let cost = report.best_metric.map_or_else(|| "none".to_string(), |c| c.to_string());
    out(format_args!("{}\t{:?}\t{}", report.spec_name, report.final_stage.stage, cost));
}

fn validate(path: &Path, seed: Option<u64>) -> CmdResult {
    let doc = read_document(path, seed)?;
    let errors = match doc.get(kiln_core::sweep::SWEEP_KEY) {
        Some(_) => SweepSpec::from_document(&doc).err(),
        None => validate_run_spec(&doc).err(),
    };
    match errors {
        None => {
            out("OK");
            Ok(OK)
        }
        Some(errs) => {
            for e in errs.iter() {
                out(e);
            }
            Ok(INVALID)
        }
    }
}

fn submit(path: &Path, catalog_root: &Path, seed: Option<u64>) -> CmdResult {
    let spec = load_spec(path, seed)?;
    let mut catalog = if spec.curate {
        Some(Catalog::open(catalog_root).map_err(|e| fail(IO_ERROR, e))?)
    } else {
        None
    };
    let mut platform = Backend::for_spec(&spec);
    let connector = HrmcConnector::new(&spec);
    let report = scheduler::run(&spec, &mut platform, &connector, catalog.as_mut()).map_err(|e| fail(IO_ERROR, e))?;
    if let Some(catalog) = &catalog {
        if report.iterations_executed > 0 {
            let plots = catalog.emit_plots(&spec.name).map_err(|e| fail(IO_ERROR, e))?;
            for w in &plots.warnings {
                log::warn!("{w}");
            }
        }
    }
    print_report(&report);
    Ok(if report.is_complete() { OK } else { RUN_FAILED })
}

fn sweep(path: &Path, catalog_root: &Path, seed: Option<u64>) -> CmdResult {
    let doc = read_document(path, seed)?;
    let sweep = SweepSpec::from_document(&doc).map_err(|errs| {
        for e in errs.iter() {
            eprintln!("{e}");
        }
        Failure(INVALID)
    })?;
    let mut catalog = if sweep.base.curate {
        Some(Catalog::open(catalog_root).map_err(|e| fail(IO_ERROR, e))?)
    } else {
        None
    };
    let outcome = run_sweep(&sweep, |c| Backend::for_spec(&c.spec), HrmcConnector::new, catalog.as_mut())
        .map_err(|e| fail(IO_ERROR, e))?;
    for report in &outcome.reports {
        print_report(report);
    }
    Ok(if outcome.all_complete() { OK } else { RUN_FAILED })
}

fn datasets(command: &DatasetsCommand, catalog_root: &Path) -> CmdResult {
    let ids = match command {
        DatasetsCommand::List => {
            let catalog = Catalog::open(catalog_root).map_err(|e| fail(IO_ERROR, e))?;
            catalog.dataset_ids()
        }
        DatasetsCommand::Search { predicates } => {
            let query = predicates
                .iter()
                .map(|p| Predicate::parse(p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fail(INVALID, e))?;
            let catalog = Catalog::open(catalog_root).map_err(|e| fail(IO_ERROR, e))?;
            catalog.search(&query)
        }
    };
    for id in ids {
        out(id);
    }
    Ok(OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { spec } => validate(spec, cli.seed),
        Command::Submit { spec } => submit(spec, &cli.catalog, cli.seed),
        Command::Sweep { spec } => sweep(spec, &cli.catalog, cli.seed),
        Command::Datasets { command } => datasets(command, &cli.catalog),
    };
    ExitCode::from(result.unwrap_or_else(|Failure(code)| code))
}
