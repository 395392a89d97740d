use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trajphd::experiment::{run_experiment, summary_table, write_outputs, ExperimentFile};
use trajphd::filters::FilterKind;
use trajphd::Error;

#[derive(Parser)]
#[command(name = "trajphd", version, about = "Monte Carlo runs of trajectory PHD/CPHD filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Number of Monte Carlo runs (overrides the config).
        #[arg(long)]
        runs: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated filter kinds to keep, e.g. `tphd,tagged-phd`.
        #[arg(long, value_delimiter = ',')]
        filters: Option<Vec<String>>,
        /// Comma-separated L values for the trajectory filters.
        #[arg(long, value_delimiter = ',')]
        lscan: Option<Vec<usize>>,
    },
    /// Print the default four-target experiment config.
    DefaultConfig,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::DefaultConfig => {
            println!("{}", ExperimentFile::four_target().to_json());
            Ok(())
        }
        Command::Run {
            config,
            runs,
            seed,
            jobs,
            out,
            filters,
            lscan,
        } => {
            let mut file = ExperimentFile::load(&config)?;
            if let Some(r) = runs {
                file.n_runs = r;
            }
            if let Some(s) = seed {
                file.scenario.seed = s;
            }
            if let Some(o) = out {
                file.output = o;
            }
            if let Some(names) = filters {
                let kinds = names
                    .iter()
                    .map(|n| FilterKind::parse(n.trim()).ok_or_else(|| Error::Config(format!("unknown filter kind {n}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                file.filters.retain(|f| kinds.contains(&f.kind));
            }
            if let Some(ls) = lscan {
                for f in file.filters.iter_mut().filter(|f| !f.kind.is_tagged()) {
                    f.lscan = ls.clone();
                }
            }
            let experiment = file.build()?;
            let result = run_experiment(&experiment, jobs)?;
            write_outputs(&experiment, &result, &experiment.output)?;
            print!("{}", summary_table(&result.summaries));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
