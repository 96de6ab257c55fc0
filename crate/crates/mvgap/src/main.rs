use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mvgap::config::{Experiment, ExperimentConfig};
use mvgap::experiments::{run, run_seed_matrix};

/// Runs one verification experiment and writes report.json plus any CSV
/// artifacts. Exit status: 0 all claims pass, 1 a claim failed or the run
/// errored, 2 bad configuration.
#[derive(Parser, Debug)]
#[command(name = "mvgap", version)]
struct Cli {
    /// Experiment name, or `list` to print the available experiments.
    experiment: String,

    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a single key, e.g. `--set lambda=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Repeat the run over this many consecutive seeds.
    #[arg(long)]
    seed_matrix: Option<usize>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    show_config: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, String> {
    let exp: Experiment = cli.experiment.parse().map_err(|e| format!("{e}"))?;
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ExperimentConfig::from_text(exp, &text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::defaults(exp),
    };
    for o in &cli.overrides {
        cfg.set_pair(o).map_err(|e| e.to_string())?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string()).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn write_out(dir: &PathBuf, name: &str, contents: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.experiment == "list" {
        for e in Experiment::ALL {
            println!("{e}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.show_config {
        for (k, v) in cfg.values() {
            println!("{k} = {v}");
        }
        return ExitCode::SUCCESS;
    }
    let result = match cli.seed_matrix {
        Some(n) if n > 0 => run_seed_matrix(&cfg, n).map(|r| (r, Vec::new())),
        Some(_) => {
            eprintln!("error: --seed-matrix needs a positive count");
            return ExitCode::from(2);
        }
        None => run(&cfg),
    };
    let (report, artifacts) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_config() { 2 } else { 1 });
        }
    };
    let mut io = write_out(&cli.out, "report.json", &report.to_json());
    for a in &artifacts {
        io = io.and_then(|_| write_out(&cli.out, &a.file_name, &a.contents));
    }
    if let Err(e) = io {
        eprintln!("error writing {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    print!("{}", report.summary());
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

