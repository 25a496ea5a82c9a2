//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::artifacts::Stage;
use crate::config::{PipelineConfig, SearchMethod};
use crate::error::{CliError, CliResult};
use crate::stages::{execute, pipeline_stages, Run};

#[derive(Debug, Parser)]
#[command(name = "aadt", version, about = "Interval prediction of annual average daily traffic")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML pipeline configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Raw feature table (CSV), overriding the config.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Group manifest (JSON), overriding the config.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args, Default)]
pub struct TuneArgs {
    /// Search strategy, overriding the config
    #[arg(long, value_enum)]
    pub method: Option<SearchMethod>,
    /// Number of trials, overriding the config
    #[arg(long)]
    pub n_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature table and group manifest.
    Synth {
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Clean the raw table.
    Prepare,
    /// Split train/test and fit per-group PCA.
    Pca,
    /// Hyperparameter search.
    Tune(TuneArgs),
    /// Fit the forest with the tuned parameters.
    Train,
    /// Interval predictions and metrics on the test split.
    Evaluate,
    /// MDI and permutation importance.
    Importance,
    /// Travel time and collision risk from interval widths.
    Apps,
    /// Render SVG figures from existing artifacts.
    Figures,
    /// Run every stage in order.
    Pipeline(TuneArgs),
    /// Print the resolved configuration as TOML.
    Config,
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> CliResult<PipelineConfig> {
        let g = &self.global;
        let mut cfg = match &g.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(o) = &g.out {
            cfg.output_dir = o.clone();
        }
        if let Some(i) = &g.input {
            cfg.data.input = Some(i.clone());
        }
        if let Some(m) = &g.manifest {
            cfg.data.manifest = Some(m.clone());
        }
        match &self.command {
            Command::Synth { rows: Some(r) } => cfg.synth.n_rows = *r,
            Command::Tune(t) | Command::Pipeline(t) => {
                if let Some(m) = t.method {
                    cfg.tune.method = m;
                }
                if let Some(n) = t.n_iter {
                    cfg.tune.n_iter = n;
                }
            }
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn single(command: &Command) -> Option<Stage> {
    Some(match command {
        Command::Synth { .. } => Stage::Synth,
        Command::Prepare => Stage::Prepare,
        Command::Pca => Stage::Pca,
        Command::Tune(_) => Stage::Tune,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Importance => Stage::Importance,
        Command::Apps => Stage::Apps,
        Command::Figures => Stage::Figures,
        Command::Pipeline(_) | Command::Config => return None,
    })
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let run = Run::new(cfg);
    let manifest = match single(&cli.command) {
        Some(stage) => execute(&run, &[stage], false)?,
        None => {
            let stages = pipeline_stages(&run.cfg);
            execute(&run, &stages, true)?
        }
    };
    let missing = manifest.missing_artifacts(run.out());
    if !missing.is_empty() {
        return Err(CliError::internal(format!("artifacts missing after run: {missing:?}")));
    }
    for rec in &manifest.stages {
        log::info!("{} done in {:.2}s", rec.stage.name(), rec.seconds);
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
