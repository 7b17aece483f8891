//! `vibe`: generate data, cluster bodies, train, evaluate, recommend,
//! explain and self-verify.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed input), 3 numeric failure (training diverged,
//! verification failed).

mod commands;
mod config;
mod failure;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use vibe_core::method::Method;

use commands::{BodySource, EvalArgs, ExplainFormat, TrainArgs};
use config::RunConfig;
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "vibe", version, about = "Body-aware clothing recommendation pipeline")]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true, env = "VIBE_CONFIG")]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic catalog with its compatibility oracle.
    GenData {
        /// Output directory [default: paths.data].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Generator seed [default: synthetic.seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Zero body, attribute and visual noise and observe every positive.
        #[arg(long)]
        noise_free: bool,
    },
    /// Cluster the catalog's bodies into types and save the clustering.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        /// Output file [default: <data>/clustering.txt].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write a checkpoint plus its loss trajectory.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Option<Method>,
        /// Checkpoint path [default: paths.checkpoint].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss trajectory path [default: <checkpoint>.loss].
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Cold-start evaluation over repeated splits.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Methods to compare, comma separated, or `all` [default: method].
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Number of split/train runs [default: eval.runs].
        #[arg(long)]
        runs: Option<usize>,
        /// Runs trained concurrently [default: jobs].
        #[arg(long)]
        jobs: Option<usize>,
        /// Versatility quantiles (percent) for the specificity curve, e.g. 100,75,50,25.
        #[arg(long, value_delimiter = ',')]
        quantiles: Vec<u32>,
        /// Metrics file [default: paths.metrics].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pairwise preference triples to rank with --checkpoint.
        #[arg(long, requires = "checkpoint")]
        preferences: Option<PathBuf>,
        #[arg(long, requires = "preferences")]
        checkpoint: Option<PathBuf>,
    },
    /// Print the best-scoring garments for a body.
    Recommend {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        body: BodyArgs,
        /// Checkpoint [default: paths.checkpoint].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Name the garment attributes that suit and do not suit a body.
    Explain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        body: BodyArgs,
        /// Embedding checkpoint [default: paths.checkpoint].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Nearest and furthest garments fed to the probe [default: explain.m].
        #[arg(long)]
        m: Option<usize>,
        /// Attributes listed per side [default: explain.top_k].
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the built-in oracle checks.
    Verify,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory [default: paths.data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Saved clustering [default: paths.clustering, else cluster on the fly].
    #[arg(long)]
    clustering: Option<PathBuf>,
    /// Seed for clustering, splitting and training [default: seed].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("who").required(true).args(["body", "body_id"])))]
struct BodyArgs {
    /// Body file: one or more estimates of a single body in catalog body-line format.
    #[arg(long)]
    body: Option<PathBuf>,
    /// Id of a catalog body.
    #[arg(long)]
    body_id: Option<String>,
}

impl BodyArgs {
    fn source(&self) -> BodySource<'_> {
        match (&self.body, &self.body_id) {
            (Some(p), _) => BodySource::File(p),
            (None, Some(id)) => BodySource::CatalogId(id),
            (None, None) => unreachable!("clap requires one of --body/--body-id"),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

/// Applies the shared data flags; returns the dataset directory and clustering path.
fn data_paths(config: &mut RunConfig, args: &DataArgs) -> (PathBuf, Option<PathBuf>) {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = args.data.clone().unwrap_or_else(|| config.paths.data.clone());
    let clustering = args.clustering.clone().or_else(|| config.paths.clustering.clone());
    (data, clustering)
}

fn parse_methods(names: &[String], default: Method) -> Result<Vec<Method>, Failure> {
    if names.is_empty() {
        return Ok(vec![default]);
    }
    if names.iter().any(|n| n == "all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut methods = Vec::new();
    for n in names {
        let m: Method = n.parse().map_err(Failure::usage)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn run(cli: Cli) -> Result<(String, bool), Failure> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let output = match cli.command {
        Command::GenData { out, seed, noise_free } => {
            if let Some(s) = seed {
                config.synthetic.seed = s;
            }
            let out = out.unwrap_or_else(|| config.paths.data.clone());
            commands::gen_data(&config, &out, noise_free)?
        }
        Command::Cluster { data, out } => {
            let (dir, _) = data_paths(&mut config, &data);
            let out = out.unwrap_or_else(|| dir.join("clustering.txt"));
            commands::cluster(&config, &dir, &out)?
        }
        Command::Train {
            data,
            method,
            out,
            loss_out,
        } => {
            let (dir, clustering) = data_paths(&mut config, &data);
            if let Some(m) = method {
                config = config.with_method(m);
            }
            let out = out.unwrap_or_else(|| config.paths.checkpoint.clone());
            commands::train(
                &config,
                &TrainArgs {
                    data: &dir,
                    clustering: clustering.as_deref(),
                    out: &out,
                    loss_out,
                },
            )?
        }
        Command::Eval {
            data,
            method,
            runs,
            jobs,
            quantiles,
            out,
            preferences,
            checkpoint,
        } => {
            let (dir, clustering) = data_paths(&mut config, &data);
            if let Some(r) = runs {
                config.eval.runs = r;
            }
            if let Some(j) = jobs {
                config.jobs = j;
            }
            if !quantiles.is_empty() {
                config.eval.quantiles = quantiles;
            }
            config.validate()?;
            let methods = parse_methods(&method, config.method)?;
            let out = out.unwrap_or_else(|| config.paths.metrics.clone());
            commands::eval(
                &config,
                &EvalArgs {
                    data: &dir,
                    clustering: clustering.as_deref(),
                    methods: &methods,
                    out: &out,
                    preferences: preferences.as_deref().zip(checkpoint.as_deref()),
                },
            )?
        }
        Command::Recommend {
            data,
            body,
            checkpoint,
            top,
        } => {
            let (dir, _) = data_paths(&mut config, &data);
            let checkpoint = checkpoint.unwrap_or_else(|| config.paths.checkpoint.clone());
            commands::recommend(&dir, &checkpoint, &body.source(), top)?
        }
        Command::Explain {
            data,
            body,
            checkpoint,
            m,
            top_k,
            format,
        } => {
            let (dir, _) = data_paths(&mut config, &data);
            if let Some(m) = m {
                config.explain.m = m;
            }
            if let Some(k) = top_k {
                config.explain.top_k = k;
            }
            config.validate()?;
            let checkpoint = checkpoint.unwrap_or_else(|| config.paths.checkpoint.clone());
            let format = match format {
                Format::Text => ExplainFormat::Text,
                Format::Kv => ExplainFormat::KeyValue,
            };
            commands::explain(&config, &dir, &checkpoint, &body.source(), format)?
        }
        Command::Verify => return Ok(verify::run()),
    };
    Ok((output, true))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok((output, ok)) => {
            let _ = std::io::stdout().write_all(output.as_bytes());
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
