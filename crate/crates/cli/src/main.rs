use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperproj::engines::HyperValue;
use hyperproj::inference::DEFAULT_BATCH_SIZE;
use hyperproj::metrics::DEFAULT_K;
use hyperproj_cli::commands::{
    self, parse_h, BenchArgs, EvaluateArgs, InferArgs, LayoutFormat, Run, Split,
};
use hyperproj_cli::config::RunConfig;
use hyperproj_cli::service::{serve, ServiceState};
use hyperproj_cli::Failure;

#[derive(Parser)]
#[command(name = "hyperproj", version, about = "Train and serve hyperparameter-conditioned projection models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config field, e.g. `--set training.epochs=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Failure> {
        RunConfig::load(&self.config, &self.set)
    }
}

fn h_arg(s: &str) -> Result<HyperValue, String> {
    parse_h(s).map_err(|f| f.detail)
}

#[derive(Subcommand)]
enum Command {
    /// Sample a subset, compute ground truth, train, and write a run directory.
    Train(ConfigArgs),
    /// Compute and write ground-truth layouts only.
    Project(ConfigArgs),
    /// Compare model layouts with ground truth on a run's dataset.
    Evaluate {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// h value; repeat for several, weight vectors comma-separated. Defaults to the training grid.
        #[arg(long, value_parser = h_arg)]
        h: Vec<HyperValue>,
        /// Rows to score; repeat for several.
        #[arg(long, value_enum, default_values_t = [Split::Test])]
        split: Vec<Split>,
        /// Neighborhood size.
        #[arg(long, short, default_value_t = DEFAULT_K)]
        k: usize,
        /// Cap each split at a label-stratified sample of this size.
        #[arg(long)]
        max_points: Option<usize>,
        /// Accept h outside the trained range.
        #[arg(long)]
        allow_extrapolation: bool,
        /// Report directory; `<run>/evaluation` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time inference on oversampled inputs.
    Bench {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Row counts, comma-separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10_000, 20_000, 40_000, 80_000])]
        sizes: Vec<usize>,
        /// h value; the midpoint of the trained range by default.
        #[arg(long, value_parser = h_arg)]
        h: Option<HyperValue>,
        /// Rows per inference batch.
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Timed passes per size; the fastest is kept.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Write the model's layout of a run's dataset at one h.
    Infer {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// h value; the midpoint of the trained range by default.
        #[arg(long, value_parser = h_arg)]
        h: Option<HyperValue>,
        /// Rows to lay out.
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        /// Layout file format.
        #[arg(long, value_enum, default_value_t = LayoutFormat::Binary)]
        format: LayoutFormat,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// Rows per inference batch.
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Accept h outside the trained range.
        #[arg(long)]
        allow_extrapolation: bool,
        /// Keep outputs in the unit box instead of the training layout scale.
        #[arg(long)]
        normalized: bool,
    },
    /// Serve a run's model over HTTP and WebSocket.
    Serve {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Listen address.
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
        /// Rows to lay out.
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        /// Rows per inference batch.
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
    },
    /// Unpack a projection archive into layout files.
    Export {
        /// Projection archive (`archive.hpta`).
        #[arg(long)]
        archive: PathBuf,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// Layout file format.
        #[arg(long, value_enum, default_value_t = LayoutFormat::Csv)]
        format: LayoutFormat,
    },
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Train(c) => commands::train(&c.load()?),
        Command::Project(c) => commands::project(&c.load()?),
        Command::Evaluate {
            run,
            h,
            split,
            k,
            max_points,
            allow_extrapolation,
            out,
        } => {
            let args = EvaluateArgs {
                h,
                splits: split,
                k,
                max_points,
                allow_extrapolation,
                out,
            };
            commands::evaluate(&run, &args).map(|(text, _)| text)
        }
        Command::Bench {
            run,
            sizes,
            h,
            batch_size,
            repeats,
        } => commands::bench_run(
            &run,
            &BenchArgs {
                sizes,
                h,
                batch_size,
                repeats,
            },
        ),
        Command::Infer {
            run,
            h,
            split,
            format,
            out,
            batch_size,
            allow_extrapolation,
            normalized,
        } => commands::infer_run(
            &run,
            &InferArgs {
                h,
                split,
                format,
                out,
                batch_size,
                allow_extrapolation,
                normalized,
            },
        ),
        Command::Serve {
            run,
            addr,
            split,
            batch_size,
        } => {
            let r = Run::open(&run)?;
            let data = r.dataset()?;
            let rows = r.rows(&data, split)?;
            let subset = data.subset(&rows)?;
            let state = ServiceState::new(r.model, subset.features(), subset.labels(), batch_size)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("io", e.to_string()))?;
            runtime.block_on(serve(state, addr))?;
            Ok("service stopped".into())
        }
        Command::Export { archive, out, format } => commands::export(&archive, &out, format),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
