use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cadstream::io::{self, MetricReport, RocSeries};
use cadstream::metrics::roc_curve;
use cadstream::runner::stream::labeled_scores;
use cadstream::runner::{self, ExperimentConfig, Mode, Profile};
use cadstream::{Error, Result};

/// Streaming anomaly detection with an EM admission filter.
#[derive(Parser, Debug)]
#[command(name = "cadstream", version)]
struct Cli {
    /// TOML file overriding any experiment setting.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Directory of clip sub-directories holding frame images.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Label file with `clip_id start end` lines (1-based, inclusive).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct MixArgs {
    /// Anomaly portion of the stream.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Stream length (defaults to the number of normal samples).
    #[arg(long)]
    total: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Digit 0 vs digit 1 streams over a grid of anomaly portions.
    MnistDemo {
        /// Directory with the MNIST training IDX files.
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        /// Comma-separated anomaly portions.
        #[arg(long, value_delimiter = ',')]
        s_grid: Option<Vec<f64>>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Skip the runs without the filter.
        #[arg(long)]
        filter_only: bool,
    },
    /// Plug-and-play training and scoring over mixed streams of a frame dataset.
    StreamRun {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mix: MixArgs,
        /// Admit every sample.
        #[arg(long)]
        no_filter: bool,
    },
    /// One training epoch on normal clips, then scoring of a labeled split.
    TrainEval {
        #[arg(long)]
        train_root: Option<PathBuf>,
        #[arg(long)]
        train_labels: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Synthetic sprite benchmark with a block-matching reference.
    SpriteBench {
        /// Skip the mixed-stream run.
        #[arg(long)]
        no_plug_and_play: bool,
    },
    /// Write stream manifests only.
    Mix {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mix: MixArgs,
    },
    /// Render ROC curves of labeled score CSVs into one SVG.
    PlotRoc {
        /// Score CSV files.
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        /// Output file (default: <out-dir>/roc.svg).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let profile = cli.profile.unwrap_or_default();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p, profile)?,
        None => ExperimentConfig::for_profile(profile),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut ExperimentConfig, d: &DataArgs) {
    if let Some(r) = &d.root {
        cfg.data.root = Some(r.clone());
    }
    if let Some(l) = &d.labels {
        cfg.data.labels = Some(l.clone());
    }
}

fn apply_mix(cfg: &mut ExperimentConfig, m: &MixArgs) {
    if let Some(s) = m.s {
        cfg.mix.s = s;
    }
    if let Some(r) = m.replicates {
        cfg.mix.replicates = r;
    }
    if m.total.is_some() {
        cfg.mix.total = m.total;
    }
}

fn summarize(report: &MetricReport) {
    println!("{}: auc {:.4}  eer {:.4}  samples {}", report.name, report.auc, report.eer, report.samples);
    if let Some(a) = &report.aggregate {
        println!("  replicates {}: mean auc {:.4} ± {:.4}", report.replicates.len(), a.mean, a.sd);
    }
    for (k, v) in &report.extra {
        println!("  {k} = {v:.4}");
    }
}

/// Number of samples that failed with a numeric error.
fn numeric_failures(report: &MetricReport) -> usize {
    let extra = ["train_errors", "score_errors"]
        .iter()
        .filter_map(|k| report.extra.get(*k))
        .map(|&v| v as usize)
        .sum::<usize>();
    extra + report.replicates.iter().map(|r| r.errors).sum::<usize>()
}

fn execute(cli: Cli) -> Result<usize> {
    let mut cfg = config(&cli)?;
    let report = match &cli.command {
        Command::MnistDemo {
            mnist_dir,
            s_grid,
            replicates,
            filter_only,
        } => {
            cfg.mode = Mode::Mnist;
            if let Some(d) = mnist_dir {
                cfg.mnist.dir = d.clone();
            }
            if let Some(g) = s_grid {
                cfg.mnist.s_grid = g.clone();
            }
            if let Some(r) = replicates {
                cfg.mnist.replicates = *r;
            }
            if *filter_only {
                cfg.mnist.compare_unfiltered = false;
            }
            cfg.validate()?;
            let out = runner::run_mnist_experiment(&cfg)?;
            println!("{:>6} {:>8} {:>10} {:>10}", "s", "filter", "auc", "flipped");
            for &s in &cfg.mnist.s_grid {
                for f in [true, false] {
                    let cell: Vec<_> = out.cell(s, f).collect();
                    if cell.is_empty() {
                        continue;
                    }
                    let n = cell.len() as f64;
                    let flipped = cell.iter().map(|r| r.auc_flipped).sum::<f64>() / n;
                    println!("{s:>6} {f:>8} {:>10.4} {flipped:>10.4}", out.mean_auc(s, f).unwrap_or(f64::NAN));
                }
            }
            return Ok(numeric_failures(&out.report));
        }
        Command::StreamRun { data, mix, no_filter } => {
            cfg.mode = Mode::PlugAndPlay;
            apply_data(&mut cfg, data);
            apply_mix(&mut cfg, mix);
            if *no_filter {
                cfg.filter.enabled = false;
            }
            cfg.validate()?;
            runner::run(&cfg)?
        }
        Command::TrainEval {
            train_root,
            train_labels,
            data,
        } => {
            cfg.mode = Mode::Conventional;
            apply_data(&mut cfg, data);
            if let Some(r) = train_root {
                cfg.data.train_root = Some(r.clone());
            }
            if let Some(l) = train_labels {
                cfg.data.train_labels = Some(l.clone());
            }
            cfg.validate()?;
            runner::run(&cfg)?
        }
        Command::SpriteBench { no_plug_and_play } => {
            cfg.mode = Mode::Sprites;
            if *no_plug_and_play {
                cfg.sprites.plug_and_play = false;
            }
            cfg.validate()?;
            runner::run(&cfg)?
        }
        Command::Mix { data, mix } => {
            apply_data(&mut cfg, data);
            apply_mix(&mut cfg, mix);
            cfg.validate()?;
            for (r, stream) in runner::run_mix(&cfg)?.iter().enumerate() {
                println!(
                    "replicate {r}: {} samples, anomalous fraction {:.4}",
                    stream.samples.len(),
                    stream.anomalous_fraction()
                );
            }
            return Ok(0);
        }
        Command::PlotRoc { scores, output } => {
            let mut series = Vec::new();
            for path in scores {
                let records = io::read_scores(path)?;
                let ls = labeled_scores(&records)?;
                let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scores");
                series.push(RocSeries::from_curve(label, &roc_curve(&ls)?));
            }
            let out = output.clone().unwrap_or_else(|| cfg.out_dir.join("roc.svg"));
            io::render_roc_svg(&series, &out)?;
            println!("wrote {}", out.display());
            return Ok(0);
        }
    };
    summarize(&report);
    Ok(numeric_failures(&report))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("error: {}", Error::Numeric(format!("{n} samples hit non-finite losses")));
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
