use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voicegraph::learn::{FusionStrategy, Split};
use voicegraph::pipeline::{
    cmd_extract, cmd_graph_export, cmd_predict, cmd_report, cmd_synth, cmd_train, Manifest,
    PipelineError, RunConfig, SynthConfig,
};
use voicegraph::visibility::{VgBuilder, VgInput};

#[derive(Parser)]
#[command(
    name = "voicegraph",
    version,
    about = "Visibility-graph voice features and fused screening scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract vg, mfcc and eGeMAPS feature tables for every clip.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the feature CSVs.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train one forest per feature family on the training split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Output directory for the model files.
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score subjects, aggregate per subject and fuse with text scores.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Output directory for the report files.
        #[arg(long)]
        out: PathBuf,
        /// Subjects to score.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the visibility graph of one WAV file as JSON.
    GraphExport {
        #[arg(long)]
        wav: PathBuf,
        /// Graph JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV path for the graph's feature row.
        #[arg(long)]
        features_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a labelled synthetic corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        per_class: usize,
        /// Train/val/test subjects per class, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [40, 10, 10])]
        split: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        clips_per_subject: usize,
        #[arg(long, default_value_t = 2.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print a metrics.json file as a table.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum VgInputArg {
    Peaks,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuilderArg {
    Fast,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    #[value(name = "average_merge")]
    AverageMerge,
    Forest,
}

#[derive(Args)]
struct ConfigArgs {
    /// Moving-RMS envelope window.
    #[arg(long, default_value_t = 20.0)]
    window_ms: f64,
    /// Minimum spacing between envelope peaks.
    #[arg(long, default_value_t = 10.0)]
    min_distance_ms: f64,
    /// Minimum topographic prominence of envelope peaks.
    #[arg(long, default_value_t = 0.01)]
    min_prominence: f64,
    #[arg(long, value_enum, default_value_t = VgInputArg::Peaks)]
    vg_input: VgInputArg,
    #[arg(long, value_enum, default_value_t = BuilderArg::Fast)]
    builder: BuilderArg,
    #[arg(long, default_value_t = 25.0)]
    frame_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    hop_ms: f64,
    /// FFT size; defaults to the next power of two of the frame length.
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long, default_value_t = 26)]
    n_mels: usize,
    #[arg(long, default_value_t = 13)]
    n_mfcc: usize,
    #[arg(long, default_value_t = 200)]
    n_trees: usize,
    #[arg(long, default_value_t = 8)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    /// Features tried per split; defaults to the square root of the dimension.
    #[arg(long)]
    features_per_split: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Scaling factor of the per-subject aggregation.
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = FusionArg::AverageMerge)]
    fusion: FusionArg,
    /// Z-score features with training-split statistics.
    #[arg(long)]
    normalize: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn into_config(self) -> RunConfig {
        let mut c = RunConfig::default();
        c.peaks.window_ms = self.window_ms;
        c.peaks.min_distance_ms = self.min_distance_ms;
        c.peaks.min_prominence = self.min_prominence;
        c.vg_input = match self.vg_input {
            VgInputArg::Peaks => VgInput::Peaks,
            VgInputArg::Raw => VgInput::Raw,
        };
        c.vg_builder = match self.builder {
            BuilderArg::Fast => VgBuilder::Fast,
            BuilderArg::Naive => VgBuilder::Naive,
        };
        c.spectral.frame_ms = self.frame_ms;
        c.spectral.hop_ms = self.hop_ms;
        c.spectral.fft_size = self.fft_size;
        c.spectral.n_mels = self.n_mels;
        c.spectral.n_mfcc = self.n_mfcc;
        c.forest.n_trees = self.n_trees;
        c.forest.max_depth = self.max_depth;
        c.forest.min_leaf = self.min_leaf;
        c.forest.features_per_split = self.features_per_split;
        c.forest.seed = self.seed;
        c.c = self.c;
        c.fusion = match self.fusion {
            FusionArg::AverageMerge => FusionStrategy::AverageMerge,
            FusionArg::Forest => FusionStrategy::Forest,
        };
        c.normalize = self.normalize;
        c.threads = self.threads;
        c
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Extract {
            manifest,
            out,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let summary = cmd_extract(&manifest, &config.into_config(), &out)?;
            for (family, n) in &summary.rows {
                println!("{family}: {n}/{} clips", summary.n_clips);
            }
            if !summary.errors.is_empty() {
                eprintln!(
                    "warning: {} clip error(s), see {}",
                    summary.errors.len(),
                    out.join(voicegraph::pipeline::ERRORS_FILE).display()
                );
            }
        }
        Command::Train {
            manifest,
            features,
            models,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let report = cmd_train(&manifest, &features, &config.into_config(), &models)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for (family, r) in &report.families {
                match (&r.val_metrics, r.trained) {
                    (Some(m), true) => println!("{family}: validation f1 {:.4}", m.f1),
                    (None, true) => println!("{family}: trained"),
                    _ => println!("{family}: skipped"),
                }
            }
        }
        Command::Predict {
            manifest,
            features,
            models,
            out,
            split,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Val => Some(Split::Val),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let summary = cmd_predict(
                &manifest,
                &features,
                &models,
                &config.into_config(),
                split,
                &out,
            )?;
            print!("{}", summary.metrics.to_table());
            if !summary.errors.is_empty() {
                eprintln!(
                    "warning: {} subject(s) could not be fused, see {}",
                    summary.errors.len(),
                    out.join(voicegraph::pipeline::PREDICT_ERRORS_FILE)
                        .display()
                );
            }
        }
        Command::GraphExport {
            wav,
            out,
            features_out,
            config,
        } => {
            let o = cmd_graph_export(&wav, &config.into_config(), &out, features_out.as_deref())?;
            println!("{} nodes, {} edges", o.graph.n_nodes(), o.graph.n_edges());
        }
        Command::Synth {
            out,
            per_class,
            split,
            clips_per_subject,
            duration_s,
            sample_rate,
            seed,
        } => {
            let split: [usize; 3] = split.try_into().map_err(|_| {
                PipelineError::Config("--split takes three comma-separated counts".into())
            })?;
            let config = SynthConfig {
                per_class,
                split,
                clips_per_subject,
                duration_s,
                sample_rate,
                seed,
            };
            let path = cmd_synth(&config, &out)?;
            println!("{}", path.display());
        }
        Command::Report { metrics } => print!("{}", cmd_report(&metrics)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
