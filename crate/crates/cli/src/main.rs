//! `epift`: meta-train, evaluate and inspect few-shot audio classifiers
//! with episode-specific fine-tuning.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epift_core::audio::{load_wav, write_wav, WavFormat};
use epift_core::augment::{self, AugmentKind};
use epift_core::experiment::{self, parse_pairs, Preset, RunConfig, CONFIG_FILE, KEYS};
use epift_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable naming the default output directory.
const OUTPUT_ENV: &str = "EPIFT_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "epift", version, about = "Episode-specific fine-tuning for few-shot audio classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a model and write a checkpoint, run manifest and loss log.
    Train(ConfigArgs),
    /// Evaluate a checkpoint before and after episode-specific fine-tuning.
    Evaluate {
        /// Checkpoint to evaluate. Without --config, the `config.txt` next
        /// to it is used.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write a `w/o FT | w/ FT | Gain` text table.
        #[arg(long)]
        table: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Augmentation utilities.
    #[command(subcommand)]
    Augment(AugmentCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Featurize a manifest into a feature cache and report class splits.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        preset: String,
        /// Cache directory (default: `<output>/cache`).
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum AugmentCommand {
    /// Apply one augmentation to a WAV file.
    Preview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// noise, equalizer, pitch or random.
        #[arg(long, default_value = "random")]
        kind: String,
        /// Fixed pitch shift in semitones (pitch only).
        #[arg(long, allow_hyphen_values = true)]
        semitones: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set scheme=rdft`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// Built-in defaults < environment < config file < flags.
    fn resolve(&self, fallback_file: Option<&Path>, extra: &[(String, String)]) -> Result<RunConfig> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            pairs.push(("output".into(), dir));
        }
        if let Some(path) = self.config.as_deref().or(fallback_file) {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            for (line, k, v) in parse_pairs(&text)? {
                if !KEYS.contains(&k.as_str()) {
                    return Err(Error::Config(format!("{}:{line}: unknown key {k:?}", path.display())));
                }
                pairs.push((k, v));
            }
        }
        pairs.extend(extra.iter().cloned());
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("--set: unknown key {k:?}")));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        if let Some(o) = &self.output {
            pairs.push(("output".into(), o.display().to_string()));
        }
        if let Some(s) = self.seed {
            pairs.push(("seed".into(), s.to_string()));
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve(None, &[])?;
    let out = experiment::train(&cfg)?;
    let n = out.reports.len();
    let tail = &out.reports[n.saturating_sub(20)..];
    if !tail.is_empty() {
        let loss = tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64;
        let acc = tail.iter().map(|r| r.accuracy).sum::<f64>() / tail.len() as f64;
        println!("trained {n} episodes; last-{} mean loss {loss:.4}, accuracy {acc:.4}", tail.len());
    } else {
        println!("no training episodes; wrote the initialized model");
    }
    if let Some(step) = out.selected_step {
        println!("kept parameters from step {step} (best moving-average training accuracy)");
    }
    println!("wrote {}", out.dir.join(experiment::CHECKPOINT_FILE).display());
    Ok(())
}

fn cmd_evaluate(checkpoint: &Path, table: bool, args: &ConfigArgs) -> Result<()> {
    let fallback = checkpoint.with_file_name(CONFIG_FILE);
    let fallback = (args.config.is_none() && fallback.exists()).then_some(fallback.as_path());
    let cfg = args.resolve(fallback, &[])?;
    let out = experiment::evaluate(&cfg, checkpoint, table)?;
    let s = &out.summary;
    println!(
        "{} episodes: before {:.4} ± {:.4}, after {:.4} ± {:.4}, paired gain {:+.4} ± {:.4}",
        s.episodes, s.before.mean, s.before.ci, s.after.mean, s.after.ci, s.diff.mean, s.diff.ci
    );
    if table {
        print!("{}", out.table);
    }
    println!("wrote {}", cfg.output.join(experiment::RECORDS_FILE).display());
    Ok(())
}

fn cmd_prepare(manifest: &Path, preset: &str, cache: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let extra = vec![
        ("preset".to_string(), Preset::parse(preset)?.name().to_string()),
        ("manifest".to_string(), manifest.display().to_string()),
    ];
    let cfg = args.resolve(None, &extra)?;
    let cache = cache.map_or_else(|| cfg.output.join("cache"), Path::to_path_buf);
    let report = experiment::prepare(manifest, &cfg, &cache)?;
    let [tr, va, te] = report.splits.counts();
    println!("classes: {tr} train / {va} val / {te} test");
    println!(
        "{} features written, {} reused, {} errors -> {}",
        report.written,
        report.reused,
        report.errors.len(),
        cache.display()
    );
    for (p, m) in &report.errors {
        eprintln!("  {}: {m}", p.display());
    }
    Ok(())
}

fn cmd_preview(input: &Path, output: &Path, kind: &str, semitones: Option<f64>, seed: u64) -> Result<()> {
    let kind = AugmentKind::parse(kind)?;
    let w = load_wav(input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (out, what) = match (kind, semitones) {
        (AugmentKind::Pitch, Some(st)) => (augment::pitch_shift_unchecked(&w, st)?, format!("pitch {st:+} st")),
        (_, Some(_)) => return Err(Error::Usage("--semitones applies to --kind pitch only".into())),
        (AugmentKind::Random, None) => {
            let (o, choice, _) = augment::random_augment(&w, &mut rng)?;
            (o, format!("random ({choice:?})"))
        }
        (k, None) => (augment::apply(k, &w, &mut rng)?.0, k.name().to_string()),
    };
    write_wav(output, &out, WavFormat::Pcm16)?;
    println!("{what}: {} -> {}", input.display(), output.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate {
            checkpoint,
            table,
            config,
        } => cmd_evaluate(&checkpoint, table, &config),
        Command::Dataset(DatasetCommand::Prepare {
            manifest,
            preset,
            cache,
            config,
        }) => cmd_prepare(&manifest, &preset, cache.as_deref(), &config),
        Command::Augment(AugmentCommand::Preview {
            input,
            output,
            kind,
            semitones,
            seed,
        }) => cmd_preview(&input, &output, &kind, semitones, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::NonFiniteLoss { .. } | Error::Numeric { .. }) {
                eprintln!("hint: try a smaller alpha or beta, or enable clipping");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
