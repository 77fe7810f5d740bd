//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fusion::{fuse_dataset, read_records, write_records, FusedPrediction, FusionMode, Modality};
use crate::ingest::{
    build_bags, generate_modality_pair, generate_synthetic, parse_ais_csv, write_bags, write_features,
    BuildOptions, Dataset, ModalityPairConfig, Split, SyntheticConfig, TaskSpec,
};
use crate::metrics::{f_score, recall, ScoredSet, DEFAULT_THRESHOLD};
use crate::pipeline::{evaluate, predict, train, Checkpoint, Report, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "uamil", version, about = "Uncertainty-aware multiple-instance learning for long time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the planted-shapelet benchmark and its paired feature modality.
    Synth {
        /// JSON file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bag file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write second-modality feature records here.
        #[arg(long)]
        features_out: Option<PathBuf>,
        /// JSON file with second-modality settings.
        #[arg(long)]
        features_config: Option<PathBuf>,
    },
    /// Turn an AIS CSV export into a bag file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "fishing", value_parser = parse_task)]
        task: TaskSpec,
        #[arg(long, default_value_t = 100)]
        min_len: usize,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 0.1)]
        max_reject_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Which entities of the data file to train on.
        #[arg(long, default_value = "all", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Disable the confidence attention (every instance weighted 1).
        #[arg(long)]
        no_attention: bool,
    },
    /// Evaluate a checkpoint and write a JSON report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_split)]
        split: Split,
    },
    /// Write per-entity predictions and confidences as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_split)]
        split: Split,
    },
    /// Fuse two prediction files.
    Fuse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// `adaptive` or `fixed:<lambda>` with lambda in [0, 1].
        #[arg(long, default_value = "adaptive", value_parser = parse_mode)]
        mode: FusionMode,
        #[arg(long)]
        out: PathBuf,
        /// Print a table over fixed lambda 0, 0.1, ..., 1 and adaptive.
        #[arg(long)]
        sweep: bool,
        /// Data file with ground-truth labels, used for recall in the sweep table.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Print the confidence/accuracy table of a report.
    Calib {
        #[arg(long)]
        report: PathBuf,
    },
}

fn parse_task(s: &str) -> std::result::Result<TaskSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<FusionMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn load_split(path: &Path, split: Split) -> Result<Dataset> {
    Ok(Dataset::load(path)?.filter_split(split))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            config,
            out,
            seed,
            features_out,
            features_config,
        } => {
            let mut cfg: SyntheticConfig = match config {
                Some(p) => read_json(&p)?,
                None => SyntheticConfig::default(),
            };
            let mut pair: ModalityPairConfig = match features_config {
                Some(p) => read_json(&p)?,
                None => ModalityPairConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
                pair.seed = s;
            }
            let bags = generate_synthetic(&cfg)?;
            write_bags(&out, &bags)?;
            if let Some(path) = features_out {
                write_features(&path, &generate_modality_pair(&bags, &pair)?)?;
            }
            eprintln!("wrote {} bags to {}", bags.len(), out.display());
        }
        Command::Ingest {
            input,
            task,
            min_len,
            window,
            max_reject_fraction,
            out,
        } => {
            let (records, rejects) = parse_ais_csv(&input)?;
            let opts = BuildOptions {
                min_len,
                window_len: window,
                max_reject_fraction,
            };
            let bags = build_bags(&records, &rejects, &task, &opts)?;
            write_bags(&out, &bags)?;
            eprintln!(
                "read {} rows, rejected {}, wrote {} bags",
                rejects.rows_read,
                rejects.rejected(),
                bags.len()
            );
            for (reason, n) in &rejects.by_reason {
                eprintln!("  {reason}: {n}");
            }
        }
        Command::Train {
            data,
            config,
            out,
            split,
            seed,
            epochs,
            learning_rate,
            no_attention,
        } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_json_file(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            if no_attention {
                cfg.attention = false;
            }
            let dataset = load_split(&data, split)?;
            let checkpoint = train(&cfg, &dataset)?;
            checkpoint.save(&out)?;
            if let Some(last) = checkpoint.loss_history.last() {
                eprintln!("trained {} epochs, final loss {last:.6}", checkpoint.epoch);
            }
        }
        Command::Eval {
            model,
            data,
            report,
            split,
        } => {
            let checkpoint = Checkpoint::load(&model)?;
            let r = evaluate(&checkpoint, &load_split(&data, split)?)?;
            r.save(&report)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            eprintln!(
                "bags {} f_score {:.4} auc {} ap {}",
                r.n_bags,
                r.f_score,
                fmt(r.auc_roc),
                fmt(r.average_precision)
            );
        }
        Command::Predict {
            model,
            data,
            out,
            split,
        } => {
            let checkpoint = Checkpoint::load(&model)?;
            let records = predict(&checkpoint, &load_split(&data, split)?, Modality::A)?;
            write_records(&out, &records)?;
        }
        Command::Fuse {
            a,
            b,
            mode,
            out,
            sweep,
            labels,
        } => {
            let ra = read_records(&a, Modality::A)?;
            let rb = read_records(&b, Modality::B)?;
            write_fused(&out, &fuse_dataset(&ra, &rb, mode)?)?;
            if sweep {
                let truth = labels.map(|p| label_map(&p)).transpose()?;
                let mut modes: Vec<FusionMode> =
                    (0..=10).map(|i| FusionMode::Fixed(f64::from(i) / 10.0)).collect();
                modes.push(FusionMode::Adaptive);
                let mut table = String::from("mode,predicted_positive,recall,f_score\n");
                for m in modes {
                    let fused = fuse_dataset(&ra, &rb, m)?;
                    let positive = fused.iter().filter(|f| f.prediction >= DEFAULT_THRESHOLD).count();
                    let (rec, f1) = match &truth {
                        Some(t) => {
                            let set = scored(&fused, t)?;
                            (format!("{:.4}", recall(&set, DEFAULT_THRESHOLD)?), format!("{:.4}", f_score(&set, DEFAULT_THRESHOLD)?))
                        }
                        None => (String::new(), String::new()),
                    };
                    let _ = writeln!(table, "{m},{positive},{rec},{f1}");
                }
                print!("{table}");
            }
        }
        Command::Calib { report } => {
            let r = Report::load(&report)?;
            println!("percentile,threshold,accuracy,coverage");
            for row in &r.calibration {
                let acc = row.accuracy.map_or(String::new(), |a| format!("{a:.4}"));
                println!("{},{:.6},{acc},{:.4}", row.percentile, row.threshold, row.coverage);
            }
        }
    }
    Ok(())
}

fn write_fused(path: &Path, fused: &[FusedPrediction]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    for f in fused {
        writer.serialize(f).map_err(|e| Error::parse(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn label_map(path: &Path) -> Result<std::collections::BTreeMap<String, u8>> {
    Ok(match Dataset::load(path)? {
        Dataset::Bags(b) => b.into_iter().map(|x| (x.entity_id, x.label)).collect(),
        Dataset::Features(f) => f.into_iter().map(|x| (x.entity_id, x.label)).collect(),
    })
}

fn scored(fused: &[FusedPrediction], truth: &std::collections::BTreeMap<String, u8>) -> Result<ScoredSet> {
    let mut scores = Vec::with_capacity(fused.len());
    let mut labels = Vec::with_capacity(fused.len());
    for f in fused {
        let l = truth
            .get(&f.entity_id)
            .ok_or_else(|| Error::Value(format!("no label for entity `{}`", f.entity_id)))?;
        scores.push(f.prediction);
        labels.push(*l);
    }
    ScoredSet::new(scores, labels)
}
