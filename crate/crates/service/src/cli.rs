//! The `gaitlens` command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gaitlens_core::model::{load_checkpoint, save_checkpoint, train_with_progress, Checkpoint};
use gaitlens_core::{overview_relevance, GaitClass, RelevanceMap, Side};
use serde_json::json;

use crate::api::{serve, ApiState};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::evaluate::{evaluate_split, shuffle_labels, split_dataset};
use crate::pipeline::{explain_leg, feature_vectors, labelled_pairs, run_pipeline, ModelSource};
use crate::plot::{render_overview, save_png};
use crate::synth::generate_synthetic_dataset;

#[derive(Parser, Debug)]
#[command(name = "gaitlens", version, about = "Gait classification with relevance maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed overriding the one in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run configuration (sections: synthetic, model, train, holdoutFraction).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        legs_per_class: Option<usize>,
        #[arg(long)]
        trials_per_leg: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        motif_strength: Option<f64>,
    },
    /// Train on the training patients of a dataset and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Permute the ground-truth labels before splitting (null control).
        #[arg(long)]
        shuffle_labels: bool,
        /// Also write the metrics report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out patients.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        shuffle_labels: bool,
    },
    /// Export one leg's relevance map and an overview heatmap image.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        side: Side,
    },
    /// Serve the HTTP API for a dataset and checkpoint.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synthetic.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn require_out(common: &Common) -> anyhow::Result<&Path> {
    common.out.as_deref().context("--out is required for this command")
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn labelled_dataset(path: &Path, shuffle: bool, seed: u64) -> anyhow::Result<Dataset> {
    let ds = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    Ok(if shuffle { shuffle_labels(&ds, seed ^ 0x5eed) } else { ds })
}

fn cmd_synth(common: Common, legs: Option<usize>, trials: Option<usize>, noise: Option<f64>, motif: Option<f64>) -> anyhow::Result<()> {
    let mut cfg = load_config(&common)?.synthetic;
    if let Some(v) = legs {
        cfg.legs_per_class = v;
    }
    if let Some(v) = trials {
        cfg.trials_per_leg = v;
    }
    if let Some(v) = noise {
        cfg.noise_std = v;
    }
    if let Some(v) = motif {
        cfg.motif_strength = v;
    }
    let out = require_out(&common)?;
    let ds = generate_synthetic_dataset(&cfg)?;
    save_dataset(&ds, out)?;
    println!("wrote {} patients ({} labelled legs) to {}", ds.patients.len(), ds.ground_truth.len(), out.display());
    Ok(())
}

fn cmd_train(common: Common, dataset: PathBuf, epochs: Option<usize>, shuffle: bool, report: Option<PathBuf>) -> anyhow::Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let out = require_out(&common)?;
    let ds = labelled_dataset(&dataset, shuffle, cfg.train.seed)?;
    let split = split_dataset(&ds, cfg.holdout_fraction, cfg.train.seed)?;
    let pairs = labelled_pairs(&split.train, &feature_vectors(&split.train)?);
    let outcome = train_with_progress(&pairs, &cfg.model, &cfg.train, |m| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train acc {:.3}  val loss {:.4}  val acc {:.3}",
            m.epoch, m.train_loss, m.train_accuracy, m.validation_loss, m.validation_accuracy
        );
    })?;
    let ckpt = Checkpoint {
        params: outcome.params,
        seed: cfg.train.seed,
        train_config: Some(cfg.train.clone()),
        history: outcome.history,
    };
    save_checkpoint(&ckpt, out)?;
    let summary = json!({
        "checkpoint": out,
        "trainPatients": split.train.patients.len(),
        "heldOutPatients": split.test.patients.len(),
        "trainLegs": pairs.len(),
        "history": ckpt.history,
    });
    if let Some(r) = report {
        write_json(&r, &summary)?;
    }
    let last = ckpt.history.last();
    println!(
        "trained {} epochs on {} legs; final validation accuracy {:.3}; checkpoint {}",
        ckpt.history.len(),
        pairs.len(),
        last.map_or(0.0, |m| m.validation_accuracy),
        out.display()
    );
    Ok(())
}

fn cmd_eval(common: Common, dataset: PathBuf, checkpoint: PathBuf, shuffle: bool) -> anyhow::Result<()> {
    let cfg = load_config(&common)?;
    let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let seed = common.seed.unwrap_or(ckpt.seed);
    let ds = labelled_dataset(&dataset, shuffle, seed)?;
    let split = split_dataset(&ds, cfg.holdout_fraction, seed)?;
    let report = evaluate_split(&ckpt.params, &split)?;

    println!("held-out legs: {}", report.legs);
    println!("accuracy: {:.4}", report.accuracy);
    println!("confusion (rows = true, columns = predicted):");
    for class in GaitClass::ALL {
        let row = report.confusion[class.index()];
        println!("  {:<16} {:>4} {:>4} {:>4} {:>4}", class.name(), row[0], row[1], row[2], row[3]);
    }
    for (class, r) in &report.localization {
        println!("localization {:<16} {}/{} ({:.3})", class.name(), r.hits, r.eligible, r.rate());
    }
    println!(
        "perturbation fidelity: {}/{} ({:.3})",
        report.perturbation.hits,
        report.perturbation.eligible,
        report.perturbation.rate()
    );
    if let Some(out) = &common.out {
        write_json(out, &serde_json::to_value(&report)?)?;
    }
    Ok(())
}

fn cmd_explain(common: Common, dataset: PathBuf, checkpoint: PathBuf, patient: String, side: Side) -> anyhow::Result<()> {
    let out = require_out(&common)?;
    let ds = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let record = ds.patient(&patient).with_context(|| format!("patient {patient} not found"))?;
    if !record.sides.contains_key(&side) {
        bail!("patient {patient} has no {side} side");
    }
    let one = Dataset::new(vec![record.clone()], Default::default(), Vec::new())?;
    let features = feature_vectors(&one)?;
    let mut maps = Vec::new();
    for s in Side::BOTH {
        maps.push(match features.get(&(patient.clone(), s)) {
            Some(fv) => explain_leg(&ckpt.params, fv)?,
            None => crate::pipeline::LegResult {
                prediction: gaitlens_core::model::Prediction {
                    class: GaitClass::TrueEquinus,
                    probabilities: vec![0.25; 4],
                },
                relevance: RelevanceMap::zeros(GaitClass::TrueEquinus, s),
            },
        });
    }
    let leg = &maps[if side == Side::Left { 0 } else { 1 }];
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let export = json!({
        "patientId": patient,
        "predictedClass": leg.prediction.class,
        "probabilities": leg.prediction.probabilities,
        "relevance": leg.relevance.export(),
    });
    let json_path = out.join(format!("{patient}-{side}-relevance.json"));
    write_json(&json_path, &export)?;
    let rows = overview_relevance(&maps[0].relevance, &maps[1].relevance);
    let png_path = out.join(format!("{patient}-overview.png"));
    save_png(&render_overview(&rows, 1.0)?, &png_path)?;
    println!(
        "{patient} {side}: predicted {} ({:.3}); wrote {} and {}",
        leg.prediction.class,
        leg.prediction.probabilities[leg.prediction.class.index()],
        json_path.display(),
        png_path.display()
    );
    Ok(())
}

fn cmd_serve(common: Common, dataset: PathBuf, checkpoint: PathBuf, addr: SocketAddr) -> anyhow::Result<()> {
    let ds = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let state = run_pipeline(ds, ModelSource::Pretrained(ckpt))?;
    eprintln!("snapshot {}", state.snapshot_hash);
    let api = match common.out {
        Some(path) => ApiState::with_persistence(state, path),
        None => ApiState::new(state),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let handle = serve(api, addr).await?;
        println!("listening on http://{}", handle.addr());
        tokio::select! {
            r = handle.wait() => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { common, legs_per_class, trials_per_leg, noise_std, motif_strength } => {
            cmd_synth(common, legs_per_class, trials_per_leg, noise_std, motif_strength)
        }
        Command::Train { common, dataset, epochs, shuffle_labels, report } => {
            cmd_train(common, dataset, epochs, shuffle_labels, report)
        }
        Command::Eval { common, dataset, checkpoint, shuffle_labels } => cmd_eval(common, dataset, checkpoint, shuffle_labels),
        Command::Explain { common, dataset, checkpoint, patient, side } => {
            cmd_explain(common, dataset, checkpoint, patient, side)
        }
        Command::Serve { common, dataset, checkpoint, addr } => cmd_serve(common, dataset, checkpoint, addr),
    }
}
