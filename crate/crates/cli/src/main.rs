use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sedet_core::detector::{detect_stream, write_decisions, Decision};
use sedet_core::error::{Error, Result};
use sedet_core::eval::{confusion_csv, contrast_csv, roc_points, sweep_csv, sweep_table, SweepCell};
use sedet_core::io::{open_streams, Manifest};
use sedet_core::models::{ModelKind, TrainedModel};
use sedet_core::pipeline::{
    contrast, cross_validate_grid, derive_seed, fit_model, kappa_comparison, score_windows, stats, Corpus, ExperimentConfig,
    RunRecord,
};
use sedet_core::scalar::Real;
use sedet_core::synth::{generate_corpus, GeneratorConfig};
use sedet_core::windowing::WindowConfig;
use serde_json::json;

#[derive(Parser)]
#[command(name = "sedet", version, about = "Detect signs of engagement decrease in multimodal interaction recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration (generator settings for `synth`, experiment settings otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(short = 'n', long, default_value_t = 20)]
        count: usize,
    },
    /// Train a model on the whole corpus, optionally cross-validating first.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lstm")]
        model: ModelKind,
        /// Observation window in seconds.
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        /// Buffer in seconds.
        #[arg(long, default_value_t = 2.0)]
        eta: f64,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Evaluate a saved model on a corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Cross-validate models over observation windows and buffers.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Run the online detector over recorded streams.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// A single stream file instead of a corpus.
        #[arg(long)]
        streams: Option<PathBuf>,
    },
    /// Inter-annotator agreement, with and without the short-gap merge.
    Kappa {
        #[command(flatten)]
        common: Common,
        /// Merge engaged gaps shorter than this many seconds.
        #[arg(long, default_value_t = 1.0)]
        merge_gap: f64,
    },
    /// Engaged vs SED comparison of every pooled feature.
    Contrast {
        #[command(flatten)]
        common: Common,
    },
    /// Annotation statistics.
    Stats {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut detail = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let s_text = s.to_string();
                if !detail.contains(&s_text) {
                    detail = format!("{detail}: {s_text}");
                }
                src = s.source();
            }
            eprintln!("error: {}: {}", e.category(), detail.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{flag} is required")))
}

fn out_dir(c: &Common) -> Result<&Path> {
    let out = need(&c.out, "--out")?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn experiment(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.train.seed = c.seed;
    Ok(cfg)
}

fn load_corpus<T: Real>(c: &Common, cfg: &ExperimentConfig) -> Result<Corpus<T>> {
    Corpus::load(need(&c.data, "--data")?, &cfg.layout, cfg.frame_ms, cfg.merge_gap_ms)
}

fn finish(record: RunRecord, out: &Path, artifacts: &[&str]) -> Result<()> {
    let mut record = record;
    record.artifacts = artifacts.iter().map(|s| s.to_string()).collect();
    record.save(&out.join("run.json"))
}

fn run(cmd: Command) -> Result<()> {
    let precision = match &cmd {
        Command::Synth { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Sweep { common, .. }
        | Command::Detect { common, .. }
        | Command::Kappa { common, .. }
        | Command::Contrast { common }
        | Command::Stats { common } => common.precision,
    };
    match precision {
        Precision::F32 => dispatch::<f32>(cmd),
        Precision::F64 => dispatch::<f64>(cmd),
    }
}

fn dispatch<T: Real>(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { common, count } => run_synth(&common, count),
        Command::Train {
            common,
            model,
            tau,
            eta,
            folds,
        } => run_train::<T>(&common, model, tau, eta, folds),
        Command::Eval { common, model } => run_eval::<T>(&common, &model),
        Command::Sweep {
            common,
            models,
            taus,
            etas,
            folds,
        } => run_sweep::<T>(&common, models, taus, etas, folds),
        Command::Detect { common, model, streams } => run_detect::<T>(&common, &model, streams.as_deref()),
        Command::Kappa { common, merge_gap } => run_kappa::<T>(&common, merge_gap),
        Command::Contrast { common } => run_contrast::<T>(&common),
        Command::Stats { common } => run_stats::<T>(&common),
    }
}

fn run_synth(c: &Common, count: usize) -> Result<()> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GeneratorConfig>(&text).map_err(|e| Error::Format {
                location: p.display().to_string(),
                detail: e.to_string(),
            })?
        }
        None => GeneratorConfig::default(),
    };
    cfg.seed = c.seed;
    let out = out_dir(c)?;
    let manifest = generate_corpus(&cfg, count, out)?;
    let total_ms: u64 = manifest.interactions.iter().map(|e| e.duration_ms).sum();
    println!("wrote {} interactions ({:.1} min) to {}", count, total_ms as f64 / 60_000.0, out.display());
    let layout = sedet_core::layout::FeatureLayout::standard();
    let record = RunRecord::new("synth", c.seed, &layout, &cfg, json!({ "interactions": count, "total_ms": total_ms }))?;
    finish(record, out, &["manifest.json", "generator.json", "streams/", "annotations/"])
}

fn print_cell(cell: &SweepCell) {
    println!(
        "{} tau={}s eta={}s folds={}: accuracy {:.2}% (±{:.2}), F1 {:.3} (±{:.3}), AUC {:.3} (±{:.3})",
        cell.kind,
        cell.tau_ms as f64 / 1000.0,
        cell.eta_ms as f64 / 1000.0,
        cell.folds,
        100.0 * cell.accuracy.mean,
        100.0 * cell.accuracy.sd,
        cell.f1.mean,
        cell.f1.sd,
        cell.auc.mean,
        cell.auc.sd
    );
}

fn run_train<T: Real>(c: &Common, kind: ModelKind, tau: f64, eta: f64, folds: Option<usize>) -> Result<()> {
    let cfg = experiment(c)?;
    let wc = WindowConfig::from_secs(tau, eta, cfg.frame_ms)?;
    let corpus = load_corpus::<T>(c, &cfg)?;
    let out = out_dir(c)?;
    let mut artifacts = vec!["model.json".to_string()];
    let mut metrics = serde_json::Map::new();
    if let Some(k) = folds.filter(|&k| k > 1) {
        let mut cv = cross_validate_grid(&[kind], &corpus, &[wc], &cfg.train, k, c.seed)?;
        let cv = cv.remove(0);
        print_cell(&cv.summary);
        write(&out.join("cv.json"), &(serde_json::to_string_pretty(&cv)? + "\n"))?;
        artifacts.push("cv.json".into());
        metrics.insert("cv".into(), serde_json::to_value(&cv.summary)?);
    }
    let model = fit_model(kind, &corpus, &corpus.ids(), &wc, &cfg.train)?;
    model.save(&out.join("model.json"))?;
    metrics.insert("epochs_run".into(), json!(model.train_meta.epochs_run()));
    println!("saved {} model to {}", kind, out.join("model.json").display());
    let record = RunRecord::new(
        "train",
        c.seed,
        &corpus.layout,
        json!({ "model": kind, "window": wc, "folds": folds, "experiment": cfg }),
        metrics,
    )?;
    finish(record, out, &artifacts.iter().map(String::as_str).collect::<Vec<_>>())
}

fn model_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn run_eval<T: Real>(c: &Common, model_path: &Path) -> Result<()> {
    let cfg = experiment(c)?;
    let model = TrainedModel::<T>::load(model_path)?;
    if model.window_config.frame_ms != cfg.frame_ms {
        return Err(Error::Config(format!(
            "model uses {} ms frames, configuration {} ms",
            model.window_config.frame_ms, cfg.frame_ms
        )));
    }
    let corpus = load_corpus::<T>(c, &cfg)?;
    let (scores, labels) = score_windows(&model, &corpus, &corpus.ids())?;
    let report = sedet_core::eval::balanced_resample_eval(&scores, &labels, derive_seed(c.seed, &[0x6576_616c]))?;
    let out = out_dir(c)?;
    println!(
        "{}: accuracy {:.2}%, F1 {:.3}, AUC {:.3} over {} windows ({} SED)",
        model_id(model_path),
        100.0 * report.accuracy,
        report.f1,
        report.auc,
        report.n_windows,
        report.n_sed
    );
    write(&out.join("eval.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(&out.join("confusion.csv"), &confusion_csv(&[(model.kind.to_string(), report.confusion)]))?;
    let mut roc = String::from("fpr,tpr\n");
    for (f, t) in roc_points(&scores, &labels)? {
        roc.push_str(&format!("{f},{t}\n"));
    }
    write(&out.join("roc.csv"), &roc)?;
    let record = RunRecord::new(
        "eval",
        c.seed,
        &corpus.layout,
        json!({ "model": model_path, "window": model.window_config, "experiment": cfg }),
        &report,
    )?;
    finish(record, out, &["eval.json", "confusion.csv", "roc.csv"])
}

fn run_sweep<T: Real>(
    c: &Common,
    models: Option<Vec<ModelKind>>,
    taus: Option<Vec<f64>>,
    etas: Option<Vec<f64>>,
    folds: Option<usize>,
) -> Result<()> {
    let mut cfg = experiment(c)?;
    if let Some(m) = models {
        cfg.models = m;
    }
    if let Some(t) = taus {
        cfg.taus_s = t;
    }
    if let Some(e) = etas {
        cfg.etas_s = e;
    }
    if let Some(k) = folds {
        cfg.folds = k;
    }
    let grid = cfg.grid()?;
    if grid.is_empty() {
        return Err(Error::Config("no (tau, eta) pair with tau >= eta".into()));
    }
    let corpus = load_corpus::<T>(c, &cfg)?;
    let out = out_dir(c)?;
    let reports = cross_validate_grid(&cfg.models, &corpus, &grid, &cfg.train, cfg.folds, c.seed)?;
    let cells: Vec<SweepCell> = reports.iter().map(|r| r.summary.clone()).collect();
    write(&out.join("sweep.csv"), &sweep_csv(&cells))?;
    let mut artifacts = vec!["sweep.csv".to_string(), "confusion.csv".into(), "cv.json".into()];
    for &kind in &cfg.models {
        let table = sweep_table(&cells, kind);
        print!("{table}");
        let name = format!("table_{kind}.txt");
        write(&out.join(&name), &table)?;
        artifacts.push(name);
    }
    let rows: Vec<(String, _)> = cells
        .iter()
        .map(|c| (format!("{} tau={}s eta={}s", c.kind, c.tau_ms as f64 / 1000.0, c.eta_ms as f64 / 1000.0), c.confusion))
        .collect();
    write(&out.join("confusion.csv"), &confusion_csv(&rows))?;
    write(&out.join("cv.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    let record = RunRecord::new("sweep", c.seed, &corpus.layout, &cfg, &cells)?;
    finish(record, out, &artifacts.iter().map(String::as_str).collect::<Vec<_>>())
}

fn run_detect<T: Real>(c: &Common, model_path: &Path, streams: Option<&Path>) -> Result<()> {
    let cfg = experiment(c)?;
    let model = TrainedModel::<T>::load(model_path)?;
    let id = model_id(model_path);
    let files: Vec<PathBuf> = match streams {
        Some(p) => vec![p.to_path_buf()],
        None => {
            let mpath = sedet_core::io::manifest_path(need(&c.data, "--data or --streams")?);
            let base = mpath.parent().unwrap_or(Path::new(".")).to_path_buf();
            Manifest::load(&mpath)?.interactions.iter().map(|e| base.join(&e.streams)).collect()
        }
    };
    let out = out_dir(c)?;
    let mut all: Vec<Decision<T>> = Vec::new();
    let started = Instant::now();
    for f in &files {
        let reader = open_streams::<T>(f, &cfg.layout)?;
        let interaction = reader.header.interaction.clone();
        let duration = reader.header.duration_ms;
        all.extend(detect_stream(&model, &cfg.layout, &interaction, &id, Some(duration), reader)?);
    }
    let elapsed = started.elapsed();
    let path = out.join("decisions.jsonl");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write_decisions(&mut w, &model, &id, &all)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let sed = all.iter().filter(|d| d.label == 1).count();
    let per_decision_us = if all.is_empty() {
        0.0
    } else {
        elapsed.as_secs_f64() * 1e6 / all.len() as f64
    };
    println!(
        "{} decisions over {} interactions, {} SED, {:.1} us per decision",
        all.len(),
        files.len(),
        sed,
        per_decision_us
    );
    let record = RunRecord::new(
        "detect",
        c.seed,
        &cfg.layout,
        json!({ "model": model_path, "window": model.window_config, "inputs": files }),
        json!({ "decisions": all.len(), "sed_decisions": sed, "mean_us_per_decision": per_decision_us }),
    )?;
    finish(record, out, &["decisions.jsonl"])
}

fn run_kappa<T: Real>(c: &Common, merge_gap_s: f64) -> Result<()> {
    let cfg = experiment(c)?;
    if !(merge_gap_s >= 0.0) {
        return Err(Error::Config(format!("merge gap must be non-negative, got {merge_gap_s}")));
    }
    let gap_ms = (merge_gap_s * 1000.0).round() as u64;
    let corpus = Corpus::<T>::load(need(&c.data, "--data")?, &cfg.layout, cfg.frame_ms, None)?;
    let k = kappa_comparison(&corpus, Some(gap_ms))?;
    let merged = k.merged.as_ref().map_or(f64::NAN, |m| m.overall);
    println!("kappa {:.4} as annotated, {:.4} after merging gaps < {merge_gap_s} s ({} frames)", k.raw.overall, merged, k.raw.frames);
    if let Some(out) = &c.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write(&out.join("kappa.json"), &(serde_json::to_string_pretty(&k)? + "\n"))?;
        let record = RunRecord::new("kappa", c.seed, &corpus.layout, json!({ "merge_gap_ms": gap_ms, "frame_ms": cfg.frame_ms }), json!({ "raw": k.raw.overall, "merged": merged }))?;
        finish(record, out, &["kappa.json"])?;
    }
    Ok(())
}

fn run_contrast<T: Real>(c: &Common) -> Result<()> {
    let cfg = experiment(c)?;
    let corpus = load_corpus::<T>(c, &cfg)?;
    let rows = contrast(&corpus)?;
    let csv = contrast_csv(&rows);
    match &c.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write(&out.join("contrast.csv"), &csv)?;
            let significant = rows.iter().filter(|r| r.stars != "-").count();
            println!("{significant} of {} features differ at p < 0.05", rows.len());
            let record = RunRecord::new("contrast", c.seed, &corpus.layout, &cfg, json!({ "features": rows.len(), "significant": significant }))?;
            finish(record, out, &["contrast.csv"])
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_stats<T: Real>(c: &Common) -> Result<()> {
    let cfg = experiment(c)?;
    let corpus = Corpus::<T>::load(need(&c.data, "--data")?, &cfg.layout, cfg.frame_ms, None)?;
    let st = stats(&corpus)?;
    let text = serde_json::to_string_pretty(&st)? + "\n";
    match &c.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write(&out.join("stats.json"), &text)?;
            for (annotator, s) in &st {
                println!(
                    "{annotator}: {} tracks, {:.1} segments per track, {:.1} s (±{:.1}) per segment, SED {:.1}% of time",
                    s.tracks,
                    s.segments_per_track.mean,
                    s.segment_duration_s.mean,
                    s.segment_duration_s.sd,
                    100.0 * s.sed_fraction
                );
            }
            let record = RunRecord::new("stats", c.seed, &corpus.layout, &cfg, &st)?;
            finish(record, out, &["stats.json"])
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
