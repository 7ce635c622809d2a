//! End-to-end experiment steps: corpus loading, per-fold preprocessing,
//! training, cross-validation, the observation-window sweep, annotation
//! analyses and run records.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{annotation_stats, corpus_kappa, frame_labels, merge_short_gaps, AnnotationStats, AnnotationTrack, FrameLabels, KappaReport};
use crate::error::{Error, Result};
use crate::eval::{balanced_resample_eval, behavior_contrast, EvalReport, FeatureContrast, SweepCell};
use crate::io::{load_annotations, load_streams, manifest_path, Manifest};
use crate::layout::FeatureLayout;
use crate::models::logreg::{self, SolverOptions};
use crate::models::{train_network, ModelKind, ModelParams, TrainConfig, TrainRecord, TrainedModel};
use crate::preprocess::{ImputationModel, NormalizationModel};
use crate::scalar::Real;
use crate::stream::{build_frames, FrameSequence, StreamSample, DEFAULT_FRAME_MS};
use crate::synth::SyntheticInteraction;
use crate::windowing::{class_weights, make_folds, FoldPlan, WindowConfig, WindowSet};

pub const RUN_SCHEMA: &str = "sedet.run/1";

/// Settings shared by the experiment commands; loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub layout: FeatureLayout,
    pub frame_ms: u64,
    /// Engaged gaps shorter than this are absorbed before deriving frame
    /// labels; `None` uses the tracks as annotated.
    pub merge_gap_ms: Option<u64>,
    pub folds: usize,
    pub models: Vec<ModelKind>,
    pub taus_s: Vec<f64>,
    pub etas_s: Vec<f64>,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            layout: FeatureLayout::standard(),
            frame_ms: DEFAULT_FRAME_MS,
            merge_gap_ms: Some(1000),
            folds: 3,
            models: ModelKind::ALL.to_vec(),
            taus_s: (0..=6).map(f64::from).collect(),
            etas_s: (0..=5).map(f64::from).collect(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            location: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// All `(tau, eta)` window configurations with `tau >= eta`.
    pub fn grid(&self) -> Result<Vec<WindowConfig>> {
        let mut out = Vec::new();
        for &tau in &self.taus_s {
            for &eta in &self.etas_s {
                if tau >= eta {
                    out.push(WindowConfig::from_secs(tau, eta, self.frame_ms)?);
                }
            }
        }
        Ok(out)
    }
}

/// Mixes `parts` into a seed; used for per-fold and per-purpose streams.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction<T> {
    pub id: String,
    pub duration_ms: u64,
    pub multiparty: bool,
    /// Pooled frames before imputation.
    pub frames: FrameSequence<T>,
    /// As annotated, without merging.
    pub tracks: Vec<AnnotationTrack>,
    pub labels: FrameLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T> {
    pub layout: FeatureLayout,
    pub frame_ms: u64,
    pub merge_gap_ms: Option<u64>,
    pub interactions: Vec<Interaction<T>>,
}

fn labels_for(id: &str, tracks: &[AnnotationTrack], frame_ms: u64, merge_gap_ms: Option<u64>) -> Result<FrameLabels> {
    if tracks.len() != 2 {
        return Err(Error::Invalid(format!("{id}: expected 2 annotator tracks, found {}", tracks.len())));
    }
    match merge_gap_ms {
        Some(g) => frame_labels(&merge_short_gaps(&tracks[0], g), &merge_short_gaps(&tracks[1], g), frame_ms),
        None => frame_labels(&tracks[0], &tracks[1], frame_ms),
    }
}

fn interaction<T: Real>(
    id: &str,
    duration_ms: u64,
    multiparty: bool,
    samples: &[StreamSample<T>],
    tracks: Vec<AnnotationTrack>,
    layout: &FeatureLayout,
    frame_ms: u64,
    merge_gap_ms: Option<u64>,
) -> Result<Interaction<T>> {
    if let Some(t) = tracks.iter().find(|t| t.start_ms != 0 || t.end_ms != duration_ms) {
        return Err(Error::Invalid(format!(
            "{id}: annotator {} covers [{}, {}) ms, streams cover [0, {duration_ms}) ms",
            t.annotator, t.start_ms, t.end_ms
        )));
    }
    let frames = build_frames(id, samples, layout, duration_ms, frame_ms)?;
    let labels = labels_for(id, &tracks, frame_ms, merge_gap_ms)?;
    Ok(Interaction {
        id: id.into(),
        duration_ms,
        multiparty,
        frames,
        tracks,
        labels,
    })
}

impl<T: Real> Corpus<T> {
    /// Reads a manifest (or the directory holding `manifest.json`) and every
    /// file it lists.
    pub fn load(data: &Path, layout: &FeatureLayout, frame_ms: u64, merge_gap_ms: Option<u64>) -> Result<Self> {
        let mpath = manifest_path(data);
        let manifest = Manifest::load(&mpath)?;
        let base = mpath.parent().unwrap_or(Path::new("."));
        let mut interactions = Vec::with_capacity(manifest.interactions.len());
        for e in &manifest.interactions {
            let s = load_streams::<T>(&base.join(&e.streams), layout)?;
            if s.interaction != e.id {
                return Err(Error::Invalid(format!("manifest entry {} points at streams of {}", e.id, s.interaction)));
            }
            let tracks = load_annotations(&base.join(&e.annotations))?;
            if let Some(t) = tracks.iter().find(|t| t.interaction != e.id) {
                return Err(Error::Invalid(format!("manifest entry {} points at annotations of {}", e.id, t.interaction)));
            }
            interactions.push(interaction(&e.id, s.duration_ms, e.multiparty, &s.samples, tracks, layout, frame_ms, merge_gap_ms)?);
        }
        if interactions.is_empty() {
            return Err(Error::Invalid(format!("{}: empty corpus", mpath.display())));
        }
        Ok(Corpus {
            layout: layout.clone(),
            frame_ms,
            merge_gap_ms,
            interactions,
        })
    }

    /// Builds a corpus from generated interactions without going through files.
    pub fn from_synthetic(xs: &[SyntheticInteraction], layout: &FeatureLayout, frame_ms: u64, merge_gap_ms: Option<u64>) -> Result<Self> {
        let interactions = xs
            .iter()
            .map(|x| {
                let samples: Vec<StreamSample<T>> = x
                    .samples
                    .iter()
                    .map(|s| StreamSample {
                        timestamp_ms: s.timestamp_ms,
                        stream: s.stream,
                        values: s.values.iter().map(|&v| T::c(v)).collect(),
                    })
                    .collect();
                interaction(&x.id, x.duration_ms, x.multiparty, &samples, x.tracks.clone(), layout, frame_ms, merge_gap_ms)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            layout: layout.clone(),
            frame_ms,
            merge_gap_ms,
            interactions,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.interactions.iter().map(|i| i.id.clone()).collect()
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<&Interaction<T>>> {
        let by_id: BTreeMap<&str, &Interaction<T>> = self.interactions.iter().map(|i| (i.id.as_str(), i)).collect();
        ids.iter()
            .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::Invalid(format!("unknown interaction {id}"))))
            .collect()
    }
}

/// Imputation and normalization fitted on the given interactions.
pub fn fit_preprocessing<T: Real>(train: &[&Interaction<T>], layout: &FeatureLayout) -> Result<(ImputationModel<T>, NormalizationModel<T>)> {
    let raw: Vec<&FrameSequence<T>> = train.iter().map(|i| &i.frames).collect();
    let imputation = ImputationModel::fit(&raw, &layout.pooled_names())?;
    let imputed = raw.iter().map(|f| imputation.apply(f)).collect::<Result<Vec<_>>>()?;
    let normalization = NormalizationModel::fit(&imputed.iter().collect::<Vec<_>>())?;
    Ok((imputation, normalization))
}

/// Interaction-level hold-out: `(train, validation)`, validation never empty.
pub fn split_validation(ids: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if ids.len() < 2 {
        return Err(Error::Invalid(format!("{} training interactions, need at least 2 for validation", ids.len())));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let val = order.split_off(order.len() - n_val);
    Ok((order, val))
}

/// Training interactions imputed and normalized with statistics fitted on them.
pub struct PreparedTraining<T> {
    pub imputation: ImputationModel<T>,
    pub normalization: NormalizationModel<T>,
    pub frames: Vec<FrameSequence<T>>,
    pub labels: Vec<FrameLabels>,
    pub ids: Vec<String>,
}

impl<T: Real> PreparedTraining<T> {
    pub fn new(corpus: &Corpus<T>, ids: &[String]) -> Result<Self> {
        let train = corpus.select(ids)?;
        let (imputation, normalization) = fit_preprocessing(&train, &corpus.layout)?;
        let frames = train
            .iter()
            .map(|i| normalization.apply(&imputation.apply(&i.frames)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedTraining {
            imputation,
            normalization,
            frames,
            labels: train.iter().map(|i| i.labels.clone()).collect(),
            ids: ids.to_vec(),
        })
    }

    fn windows(&self, ids: &[String], wc: &WindowConfig) -> Result<WindowSet<T>> {
        let parts: Vec<_> = self
            .ids
            .iter()
            .zip(self.frames.iter().zip(&self.labels))
            .filter(|(id, _)| ids.contains(id))
            .map(|(_, p)| p)
            .collect();
        WindowSet::build(parts, wc, false)
    }
}

/// Trains one model on prepared interactions. Networks hold out
/// `validation_fraction` of the interactions for early stopping; logistic
/// regression uses all of them.
pub fn fit_prepared<T: Real>(
    kind: ModelKind,
    prep: &PreparedTraining<T>,
    layout: &FeatureLayout,
    wc: &WindowConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let (params, record) = if kind.is_network() {
        let (tr, va) = split_validation(&prep.ids, cfg.validation_fraction, derive_seed(cfg.seed, &[0x7661]))?;
        let train = prep.windows(&tr, wc)?;
        let val = prep.windows(&va, wc)?;
        let weights = class_weights(&train.labels())?;
        let (net, meta) = train_network(kind, &train, &val, weights, cfg)?;
        (ModelParams::Network(net), TrainRecord::Rmsprop(meta))
    } else {
        let all = prep.windows(&prep.ids, wc)?;
        let labels = all.labels();
        let weights = class_weights(&labels)?;
        let views: Vec<ArrayView2<T>> = (0..all.len()).map(|i| all.window(i)).collect();
        let opts = SolverOptions {
            max_iter: cfg.logreg_max_iter,
            ..SolverOptions::default()
        };
        let (p, fit) = logreg::train(&views, &labels, [T::c(weights[0]), T::c(weights[1])], cfg.logreg_c, opts)?;
        let record = TrainRecord::Lbfgs {
            seed: cfg.seed,
            c: cfg.logreg_c,
            class_weights: weights,
            train_windows: all.len(),
            fit,
        };
        (ModelParams::LogReg(p), record)
    };
    TrainedModel::new(kind, *wc, layout, prep.imputation.clone(), prep.normalization.clone(), params, record)
}

pub fn fit_model<T: Real>(
    kind: ModelKind,
    corpus: &Corpus<T>,
    train_ids: &[String],
    wc: &WindowConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    fit_prepared(kind, &PreparedTraining::new(corpus, train_ids)?, &corpus.layout, wc, cfg)
}

/// Agreed windows of the given interactions, prepared with the model's
/// statistics, with their SED probabilities.
pub fn score_windows<T: Real>(model: &TrainedModel<T>, corpus: &Corpus<T>, ids: &[String]) -> Result<(Vec<f64>, Vec<u8>)> {
    model.check_layout(&corpus.layout)?;
    let test = corpus.select(ids)?;
    let frames = test.iter().map(|i| model.prepare(&i.frames)).collect::<Result<Vec<_>>>()?;
    let set = WindowSet::build(frames.iter().zip(test.iter().map(|i| &i.labels)), &model.window_config, false)?;
    let p = model.predict_set(&set)?;
    Ok((p.into_iter().map(Real::f64).collect(), set.labels()))
}

pub fn evaluate_model<T: Real>(model: &TrainedModel<T>, corpus: &Corpus<T>, ids: &[String], seed: u64) -> Result<EvalReport> {
    let (scores, labels) = score_windows(model, corpus, ids)?;
    balanced_resample_eval(&scores, &labels, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub report: EvalReport,
    pub train: TrainRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub window_config: WindowConfig,
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    pub summary: SweepCell,
}

fn fold_train_config(cfg: &TrainConfig, seed: u64, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(seed, &[0x666f_6c64, fold as u64]),
        ..cfg.clone()
    }
}

/// Cross-validation over several models and window configurations, sharing
/// per-fold preprocessing. Results are keyed `(kind, tau_ms, eta_ms)`.
pub fn cross_validate_grid<T: Real>(
    kinds: &[ModelKind],
    corpus: &Corpus<T>,
    grid: &[WindowConfig],
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<CvReport>> {
    let plan = make_folds(&corpus.ids(), k, seed)?;
    let mut outcomes: BTreeMap<(ModelKind, u64, u64), Vec<FoldOutcome>> = BTreeMap::new();
    for fold in 0..k {
        let (train_ids, test_ids) = plan.split(fold);
        let prep = PreparedTraining::new(corpus, &train_ids)?;
        let fcfg = fold_train_config(cfg, seed, fold);
        for wc in grid {
            for &kind in kinds {
                let model = fit_prepared(kind, &prep, &corpus.layout, wc, &fcfg)?;
                let report = evaluate_model(&model, corpus, &test_ids, derive_seed(seed, &[0x6576_616c, fold as u64]))?;
                outcomes.entry((kind, wc.tau_ms, wc.eta_ms)).or_default().push(FoldOutcome {
                    fold,
                    test_ids: test_ids.clone(),
                    report,
                    train: model.train_meta,
                });
            }
        }
    }
    let mut out = Vec::new();
    for wc in grid {
        for &kind in kinds {
            let folds = outcomes.remove(&(kind, wc.tau_ms, wc.eta_ms)).unwrap_or_default();
            let reports: Vec<EvalReport> = folds.iter().map(|f| f.report.clone()).collect();
            out.push(CvReport {
                kind,
                window_config: *wc,
                plan: plan.clone(),
                summary: SweepCell::from_folds(kind, wc.tau_ms, wc.eta_ms, &reports),
                folds,
            });
        }
    }
    Ok(out)
}

pub fn cross_validate<T: Real>(
    kind: ModelKind,
    corpus: &Corpus<T>,
    wc: &WindowConfig,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    Ok(cross_validate_grid(&[kind], corpus, &[*wc], cfg, k, seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaComparison {
    pub frame_ms: u64,
    pub raw: KappaReport,
    pub merge_gap_ms: Option<u64>,
    pub merged: Option<KappaReport>,
}

/// Corpus kappa on the tracks as annotated and, when a gap is given, after
/// the merge correction.
pub fn kappa_comparison<T: Real>(corpus: &Corpus<T>, merge_gap_ms: Option<u64>) -> Result<KappaComparison> {
    let labels = |gap| {
        corpus
            .interactions
            .iter()
            .map(|i| labels_for(&i.id, &i.tracks, corpus.frame_ms, gap))
            .collect::<Result<Vec<_>>>()
    };
    Ok(KappaComparison {
        frame_ms: corpus.frame_ms,
        raw: corpus_kappa(&labels(None)?)?,
        merge_gap_ms,
        merged: merge_gap_ms.map(|g| labels(Some(g)).and_then(|l| corpus_kappa(&l))).transpose()?,
    })
}

/// Per-coordinate engaged/SED comparison on raw (unimputed) frames.
pub fn contrast<T: Real>(corpus: &Corpus<T>) -> Result<Vec<FeatureContrast>> {
    let frames: Vec<_> = corpus.interactions.iter().map(|i| &i.frames).collect();
    let labels: Vec<_> = corpus.interactions.iter().map(|i| &i.labels).collect();
    behavior_contrast(&frames, &labels, &corpus.layout.pooled_names())
}

/// Annotation statistics per annotator, tracks as annotated.
pub fn stats<T: Real>(corpus: &Corpus<T>) -> Result<BTreeMap<String, AnnotationStats>> {
    let mut by: BTreeMap<String, Vec<AnnotationTrack>> = BTreeMap::new();
    for i in &corpus.interactions {
        for t in &i.tracks {
            by.entry(t.annotator.clone()).or_default().push(t.clone());
        }
    }
    by.into_iter().map(|(a, ts)| Ok((a, annotation_stats(&ts)?))).collect()
}

/// What a command did, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub layout_hash: String,
    pub config: serde_json::Value,
    pub metrics: serde_json::Value,
    pub artifacts: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, seed: u64, layout: &FeatureLayout, config: impl Serialize, metrics: impl Serialize) -> Result<Self> {
        Ok(RunRecord {
            schema: RUN_SCHEMA.into(),
            command: command.into(),
            seed,
            layout_hash: layout.hash(),
            config: serde_json::to_value(config)?,
            metrics: serde_json::to_value(metrics)?,
            artifacts: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_is_disjoint_and_nonempty() {
        let ids: Vec<String> = (0..25).map(|i| format!("i{i}")).collect();
        let (tr, va) = split_validation(&ids, 0.1, 4).unwrap();
        assert_eq!(va.len(), 3);
        assert_eq!(tr.len() + va.len(), ids.len());
        assert!(va.iter().all(|v| !tr.contains(v)));
        let (_, va1) = split_validation(&ids[..3], 0.1, 4).unwrap();
        assert_eq!(va1.len(), 1);
        assert!(split_validation(&ids[..1], 0.1, 4).is_err());
    }

    #[test]
    fn default_grid_has_table_shape() {
        let g = ExperimentConfig::default().grid().unwrap();
        assert_eq!(g.len(), 27);
        assert!(g.iter().all(|w| w.tau_ms >= w.eta_ms));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(3, &[5, 6]), derive_seed(3, &[5, 6]));
    }
}
