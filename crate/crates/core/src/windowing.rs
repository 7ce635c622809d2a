//! Observation windows with a labeling buffer, interaction-level folds and
//! class weights.
//!
//! A window ending at frame `t` holds frames `t - tau/L ..= t` and carries the
//! label of frame `t - eta/L`.

use std::io::Write;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::FrameLabels;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stream::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub tau_ms: u64,
    pub eta_ms: u64,
    pub frame_ms: u64,
}

impl WindowConfig {
    pub fn new(tau_ms: u64, eta_ms: u64, frame_ms: u64) -> Result<Self> {
        let cfg = WindowConfig {
            tau_ms,
            eta_ms,
            frame_ms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a config from seconds; both spans must be whole frame multiples.
    pub fn from_secs(tau_s: f64, eta_s: f64, frame_ms: u64) -> Result<Self> {
        let to_ms = |x: f64, what: &str| -> Result<u64> {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::Config(format!("{what} must be a non-negative number, got {x}")));
            }
            let ms = x * 1000.0;
            if (ms - ms.round()).abs() > 1e-6 {
                return Err(Error::Config(format!("{what} = {x} s is not a whole millisecond")));
            }
            Ok(ms.round() as u64)
        };
        Self::new(to_ms(tau_s, "tau")?, to_ms(eta_s, "eta")?, frame_ms)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_ms == 0 {
            return Err(Error::Config("frame period must be positive".into()));
        }
        if !self.tau_ms.is_multiple_of(self.frame_ms) || !self.eta_ms.is_multiple_of(self.frame_ms) {
            return Err(Error::Config(format!(
                "tau ({} ms) and eta ({} ms) must be multiples of the frame period ({} ms)",
                self.tau_ms, self.eta_ms, self.frame_ms
            )));
        }
        if self.tau_ms < self.eta_ms {
            return Err(Error::Config(format!(
                "observation window ({} ms) shorter than buffer ({} ms)",
                self.tau_ms, self.eta_ms
            )));
        }
        Ok(())
    }

    /// Frames per window, endpoints inclusive.
    pub fn rows(&self) -> usize {
        (self.tau_ms / self.frame_ms) as usize + 1
    }

    /// Distance in frames from the window end back to the labeled frame.
    pub fn label_offset(&self) -> usize {
        (self.eta_ms / self.frame_ms) as usize
    }

    /// Row of the labeled frame inside the window.
    pub fn label_row(&self) -> usize {
        self.rows() - 1 - self.label_offset()
    }

    /// Windows available in an interaction of `n_frames` frames.
    pub fn window_count(&self, n_frames: usize) -> usize {
        n_frames.saturating_sub(self.rows() - 1)
    }
}

/// Owned observation window with its buffered label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow<T> {
    pub interaction_id: String,
    pub end_frame: usize,
    pub label_frame: usize,
    pub features: Array2<T>,
    pub label: u8,
    pub agreed: bool,
}

/// Index of a window inside a [`WindowSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub seq: usize,
    pub end: usize,
    pub label: u8,
    pub agreed: bool,
}

fn window_refs(seq: usize, n_frames: usize, labels: &FrameLabels, cfg: &WindowConfig) -> Vec<WindowRef> {
    let first_end = cfg.rows() - 1;
    (first_end..n_frames)
        .map(|end| {
            let lf = end - cfg.label_offset();
            WindowRef {
                seq,
                end,
                label: labels.first[lf],
                agreed: labels.agreed[lf],
            }
        })
        .collect()
}

fn check_aligned<T: Real>(frames: &FrameSequence<T>, labels: &FrameLabels, cfg: &WindowConfig) -> Result<()> {
    cfg.validate()?;
    if frames.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{}: {} frames but {} labels",
            frames.interaction_id,
            frames.len(),
            labels.len()
        )));
    }
    if frames.frame_period_ms != cfg.frame_ms || labels.frame_period_ms != cfg.frame_ms {
        return Err(Error::Config(format!(
            "{}: frame period mismatch (frames {} ms, labels {} ms, config {} ms)",
            frames.interaction_id, frames.frame_period_ms, labels.frame_period_ms, cfg.frame_ms
        )));
    }
    Ok(())
}

/// Every window of one interaction, including ones whose label frame the
/// annotators disagree on (`agreed == false`).
pub fn build_windows<T: Real>(
    frames: &FrameSequence<T>,
    labels: &FrameLabels,
    cfg: &WindowConfig,
) -> Result<Vec<LabeledWindow<T>>> {
    check_aligned(frames, labels, cfg)?;
    let rows = cfg.rows();
    Ok(window_refs(0, frames.len(), labels, cfg)
        .into_iter()
        .map(|r| LabeledWindow {
            interaction_id: frames.interaction_id.clone(),
            end_frame: r.end,
            label_frame: r.end - cfg.label_offset(),
            features: frames.frames.slice(s![r.end + 1 - rows..=r.end, ..]).to_owned(),
            label: r.label,
            agreed: r.agreed,
        })
        .collect())
}

/// Windows over a set of prepared interactions, addressed without copying
/// frame data.
#[derive(Debug, Clone)]
pub struct WindowSet<T> {
    pub config: WindowConfig,
    pub ids: Vec<String>,
    pub sequences: Arc<Vec<Array2<T>>>,
    pub items: Vec<WindowRef>,
}

impl<T: Real> WindowSet<T> {
    /// Collects windows from (imputed, normalized) frames. Disagreed windows
    /// are kept only when `keep_disagreed` is set.
    pub fn build<'a, I>(parts: I, cfg: &WindowConfig, keep_disagreed: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a FrameSequence<T>, &'a FrameLabels)>,
    {
        let mut ids = Vec::new();
        let mut sequences = Vec::new();
        let mut items = Vec::new();
        for (frames, labels) in parts {
            check_aligned(frames, labels, cfg)?;
            if frames.frames.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{}: frames must be imputed before windowing",
                    frames.interaction_id
                )));
            }
            let seq = sequences.len();
            items.extend(
                window_refs(seq, frames.len(), labels, cfg)
                    .into_iter()
                    .filter(|r| keep_disagreed || r.agreed),
            );
            ids.push(frames.interaction_id.clone());
            sequences.push(frames.frames.clone());
        }
        Ok(WindowSet {
            config: *cfg,
            ids,
            sequences: Arc::new(sequences),
            items,
        })
    }

    /// Every window of unlabeled (imputed, normalized) frames, for inference.
    /// Labels are set to engaged and carry no meaning.
    pub fn unlabeled<'a, I>(frames: I, cfg: &WindowConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FrameSequence<T>>,
    {
        cfg.validate()?;
        let mut set = WindowSet {
            config: *cfg,
            ids: Vec::new(),
            sequences: Arc::new(Vec::new()),
            items: Vec::new(),
        };
        let mut sequences = Vec::new();
        for f in frames {
            if f.frame_period_ms != cfg.frame_ms {
                return Err(Error::Config(format!(
                    "{}: frames use {} ms, config {} ms",
                    f.interaction_id, f.frame_period_ms, cfg.frame_ms
                )));
            }
            if f.frames.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{}: frames must be imputed before windowing", f.interaction_id)));
            }
            let seq = sequences.len();
            set.items.extend((cfg.rows() - 1..f.len()).map(|end| WindowRef {
                seq,
                end,
                label: crate::annotation::ENGAGED,
                agreed: true,
            }));
            set.ids.push(f.interaction_id.clone());
            sequences.push(f.frames.clone());
        }
        set.sequences = Arc::new(sequences);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.config.rows()
    }

    pub fn dim(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.ncols())
    }

    pub fn window(&self, i: usize) -> ArrayView2<'_, T> {
        let r = self.items[i];
        let rows = self.rows();
        self.sequences[r.seq].slice(s![r.end + 1 - rows..=r.end, ..])
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|r| r.label).collect()
    }

    /// Restricts to the given item positions; frame data is shared.
    pub fn subset(&self, keep: &[usize]) -> Self {
        WindowSet {
            config: self.config,
            ids: self.ids.clone(),
            sequences: Arc::clone(&self.sequences),
            items: keep.iter().map(|&i| self.items[i]).collect(),
        }
    }
}

/// Interaction-level partition for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Training ids (all other folds) and test ids for fold `i`.
    pub fn split(&self, i: usize) -> (Vec<String>, Vec<String>) {
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        (train, self.folds[i].clone())
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Config("fold count must be positive".into()));
    }
    if k > ids.len() {
        return Err(Error::Config(format!(
            "{k} folds requested for {} interactions",
            ids.len()
        )));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in order.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Balanced class weights `N / (2 * N_c)` for labels in {0, 1}.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        let present = if n1 == 0 { "engaged only" } else { "SED only" };
        return Err(Error::SingleClass(present.into()));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

#[derive(Serialize)]
struct DumpHeader<'a> {
    schema: &'a str,
    tau_ms: u64,
    eta_ms: u64,
    frame_ms: u64,
    windows: usize,
}

#[derive(Serialize)]
struct DumpRecord<'a, T> {
    interaction: &'a str,
    end_frame: usize,
    label_frame: usize,
    label: u8,
    agreed: bool,
    features: Vec<Vec<T>>,
}

/// Writes windows as versioned JSONL for inspection and fixtures.
pub fn dump_windows<T: Real, W: Write>(
    windows: &[LabeledWindow<T>],
    cfg: &WindowConfig,
    mut out: W,
) -> Result<()> {
    let header = DumpHeader {
        schema: "sedet.windows/1",
        tau_ms: cfg.tau_ms,
        eta_ms: cfg.eta_ms,
        frame_ms: cfg.frame_ms,
        windows: windows.len(),
    };
    let io = |e| Error::io("window dump", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for w in windows {
        let rec = DumpRecord {
            interaction: &w.interaction_id,
            end_frame: w.end_frame,
            label_frame: w.label_frame,
            label: w.label,
            agreed: w.agreed,
            features: w.features.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}
