//! Online detector: integrates samples into frames as they close, keeps the
//! last `tau/L + 1` prepared frames and emits one decision per closed frame.
//!
//! Pooling, imputation, normalization and inference go through the same
//! functions as the batch path, so probabilities agree bit for bit.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::predict_label;
use crate::layout::FeatureLayout;
use crate::models::TrainedModel;
use crate::scalar::Real;
use crate::stream::{build_frames, frame_count, pool_window, write_pooled, PooledWindow, StreamSample};
use crate::windowing::WindowSet;

pub const DECISION_SCHEMA: &str = "sedet.decisions/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Decision<T> {
    pub interaction: String,
    /// Last frame of the observation window.
    pub frame: usize,
    /// Start of `frame` on the interaction clock.
    pub t_ms: u64,
    /// Instant whose state is being labeled, `t_ms - eta`.
    pub labeled_t_ms: u64,
    pub label: u8,
    pub p_sed: T,
    pub model: String,
}

impl<T: Real> Decision<T> {
    fn new(interaction: &str, model: &str, frame: usize, frame_ms: u64, eta_ms: u64, p_sed: T) -> Self {
        let t_ms = frame as u64 * frame_ms;
        Decision {
            interaction: interaction.into(),
            frame,
            t_ms,
            labeled_t_ms: t_ms - eta_ms,
            label: predict_label(p_sed.f64()),
            p_sed,
            model: model.into(),
        }
    }
}

/// Streaming state for one interaction session.
#[derive(Debug)]
pub struct Detector<'m, T> {
    model: &'m TrainedModel<T>,
    layout: FeatureLayout,
    interaction: String,
    model_id: String,
    duration_ms: Option<u64>,
    /// Frame currently accumulating samples.
    frame: usize,
    last_ms: u64,
    /// Raw samples of the open frame, per layout stream.
    pending: Vec<Vec<Vec<T>>>,
    ring: VecDeque<Vec<T>>,
    finished: bool,
}

impl<'m, T: Real> Detector<'m, T> {
    /// Samples at or after `duration_ms`, when given, are ignored, as in the
    /// batch path.
    pub fn new(
        model: &'m TrainedModel<T>,
        layout: &FeatureLayout,
        interaction: &str,
        model_id: &str,
        duration_ms: Option<u64>,
    ) -> Result<Self> {
        model.check_layout(layout)?;
        if layout.pooled_dim() != model.dim() {
            return Err(Error::Layout(format!(
                "layout pools {} coordinates, model expects {}",
                layout.pooled_dim(),
                model.dim()
            )));
        }
        Ok(Detector {
            model,
            layout: layout.clone(),
            interaction: interaction.into(),
            model_id: model_id.into(),
            duration_ms,
            frame: 0,
            last_ms: 0,
            pending: vec![Vec::new(); layout.streams.len()],
            ring: VecDeque::with_capacity(model.window_config.rows()),
            finished: false,
        })
    }

    pub fn frame_ms(&self) -> u64 {
        self.model.window_config.frame_ms
    }

    /// Adds one sample; returns decisions for frames it closes.
    pub fn push(&mut self, sample: &StreamSample<T>) -> Result<Vec<Decision<T>>> {
        if self.finished {
            return Err(Error::Invalid(format!("{}: sample after end of stream", self.interaction)));
        }
        let slot = self
            .layout
            .streams
            .iter()
            .position(|s| s.stream == sample.stream)
            .ok_or_else(|| Error::UnknownStream(sample.stream.to_string()))?;
        let dim = self.layout.streams[slot].dim();
        if sample.values.len() != dim {
            return Err(Error::Dimension {
                stream: sample.stream.to_string(),
                expected: dim,
                got: sample.values.len(),
            });
        }
        if sample.timestamp_ms < self.last_ms {
            return Err(Error::Unsorted {
                stream: sample.stream.to_string(),
                prev: self.last_ms,
                next: sample.timestamp_ms,
            });
        }
        self.last_ms = sample.timestamp_ms;
        if self.duration_ms.is_some_and(|d| sample.timestamp_ms >= d) {
            return Ok(Vec::new());
        }
        let target = (sample.timestamp_ms / self.frame_ms()) as usize;
        let mut out = Vec::new();
        while self.frame < target {
            out.extend(self.close_frame()?);
        }
        self.pending[slot].push(sample.values.clone());
        Ok(out)
    }

    /// Ends the stream, closing every remaining frame of the interaction.
    /// Without a known duration, only the open frame is closed.
    pub fn finish(&mut self) -> Result<Vec<Decision<T>>> {
        if self.finished {
            return Ok(Vec::new());
        }
        self.finished = true;
        let end = match self.duration_ms {
            Some(d) => frame_count(d, self.frame_ms()),
            None => self.frame + usize::from(self.pending.iter().any(|p| !p.is_empty())),
        };
        let mut out = Vec::new();
        while self.frame < end {
            out.extend(self.close_frame()?);
        }
        Ok(out)
    }

    fn close_frame(&mut self) -> Result<Option<Decision<T>>> {
        let dim = self.layout.pooled_dim();
        let mut row = vec![T::nan(); dim];
        let mut mask = vec![true; dim];
        for (slot, sl) in self.layout.streams.iter().enumerate() {
            let samples = std::mem::take(&mut self.pending[slot]);
            if samples.is_empty() {
                continue;
            }
            let views: Vec<&[T]> = samples.iter().map(Vec::as_slice).collect();
            let (mean, var, missing) = pool_window(&views, sl.dim());
            let pooled = PooledWindow {
                index: self.frame,
                mean,
                var,
                missing,
            };
            write_pooled(&self.layout, sl.stream, &pooled, &mut row, &mut mask)?;
        }
        self.model.prepare_row(&mut row, &mut mask);
        let rows = self.model.window_config.rows();
        if self.ring.len() == rows {
            self.ring.pop_front();
        }
        self.ring.push_back(row);
        let frame = self.frame;
        self.frame += 1;
        if self.ring.len() < rows {
            return Ok(None);
        }
        let window = Array2::from_shape_vec((rows, dim), self.ring.iter().flatten().copied().collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let p = self.model.predict_window(window.view())?;
        let wc = &self.model.window_config;
        Ok(Some(Decision::new(&self.interaction, &self.model_id, frame, wc.frame_ms, wc.eta_ms, p)))
    }
}

/// Runs the detector over a finished recording.
pub fn detect_stream<T: Real>(
    model: &TrainedModel<T>,
    layout: &FeatureLayout,
    interaction: &str,
    model_id: &str,
    duration_ms: Option<u64>,
    samples: impl IntoIterator<Item = Result<StreamSample<T>>>,
) -> Result<Vec<Decision<T>>> {
    let mut det = Detector::new(model, layout, interaction, model_id, duration_ms)?;
    let mut out = Vec::new();
    for s in samples {
        out.extend(det.push(&s?)?);
    }
    out.extend(det.finish()?);
    Ok(out)
}

/// Same decisions computed offline: frames, preparation, then every window.
pub fn batch_decisions<T: Real>(
    model: &TrainedModel<T>,
    layout: &FeatureLayout,
    interaction: &str,
    model_id: &str,
    duration_ms: u64,
    samples: &[StreamSample<T>],
) -> Result<Vec<Decision<T>>> {
    model.check_layout(layout)?;
    let wc = model.window_config;
    let raw = build_frames(interaction, samples, layout, duration_ms, wc.frame_ms)?;
    let prepared = model.prepare(&raw)?;
    let set = WindowSet::unlabeled([&prepared], &wc)?;
    let p = model.predict_set(&set)?;
    Ok(set
        .items
        .iter()
        .zip(p)
        .map(|(r, p)| Decision::new(interaction, model_id, r.end, wc.frame_ms, wc.eta_ms, p))
        .collect())
}

#[derive(Serialize)]
struct DecisionHeader<'a> {
    schema: &'a str,
    model: &'a str,
    tau_ms: u64,
    eta_ms: u64,
    frame_ms: u64,
}

/// JSONL output: a header record, then one decision per line.
pub fn write_decisions<T: Real, W: Write>(w: &mut W, model: &TrainedModel<T>, model_id: &str, decisions: &[Decision<T>]) -> Result<()> {
    let wc = model.window_config;
    let header = DecisionHeader {
        schema: DECISION_SCHEMA,
        model: model_id,
        tau_ms: wc.tau_ms,
        eta_ms: wc.eta_ms,
        frame_ms: wc.frame_ms,
    };
    let io = |e| Error::Io {
        path: "<decisions>".into(),
        source: e,
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for d in decisions {
        serde_json::to_writer(&mut *w, d)?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}
