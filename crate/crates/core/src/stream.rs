//! Raw stream samples, temporal pooling into fixed-rate frames, and alignment
//! of all streams onto a common frame clock.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::layout::{FeatureLayout, StreamId};
use crate::scalar::Real;

pub const DEFAULT_FRAME_MS: u64 = 500;

/// One timestamped record of a single stream. Non-finite values mean missing.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample<T> {
    pub timestamp_ms: u64,
    pub stream: StreamId,
    pub values: Vec<T>,
}

/// Samples of one stream for one interaction, ordered by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSeries<T> {
    pub stream: StreamId,
    pub samples: Vec<StreamSample<T>>,
}

impl<T> StreamSeries<T> {
    pub fn new(stream: StreamId) -> Self {
        StreamSeries {
            stream,
            samples: Vec::new(),
        }
    }
}

/// Mean and population variance of one integration window.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledWindow<T> {
    pub index: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// `true` where no finite sample fell in the window.
    pub missing: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedStream<T> {
    pub stream: StreamId,
    pub windows: Vec<PooledWindow<T>>,
}

/// Synchronized pooled frames of one interaction.
///
/// Frame `t` covers `[t * period, (t + 1) * period)` on the interaction clock.
/// Entries under `missing` hold NaN until imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<T> {
    pub interaction_id: String,
    pub frame_period_ms: u64,
    pub frames: Array2<T>,
    pub missing: Array2<bool>,
}

impl<T: Real> FrameSequence<T> {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Number of frames covering `[0, duration_ms)`.
pub fn frame_count(duration_ms: u64, frame_ms: u64) -> usize {
    duration_ms.div_ceil(frame_ms) as usize
}

/// Pools one window of samples coordinate-wise.
///
/// Finite values are sorted before accumulation so the result does not
/// depend on arrival order.
pub fn pool_window<T: Real>(samples: &[&[T]], dim: usize) -> (Vec<T>, Vec<T>, Vec<bool>) {
    let mut mean = vec![T::nan(); dim];
    let mut var = vec![T::nan(); dim];
    let mut missing = vec![true; dim];
    let mut buf: Vec<T> = Vec::with_capacity(samples.len());
    for j in 0..dim {
        buf.clear();
        buf.extend(samples.iter().map(|s| s[j]).filter(|x| x.is_finite()));
        if buf.is_empty() {
            continue;
        }
        buf.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let n = T::from_usize(buf.len()).expect("count");
        let mu = buf.iter().copied().sum::<T>() / n;
        let ss = buf.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>();
        mean[j] = mu;
        var[j] = ss / n;
        missing[j] = false;
    }
    (mean, var, missing)
}

/// Pools a single stream into non-overlapping windows of `frame_ms`.
///
/// Only windows containing at least one sample are returned; alignment fills
/// the gaps.
pub fn integrate_stream<T: Real>(
    series: &StreamSeries<T>,
    layout: &FeatureLayout,
    frame_ms: u64,
) -> Result<IntegratedStream<T>> {
    if frame_ms == 0 {
        return Err(Error::Config("frame period must be positive".into()));
    }
    let dim = layout
        .stream(series.stream)
        .map(|s| s.dim())
        .ok_or_else(|| Error::UnknownStream(series.stream.to_string()))?;

    let mut prev = 0u64;
    for s in &series.samples {
        if s.stream != series.stream {
            return Err(Error::Invalid(format!(
                "sample of stream {} inside series {}",
                s.stream, series.stream
            )));
        }
        if s.timestamp_ms < prev {
            return Err(Error::Unsorted {
                stream: series.stream.to_string(),
                prev,
                next: s.timestamp_ms,
            });
        }
        if s.values.len() != dim {
            return Err(Error::Dimension {
                stream: series.stream.to_string(),
                expected: dim,
                got: s.values.len(),
            });
        }
        prev = s.timestamp_ms;
    }

    let mut windows = Vec::new();
    let mut start = 0;
    while start < series.samples.len() {
        let index = (series.samples[start].timestamp_ms / frame_ms) as usize;
        let mut end = start;
        while end < series.samples.len()
            && (series.samples[end].timestamp_ms / frame_ms) as usize == index
        {
            end += 1;
        }
        let rows: Vec<&[T]> = series.samples[start..end]
            .iter()
            .map(|s| s.values.as_slice())
            .collect();
        let (mean, var, missing) = pool_window(&rows, dim);
        windows.push(PooledWindow {
            index,
            mean,
            var,
            missing,
        });
        start = end;
    }
    Ok(IntegratedStream {
        stream: series.stream,
        windows,
    })
}

/// Writes one stream's pooled statistics into a frame row in layout order.
pub(crate) fn write_pooled<T: Real>(
    layout: &FeatureLayout,
    stream: StreamId,
    pooled: &PooledWindow<T>,
    row: &mut [T],
    mask: &mut [bool],
) -> Result<()> {
    let dim = layout.stream_dim(stream)?;
    if pooled.mean.len() != dim || pooled.var.len() != dim || pooled.missing.len() != dim {
        return Err(Error::Layout(format!(
            "stream {stream}: layout declares {dim} features, pooled output has {}",
            pooled.mean.len()
        )));
    }
    let offset = layout.pooled_offset(stream)?;
    for j in 0..dim {
        row[offset + j] = pooled.mean[j];
        row[offset + dim + j] = pooled.var[j];
        mask[offset + j] = pooled.missing[j];
        mask[offset + dim + j] = pooled.missing[j];
    }
    Ok(())
}

/// Concatenates per-stream pooled windows into one row per frame.
///
/// Frames without data for a stream keep that stream's block masked. Windows
/// at or beyond `n_frames` are dropped.
pub fn align_streams<T: Real>(
    interaction_id: &str,
    integrated: &[IntegratedStream<T>],
    layout: &FeatureLayout,
    n_frames: usize,
    frame_ms: u64,
) -> Result<FrameSequence<T>> {
    let dim = layout.pooled_dim();
    let mut frames = Array2::from_elem((n_frames, dim), T::nan());
    let mut missing = Array2::from_elem((n_frames, dim), true);
    let mut seen = Vec::new();
    for s in integrated {
        if seen.contains(&s.stream) {
            return Err(Error::Layout(format!("stream {} supplied twice", s.stream)));
        }
        seen.push(s.stream);
        if layout.stream(s.stream).is_none() {
            return Err(Error::Layout(format!(
                "stream {} not declared in layout {}",
                s.stream, layout.name
            )));
        }
        for w in &s.windows {
            if w.index >= n_frames {
                continue;
            }
            let mut row = frames.row_mut(w.index);
            let mut mask = missing.row_mut(w.index);
            write_pooled(
                layout,
                s.stream,
                w,
                row.as_slice_mut().expect("row-major"),
                mask.as_slice_mut().expect("row-major"),
            )?;
        }
    }
    Ok(FrameSequence {
        interaction_id: interaction_id.to_string(),
        frame_period_ms: frame_ms,
        frames,
        missing,
    })
}

/// Splits mixed samples by stream, keeping arrival order within each stream.
pub fn split_by_stream<T: Clone>(samples: &[StreamSample<T>]) -> Vec<StreamSeries<T>> {
    let mut by: BTreeMap<StreamId, StreamSeries<T>> = BTreeMap::new();
    for s in samples {
        by.entry(s.stream)
            .or_insert_with(|| StreamSeries::new(s.stream))
            .samples
            .push(s.clone());
    }
    by.into_values().collect()
}

/// Integrates and aligns all samples of one interaction.
pub fn build_frames<T: Real>(
    interaction_id: &str,
    samples: &[StreamSample<T>],
    layout: &FeatureLayout,
    duration_ms: u64,
    frame_ms: u64,
) -> Result<FrameSequence<T>> {
    let integrated = split_by_stream(samples)
        .iter()
        .map(|s| integrate_stream(s, layout, frame_ms))
        .collect::<Result<Vec<_>>>()?;
    align_streams(
        interaction_id,
        &integrated,
        layout,
        frame_count(duration_ms, frame_ms),
        frame_ms,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(stream: StreamId, rows: &[(u64, Vec<f64>)]) -> StreamSeries<f64> {
        StreamSeries {
            stream,
            samples: rows
                .iter()
                .map(|(t, v)| StreamSample {
                    timestamp_ms: *t,
                    stream,
                    values: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn constant_signal_pools_to_zero_variance() {
        let layout = FeatureLayout::standard();
        let rows: Vec<_> = (0..5).map(|i| (i * 100, vec![2.0; 3])).collect();
        let out = integrate_stream(&series(StreamId::Head, &rows), &layout, 500).unwrap();
        assert_eq!(out.windows.len(), 1);
        assert_eq!(out.windows[0].mean, vec![2.0; 3]);
        assert_eq!(out.windows[0].var, vec![0.0; 3]);
    }

    #[test]
    fn two_samples_use_population_variance() {
        let layout = FeatureLayout::standard();
        let rows = vec![(10, vec![1.0, 0.0, 0.0]), (20, vec![3.0, 0.0, 0.0])];
        let out = integrate_stream(&series(StreamId::Head, &rows), &layout, 500).unwrap();
        assert_eq!(out.windows[0].mean[0], 2.0);
        assert_eq!(out.windows[0].var[0], 1.0);
    }

    #[test]
    fn missing_values_are_skipped_and_masked() {
        let layout = FeatureLayout::standard();
        let rows = vec![
            (10, vec![1.0, f64::NAN, 0.0]),
            (20, vec![3.0, f64::NAN, 0.0]),
        ];
        let out = integrate_stream(&series(StreamId::Head, &rows), &layout, 500).unwrap();
        let w = &out.windows[0];
        assert_eq!(w.missing, vec![false, true, false]);
        assert!(w.mean[1].is_nan() && w.var[1].is_nan());
    }

    #[test]
    fn window_assignment_is_half_open() {
        let layout = FeatureLayout::standard();
        let rows = vec![(499, vec![1.0; 3]), (500, vec![5.0; 3])];
        let out = integrate_stream(&series(StreamId::Head, &rows), &layout, 500).unwrap();
        assert_eq!(out.windows.len(), 2);
        assert_eq!(out.windows[0].index, 0);
        assert_eq!(out.windows[1].index, 1);
        assert_eq!(out.windows[1].mean[0], 5.0);
    }

    #[test]
    fn rejects_unsorted_and_bad_dimensions() {
        let layout = FeatureLayout::standard();
        let rows = vec![(20, vec![1.0; 3]), (10, vec![1.0; 3])];
        assert!(matches!(
            integrate_stream(&series(StreamId::Head, &rows), &layout, 500),
            Err(Error::Unsorted { .. })
        ));
        let rows = vec![(20, vec![1.0; 4])];
        assert!(matches!(
            integrate_stream(&series(StreamId::Head, &rows), &layout, 500),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn undeclared_stream_is_rejected() {
        let mut layout = FeatureLayout::standard();
        layout.streams.retain(|s| s.stream != StreamId::Speech);
        let rows = vec![(0, vec![0.0; 19])];
        assert!(matches!(
            integrate_stream(&series(StreamId::Speech, &rows), &layout, 500),
            Err(Error::UnknownStream(_))
        ));
    }

    #[test]
    fn partial_availability_masks_absent_streams() {
        let layout = FeatureLayout::standard();
        let head = integrate_stream(
            &series(StreamId::Head, &[(100, vec![0.1, 0.2, 0.3])]),
            &layout,
            500,
        )
        .unwrap();
        let seq = align_streams("i", &[head], &layout, 2, 500).unwrap();
        assert_eq!(seq.frames.dim(), (2, 96));
        let off = layout.pooled_offset(StreamId::Head).unwrap();
        assert_eq!(seq.frames[[0, off]], 0.1);
        assert_eq!(seq.frames[[0, off + 3]], 0.0);
        let observed = seq.missing.row(0).iter().filter(|m| !**m).count();
        assert_eq!(observed, 6);
        assert!(seq.missing.row(1).iter().all(|m| *m));
    }

    #[test]
    fn sixty_seconds_gives_120_frames() {
        let layout = FeatureLayout::standard();
        let seq = build_frames::<f64>("i", &[], &layout, 60_000, 500).unwrap();
        assert_eq!(seq.len(), 120);
    }

    #[test]
    fn layout_mismatch_names_the_stream() {
        let layout = FeatureLayout::standard();
        let bad = IntegratedStream {
            stream: StreamId::Face,
            windows: vec![PooledWindow {
                index: 0,
                mean: vec![0.0; 5],
                var: vec![0.0; 5],
                missing: vec![false; 5],
            }],
        };
        let err = align_streams("i", &[bad], &layout, 1, 500).unwrap_err();
        assert!(err.to_string().contains("face"), "{err}");
    }
}
