//! Engagement-decrease segment annotations, frame labels, merge correction,
//! inter-annotator agreement and descriptive statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::frame_count;

pub const ENGAGED: u8 = 0;
pub const SED: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cue {
    #[serde(rename = "eye gaze")]
    EyeGaze,
    #[serde(rename = "head motion")]
    HeadMotion,
    #[serde(rename = "facial expression")]
    FacialExpression,
    #[serde(rename = "gestures")]
    Gestures,
    #[serde(rename = "acoustic")]
    Acoustic,
    #[serde(rename = "linguistic")]
    Linguistic,
}

impl Cue {
    pub const ALL: [Cue; 6] = [
        Cue::EyeGaze,
        Cue::HeadMotion,
        Cue::FacialExpression,
        Cue::Gestures,
        Cue::Acoustic,
        Cue::Linguistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cue::EyeGaze => "eye gaze",
            Cue::HeadMotion => "head motion",
            Cue::FacialExpression => "facial expression",
            Cue::Gestures => "gestures",
            Cue::Acoustic => "acoustic",
            Cue::Linguistic => "linguistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affect {
    Frustration,
    Boredom,
    Nervousness,
    Disappointment,
    Anger,
    Submission,
    Other,
}

impl Affect {
    pub const ALL: [Affect; 7] = [
        Affect::Frustration,
        Affect::Boredom,
        Affect::Nervousness,
        Affect::Disappointment,
        Affect::Anger,
        Affect::Submission,
        Affect::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Affect::Frustration => "frustration",
            Affect::Boredom => "boredom",
            Affect::Nervousness => "nervousness",
            Affect::Disappointment => "disappointment",
            Affect::Anger => "anger",
            Affect::Submission => "submission",
            Affect::Other => "other",
        }
    }
}

/// One annotated engagement-decrease interval, `[start_ms, end_ms)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_ms: u64,
    pub end_ms: u64,
    /// Ordered by importance.
    pub cues: Vec<Cue>,
    pub affects: Vec<Affect>,
    pub cause: Option<String>,
}

impl Segment {
    pub fn new(start_ms: u64, end_ms: u64) -> Self {
        Segment {
            start_ms,
            end_ms,
            cues: Vec::new(),
            affects: Vec::new(),
            cause: None,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

/// All segments one annotator produced for one interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub annotator: String,
    pub interaction: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub multiparty: bool,
    pub segments: Vec<Segment>,
}

impl AnnotationTrack {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    /// Checks ordering, disjointness and containment of the segments.
    pub fn validate(&self) -> Result<()> {
        if self.start_ms >= self.end_ms {
            return Err(Error::Invalid(format!(
                "{}/{}: empty interaction bounds [{}, {})",
                self.interaction, self.annotator, self.start_ms, self.end_ms
            )));
        }
        let mut prev_end = self.start_ms;
        for s in &self.segments {
            if s.start_ms >= s.end_ms {
                return Err(Error::Invalid(format!(
                    "{}/{}: segment [{}, {}) is empty",
                    self.interaction, self.annotator, s.start_ms, s.end_ms
                )));
            }
            if s.start_ms < prev_end || s.end_ms > self.end_ms {
                return Err(Error::Invalid(format!(
                    "{}/{}: segment [{}, {}) overlaps or leaves the interaction",
                    self.interaction, self.annotator, s.start_ms, s.end_ms
                )));
            }
            prev_end = s.end_ms;
        }
        Ok(())
    }

    pub fn sed_duration_ms(&self) -> u64 {
        self.segments.iter().map(Segment::duration_ms).sum()
    }
}

fn absorb(into: &mut Segment, next: Segment) {
    into.end_ms = into.end_ms.max(next.end_ms);
    for c in next.cues {
        if !into.cues.contains(&c) {
            into.cues.push(c);
        }
    }
    for a in next.affects {
        if !into.affects.contains(&a) {
            into.affects.push(a);
        }
    }
    if into.cause.is_none() {
        into.cause = next.cause;
    }
}

/// Absorbs every engaged gap strictly shorter than `max_gap_ms` lying between
/// two engagement-decrease segments.
///
/// A single left-to-right sweep reaches the fixpoint because a merged segment
/// keeps the later end time.
pub fn merge_short_gaps(track: &AnnotationTrack, max_gap_ms: u64) -> AnnotationTrack {
    let mut merged: Vec<Segment> = Vec::with_capacity(track.segments.len());
    for seg in track.segments.iter().cloned() {
        match merged.last_mut() {
            Some(last) if seg.start_ms.saturating_sub(last.end_ms) < max_gap_ms => {
                absorb(last, seg)
            }
            _ => merged.push(seg),
        }
    }
    AnnotationTrack {
        segments: merged,
        ..track.clone()
    }
}

/// Per-annotator frame labels for one interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabels {
    pub interaction: String,
    pub frame_period_ms: u64,
    pub first: Vec<u8>,
    pub second: Vec<u8>,
    /// `true` where both annotators assign the same label.
    pub agreed: Vec<bool>,
}

impl FrameLabels {
    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    /// Label on which both annotators agree, if any.
    pub fn consensus(&self, frame: usize) -> Option<u8> {
        self.agreed[frame].then(|| self.first[frame])
    }
}

/// Labels each frame by whether its midpoint falls inside a segment.
pub fn track_frame_labels(track: &AnnotationTrack, frame_ms: u64) -> Vec<u8> {
    let n = frame_count(track.duration_ms(), frame_ms);
    let mut labels = vec![ENGAGED; n];
    for seg in &track.segments {
        // Twice the frame midpoint, relative to interaction start.
        let lo = 2 * (seg.start_ms - track.start_ms);
        let hi = 2 * (seg.end_ms - track.start_ms);
        for (k, label) in labels.iter_mut().enumerate() {
            let mid2 = 2 * k as u64 * frame_ms + frame_ms;
            if mid2 >= lo && mid2 < hi {
                *label = SED;
            }
        }
    }
    labels
}

pub fn frame_labels(
    first: &AnnotationTrack,
    second: &AnnotationTrack,
    frame_ms: u64,
) -> Result<FrameLabels> {
    if frame_ms == 0 {
        return Err(Error::Config("frame period must be positive".into()));
    }
    if first.start_ms != second.start_ms || first.end_ms != second.end_ms {
        return Err(Error::Invalid(format!(
            "annotators {} and {} disagree on bounds of {}: [{}, {}) vs [{}, {})",
            first.annotator,
            second.annotator,
            first.interaction,
            first.start_ms,
            first.end_ms,
            second.start_ms,
            second.end_ms
        )));
    }
    let a = track_frame_labels(first, frame_ms);
    let b = track_frame_labels(second, frame_ms);
    let agreed = a.iter().zip(&b).map(|(x, y)| x == y).collect();
    Ok(FrameLabels {
        interaction: first.interaction.clone(),
        frame_period_ms: frame_ms,
        first: a,
        second: b,
        agreed,
    })
}

/// Cohen's kappa for two binary label vectors.
pub fn cohen_kappa(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Invalid("empty label vectors".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x == SED).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x == SED).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub overall: f64,
    pub frames: usize,
    pub per_interaction: BTreeMap<String, f64>,
}

/// Pools frames from every interaction into one kappa, with a per-interaction breakdown.
pub fn corpus_kappa(labels: &[FrameLabels]) -> Result<KappaReport> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut per_interaction = BTreeMap::new();
    for l in labels {
        if !l.is_empty() {
            per_interaction.insert(l.interaction.clone(), cohen_kappa(&l.first, &l.second)?);
        }
        a.extend_from_slice(&l.first);
        b.extend_from_slice(&l.second);
    }
    Ok(KappaReport {
        overall: cohen_kappa(&a, &b)?,
        frames: a.len(),
        per_interaction,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Moments::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Moments {
            n: xs.len(),
            mean,
            sd: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub tracks: usize,
    pub cues: BTreeMap<String, usize>,
    pub affects: BTreeMap<String, usize>,
    pub causes: BTreeMap<String, usize>,
    /// Segment durations in seconds.
    pub segment_duration_s: Moments,
    /// Duration of the last segment of each track, in seconds.
    pub last_segment_duration_s: Moments,
    pub segments_per_track: Moments,
    pub interaction_duration_s: Moments,
    /// Fraction of annotated time labeled as engagement decrease.
    pub sed_fraction: f64,
}

pub fn annotation_stats(tracks: &[AnnotationTrack]) -> Result<AnnotationStats> {
    if tracks.is_empty() {
        return Err(Error::Invalid("no annotation tracks".into()));
    }
    let mut cues = BTreeMap::new();
    let mut affects = BTreeMap::new();
    let mut causes = BTreeMap::new();
    let mut durations = Vec::new();
    let mut last = Vec::new();
    let mut counts = Vec::new();
    let mut lengths = Vec::new();
    let mut sed_ms = 0u64;
    let mut total_ms = 0u64;
    for t in tracks {
        for s in &t.segments {
            for c in &s.cues {
                *cues.entry(c.as_str().to_string()).or_insert(0) += 1;
            }
            for a in &s.affects {
                *affects.entry(a.as_str().to_string()).or_insert(0) += 1;
            }
            if let Some(c) = &s.cause {
                *causes.entry(c.clone()).or_insert(0) += 1;
            }
            durations.push(s.duration_ms() as f64 / 1000.0);
        }
        if let Some(s) = t.segments.last() {
            last.push(s.duration_ms() as f64 / 1000.0);
        }
        counts.push(t.segments.len() as f64);
        lengths.push(t.duration_ms() as f64 / 1000.0);
        sed_ms += t.sed_duration_ms();
        total_ms += t.duration_ms();
    }
    Ok(AnnotationStats {
        tracks: tracks.len(),
        cues,
        affects,
        causes,
        segment_duration_s: Moments::of(&durations),
        last_segment_duration_s: Moments::of(&last),
        segments_per_track: Moments::of(&counts),
        interaction_duration_s: Moments::of(&lengths),
        sed_fraction: if total_ms == 0 {
            0.0
        } else {
            sed_ms as f64 / total_ms as f64
        },
    })
}
