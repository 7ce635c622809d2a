//! Stream identifiers and the pooled feature layout.
//!
//! Every raw feature is pooled into a mean and a variance per frame. The
//! pooled vector concatenates streams in a fixed order; within each stream
//! the mean block comes first, followed by the variance block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamId {
    Distance,
    Gaze,
    Head,
    Face,
    Speech,
}

impl StreamId {
    pub const ALL: [StreamId; 5] = [
        StreamId::Distance,
        StreamId::Gaze,
        StreamId::Head,
        StreamId::Face,
        StreamId::Speech,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Distance => "distance",
            StreamId::Gaze => "gaze",
            StreamId::Head => "head",
            StreamId::Face => "face",
            StreamId::Speech => "speech",
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownStream(s.to_string()))
    }
}

const DISTANCE_FEATURES: [&str; 6] = [
    "sonar_front",
    "face_distance",
    "head_pos_x",
    "head_pos_y",
    "head_pos_z",
    "engagement_zone",
];

const GAZE_FEATURES: [&str; 3] = ["gaze_yaw", "gaze_pitch", "is_looking"];

const HEAD_FEATURES: [&str; 3] = ["head_yaw", "head_pitch", "head_roll"];

const ACTION_UNITS: [&str; 17] = [
    "au01", "au02", "au04", "au05", "au06", "au07", "au09", "au10", "au12", "au14", "au15",
    "au17", "au20", "au23", "au25", "au26", "au45",
];

const OKAO_EXPRESSIONS: [&str; 5] = [
    "expr_neutral",
    "expr_happy",
    "expr_surprised",
    "expr_angry",
    "expr_sad",
];

const SPEECH_FEATURES: [&str; 19] = [
    "voicing_prob",
    "f0",
    "loudness",
    "log_energy",
    "mfcc01",
    "mfcc02",
    "mfcc03",
    "mfcc04",
    "mfcc05",
    "mfcc06",
    "mfcc07",
    "mfcc08",
    "mfcc09",
    "mfcc10",
    "mfcc11",
    "mfcc12",
    "is_robot_speaking",
    "robot_speech_duration",
    "user_speech_duration",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub stream: StreamId,
    pub features: Vec<String>,
}

impl StreamLayout {
    fn new(stream: StreamId, features: &[&str]) -> Self {
        StreamLayout {
            stream,
            features: features.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Ordered per-stream feature table defining the pooled frame vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub name: String,
    pub streams: Vec<StreamLayout>,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::standard()
    }
}

impl FeatureLayout {
    /// 48 raw features (17 action units on the face stream), 96 pooled.
    pub fn standard() -> Self {
        FeatureLayout {
            name: "standard".into(),
            streams: vec![
                StreamLayout::new(StreamId::Distance, &DISTANCE_FEATURES),
                StreamLayout::new(StreamId::Gaze, &GAZE_FEATURES),
                StreamLayout::new(StreamId::Head, &HEAD_FEATURES),
                StreamLayout::new(StreamId::Face, &ACTION_UNITS),
                StreamLayout::new(StreamId::Speech, &SPEECH_FEATURES),
            ],
        }
    }

    /// Alternate face tracker with five expression scores instead of action units.
    pub fn okao() -> Self {
        let mut layout = Self::standard();
        layout.name = "okao".into();
        layout.streams[3] = StreamLayout::new(StreamId::Face, &OKAO_EXPRESSIONS);
        layout
    }

    pub fn stream(&self, id: StreamId) -> Option<&StreamLayout> {
        self.streams.iter().find(|s| s.stream == id)
    }

    pub fn stream_dim(&self, id: StreamId) -> Result<usize> {
        self.stream(id)
            .map(StreamLayout::dim)
            .ok_or_else(|| Error::Layout(format!("stream {id} not declared in layout {}", self.name)))
    }

    /// Number of raw features across all streams.
    pub fn raw_dim(&self) -> usize {
        self.streams.iter().map(StreamLayout::dim).sum()
    }

    /// Pooled frame dimension (mean and variance per raw feature).
    pub fn pooled_dim(&self) -> usize {
        2 * self.raw_dim()
    }

    /// Offset of a stream's mean block inside the pooled vector. The variance
    /// block follows immediately at `offset + dim`.
    pub fn pooled_offset(&self, id: StreamId) -> Result<usize> {
        let mut offset = 0;
        for s in &self.streams {
            if s.stream == id {
                return Ok(offset);
            }
            offset += 2 * s.dim();
        }
        Err(Error::Layout(format!("stream {id} not declared in layout {}", self.name)))
    }

    /// Name of every pooled coordinate, e.g. `head.head_yaw.mean`.
    pub fn pooled_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.pooled_dim());
        for s in &self.streams {
            for stat in ["mean", "var"] {
                for f in &s.features {
                    names.push(format!("{}.{}.{}", s.stream, f, stat));
                }
            }
        }
        names
    }

    pub fn pooled_index(&self, name: &str) -> Option<usize> {
        self.pooled_names().iter().position(|n| n == name)
    }

    /// Stable hex digest of the ordered layout.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.streams {
            hasher.update(s.stream.as_str().as_bytes());
            hasher.update([0u8]);
            for f in &s.features {
                hasher.update(f.as_bytes());
                hasher.update([1u8]);
            }
            hasher.update([2u8]);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
