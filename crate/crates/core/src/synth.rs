//! Synthetic interaction corpora.
//!
//! Engagement follows an alternating semi-Markov process: engaged stretches
//! (shifted exponential) and engagement-decrease segments (truncated gamma),
//! the last segment drawn from its own distribution. Each raw feature is
//! emitted at its stream's native rate from a per-state distribution with
//! smooth state transitions, AR(1) noise, per-user and per-segment offsets,
//! and missing data. A second annotator sees jittered and occasionally
//! fragmented boundaries.
//!
//! All emission magnitudes are synthetic defaults chosen for direction only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf, Normal};

use crate::annotation::{Affect, AnnotationTrack, Cue, Segment};
use crate::error::{Error, Result};
use crate::io::{save_annotations, save_streams, Manifest, ManifestEntry};
use crate::layout::{FeatureLayout, StreamId};
use crate::stream::StreamSample;

/// Gamma distribution truncated to `[min_s, max_s]` by rejection. The
/// truncated mean equals `mean_s`; `sd_s` fixes the shape, so the truncated
/// standard deviation comes out somewhat below `sd_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaDuration {
    pub mean_s: f64,
    pub sd_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl GammaDuration {
    /// Shape from the coefficient of variation, scale solved so that the
    /// truncated distribution has mean `mean_s`.
    pub fn shape_scale(&self) -> (f64, f64) {
        let k = (self.mean_s / self.sd_s).powi(2);
        let (mut lo, mut hi) = (1e-3 * self.mean_s, 1e3 * self.mean_s);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            let m = truncated_mean(k, mid, self.min_s, self.max_s);
            if m.is_nan() || m < self.mean_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (k, (lo * hi).sqrt())
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.sd_s > 0.0 && self.min_s >= 0.0 && self.min_s < self.mean_s && self.mean_s < self.max_s) {
            return Err(Error::Config(format!("{what}: invalid duration distribution {self:?}")));
        }
        let (k, theta) = self.shape_scale();
        let m = truncated_mean(k, theta, self.min_s, self.max_s);
        if !((m - self.mean_s).abs() <= 1e-6 * self.mean_s) {
            return Err(Error::Config(format!(
                "{what}: no gamma with this shape reaches mean {} s inside [{}, {}] s",
                self.mean_s, self.min_s, self.max_s
            )));
        }
        Ok(())
    }

    /// Mean and standard deviation after truncation.
    pub fn truncated_moments(&self) -> (f64, f64) {
        let (k, theta) = self.shape_scale();
        let mass = gamma_mass(k, theta, self.min_s, self.max_s);
        let m = truncated_mean(k, theta, self.min_s, self.max_s);
        let m2 = k * (k + 1.0) * theta * theta * gamma_mass(k + 2.0, theta, self.min_s, self.max_s) / mass;
        (m, (m2 - m * m).max(0.0).sqrt())
    }

    pub fn sampler(&self) -> TruncatedGamma {
        let (k, theta) = self.shape_scale();
        TruncatedGamma {
            dist: Gamma::new(k, theta).expect("validated parameters"),
            min_s: self.min_s,
            max_s: self.max_s,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TruncatedGamma {
    dist: Gamma<f64>,
    min_s: f64,
    max_s: f64,
}

impl Distribution<f64> for TruncatedGamma {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.dist.sample(rng);
            if x >= self.min_s && x <= self.max_s {
                return x;
            }
        }
    }
}

fn gamma_mass(k: f64, theta: f64, a: f64, b: f64) -> f64 {
    let g = GammaCdf::new(k, 1.0 / theta).expect("positive parameters");
    g.cdf(b) - g.cdf(a)
}

/// `E[X | a <= X <= b] = k theta (F_{k+1}(b) - F_{k+1}(a)) / (F_k(b) - F_k(a))`.
fn truncated_mean(k: f64, theta: f64, a: f64, b: f64) -> f64 {
    k * theta * gamma_mass(k + 1.0, theta, a, b) / gamma_mass(k, theta, a, b)
}

/// Normal distribution truncated to `[min_s, max_s]` by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionLength {
    pub mean_s: f64,
    pub sd_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl InteractionLength {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean_s + self.sd_s * z;
            if x >= self.min_s && x <= self.max_s {
                return x;
            }
        }
    }
}

/// Second-annotator noise; `jitter_sd_ms = 0` turns all of it off, giving
/// identical tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorNoise {
    /// Standard deviation of the second annotator's boundary shift.
    pub jitter_sd_ms: f64,
    /// Chance that the second annotator misses a segment entirely.
    pub miss_prob: f64,
    /// Chance that a segment is split by a short engaged gap.
    pub fragment_prob: f64,
    pub fragment_gap_ms: [u64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionKind {
    #[default]
    Continuous,
    /// 0/1 from a thresholded latent; `mean` holds the per-state probability.
    Binary,
    /// Distance band 1/2/3 derived from `distance.face_distance`, 0 when missing.
    Zone,
}

/// Per-state emission of one raw feature. Index 0 is engaged, 1 is SED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    /// `stream.feature`, as in the feature layout.
    pub feature: String,
    #[serde(default)]
    pub kind: EmissionKind,
    pub mean: [f64; 2],
    #[serde(default)]
    pub sd: [f64; 2],
    /// Offset of random sign per SED segment (looking or turning away to
    /// either side); invisible to a linear model of the mean.
    #[serde(default)]
    pub swing: f64,
    #[serde(default)]
    pub segment_sd: f64,
    #[serde(default)]
    pub user_sd: f64,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub stream: StreamId,
    pub rate_hz: f64,
    /// Per-sample probability that all values are null.
    pub missing: [f64; 2],
    /// Start rate of tracking-loss bursts (no records at all), per minute.
    pub occlusion_per_min: [f64; 2],
    /// Time constant of the AR(1) noise.
    pub ar_tau_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub interaction: InteractionLength,
    pub sed_segments_mean: f64,
    pub sed_duration: GammaDuration,
    pub final_sed_duration: GammaDuration,
    pub sed_fraction: f64,
    pub min_engaged_s: f64,
    /// Time constant of the behavioral response to a state change.
    pub onset_tau_s: f64,
    /// Share of the noise standard deviation that is white rather than AR(1).
    pub white_fraction: f64,
    pub occlusion_mean_s: f64,
    pub multiparty_prob: f64,
    pub annotators: AnnotatorNoise,
    pub streams: Vec<StreamSpec>,
    pub emissions: Vec<Emission>,
}

fn cont(feature: &str, mean: [f64; 2], sd: [f64; 2]) -> Emission {
    Emission {
        feature: feature.into(),
        kind: EmissionKind::Continuous,
        mean,
        sd,
        swing: 0.0,
        segment_sd: 0.0,
        user_sd: 0.0,
        range: None,
    }
}

impl Emission {
    fn offsets(mut self, segment_sd: f64, user_sd: f64) -> Self {
        self.segment_sd = segment_sd;
        self.user_sd = user_sd;
        self
    }

    fn swing(mut self, swing: f64) -> Self {
        self.swing = swing;
        self
    }

    fn range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some([lo, hi]);
        self
    }

    fn binary(feature: &str, p: [f64; 2]) -> Self {
        Emission {
            kind: EmissionKind::Binary,
            ..cont(feature, p, [0.0, 0.0])
        }
    }
}

/// Default emission table for the standard layout.
pub fn default_emissions() -> Vec<Emission> {
    let mut v = vec![
        cont("distance.sonar_front", [1.3, 1.34], [0.12, 0.13]).offsets(0.15, 0.25).range(0.2, 5.0),
        cont("distance.face_distance", [1.2, 1.24], [0.1, 0.11]).offsets(0.15, 0.25).range(0.3, 5.0),
        cont("distance.head_pos_x", [1.15, 1.19], [0.1, 0.11]).offsets(0.15, 0.25),
        cont("distance.head_pos_y", [0.0, 0.0], [0.08, 0.085]).offsets(0.05, 0.1).swing(0.14),
        cont("distance.head_pos_z", [1.6, 1.6], [0.04, 0.041]).offsets(0.02, 0.1),
        Emission {
            kind: EmissionKind::Zone,
            ..cont("distance.engagement_zone", [0.0, 0.0], [0.0, 0.0])
        },
        cont("gaze.gaze_yaw", [0.0, 0.0], [0.12, 0.128]).offsets(0.05, 0.05).swing(0.25).range(-1.5, 1.5),
        cont("gaze.gaze_pitch", [0.0, -0.006], [0.1, 0.105]).offsets(0.05, 0.08),
        Emission::binary("gaze.is_looking", [0.8, 0.72]).offsets(0.25, 0.3),
        cont("head.head_yaw", [0.0, 0.0], [0.08, 0.095]).offsets(0.05, 0.05).swing(0.18).range(-1.5, 1.5),
        cont("head.head_pitch", [0.0, -0.004], [0.06, 0.067]).offsets(0.04, 0.06),
        cont("head.head_roll", [0.0, 0.0], [0.05, 0.056]).offsets(0.03, 0.05),
    ];
    for au in [
        "au01", "au02", "au04", "au05", "au06", "au07", "au09", "au10", "au12", "au14", "au15", "au17", "au20",
        "au23", "au25", "au26", "au45",
    ] {
        let mean = match au {
            "au06" => [0.28, 0.268],
            "au12" => [0.32, 0.305],
            _ => [0.1, 0.1],
        };
        v.push(cont(&format!("face.{au}"), mean, [0.1, 0.1]).offsets(0.05, 0.06).range(0.0, 1.0));
    }
    v.push(cont("speech.voicing_prob", [0.35, 0.342], [0.2, 0.2]).offsets(0.05, 0.05).range(0.0, 1.0));
    v.push(cont("speech.f0", [180.0, 179.8], [40.0, 40.0]).offsets(10.0, 30.0).range(50.0, 400.0));
    v.push(cont("speech.loudness", [0.5, 0.495], [0.2, 0.2]).offsets(0.05, 0.1).range(0.0, 2.0));
    v.push(cont("speech.log_energy", [-6.0, -6.025], [1.0, 1.0]).offsets(0.2, 0.5));
    for k in 1..=12 {
        v.push(cont(&format!("speech.mfcc{k:02}"), [0.0, 0.0], [1.0, 1.0]).offsets(0.1, 0.3));
    }
    v.push(Emission::binary("speech.is_robot_speaking", [0.5, 0.48]).offsets(0.3, 0.2));
    v.push(cont("speech.robot_speech_duration", [2.0, 1.95], [1.0, 1.0]).offsets(0.3, 0.3).range(0.0, 20.0));
    v.push(cont("speech.user_speech_duration", [1.0, 0.975], [0.8, 0.8]).offsets(0.3, 0.3).range(0.0, 20.0));
    v
}

pub fn default_streams() -> Vec<StreamSpec> {
    let tracked = |stream| StreamSpec {
        stream,
        rate_hz: 10.0,
        missing: [0.05, 0.12],
        occlusion_per_min: [0.5, 3.0],
        ar_tau_s: 0.8,
    };
    vec![
        StreamSpec {
            stream: StreamId::Distance,
            rate_hz: 5.0,
            missing: [0.02, 0.04],
            occlusion_per_min: [0.0, 0.0],
            ar_tau_s: 2.0,
        },
        tracked(StreamId::Gaze),
        tracked(StreamId::Head),
        tracked(StreamId::Face),
        StreamSpec {
            stream: StreamId::Speech,
            rate_hz: 100.0,
            missing: [0.0, 0.0],
            occlusion_per_min: [0.0, 0.0],
            ar_tau_s: 0.5,
        },
    ]
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            interaction: InteractionLength {
                mean_s: 420.0,
                sd_s: 300.0,
                min_s: 60.0,
                max_s: 1800.0,
            },
            sed_segments_mean: 6.0,
            sed_duration: GammaDuration {
                mean_s: 6.0,
                sd_s: 9.0,
                min_s: 0.5,
                max_s: 60.0,
            },
            final_sed_duration: GammaDuration {
                mean_s: 9.0,
                sd_s: 15.0,
                min_s: 0.5,
                max_s: 90.0,
            },
            sed_fraction: 0.10,
            min_engaged_s: 3.0,
            onset_tau_s: 0.6,
            white_fraction: 0.5,
            occlusion_mean_s: 1.0,
            multiparty_prob: 0.25,
            annotators: AnnotatorNoise {
                jitter_sd_ms: 250.0,
                miss_prob: 0.15,
                fragment_prob: 0.3,
                fragment_gap_ms: [200, 900],
            },
            streams: default_streams(),
            emissions: default_emissions(),
        }
    }
}

/// Derived quantities of a validated configuration.
#[derive(Debug, Clone)]
pub struct GeneratorPlan {
    pub engaged_mean_s: f64,
    sed: TruncatedGamma,
    final_sed: TruncatedGamma,
    pub sed_mean_s: f64,
    pub implied_segments: f64,
    /// Emission index for every raw coordinate, per stream in layout order.
    streams: Vec<(StreamSpec, Vec<usize>)>,
}

impl GeneratorConfig {
    pub fn validate(&self, layout: &FeatureLayout) -> Result<GeneratorPlan> {
        let f = self.sed_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("SED fraction {f} outside (0, 1)")));
        }
        let len = &self.interaction;
        if !(len.min_s > 0.0 && len.min_s < len.max_s && len.sd_s >= 0.0) {
            return Err(Error::Config(format!("invalid interaction length {len:?}")));
        }
        self.sed_duration.validate("SED duration")?;
        self.final_sed_duration.validate("final SED duration")?;
        if !(self.onset_tau_s > 0.0 && (0.0..=1.0).contains(&self.white_fraction) && self.occlusion_mean_s > 0.0) {
            return Err(Error::Config("onset, white-noise share or occlusion length out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.multiparty_prob)
            || !(0.0..=1.0).contains(&self.annotators.fragment_prob)
            || !(0.0..1.0).contains(&self.annotators.miss_prob)
            || self.annotators.jitter_sd_ms < 0.0
            || self.annotators.fragment_gap_ms[0] > self.annotators.fragment_gap_ms[1]
        {
            return Err(Error::Config("annotator noise or multiparty probability out of range".into()));
        }
        let sed_mean_s = self.sed_duration.mean_s;
        let engaged_mean_s = sed_mean_s * (1.0 - f) / f;
        if engaged_mean_s <= self.min_engaged_s {
            return Err(Error::Config(format!(
                "infeasible: SED fraction {f} with mean SED duration {sed_mean_s:.2} s needs engaged stretches of \
                 {engaged_mean_s:.2} s on average, below the {} s minimum",
                self.min_engaged_s
            )));
        }
        let implied_segments = len.mean_s / (sed_mean_s + engaged_mean_s);
        let rel = (implied_segments - self.sed_segments_mean).abs() / self.sed_segments_mean;
        if !(self.sed_segments_mean > 0.0) || rel > 0.5 {
            return Err(Error::Config(format!(
                "infeasible: SED fraction {f}, mean SED duration {sed_mean_s:.2} s and mean interaction length \
                 {:.0} s imply {implied_segments:.2} segments per interaction, configured {}",
                len.mean_s, self.sed_segments_mean
            )));
        }

        let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, e) in self.emissions.iter().enumerate() {
            if by_name.insert(e.feature.as_str(), i).is_some() {
                return Err(Error::Config(format!("duplicate emission for {}", e.feature)));
            }
            let bad = match e.kind {
                EmissionKind::Binary => e.mean.iter().any(|p| !(*p > 0.0 && *p < 1.0)),
                EmissionKind::Continuous => e.sd.iter().any(|s| !(*s >= 0.0)),
                EmissionKind::Zone => false,
            };
            if bad || !(e.segment_sd >= 0.0 && e.user_sd >= 0.0) {
                return Err(Error::Config(format!("invalid emission parameters for {}", e.feature)));
            }
        }
        let mut streams = Vec::new();
        let mut used = 0;
        for sl in &layout.streams {
            let spec = self
                .streams
                .iter()
                .find(|s| s.stream == sl.stream)
                .ok_or_else(|| Error::Config(format!("no stream spec for {}", sl.stream)))?;
            if !(spec.rate_hz > 0.0 && spec.rate_hz <= 1000.0 && spec.ar_tau_s > 0.0)
                || spec.missing.iter().any(|p| !(0.0..1.0).contains(p))
                || spec.occlusion_per_min.iter().any(|r| !(*r >= 0.0))
            {
                return Err(Error::Config(format!("invalid stream spec for {}", sl.stream)));
            }
            let mut idx = Vec::with_capacity(sl.dim());
            for feat in &sl.features {
                let name = format!("{}.{feat}", sl.stream);
                let i = *by_name
                    .get(name.as_str())
                    .ok_or_else(|| Error::Config(format!("no emission for layout coordinate {name}")))?;
                if self.emissions[i].kind == EmissionKind::Zone && !sl.features.iter().any(|f| f == "face_distance") {
                    return Err(Error::Config(format!("{name} needs face_distance in the same stream")));
                }
                idx.push(i);
            }
            used += idx.len();
            streams.push((spec.clone(), idx));
        }
        if used != self.emissions.len() {
            return Err(Error::Config("emission table names features absent from the layout".into()));
        }
        Ok(GeneratorPlan {
            engaged_mean_s,
            sed: self.sed_duration.sampler(),
            final_sed: self.final_sed_duration.sampler(),
            sed_mean_s,
            implied_segments,
            streams,
        })
    }
}

/// One generated interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInteraction {
    pub id: String,
    pub duration_ms: u64,
    pub multiparty: bool,
    /// Generator state: SED intervals `[start, end)` in ms.
    pub truth: Vec<(u64, u64)>,
    /// All records in chronological order; empty from [`generate_labels`].
    pub samples: Vec<StreamSample<f64>>,
    /// Annotator A1 (the generator state) and A2 (noisy).
    pub tracks: Vec<AnnotationTrack>,
}

impl SyntheticInteraction {
    /// Generator state at an instant.
    pub fn state_at(&self, t_ms: u64) -> u8 {
        u8::from(self.truth.iter().any(|&(s, e)| s <= t_ms && t_ms < e))
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator per (seed, interaction, purpose).
fn sub_rng(seed: u64, id: &str, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ fnv1a(id)) ^ purpose))
}

const TIMELINE: u64 = 1;
const ANNOTATOR: u64 = 2;
const EMISSION: u64 = 3;
const TAGS: u64 = 4;

fn timeline(cfg: &GeneratorConfig, plan: &GeneratorPlan, rng: &mut ChaCha8Rng) -> (u64, Vec<(u64, u64)>) {
    let duration_s = cfg.interaction.sample(rng);
    let duration_ms = (duration_s * 1000.0).round() as u64;
    let engaged = Exp::new(1.0 / (plan.engaged_mean_s - cfg.min_engaged_s)).expect("validated");
    let mut segs: Vec<(f64, f64)> = Vec::new();
    let mut t = 0.0;
    loop {
        t += cfg.min_engaged_s + engaged.sample(rng);
        if t >= duration_s {
            break;
        }
        let end = (t + plan.sed.sample(rng)).min(duration_s);
        segs.push((t, end));
        t = end;
        if t >= duration_s {
            break;
        }
    }
    if let Some(last) = segs.last_mut() {
        last.1 = (last.0 + plan.final_sed.sample(rng)).min(duration_s);
    }
    let ms: Vec<(u64, u64)> = segs
        .into_iter()
        .map(|(s, e)| ((s * 1000.0).round() as u64, (e * 1000.0).round() as u64))
        .filter(|(s, e)| e > s)
        .collect();
    (duration_ms, ms)
}

fn second_annotator(noise: &AnnotatorNoise, truth: &[(u64, u64)], duration_ms: u64, rng: &mut ChaCha8Rng) -> Vec<(u64, u64)> {
    if noise.jitter_sd_ms == 0.0 {
        return truth.to_vec();
    }
    let shift = |x: u64, rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        (x as f64 + noise.jitter_sd_ms * z).round().clamp(0.0, duration_ms as f64) as u64
    };
    let mut out: Vec<(u64, u64)> = Vec::new();
    for &(s, e) in truth {
        let missed = rng.random::<f64>() < noise.miss_prob;
        let s2 = shift(s, rng);
        let e2 = shift(e, rng).max(s2 + 100).min(duration_ms);
        let [gmin, gmax] = noise.fragment_gap_ms;
        let fragment = rng.random::<f64>() < noise.fragment_prob;
        if missed {
            continue;
        }
        if fragment && e2 > s2 + gmax + 1000 {
            let gap = rng.random_range(gmin..=gmax);
            let at = rng.random_range(s2 + 500..=e2 - 500 - gap);
            out.push((s2, at));
            out.push((at + gap, e2));
        } else {
            out.push((s2, e2));
        }
    }
    let mut fixed: Vec<(u64, u64)> = Vec::with_capacity(out.len());
    for (s, e) in out {
        let s = fixed.last().map_or(s, |p| s.max(p.1));
        if e > s {
            fixed.push((s, e));
        }
    }
    fixed
}

const CAUSES: [&str; 6] = [
    "user interrupted by another person",
    "robot error",
    "user uses phone",
    "robot focus on another person",
    "user time constraint",
    "user missed robot request",
];

fn pick<T: Copy>(items: &[(T, f64)], rng: &mut ChaCha8Rng) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(x, w) in items {
        if u < w {
            return x;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn tag_segment(s: u64, e: u64, rng: &mut ChaCha8Rng) -> Segment {
    let cues = [
        (Cue::HeadMotion, 4.0),
        (Cue::Gestures, 3.5),
        (Cue::EyeGaze, 3.0),
        (Cue::FacialExpression, 2.0),
        (Cue::Acoustic, 1.0),
        (Cue::Linguistic, 1.0),
    ];
    let mut seg = Segment::new(s, e);
    seg.cues.push(pick(&cues, rng));
    if rng.random::<f64>() < 0.5 {
        let c = pick(&cues, rng);
        if !seg.cues.contains(&c) {
            seg.cues.push(c);
        }
    }
    if rng.random::<f64>() < 0.6 {
        let affects = [
            (Affect::Boredom, 4.0),
            (Affect::Frustration, 2.0),
            (Affect::Disappointment, 1.0),
            (Affect::Nervousness, 1.0),
            (Affect::Anger, 0.5),
            (Affect::Submission, 0.5),
            (Affect::Other, 1.0),
        ];
        seg.affects.push(pick(&affects, rng));
    }
    if rng.random::<f64>() < 0.5 {
        let w = [39.0, 17.0, 10.0, 5.0, 2.0, 2.0];
        let i = pick(&w.iter().copied().enumerate().collect::<Vec<_>>(), rng);
        seg.cause = Some(CAUSES[i].into());
    }
    seg
}

fn tracks(id: &str, duration_ms: u64, multiparty: bool, a1: &[(u64, u64)], a2: &[(u64, u64)], seed: u64) -> Vec<AnnotationTrack> {
    let mut rng = sub_rng(seed, id, TAGS);
    let tags: Vec<Segment> = a1.iter().map(|&(s, e)| tag_segment(s, e, &mut rng)).collect();
    let make = |name: &str, segs: Vec<Segment>| AnnotationTrack {
        annotator: name.into(),
        interaction: id.into(),
        start_ms: 0,
        end_ms: duration_ms,
        multiparty,
        segments: segs,
    };
    let second = a2
        .iter()
        .map(|&(s, e)| {
            // Descriptors copied from the closest ground-truth segment.
            let src = tags
                .iter()
                .min_by_key(|t| t.start_ms.abs_diff(s).min(t.end_ms.abs_diff(e)))
                .cloned()
                .unwrap_or_else(|| Segment::new(s, e));
            Segment {
                start_ms: s,
                end_ms: e,
                ..src
            }
        })
        .collect();
    vec![make("A1", tags), make("A2", second)]
}

fn labels_only(cfg: &GeneratorConfig, plan: &GeneratorPlan, id: &str) -> SyntheticInteraction {
    let mut rng = sub_rng(cfg.seed, id, TIMELINE);
    let (duration_ms, truth) = timeline(cfg, plan, &mut rng);
    let multiparty = rng.random::<f64>() < cfg.multiparty_prob;
    let mut arng = sub_rng(cfg.seed, id, ANNOTATOR);
    let a2 = second_annotator(&cfg.annotators, &truth, duration_ms, &mut arng);
    let tracks = tracks(id, duration_ms, multiparty, &truth, &a2, cfg.seed);
    SyntheticInteraction {
        id: id.into(),
        duration_ms,
        multiparty,
        truth,
        samples: Vec::new(),
        tracks,
    }
}

/// Timeline and annotator tracks without emissions; identical to the labels
/// of [`generate_interaction`].
pub fn generate_labels(cfg: &GeneratorConfig, id: &str) -> Result<SyntheticInteraction> {
    let plan = cfg.validate(&FeatureLayout::standard())?;
    Ok(labels_only(cfg, &plan, id))
}

struct Span {
    end_ms: u64,
    sed: bool,
    sign: f64,
    offsets: Vec<f64>,
}

fn spans(truth: &[(u64, u64)], duration_ms: u64, emissions: &[Emission], rng: &mut ChaCha8Rng) -> Vec<Span> {
    let mut bounds: Vec<(u64, bool)> = Vec::new();
    let mut t = 0;
    for &(s, e) in truth {
        if s > t {
            bounds.push((s, false));
        }
        bounds.push((e, true));
        t = e;
    }
    if t < duration_ms {
        bounds.push((duration_ms, false));
    }
    bounds
        .into_iter()
        .map(|(end_ms, sed)| Span {
            end_ms,
            sed,
            sign: if rng.random::<bool>() { 1.0 } else { -1.0 },
            offsets: emissions
                .iter()
                .map(|e| e.segment_sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        })
        .collect()
}

fn probit(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn emit_stream(
    cfg: &GeneratorConfig,
    spec: &StreamSpec,
    idx: &[usize],
    duration_ms: u64,
    spans: &[Span],
    user: &[f64],
    rng: &mut ChaCha8Rng,
    out: &mut Vec<StreamSample<f64>>,
) {
    let em: Vec<&Emission> = idx.iter().map(|&i| &cfg.emissions[i]).collect();
    let dt_ms = 1000.0 / spec.rate_hz;
    let a = (-dt_ms / (1000.0 * spec.ar_tau_s)).exp();
    let innov = (1.0 - a * a).sqrt();
    let b = 1.0 - (-dt_ms / (1000.0 * cfg.onset_tau_s)).exp();
    let w = cfg.white_fraction;
    let ar_share = (1.0 - w * w).sqrt();
    let occlusion = Exp::new(1.0 / (cfg.occlusion_mean_s * 1000.0)).expect("validated");
    let zone_src = em.iter().position(|e| e.feature.ends_with(".face_distance"));
    let mut z: Vec<f64> = (0..em.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut s = 0.0f64;
    let mut span = 0;
    let mut sign = 1.0;
    let mut occluded_until = 0u64;
    let lerp = |x: [f64; 2], s: f64| x[0] + (x[1] - x[0]) * s;
    let mut k = 0u64;
    loop {
        let t = (k as f64 * dt_ms).round() as u64;
        k += 1;
        if t >= duration_ms {
            break;
        }
        while spans[span].end_ms <= t {
            span += 1;
            if spans[span].sed {
                sign = spans[span].sign;
            }
        }
        let state = if spans[span].sed { 1.0 } else { 0.0 };
        s += b * (state - s);
        for zj in z.iter_mut() {
            *zj = a * *zj + innov * rng.sample::<f64, _>(StandardNormal);
        }
        let white: Vec<f64> = (0..em.len()).map(|_| rng.sample(StandardNormal)).collect();
        let u_occ: f64 = rng.random();
        let u_miss: f64 = rng.random();
        let si = state as usize;
        if t < occluded_until {
            continue;
        }
        if u_occ < spec.occlusion_per_min[si] * dt_ms / 60_000.0 {
            occluded_until = t + occlusion.sample(rng).round() as u64;
            continue;
        }
        let mut values = vec![f64::NAN; em.len()];
        if u_miss >= lerp(spec.missing, s) {
            for (j, e) in em.iter().enumerate() {
                let offset = user[idx[j]] + spans[span].offsets[idx[j]] + s * sign * e.swing;
                let noise = ar_share * z[j] + w * white[j];
                values[j] = match e.kind {
                    EmissionKind::Continuous => {
                        let v = lerp(e.mean, s) + offset + lerp(e.sd, s) * noise;
                        let v = e.range.map_or(v, |[lo, hi]| v.clamp(lo, hi));
                        round6(v)
                    }
                    EmissionKind::Binary => f64::from(u8::from(noise < probit(lerp(e.mean, s)) + offset)),
                    EmissionKind::Zone => f64::NAN,
                };
            }
            for (j, e) in em.iter().enumerate() {
                if e.kind == EmissionKind::Zone {
                    let d = zone_src.map_or(f64::NAN, |i| values[i]);
                    values[j] = if d.is_nan() {
                        0.0
                    } else if d < 1.5 {
                        1.0
                    } else if d < 2.5 {
                        2.0
                    } else {
                        3.0
                    };
                }
            }
        }
        out.push(StreamSample {
            timestamp_ms: t,
            stream: spec.stream,
            values,
        });
    }
}

/// One interaction with emissions and both annotator tracks. Deterministic
/// in `(cfg, id)`.
pub fn generate_interaction(cfg: &GeneratorConfig, id: &str) -> Result<SyntheticInteraction> {
    let plan = cfg.validate(&FeatureLayout::standard())?;
    Ok(generate_with_plan(cfg, &plan, id))
}

fn generate_with_plan(cfg: &GeneratorConfig, plan: &GeneratorPlan, id: &str) -> SyntheticInteraction {
    let mut inter = labels_only(cfg, plan, id);
    let mut rng = sub_rng(cfg.seed, id, EMISSION);
    let user: Vec<f64> = cfg
        .emissions
        .iter()
        .map(|e| e.user_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let spans = spans(&inter.truth, inter.duration_ms, &cfg.emissions, &mut rng);
    let mut samples = Vec::new();
    for (spec, idx) in &plan.streams {
        emit_stream(cfg, spec, idx, inter.duration_ms, &spans, &user, &mut rng, &mut samples);
    }
    // Stable: equal timestamps keep layout stream order.
    samples.sort_by_key(|s| s.timestamp_ms);
    inter.samples = samples;
    inter
}

pub fn interaction_id(i: usize) -> String {
    format!("syn{i:04}")
}

/// Generates `n` interactions in memory.
pub fn generate_interactions(cfg: &GeneratorConfig, n: usize) -> Result<Vec<SyntheticInteraction>> {
    let plan = cfg.validate(&FeatureLayout::standard())?;
    Ok((0..n).map(|i| generate_with_plan(cfg, &plan, &interaction_id(i))).collect())
}

/// Writes `n` interactions, their annotations, the generator configuration
/// and a manifest under `out_dir`.
pub fn generate_corpus(cfg: &GeneratorConfig, n: usize, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let plan = cfg.validate(&FeatureLayout::standard())?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = interaction_id(i);
        let inter = generate_with_plan(cfg, &plan, &id);
        let streams = PathBuf::from("streams").join(format!("{id}.jsonl"));
        let annotations = PathBuf::from("annotations").join(format!("{id}.jsonl"));
        save_streams(&out_dir.join(&streams), &id, inter.duration_ms, &inter.samples)?;
        save_annotations(&out_dir.join(&annotations), &inter.tracks)?;
        entries.push(ManifestEntry {
            id,
            streams,
            annotations,
            multiparty: inter.multiparty,
            duration_ms: inter.duration_ms,
        });
    }
    let cfg_path = out_dir.join("generator.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(&cfg_path, e))?;
    let manifest = Manifest::new(entries);
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_feasible() {
        let plan = GeneratorConfig::default().validate(&FeatureLayout::standard()).unwrap();
        assert!(plan.engaged_mean_s > 3.0);
        assert!((plan.implied_segments - 6.0).abs() < 3.0, "{}", plan.implied_segments);
    }

    #[test]
    fn unreachable_fraction_is_rejected() {
        let cfg = GeneratorConfig {
            sed_fraction: 0.6,
            ..Default::default()
        };
        let err = cfg.validate(&FeatureLayout::standard()).unwrap_err();
        assert!(err.to_string().contains("infeasible"), "{err}");
    }

    #[test]
    fn missing_emission_is_rejected() {
        let mut cfg = GeneratorConfig::default();
        cfg.emissions.retain(|e| e.feature != "face.au12");
        let err = cfg.validate(&FeatureLayout::standard()).unwrap_err();
        assert!(err.to_string().contains("face.au12"), "{err}");
    }

    #[test]
    fn truncated_mean_matches_sampling() {
        let d = GammaDuration {
            mean_s: 6.0,
            sd_s: 9.0,
            min_s: 0.5,
            max_s: 60.0,
        };
        let (mean, sd) = d.truncated_moments();
        assert!((mean - 6.0).abs() < 1e-9, "{mean}");
        assert!(sd > 5.0 && sd < 9.0, "{sd}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let g = d.sampler();
        let m = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - mean).abs() < 0.1, "{m} vs {mean}");
    }

    #[test]
    fn truth_segments_are_ordered_and_inside() {
        let cfg = GeneratorConfig::default();
        for i in 0..20 {
            let x = generate_labels(&cfg, &interaction_id(i)).unwrap();
            let mut prev = 0;
            for &(s, e) in &x.truth {
                assert!(s >= prev && e > s && e <= x.duration_ms);
                prev = e;
            }
            for t in &x.tracks {
                t.validate().unwrap();
            }
        }
    }
}
