//! On-disk formats: stream files, annotation files and the corpus manifest.
//!
//! Stream and annotation files are newline-delimited JSON with a leading
//! header record carrying a `schema` field.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{Affect, AnnotationTrack, Cue, Segment};
use crate::error::{Error, Result};
use crate::layout::{FeatureLayout, StreamId};
use crate::scalar::Real;
use crate::stream::StreamSample;

pub const STREAM_SCHEMA: &str = "sedet.streams/1";
pub const ANNOTATION_SCHEMA: &str = "sedet.annotations/1";
pub const MANIFEST_SCHEMA: &str = "sedet.manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub schema: String,
    pub interaction: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StreamRecord {
    t_ms: u64,
    stream: String,
    values: Vec<Option<f64>>,
}

/// Contents of one stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile<T> {
    pub interaction: String,
    pub duration_ms: u64,
    pub samples: Vec<StreamSample<T>>,
}

fn format_err(location: impl Into<String>, detail: impl ToString) -> Error {
    Error::Format {
        location: location.into(),
        detail: detail.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn write_json_line<W: Write, S: Serialize>(w: &mut W, value: &S, path: &str) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn write_streams<T: Real, W: Write>(
    w: &mut W,
    interaction: &str,
    duration_ms: u64,
    samples: &[StreamSample<T>],
) -> Result<()> {
    let header = StreamHeader {
        schema: STREAM_SCHEMA.into(),
        interaction: interaction.into(),
        duration_ms,
    };
    write_json_line(w, &header, interaction)?;
    for s in samples {
        let rec = StreamRecord {
            t_ms: s.timestamp_ms,
            stream: s.stream.as_str().into(),
            values: s.values.iter().map(|v| v.is_finite().then(|| v.f64())).collect(),
        };
        write_json_line(w, &rec, interaction)?;
    }
    Ok(())
}

pub fn save_streams<T: Real>(path: &Path, interaction: &str, duration_ms: u64, samples: &[StreamSample<T>]) -> Result<()> {
    let mut w = create(path)?;
    write_streams(&mut w, interaction, duration_ms, samples)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Incremental reader over a stream file, validating each record against
/// the layout as it is read.
pub struct StreamReader<R, T> {
    lines: std::iter::Enumerate<std::io::Lines<R>>,
    source: String,
    layout: FeatureLayout,
    pub header: StreamHeader,
    _marker: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: Real> StreamReader<R, T> {
    pub fn new(reader: R, source: &str, layout: &FeatureLayout) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let first = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(source, e))?,
            None => return Err(format_err(format!("{source}:1"), "empty stream file")),
        };
        let header: StreamHeader =
            serde_json::from_str(&first).map_err(|e| format_err(format!("{source}:1"), e))?;
        if header.schema != STREAM_SCHEMA {
            return Err(format_err(
                format!("{source}:1"),
                format!("expected schema {STREAM_SCHEMA}, got {}", header.schema),
            ));
        }
        Ok(StreamReader {
            lines,
            source: source.into(),
            layout: layout.clone(),
            header,
            _marker: std::marker::PhantomData,
        })
    }

    fn parse(&self, line_no: usize, line: &str) -> Result<StreamSample<T>> {
        let loc = || format!("{}:{}", self.source, line_no + 1);
        let rec: StreamRecord = serde_json::from_str(line).map_err(|e| format_err(loc(), e))?;
        let stream: StreamId = rec.stream.parse()?;
        let expected = self.layout.stream_dim(stream)?;
        if rec.values.len() != expected {
            return Err(Error::Dimension {
                stream: stream.to_string(),
                expected,
                got: rec.values.len(),
            });
        }
        Ok(StreamSample {
            timestamp_ms: rec.t_ms,
            stream,
            values: rec.values.iter().map(|v| v.map_or(T::nan(), T::c)).collect(),
        })
    }
}

impl<R: BufRead, T: Real> Iterator for StreamReader<R, T> {
    type Item = Result<StreamSample<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (no, line) = self.lines.next()?;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.source, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(no, &line));
        }
    }
}

pub fn open_streams<T: Real>(path: &Path, layout: &FeatureLayout) -> Result<StreamReader<BufReader<File>, T>> {
    StreamReader::new(open(path)?, &path.display().to_string(), layout)
}

pub fn read_streams<T: Real, R: BufRead>(reader: R, source: &str, layout: &FeatureLayout) -> Result<StreamFile<T>> {
    let r = StreamReader::new(reader, source, layout)?;
    let interaction = r.header.interaction.clone();
    let duration_ms = r.header.duration_ms;
    let samples = r.collect::<Result<Vec<_>>>()?;
    Ok(StreamFile {
        interaction,
        duration_ms,
        samples,
    })
}

pub fn load_streams<T: Real>(path: &Path, layout: &FeatureLayout) -> Result<StreamFile<T>> {
    read_streams(open(path)?, &path.display().to_string(), layout)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationHeader {
    pub schema: String,
    pub interaction: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub multiparty: bool,
    /// Every annotator, including those without segments.
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AnnotationRecord {
    annotator: String,
    interaction: String,
    start_ms: u64,
    end_ms: u64,
    label: String,
    cues: Vec<Cue>,
    affects: Vec<Affect>,
    cause: Option<String>,
}

/// Writes all tracks of one interaction. Tracks must share bounds.
pub fn write_annotations<W: Write>(w: &mut W, tracks: &[AnnotationTrack]) -> Result<()> {
    let first = tracks
        .first()
        .ok_or_else(|| Error::Invalid("no annotation tracks to write".into()))?;
    if tracks
        .iter()
        .any(|t| t.interaction != first.interaction || t.start_ms != first.start_ms || t.end_ms != first.end_ms)
    {
        return Err(Error::Invalid(format!(
            "tracks of {} disagree on interaction bounds",
            first.interaction
        )));
    }
    let header = AnnotationHeader {
        schema: ANNOTATION_SCHEMA.into(),
        interaction: first.interaction.clone(),
        start_ms: first.start_ms,
        end_ms: first.end_ms,
        multiparty: first.multiparty,
        annotators: tracks.iter().map(|t| t.annotator.clone()).collect(),
    };
    write_json_line(w, &header, &first.interaction)?;
    for t in tracks {
        for s in &t.segments {
            let rec = AnnotationRecord {
                annotator: t.annotator.clone(),
                interaction: t.interaction.clone(),
                start_ms: s.start_ms,
                end_ms: s.end_ms,
                label: "SED".into(),
                cues: s.cues.clone(),
                affects: s.affects.clone(),
                cause: s.cause.clone(),
            };
            write_json_line(w, &rec, &t.interaction)?;
        }
    }
    Ok(())
}

pub fn save_annotations(path: &Path, tracks: &[AnnotationTrack]) -> Result<()> {
    let mut w = create(path)?;
    write_annotations(&mut w, tracks)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates the tracks of one interaction, in header order.
pub fn read_annotations<R: BufRead>(reader: R, source: &str) -> Result<Vec<AnnotationTrack>> {
    let mut header: Option<AnnotationHeader> = None;
    let mut tracks: Vec<AnnotationTrack> = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{source}:{}", no + 1);
        let Some(h) = &header else {
            let h: AnnotationHeader = serde_json::from_str(&line).map_err(|e| format_err(loc(), e))?;
            if h.schema != ANNOTATION_SCHEMA {
                return Err(format_err(loc(), format!("expected schema {ANNOTATION_SCHEMA}, got {}", h.schema)));
            }
            tracks = h
                .annotators
                .iter()
                .map(|a| AnnotationTrack {
                    annotator: a.clone(),
                    interaction: h.interaction.clone(),
                    start_ms: h.start_ms,
                    end_ms: h.end_ms,
                    multiparty: h.multiparty,
                    segments: Vec::new(),
                })
                .collect();
            header = Some(h);
            continue;
        };
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| format_err(loc(), e))?;
        if rec.label != "SED" {
            return Err(format_err(loc(), format!("unsupported label `{}`", rec.label)));
        }
        if rec.interaction != h.interaction {
            return Err(format_err(
                loc(),
                format!("record for {} in file of {}", rec.interaction, h.interaction),
            ));
        }
        let track = tracks
            .iter_mut()
            .find(|t| t.annotator == rec.annotator)
            .ok_or_else(|| format_err(loc(), format!("annotator `{}` not declared in header", rec.annotator)))?;
        track.segments.push(Segment {
            start_ms: rec.start_ms,
            end_ms: rec.end_ms,
            cues: rec.cues,
            affects: rec.affects,
            cause: rec.cause,
        });
    }
    if header.is_none() {
        return Err(format_err(format!("{source}:1"), "empty annotation file"));
    }
    for t in &mut tracks {
        t.segments.sort_by_key(|s| s.start_ms);
        t.validate()?;
    }
    Ok(tracks)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationTrack>> {
    read_annotations(open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Paths relative to the manifest's directory.
    pub streams: PathBuf,
    pub annotations: PathBuf,
    pub multiparty: bool,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub interactions: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(interactions: Vec<ManifestEntry>) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.into(),
            interactions,
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.interactions.iter().map(|e| e.id.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| format_err(path.display().to_string(), e))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(format_err(
                path.display().to_string(),
                format!("expected schema {MANIFEST_SCHEMA}, got {}", m.schema),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = m.interactions.iter().find(|e| !seen.insert(&e.id)) {
            return Err(format_err(path.display().to_string(), format!("duplicate interaction id {}", dup.id)));
        }
        Ok(m)
    }
}

/// Resolves the manifest file inside a corpus directory, or accepts the file itself.
pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.json")
    } else {
        data.to_path_buf()
    }
}
