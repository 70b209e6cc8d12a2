//! Feature matrices, label traces and datasets: CSV loading and saving, frame
//! stacking, per-speaker z-normalization and target/partner interleaving.
//!
//! Feature files start with a header line `# fs=<Hz> dims=<D> speaker=<id>`
//! followed by one comma-separated frame per line. Label files start with
//! `# fs=<Hz>` followed by one value per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::SampledSignal;
use crate::error::{Error, Result};
use crate::synth::SynthMetadata;

/// Guard on the per-dimension standard deviation in [`znorm_per_speaker`].
pub const ZNORM_EPS: f64 = 1e-8;

/// A `T x D` matrix of frames stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    frames: Vec<f64>,
    dims: usize,
    fs: f64,
    speaker_id: String,
}

impl FeatureSequence {
    pub fn new(frames: Vec<f64>, dims: usize, fs: f64, speaker_id: impl Into<String>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
        }
        if frames.is_empty() {
            return Err(Error::EmptyInput("feature frames"));
        }
        if frames.len() % dims != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of width {dims}",
                frames.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!("frame rate must be positive, got {fs}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite feature value".into()));
        }
        Ok(Self {
            frames,
            dims,
            fs,
            speaker_id: speaker_id.into(),
        })
    }

    /// Builds a sequence from per-channel signals of equal length.
    pub fn from_channels(channels: &[Vec<f64>], fs: f64, speaker_id: impl Into<String>) -> Result<Self> {
        let dims = channels.len();
        if dims == 0 {
            return Err(Error::InvalidParameter("no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::ShapeMismatch("channels differ in length".into()));
        }
        let mut frames = Vec::with_capacity(len * dims);
        for t in 0..len {
            frames.extend(channels.iter().map(|c| c[t]));
        }
        Self::new(frames, dims, fs, speaker_id)
    }

    pub fn len(&self) -> usize {
        self.frames.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dims..(t + 1) * self.dims]
    }

    /// Copies out one feature dimension as a time series.
    pub fn channel(&self, d: usize) -> Vec<f64> {
        self.frames.iter().skip(d).step_by(self.dims).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Arousal,
    Valence,
    Synthetic,
}

/// Features paired with their label trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub features: FeatureSequence,
    pub labels: SampledSignal,
    pub partition: Partition,
}

impl Recording {
    pub fn new(
        id: impl Into<String>,
        features: FeatureSequence,
        labels: SampledSignal,
        partition: Partition,
    ) -> Result<Self> {
        if features.fs() != labels.fs() {
            return Err(Error::ShapeMismatch(format!(
                "feature rate {} Hz differs from label rate {} Hz",
                features.fs(),
                labels.fs()
            )));
        }
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            features,
            labels,
            partition,
        })
    }

    pub fn speaker_id(&self) -> &str {
        self.features.speaker_id()
    }
}

/// A collection of recordings with optional synthetic ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub recordings: Vec<Recording>,
    pub meta: Option<SynthMetadata>,
}

impl Dataset {
    pub fn new(task: Task, recordings: Vec<Recording>) -> Result<Self> {
        if recordings.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if let Some(r) = recordings.iter().find(|r| r.speaker_id().is_empty()) {
            return Err(Error::UnknownSpeaker(format!("recording {} has no speaker id", r.id)));
        }
        Ok(Self {
            task,
            recordings,
            meta: None,
        })
    }

    /// Distinct speaker ids in order of first appearance.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.recordings {
            if !out.iter().any(|s| s == r.speaker_id()) {
                out.push(r.speaker_id().to_string());
            }
        }
        out
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &Recording> {
        self.recordings.iter().filter(move |r| r.partition == p)
    }

    pub fn input_dim(&self) -> usize {
        self.recordings[0].features.dims()
    }

    pub fn fs(&self) -> f64 {
        self.recordings[0].labels.fs()
    }

    /// Writes `dataset.json` plus one feature and one label CSV per
    /// recording into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.recordings.len());
        for r in &self.recordings {
            let features = format!("{}.features.csv", r.id);
            let labels = format!("{}.labels.csv", r.id);
            write_features(&dir.join(&features), &r.features)?;
            write_labels(&dir.join(&labels), &r.labels)?;
            entries.push(ManifestEntry {
                id: r.id.clone(),
                speaker: r.speaker_id().to_string(),
                partition: r.partition,
                features,
                labels,
            });
        }
        let manifest = Manifest {
            task: self.task,
            recordings: entries,
            meta: self.meta.clone(),
        };
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut recordings = Vec::with_capacity(manifest.recordings.len());
        for e in manifest.recordings {
            let features = load_features(&dir.join(&e.features))?;
            if features.speaker_id() != e.speaker {
                return Err(Error::UnknownSpeaker(format!(
                    "{}: header speaker {} disagrees with manifest speaker {}",
                    e.features,
                    features.speaker_id(),
                    e.speaker
                )));
            }
            let labels = load_labels(&dir.join(&e.labels))?;
            recordings.push(Recording::new(e.id, features, labels, e.partition)?);
        }
        let mut ds = Dataset::new(manifest.task, recordings)?;
        ds.meta = manifest.meta;
        Ok(ds)
    }
}

const MANIFEST_NAME: &str = "dataset.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    task: Task,
    recordings: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<SynthMetadata>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    speaker: String,
    partition: Partition,
    features: String,
    labels: String,
}

fn parse_header(path: &Path, line: &str) -> Result<BTreeMap<String, String>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;
    let mut fields = BTreeMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header token {tok:?} is not key=value"),
        })?;
        fields.insert(k.to_string(), v.to_string());
    }
    Ok(fields)
}

fn header_number<T: std::str::FromStr>(
    path: &Path,
    fields: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = fields
        .get(key)
        .ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad value {raw:?} for {key}"),
    })
}

fn parse_value(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("not a number: {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: "non-finite value".into(),
        });
    }
    Ok(v)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_features(path: &Path, text: &str) -> Result<FeatureSequence> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;
    let fields = parse_header(path, header)?;
    let fs: f64 = header_number(path, &fields, "fs")?;
    let dims: usize = header_number(path, &fields, "dims")?;
    let speaker = fields
        .get("speaker")
        .cloned()
        .ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;

    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let before = frames.len();
        for tok in line.split(',') {
            frames.push(parse_value(path, lineno, tok)?);
        }
        if frames.len() - before != dims {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected {dims} values, found {}", frames.len() - before),
            });
        }
    }
    FeatureSequence::new(frames, dims, fs, speaker)
}

pub fn parse_labels(path: &Path, text: &str) -> Result<SampledSignal> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MissingHeader(path.to_path_buf()))?;
    let fields = parse_header(path, header)?;
    let fs: f64 = header_number(path, &fields, "fs")?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        values.push(parse_value(path, i + 2, line)?);
    }
    SampledSignal::new(values, fs)
}

/// Reads a feature CSV.
pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    parse_features(path, &read_text(path)?)
}

/// Reads a label CSV.
pub fn load_labels(path: &Path) -> Result<SampledSignal> {
    parse_labels(path, &read_text(path)?)
}

pub fn format_features(f: &FeatureSequence) -> String {
    let mut out = format!("# fs={} dims={} speaker={}\n", f.fs, f.dims, f.speaker_id);
    for t in 0..f.len() {
        for (d, v) in f.row(t).iter().enumerate() {
            if d > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn format_labels(s: &SampledSignal) -> String {
    let mut out = format!("# fs={}\n", s.fs());
    for v in s.values() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn write_features(path: &Path, f: &FeatureSequence) -> Result<()> {
    if f.speaker_id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!(
            "speaker id {:?} contains whitespace",
            f.speaker_id
        )));
    }
    fs::write(path, format_features(f)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, s: &SampledSignal) -> Result<()> {
    fs::write(path, format_labels(s)).map_err(|e| Error::io(path, e))
}

/// Concatenates every `k` consecutive frames into one, dividing the frame
/// rate by `k`. A trailing partial group is dropped.
pub fn stack_frames(f: &FeatureSequence, k: usize) -> Result<FeatureSequence> {
    if k == 0 {
        return Err(Error::InvalidParameter("stack size must be >= 1".into()));
    }
    let out_len = f.len() / k;
    if out_len == 0 {
        return Err(Error::InvalidParameter(format!(
            "sequence of {} frames is shorter than the stack size {k}",
            f.len()
        )));
    }
    let width = k * f.dims;
    let frames = f.frames[..out_len * width].to_vec();
    FeatureSequence::new(frames, width, f.fs / k as f64, f.speaker_id.clone())
}

/// Normalizes each feature dimension to zero mean and unit population
/// variance, separately for every speaker.
pub fn znorm_per_speaker(dataset: &Dataset) -> Result<Dataset> {
    let dims = dataset.input_dim();
    let mut stats: BTreeMap<&str, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &dataset.recordings {
        if r.speaker_id().is_empty() {
            return Err(Error::UnknownSpeaker(format!("recording {} has no speaker id", r.id)));
        }
        if r.features.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "recording {} has {} dims, expected {dims}",
                r.id,
                r.features.dims()
            )));
        }
        let entry = stats
            .entry(r.speaker_id())
            .or_insert_with(|| (0, vec![0.0; dims], vec![0.0; dims]));
        entry.0 += r.features.len();
        for t in 0..r.features.len() {
            for (acc, v) in entry.1.iter_mut().zip(r.features.row(t)) {
                *acc += v;
            }
        }
    }
    for (speaker, (n, sum, _)) in stats.iter_mut() {
        if *n < 2 {
            return Err(Error::InvalidParameter(format!(
                "speaker {speaker} has {n} frame(s), at least 2 required"
            )));
        }
        for s in sum.iter_mut() {
            *s /= *n as f64;
        }
    }
    for r in &dataset.recordings {
        let entry = stats.get_mut(r.speaker_id()).expect("speaker collected above");
        for t in 0..r.features.len() {
            for ((acc, mean), v) in entry.2.iter_mut().zip(&entry.1).zip(r.features.row(t)) {
                *acc += (v - mean) * (v - mean);
            }
        }
    }

    let mut out = dataset.clone();
    for r in &mut out.recordings {
        let speaker = r.speaker_id().to_string();
        let (n, mean, sq) = &stats[speaker.as_str()];
        let std: Vec<f64> = sq.iter().map(|s| (s / *n as f64).sqrt()).collect();
        for (i, v) in r.features.frames.iter_mut().enumerate() {
            let d = i % dims;
            *v = if std[d] < ZNORM_EPS {
                0.0
            } else {
                (*v - mean[d]) / std[d]
            };
        }
    }
    Ok(out)
}

/// Builds a `2D`-wide sequence holding the target speaker's frame in the
/// first half where `active_mask` is set and the partner's frame in the
/// second half elsewhere; the inactive half is zero.
pub fn interleave_target(
    target: &FeatureSequence,
    partner: &FeatureSequence,
    active_mask: &[bool],
) -> Result<FeatureSequence> {
    if target.len() != partner.len() || target.dims != partner.dims {
        return Err(Error::ShapeMismatch(format!(
            "target is {}x{}, partner is {}x{}",
            target.len(),
            target.dims,
            partner.len(),
            partner.dims
        )));
    }
    if active_mask.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {} frames",
            active_mask.len(),
            target.len()
        )));
    }
    let d = target.dims;
    let mut frames = vec![0.0; target.len() * 2 * d];
    for (t, &active) in active_mask.iter().enumerate() {
        let row = &mut frames[t * 2 * d..(t + 1) * 2 * d];
        if active {
            row[..d].copy_from_slice(target.row(t));
        } else {
            row[d..].copy_from_slice(partner.row(t));
        }
    }
    FeatureSequence::new(frames, 2 * d, target.fs, target.speaker_id.clone())
}
