//! Synthetic datasets with known injected delays, and the brute-force
//! grid-search delay estimator used as an oracle for learned delays.
//!
//! Features are independent band-limited channels. Labels are a fixed smooth
//! map of the features ([`latent_map`]) delayed by a region-dependent amount:
//! with `K` delays, every label sample belongs to one of `K` equal-population
//! bands of the region channel's value at that time, and takes the latent
//! signal delayed by that band's delay.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{apply_delay, SampledSignal};
use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSequence, Partition, Recording, Task};
use crate::metrics::CccStats;

/// Parameters of a synthetic delay task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_recordings: usize,
    /// Recording `i` belongs to speaker `i % n_speakers`.
    pub n_speakers: usize,
    /// The last `dev_speakers` speakers are tagged as the dev partition.
    #[serde(default = "one")]
    pub dev_speakers: usize,
    pub duration_s: f64,
    pub fs: f64,
    pub feature_dim: usize,
    /// Upper band edge of every feature channel, Hz.
    pub label_bandwidth_hz: f64,
    /// Amplitude of feature spectral component `k` scales as `k^-slope`.
    #[serde(default)]
    pub spectral_slope: f64,
    /// One delay per region, in seconds.
    pub delays: Vec<f64>,
    /// Feature channel whose value selects the region.
    #[serde(default)]
    pub region_channel: usize,
    pub noise_std: f64,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_recordings: 8,
            n_speakers: 4,
            dev_speakers: 1,
            duration_s: 60.0,
            fs: 25.0,
            feature_dim: 4,
            label_bandwidth_hz: 0.1,
            spectral_slope: 1.0,
            delays: vec![2.0],
            region_channel: 0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_recordings == 0 || self.n_speakers == 0 || self.feature_dim == 0 {
            return bad("recordings, speakers and feature_dim must be >= 1".into());
        }
        if self.n_speakers > self.n_recordings {
            return bad("more speakers than recordings".into());
        }
        if self.dev_speakers >= self.n_speakers && self.dev_speakers > 0 {
            return bad("dev speakers must leave at least one training speaker".into());
        }
        if !(self.fs.is_finite() && self.fs > 0.0 && self.duration_s > 0.0) {
            return bad("fs and duration must be positive".into());
        }
        if !(self.label_bandwidth_hz > 0.0 && self.label_bandwidth_hz < self.fs / 2.0) {
            return bad(format!(
                "bandwidth {} Hz must lie in (0, fs/2)",
                self.label_bandwidth_hz
            ));
        }
        if self.delays.is_empty() {
            return bad("at least one delay is required".into());
        }
        let limit = self.duration_s / 4.0;
        if let Some(t) = self.delays.iter().find(|t| !(t.abs() < limit)) {
            return bad(format!("delay {t} s must be below duration/4 = {limit} s"));
        }
        if self.region_channel >= self.feature_dim {
            return bad("region channel out of range".into());
        }
        if !self.spectral_slope.is_finite() {
            return bad("spectral_slope must be finite".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground truth stored alongside a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub spec: SynthSpec,
    /// Region index of every label sample, per recording.
    pub regions: Vec<Vec<u8>>,
}

impl SynthMetadata {
    pub fn delays(&self) -> &[f64] {
        &self.spec.delays
    }

    /// Samples of recording `rec` that belong to region `k`.
    pub fn region_mask(&self, rec: usize, k: usize) -> Vec<bool> {
        self.regions[rec].iter().map(|&r| r as usize == k).collect()
    }
}

/// Zero-mean, unit-variance sum of sinusoids on the DFT grid of the signal
/// length, restricted to frequencies strictly below `band_hz`, with uniform
/// random phases and equal amplitudes. All power lies below the band edge.
pub fn gen_bandlimited(seed: u64, len: usize, fs: f64, band_hz: f64) -> Result<SampledSignal> {
    gen_bandlimited_sloped(seed, len, fs, band_hz, 0.0)
}

/// Like [`gen_bandlimited`], with the amplitude of DFT bin `k` proportional
/// to `k^-slope` (1 gives a pink-like spectrum dominated by slow components).
pub fn gen_bandlimited_sloped(seed: u64, len: usize, fs: f64, band_hz: f64, slope: f64) -> Result<SampledSignal> {
    if !(band_hz > 0.0 && band_hz < fs / 2.0) {
        return Err(Error::InvalidBand(format!(
            "band {band_hz} Hz must lie in (0, fs/2 = {})",
            fs / 2.0
        )));
    }
    if len < 2 {
        return Err(Error::InvalidBand("at least two samples required".into()));
    }
    let duration = len as f64 / fs;
    let bins: Vec<usize> = (1..len / 2).take_while(|&k| (k as f64) / duration < band_hz).collect();
    if bins.is_empty() {
        return Err(Error::InvalidBand(format!(
            "no frequency component of a {duration} s signal lies below {band_hz} Hz"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<(f64, f64, f64)> = bins
        .iter()
        .map(|&k| {
            let phase = rng.gen_range(0.0..2.0 * PI);
            let amp = (k as f64).powf(-slope);
            (2.0 * PI * k as f64 / len as f64, amp * phase.cos(), amp * phase.sin())
        })
        .collect();
    let mut values: Vec<f64> = (0..len)
        .map(|t| {
            comps
                .iter()
                .map(|&(w, a, b)| {
                    let ph = w * t as f64;
                    a * ph.cos() + b * ph.sin()
                })
                .sum()
        })
        .collect();
    let n = len as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut values {
        *v = (*v - mean) / std;
    }
    SampledSignal::new(values, fs)
}

/// Per-channel output weights of [`latent_map`].
pub fn latent_weights(dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|c| {
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign / (1.0 + 0.5 * c as f64)
        })
        .collect()
}

/// The fixed smooth map from features to undelayed labels:
/// `g[t] = sum_c w_c * tanh(x_c[t])`.
pub fn latent_map(features: &FeatureSequence) -> SampledSignal {
    let w = latent_weights(features.dims());
    let values = (0..features.len())
        .map(|t| {
            features
                .row(t)
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x.tanh())
                .sum()
        })
        .collect();
    SampledSignal::new(values, features.fs()).expect("finite features give finite latent values")
}

/// Region index (equal-population bands of `channel`) for every sample.
fn region_indices(channel: &[f64], k: usize) -> Vec<u8> {
    if k == 1 {
        return vec![0; channel.len()];
    }
    let mut sorted = channel.to_vec();
    sorted.sort_by(f64::total_cmp);
    let thresholds: Vec<f64> = (1..k).map(|i| sorted[i * sorted.len() / k]).collect();
    channel
        .iter()
        .map(|v| thresholds.iter().filter(|&&th| *v >= th).count() as u8)
        .collect()
}

fn delay_half_len(delays: &[f64], fs: f64) -> usize {
    let max = delays.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    (max * fs).ceil() as usize + 1 + (2.0 * fs).ceil() as usize
}

/// Generates a dataset whose labels are the latent map of the features,
/// delayed per region, plus Gaussian noise.
pub fn gen_multi_delay_task(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.delays.len() > u8::MAX as usize {
        return Err(Error::InvalidConfig("too many regions".into()));
    }
    let len = spec.samples();
    let half_len = delay_half_len(&spec.delays, spec.fs);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut recordings = Vec::with_capacity(spec.n_recordings);
    let mut regions = Vec::with_capacity(spec.n_recordings);
    let first_dev = spec.n_speakers - spec.dev_speakers;

    for i in 0..spec.n_recordings {
        let speaker_idx = i % spec.n_speakers;
        let speaker = format!("spk{speaker_idx}");
        let channels = (0..spec.feature_dim)
            .map(|_| {
                gen_bandlimited_sloped(rng.gen(), len, spec.fs, spec.label_bandwidth_hz, spec.spectral_slope)
                    .map(SampledSignal::into_values)
            })
            .collect::<Result<Vec<_>>>()?;
        let features = FeatureSequence::from_channels(&channels, spec.fs, speaker)?;
        let latent = latent_map(&features);
        let delayed = spec
            .delays
            .iter()
            .map(|&tau| apply_delay(&latent, tau, spec.fs / 2.0, half_len))
            .collect::<Result<Vec<_>>>()?;
        let region = region_indices(&channels[spec.region_channel], spec.delays.len());
        let labels: Vec<f64> = (0..len)
            .map(|n| {
                let clean = delayed[region[n] as usize].values()[n];
                if spec.noise_std > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    clean + spec.noise_std * z
                } else {
                    clean
                }
            })
            .collect();
        let partition = if speaker_idx >= first_dev {
            Partition::Dev
        } else {
            Partition::Train
        };
        let labels = SampledSignal::new(labels, spec.fs)?;
        recordings.push(Recording::new(format!("rec{i:03}"), features, labels, partition)?);
        regions.push(region);
    }
    let mut ds = Dataset::new(Task::Synthetic, recordings)?;
    ds.meta = Some(SynthMetadata {
        spec: spec.clone(),
        regions,
    });
    Ok(ds)
}

/// Single-delay special case of [`gen_multi_delay_task`].
pub fn gen_single_delay_task(spec: &SynthSpec) -> Result<Dataset> {
    if spec.delays.len() != 1 {
        return Err(Error::InvalidConfig(format!(
            "single-delay task needs exactly one delay, got {}",
            spec.delays.len()
        )));
    }
    gen_multi_delay_task(spec)
}

/// Candidate delays `lo, lo + step, ...` up to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for DelayGrid {
    /// 0 to 6 s in 0.4 s steps.
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 6.0,
            step: 0.4,
        }
    }
}

impl DelayGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.lo.is_finite() && self.hi.is_finite()) || self.hi < self.lo {
            return Err(Error::EmptyGrid);
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| {
                let v = self.lo + i as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .collect())
    }
}

/// A candidate-delay curve: pairs of (delay, mean CCC).
pub type DelayCurve = Vec<(f64, f64)>;

/// Mean over pairs of `ccc(shift(x, tau), y)` for every grid delay. Samples
/// touched by the zero padding of the largest shift are excluded, as are
/// samples outside the optional mask.
pub fn delay_curve(
    pairs: &[(&SampledSignal, &SampledSignal, Option<&[bool]>)],
    grid: &DelayGrid,
) -> Result<DelayCurve> {
    let points = grid.points()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("signal pairs"));
    }
    let mut curve: DelayCurve = points.iter().map(|&t| (t, 0.0)).collect();
    for (x, y, mask) in pairs {
        if x.fs() != y.fs() {
            return Err(Error::InvalidParameter(format!(
                "sampling rates differ: {} vs {}",
                x.fs(),
                y.fs()
            )));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let fs = x.fs();
        let half_len = (grid.lo.abs().max(grid.hi.abs()) * fs).ceil() as usize + 1;
        let head = (grid.hi.max(0.0) * fs).ceil() as usize;
        let tail = (-grid.lo).max(0.0) * fs;
        let tail = tail.ceil() as usize;
        let keep: Vec<bool> = (0..x.len())
            .map(|n| n >= head && n + tail < x.len() && mask.map_or(true, |m| m[n]))
            .collect();
        let ys: Vec<f64> = (0..y.len()).filter(|&n| keep[n]).map(|n| y.values()[n]).collect();
        if ys.len() < 2 {
            return Err(Error::MaskTooSmall(ys.len()));
        }
        for (tau, acc) in curve.iter_mut() {
            let shifted = apply_delay(x, *tau, fs / 2.0, half_len)?;
            let xs: Vec<f64> = (0..x.len())
                .filter(|&n| keep[n])
                .map(|n| shifted.values()[n])
                .collect();
            *acc += CccStats::from_slices(&ys, &xs).ccc();
        }
    }
    let n = pairs.len() as f64;
    for (_, acc) in curve.iter_mut() {
        *acc /= n;
    }
    Ok(curve)
}

/// Delay of the curve maximum, smallest delay on ties.
pub fn curve_argmax(curve: &[(f64, f64)]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(t, c) in curve {
        if best.map_or(true, |(_, b)| c > b) {
            best = Some((t, c));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::EmptyGrid)
}

/// Grid delay maximizing `ccc(shift(x, tau), y)`.
pub fn brute_force_delay(x: &SampledSignal, y: &SampledSignal, grid_lo: f64, grid_hi: f64, step: f64) -> Result<f64> {
    let grid = DelayGrid {
        lo: grid_lo,
        hi: grid_hi,
        step,
    };
    curve_argmax(&delay_curve(&[(x, y, None)], &grid)?)
}
