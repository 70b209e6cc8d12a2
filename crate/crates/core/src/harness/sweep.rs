use std::path::PathBuf;

use rayon::prelude::*;

use super::config::Scheme;
use super::loso::evaluate;
use super::report::{cached_point, Curve, CurvePoint};
use crate::dsp::{apply_delay, SampledSignal};
use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSequence, Recording};
use crate::metrics::ccc;
use crate::net::MdsConfig;
use crate::train::TrainConfig;

/// Settings shared by the model-training sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub scheme: Scheme,
    /// Training repeats per point, seeded `train.seed + r`.
    pub repeats: usize,
    /// Output directory whose `points/` subdirectory holds finished points;
    /// existing points are not recomputed.
    pub cache_dir: Option<PathBuf>,
    /// Length of the alignment probe's filter in seconds.
    pub probe_window_s: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Loso,
            repeats: 1,
            cache_dir: None,
            probe_window_s: 2.0,
        }
    }
}

fn run_points(
    name: &str,
    values: &[f64],
    opts: &SweepOptions,
    point: impl Fn(f64) -> Result<CurvePoint> + Sync,
) -> Result<Curve> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let points = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| cached_point(opts.cache_dir.as_deref(), name, i, v, || point(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        name: name.to_string(),
        points,
    })
}

fn repeated(
    parameter: f64,
    dataset: &Dataset,
    candidates: &[MdsConfig],
    train_config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<CurvePoint> {
    if opts.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    let mut scores = Vec::new();
    let mut taus = Vec::new();
    for r in 0..opts.repeats {
        let tc = TrainConfig {
            seed: train_config.seed.wrapping_add(r as u64),
            ..train_config.clone()
        };
        let e = evaluate(dataset, candidates, &tc, opts.scheme)?;
        scores.extend(e.scores);
        taus.extend(e.taus);
    }
    CurvePoint::from_scores(parameter, scores, taus)
}

/// The alignment probe: one trunk filter spanning `window_s` seconds, tanh,
/// a linear output and a single cluster whose delay stays at zero.
pub fn probe_config(input_dim: usize, fs: f64, window_s: f64) -> MdsConfig {
    MdsConfig {
        clusters: 1,
        trunk_layers: 1,
        trunk_filters: 1,
        trunk_kernel_len: ((window_s * fs).round() as usize).max(1),
        fc: fs / 2.0,
        fs,
        sinc_half_len: 1,
        tau_init_lo: 0.0,
        tau_init_hi: 0.0,
        l2: 0.0,
        input_dim,
    }
}

/// Delays every feature channel by `tau` seconds.
pub fn shift_features(f: &FeatureSequence, tau: f64) -> Result<FeatureSequence> {
    let half_len = (tau.abs() * f.fs()).ceil() as usize + 1;
    let channels = (0..f.dims())
        .map(|d| {
            let x = SampledSignal::new(f.channel(d), f.fs())?;
            Ok(apply_delay(&x, tau, f.fs() / 2.0, half_len)?.into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSequence::from_channels(&channels, f.fs(), f.speaker_id())
}

/// For each candidate delay, shifts the features by it, trains the
/// alignment probe and records its score.
pub fn sweep_delay(
    dataset: &Dataset,
    delays: &[f64],
    train_config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Curve> {
    if let Some(d) = delays.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(format!("delay {d} is not finite")));
    }
    if !(opts.probe_window_s.is_finite() && opts.probe_window_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "probe window {} s must be positive",
            opts.probe_window_s
        )));
    }
    let probe = [probe_config(dataset.input_dim(), dataset.fs(), opts.probe_window_s)];
    let tc = TrainConfig {
        freeze_taus: true,
        ..train_config.clone()
    };
    run_points("delay", delays, opts, |d| {
        let recs = dataset
            .recordings
            .iter()
            .map(|r| {
                Ok(Recording {
                    features: shift_features(&r.features, d)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shifted = Dataset {
            recordings: recs,
            ..dataset.clone()
        };
        repeated(d, &shifted, &probe, &tc, opts)
    })
}

/// CCC between each label trace and its zero-delay sinc-filtered version,
/// per cutoff. Scores are per recording.
pub fn sweep_bandwidth(labels: &[SampledSignal], cutoffs: &[f64], half_len: usize) -> Result<Curve> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    if cutoffs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let points = cutoffs
        .par_iter()
        .map(|&fc| {
            let scores = labels
                .iter()
                .map(|y| {
                    if !(fc > 0.0 && fc <= y.fs() / 2.0) {
                        return Err(Error::InvalidParameter(format!(
                            "cutoff {fc} Hz outside (0, {}]",
                            y.fs() / 2.0
                        )));
                    }
                    ccc(y, &apply_delay(y, 0.0, fc, half_len)?)
                })
                .collect::<Result<Vec<_>>>()?;
            CurvePoint::from_scores(fc, scores, Vec::new())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        name: "bandwidth".into(),
        points,
    })
}

/// Scores the candidates with their cluster count set to each value.
pub fn sweep_clusters(
    dataset: &Dataset,
    clusters: &[usize],
    candidates: &[MdsConfig],
    train_config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Curve> {
    if clusters.contains(&0) {
        return Err(Error::InvalidParameter("cluster counts must be >= 1".into()));
    }
    let values: Vec<f64> = clusters.iter().map(|&m| m as f64).collect();
    run_points("clusters", &values, opts, |m| {
        let cs: Vec<MdsConfig> = candidates
            .iter()
            .map(|c| MdsConfig {
                clusters: m as usize,
                ..c.clone()
            })
            .collect();
        repeated(m, dataset, &cs, train_config, opts)
    })
}

/// Scores the candidates with delays initialized in `[lo, tau_max]` and a
/// sinc window just wide enough to hold `tau_max`.
pub fn sweep_max_delay(
    dataset: &Dataset,
    tau_maxs: &[f64],
    candidates: &[MdsConfig],
    train_config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Curve> {
    if let Some(t) = tau_maxs.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidParameter(format!("maximum delay {t} must be positive")));
    }
    run_points("max_delay", tau_maxs, opts, |tmax| {
        let cs: Vec<MdsConfig> = candidates
            .iter()
            .map(|c| MdsConfig {
                tau_init_lo: c.tau_init_lo.min(tmax),
                tau_init_hi: tmax,
                sinc_half_len: (tmax * c.fs).round() as usize + 1,
                ..c.clone()
            })
            .collect();
        repeated(tmax, dataset, &cs, train_config, opts)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_bandlimited, gen_single_delay_task, SynthSpec};

    #[test]
    fn probe_shape() {
        let c = probe_config(4, 25.0, 2.0);
        assert_eq!(c.trunk_kernel_len, 50);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn shift_is_exact_for_whole_samples() {
        let x: Vec<f64> = (0..20).map(|t| t as f64).collect();
        let f = FeatureSequence::from_channels(&[x.clone()], 10.0, "s").unwrap();
        let g = shift_features(&f, 0.3).unwrap();
        let c = g.channel(0);
        assert!(c[..3].iter().all(|v| v.abs() < 1e-12));
        for t in 3..20 {
            assert!((c[t] - x[t - 3]).abs() < 1e-9);
        }
    }

    #[test]
    fn bandwidth_sweep_basics() {
        let y = gen_bandlimited(1, 1500, 25.0, 0.5).unwrap();
        let c = sweep_bandwidth(&[y.clone()], &[12.5, 1.0], 550).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!((c.points[0].ccc_mean - 1.0).abs() < 1e-12);
        assert!(sweep_bandwidth(&[y.clone()], &[], 10).is_err());
        assert!(sweep_bandwidth(&[y.clone()], &[13.0], 10).is_err());
        assert!(sweep_bandwidth(&[y], &[0.0], 10).is_err());
    }

    #[test]
    fn grids_validated() {
        let ds = gen_single_delay_task(&SynthSpec {
            n_recordings: 2,
            n_speakers: 2,
            duration_s: 20.0,
            ..SynthSpec::default()
        })
        .unwrap();
        let c = [probe_config(4, 25.0, 2.0)];
        let tc = TrainConfig::default();
        let o = SweepOptions::default();
        assert!(matches!(sweep_delay(&ds, &[], &tc, &o), Err(Error::EmptyGrid)));
        assert!(sweep_clusters(&ds, &[0], &c, &tc, &o).is_err());
        assert!(sweep_max_delay(&ds, &[-1.0], &c, &tc, &o).is_err());
    }
}
