//! Experiment orchestration: cross-validation, sweeps, fusion and reports.

mod config;
mod loso;
mod report;
mod sweep;

pub use config::{ExperimentConfig, ModelGrid, Scheme, SweepParam, SweepSpec};
pub use loso::{
    evaluate, fold_dataset, holdout_eval, loso_cv, loso_cv_with, loso_folds, Evaluation, Fold, FoldResult,
    LosoResult,
};
pub use report::{emit_report, load_points, Curve, CurvePoint, Report};
pub use sweep::{
    probe_config, shift_features, sweep_bandwidth, sweep_clusters, sweep_delay, sweep_max_delay, SweepOptions,
};

use crate::dsp::SampledSignal;
use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSequence};
use crate::metrics::{ccc_slice, masked_ccc_slice};
use crate::net::MdsModel;

/// Anything that maps a feature sequence to a label trace.
pub trait Predictor {
    fn predict(&self, x: &FeatureSequence) -> Result<SampledSignal>;

    /// Learned delays in seconds, if the predictor has any.
    fn taus(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Predictor for MdsModel {
    fn predict(&self, x: &FeatureSequence) -> Result<SampledSignal> {
        MdsModel::predict(self, x)
    }

    fn taus(&self) -> Vec<f64> {
        self.taus.clone()
    }
}

/// Elementwise mean of two predictions.
pub fn fuse_predictions(a: &SampledSignal, b: &SampledSignal) -> Result<SampledSignal> {
    if a.fs() != b.fs() {
        return Err(Error::InvalidParameter(format!(
            "sampling rates differ: {} vs {}",
            a.fs(),
            b.fs()
        )));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let v = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
    SampledSignal::new(v, a.fs())
}

/// Full and masked CCC over the concatenation of all recordings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskedEval {
    pub full_ccc: f64,
    pub masked_ccc: f64,
    /// Number of samples selected by the masks.
    pub masked_samples: usize,
}

/// Evaluates `model` on every recording of `dataset`, with `masks[i]`
/// selecting the samples of recording `i` that count towards the masked
/// score.
pub fn eval_masked(dataset: &Dataset, model: &dyn Predictor, masks: &[Vec<bool>]) -> Result<MaskedEval> {
    if masks.len() != dataset.recordings.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks for {} recordings",
            masks.len(),
            dataset.recordings.len()
        )));
    }
    let mut y = Vec::new();
    let mut yhat = Vec::new();
    let mut mask = Vec::new();
    for (r, m) in dataset.recordings.iter().zip(masks) {
        if m.len() != r.labels.len() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: r.labels.len(),
            });
        }
        y.extend_from_slice(r.labels.values());
        yhat.extend(model.predict(&r.features)?.into_values());
        mask.extend_from_slice(m);
    }
    Ok(MaskedEval {
        full_ccc: ccc_slice(&y, &yhat)?,
        masked_ccc: masked_ccc_slice(&y, &yhat, &mask)?,
        masked_samples: mask.iter().filter(|&&b| b).count(),
    })
}

/// Runs `f` on a thread pool of `jobs` workers; `None` uses the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidParameter("jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
