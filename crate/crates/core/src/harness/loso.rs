use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Scheme;
use super::Predictor;
use crate::error::{Error, Result};
use crate::features::{Dataset, Partition, Recording};
use crate::metrics::ccc_slice;
use crate::net::MdsConfig;
use crate::train::{train, TrainConfig};

/// Speaker assignment of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test: String,
    /// Speaker used for epoch and restart selection. `None` when only two
    /// speakers exist, in which case the training recordings double as
    /// validation data.
    pub val: Option<String>,
    pub train: Vec<String>,
}

/// One fold per speaker, in order of first appearance. The validation
/// speaker of fold `f` is the next speaker after the test speaker,
/// cyclically.
pub fn loso_folds(dataset: &Dataset) -> Result<Vec<Fold>> {
    let speakers = dataset.speakers();
    let n = speakers.len();
    if n < 2 {
        return Err(Error::TooFewSpeakers(n));
    }
    Ok((0..n)
        .map(|f| {
            let val = (n >= 3).then(|| speakers[(f + 1) % n].clone());
            let train = speakers
                .iter()
                .filter(|s| **s != speakers[f] && Some(*s) != val.as_ref())
                .cloned()
                .collect();
            Fold {
                test: speakers[f].clone(),
                val,
                train,
            }
        })
        .collect())
}

/// Copy of `dataset` with partitions reassigned for `fold`.
pub fn fold_dataset(dataset: &Dataset, fold: &Fold) -> Result<Dataset> {
    let mut recs = Vec::with_capacity(dataset.recordings.len());
    for r in &dataset.recordings {
        let s = r.speaker_id();
        let partition = if s == fold.test {
            Partition::Test
        } else if fold.val.as_deref() == Some(s) {
            Partition::Dev
        } else if fold.train.iter().any(|t| t == s) {
            Partition::Train
        } else {
            return Err(Error::UnknownSpeaker(s.to_string()));
        };
        recs.push(Recording {
            partition,
            ..r.clone()
        });
    }
    if fold.val.is_none() {
        let dev: Vec<Recording> = recs
            .iter()
            .filter(|r| r.partition == Partition::Train)
            .map(|r| Recording {
                partition: Partition::Dev,
                ..r.clone()
            })
            .collect();
        recs.extend(dev);
    }
    let mut ds = Dataset::new(dataset.task, recs)?;
    ds.meta = dataset.meta.clone();
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub speaker: String,
    /// Mean CCC over the held-out speaker's recordings.
    pub ccc: f64,
    /// Index of the selected hyperparameter candidate.
    pub choice: usize,
    /// Delays of the selected model.
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoResult {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn score<'a>(model: &dyn Predictor, recs: impl IntoIterator<Item = &'a Recording>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in recs {
        sum += ccc_slice(r.labels.values(), model.predict(&r.features)?.values())?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPartition("test".into()));
    }
    Ok(sum / n as f64)
}

/// Leave-one-speaker-out evaluation of `candidates` hyperparameter choices.
///
/// `fit(fold_dataset, h)` trains candidate `h` on a fold. Every candidate is
/// scored on every fold; fold `f` then reports the candidate with the best
/// mean score over the other folds (all of them when there is one choice).
pub fn loso_cv_with<P, F>(dataset: &Dataset, candidates: usize, fit: F) -> Result<LosoResult>
where
    P: Predictor,
    F: Fn(&Dataset, usize) -> Result<P> + Sync,
{
    if candidates == 0 {
        return Err(Error::EmptyGrid);
    }
    let folds = loso_folds(dataset)?;
    let n = folds.len();
    let cells: Vec<Result<(f64, Vec<f64>)>> = (0..n * candidates)
        .into_par_iter()
        .map(|i| {
            let (f, h) = (i / candidates, i % candidates);
            let ds = fold_dataset(dataset, &folds[f])?;
            let model = fit(&ds, h)?;
            let s = score(&model, ds.partition(Partition::Test))?;
            Ok((s, model.taus()))
        })
        .collect();
    let cells: Vec<(f64, Vec<f64>)> = cells.into_iter().collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(n);
    for (f, fold) in folds.iter().enumerate() {
        let mut choice = 0;
        if candidates > 1 {
            let others = |h: usize| -> f64 {
                (0..n).filter(|&g| g != f).map(|g| cells[g * candidates + h].0).sum::<f64>()
            };
            for h in 1..candidates {
                if others(h) > others(choice) {
                    choice = h;
                }
            }
        }
        let (ccc, taus) = cells[f * candidates + choice].clone();
        out.push(FoldResult {
            speaker: fold.test.clone(),
            ccc,
            choice,
            taus,
        });
    }
    let (mean, std) = mean_std(&out.iter().map(|r| r.ccc).collect::<Vec<_>>());
    Ok(LosoResult { folds: out, mean, std })
}

/// [`loso_cv_with`] training an MDS network per fold and candidate.
pub fn loso_cv(dataset: &Dataset, candidates: &[MdsConfig], train_config: &TrainConfig) -> Result<LosoResult> {
    loso_cv_with(dataset, candidates.len(), |ds, h| {
        train(ds, &candidates[h], train_config).map(|r| r.model)
    })
}

/// Scores of one evaluation: per-fold values for LOSO, a single value for
/// holdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scores: Vec<f64>,
    pub taus: Vec<Vec<f64>>,
}

/// Trains every candidate on the train partition, keeps the one with the
/// best dev CCC and scores it on the test partition, or on dev when there is
/// none.
pub fn holdout_eval(dataset: &Dataset, candidates: &[MdsConfig], train_config: &TrainConfig) -> Result<Evaluation> {
    if candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let runs: Vec<_> = candidates
        .par_iter()
        .map(|c| train(dataset, c, train_config))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        if r.best_val_ccc > runs[best].best_val_ccc {
            best = i;
        }
    }
    let run = &runs[best];
    let s = if dataset.partition(Partition::Test).next().is_some() {
        score(&run.model, dataset.partition(Partition::Test))?
    } else {
        run.best_val_ccc
    };
    Ok(Evaluation {
        scores: vec![s],
        taus: vec![run.best_taus.clone()],
    })
}

/// Scores `candidates` under `scheme`.
pub fn evaluate(
    dataset: &Dataset,
    candidates: &[MdsConfig],
    train_config: &TrainConfig,
    scheme: Scheme,
) -> Result<Evaluation> {
    match scheme {
        Scheme::Holdout => holdout_eval(dataset, candidates, train_config),
        Scheme::Loso => {
            let r = loso_cv(dataset, candidates, train_config)?;
            Ok(Evaluation {
                scores: r.folds.iter().map(|f| f.ccc).collect(),
                taus: r.folds.into_iter().map(|f| f.taus).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SampledSignal;
    use crate::features::{FeatureSequence, Task};

    fn toy(speakers: &[&str]) -> Dataset {
        let recs = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let x: Vec<f64> = (0..8).map(|t| ((t + i) as f64).sin()).collect();
                let f = FeatureSequence::new(x.clone(), 1, 1.0, *s).unwrap();
                Recording::new(format!("r{i}"), f, SampledSignal::new(x, 1.0).unwrap(), Partition::Train).unwrap()
            })
            .collect();
        Dataset::new(Task::Synthetic, recs).unwrap()
    }

    struct Echo;
    impl Predictor for Echo {
        fn predict(&self, x: &crate::features::FeatureSequence) -> Result<SampledSignal> {
            SampledSignal::new(x.channel(0), x.fs())
        }
    }

    #[test]
    fn three_speaker_folds_by_hand() {
        let ds = toy(&["a", "b", "c", "a"]);
        let folds = loso_folds(&ds).unwrap();
        let expect = [("a", "b", "c"), ("b", "c", "a"), ("c", "a", "b")];
        assert_eq!(folds.len(), 3);
        for (f, (t, v, tr)) in folds.iter().zip(expect) {
            assert_eq!(f.test, t);
            assert_eq!(f.val.as_deref(), Some(v));
            assert_eq!(f.train, vec![tr.to_string()]);
        }
        let parts: Vec<Partition> = fold_dataset(&ds, &folds[0])
            .unwrap()
            .recordings
            .iter()
            .map(|r| r.partition)
            .collect();
        assert_eq!(parts, vec![Partition::Test, Partition::Dev, Partition::Train, Partition::Test]);
    }

    #[test]
    fn two_speakers_reuse_train_for_validation() {
        let ds = toy(&["a", "b"]);
        let folds = loso_folds(&ds).unwrap();
        assert_eq!(folds[1].val, None);
        assert_eq!(folds[1].train, vec!["a".to_string()]);
        let fd = fold_dataset(&ds, &folds[1]).unwrap();
        assert_eq!(fd.partition(Partition::Dev).count(), 1);
        assert_eq!(fd.partition(Partition::Dev).next().unwrap().speaker_id(), "a");
    }

    #[test]
    fn single_speaker_rejected() {
        assert!(matches!(loso_folds(&toy(&["a", "a"])), Err(Error::TooFewSpeakers(1))));
    }

    #[test]
    fn perfect_stub_scores_one() {
        let ds = toy(&["a", "b", "c", "d"]);
        let r = loso_cv_with(&ds, 1, |_, _| Ok(Echo)).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert!(r.folds.iter().all(|f| (f.ccc - 1.0).abs() < 1e-12));
        assert!(r.std < 1e-12);
    }

    #[test]
    fn nested_choice_uses_other_folds() {
        struct Scaled(f64);
        impl Predictor for Scaled {
            fn predict(&self, x: &crate::features::FeatureSequence) -> Result<SampledSignal> {
                SampledSignal::new(x.channel(0).iter().map(|v| v * self.0).collect(), x.fs())
            }
        }
        let ds = toy(&["a", "b", "c"]);
        // candidate 1 is exact, candidate 0 halves the amplitude
        let r = loso_cv_with(&ds, 2, |_, h| Ok(Scaled(if h == 1 { 1.0 } else { 0.5 }))).unwrap();
        assert!(r.folds.iter().all(|f| f.choice == 1));
    }
}
