//! Full-sequence training of an [`MdsModel`] by maximizing mean CCC.
//!
//! Every training recording is one sample: each epoch visits the training
//! partition in a shuffled order and takes one Adam step per recording.
//! After every epoch the mean CCC over the dev partition is recorded and the
//! best-scoring snapshot kept. Several restarts run with disjoint random
//! streams and the restart with the highest best dev CCC wins.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, Partition, Recording};
use crate::metrics::ccc_slice;
use crate::net::{init_model, MdsConfig, MdsModel};
use crate::optim::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning rate for the delays; `None` uses `lr`.
    #[serde(default)]
    pub tau_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Keep the delays at their initial values.
    #[serde(default)]
    pub freeze_taus: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            tau_lr: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 300,
            restarts: 3,
            seed: 0,
            freeze_taus: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if let Some(t) = self.tau_lr {
            if !(t.is_finite() && t >= 0.0) {
                return bad(format!("tau_lr must be non-negative, got {t}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("Adam eps must be positive".into());
        }
        if self.epochs == 0 || self.restarts == 0 {
            return bad("epochs and restarts must be >= 1".into());
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// History and best snapshot of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub restart: usize,
    /// Mean training loss per epoch, measured before each update.
    pub train_loss: Vec<f64>,
    /// Mean training CCC per epoch, measured before each update.
    pub train_ccc: Vec<f64>,
    /// Mean dev CCC after each epoch.
    pub val_ccc: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_ccc: f64,
    /// Delays of the best snapshot, in seconds.
    pub best_taus: Vec<f64>,
    /// Delays after the last epoch, in seconds.
    pub final_taus: Vec<f64>,
    pub model: MdsModel,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Index of the highest value, earliest on ties.
pub fn select_best_epoch(val_ccc: &[f64]) -> Result<usize> {
    if val_ccc.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let mut best = 0;
    for (i, &v) in val_ccc.iter().enumerate().skip(1) {
        if v > val_ccc[best] || (val_ccc[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    Ok(best)
}

/// Mean CCC of a model's predictions over recordings.
pub fn mean_ccc<'a>(model: &MdsModel, recs: impl IntoIterator<Item = &'a Recording>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in recs {
        let y = model.predict(&r.features)?;
        sum += ccc_slice(r.labels.values(), y.values())?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPartition("no recordings to evaluate".into()));
    }
    Ok(sum / n as f64)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn split(dataset: &Dataset) -> Result<(Vec<&Recording>, Vec<&Recording>)> {
    let train: Vec<&Recording> = dataset.partition(Partition::Train).collect();
    let dev: Vec<&Recording> = dataset.partition(Partition::Dev).collect();
    if train.is_empty() {
        return Err(Error::EmptyPartition("train".into()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyPartition("dev".into()));
    }
    Ok((train, dev))
}

/// Runs restart `restart` alone. Its random stream depends only on
/// `(train_config.seed, restart)`.
pub fn train_restart(
    dataset: &Dataset,
    mds_config: &MdsConfig,
    train_config: &TrainConfig,
    restart: usize,
) -> Result<RunRecord> {
    train_config.validate()?;
    let (train, dev) = split(dataset)?;
    let mut rng = restart_rng(train_config.seed, restart);
    let mut model = init_model(mds_config, rng.gen())?;
    run_epochs(&mut model, &train, &dev, train_config, restart, &mut rng)
}

fn run_epochs(
    model: &mut MdsModel,
    train: &[&Recording],
    dev: &[&Recording],
    cfg: &TrainConfig,
    restart: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RunRecord> {
    let n_conv = model.num_conv_params();
    let n_tau = model.taus.len();
    let net_adam = cfg.adam(cfg.lr);
    let tau_adam = cfg.adam(if cfg.freeze_taus { 0.0 } else { cfg.tau_lr.unwrap_or(cfg.lr) });
    let mut net_state = AdamState::new(n_conv);
    let mut tau_state = AdamState::new(n_tau);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut train_ccc = Vec::with_capacity(cfg.epochs);
    let mut val_ccc = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, MdsModel)> = None;
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut ccc_sum = 0.0;
        for &i in &order {
            let rec = train[i];
            let trace = model.forward(&rec.features)?;
            let loss = model.loss_from_trace(&trace, &rec.labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, restart });
            }
            loss_sum += loss;
            ccc_sum += ccc_slice(rec.labels.values(), &trace.y)?;

            let grads = model.backward(&rec.features, &rec.labels, &trace)?.flatten();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, restart });
            }
            step += 1;
            let mut params = model.flatten_params();
            let (net_p, tau_p) = params.split_at_mut(n_conv);
            adam_step(net_p, &grads[..n_conv], &mut net_state, step, &net_adam)?;
            adam_step(tau_p, &grads[n_conv..], &mut tau_state, step, &tau_adam)?;
            model.load_params(&params)?;
            model.clamp_taus();
        }
        let n = train.len() as f64;
        train_loss.push(loss_sum / n);
        train_ccc.push(ccc_sum / n);

        let v = mean_ccc(model, dev.iter().copied())?;
        if !v.is_finite() {
            return Err(Error::Diverged { epoch, restart });
        }
        val_ccc.push(v);
        if best.as_ref().map_or(true, |(_, b, _)| v > *b) {
            best = Some((epoch, v, model.clone()));
        }
    }

    let (best_epoch, best_val_ccc, best_model) = best.expect("epochs >= 1");
    debug_assert_eq!(select_best_epoch(&val_ccc).ok(), Some(best_epoch));
    Ok(RunRecord {
        restart,
        train_loss,
        train_ccc,
        val_ccc,
        best_epoch,
        best_val_ccc,
        best_taus: best_model.taus.clone(),
        final_taus: model.taus.clone(),
        model: best_model,
    })
}

/// Trains every restart and returns all records in restart order. Restarts
/// that diverge are reported as errors in their slot.
pub fn train_all(
    dataset: &Dataset,
    mds_config: &MdsConfig,
    train_config: &TrainConfig,
) -> Result<Vec<Result<RunRecord>>> {
    train_config.validate()?;
    mds_config.validate()?;
    split(dataset)?;
    Ok((0..train_config.restarts)
        .into_par_iter()
        .map(|k| train_restart(dataset, mds_config, train_config, k))
        .collect())
}

/// Trains all restarts and keeps the one with the highest best dev CCC
/// (lowest restart index on ties). Fails only if every restart fails.
pub fn train(dataset: &Dataset, mds_config: &MdsConfig, train_config: &TrainConfig) -> Result<RunRecord> {
    let mut best: Option<RunRecord> = None;
    let mut last_err = None;
    for run in train_all(dataset, mds_config, train_config)? {
        match run {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.best_val_ccc > b.best_val_ccc) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("restarts >= 1"))
}

/// Continues training an existing model, used where the initial model is
/// constructed by hand rather than drawn from a config.
pub fn train_from(
    model: MdsModel,
    dataset: &Dataset,
    train_config: &TrainConfig,
) -> Result<RunRecord> {
    train_config.validate()?;
    model.validate()?;
    let (train, dev) = split(dataset)?;
    let mut rng = restart_rng(train_config.seed, 0);
    let mut model = model;
    run_epochs(&mut model, &train, &dev, train_config, 0, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_epoch_rules() {
        assert_eq!(select_best_epoch(&[0.1, 0.2, 0.3]).unwrap(), 2);
        assert_eq!(select_best_epoch(&[0.5, 0.5, 0.5]).unwrap(), 0);
        assert_eq!(select_best_epoch(&[0.1, 0.4, 0.2, 0.4]).unwrap(), 1);
        assert!(matches!(select_best_epoch(&[]), Err(Error::EmptyRecord)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { lr: -1.0, ..Default::default() },
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { restarts: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
