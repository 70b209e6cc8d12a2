#![allow(dead_code)]

use delaysinc::net::MdsModel;
use delaysinc::train::TrainConfig;
use delaysinc::{init_model, FeatureSequence, MdsConfig, SampledSignal, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Central differences of `f` at `x`.
pub fn fd_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn tiny_config(clusters: usize) -> MdsConfig {
    MdsConfig {
        clusters,
        trunk_layers: 2,
        trunk_filters: 3,
        trunk_kernel_len: 3,
        fc: 5.0,
        fs: 25.0,
        sinc_half_len: 12,
        tau_init_lo: 0.0,
        tau_init_hi: 0.3,
        l2: 1e-3,
        input_dim: 2,
    }
}

/// A random length-32 problem for a two-cluster model.
pub fn tiny_problem(seed: u64) -> (MdsModel, FeatureSequence, SampledSignal) {
    let cfg = tiny_config(2);
    let mut model = init_model(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // nonzero biases so every parameter has a generic gradient
    let mut p = model.flatten_params();
    let n_conv = model.num_conv_params();
    for v in &mut p[..n_conv] {
        *v += rng.gen_range(-0.1..0.1);
    }
    model.load_params(&p).unwrap();
    let x: Vec<f64> = (0..32 * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (
        model,
        FeatureSequence::new(x, cfg.input_dim, cfg.fs, "s").unwrap(),
        SampledSignal::new(y, cfg.fs).unwrap(),
    )
}

/// Relative L2 error of the analytic gradient of the full loss against
/// central differences.
pub fn model_grad_error(seed: u64) -> f64 {
    let (model, x, y) = tiny_problem(seed);
    let trace = model.forward(&x).unwrap();
    let analytic = model.backward(&x, &y, &trace).unwrap().flatten();
    let p0 = model.flatten_params();
    let mut m = model.clone();
    let numeric = fd_grad(&p0, 1e-6, |p| {
        m.load_params(p).unwrap();
        m.loss(&x, &y).unwrap()
    });
    rel_l2(&analytic, &numeric)
}

/// Noiseless single-delay data used for delay recovery.
pub fn recovery_spec() -> SynthSpec {
    SynthSpec {
        label_bandwidth_hz: 0.05,
        spectral_slope: 1.0,
        noise_std: 0.0,
        delays: vec![2.0],
        ..SynthSpec::default()
    }
}

/// One cluster on a single tanh layer, with the default 44 s sinc window and
/// delays initialized in [0, 20] s.
pub fn recovery_config() -> MdsConfig {
    MdsConfig {
        clusters: 1,
        trunk_layers: 1,
        trunk_filters: 4,
        trunk_kernel_len: 1,
        fc: 12.5,
        fs: 25.0,
        sinc_half_len: 550,
        tau_init_lo: 0.0,
        tau_init_hi: 20.0,
        l2: 0.0,
        input_dim: 4,
    }
}

pub fn recovery_train() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        tau_lr: Some(0.1),
        epochs: 300,
        restarts: 20,
        seed: 1,
        ..TrainConfig::default()
    }
}

/// Two regions delayed by 1 s and 3 s.
pub fn two_delay_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        label_bandwidth_hz: 0.5,
        spectral_slope: 0.0,
        noise_std: 0.05,
        delays: vec![1.0, 3.0],
        seed,
        ..SynthSpec::default()
    }
}

pub fn two_delay_config(clusters: usize) -> MdsConfig {
    MdsConfig {
        clusters,
        trunk_layers: 1,
        trunk_filters: 8,
        trunk_kernel_len: 1,
        fc: 12.5,
        fs: 25.0,
        sinc_half_len: 125,
        tau_init_lo: 0.0,
        tau_init_hi: 4.0,
        l2: 0.0,
        input_dim: 4,
    }
}

pub fn two_delay_train(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        tau_lr: Some(0.05),
        epochs: 200,
        restarts: 3,
        seed,
        ..TrainConfig::default()
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// A small single-delay task that trains in well under a second.
pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_recordings: 4,
        n_speakers: 2,
        duration_s: 20.0,
        label_bandwidth_hz: 0.5,
        spectral_slope: 0.0,
        delays: vec![1.0],
        seed,
        ..SynthSpec::default()
    }
}

pub fn small_config() -> MdsConfig {
    MdsConfig {
        clusters: 2,
        trunk_layers: 1,
        trunk_filters: 4,
        trunk_kernel_len: 3,
        fc: 12.5,
        fs: 25.0,
        sinc_half_len: 40,
        tau_init_lo: 0.0,
        tau_init_hi: 1.5,
        l2: 1e-4,
        input_dim: 4,
    }
}

pub fn small_train(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        tau_lr: Some(0.05),
        epochs: 10,
        restarts: 2,
        seed,
        ..TrainConfig::default()
    }
}
