//! Delayed sinc layers and multi-delay sinc (MDS) networks.
//!
//! A delayed sinc layer convolves a signal with a windowed sinc low-pass whose
//! center is shifted by a trainable delay. The MDS network runs several such
//! layers in parallel on the output of a shared convolutional trunk and mixes
//! them with time-varying softmax weights, so that it can learn a different
//! alignment delay for different regions of the input.

pub mod dsp;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod synth;
pub mod train;

pub use dsp::{apply_delay, convolve_same, make_sinc_kernel, sinc_kernel_grad_tau, SampledSignal, SincKernel};
pub use error::{Error, Result};
pub use features::{Dataset, FeatureSequence, Partition, Recording, Task};
pub use metrics::{ccc, ccc_grad, concat_eval, masked_ccc, rmse};
pub use net::{hard_select, init_model, ForwardTrace, MdsConfig, MdsGradients, MdsModel};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use synth::{brute_force_delay, gen_bandlimited, gen_multi_delay_task, gen_single_delay_task, SynthSpec};
pub use train::{select_best_epoch, train, RunRecord, TrainConfig};
