//! The multi-delay sinc (MDS) network.
//!
//! A shared trunk of same-padded 1-D convolutions (tanh after every layer)
//! feeds a linear head emitting `2M` channels: `M` cluster label signals
//! followed by `M` cluster weight signals. Each cluster's label and weight
//! signal is convolved with that cluster's delayed sinc kernel; a softmax
//! across clusters at every time step turns the delayed weights into mixing
//! coefficients for the delayed labels.
//!
//! Parameters flatten in this order: for each trunk layer its weights then
//! biases, then head weights and biases, then the `M` delays. Convolution
//! weights are stored `[out][in][k]` row-major.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{convolve_same_slice, correlate_same_slice, SampledSignal, SincKernel};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::metrics::{ccc_grad_slice, ccc_slice};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsConfig {
    /// Number of clusters (delayed sinc branches), `M`.
    pub clusters: usize,
    pub trunk_layers: usize,
    pub trunk_filters: usize,
    /// Kernel length of trunk and head convolutions, in samples.
    pub trunk_kernel_len: usize,
    /// Sinc cutoff in Hz.
    pub fc: f64,
    /// Label / frame rate in Hz.
    pub fs: f64,
    /// Half window of every delayed sinc kernel, in samples.
    pub sinc_half_len: usize,
    /// Delay initialization range in seconds.
    pub tau_init_lo: f64,
    pub tau_init_hi: f64,
    /// Weight on the sum of squared convolution weights in the loss.
    pub l2: f64,
    pub input_dim: usize,
}

impl MdsConfig {
    /// The standard configuration for a given input dimension and label
    /// rate: 32 clusters, 44 s sinc window, delays drawn from [0, 20] s.
    pub fn standard(input_dim: usize, fs: f64) -> Self {
        Self {
            clusters: 32,
            trunk_layers: 3,
            trunk_filters: 32,
            trunk_kernel_len: 8,
            fc: fs / 2.0,
            fs,
            sinc_half_len: (22.0 * fs).round() as usize,
            tau_init_lo: 0.0,
            tau_init_hi: 20.0,
            l2: 0.0,
            input_dim,
        }
    }

    /// Exclusive bound on `|tau|`, `sinc_half_len / fs`.
    pub fn tau_limit(&self) -> f64 {
        self.sinc_half_len as f64 / self.fs
    }

    /// Range delays are clamped to during training, half a sample inside the
    /// window.
    pub fn tau_bound(&self) -> f64 {
        (self.sinc_half_len as f64 - 0.5) / self.fs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.clusters == 0 {
            return bad("clusters must be >= 1".into());
        }
        if self.trunk_layers == 0 || self.trunk_filters == 0 || self.trunk_kernel_len == 0 {
            return bad("trunk layers, filters and kernel length must be >= 1".into());
        }
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1".into());
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.tau_init_lo <= self.tau_init_hi) {
            return bad(format!(
                "tau_init_lo {} exceeds tau_init_hi {}",
                self.tau_init_lo, self.tau_init_hi
            ));
        }
        // validates fs, fc and half_len
        SincKernel::new(0.0, self.fc, self.fs, self.sinc_half_len)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let bound = self.tau_bound();
        if self.tau_init_hi.abs() > bound || self.tau_init_lo.abs() > bound {
            return bad(format!(
                "delay init range [{}, {}] must lie within +-{bound} s (half a sample inside the sinc window)",
                self.tau_init_lo, self.tau_init_hi
            ));
        }
        Ok(())
    }
}

/// A 1-D convolution over a `T x in_channels` row-major input with zero
/// "same" padding: `out[t][o] = b[o] + sum_{i,k} w[o][i][k] x[t + k - pad][i]`
/// with `pad = (kernel_len - 1) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_len: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    fn zeros(in_channels: usize, out_channels: usize, kernel_len: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_len,
            weight: vec![0.0; in_channels * out_channels * kernel_len],
            bias: vec![0.0; out_channels],
        }
    }

    fn glorot(in_channels: usize, out_channels: usize, kernel_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel_len);
        let fan = ((in_channels + out_channels) * kernel_len) as f64;
        let s = (6.0 / fan).sqrt();
        let dist = Uniform::new_inclusive(-s, s);
        for w in &mut layer.weight {
            *w = dist.sample(rng);
        }
        layer
    }

    fn pad(&self) -> isize {
        ((self.kernel_len - 1) / 2) as isize
    }

    fn check_shapes(&self) -> Result<()> {
        if self.weight.len() != self.in_channels * self.out_channels * self.kernel_len
            || self.bias.len() != self.out_channels
            || self.kernel_len == 0
        {
            return Err(Error::ShapeMismatch(format!(
                "conv layer {}->{} k={} has {} weights and {} biases",
                self.in_channels,
                self.out_channels,
                self.kernel_len,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    /// Weights regrouped as `[k][o][i]` for cache-friendly inner loops.
    fn weights_by_tap(&self) -> Vec<f64> {
        let (ic, oc, kl) = (self.in_channels, self.out_channels, self.kernel_len);
        let mut out = vec![0.0; self.weight.len()];
        for o in 0..oc {
            for i in 0..ic {
                for k in 0..kl {
                    out[(k * oc + o) * ic + i] = self.weight[(o * ic + i) * kl + k];
                }
            }
        }
        out
    }

    /// Time steps `t` for which `t + shift` is a valid input index.
    fn valid_range(len: usize, shift: isize) -> std::ops::Range<usize> {
        let lo = (-shift).max(0) as usize;
        let hi = (len as isize - shift).clamp(0, len as isize) as usize;
        lo..hi.max(lo)
    }

    pub fn forward(&self, x: &[f64], len: usize) -> Vec<f64> {
        let (ic, oc) = (self.in_channels, self.out_channels);
        debug_assert_eq!(x.len(), len * ic);
        let mut out = Vec::with_capacity(len * oc);
        for _ in 0..len {
            out.extend_from_slice(&self.bias);
        }
        let wk = self.weights_by_tap();
        for k in 0..self.kernel_len {
            let shift = k as isize - self.pad();
            let wtap = &wk[k * oc * ic..(k + 1) * oc * ic];
            for t in Self::valid_range(len, shift) {
                let s = (t as isize + shift) as usize;
                let xs = &x[s * ic..(s + 1) * ic];
                let os = &mut out[t * oc..(t + 1) * oc];
                for (o, acc) in os.iter_mut().enumerate() {
                    let wrow = &wtap[o * ic..(o + 1) * ic];
                    *acc += wrow.iter().zip(xs).map(|(w, v)| w * v).sum::<f64>();
                }
            }
        }
        out
    }

    /// Returns parameter gradients and, if requested, the input gradient.
    pub fn backward(&self, x: &[f64], dout: &[f64], len: usize, want_dx: bool) -> (Conv1dGrad, Option<Vec<f64>>) {
        let (ic, oc, kl) = (self.in_channels, self.out_channels, self.kernel_len);
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; oc];
        for t in 0..len {
            for (acc, g) in db.iter_mut().zip(&dout[t * oc..(t + 1) * oc]) {
                *acc += g;
            }
        }
        let mut dx = want_dx.then(|| vec![0.0; len * ic]);
        let wk = self.weights_by_tap();
        // dw accumulated as [k][o][i], transposed at the end
        let mut dwk = vec![0.0; self.weight.len()];
        for k in 0..kl {
            let shift = k as isize - self.pad();
            let wtap = &wk[k * oc * ic..(k + 1) * oc * ic];
            let dtap = &mut dwk[k * oc * ic..(k + 1) * oc * ic];
            for t in Self::valid_range(len, shift) {
                let s = (t as isize + shift) as usize;
                let xs = &x[s * ic..(s + 1) * ic];
                let gs = &dout[t * oc..(t + 1) * oc];
                for (o, &g) in gs.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, v) in dtap[o * ic..(o + 1) * ic].iter_mut().zip(xs) {
                        *d += g * v;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let dxs = &mut dx[s * ic..(s + 1) * ic];
                    for (o, &g) in gs.iter().enumerate() {
                        for (d, w) in dxs.iter_mut().zip(&wtap[o * ic..(o + 1) * ic]) {
                            *d += g * w;
                        }
                    }
                }
            }
        }
        for o in 0..oc {
            for i in 0..ic {
                for k in 0..kl {
                    dw[(o * ic + i) * kl + k] = dwk[(k * oc + o) * ic + i];
                }
            }
        }
        (Conv1dGrad { weight: dw, bias: db }, dx)
    }
}

/// All trainable parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsModel {
    pub config: MdsConfig,
    pub trunk: Vec<Conv1d>,
    pub head: Conv1d,
    /// Per-cluster delays in seconds.
    pub taus: Vec<f64>,
}

/// Gradients with the same layout as [`MdsModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsGradients {
    pub trunk: Vec<Conv1dGrad>,
    pub head: Conv1dGrad,
    pub taus: Vec<f64>,
}

impl MdsGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.trunk {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.head.weight);
        out.extend_from_slice(&self.head.bias);
        out.extend_from_slice(&self.taus);
        out
    }
}

/// Intermediate signals of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub len: usize,
    pub fs: f64,
    /// Post-tanh output of every trunk layer, `T x trunk_filters`.
    pub activations: Vec<Vec<f64>>,
    /// Raw head output, `T x 2M`: labels in channels `0..M`, weights in `M..2M`.
    pub head: Vec<f64>,
    pub delayed_labels: Vec<Vec<f64>>,
    pub delayed_weights: Vec<Vec<f64>>,
    /// Softmax over clusters of the delayed weights.
    pub softmax: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Delays the trace was computed with.
    pub taus: Vec<f64>,
}

impl ForwardTrace {
    pub fn clusters(&self) -> usize {
        self.taus.len()
    }

    fn head_channel(&self, c: usize) -> Vec<f64> {
        let width = 2 * self.clusters();
        self.head.iter().skip(c).step_by(width).copied().collect()
    }

    /// Undelayed label signal of cluster `m`.
    pub fn raw_label(&self, m: usize) -> Vec<f64> {
        self.head_channel(m)
    }

    /// Undelayed weight signal of cluster `m`.
    pub fn raw_weight(&self, m: usize) -> Vec<f64> {
        self.head_channel(self.clusters() + m)
    }

    pub fn prediction(&self) -> SampledSignal {
        SampledSignal::new(self.y.clone(), self.fs).expect("forward output is finite and non-empty")
    }
}

/// Builds a model with delays drawn uniformly from the configured range and
/// Glorot-uniform convolution weights. Biases start at zero.
pub fn init_model(config: &MdsConfig, seed: u64) -> Result<MdsModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trunk = Vec::with_capacity(config.trunk_layers);
    let mut in_ch = config.input_dim;
    for _ in 0..config.trunk_layers {
        trunk.push(Conv1d::glorot(in_ch, config.trunk_filters, config.trunk_kernel_len, &mut rng));
        in_ch = config.trunk_filters;
    }
    let head = Conv1d::glorot(in_ch, 2 * config.clusters, config.trunk_kernel_len, &mut rng);
    let taus = if config.tau_init_lo == config.tau_init_hi {
        vec![config.tau_init_lo; config.clusters]
    } else {
        let dist = Uniform::new_inclusive(config.tau_init_lo, config.tau_init_hi);
        (0..config.clusters).map(|_| dist.sample(&mut rng)).collect()
    };
    Ok(MdsModel {
        config: config.clone(),
        trunk,
        head,
        taus,
    })
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl MdsModel {
    pub fn clusters(&self) -> usize {
        self.config.clusters
    }

    /// Checks parameter shapes and delay ranges against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        if self.trunk.len() != c.trunk_layers {
            return Err(Error::ShapeMismatch(format!(
                "{} trunk layers, config says {}",
                self.trunk.len(),
                c.trunk_layers
            )));
        }
        let mut in_ch = c.input_dim;
        for layer in &self.trunk {
            layer.check_shapes()?;
            if layer.in_channels != in_ch
                || layer.out_channels != c.trunk_filters
                || layer.kernel_len != c.trunk_kernel_len
            {
                return Err(Error::ShapeMismatch("trunk layer disagrees with config".into()));
            }
            in_ch = c.trunk_filters;
        }
        self.head.check_shapes()?;
        if self.head.in_channels != in_ch
            || self.head.out_channels != 2 * c.clusters
            || self.head.kernel_len != c.trunk_kernel_len
        {
            return Err(Error::ShapeMismatch("head layer disagrees with config".into()));
        }
        if self.taus.len() != c.clusters {
            return Err(Error::ShapeMismatch(format!(
                "{} delays for {} clusters",
                self.taus.len(),
                c.clusters
            )));
        }
        let limit = c.tau_limit();
        if let Some(t) = self.taus.iter().find(|t| !(t.abs() < limit)) {
            return Err(Error::InvalidParameter(format!(
                "delay {t} outside (-{limit}, {limit})"
            )));
        }
        Ok(())
    }

    fn kernel(&self, m: usize) -> SincKernel {
        SincKernel {
            tau: self.taus[m],
            fc: self.config.fc,
            fs: self.config.fs,
            half_len: self.config.sinc_half_len,
        }
    }

    fn check_input(&self, x: &FeatureSequence) -> Result<()> {
        if x.dims() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} dims, model expects {}",
                x.dims(),
                self.config.input_dim
            )));
        }
        if x.fs() != self.config.fs {
            return Err(Error::ShapeMismatch(format!(
                "input rate {} Hz, model expects {} Hz",
                x.fs(),
                self.config.fs
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let len = x.len();
        let m_count = self.clusters();

        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let input = activations.last().map_or(x.frames(), |a| a.as_slice());
            let mut z = layer.forward(input, len);
            z.iter_mut().for_each(|v| *v = v.tanh());
            activations.push(z);
        }
        let head = self.head.forward(activations.last().expect("trunk_layers >= 1"), len);

        let mut delayed_labels = Vec::with_capacity(m_count);
        let mut delayed_weights = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let kernel = self.kernel(m);
            let taps = kernel.coefficients()?;
            let label: Vec<f64> = head.iter().skip(m).step_by(2 * m_count).copied().collect();
            let weight: Vec<f64> = head.iter().skip(m_count + m).step_by(2 * m_count).copied().collect();
            delayed_labels.push(convolve_same_slice(&label, &taps, kernel.center()));
            delayed_weights.push(convolve_same_slice(&weight, &taps, kernel.center()));
        }

        let mut softmax = vec![vec![0.0; len]; m_count];
        let mut y = vec![0.0; len];
        let mut col = vec![0.0; m_count];
        for n in 0..len {
            for m in 0..m_count {
                col[m] = delayed_weights[m][n];
            }
            softmax_in_place(&mut col);
            let mut acc = 0.0;
            for m in 0..m_count {
                softmax[m][n] = col[m];
                acc += col[m] * delayed_labels[m][n];
            }
            y[n] = acc;
        }

        Ok(ForwardTrace {
            len,
            fs: x.fs(),
            activations,
            head,
            delayed_labels,
            delayed_weights,
            softmax,
            y,
            taus: self.taus.clone(),
        })
    }

    pub fn predict(&self, x: &FeatureSequence) -> Result<SampledSignal> {
        Ok(self.forward(x)?.prediction())
    }

    /// Sum of squared convolution weights (biases and delays excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.trunk
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|l| &l.weight)
            .map(|w| w * w)
            .sum()
    }

    /// Training loss of a forward trace: `1 - CCC + l2 * ||W||^2`.
    pub fn loss_from_trace(&self, trace: &ForwardTrace, y_true: &SampledSignal) -> Result<f64> {
        let c = ccc_slice(y_true.values(), &trace.y)?;
        Ok(1.0 - c + self.config.l2 * self.weight_norm_sq())
    }

    pub fn loss(&self, x: &FeatureSequence, y_true: &SampledSignal) -> Result<f64> {
        let trace = self.forward(x)?;
        self.loss_from_trace(&trace, y_true)
    }

    /// Reverse-mode gradients of [`loss_from_trace`](Self::loss_from_trace)
    /// with respect to every parameter, including the delays.
    pub fn backward(&self, x: &FeatureSequence, y_true: &SampledSignal, trace: &ForwardTrace) -> Result<MdsGradients> {
        self.check_input(x)?;
        let len = x.len();
        let m_count = self.clusters();
        if trace.len != len
            || trace.y.len() != len
            || trace.taus != self.taus
            || trace.activations.len() != self.trunk.len()
            || trace.head.len() != len * 2 * m_count
        {
            return Err(Error::StaleTrace(
                "trace does not match this model and input".into(),
            ));
        }
        if y_true.len() != len {
            return Err(Error::LengthMismatch {
                left: y_true.len(),
                right: len,
            });
        }

        // loss = 1 - CCC
        let dy: Vec<f64> = ccc_grad_slice(y_true.values(), &trace.y)?
            .into_iter()
            .map(|g| -g)
            .collect();

        let mut dhead = vec![0.0; len * 2 * m_count];
        let mut dtaus = vec![0.0; m_count];
        for m in 0..m_count {
            let kernel = self.kernel(m);
            let taps = kernel.coefficients()?;
            let dtaps = kernel.grad_tau()?;
            let c = kernel.center();
            let s = &trace.softmax[m];
            let fd = &trace.delayed_labels[m];
            let d_label_delayed: Vec<f64> = (0..len).map(|n| dy[n] * s[n]).collect();
            let d_weight_delayed: Vec<f64> = (0..len)
                .map(|n| dy[n] * s[n] * (fd[n] - trace.y[n]))
                .collect();

            let label = trace.raw_label(m);
            let weight = trace.raw_weight(m);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            dtaus[m] = dot(&d_label_delayed, &convolve_same_slice(&label, &dtaps, c))
                + dot(&d_weight_delayed, &convolve_same_slice(&weight, &dtaps, c));

            let d_label = correlate_same_slice(&d_label_delayed, &taps, c);
            let d_weight = correlate_same_slice(&d_weight_delayed, &taps, c);
            for n in 0..len {
                dhead[n * 2 * m_count + m] = d_label[n];
                dhead[n * 2 * m_count + m_count + m] = d_weight[n];
            }
        }

        let last = trace.activations.last().expect("trunk_layers >= 1");
        let (mut head_grad, dact) = self.head.backward(last, &dhead, len, true);
        let mut dact = dact.expect("requested");

        let mut trunk_grads = Vec::with_capacity(self.trunk.len());
        for (l, layer) in self.trunk.iter().enumerate().rev() {
            let a = &trace.activations[l];
            let dz: Vec<f64> = dact.iter().zip(a).map(|(g, v)| g * (1.0 - v * v)).collect();
            let input = if l == 0 {
                x.frames()
            } else {
                trace.activations[l - 1].as_slice()
            };
            let (grad, dx) = layer.backward(input, &dz, len, l > 0);
            trunk_grads.push(grad);
            if let Some(dx) = dx {
                dact = dx;
            }
        }
        trunk_grads.reverse();

        let l2 = self.config.l2;
        if l2 != 0.0 {
            for (g, layer) in trunk_grads
                .iter_mut()
                .chain(std::iter::once(&mut head_grad))
                .zip(self.trunk.iter().chain(std::iter::once(&self.head)))
            {
                for (gw, w) in g.weight.iter_mut().zip(&layer.weight) {
                    *gw += 2.0 * l2 * w;
                }
            }
        }

        Ok(MdsGradients {
            trunk: trunk_grads,
            head: head_grad,
            taus: dtaus,
        })
    }

    pub fn num_params(&self) -> usize {
        self.trunk
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum::<usize>()
            + self.head.weight.len()
            + self.head.bias.len()
            + self.taus.len()
    }

    /// Number of leading entries of [`flatten_params`](Self::flatten_params)
    /// that are convolution parameters; the remaining `M` are delays.
    pub fn num_conv_params(&self) -> usize {
        self.num_params() - self.taus.len()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.trunk {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.head.weight);
        out.extend_from_slice(&self.head.bias);
        out.extend_from_slice(&self.taus);
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: self.num_params(),
            });
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for l in &mut self.trunk {
            take(&mut l.weight);
            take(&mut l.bias);
        }
        take(&mut self.head.weight);
        take(&mut self.head.bias);
        take(&mut self.taus);
        Ok(())
    }

    /// Clamps every delay to half a sample inside the sinc window.
    pub fn clamp_taus(&mut self) {
        let b = self.config.tau_bound();
        for t in &mut self.taus {
            *t = t.clamp(-b, b);
        }
    }

    /// Serializes to a single JSON document. Floats are written in their
    /// shortest round-trip decimal form, so parsing restores them bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MdsModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    /// Returns a copy with clusters reordered: cluster `k` of the result is
    /// cluster `perm[k]` of `self`.
    pub fn permute_clusters(&self, perm: &[usize]) -> Result<Self> {
        let m_count = self.clusters();
        let mut seen = vec![false; m_count];
        if perm.len() != m_count || perm.iter().any(|&p| p >= m_count || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter("not a permutation of the clusters".into()));
        }
        let mut out = self.clone();
        let per_out = self.head.in_channels * self.head.kernel_len;
        for (k, &p) in perm.iter().enumerate() {
            for (dst, src) in [(k, p), (m_count + k, m_count + p)] {
                out.head.weight[dst * per_out..(dst + 1) * per_out]
                    .copy_from_slice(&self.head.weight[src * per_out..(src + 1) * per_out]);
                out.head.bias[dst] = self.head.bias[src];
            }
            out.taus[k] = self.taus[p];
        }
        Ok(out)
    }
}

pub fn forward(model: &MdsModel, x: &FeatureSequence) -> Result<ForwardTrace> {
    model.forward(x)
}

pub fn backward(
    model: &MdsModel,
    x: &FeatureSequence,
    y_true: &SampledSignal,
    trace: &ForwardTrace,
) -> Result<MdsGradients> {
    model.backward(x, y_true, trace)
}

pub fn predict(model: &MdsModel, x: &FeatureSequence) -> Result<SampledSignal> {
    model.predict(x)
}

/// Picks, at every time step, the delayed label of the cluster with the
/// largest delayed weight (lowest index on ties).
pub fn hard_select(trace: &ForwardTrace) -> SampledSignal {
    let y = (0..trace.len)
        .map(|n| {
            let mut best = 0;
            for m in 1..trace.clusters() {
                if trace.delayed_weights[m][n] > trace.delayed_weights[best][n] {
                    best = m;
                }
            }
            trace.delayed_labels[best][n]
        })
        .collect();
    SampledSignal::new(y, trace.fs).expect("forward output is finite and non-empty")
}
