//! Delayed sinc kernels, their analytic delay derivative, and "same"-length
//! convolution with zero padding.
//!
//! A kernel of half length `L` has support `n = -L ..= L-1` and is stored as a
//! vector of length `2L` whose index `L` holds the `n = 0` tap. Convolving with
//! `center_index = L` therefore maps `tau = 0` to no shift and positive `tau`
//! to a forward (causal) delay.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A one-dimensional real sequence sampled at `fs` Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    values: Vec<f64>,
    fs: f64,
}

impl SampledSignal {
    pub fn new(values: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling frequency must be positive, got {fs}"
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("signal"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self { values, fs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.fs
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x == x.round() {
        0.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Derivative of the normalized sinc with respect to its argument.
pub fn sinc_derivative(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // Taylor series; the closed form cancels catastrophically near zero.
        let p2 = PI * PI;
        let x2 = x * x;
        -p2 * x / 3.0 + p2 * p2 * x * x2 / 30.0 - p2 * p2 * p2 * x * x2 * x2 / 840.0
    } else {
        ((PI * x).cos() - sinc(x)) / x
    }
}

/// Parameters of a rectangular-windowed, time-shifted sinc low-pass kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SincKernel {
    /// Delay in seconds.
    pub tau: f64,
    /// Cutoff frequency in Hz.
    pub fc: f64,
    /// Sampling frequency in Hz.
    pub fs: f64,
    /// Half window length in samples.
    pub half_len: usize,
}

impl SincKernel {
    pub fn new(tau: f64, fc: f64, fs: f64, half_len: usize) -> Result<Self> {
        let k = Self {
            tau,
            fc,
            fs,
            half_len,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fs must be positive, got {}",
                self.fs
            )));
        }
        if !(self.fc.is_finite() && self.fc > 0.0 && self.fc <= self.fs / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "fc must lie in (0, fs/2] = (0, {}], got {}",
                self.fs / 2.0,
                self.fc
            )));
        }
        if self.half_len == 0 {
            return Err(Error::InvalidParameter("half_len must be >= 1".into()));
        }
        let limit = self.max_delay();
        if !(self.tau.is_finite() && self.tau.abs() < limit) {
            return Err(Error::InvalidParameter(format!(
                "|tau| must be below half_len/fs = {limit} s, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Exclusive bound on `|tau|` for this window, `half_len / fs`.
    pub fn max_delay(&self) -> f64 {
        self.half_len as f64 / self.fs
    }

    /// Kernel length in samples (`2 * half_len`).
    pub fn len(&self) -> usize {
        2 * self.half_len
    }

    pub fn is_empty(&self) -> bool {
        self.half_len == 0
    }

    /// Index of the `n = 0` tap, for use as `center_index` in [`convolve_same`].
    pub fn center(&self) -> usize {
        self.half_len
    }

    fn arguments(&self) -> impl Iterator<Item = f64> + '_ {
        let l = self.half_len as i64;
        let scale = 2.0 * self.fc / self.fs;
        let shift = self.tau * self.fs;
        (-l..l).map(move |n| scale * (n as f64 - shift))
    }

    /// Kernel taps `(2 fc / fs) * sinc(2 fc (n / fs - tau))` for `n` in
    /// `-half_len .. half_len`.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let gain = 2.0 * self.fc / self.fs;
        Ok(self.arguments().map(|u| gain * sinc(u)).collect())
    }

    /// Element-wise derivative of [`coefficients`](Self::coefficients) with
    /// respect to `tau`.
    pub fn grad_tau(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let scale = -(2.0 * self.fc / self.fs) * 2.0 * self.fc;
        Ok(self
            .arguments()
            .map(|u| scale * sinc_derivative(u))
            .collect())
    }
}

/// Builds the taps of a delayed sinc kernel.
pub fn make_sinc_kernel(k: &SincKernel) -> Result<Vec<f64>> {
    k.coefficients()
}

/// Analytic `d taps / d tau` of a delayed sinc kernel.
pub fn sinc_kernel_grad_tau(k: &SincKernel) -> Result<Vec<f64>> {
    k.grad_tau()
}

/// Same-length convolution of a signal with a kernel whose zero-offset tap sits
/// at `center_index`, with zero padding outside the input.
///
/// `out[t] = sum_j x[t - (j - center_index)] * h[j]`
pub fn convolve_same(x: &SampledSignal, h: &[f64], center_index: usize) -> Result<SampledSignal> {
    if h.is_empty() {
        return Err(Error::EmptyInput("kernel"));
    }
    if center_index >= h.len() {
        return Err(Error::InvalidParameter(format!(
            "center index {center_index} outside kernel of length {}",
            h.len()
        )));
    }
    Ok(SampledSignal {
        values: convolve_same_slice(x.values(), h, center_index),
        fs: x.fs,
    })
}

/// Slice form of [`convolve_same`]. Panics if `h` is empty or the center index
/// is out of range; an empty `x` yields an empty output.
pub fn convolve_same_slice(x: &[f64], h: &[f64], center_index: usize) -> Vec<f64> {
    assert!(!h.is_empty() && center_index < h.len());
    if x.is_empty() {
        return Vec::new();
    }
    let nonzero: Vec<usize> = (0..h.len()).filter(|&j| h[j] != 0.0).collect();
    if nonzero.len() <= 8 {
        // integer delays at fc = fs/2 give impulse kernels; shifting them
        // directly keeps the result exact
        convolve_same_sparse(x, h, &nonzero, center_index)
    } else if x.len().min(h.len()) <= 32 || x.len() * h.len() <= 1 << 14 {
        convolve_same_direct(x, h, center_index)
    } else {
        convolve_same_fft(x, h, center_index)
    }
}

/// Adjoint of [`convolve_same_slice`] with respect to its input:
/// `dx[i] = sum_t g[t] * h[t + center_index - i]`.
pub fn correlate_same_slice(g: &[f64], h: &[f64], center_index: usize) -> Vec<f64> {
    let reversed: Vec<f64> = h.iter().rev().copied().collect();
    convolve_same_slice(g, &reversed, h.len() - 1 - center_index)
}

fn convolve_same_sparse(x: &[f64], h: &[f64], taps: &[usize], center: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let mut out = vec![0.0; x.len()];
    for &j in taps {
        let off = center as isize - j as isize;
        for (t, o) in out.iter_mut().enumerate() {
            let s = t as isize + off;
            if (0..n).contains(&s) {
                *o += h[j] * x[s as usize];
            }
        }
    }
    out
}

fn convolve_same_direct(x: &[f64], h: &[f64], center: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let c = center as isize;
    (0..n)
        .map(|t| {
            // x index s = t + c - j must lie in [0, n)
            let j_lo = (t + c - n + 1).max(0) as usize;
            let j_hi = (t + c).min(h.len() as isize - 1);
            if j_hi < j_lo as isize {
                return 0.0;
            }
            (j_lo..=j_hi as usize)
                .map(|j| x[(t + c) as usize - j] * h[j])
                .sum()
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn convolve_same_fft(x: &[f64], h: &[f64], center: usize) -> Vec<f64> {
    let full_len = x.len() + h.len() - 1;
    let n_fft = full_len.next_power_of_two();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n_fft), p.plan_fft_inverse(n_fft))
    });

    // Pack both real sequences into one complex transform.
    let mut buf: Vec<Complex<f64>> = (0..n_fft)
        .map(|i| {
            Complex::new(
                x.get(i).copied().unwrap_or(0.0),
                h.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect();
    fwd.process(&mut buf);

    let mut prod = vec![Complex::new(0.0, 0.0); n_fft];
    for k in 0..n_fft {
        let zk = buf[k];
        let zc = buf[(n_fft - k) % n_fft].conj();
        let xk = (zk + zc) * 0.5;
        let hk = (zk - zc) * Complex::new(0.0, -0.5);
        prod[k] = xk * hk;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n_fft as f64;
    (0..x.len()).map(|t| prod[t + center].re * scale).collect()
}

/// Delays `x` by `tau` seconds through a windowed sinc low-pass with cutoff
/// `fc`, keeping the input length.
pub fn apply_delay(x: &SampledSignal, tau: f64, fc: f64, half_len: usize) -> Result<SampledSignal> {
    let kernel = SincKernel::new(tau, fc, x.fs(), half_len)?;
    let taps = kernel.coefficients()?;
    convolve_same(x, &taps, kernel.center())
}
