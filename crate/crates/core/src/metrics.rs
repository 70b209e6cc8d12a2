//! Concordance correlation coefficient (CCC), RMSE and their masked and
//! concatenated variants.
//!
//! Moments are population moments (divide by N). The CCC denominator is
//! floored at [`CCC_EPS`] so that the value and its gradient stay finite for
//! constant signals; above the floor the textbook formula is exact.

use serde::{Deserialize, Serialize};

use crate::dsp::SampledSignal;
use crate::error::{Error, Result};

/// Lower bound applied to the CCC denominator.
pub const CCC_EPS: f64 = 1e-8;

/// First and second moments entering the CCC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CccStats {
    pub mu_y: f64,
    pub mu_yhat: f64,
    pub var_y: f64,
    pub var_yhat: f64,
    pub cov: f64,
}

impl CccStats {
    pub fn from_slices(y: &[f64], yhat: &[f64]) -> Self {
        debug_assert_eq!(y.len(), yhat.len());
        let n = y.len() as f64;
        let mu_y = y.iter().sum::<f64>() / n;
        let mu_yhat = yhat.iter().sum::<f64>() / n;
        let (mut var_y, mut var_yhat, mut cov) = (0.0, 0.0, 0.0);
        for (a, b) in y.iter().zip(yhat) {
            let da = a - mu_y;
            let db = b - mu_yhat;
            var_y += da * da;
            var_yhat += db * db;
            cov += da * db;
        }
        Self {
            mu_y,
            mu_yhat,
            var_y: var_y / n,
            var_yhat: var_yhat / n,
            cov: cov / n,
        }
    }

    fn raw_denominator(&self) -> f64 {
        let gap = self.mu_y - self.mu_yhat;
        self.var_y + self.var_yhat + gap * gap
    }

    fn denominator(&self) -> f64 {
        self.raw_denominator().max(CCC_EPS)
    }

    pub fn ccc(&self) -> f64 {
        2.0 * self.cov / self.denominator()
    }
}

fn check_pair(y: &[f64], yhat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.len() < min_len {
        return Err(Error::InvalidParameter(format!(
            "at least {min_len} samples required, got {}",
            y.len()
        )));
    }
    Ok(())
}

/// CCC on raw slices.
pub fn ccc_slice(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 2)?;
    Ok(CccStats::from_slices(y, yhat).ccc())
}

/// Concordance correlation coefficient between a reference and a prediction.
pub fn ccc(y: &SampledSignal, yhat: &SampledSignal) -> Result<f64> {
    ccc_slice(y.values(), yhat.values())
}

/// Gradient of the CCC with respect to every prediction sample.
pub fn ccc_grad_slice(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    check_pair(y, yhat, 2)?;
    let s = CccStats::from_slices(y, yhat);
    let n = y.len() as f64;
    let num = 2.0 * s.cov;
    let den = s.denominator();
    let floored = s.raw_denominator() < CCC_EPS;
    let gap = s.mu_y - s.mu_yhat;
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| {
            let d_num = 2.0 * (a - s.mu_y) / n;
            let d_den = if floored {
                0.0
            } else {
                2.0 * (b - s.mu_yhat) / n - 2.0 * gap / n
            };
            (d_num * den - num * d_den) / (den * den)
        })
        .collect())
}

pub fn ccc_grad(y: &SampledSignal, yhat: &SampledSignal) -> Result<Vec<f64>> {
    ccc_grad_slice(y.values(), yhat.values())
}

pub fn rmse_slice(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 1)?;
    let sq: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

/// Root mean squared error.
pub fn rmse(y: &SampledSignal, yhat: &SampledSignal) -> Result<f64> {
    rmse_slice(y.values(), yhat.values())
}

/// CCC restricted to the samples where `mask` is true.
pub fn masked_ccc_slice(y: &[f64], yhat: &[f64], mask: &[bool]) -> Result<f64> {
    check_pair(y, yhat, 1)?;
    if mask.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: mask.len(),
        });
    }
    let (ys, yhats): (Vec<f64>, Vec<f64>) = y
        .iter()
        .zip(yhat)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (*a, *b))
        .unzip();
    if ys.len() < 2 {
        return Err(Error::MaskTooSmall(ys.len()));
    }
    Ok(CccStats::from_slices(&ys, &yhats).ccc())
}

pub fn masked_ccc(y: &SampledSignal, yhat: &SampledSignal, mask: &[bool]) -> Result<f64> {
    masked_ccc_slice(y.values(), yhat.values(), mask)
}

/// Pearson correlation (no guard; NaN for constant inputs).
pub fn pearson_slice(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, 2)?;
    let s = CccStats::from_slices(y, yhat);
    Ok(s.cov / (s.var_y * s.var_yhat).sqrt())
}

/// Metrics computed over all recordings at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcatMetrics {
    pub ccc: f64,
    pub rmse: f64,
}

/// Concatenates per-recording references and predictions, then computes CCC
/// and RMSE on the concatenation.
pub fn concat_eval<Y, P>(ys: &[Y], yhats: &[P]) -> Result<ConcatMetrics>
where
    Y: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    if ys.len() != yhats.len() {
        return Err(Error::LengthMismatch {
            left: ys.len(),
            right: yhats.len(),
        });
    }
    if ys.is_empty() {
        return Err(Error::EmptyInput("recordings"));
    }
    let mut all_y = Vec::new();
    let mut all_p = Vec::new();
    for (y, p) in ys.iter().zip(yhats) {
        let (y, p) = (y.as_ref(), p.as_ref());
        if y.len() != p.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: p.len(),
            });
        }
        all_y.extend_from_slice(y);
        all_p.extend_from_slice(p);
    }
    Ok(ConcatMetrics {
        ccc: ccc_slice(&all_y, &all_p)?,
        rmse: rmse_slice(&all_y, &all_p)?,
    })
}

impl AsRef<[f64]> for SampledSignal {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}
