//! Energy-decay operator (EDO): the ratio of past input magnitude to the
//! present amplified half-segment error, used to scale the adaptation step.
//! Values above one indicate decaying (reverberant) signal parts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::PartitionedSpectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdoVariant {
    /// Per-bin magnitude ratio.
    Elementwise,
    /// Least-squares scalar fit of the two magnitude vectors.
    CurveFit,
    /// Ratio of the mean magnitudes.
    MeanRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdoParams {
    pub variant: EdoVariant,
    pub r_min: f64,
    pub r_max: f64,
    pub enabled: bool,
    /// Keep the raw least-squares coefficient (present over past) for the
    /// curve-fit variant instead of its reciprocal.
    pub edo_literal: bool,
}

impl Default for EdoParams {
    fn default() -> Self {
        Self {
            variant: EdoVariant::CurveFit,
            r_min: 0.2,
            r_max: 2.0,
            enabled: false,
            edo_literal: false,
        }
    }
}

impl EdoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min <= self.r_max) {
            return Err(Error::config(format!(
                "EDO bounds need 0 < r_min <= r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

/// Step-size scale per partition: one value per bin, or one scalar broadcast
/// across the bins of a partition.
#[derive(Debug, Clone, PartialEq)]
pub enum EdoScale {
    PerBin(Vec<Vec<f64>>),
    PerPartition(Vec<f64>),
}

impl EdoScale {
    pub fn factor(&self, m: usize, n: usize) -> f64 {
        match self {
            EdoScale::PerBin(v) => v[m][n],
            EdoScale::PerPartition(v) => v[m],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            EdoScale::PerBin(v) => v.iter().flatten().copied().collect(),
            EdoScale::PerPartition(v) => v.clone(),
        }
    }
}

pub fn edo_clamp(edo: f64, r_min: f64, r_max: f64) -> f64 {
    if edo.is_nan() {
        return r_max;
    }
    edo.min(r_max).max(r_min)
}

fn ratio_or(num: f64, den: f64, fallback: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        fallback
    }
}

/// `|X(n)| / |X_h(n)|` per bin; a zero denominator yields `r_max`.
pub fn edo_elementwise(x_mag: &[f64], xh_mag: &[f64], r_max: f64) -> Vec<f64> {
    x_mag
        .iter()
        .zip(xh_mag)
        .map(|(&x, &h)| ratio_or(x, h, r_max))
        .collect()
}

/// Least-squares coefficient `a` minimizing `sum (a |X| - |X_h|)^2`, i.e.
/// `sum |X||X_h| / sum |X|^2`. `None` when `|X|` is identically zero.
pub fn edo_curve_fit(x_mag: &[f64], xh_mag: &[f64]) -> Option<f64> {
    let xx: f64 = x_mag.iter().map(|v| v * v).sum();
    if !(xx > 0.0) {
        return None;
    }
    let xy: f64 = x_mag.iter().zip(xh_mag).map(|(a, b)| a * b).sum();
    Some(xy / xx)
}

pub fn edo_mean_ratio(x_mag: &[f64], xh_mag: &[f64], r_max: f64) -> f64 {
    let mx: f64 = x_mag.iter().sum::<f64>() / x_mag.len().max(1) as f64;
    let mh: f64 = xh_mag.iter().sum::<f64>() / xh_mag.len().max(1) as f64;
    ratio_or(mx, mh, r_max)
}

/// Clamped EDO scale for every partition of `x_hist`, with the amplified
/// half-segment taken as `|X_h| = gain |E_h|`.
pub fn edo_compute(
    x_hist: &PartitionedSpectrum,
    e_half: &[Complex64],
    gain: f64,
    params: &EdoParams,
) -> EdoScale {
    let xh_mag: Vec<f64> = e_half.iter().map(|c| gain.abs() * c.norm()).collect();
    let clamp = |v: f64| edo_clamp(v, params.r_min, params.r_max);
    let mags = x_hist
        .iter()
        .map(|part| part.iter().map(|c| c.norm()).collect::<Vec<f64>>());
    match params.variant {
        EdoVariant::Elementwise => EdoScale::PerBin(
            mags.map(|x| {
                edo_elementwise(&x, &xh_mag, params.r_max)
                    .into_iter()
                    .map(clamp)
                    .collect()
            })
            .collect(),
        ),
        EdoVariant::CurveFit => EdoScale::PerPartition(
            mags.map(|x| {
                let raw = match edo_curve_fit(&x, &xh_mag) {
                    None => params.r_max,
                    Some(a) if params.edo_literal => a,
                    Some(a) => ratio_or(1.0, a, params.r_max),
                };
                clamp(raw)
            })
            .collect(),
        ),
        EdoVariant::MeanRatio => EdoScale::PerPartition(
            mags.map(|x| clamp(edo_mean_ratio(&x, &xh_mag, params.r_max)))
                .collect(),
        ),
    }
}
