//! LPC prewhitening of the adaptation path.
//!
//! Predictors are estimated per block with the Levinson-Durbin recursion and
//! assigned to the filter partitions by one of two schemes. Only the
//! adaptation inputs (input spectra and the error copy) are whitened; the
//! filtering path is never touched.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dsp::{MdfConfig, Spectrum, Transform};
use crate::error::{Error, Result};

/// Diagonal loading applied to the zero-lag autocorrelation.
pub const DIAGONAL_LOADING: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorScheme {
    /// Newest predictor for all partitions.
    A,
    /// One common predictor per pair of partitions, recomputed every second hop.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionParams {
    pub order: usize,
    pub scheme: PredictorScheme,
    pub enabled: bool,
}

impl Default for PredictionParams {
    fn default() -> Self {
        Self {
            order: 2,
            scheme: PredictorScheme::A,
            enabled: false,
        }
    }
}

impl PredictionParams {
    pub fn validate(&self, cfg: &MdfConfig) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if self.order == 0 || self.order >= cfg.hop() {
            return Err(Error::config(format!(
                "predictor order {} must be in 1..{}",
                self.order,
                cfg.hop()
            )));
        }
        if self.scheme == PredictorScheme::B && !cfg.partitions.is_multiple_of(2) {
            return Err(Error::config(format!(
                "scheme B pairs partitions and needs an even count, got {}",
                cfg.partitions
            )));
        }
        Ok(())
    }
}

/// Biased autocorrelation `r[j] = sum_k x(k) x(k-j)` for lags `0..=order`,
/// with `r[0]` slightly loaded.
pub fn autocorrelation(block: &[f64], order: usize) -> Vec<f64> {
    let mut r: Vec<f64> = (0..=order)
        .map(|j| {
            if j >= block.len() {
                return 0.0;
            }
            block[j..].iter().zip(block).map(|(a, b)| a * b).sum()
        })
        .collect();
    r[0] *= 1.0 + DIAGONAL_LOADING;
    r
}

/// Result of the Levinson-Durbin recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Lpc {
    /// Predictor taps `a[1..=order]`; the prediction error is `x(k) - sum_j a_j x(k-j)`.
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Prediction-error power after each completed order, starting with `r[0]`.
    pub error_powers: Vec<f64>,
}

impl Lpc {
    pub fn error_power(&self) -> f64 {
        *self.error_powers.last().unwrap_or(&0.0)
    }
}

/// Solves the Toeplitz normal equations for the predictor of order `r.len() - 1`.
///
/// A non-positive `r[0]` yields all-zero taps. When a reflection coefficient
/// reaches magnitude 1 the recursion stops at the previous order and the
/// remaining taps stay zero.
pub fn levinson_durbin(r: &[f64]) -> Lpc {
    let order = r.len().saturating_sub(1);
    let mut a = vec![0.0; order];
    let mut reflection = vec![0.0; order];
    if r.is_empty() || !(r[0] > 0.0) || !r[0].is_finite() {
        return Lpc {
            coeffs: a,
            reflection,
            error_powers: vec![r.first().copied().unwrap_or(0.0).max(0.0)],
        };
    }
    let mut err = r[0];
    let mut error_powers = vec![err];
    let mut prev = vec![0.0; order];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j - 1] * r[i - j]).sum();
        let k = (r[i] - acc) / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            break;
        }
        prev[..i - 1].copy_from_slice(&a[..i - 1]);
        for j in 1..i {
            a[j - 1] = prev[j - 1] - k * prev[i - j - 1];
        }
        a[i - 1] = k;
        reflection[i - 1] = k;
        err *= 1.0 - k * k;
        error_powers.push(err);
    }
    Lpc {
        coeffs: a,
        reflection,
        error_powers,
    }
}

/// Prediction-error FIR `e(k) = x(k) - sum_j a_j x(k-j)`.
///
/// `carry` holds the most recent past inputs (oldest first, at least
/// `a.len()` long) and is updated so consecutive calls form a continuous stream.
pub fn prewhiten(block: &[f64], a: &[f64], carry: &mut Vec<f64>) -> Vec<f64> {
    let p = a.len();
    if carry.len() < p {
        let mut padded = vec![0.0; p - carry.len()];
        padded.extend_from_slice(carry);
        *carry = padded;
    }
    let mut ext = Vec::with_capacity(p + block.len());
    ext.extend_from_slice(&carry[carry.len() - p..]);
    ext.extend_from_slice(block);
    let out = whiten_extended(&ext, a);
    let keep = carry.len();
    carry.extend_from_slice(block);
    let excess = carry.len() - keep;
    carry.drain(..excess);
    out
}

/// Filters `ext[p..]` using `ext[..p]` as history.
fn whiten_extended(ext: &[f64], a: &[f64]) -> Vec<f64> {
    let p = a.len();
    (p..ext.len())
        .map(|k| {
            let pred: f64 = a.iter().enumerate().map(|(j, aj)| aj * ext[k - j - 1]).sum();
            ext[k] - pred
        })
        .collect()
}

/// Most recent predictors, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBank {
    history: VecDeque<Vec<f64>>,
    depth: usize,
}

impl PredictorBank {
    pub fn new(depth: usize, order: usize) -> Self {
        Self {
            history: (0..depth.max(1)).map(|_| vec![0.0; order]).collect(),
            depth: depth.max(1),
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>) {
        self.history.push_front(coeffs);
        self.history.truncate(self.depth);
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }

    pub fn get(&self, age: usize) -> &[f64] {
        &self.history[age]
    }
}

/// Predictor used by each of the `partitions` adaptation inputs.
pub fn assign_predictors(
    bank: &PredictorBank,
    scheme: PredictorScheme,
    partitions: usize,
) -> Result<Vec<Vec<f64>>> {
    match scheme {
        PredictorScheme::A => Ok(vec![bank.get(0).to_vec(); partitions]),
        PredictorScheme::B => {
            if !partitions.is_multiple_of(2) {
                return Err(Error::config(format!(
                    "scheme B needs an even partition count, got {partitions}"
                )));
            }
            if bank.depth() < partitions / 2 {
                return Err(Error::config(format!(
                    "scheme B needs {} stored predictors, bank holds {}",
                    partitions / 2,
                    bank.depth()
                )));
            }
            Ok((0..partitions).map(|m| bank.get(m / 2).to_vec()).collect())
        }
    }
}

/// Stateful adaptation-path whitener for one filter.
#[derive(Debug, Clone)]
pub struct Prewhitener {
    params: PredictionParams,
    cfg: MdfConfig,
    bank: PredictorBank,
    /// Loudspeaker history: `order` samples of FIR state plus `M + 1` hops.
    x_history: Vec<f64>,
    e_carry: Vec<f64>,
    steps: usize,
    lpc_runs: usize,
}

impl Prewhitener {
    pub fn new(params: PredictionParams, cfg: MdfConfig) -> Result<Self> {
        params.validate(&cfg)?;
        let depth = match params.scheme {
            PredictorScheme::A => 1,
            PredictorScheme::B => cfg.partitions / 2,
        };
        Ok(Self {
            params,
            cfg,
            bank: PredictorBank::new(depth, params.order),
            x_history: vec![0.0; params.order + (cfg.partitions + 1) * cfg.hop()],
            e_carry: vec![0.0; params.order],
            steps: 0,
            lpc_runs: 0,
        })
    }

    /// Number of Levinson-Durbin solves performed so far.
    pub fn lpc_runs(&self) -> usize {
        self.lpc_runs
    }

    pub fn bank(&self) -> &PredictorBank {
        &self.bank
    }

    /// Takes the newest hop of loudspeaker samples, refreshes the predictor
    /// bank and returns the whitened spectrum of every partition block.
    pub fn push_input(&mut self, x_new: &[f64], transform: &Transform) -> Result<Vec<Spectrum>> {
        let hop = self.cfg.hop();
        let n = self.cfg.block_len;
        self.x_history.drain(..x_new.len());
        self.x_history.extend_from_slice(x_new);

        let recompute = match self.params.scheme {
            PredictorScheme::A => true,
            PredictorScheme::B => self.steps.is_multiple_of(2),
        };
        if recompute {
            let newest = &self.x_history[self.x_history.len() - n..];
            let lpc = levinson_durbin(&autocorrelation(newest, self.params.order));
            self.bank.push(lpc.coeffs);
            self.lpc_runs += 1;
        }
        self.steps += 1;

        let assigned = assign_predictors(&self.bank, self.params.scheme, self.cfg.partitions)?;
        let p = self.params.order;
        let len = self.x_history.len();
        assigned
            .iter()
            .enumerate()
            .map(|(m, a)| {
                let end = len - m * hop;
                let ext = &self.x_history[end - n - p..end];
                transform.forward(&whiten_extended(ext, a))
            })
            .collect()
    }

    /// Whitens the newest error hop with the newest predictor and returns the
    /// half-segment spectrum of the result.
    pub fn whiten_error(&mut self, e_new: &[f64], transform: &Transform) -> Result<Spectrum> {
        let a = self.bank.get(0).to_vec();
        let white = prewhiten(e_new, &a, &mut self.e_carry);
        let mut block = vec![0.0; self.cfg.block_len];
        block[self.cfg.hop()..].copy_from_slice(&white);
        transform.forward(&block)
    }
}
