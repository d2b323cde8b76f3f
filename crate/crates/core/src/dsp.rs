//! Block segmentation, transforms, overlap-save partitioned filtering and the
//! gradient constraint shared by all frequency-domain processing.
//!
//! Transform convention: the forward transform is unnormalized, the inverse
//! carries the `1/N` factor.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex spectrum of one length-`N` time block.
pub type Spectrum = Vec<Complex64>;

/// Block/partition layout of the multi-delay filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdfConfig {
    /// Transform length `N` (a power of two).
    pub block_len: usize,
    /// Number of filter partitions `M`.
    pub partitions: usize,
    pub sample_rate: u32,
}

impl Default for MdfConfig {
    fn default() -> Self {
        Self {
            block_len: 512,
            partitions: 4,
            sample_rate: 16_000,
        }
    }
}

impl MdfConfig {
    /// New samples per block (half overlap).
    pub fn hop(&self) -> usize {
        self.block_len / 2
    }

    /// Total modeled impulse-response length, `M * hop`.
    pub fn filter_len(&self) -> usize {
        self.partitions * self.hop()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_len < 2 || !self.block_len.is_power_of_two() {
            return Err(Error::config(format!(
                "block length {} is not a power of two >= 2",
                self.block_len
            )));
        }
        if self.partitions == 0 {
            return Err(Error::config("partition count must be at least 1"));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        Ok(())
    }

    /// Checks that an impulse response of `len` taps fits into the partitions.
    pub fn check_covers(&self, len: usize) -> Result<()> {
        if len > self.filter_len() {
            return Err(Error::config(format!(
                "{} partitions of {} samples cannot model a {len}-tap response",
                self.partitions,
                self.hop()
            )));
        }
        Ok(())
    }
}

/// Splits a stream into length-`N` blocks advancing by `N/2`.
///
/// The head is zero-padded by one hop so that block 0 ends at sample `hop`;
/// block `l` covers stream samples `[l*hop - hop, l*hop + hop)`. A partial
/// final hop is zero-padded at the tail.
pub fn segment_stream(signal: &[f64], cfg: &MdfConfig) -> Vec<Vec<f64>> {
    let hop = cfg.hop();
    let n = cfg.block_len;
    if signal.is_empty() {
        return Vec::new();
    }
    let blocks = signal.len().div_ceil(hop);
    let mut padded = vec![0.0; n - hop + blocks * hop];
    padded[n - hop..n - hop + signal.len()].copy_from_slice(signal);
    (0..blocks)
        .map(|l| padded[l * hop..l * hop + n].to_vec())
        .collect()
}

/// Planned forward/inverse transform pair of a fixed length.
#[derive(Clone)]
pub struct Transform {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform").field("len", &self.len).finish()
    }
}

impl Transform {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len {
            return Err(Error::config(format!(
                "transform expects {} samples, got {got}",
                self.len
            )));
        }
        Ok(())
    }

    pub fn forward(&self, block: &[f64]) -> Result<Spectrum> {
        self.check_len(block.len())?;
        let mut buf: Spectrum = block.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        Ok(buf)
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self, spec: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.inverse_complex(spec)?.into_iter().map(|c| c.re).collect())
    }

    pub fn inverse_complex(&self, spec: &[Complex64]) -> Result<Spectrum> {
        self.check_len(spec.len())?;
        let mut buf = spec.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        Ok(buf)
    }

    /// Projects a spectrum onto responses supported on the first half of the block:
    /// inverse transform, zero the last `N/2` samples, forward transform.
    pub fn gradient_constraint(&self, spec: &[Complex64]) -> Result<Spectrum> {
        let mut time = self.inverse_complex(spec)?;
        let half = self.len / 2;
        time[half..].fill(Complex64::new(0.0, 0.0));
        self.forward.process(&mut time);
        Ok(time)
    }
}

/// FIFO of the `M` most recent block spectra; `parts[0]` is the newest.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSpectrum {
    parts: VecDeque<Spectrum>,
}

impl PartitionedSpectrum {
    pub fn zeros(partitions: usize, len: usize) -> Self {
        Self {
            parts: (0..partitions)
                .map(|_| vec![Complex64::new(0.0, 0.0); len])
                .collect(),
        }
    }

    pub fn from_parts(parts: Vec<Spectrum>) -> Self {
        Self {
            parts: parts.into(),
        }
    }

    /// Inserts the newest block spectrum, dropping the oldest.
    pub fn shift_in(&mut self, spec: Spectrum) {
        self.parts.pop_back();
        self.parts.push_front(spec);
    }

    pub fn partitions(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, m: usize) -> &Spectrum {
        &self.parts[m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Spectrum> {
        self.parts.iter()
    }
}

/// Overlap-save output of the partitioned filter: the last hop samples of
/// `IFFT(sum_m X(m) H(m))`.
pub fn partitioned_filter(
    x: &PartitionedSpectrum,
    h: &[Spectrum],
    transform: &Transform,
) -> Result<Vec<f64>> {
    if x.partitions() != h.len() {
        return Err(Error::config(format!(
            "input has {} partitions, filter has {}",
            x.partitions(),
            h.len()
        )));
    }
    let n = transform.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (xm, hm) in x.iter().zip(h) {
        if xm.len() != n || hm.len() != n {
            return Err(Error::config("partition spectrum length mismatch"));
        }
        for ((a, xv), hv) in acc.iter_mut().zip(xm).zip(hm) {
            *a += xv * hv;
        }
    }
    let time = transform.inverse(&acc)?;
    Ok(time[n / 2..].to_vec())
}

/// Splits a time-domain response into `M` partition spectra (each partition's
/// `hop` taps placed at the start of a zero block).
pub fn partition_response(h: &[f64], cfg: &MdfConfig, transform: &Transform) -> Result<Vec<Spectrum>> {
    cfg.check_covers(h.len())?;
    let hop = cfg.hop();
    (0..cfg.partitions)
        .map(|m| {
            let mut block = vec![0.0; cfg.block_len];
            let start = (m * hop).min(h.len());
            let end = ((m + 1) * hop).min(h.len());
            block[..end - start].copy_from_slice(&h[start..end]);
            transform.forward(&block)
        })
        .collect()
}

/// Concatenates the first `hop` time samples of each partition.
pub fn assemble_response(h: &[Spectrum], transform: &Transform) -> Result<Vec<f64>> {
    let hop = transform.len() / 2;
    let mut out = Vec::with_capacity(h.len() * hop);
    for part in h {
        let time = transform.inverse(part)?;
        out.extend_from_slice(&time[..hop]);
    }
    Ok(out)
}
