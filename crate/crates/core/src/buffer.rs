//! Mono time-domain signal container.

use serde::{Deserialize, Serialize};

/// A mono signal together with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Scales the buffer so its absolute peak equals `target`. Silent buffers are left untouched.
    pub fn normalize_peak(&mut self, target: f64) {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            self.samples.iter_mut().for_each(|v| *v *= g);
        }
    }

    /// Repeats the signal end-to-end until it is at least `seconds` long, then truncates.
    pub fn repeat_to(&self, seconds: f64) -> SampleBuffer {
        let target = (seconds * self.sample_rate as f64).round() as usize;
        if self.samples.is_empty() || target <= self.samples.len() {
            return self.clone();
        }
        let samples = self.samples.iter().copied().cycle().take(target).collect();
        SampleBuffer::new(samples, self.sample_rate)
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn db20(lin: f64) -> f64 {
    20.0 * lin.log10()
}

pub fn from_db20(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_reaches_target_length() {
        let b = SampleBuffer::new(vec![1.0, 2.0, 3.0], 10);
        let r = b.repeat_to(0.8);
        assert_eq!(r.samples, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0]);
    }

    #[test]
    fn normalize_peak_handles_negative_peak() {
        let mut b = SampleBuffer::new(vec![0.25, -0.5], 8000);
        b.normalize_peak(1.0);
        assert_eq!(b.samples, vec![0.5, -1.0]);
    }
}
