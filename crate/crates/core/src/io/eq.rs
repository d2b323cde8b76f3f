//! Bass reduction for measured room responses.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::buffer::SampleBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_EQ_CUTOFF_HZ: f64 = 100.0;

/// Second-order Butterworth high-pass at `cutoff_hz`, output truncated to the input length.
/// A cutoff of 0 returns the response unchanged.
pub fn low_freq_eq(h: &SampleBuffer, cutoff_hz: f64) -> Result<SampleBuffer> {
    let fs = h.sample_rate as f64;
    if !(cutoff_hz >= 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(Error::config(format!(
            "equalizer cutoff {cutoff_hz} Hz must lie in [0, {}) Hz",
            fs / 2.0
        )));
    }
    if cutoff_hz == 0.0 {
        return Ok(h.clone());
    }
    let w0 = 2.0 * PI * cutoff_hz / fs;
    let alpha = w0.sin() / (2.0 * FRAC_1_SQRT_2);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let b0 = (1.0 + cos) / 2.0 / a0;
    let b1 = -(1.0 + cos) / a0;
    let b2 = b0;
    let a1 = -2.0 * cos / a0;
    let a2 = (1.0 - alpha) / a0;

    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let samples = h
        .samples
        .iter()
        .map(|&x| {
            let y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            y
        })
        .collect();
    Ok(SampleBuffer::new(samples, h.sample_rate))
}
