use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VibratoParams {
    /// Modulation depth in milliseconds.
    pub max_delay_ms: f64,
    pub mod_freq_hz: f64,
    pub enabled: bool,
}

impl Default for VibratoParams {
    fn default() -> Self {
        Self {
            max_delay_ms: 2.0,
            mod_freq_hz: 1.0,
            enabled: false,
        }
    }
}

/// Sinusoidally modulated delay line with first-order allpass interpolation.
///
/// The instantaneous delay is `D_c + D_m sin(2 pi f k / fs)` samples with
/// `D_m = max_delay_ms * fs / 1000` and `D_c = D_m + 2`, so it never drops
/// below two samples. The delay is split into an integer tap and a fractional
/// part in `[0.5, 1.5)` realized by the allpass.
#[derive(Debug, Clone)]
pub struct VibratoLine {
    enabled: bool,
    depth: f64,
    center: f64,
    phase_step: f64,
    ring: Vec<f64>,
    pos: usize,
    k: u64,
    y_prev: f64,
}

impl VibratoLine {
    pub fn new(params: VibratoParams, sample_rate: u32) -> Self {
        let depth = (params.max_delay_ms.max(0.0) * sample_rate as f64 / 1000.0).max(0.0);
        let center = depth + 2.0;
        let ring_len = (center + depth).ceil() as usize + 4;
        Self {
            enabled: params.enabled,
            depth,
            center,
            phase_step: 2.0 * PI * params.mod_freq_hz.max(0.0) / sample_rate as f64,
            ring: vec![0.0; ring_len],
            pos: 0,
            k: 0,
            y_prev: 0.0,
        }
    }

    /// Delay in samples applied at the next call to [`process`](Self::process).
    pub fn current_delay(&self) -> f64 {
        self.center + self.depth * (self.phase_step * self.k as f64).sin()
    }

    /// Allpass coefficient for a fractional delay `d_f`.
    pub fn allpass_coefficient(d_f: f64) -> f64 {
        (1.0 - d_f) / (1.0 + d_f)
    }

    fn tap(&self, delay: usize) -> f64 {
        let n = self.ring.len();
        self.ring[(self.pos + n - delay) % n]
    }

    pub fn process(&mut self, x: f64) -> f64 {
        if !self.enabled {
            return x;
        }
        self.ring[self.pos] = x;
        let d = self.current_delay();
        let int = (d - 0.5).floor().max(0.0) as usize;
        let frac = d - int as f64;
        let a = Self::allpass_coefficient(frac);
        let v = self.tap(int);
        let v_prev = self.tap(int + 1);
        let y = a * (v - self.y_prev) + v_prev;
        self.y_prev = y;
        self.pos = (self.pos + 1) % self.ring.len();
        self.k += 1;
        y
    }

    pub fn process_block(&mut self, block: &mut [f64]) {
        block.iter_mut().for_each(|v| *v = self.process(*v));
    }
}
