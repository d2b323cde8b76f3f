//! Closed-loop feedback simulation.
//!
//! Per hop `l` the loop performs:
//!
//! 1. `r = h * x` by direct time-domain convolution with the loudspeaker stream,
//! 2. `y = s + r`,
//! 3. `e = y - r_hat` through the [`MdfFilter`],
//! 4. the forward path `e -> fixed delay -> vibrato -> distortion -> gain -> limiter`
//!    producing later loudspeaker samples.
//!
//! The fixed delay must be at least one hop, so the loudspeaker block `l`
//! depends on the error only up to block `l - 1`.

mod matrix;

pub use matrix::{
    aggregate, run_matrix, run_matrix_with, AggregateRow, IrItem, MatrixOutcome, MatrixRow, MatrixSpec, Preprocess,
    Source, SpeechItem, Variant,
};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::buffer::{from_db20, rms, SampleBuffer};
use crate::decorrelate::{DecorrelationConfig, Distorter, VibratoLine};
use crate::dsp::MdfConfig;
use crate::error::{Error, Result};
use crate::kalman::{AdaptationHooks, KalmanParams, MdfFilter};
use crate::metrics::{sd_early_late_with, system_distance, EarlyLate, SdWindows};

/// Level the limiter headroom is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimiterReference {
    /// Peak of the normalized input speech (1.0). At high gains the
    /// amplified speech alone then exceeds the threshold.
    Input,
    /// Peak of the speech after the current forward gain, `g(t) * 1.0`, so
    /// only build-up beyond the intended output level is clipped.
    #[default]
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Final loop gain; `-inf` opens the loop.
    pub gain_db: f64,
    /// Ramp duration; `None` picks the default for `gain_db`.
    pub ramp_s: Option<f64>,
    /// Forward-path delay in samples (at least one hop).
    pub fixed_delay: usize,
    pub limiter_headroom_db: f64,
    pub limiter_reference: LimiterReference,
    pub coupling_db: f64,
    /// Simulated duration; `None` runs for the length of the speech.
    pub duration_s: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            gain_db: 0.0,
            ramp_s: None,
            fixed_delay: 256,
            limiter_headroom_db: 6.0,
            limiter_reference: LimiterReference::Output,
            coupling_db: -10.0,
            duration_s: None,
        }
    }
}

/// Default ramp length for a final gain: 0 dB -> 0 s, 6 -> 1 s, 12 -> 2 s,
/// 30 -> 10 s, linear in between and clamped outside.
pub fn default_ramp_s(final_db: f64) -> f64 {
    const POINTS: [(f64, f64); 4] = [(0.0, 0.0), (6.0, 1.0), (12.0, 2.0), (30.0, 10.0)];
    if !(final_db > 0.0) {
        return 0.0;
    }
    for w in POINTS.windows(2) {
        let ((g0, r0), (g1, r1)) = (w[0], w[1]);
        if final_db <= g1 {
            return r0 + (final_db - g0) / (g1 - g0) * (r1 - r0);
        }
    }
    POINTS[3].1
}

impl LoopConfig {
    pub fn ramp(&self) -> f64 {
        self.ramp_s.unwrap_or_else(|| default_ramp_s(self.gain_db))
    }

    /// Limiter threshold for a forward gain of `gain` (linear).
    pub fn limiter_threshold(&self, gain: f64) -> f64 {
        let headroom = from_db20(self.limiter_headroom_db);
        match self.limiter_reference {
            LimiterReference::Input => headroom,
            // an open loop has no output level; keep the input reference
            LimiterReference::Output if gain > 0.0 => headroom * gain,
            LimiterReference::Output => headroom,
        }
    }

    pub fn validate(&self, mdf: &MdfConfig) -> Result<()> {
        if self.fixed_delay < mdf.hop() {
            return Err(Error::config(format!(
                "fixed delay {} is shorter than one hop ({}); the loop would not be causal",
                self.fixed_delay,
                mdf.hop()
            )));
        }
        if let Some(r) = self.ramp_s {
            if !(r >= 0.0) {
                return Err(Error::config(format!("ramp {r} s must be non-negative")));
            }
        }
        if self.gain_db.is_nan() {
            return Err(Error::config("gain is NaN"));
        }
        if let Some(d) = self.duration_s {
            if !(d >= 0.0) {
                return Err(Error::config(format!("duration {d} s must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Linear loop gain at time `t`: the dB value rises linearly from 0 dB to
/// `final_db` over `ramp_s` seconds and stays there.
pub fn gain_ramp(t: f64, final_db: f64, ramp_s: f64) -> f64 {
    if final_db == f64::NEG_INFINITY {
        return 0.0;
    }
    let db = if ramp_s <= 0.0 || t >= ramp_s {
        final_db
    } else {
        final_db * t.max(0.0) / ramp_s
    };
    from_db20(db)
}

/// Clamps to `[-threshold, threshold]`; the flag reports whether clipping occurred.
pub fn hard_limiter(x: f64, threshold: f64) -> (f64, bool) {
    if x > threshold {
        (threshold, true)
    } else if x < -threshold {
        (-threshold, true)
    } else {
        (x, false)
    }
}

/// Direct-form FIR convolution of a stream, one sample at a time.
#[derive(Debug, Clone)]
pub struct RoomConvolver {
    /// Taps in reverse order so the dot product runs over a contiguous window.
    reversed: Vec<f64>,
    /// Doubled ring buffer: sample `k` is stored at `pos` and `pos + len`.
    ring: Vec<f64>,
    pos: usize,
}

impl RoomConvolver {
    pub fn new(h: &[f64]) -> Self {
        Self {
            reversed: h.iter().rev().copied().collect(),
            ring: vec![0.0; 2 * h.len()],
            pos: 0,
        }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let len = self.reversed.len();
        if len == 0 {
            return 0.0;
        }
        self.ring[self.pos] = x;
        self.ring[self.pos + len] = x;
        self.pos = (self.pos + 1) % len;
        // window holds the last `len` inputs, oldest first
        let window = &self.ring[self.pos..self.pos + len];
        window.iter().zip(&self.reversed).map(|(a, b)| a * b).sum()
    }
}

/// Scale that puts the open-loop feedback level at `target_db` relative to
/// the speech, with the loudspeaker carrying the speech delayed by `delay`.
pub fn coupling_scale(h: &[f64], s: &[f64], target_db: f64, delay: usize) -> Result<f64> {
    let ps = rms(s);
    if !(ps > 0.0) {
        return Err(Error::ZeroPower { what: "speech" });
    }
    if !h.iter().any(|&v| v != 0.0) {
        return Err(Error::ZeroPower { what: "impulse response" });
    }
    let mut conv = RoomConvolver::new(h);
    let r: Vec<f64> = (0..s.len())
        .map(|k| conv.process(if k >= delay { s[k - delay] } else { 0.0 }))
        .collect();
    let pr = rms(&r);
    if !(pr > 0.0) {
        return Err(Error::ZeroPower { what: "feedback signal" });
    }
    Ok(from_db20(target_db) * ps / pr)
}

/// Returns `h` scaled to the target coupling.
pub fn calibrate_coupling(h: &[f64], s: &[f64], target_db: f64, delay: usize) -> Result<Vec<f64>> {
    let g = coupling_scale(h, s, target_db, delay)?;
    Ok(h.iter().map(|v| v * g).collect())
}

/// Numerical breakdown that ended a run early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFault {
    pub block: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Enhanced output `e`.
    pub e_signal: SampleBuffer,
    /// Loudspeaker signal `x`.
    pub x_signal: SampleBuffer,
    /// Clean speech after peak normalization, aligned with `e_signal`.
    pub s_signal: SampleBuffer,
    /// Linear system distance per block.
    pub sd_trace: Vec<f64>,
    pub overflow_count: usize,
    pub total_samples: usize,
    pub hop: usize,
    pub loop_config: LoopConfig,
    pub decorrelation: DecorrelationConfig,
    /// Distortion scale actually used.
    pub distortion_sc: Option<f64>,
    pub fault: Option<SimFault>,
}

impl RunResult {
    pub fn overflow_pct(&self) -> f64 {
        if self.total_samples == 0 {
            return 0.0;
        }
        100.0 * self.overflow_count as f64 / self.total_samples as f64
    }

    pub fn early_late(&self, windows: &SdWindows) -> EarlyLate {
        sd_early_late_with(
            &self.sd_trace,
            self.e_signal.sample_rate as f64,
            self.hop,
            windows,
        )
    }
}

/// Forward path from the error signal to the loudspeaker.
struct ForwardPath {
    delay: VecDeque<f64>,
    vibrato: VibratoLine,
    distorter: Distorter,
    cfg: LoopConfig,
    final_db: f64,
    ramp_s: f64,
    fs: f64,
}

impl ForwardPath {
    fn pop_block(&mut self, start: usize, len: usize, overflows: &mut usize) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let v = self.delay.pop_front().unwrap_or(0.0);
                let v = self.vibrato.process(v);
                let v = self.distorter.process(v);
                let g = gain_ramp((start + i) as f64 / self.fs, self.final_db, self.ramp_s);
                let (v, clipped) = hard_limiter(g * v, self.cfg.limiter_threshold(g));
                *overflows += clipped as usize;
                v
            })
            .collect()
    }
}

/// Runs the closed loop on speech `s` with the (already calibrated) room response `h`.
pub fn run_simulation(
    s: &SampleBuffer,
    h: &[f64],
    cfg: &LoopConfig,
    mdf: &MdfConfig,
    kal: &KalmanParams,
    dec: &DecorrelationConfig,
) -> Result<RunResult> {
    mdf.validate()?;
    cfg.validate(mdf)?;
    dec.distortion.validate()?;
    if s.sample_rate != mdf.sample_rate {
        return Err(Error::config(format!(
            "speech is sampled at {} Hz, filter runs at {} Hz",
            s.sample_rate, mdf.sample_rate
        )));
    }
    if h.is_empty() {
        return Err(Error::config("empty impulse response"));
    }
    // system distance is undefined for a silent room; the trace stays empty
    let h_audible = h.iter().any(|&v| v != 0.0);
    mdf.check_covers(h.len())?;

    let fs = mdf.sample_rate as f64;
    let hop = mdf.hop();
    let total = match cfg.duration_s {
        Some(d) => (d * fs).round() as usize,
        None => s.len(),
    };
    let mut speech = s.samples.clone();
    speech.resize(total, 0.0);
    let mut speech = SampleBuffer::new(speech, s.sample_rate);
    speech.normalize_peak(1.0);

    let distortion_sc = if dec.distortion.enabled {
        Some(match dec.distortion.sc {
            Some(sc) => sc,
            None => dec.distortion.calibrate_on(&speech.samples)?,
        })
    } else {
        None
    };

    let hooks = AdaptationHooks {
        edo: dec.edo,
        prediction: dec.prediction,
    };
    let mut filter = MdfFilter::new(*mdf, *kal, hooks)?;
    let mut room = RoomConvolver::new(h);
    let ramp_s = cfg.ramp();
    let mut fwd = ForwardPath {
        delay: std::iter::repeat_n(0.0, cfg.fixed_delay).collect(),
        vibrato: VibratoLine::new(dec.vibrato, mdf.sample_rate),
        distorter: Distorter::with_scale(dec.distortion, distortion_sc.unwrap_or(1.0)),
        cfg: *cfg,
        final_db: cfg.gain_db,
        ramp_s,
        fs,
    };

    let blocks = total.div_ceil(hop);
    let mut e_out = Vec::with_capacity(blocks * hop);
    let mut x_out = Vec::with_capacity(blocks * hop);
    let mut sd_trace = Vec::with_capacity(blocks);
    let mut overflows = 0usize;
    let mut fault = None;

    for l in 0..blocks {
        let start = l * hop;
        let x_block = fwd.pop_block(start, hop, &mut overflows);
        let y_block: Vec<f64> = x_block
            .iter()
            .enumerate()
            .map(|(i, &x)| room.process(x) + speech.samples.get(start + i).copied().unwrap_or(0.0))
            .collect();
        let g_lin = gain_ramp(start as f64 / fs, cfg.gain_db, ramp_s);
        match filter.step(&x_block, &y_block, g_lin) {
            Ok(out) => {
                fwd.delay.extend(out.error.iter().copied());
                e_out.extend_from_slice(&out.error);
                x_out.extend_from_slice(&x_block);
                if h_audible {
                    sd_trace.push(system_distance(h, &filter.impulse_response()?)?);
                }
            }
            Err(Error::NonFinite { what, block }) => {
                fault = Some(SimFault {
                    block,
                    message: format!("non-finite {what}"),
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let done = e_out.len().min(total);
    e_out.truncate(done);
    x_out.truncate(done);
    speech.samples.truncate(done);

    Ok(RunResult {
        e_signal: SampleBuffer::new(e_out, mdf.sample_rate),
        x_signal: SampleBuffer::new(x_out, mdf.sample_rate),
        s_signal: speech,
        sd_trace,
        overflow_count: overflows,
        total_samples: done,
        hop,
        loop_config: *cfg,
        decorrelation: *dec,
        distortion_sc,
        fault,
    })
}
