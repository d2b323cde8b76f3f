//! System distance and early/late convergence metrics.

use serde::{Deserialize, Serialize};

use crate::buffer::db20;
use crate::error::{Error, Result};

/// `||h - h_hat|| / ||h||`. The estimate is zero-padded or truncated to `h.len()`.
pub fn system_distance(h: &[f64], h_hat: &[f64]) -> Result<f64> {
    let norm_h = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm_h > 0.0) {
        return Err(Error::ZeroPower { what: "true impulse response" });
    }
    let diff: f64 = h
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let d = v - h_hat.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum();
    Ok(diff.sqrt() / norm_h)
}

/// Averaging windows for the early and late system distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdWindows {
    pub early_start_s: f64,
    pub early_end_s: f64,
    pub late_start_s: f64,
    /// `None` averages until the end of the trace.
    pub late_end_s: Option<f64>,
}

impl Default for SdWindows {
    fn default() -> Self {
        Self {
            early_start_s: 4.0,
            early_end_s: 6.0,
            late_start_s: 20.0,
            late_end_s: None,
        }
    }
}

/// Early and late averages of a system-distance trace, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EarlyLate {
    pub sd5_db: Option<f64>,
    pub sd20plus_db: Option<f64>,
}

/// Time of the center of block `l`'s new samples.
pub fn block_center_s(l: usize, hop: usize, fs: f64) -> f64 {
    (l as f64 + 0.5) * hop as f64 / fs
}

/// Averages the linear trace over block centers in `[4, 6]` s and `(20 s, end]`.
///
/// A window the trace does not fully reach yields `None`.
pub fn sd_early_late(trace: &[f64], fs: f64, hop: usize) -> EarlyLate {
    sd_early_late_with(trace, fs, hop, &SdWindows::default())
}

pub fn sd_early_late_with(trace: &[f64], fs: f64, hop: usize, w: &SdWindows) -> EarlyLate {
    let duration = trace.len() as f64 * hop as f64 / fs;
    let mean_where = |pred: &dyn Fn(f64) -> bool| {
        let (sum, count) = trace
            .iter()
            .enumerate()
            .filter(|(l, _)| pred(block_center_s(*l, hop, fs)))
            .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
        (count > 0).then(|| db20(sum / count as f64))
    };
    let sd5_db = if duration >= w.early_end_s {
        mean_where(&|t| t >= w.early_start_s && t <= w.early_end_s)
    } else {
        None
    };
    let sd20plus_db = if duration > w.late_start_s {
        let end = w.late_end_s.unwrap_or(f64::INFINITY);
        mean_where(&|t| t > w.late_start_s && t <= end)
    } else {
        None
    };
    EarlyLate { sd5_db, sd20plus_db }
}

/// Metrics of one simulation run together with its descriptive metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ordinal: usize,
    pub speech: String,
    pub speaker: String,
    pub ir: String,
    pub gain_db: f64,
    pub variant: String,
    pub vibrato: bool,
    pub distortion: bool,
    pub edo: bool,
    pub prediction: bool,
    pub sd5_db: Option<f64>,
    pub sd20plus_db: Option<f64>,
    pub overflow_pct: f64,
    pub blocks: usize,
    pub status: String,
    /// Linear system distance per block.
    #[serde(skip)]
    pub sd_trace: Vec<f64>,
}

impl MetricsReport {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_cases() {
        let h = [1.0, 0.0];
        assert_eq!(system_distance(&h, &h).unwrap(), 0.0);
        assert_eq!(system_distance(&h, &[]).unwrap(), 1.0);
        let sd = system_distance(&h, &[0.9, 0.1]).unwrap();
        assert!((sd - 0.02f64.sqrt()).abs() < 1e-15);
        assert!(system_distance(&[0.0, 0.0], &h).is_err());
    }

    #[test]
    fn distance_is_scale_aware() {
        let h = [0.3, -0.2, 0.7, 0.05];
        for c in [0.5, 1.5, -1.0] {
            let hh: Vec<f64> = h.iter().map(|v| c * v).collect();
            let sd = system_distance(&h, &hh).unwrap();
            assert!((sd - (1.0 - c).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_trace() {
        let trace = vec![0.1; 2000];
        let el = sd_early_late(&trace, 16_000.0, 256);
        assert!((el.sd5_db.unwrap() + 20.0).abs() < 1e-9);
        assert!((el.sd20plus_db.unwrap() + 20.0).abs() < 1e-9);
    }

    #[test]
    fn short_trace_has_no_windows() {
        let trace = vec![0.5; 200]; // 3.2 s
        let el = sd_early_late(&trace, 16_000.0, 256);
        assert_eq!(el, EarlyLate::default());
    }

    #[test]
    fn step_trace() {
        let hop = 256;
        let fs = 16_000.0;
        let trace: Vec<f64> = (0..2000)
            .map(|l| if block_center_s(l, hop, fs) < 10.0 { 1.0 } else { 0.01 })
            .collect();
        let el = sd_early_late(&trace, fs, hop);
        assert!(el.sd5_db.unwrap().abs() < 1e-12);
        assert!((el.sd20plus_db.unwrap() + 40.0).abs() < 1e-9);
    }
}
