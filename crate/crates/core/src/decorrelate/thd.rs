use std::f64::consts::PI;

use super::distortion::{Curve, Distorter, DistortionParams};
use crate::error::{Error, Result};

/// Power of each harmonic `k * f0` for `k = 1, 2, ...` up to `fs / 2`.
///
/// `f0` must fall on an analysis bin of the signal length so that no leakage
/// enters the measurement.
pub fn harmonic_powers(signal: &[f64], f0: f64, fs: f64) -> Result<Vec<f64>> {
    let len = signal.len();
    if len == 0 || !(f0 > 0.0) || !(fs > 0.0) {
        return Err(Error::config("THD needs a non-empty signal and positive f0, fs"));
    }
    let bin = f0 * len as f64 / fs;
    let bin_int = bin.round();
    if bin_int < 1.0 || (bin - bin_int).abs() > 1e-9 {
        return Err(Error::config(format!(
            "{f0} Hz is not on the analysis grid of {len} samples at {fs} Hz"
        )));
    }
    let bin = bin_int as usize;
    let mut powers = Vec::new();
    let mut k = 1;
    while 2 * k * bin <= len {
        let b = (k * bin) % len;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &x) in signal.iter().enumerate() {
            let ph = 2.0 * PI * ((b * n) % len) as f64 / len as f64;
            re += x * ph.cos();
            im -= x * ph.sin();
        }
        powers.push(re * re + im * im);
        k += 1;
    }
    Ok(powers)
}

/// Total harmonic distortion in percent: `100 sqrt(sum_{k>=2} P_k / P_1)`.
pub fn measure_thd(signal: &[f64], f0: f64, fs: f64) -> Result<f64> {
    let p = harmonic_powers(signal, f0, fs)?;
    if !(p[0] > 0.0) {
        return Err(Error::ZeroPower { what: "fundamental" });
    }
    let higher: f64 = p[1..].iter().sum();
    Ok(100.0 * (higher / p[0]).sqrt())
}

/// Sine stimulus used to measure a curve's THD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThdProbe {
    pub freq_hz: f64,
    pub magnitude: f64,
    pub sample_rate: f64,
    /// Settling time for the curve-4 variance tracker, discarded before analysis.
    pub warmup_samples: usize,
    pub analysis_samples: usize,
}

impl Default for ThdProbe {
    /// 400 Hz at magnitude 0.5, 16 kHz.
    fn default() -> Self {
        Self {
            freq_hz: 400.0,
            magnitude: 0.5,
            sample_rate: 16_000.0,
            warmup_samples: 8_000,
            analysis_samples: 4_000,
        }
    }
}

impl ThdProbe {
    pub fn sine(&self) -> Vec<f64> {
        (0..self.warmup_samples + self.analysis_samples)
            .map(|k| self.magnitude * (2.0 * PI * self.freq_hz * k as f64 / self.sample_rate).sin())
            .collect()
    }

    /// Distorted probe with the warm-up removed.
    pub fn distort(&self, params: DistortionParams) -> Vec<f64> {
        let mut d = Distorter::with_scale(DistortionParams { enabled: true, ..params }, 1.0);
        let out: Vec<f64> = self.sine().into_iter().map(|x| d.process(x)).collect();
        out[self.warmup_samples..].to_vec()
    }
}

/// THD of `curve` mixed at `mix_alpha` for the given probe.
pub fn curve_thd(curve: Curve, mix_alpha: f64, probe: &ThdProbe) -> Result<f64> {
    let params = DistortionParams {
        curve,
        mix_alpha,
        ..DistortionParams::default()
    };
    measure_thd(&probe.distort(params), probe.freq_hz, probe.sample_rate)
}

/// Bisects the mix factor that yields `target_thd` percent on the default probe.
pub fn calibrate_alpha(curve: Curve, target_thd: f64) -> Result<f64> {
    calibrate_alpha_with(curve, target_thd, &ThdProbe::default(), 0.05)
}

pub fn calibrate_alpha_with(
    curve: Curve,
    target_thd: f64,
    probe: &ThdProbe,
    tol_pp: f64,
) -> Result<f64> {
    let max = curve_thd(curve, 1.0, probe)?;
    if !(target_thd >= 0.0) || target_thd > max {
        return Err(Error::UnachievableThd {
            curve: curve.id(),
            target: target_thd,
            max,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut mid = 0.5;
    for _ in 0..60 {
        mid = 0.5 * (lo + hi);
        let thd = curve_thd(curve, mid, probe)?;
        if (thd - target_thd).abs() <= tol_pp || hi - lo < 1e-9 {
            break;
        }
        if thd < target_thd {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_sine_has_no_thd() {
        let probe = ThdProbe::default();
        let thd = measure_thd(&probe.sine()[..4000], 400.0, 16_000.0).unwrap();
        assert!(thd < 1e-9, "{thd}");
    }

    #[test]
    fn off_grid_frequency_is_rejected() {
        let x = vec![0.0; 1000];
        assert!(measure_thd(&x, 401.0, 16_000.0).is_err());
    }

    #[test]
    fn known_two_harmonic_signal() {
        let x: Vec<f64> = (0..1600)
            .map(|k| {
                let t = 2.0 * PI * 400.0 * k as f64 / 16_000.0;
                t.sin() + 0.1 * (3.0 * t).sin() + 0.05 * (2.0 * t).cos()
            })
            .collect();
        let thd = measure_thd(&x, 400.0, 16_000.0).unwrap();
        let expected = 100.0 * (0.1f64.powi(2) + 0.05f64.powi(2)).sqrt();
        assert!((thd - expected).abs() < 1e-9, "{thd} vs {expected}");
    }

    #[test]
    fn unachievable_target_names_the_maximum() {
        match calibrate_alpha(Curve::SignedSquare, 90.0) {
            Err(Error::UnachievableThd { max, .. }) => assert!(max > 0.0 && max < 90.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
