use serde::{Deserialize, Serialize};

use crate::buffer::rms;
use crate::error::{Error, Result};

/// Memoryless non-linear curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Curve {
    /// `0.5 (x + |x|)`
    HalfWave = 1,
    /// `x |x|`
    SignedSquare = 2,
    /// Mean of half-wave and signed square.
    Combined = 3,
    /// `0.5 (x + sqrt(x^2 + c^2))` with a level-adaptive knee `c`.
    SmoothedHalfWave = 4,
}

impl Curve {
    pub const ALL: [Curve; 4] = [
        Curve::HalfWave,
        Curve::SignedSquare,
        Curve::Combined,
        Curve::SmoothedHalfWave,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Curve {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Curve::HalfWave),
            2 => Ok(Curve::SignedSquare),
            3 => Ok(Curve::Combined),
            4 => Ok(Curve::SmoothedHalfWave),
            _ => Err(Error::config(format!("unknown distortion curve {id}"))),
        }
    }
}

impl From<Curve> for u8 {
    fn from(c: Curve) -> u8 {
        c.id()
    }
}

pub fn nonlinear_curve(x: f64, curve: Curve, c: f64) -> f64 {
    let half = 0.5 * (x + x.abs());
    match curve {
        Curve::HalfWave => half,
        Curve::SignedSquare => x * x.abs(),
        Curve::Combined => 0.5 * (half + x * x.abs()),
        Curve::SmoothedHalfWave => 0.5 * (x + (x * x + c * c).sqrt()),
    }
}

/// One step of the recursive variance estimate.
pub fn track_variance(sigma2_prev: f64, x: f64, beta: f64) -> f64 {
    (1.0 - beta) * sigma2_prev + beta * x * x
}

/// Balanced mix of clean and distorted signal, `sc ((1 - alpha) x + alpha y)`.
pub fn scaled_mix(x: &[f64], y_curve: &[f64], mix_alpha: f64, sc: f64) -> Result<Vec<f64>> {
    if x.len() != y_curve.len() {
        return Err(Error::config(format!(
            "mix inputs differ in length: {} vs {}",
            x.len(),
            y_curve.len()
        )));
    }
    Ok(x.iter()
        .zip(y_curve)
        .map(|(a, b)| sc * ((1.0 - mix_alpha) * a + mix_alpha * b))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionParams {
    pub curve: Curve,
    pub mix_alpha: f64,
    /// Power-preserving scale; `None` calibrates it on the clean speech before a run.
    pub sc: Option<f64>,
    pub beta: f64,
    pub knee_factor: f64,
    pub enabled: bool,
}

impl Default for DistortionParams {
    fn default() -> Self {
        Self {
            curve: Curve::HalfWave,
            mix_alpha: 0.202,
            sc: None,
            beta: 0.005,
            knee_factor: 0.65,
            enabled: false,
        }
    }
}

impl DistortionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_alpha) {
            return Err(Error::config(format!("mix alpha {} outside [0, 1]", self.mix_alpha)));
        }
        if let Some(sc) = self.sc {
            if !(sc > 0.0) {
                return Err(Error::config(format!("scale {sc} must be positive")));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta {} outside (0, 1)", self.beta)));
        }
        if !(self.knee_factor >= 0.0) {
            return Err(Error::config("knee factor must be non-negative"));
        }
        Ok(())
    }
}

/// Per-sample distortion stage holding the variance tracker of curve 4.
#[derive(Debug, Clone)]
pub struct Distorter {
    params: DistortionParams,
    sc: f64,
    sigma2: f64,
}

impl Distorter {
    /// An unscaled `sc` is treated as 1.
    pub fn new(params: DistortionParams) -> Self {
        Self {
            params,
            sc: params.sc.unwrap_or(1.0),
            sigma2: 0.0,
        }
    }

    pub fn with_scale(params: DistortionParams, sc: f64) -> Self {
        Self {
            params,
            sc,
            sigma2: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.sc
    }

    /// Curve output `y_cnb` for the next sample (updates the variance tracker).
    pub fn curve_sample(&mut self, x: f64) -> f64 {
        let c = match self.params.curve {
            Curve::SmoothedHalfWave => {
                self.sigma2 = track_variance(self.sigma2, x, self.params.beta);
                self.params.knee_factor * self.sigma2.sqrt()
            }
            _ => 0.0,
        };
        nonlinear_curve(x, self.params.curve, c)
    }

    pub fn process(&mut self, x: f64) -> f64 {
        if !self.params.enabled {
            return x;
        }
        let y = self.curve_sample(x);
        let a = self.params.mix_alpha;
        self.sc * ((1.0 - a) * x + a * y)
    }

    /// Curve output for a whole signal, starting from a fresh tracker.
    pub fn curve_signal(params: DistortionParams, x: &[f64]) -> Vec<f64> {
        let mut d = Distorter::new(params);
        x.iter().map(|&v| d.curve_sample(v)).collect()
    }
}

/// Scale that gives the mixed signal the power of the clean input.
pub fn calibrate_sc(x: &[f64], y_mixed_unscaled: &[f64]) -> Result<f64> {
    let px = rms(x);
    if !(px > 0.0) {
        return Err(Error::ZeroPower { what: "clean input" });
    }
    let py = rms(y_mixed_unscaled);
    if !(py > 0.0) {
        return Err(Error::ZeroPower { what: "mixed signal" });
    }
    Ok(px / py)
}

impl DistortionParams {
    /// `sc` for this configuration on the clean signal `x`.
    pub fn calibrate_on(&self, x: &[f64]) -> Result<f64> {
        let y = Distorter::curve_signal(*self, x);
        let mixed = scaled_mix(x, &y, self.mix_alpha, 1.0)?;
        calibrate_sc(x, &mixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_values() {
        assert_eq!(nonlinear_curve(-0.5, Curve::HalfWave, 0.0), 0.0);
        assert_eq!(nonlinear_curve(0.5, Curve::HalfWave, 0.0), 0.5);
        assert_eq!(nonlinear_curve(-0.5, Curve::SignedSquare, 0.0), -0.25);
        assert_eq!(nonlinear_curve(-0.5, Curve::Combined, 0.0), -0.125);
        assert!((nonlinear_curve(0.0, Curve::SmoothedHalfWave, 0.2) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn variance_recursion() {
        assert_eq!(track_variance(0.0, 2.0, 0.5), 2.0);
        let mut s = 1.0;
        for _ in 0..2000 {
            s = track_variance(s, 0.0, 0.005);
        }
        assert!(s < 1e-4);
        let mut s = 0.0;
        for _ in 0..20_000 {
            s = track_variance(s, 1.0, 0.005);
        }
        assert!((s - 1.0).abs() < 1e-12);
        assert!((0.65 * s.sqrt() - 0.65).abs() < 1e-12);
    }

    #[test]
    fn mix_endpoints() {
        let x = [0.1, -0.4, 0.3];
        let y = [0.5, 0.0, -0.2];
        assert_eq!(scaled_mix(&x, &y, 0.0, 1.0).unwrap(), x.to_vec());
        assert_eq!(scaled_mix(&x, &y, 1.0, 1.0).unwrap(), y.to_vec());
        assert!(scaled_mix(&x, &y[..2], 0.5, 1.0).is_err());
    }

    #[test]
    fn calibrated_mix_preserves_power() {
        let x: Vec<f64> = (0..8000).map(|k| (k as f64 * 0.05).sin() * (k as f64 * 0.001).cos()).collect();
        let params = DistortionParams { mix_alpha: 0.4, ..Default::default() };
        let sc = params.calibrate_on(&x).unwrap();
        assert!(sc > 1.0, "half-wave loses power, sc = {sc}");
        let y = Distorter::curve_signal(params, &x);
        let out = scaled_mix(&x, &y, 0.4, sc).unwrap();
        let db = 20.0 * (rms(&out) / rms(&x)).log10();
        assert!(db.abs() < 0.1);
    }

    #[test]
    fn sc_trivial_cases() {
        let x = [0.2, -0.3, 0.5];
        let params = DistortionParams { mix_alpha: 0.0, ..Default::default() };
        assert_eq!(params.calibrate_on(&x).unwrap(), 1.0);
        assert_eq!(calibrate_sc(&x, &x).unwrap(), 1.0);
        assert!(calibrate_sc(&[0.0; 3], &x).is_err());
    }

    #[test]
    fn curve_ids_round_trip() {
        for c in Curve::ALL {
            assert_eq!(Curve::try_from(c.id()).unwrap(), c);
        }
        assert!(Curve::try_from(5).is_err());
    }
}
