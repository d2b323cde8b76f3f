//! Partitioned frequency-domain Kalman filter in a multi-delay structure.
//!
//! Per bin `n` and partition `m` the state is the filter estimate
//! `H(m, n)`, its error covariance `P(m, n)` and the shared observation-noise
//! PSD `psi_s(n)`. The recursion is the diagonalized form:
//!
//! ```text
//! predict:  P <- A^2 P + (1 - A^2) |H|^2,  H <- A H
//! noise:    psi_s <- (1 - gamma) psi_s + gamma |E|^2
//! update:   D = sum_m |X_w|^2 P + kalman_alpha psi_s + delta
//!           K = edo P conj(X_w) / D,  H <- constrain(H + K E)
//!           P <- max(0, 1 - Re{P |X_w|^2 / D}) P
//! ```
//!
//! `kalman_alpha` scales the observation-noise term and `delta` is a
//! regularization floor on the denominator. The EDO scale enters only the
//! step on `H`; the covariance shrinks with the unscaled gain so that a scale
//! above one cannot collapse `P`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decorrelate::{edo_compute, EdoParams, EdoScale};
use crate::dsp::{
    assemble_response, partition_response, partitioned_filter, MdfConfig, PartitionedSpectrum,
    Spectrum, Transform,
};
use crate::error::{Error, Result};
use crate::prediction::{PredictionParams, Prewhitener};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    pub kalman_alpha: f64,
    /// Smoothing constant of the noise PSD estimate.
    pub gamma: f64,
    pub delta: f64,
    /// State transition factor `A`.
    pub transition: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            kalman_alpha: 1.0,
            gamma: 0.1,
            delta: 0.2,
            transition: 0.99999,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.transition > 0.0 && self.transition <= 1.0) {
            return Err(Error::config(format!("transition {} outside (0, 1]", self.transition)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        if !(self.kalman_alpha > 0.0) {
            return Err(Error::config("kalman_alpha must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdfState {
    pub h_hat: Vec<Spectrum>,
    pub p: Vec<Vec<f64>>,
    pub psi_s: Vec<f64>,
    /// Filtering-path input spectra.
    pub x_hist: PartitionedSpectrum,
    /// Adaptation-path input spectra (prewhitened when prediction is on).
    pub x_hist_white: PartitionedSpectrum,
}

impl MdfState {
    /// `H = 0`, `P = 1`, `psi_s = delta`.
    pub fn new(cfg: &MdfConfig, params: &KalmanParams) -> Self {
        let n = cfg.block_len;
        let m = cfg.partitions;
        Self {
            h_hat: vec![vec![Complex64::new(0.0, 0.0); n]; m],
            p: vec![vec![1.0; n]; m],
            psi_s: vec![params.delta; n],
            x_hist: PartitionedSpectrum::zeros(m, n),
            x_hist_white: PartitionedSpectrum::zeros(m, n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h_hat.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.p.iter().flatten().all(|v| v.is_finite())
            && self.psi_s.iter().all(|v| v.is_finite())
    }
}

pub fn kalman_predict(state: &mut MdfState, params: &KalmanParams) {
    let a = params.transition;
    let a2 = a * a;
    for (hm, pm) in state.h_hat.iter_mut().zip(state.p.iter_mut()) {
        for (h, p) in hm.iter_mut().zip(pm.iter_mut()) {
            *p = a2 * *p + (1.0 - a2) * h.norm_sqr();
            *h *= a;
        }
    }
}

pub fn estimate_noise_psd(psi_s: &mut [f64], e: &[Complex64], params: &KalmanParams) {
    let g = params.gamma;
    for (psi, ev) in psi_s.iter_mut().zip(e) {
        *psi = (1.0 - g) * *psi + g * ev.norm_sqr();
    }
}

/// Measurement update with the half-segment adaptation error `e_half`.
pub fn kalman_update(
    state: &mut MdfState,
    e_half: &[Complex64],
    params: &KalmanParams,
    edo: Option<&EdoScale>,
    transform: &Transform,
) -> Result<()> {
    let n_bins = transform.len();
    if e_half.len() != n_bins {
        return Err(Error::config("error spectrum length mismatch"));
    }
    let xw: Vec<&Spectrum> = state.x_hist_white.iter().collect();
    let denom: Vec<f64> = (0..n_bins)
        .map(|n| {
            let s: f64 = xw
                .iter()
                .zip(&state.p)
                .map(|(x, p)| x[n].norm_sqr() * p[n])
                .sum();
            s + params.kalman_alpha * state.psi_s[n] + params.delta
        })
        .collect();

    for (m, (hm, pm)) in state.h_hat.iter_mut().zip(state.p.iter_mut()).enumerate() {
        let x = xw[m];
        let mut step = vec![Complex64::new(0.0, 0.0); n_bins];
        for n in 0..n_bins {
            let gain = pm[n] / denom[n];
            let scale = edo.map_or(1.0, |s| s.factor(m, n));
            step[n] = scale * gain * x[n].conj() * e_half[n];
            pm[n] = (pm[n] * (1.0 - gain * x[n].norm_sqr())).max(0.0);
        }
        if step.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        for (h, s) in hm.iter_mut().zip(&step) {
            *h += s;
        }
        *hm = transform.gradient_constraint(hm)?;
    }
    Ok(())
}

/// Adaptation extensions active on a filter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdaptationHooks {
    pub edo: EdoParams,
    pub prediction: PredictionParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `e = y - r_hat` for the new hop.
    pub error: Vec<f64>,
    pub echo_estimate: Vec<f64>,
}

/// Block-synchronous feedback canceller: one call per hop of new samples.
#[derive(Debug, Clone)]
pub struct MdfFilter {
    cfg: MdfConfig,
    params: KalmanParams,
    hooks: AdaptationHooks,
    transform: Transform,
    state: MdfState,
    x_block: Vec<f64>,
    whitener: Option<Prewhitener>,
    frozen: bool,
    blocks: usize,
}

impl MdfFilter {
    pub fn new(cfg: MdfConfig, params: KalmanParams, hooks: AdaptationHooks) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        hooks.edo.validate()?;
        let whitener = if hooks.prediction.enabled {
            Some(Prewhitener::new(hooks.prediction, cfg)?)
        } else {
            None
        };
        Ok(Self {
            transform: Transform::new(cfg.block_len),
            state: MdfState::new(&cfg, &params),
            x_block: vec![0.0; cfg.block_len],
            cfg,
            params,
            hooks,
            whitener,
            frozen: false,
            blocks: 0,
        })
    }

    pub fn config(&self) -> &MdfConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MdfState {
        &self.state
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn blocks_processed(&self) -> usize {
        self.blocks
    }

    pub fn whitener(&self) -> Option<&Prewhitener> {
        self.whitener.as_ref()
    }

    /// Stops all state updates; filtering continues with the current estimate.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Replaces the estimate with a time-domain response.
    pub fn load_response(&mut self, h: &[f64]) -> Result<()> {
        self.state.h_hat = partition_response(h, &self.cfg, &self.transform)?;
        Ok(())
    }

    /// Current estimate as `M * hop` time-domain taps.
    pub fn impulse_response(&self) -> Result<Vec<f64>> {
        assemble_response(&self.state.h_hat, &self.transform)
    }

    /// Processes one hop: `x_new` is the loudspeaker signal, `y_new` the
    /// microphone signal. `loop_gain` (linear) feeds the EDO half-segment.
    pub fn step(&mut self, x_new: &[f64], y_new: &[f64], loop_gain: f64) -> Result<StepOutput> {
        let hop = self.cfg.hop();
        if x_new.len() != hop || y_new.len() != hop {
            return Err(Error::config(format!(
                "step expects {hop} samples, got x={} y={}",
                x_new.len(),
                y_new.len()
            )));
        }
        let block = self.blocks;
        self.blocks += 1;

        self.x_block.copy_within(hop.., 0);
        self.x_block[hop..].copy_from_slice(x_new);
        let x_spec = self.transform.forward(&self.x_block)?;
        match self.whitener.as_mut() {
            Some(w) => {
                let parts = w.push_input(x_new, &self.transform)?;
                self.state.x_hist_white = PartitionedSpectrum::from_parts(parts);
            }
            None => self.state.x_hist_white.shift_in(x_spec.clone()),
        }
        self.state.x_hist.shift_in(x_spec);

        let echo_estimate = partitioned_filter(&self.state.x_hist, &self.state.h_hat, &self.transform)?;
        let error: Vec<f64> = y_new.iter().zip(&echo_estimate).map(|(y, r)| y - r).collect();
        if error.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "error signal", block });
        }

        let mut half = vec![0.0; self.cfg.block_len];
        half[hop..].copy_from_slice(&error);
        let e_half = self.transform.forward(&half)?;
        let e_adapt = match self.whitener.as_mut() {
            Some(w) => w.whiten_error(&error, &self.transform)?,
            None => e_half.clone(),
        };

        if !self.frozen {
            estimate_noise_psd(&mut self.state.psi_s, &e_adapt, &self.params);
            kalman_predict(&mut self.state, &self.params);
            let edo = self
                .hooks
                .edo
                .enabled
                .then(|| edo_compute(&self.state.x_hist, &e_half, loop_gain, &self.hooks.edo));
            kalman_update(&mut self.state, &e_adapt, &self.params, edo.as_ref(), &self.transform)?;
            if !self.state.is_finite() {
                return Err(Error::NonFinite { what: "filter state", block });
            }
        }

        Ok(StepOutput {
            error,
            echo_estimate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_state() -> (MdfConfig, KalmanParams, MdfState) {
        let cfg = MdfConfig { block_len: 8, partitions: 2, sample_rate: 16_000 };
        let params = KalmanParams::default();
        let state = MdfState::new(&cfg, &params);
        (cfg, params, state)
    }

    #[test]
    fn predict_identity_transition() {
        let (_, params, mut state) = small_state();
        state.h_hat[0][1] = Complex64::new(0.3, -0.2);
        state.p[1][2] = 0.4;
        let before = state.clone();
        kalman_predict(&mut state, &KalmanParams { transition: 1.0, ..params });
        assert_eq!(state, before);
    }

    #[test]
    fn predict_half_transition() {
        let (_, params, mut state) = small_state();
        state.h_hat[0][0] = Complex64::new(1.0, 0.0);
        state.p[0][0] = 0.0;
        kalman_predict(&mut state, &KalmanParams { transition: 0.5, ..params });
        assert_eq!(state.h_hat[0][0], Complex64::new(0.5, 0.0));
        assert!((state.p[0][0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn noise_psd_recursion() {
        let params = KalmanParams::default();
        let e = vec![Complex64::new(2.0, 0.0); 3];
        let mut psi = vec![0.0; 3];
        estimate_noise_psd(&mut psi, &e, &params);
        estimate_noise_psd(&mut psi, &e, &params);
        assert!(psi.iter().all(|v| (v - 0.76).abs() < 1e-12));
        let mut psi = vec![1.0; 3];
        estimate_noise_psd(&mut psi, &e, &KalmanParams { gamma: 1.0, ..params });
        assert_eq!(psi, vec![4.0; 3]);
        let mut psi = vec![1.0; 3];
        estimate_noise_psd(&mut psi, &[Complex64::new(0.0, 0.0); 3], &params);
        assert!(psi.iter().all(|v| (v - 0.9).abs() < 1e-15));
    }

    #[test]
    fn zero_error_or_input_leaves_state() {
        let (cfg, params, mut state) = small_state();
        let t = Transform::new(cfg.block_len);
        state.x_hist_white = PartitionedSpectrum::from_parts(vec![
            vec![Complex64::new(1.0, 0.5); 8],
            vec![Complex64::new(-0.3, 0.2); 8],
        ]);
        let before = state.clone();
        kalman_update(&mut state, &[Complex64::new(0.0, 0.0); 8], &params, None, &t).unwrap();
        assert_eq!(state.h_hat, before.h_hat);

        let (_, _, mut state) = small_state();
        let before = state.clone();
        kalman_update(&mut state, &[Complex64::new(1.0, 0.0); 8], &params, None, &t).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = KalmanParams::default();
        assert!(KalmanParams { transition: 0.0, ..p }.validate().is_err());
        assert!(KalmanParams { transition: 1.1, ..p }.validate().is_err());
        assert!(KalmanParams { gamma: 0.0, ..p }.validate().is_err());
        assert!(KalmanParams { delta: 0.0, ..p }.validate().is_err());
        assert!(KalmanParams { kalman_alpha: -1.0, ..p }.validate().is_err());
        assert!(p.validate().is_ok());
    }

    #[test]
    fn wrong_hop_is_rejected() {
        let mut f = MdfFilter::new(MdfConfig::default(), KalmanParams::default(), Default::default()).unwrap();
        assert!(f.step(&[0.0; 10], &[0.0; 10], 1.0).is_err());
    }

    #[test]
    fn silence_only_predicts_covariance() {
        let mut f = MdfFilter::new(MdfConfig::default(), KalmanParams::default(), Default::default()).unwrap();
        let out = f.step(&[0.0; 256], &[0.0; 256], 1.0).unwrap();
        assert!(out.error.iter().all(|&v| v == 0.0));
        let st = f.state();
        assert!(st.h_hat.iter().flatten().all(|c| c.norm() == 0.0));
        let a2 = 0.99999f64 * 0.99999;
        assert!(st.p.iter().flatten().all(|&p| (p - a2).abs() < 1e-15));
    }
}
