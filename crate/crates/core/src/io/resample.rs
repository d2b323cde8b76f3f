//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::buffer::SampleBuffer;

/// Stopband attenuation the kernel is designed for, in dB.
const ATTENUATION_DB: f64 = 70.0;
/// Cutoff as a fraction of the lower of the two rates.
const CUTOFF: f64 = 0.475;
/// Full transition width as a fraction of the lower rate.
const TRANSITION: f64 = 0.05;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples to `target_fs`. Equal rates return an identical copy.
pub fn resample(x: &SampleBuffer, target_fs: u32) -> SampleBuffer {
    let src_fs = x.sample_rate;
    if src_fs == target_fs || x.is_empty() {
        return SampleBuffer::new(x.samples.clone(), target_fs);
    }
    let g = gcd(src_fs as u64, target_fs as u64);
    let up = target_fs as u64 / g;
    let down = src_fs as u64 / g;

    // kernel parameters in units of input samples
    let min_fs = src_fs.min(target_fs) as f64;
    let fc = CUTOFF * min_fs / src_fs as f64;
    let df = TRANSITION * min_fs / src_fs as f64;
    let taps = (ATTENUATION_DB - 7.95) / (14.36 * df);
    let half = (taps / 2.0).ceil() as i64;
    let beta = kaiser_beta(ATTENUATION_DB);
    let i0_beta = bessel_i0(beta);

    // one normalized kernel per fractional phase p / up
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut k: Vec<f64> = (-half + 1..=half)
                .map(|j| {
                    let tau = frac - j as f64;
                    let r = tau / half as f64;
                    if r.abs() > 1.0 {
                        return 0.0;
                    }
                    let w = bessel_i0(beta * (1.0 - r * r).sqrt()) / i0_beta;
                    2.0 * fc * sinc(2.0 * fc * tau) * w
                })
                .collect();
            let sum: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= sum);
            k
        })
        .collect();

    let n_in = x.len() as u64;
    let n_out = (n_in * up).div_ceil(down);
    let input = &x.samples;
    let samples = (0..n_out)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as i64;
            let kernel = &phases[(pos % up) as usize];
            kernel
                .iter()
                .enumerate()
                .filter_map(|(i, &c)| {
                    let j = base + i as i64 - half + 1;
                    (j >= 0 && j < n_in as i64).then(|| c * input[j as usize])
                })
                .sum()
        })
        .collect();
    SampleBuffer::new(samples, target_fs)
}
