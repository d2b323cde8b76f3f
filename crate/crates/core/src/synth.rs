//! Deterministic test material: a speech-like sentence and a car-cabin-like
//! room impulse response. Both are generated from fixed seeds so every run of
//! the test suite sees identical signals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::buffer::SampleBuffer;

const SENTENCE_SEED: u64 = 0x5eed_5e47;
const ROOM_SEED: u64 = 0x0ca8_0001;

/// Formant frequencies (Hz) of a few vowels, male speaker.
const VOWELS: [[f64; 4]; 6] = [
    [730.0, 1090.0, 2440.0, 3400.0], // a
    [530.0, 1840.0, 2480.0, 3500.0], // e
    [270.0, 2290.0, 3010.0, 3700.0], // i
    [570.0, 840.0, 2410.0, 3300.0],  // o
    [300.0, 870.0, 2240.0, 3300.0],  // u
    [660.0, 1720.0, 2410.0, 3400.0], // ae
];
const BANDWIDTHS: [f64; 4] = [80.0, 100.0, 140.0, 200.0];

/// Two-pole resonator with unity gain at its center frequency.
#[derive(Debug, Clone, Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn process(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        let g = (1.0 - r) * (1.0 + r * r - 2.0 * r * (2.0 * theta).cos()).sqrt();
        let y = g * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Rosenberg glottal pulse over one pitch period, `phase` in `[0, 1)`.
fn glottal(phase: f64) -> f64 {
    const OPEN: f64 = 0.4;
    const CLOSE: f64 = 0.16;
    if phase < OPEN {
        0.5 * (1.0 - (PI * phase / OPEN).cos())
    } else if phase < OPEN + CLOSE {
        (0.5 * PI * (phase - OPEN) / CLOSE).cos()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Silence(f64),
    /// Unvoiced noise burst: duration, spectral center in Hz.
    Fricative(f64, f64),
    /// Voiced vowel: duration, vowel index.
    Vowel(f64, usize),
}

fn sentence_plan(rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut plan = vec![Segment::Silence(0.25)];
    let words = 14;
    for w in 0..words {
        let syllables = rng.random_range(1..=3);
        for _ in 0..syllables {
            if rng.random_bool(0.45) {
                let dur = rng.random_range(0.04..0.11);
                let center = rng.random_range(2500.0..6000.0);
                plan.push(Segment::Fricative(dur, center));
            }
            let dur = rng.random_range(0.12..0.26);
            plan.push(Segment::Vowel(dur, rng.random_range(0..VOWELS.len())));
        }
        let pause = if w == words / 2 { 0.3 } else { rng.random_range(0.04..0.14) };
        plan.push(Segment::Silence(pause));
    }
    plan.push(Segment::Silence(0.35));
    plan
}

/// A speech-like male sentence of roughly seven seconds, peak-normalized to 0.9.
pub fn test_sentence(sample_rate: u32) -> SampleBuffer {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(SENTENCE_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let plan = sentence_plan(&mut rng);
    let total_s: f64 = plan
        .iter()
        .map(|s| match *s {
            Segment::Silence(d) | Segment::Fricative(d, _) | Segment::Vowel(d, _) => d,
        })
        .sum();

    let mut out = Vec::with_capacity((total_s * fs) as usize + 1);
    let mut formants = [Resonator::default(), Resonator::default(), Resonator::default(), Resonator::default()];
    let mut noise_res = Resonator::default();
    let mut prev_vowel = VOWELS[0];
    let mut glottal_phase = 0.0;
    let mut prev_glottal = 0.0;
    let mut t_global = 0.0;

    for seg in plan {
        match seg {
            Segment::Silence(d) => {
                let n = (d * fs) as usize;
                for _ in 0..n {
                    // decay of the vocal-tract resonances into the pause
                    let mut v = 0.0;
                    for (i, r) in formants.iter_mut().enumerate() {
                        v = r.process(if i == 0 { 0.0 } else { v }, prev_vowel[i], BANDWIDTHS[i], fs);
                    }
                    out.push(v);
                    t_global += 1.0 / fs;
                }
            }
            Segment::Fricative(d, center) => {
                let n = (d * fs) as usize;
                for k in 0..n {
                    let env = (PI * k as f64 / n as f64).sin().powf(0.7);
                    let v = noise_res.process(normal.sample(&mut rng), center, 1800.0, fs);
                    out.push(0.12 * env * v);
                    t_global += 1.0 / fs;
                }
            }
            Segment::Vowel(d, idx) => {
                let n = (d * fs) as usize;
                let target = VOWELS[idx];
                let attack = (0.025 * fs) as usize;
                let release = (0.05 * fs) as usize;
                for k in 0..n {
                    // pitch: phrase declination plus slow inflection
                    let f0 = 125.0 - 2.5 * t_global
                        + 12.0 * (2.0 * PI * 0.7 * t_global).sin()
                        + 4.0 * (2.0 * PI * 3.1 * t_global).sin();
                    glottal_phase += f0 / fs;
                    if glottal_phase >= 1.0 {
                        glottal_phase -= 1.0;
                    }
                    let g = glottal(glottal_phase);
                    let source = (g - prev_glottal) * fs / 1000.0;
                    prev_glottal = g;
                    let aspiration = 0.02 * normal.sample(&mut rng);

                    let mix = (k as f64 / (0.05 * fs)).min(1.0);
                    let mut v = source + aspiration;
                    let mut shaped = 0.0;
                    for (i, r) in formants.iter_mut().enumerate() {
                        let f = prev_vowel[i] + mix * (target[i] - prev_vowel[i]);
                        // cascade: each resonator filters the previous output
                        v = r.process(v, f, BANDWIDTHS[i], fs);
                        shaped = v;
                    }
                    let env = if k < attack {
                        0.5 * (1.0 - (PI * k as f64 / attack as f64).cos())
                    } else if k + release > n {
                        let j = n - k;
                        0.5 * (1.0 - (PI * j as f64 / release as f64).cos())
                    } else {
                        1.0
                    };
                    out.push(env * shaped);
                    t_global += 1.0 / fs;
                }
                prev_vowel = target;
            }
        }
    }
    let mut buf = SampleBuffer::new(out, sample_rate);
    buf.normalize_peak(0.9);
    buf
}

/// A 1024-tap response at 16 kHz: propagation delay, sparse early
/// reflections and an exponentially decaying diffuse tail (about -50 dB at
/// the last tap). Other rates scale the tap count proportionally.
pub fn test_room_response(sample_rate: u32) -> SampleBuffer {
    let fs = sample_rate as f64;
    let len = (1024.0 * fs / 16_000.0).round() as usize;
    let scale = fs / 16_000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(ROOM_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut h = vec![0.0; len];
    let direct = (30.0 * scale) as usize;
    h[direct] = 1.0;
    for _ in 0..10 {
        let pos = rng.random_range((40.0 * scale) as usize..(220.0 * scale) as usize);
        let amp = rng.random_range(0.25..0.7) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        h[pos] += amp;
    }
    let tau = 178.0 * scale;
    let tail_start = (40.0 * scale) as usize;
    for (k, v) in h.iter_mut().enumerate().skip(tail_start) {
        *v += 0.35 * normal.sample(&mut rng) * (-((k - tail_start) as f64) / tau).exp();
    }
    // transducer band limit
    let mut state = 0.0;
    for v in h.iter_mut() {
        state = 0.6 * *v + 0.4 * state;
        *v = state;
    }
    SampleBuffer::new(h, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_is_deterministic_and_bounded() {
        let a = test_sentence(16_000);
        let b = test_sentence(16_000);
        assert_eq!(a, b);
        assert!((a.peak() - 0.9).abs() < 1e-12);
        assert!(a.duration_s() > 5.0 && a.duration_s() < 10.0, "{}", a.duration_s());
    }

    #[test]
    fn room_response_shape() {
        let h = test_room_response(16_000);
        assert_eq!(h.len(), 1024);
        let head: f64 = h.samples[..256].iter().map(|v| v * v).sum();
        let tail: f64 = h.samples[768..].iter().map(|v| v * v).sum();
        assert!(10.0 * (tail / head).log10() < -30.0);
        assert_eq!(h, test_room_response(16_000));
    }
}
