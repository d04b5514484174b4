//! Synthetic speech-like corpus for hermetic tests and demos.
//!
//! Each sentence is a run of syllables: voiced ones are harmonic complexes
//! with a gliding f0 shaped by three formant resonances, unvoiced ones are
//! dense random-phase partials in the 3-7 kHz region. Syllables have smooth
//! onsets/offsets and a slow amplitude modulation. A low white noise floor
//! fills the gaps so no time-frequency unit is exactly silent.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

/// Deliberately not 16 kHz so the resampler is always exercised.
pub const FIXTURE_RATE: u32 = 22_160;
const PEAK: f64 = 0.5;
/// Noise floor relative to the sentence peak.
const FLOOR_DB: f64 = -50.0;

#[derive(Debug, Clone, Copy)]
struct Formant {
    freq: f64,
    bandwidth: f64,
}

fn resonance(f: f64, fm: Formant) -> f64 {
    let x = (f - fm.freq) / (fm.bandwidth / 2.0);
    1.0 / (1.0 + x * x).sqrt()
}

fn raised_cosine_envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let edge = |k: usize| 0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos();
    if i < ramp {
        edge(i)
    } else if i >= len - ramp {
        edge(len - 1 - i)
    } else {
        1.0
    }
}

fn voiced(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let f0_start: f64 = rng.random_range(100.0..170.0);
    let f0_end = f0_start * rng.random_range(0.8..1.2);
    let formants = [
        Formant { freq: rng.random_range(300.0..850.0), bandwidth: 90.0 },
        Formant { freq: rng.random_range(900.0..2300.0), bandwidth: 120.0 },
        Formant { freq: rng.random_range(2400.0..3300.0), bandwidth: 180.0 },
    ];
    let am_rate = rng.random_range(3.0..6.0);
    let nyq = (fs / 2.0).min(7000.0);
    let max_k = (nyq / f0_start.max(f0_end)).floor() as usize;
    let mut phase = 0.0;
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / len as f64;
        let f0 = f0_start + (f0_end - f0_start) * t;
        phase += 2.0 * PI * f0 / fs;
        let mut acc = 0.0;
        for k in 1..=max_k {
            let f = k as f64 * f0;
            let amp: f64 = formants.iter().map(|&fm| resonance(f, fm)).sum::<f64>() / (k as f64).sqrt();
            acc += amp * (k as f64 * phase).sin();
        }
        let am = 1.0 + 0.3 * (2.0 * PI * am_rate * i as f64 / fs).sin();
        *o = acc * am;
    }
    out
}

fn unvoiced(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let lo = rng.random_range(2800.0..3600.0);
    let hi = (fs / 2.0 - 200.0).min(7000.0);
    let partials: Vec<(f64, f64)> = (0..)
        .map(|k| lo + 37.0 * k as f64)
        .take_while(|&f| f < hi)
        .map(|f| (f, rng.random_range(0.0..2.0 * PI)))
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            partials.iter().map(|&(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>() * 0.25
        })
        .collect()
}

/// One sentence of 6-7 syllables at `sample_rate`, peak 0.5.
pub fn sentence(seed: u64, sample_rate: u32) -> Result<Waveform> {
    if sample_rate < 16_000 {
        return Err(Error::invalid(format!("fixture rate must be at least 16000 Hz, got {sample_rate}")));
    }
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = |v: f64| (v * fs / 1000.0).round() as usize;
    let syllables = rng.random_range(6..=7);

    let mut out = vec![0.0; ms(120.0)];
    for s in 0..syllables {
        let len = ms(rng.random_range(140.0..300.0));
        let level = rng.random_range(0.5..1.0);
        let body = if s % 3 == 2 && rng.random_bool(0.6) {
            unvoiced(&mut rng, len, fs)
        } else {
            voiced(&mut rng, len, fs)
        };
        let norm = body.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        out.extend(
            body.iter()
                .enumerate()
                .map(|(i, x)| x / norm * level * raised_cosine_envelope(i, len, ms(25.0))),
        );
        out.extend(std::iter::repeat_n(0.0, ms(rng.random_range(50.0..180.0))));
    }
    out.extend(std::iter::repeat_n(0.0, ms(100.0)));

    let floor = 10f64.powf(FLOOR_DB / 20.0);
    for x in out.iter_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *x += floor * n;
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    out.iter_mut().for_each(|x| *x *= PEAK / peak);
    Waveform::new(out, sample_rate)
}

/// `count` sentences with ids `sentence_00`, `sentence_01`, ... Sentence
/// `i` is seeded from `seed` and `i` so adding sentences never changes the
/// earlier ones.
pub fn corpus(count: usize, seed: u64, sample_rate: u32) -> Result<Vec<(String, Waveform)>> {
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            Ok((format!("sentence_{i:02}"), sentence(s, sample_rate)?))
        })
        .collect()
}
