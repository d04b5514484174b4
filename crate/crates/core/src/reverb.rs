//! Room impulse responses, reverberant and direct-path rendering, eSNR and
//! RT60 estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

/// Default direct-path window: early energy within this span of the
/// initial impulse counts as direct sound.
pub const DIRECT_WINDOW_MS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    taps: Vec<f64>,
    sample_rate: u32,
    direct_index: usize,
}

impl RoomImpulseResponse {
    /// Builds an RIR and locates its direct path as the largest-magnitude tap.
    pub fn new(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidRate(sample_rate));
        }
        if let Some(i) = taps.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let direct_index = detect_direct_path(&taps)?;
        Ok(Self {
            taps,
            sample_rate,
            direct_index,
        })
    }

    pub fn from_waveform(w: Waveform) -> Result<Self> {
        let rate = w.sample_rate();
        Self::new(w.into_samples(), rate)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn direct_index(&self) -> usize {
        self.direct_index
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn to_waveform(&self) -> Result<Waveform> {
        Waveform::new(self.taps.clone(), self.sample_rate)
    }
}

/// Index of the maximum-magnitude tap; the first one wins ties.
pub fn detect_direct_path(taps: &[f64]) -> Result<usize> {
    let mut best = None;
    let mut best_mag = 0.0;
    for (i, &t) in taps.iter().enumerate() {
        if t.abs() > best_mag {
            best_mag = t.abs();
            best = Some(i);
        }
    }
    best.ok_or(Error::ZeroImpulseResponse)
}

/// Zeroes every tap later than `direct_index + window_ms`. Length, rate and
/// direct index are unchanged.
pub fn truncate_direct(rir: &RoomImpulseResponse, window_ms: f64) -> Result<RoomImpulseResponse> {
    if !(window_ms >= 0.0) || !window_ms.is_finite() {
        return Err(Error::invalid(format!("window_ms must be finite and >= 0, got {window_ms}")));
    }
    let span = (window_ms * rir.sample_rate as f64 / 1000.0).round() as usize;
    let last = rir.direct_index.saturating_add(span);
    let taps = rir
        .taps
        .iter()
        .enumerate()
        .map(|(i, &t)| if i <= last { t } else { 0.0 })
        .collect();
    Ok(RoomImpulseResponse {
        taps,
        sample_rate: rir.sample_rate,
        direct_index: rir.direct_index,
    })
}

/// Full linear convolution by FFT overlap-add. Output length is
/// `signal.len() + taps.len() - 1`.
pub fn convolve(signal: &Waveform, rir: &RoomImpulseResponse) -> Result<Waveform> {
    if signal.sample_rate() != rir.sample_rate {
        return Err(Error::RateMismatch {
            left: signal.sample_rate(),
            right: rir.sample_rate,
        });
    }
    Waveform::new(fft_convolve(signal.samples(), &rir.taps), signal.sample_rate())
}

/// Overlap-add FFT convolution of two real sequences.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; (x.len() + h.len()).saturating_sub(1)];
    }
    let out_len = x.len() + h.len() - 1;
    let mut out = vec![0.0; out_len];

    // trailing zeros contribute nothing; drop them from the transform
    let kernel_len = match h.iter().rposition(|&v| v != 0.0) {
        Some(i) => i + 1,
        None => return out,
    };
    let h = &h[..kernel_len];

    let block = x.len().min(kernel_len.max(1024));
    let fft_len = (kernel_len + block - 1).next_power_of_two();
    let block = fft_len - kernel_len + 1;

    let mut planner = RealFftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let mut time = forward.make_input_vec();
    time[..kernel_len].copy_from_slice(h);
    let mut kernel_spec = forward.make_output_vec();
    forward
        .process(&mut time, &mut kernel_spec)
        .expect("buffer sizes come from the plan");

    let mut spec = forward.make_output_vec();
    let scale = 1.0 / fft_len as f64;
    for (b, chunk) in x.chunks(block).enumerate() {
        time.fill(0.0);
        time[..chunk.len()].copy_from_slice(chunk);
        forward
            .process(&mut time, &mut spec)
            .expect("buffer sizes come from the plan");
        for (s, k) in spec.iter_mut().zip(&kernel_spec) {
            *s *= k;
        }
        let last = spec.len() - 1;
        spec[0] = Complex::new(spec[0].re, 0.0);
        spec[last] = Complex::new(spec[last].re, 0.0);
        inverse
            .process(&mut spec, &mut time)
            .expect("buffer sizes come from the plan");

        let start = b * block;
        let valid = (chunk.len() + kernel_len - 1).min(out_len - start);
        for (o, t) in out[start..start + valid].iter_mut().zip(&time) {
            *o += t * scale;
        }
    }
    out
}

/// Reverberant rendering `y = h * s`.
pub fn make_reverberant(s: &Waveform, h: &RoomImpulseResponse) -> Result<Waveform> {
    convolve(s, h)
}

/// Direct-path rendering: `s` convolved with the truncated RIR. Same length
/// as [`make_reverberant`] so the two align sample for sample.
pub fn make_direct(s: &Waveform, h: &RoomImpulseResponse, window_ms: f64) -> Result<Waveform> {
    convolve(s, &truncate_direct(h, window_ms)?)
}

/// Effective SNR in dB: direct-path energy over residual reverberant energy.
/// A zero residual yields [`Error::Anechoic`].
pub fn esnr(d: &Waveform, y: &Waveform) -> Result<f64> {
    if d.sample_rate() != y.sample_rate() {
        return Err(Error::RateMismatch {
            left: d.sample_rate(),
            right: y.sample_rate(),
        });
    }
    if d.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: d.len(),
            right: y.len(),
        });
    }
    let direct: f64 = d.energy();
    let residual: f64 = d
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    if residual == 0.0 {
        return Err(Error::Anechoic);
    }
    if direct == 0.0 {
        return Err(Error::invalid("direct-path signal has no energy"));
    }
    Ok(10.0 * (direct / residual).log10())
}

/// Parameters of a synthetic exponentially decaying RIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRir {
    pub rt60_s: f64,
    pub direct_delay_ms: f64,
    pub tail_onset_ms: f64,
    pub sample_rate: u32,
    /// Standard deviation of the noise tail at onset, relative to the unit
    /// direct impulse.
    #[serde(default = "SyntheticRir::default_tail_gain")]
    pub tail_gain: f64,
}

impl SyntheticRir {
    fn default_tail_gain() -> f64 {
        0.1
    }

    /// Lecture-hall-like fixture: RT60 0.8 s at 16 kHz, tail starting just
    /// past the 5 ms direct window.
    pub fn lecture_hall() -> Self {
        Self {
            rt60_s: 0.8,
            direct_delay_ms: 2.0,
            tail_onset_ms: 8.0,
            sample_rate: 16000,
            tail_gain: Self::default_tail_gain(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<RoomImpulseResponse> {
        let Self {
            rt60_s,
            direct_delay_ms,
            tail_onset_ms,
            sample_rate,
            tail_gain,
        } = *self;
        if !(rt60_s > 0.0 && rt60_s.is_finite()) {
            return Err(Error::invalid(format!("rt60_s must be > 0, got {rt60_s}")));
        }
        if !(direct_delay_ms >= 0.0) || !(tail_onset_ms >= direct_delay_ms) || !tail_onset_ms.is_finite() {
            return Err(Error::invalid(format!(
                "need 0 <= direct_delay_ms ({direct_delay_ms}) <= tail_onset_ms ({tail_onset_ms})"
            )));
        }
        if !(tail_gain > 0.0 && tail_gain.is_finite()) {
            return Err(Error::invalid(format!("tail_gain must be > 0, got {tail_gain}")));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidRate(sample_rate));
        }
        let fs = sample_rate as f64;
        let direct = (direct_delay_ms * fs / 1000.0).round() as usize;
        let onset = ((tail_onset_ms * fs / 1000.0).round() as usize).max(direct + 1);
        let len = (tail_onset_ms / 1000.0 * fs + 1.5 * rt60_s * fs).ceil() as usize + 1;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taps = vec![0.0; len.max(onset + 1)];
        taps[direct] = 1.0;
        // amplitude falls 30 dB per rt60/2, energy 60 dB per rt60
        let decay = -3.0 * std::f64::consts::LN_10 / rt60_s;
        for (i, tap) in taps.iter_mut().enumerate().skip(onset) {
            let t = (i - onset) as f64 / fs;
            let z: f64 = StandardNormal.sample(&mut rng);
            *tap = tail_gain * (decay * t).exp() * z;
        }
        RoomImpulseResponse::new(taps, sample_rate)
    }
}

/// Deterministic synthetic RIR: unit impulse, silence until the tail onset,
/// then Gaussian noise under an exponential envelope.
pub fn synth_rir(
    rt60_s: f64,
    direct_delay_ms: f64,
    tail_onset_ms: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<RoomImpulseResponse> {
    SyntheticRir {
        rt60_s,
        direct_delay_ms,
        tail_onset_ms,
        sample_rate,
        tail_gain: SyntheticRir::default_tail_gain(),
    }
    .generate(seed)
}

const FIT_START_DB: f64 = -5.0;
const FIT_END_DB: f64 = -25.0;
const MIN_FIT_POINTS: usize = 16;

/// Schroeder energy decay curve in dB, integrated from the direct path.
pub fn schroeder_decay_db(rir: &RoomImpulseResponse) -> Vec<f64> {
    let tail = &rir.taps[rir.direct_index..];
    let mut edc = vec![0.0; tail.len()];
    let mut acc = 0.0;
    for (e, t) in edc.iter_mut().zip(tail).rev() {
        acc += t * t;
        *e = acc;
    }
    let total = edc[0];
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// RT60 by Schroeder backward integration, least-squares fit over the
/// -5..-25 dB span, extrapolated to 60 dB.
pub fn estimate_rt60(rir: &RoomImpulseResponse) -> Result<f64> {
    let decay = schroeder_decay_db(rir);
    let start = decay.iter().position(|&v| v <= FIT_START_DB);
    let end = decay.iter().position(|&v| v <= FIT_END_DB);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e > s && e - s + 1 >= MIN_FIT_POINTS => (s, e),
        _ => {
            return Err(Error::InsufficientDecay(format!(
                "no {} dB span with at least {MIN_FIT_POINTS} samples",
                FIT_START_DB - FIT_END_DB
            )))
        }
    };
    if decay[start..=end].iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientDecay("decay curve reaches silence inside the fit span".into()));
    }

    let dt = 1.0 / rir.sample_rate as f64;
    let n = (end - start + 1) as f64;
    let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in decay.iter().enumerate().take(end + 1).skip(start) {
        let x = i as f64 * dt;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay("decay curve does not fall".into()));
    }
    Ok(-60.0 / slope)
}
