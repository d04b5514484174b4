//! Mono waveforms: WAV I/O, band-limited resampling and group RMS
//! normalization.

use std::f64::consts::PI;
use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// A mono sample sequence at a fixed rate. Samples are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.energy() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|x| x * gain).collect(), self.sample_rate)
    }
}

/// Output sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Pcm16,
    #[default]
    Float32,
}

fn classify_hound_error(path: &Path, err: hound::Error) -> Error {
    let path = path.to_path_buf();
    match err {
        hound::Error::FormatError(reason) => Error::MalformedHeader {
            path,
            reason: reason.to_string(),
        },
        // hound reports short reads as `Other`
        hound::Error::IoError(e)
            if matches!(
                e.kind(),
                ErrorKind::UnexpectedEof | ErrorKind::Other | ErrorKind::InvalidData
            ) =>
        {
            Error::MalformedHeader {
                path,
                reason: e.to_string(),
            }
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path,
            reason: "unsupported format".into(),
        },
        hound::Error::InvalidSampleFormat => Error::UnsupportedEncoding {
            path,
            reason: "invalid sample format".into(),
        },
        hound::Error::TooWide => Error::UnsupportedEncoding {
            path,
            reason: "sample too wide".into(),
        },
        hound::Error::UnfinishedSample => Error::MalformedHeader {
            path,
            reason: "unfinished sample".into(),
        },
    }
}

/// Reads a PCM or IEEE-float WAV file. Multi-channel input keeps channel 0.
/// Integer PCM is scaled by `2^-(bits-1)` into [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| classify_hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }
    if channels > 1 {
        log::warn!("{}: {channels} channels, keeping channel 0", path.display());
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{format:?} at {bits} bits"),
            })
        }
    }
    .map_err(|e| classify_hound_error(path, e))?;

    let samples = interleaved.into_iter().step_by(channels).collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono WAV. At 16-bit depth any sample outside [-1, 1] is an
/// error instead of being clamped.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    if depth == BitDepth::Pcm16 {
        if let Some((index, &value)) = w.samples.iter().enumerate().find(|(_, x)| x.abs() > 1.0) {
            return Err(Error::Clipping { index, value });
        }
    }
    let spec = match depth {
        BitDepth::Pcm16 => WavSpec {
            channels: 1,
            sample_rate: w.sample_rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
        BitDepth::Float32 => WavSpec {
            channels: 1,
            sample_rate: w.sample_rate,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| classify_hound_error(path, e))?;
    for &x in &w.samples {
        let res = match depth {
            BitDepth::Pcm16 => writer.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            BitDepth::Float32 => writer.write_sample(x as f32),
        };
        res.map_err(|e| classify_hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| classify_hound_error(path, e))
}

const STOPBAND_DB: f64 = 80.0;
/// Passband edge and transition width as fractions of the lower Nyquist.
const PASSBAND_FRACTION: f64 = 0.9;
/// Above this many phases the kernel is evaluated per output sample.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc low-pass, sampled on the input grid.
struct SincKernel {
    /// Cutoff in cycles per input sample.
    cutoff: f64,
    half_width: usize,
    beta: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn design(in_rate: u32, out_rate: u32) -> Self {
        let ratio = (out_rate as f64 / in_rate as f64).min(1.0);
        let nyquist = 0.5 * ratio;
        let pass = PASSBAND_FRACTION * nyquist;
        let transition = nyquist - pass;
        let cutoff = pass + transition / 2.0;
        let taps = (STOPBAND_DB - 7.95) / (2.285 * 2.0 * PI * transition);
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        Self {
            cutoff,
            half_width: (taps / 2.0).ceil() as usize,
            beta,
            i0_beta: bessel_i0(beta),
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let hw = self.half_width as f64;
        if t.abs() >= hw {
            return 0.0;
        }
        let x = 2.0 * self.cutoff * t;
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let r = t / hw;
        let window = bessel_i0(self.beta * (1.0 - r * r).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }

    /// Taps for input offsets `1 - half_width ..= half_width` around the
    /// integer part of the read position, normalized to unit DC gain.
    fn phase_taps(&self, frac: f64) -> Vec<f64> {
        let hw = self.half_width as isize;
        let mut taps: Vec<f64> = (1 - hw..=hw).map(|j| self.eval(frac - j as f64)).collect();
        let sum: f64 = taps.iter().sum();
        if sum != 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }
}

/// Windowed-sinc polyphase resampler (Kaiser, 80 dB design stopband).
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidRate(target_rate));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let g = gcd(w.sample_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = w.sample_rate as u64 / g;
    let out_len = ((w.len() as u64 * up + down / 2) / down) as usize;

    let kernel = SincKernel::design(w.sample_rate, target_rate);
    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| kernel.phase_taps(p as f64 / up as f64)).collect());

    let hw = kernel.half_width as isize;
    let x = &w.samples;
    let n_in = x.len() as isize;
    let out = (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let phase = pos % up;
            let owned;
            let taps: &[f64] = match &table {
                Some(t) => &t[phase as usize],
                None => {
                    owned = kernel.phase_taps(phase as f64 / up as f64);
                    &owned
                }
            };
            let mut acc = 0.0;
            for (j, &h) in (1 - hw..=hw).zip(taps) {
                let k = base + j;
                if (0..n_in).contains(&k) {
                    acc += x[k as usize] * h;
                }
            }
            acc
        })
        .collect();
    Waveform::new(out, target_rate)
}

/// Scales every member to one shared RMS, chosen as the largest level at
/// which no member exceeds unit peak magnitude.
pub fn normalize_rms_group(ws: &[Waveform]) -> Result<Vec<Waveform>> {
    let stats: Vec<(f64, f64)> = ws
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let rms = w.rms();
            if rms > 0.0 {
                Ok((rms, w.peak()))
            } else {
                Err(Error::SilentWaveform(i))
            }
        })
        .collect::<Result<_>>()?;

    let mut target = stats
        .iter()
        .map(|(rms, peak)| rms / peak)
        .fold(f64::INFINITY, f64::min);
    loop {
        let scaled: Vec<Waveform> = ws
            .iter()
            .zip(&stats)
            .map(|(w, (rms, _))| w.scaled(target / rms))
            .collect::<Result<_>>()?;
        if scaled.iter().all(|w| w.peak() <= 1.0) {
            return Ok(scaled);
        }
        target = target.next_down();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> Waveform {
        let n = (secs * rate as f64) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    /// Peak-picking oracle: naive DFT magnitude scan over a Hann-windowed
    /// segment, at a resolution of `rate / n` Hz.
    fn dft_peak_hz(x: &[f64], rate: u32) -> f64 {
        let n = x.len();
        let win: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
            .collect();
        let (best, _) = (1..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in win.iter().enumerate() {
                    let ph = 2.0 * PI * (k * i) as f64 / n as f64;
                    re += v * ph.cos();
                    im -= v * ph.sin();
                }
                (k, re * re + im * im)
            })
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        best as f64 * rate as f64 / n as f64
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(matches!(Waveform::new(vec![0.0], 0), Err(Error::InvalidRate(0))));
        assert!(matches!(Waveform::new(vec![0.0, f64::NAN], 8000), Err(Error::NonFinite(1))));
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.write_sample(16384i16).unwrap();
        wr.finalize().unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5]);
    }

    #[test]
    fn one_second_has_rate_samples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.wav");
        write_wav(&Waveform::silence(16000, 16000).unwrap(), &p, BitDepth::Pcm16).unwrap();
        assert_eq!(read_wav(&p).unwrap().len(), 16000);
    }

    #[test]
    fn multichannel_keeps_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        for (l, r) in [(0.25f32, -1.0f32), (0.5, -1.0), (0.75, -1.0)] {
            wr.write_sample(l).unwrap();
            wr.write_sample(r).unwrap();
        }
        wr.finalize().unwrap();
        assert_eq!(read_wav(&p).unwrap().samples(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_wav(dir.path().join("nope.wav")), Err(Error::MissingFile(_))));

        let good = dir.path().join("good.wav");
        write_wav(&Waveform::silence(100, 16000).unwrap(), &good, BitDepth::Pcm16).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let trunc = dir.path().join("trunc.wav");
        std::fs::write(&trunc, &bytes[..20]).unwrap();
        assert!(matches!(read_wav(&trunc), Err(Error::MalformedHeader { .. })));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"this is not a riff file at all, not even close").unwrap();
        assert!(matches!(read_wav(&garbage), Err(Error::MalformedHeader { .. })));

        // A-law is a valid RIFF format tag we do not decode
        let mut odd = bytes.clone();
        odd[20] = 6;
        let odd_path = dir.path().join("odd.wav");
        std::fs::write(&odd_path, &odd).unwrap();
        let r = read_wav(&odd_path); assert!(matches!(r, Err(Error::UnsupportedEncoding { .. })), "{r:?}");
    }

    #[test]
    fn float_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let s: Vec<f64> = (0..500).map(|i| ((i as f32 * 0.37).sin() * 1.7) as f64).collect();
        let w = Waveform::new(s, 22160).unwrap();
        write_wav(&w, &p, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
    }

    #[test]
    fn pcm16_overflow_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::new(vec![0.0, 1.5], 16000).unwrap();
        let err = write_wav(&w, dir.path().join("c.wav"), BitDepth::Pcm16).unwrap_err();
        assert!(matches!(err, Error::Clipping { index: 1, .. }));
    }

    #[test]
    fn empty_waveform_writes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        write_wav(&Waveform::silence(0, 16000).unwrap(), &p, BitDepth::Pcm16).unwrap();
        let back = read_wav(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.sample_rate(), 16000);
    }

    #[test]
    fn unwritable_path() {
        let w = Waveform::silence(4, 16000).unwrap();
        assert!(write_wav(&w, "/nonexistent-dir/x/y.wav", BitDepth::Float32).is_err());
    }

    #[test]
    fn resample_identity_and_bad_rate() {
        let w = tone(440.0, 16000, 0.1, 0.5);
        assert_eq!(resample(&w, 16000).unwrap(), w);
        assert!(matches!(resample(&w, 0), Err(Error::InvalidRate(0))));
    }

    #[test]
    fn resample_keeps_tone_frequency() {
        let w = tone(1000.0, 22160, 0.5, 0.5);
        let out = resample(&w, 16000).unwrap();
        assert_eq!(out.sample_rate(), 16000);
        assert!((out.len() as f64 - w.duration_s() * 16000.0).abs() <= 1.0);
        // one bin = rate / n; use an interior 2048-sample segment of each
        let bin_in = 22160.0 / 2048.0;
        let bin_out = 16000.0 / 2048.0;
        let f_in = dft_peak_hz(&w.samples()[1000..3048], 22160);
        let f_out = dft_peak_hz(&out.samples()[1000..3048], 16000);
        assert!((f_in - 1000.0).abs() <= bin_in);
        assert!((f_out - 1000.0).abs() <= bin_out, "peak at {f_out}");
    }

    #[test]
    fn resample_rejects_above_new_nyquist() {
        // 10 ms raised-cosine fades so gating transients stay out of the passband
        let mut w = tone(10_000.0, 22160, 0.5, 0.5).into_samples();
        let fade = 222;
        let n = w.len();
        for i in 0..fade {
            let g = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
            w[i] *= g;
            w[n - 1 - i] *= g;
        }
        let w = Waveform::new(w, 22160).unwrap();
        let out = resample(&w, 16000).unwrap();
        let ratio_db = 10.0 * (out.energy() / w.energy()).log10();
        assert!(ratio_db <= -60.0, "leakage {ratio_db} dB");
    }

    #[test]
    fn upsampling_preserves_level() {
        let w = tone(500.0, 8000, 0.5, 0.5);
        let out = resample(&w, 44100).unwrap();
        let interior = |x: &Waveform| {
            let n = x.len();
            Waveform::new(x.samples()[n / 4..3 * n / 4].to_vec(), x.sample_rate()).unwrap().rms()
        };
        assert_relative_eq!(interior(&out), interior(&w), max_relative = 1e-3);
    }

    #[test]
    fn normalize_single() {
        let mut s = vec![0.0; 100];
        s[0] = 0.5;
        s[1] = -0.5;
        // build rms 0.1 with peak 0.5: 2 * 0.25 / n = 0.01 -> n = 50
        s.truncate(50);
        let w = Waveform::new(s, 16000).unwrap();
        assert_relative_eq!(w.rms(), 0.1, max_relative = 1e-12);
        let out = normalize_rms_group(std::slice::from_ref(&w)).unwrap();
        assert_relative_eq!(out[0].peak(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(out[0].rms(), 0.2, max_relative = 1e-12);
        assert_relative_eq!(out[0].samples()[0] / w.samples()[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn normalize_identical_pair() {
        let w = tone(300.0, 16000, 0.05, 0.3);
        let out = normalize_rms_group(&[w.clone(), w]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn normalize_silent_is_error() {
        let w = tone(300.0, 16000, 0.05, 0.3);
        let z = Waveform::silence(10, 16000).unwrap();
        assert!(matches!(normalize_rms_group(&[w, z]), Err(Error::SilentWaveform(1))));
    }

    #[test]
    fn normalize_mixed_group_against_scan() {
        // A: peaky (one spike), B: quiet dense tone
        let mut a = vec![0.01; 400];
        a[17] = 0.9;
        let a = Waveform::new(a, 16000).unwrap();
        let b = tone(250.0, 16000, 0.025, 0.05);
        let out = normalize_rms_group(&[a.clone(), b.clone()]).unwrap();

        // brute force: largest common RMS on a fine grid that keeps both peaks <= 1
        let mut best = 0.0;
        let mut r = 1e-4;
        while r < 2.0 {
            if a.peak() * r / a.rms() <= 1.0 && b.peak() * r / b.rms() <= 1.0 {
                best = r;
            }
            r += 1e-5;
        }
        assert_relative_eq!(out[0].rms(), out[1].rms(), max_relative = 1e-12);
        assert!((out[0].rms() - best).abs() <= 2e-5);
        let group_peak = out[0].peak().max(out[1].peak());
        assert_relative_eq!(group_peak, 1.0, max_relative = 1e-12);
        assert!(group_peak <= 1.0);
    }

    proptest! {
        #[test]
        fn resample_is_linear(seed in 0u64..1000, gain in -4.0f64..4.0) {
            let s: Vec<f64> = (0..300).map(|i| (i as f64 * 0.1 + seed as f64).sin() * 0.4).collect();
            let w = Waveform::new(s, 22160).unwrap();
            let a = resample(&w.scaled(gain).unwrap(), 16000).unwrap();
            let b = resample(&w, 16000).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((x - gain * y).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalize_is_scale_invariant_and_equivariant(c in 0.01f64..100.0, swap in any::<bool>()) {
            let a = tone(200.0, 16000, 0.02, 0.7);
            let mut bs = vec![0.02; 320];
            bs[5] = 0.3;
            let b = Waveform::new(bs, 16000).unwrap();
            let base = normalize_rms_group(&[a.clone(), b.clone()]).unwrap();
            let group = if swap { vec![b.scaled(c).unwrap(), a] } else { vec![a.scaled(c).unwrap(), b] };
            let mut out = normalize_rms_group(&group).unwrap();
            if swap { out.swap(0, 1); }
            for (x, y) in out.iter().zip(&base) {
                for (p, q) in x.samples().iter().zip(y.samples()) {
                    prop_assert!((p - q).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn pcm16_roundtrip_within_lsb(vals in proptest::collection::vec(-1.0f64..=1.0, 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            let w = Waveform::new(vals, 16000).unwrap();
            write_wav(&w, &p, BitDepth::Pcm16).unwrap();
            let back = read_wav(&p).unwrap();
            for (x, y) in w.samples().iter().zip(back.samples()) {
                prop_assert!((x - y).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
