//! ACE-style analysis front end: Hann-windowed short-time FFT with bins
//! folded into channel envelopes by power summation.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

/// First FFT bin assigned to a channel; bins 0 and 1 carry no speech.
pub const FIRST_BAND_BIN: usize = 2;
/// Growth of the extra-bin allocation from one channel to the next.
const BAND_GROWTH: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
    pub num_channels: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            fft_size: 128,
            hop: 16,
            window: Window::Hann,
            num_channels: 22,
        }
    }
}

impl AnalysisConfig {
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Bins available to channels: `FIRST_BAND_BIN..=fft_size/2`.
    pub fn usable_bins(&self) -> usize {
        (self.fft_size / 2 + 1).saturating_sub(FIRST_BAND_BIN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidRate(0));
        }
        if self.fft_size < 2 * FIRST_BAND_BIN || !self.fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft_size must be a power of two >= {}, got {}",
                2 * FIRST_BAND_BIN,
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::invalid(format!("hop must be in 1..={}, got {}", self.fft_size, self.hop)));
        }
        if self.num_channels == 0 || self.num_channels > self.usable_bins() {
            return Err(Error::invalid(format!(
                "num_channels must be in 1..={}, got {}",
                self.usable_bins(),
                self.num_channels
            )));
        }
        Ok(())
    }
}

/// Partition of FFT bins into channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub bands: Vec<RangeInclusive<usize>>,
    pub center_freqs: Vec<f64>,
}

impl BandTable {
    pub fn widths(&self) -> Vec<usize> {
        self.bands.iter().map(|b| b.end() - b.start() + 1).collect()
    }
}

/// Splits bins `2..=fft_size/2` into `num_channels` contiguous groups. Every
/// group has one bin plus a share of the surplus bins that grows
/// geometrically with channel index, so low channels are one bin wide and
/// widths never shrink toward high frequencies.
pub fn channel_table(cfg: &AnalysisConfig) -> Result<BandTable> {
    cfg.validate()?;
    let bins = cfg.usable_bins();
    let channels = cfg.num_channels;
    let surplus = bins - channels;

    let weights: Vec<f64> = (0..channels).map(|k| BAND_GROWTH.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| surplus as f64 * w / total).collect();
    let mut extra: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    // largest remainder; ties go to the higher channel
    let mut order: Vec<usize> = (0..channels).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(b.cmp(&a))
    });
    let missing = surplus - extra.iter().sum::<usize>();
    for &k in order.iter().take(missing) {
        extra[k] += 1;
    }
    extra.sort_unstable();

    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut start = FIRST_BAND_BIN;
    let mut bands = Vec::with_capacity(channels);
    let mut center_freqs = Vec::with_capacity(channels);
    for e in extra {
        let end = start + e;
        bands.push(start..=end);
        center_freqs.push((start + end) as f64 / 2.0 * bin_hz);
        start = end + 1;
    }
    debug_assert_eq!(start, cfg.fft_size / 2 + 1);
    Ok(BandTable { bands, center_freqs })
}

/// Shape and axes of a frames x channels grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub frames: usize,
    pub frame_rate: f64,
    pub center_freqs: Vec<f64>,
}

impl GridLayout {
    pub fn new(frames: usize, frame_rate: f64, center_freqs: Vec<f64>) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::invalid(format!("frame_rate must be > 0, got {frame_rate}")));
        }
        if center_freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("center frequencies must be strictly increasing"));
        }
        Ok(Self {
            frames,
            frame_rate,
            center_freqs,
        })
    }

    pub fn channels(&self) -> usize {
        self.center_freqs.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.channels())
    }

    pub fn units(&self) -> usize {
        self.frames * self.channels()
    }

    pub fn check_same(&self, other: &GridLayout) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        if self.frame_rate != other.frame_rate || self.center_freqs != other.center_freqs {
            return Err(Error::invalid("grids differ in frame rate or channel frequencies"));
        }
        Ok(())
    }

    pub fn check_shape(&self, other: &GridLayout) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Frames x channels matrix of non-negative channel magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeGrid {
    values: Vec<f64>,
    layout: GridLayout,
}

impl EnvelopeGrid {
    pub fn new(values: Vec<f64>, layout: GridLayout) -> Result<Self> {
        if values.len() != layout.units() {
            return Err(Error::invalid(format!(
                "{} values for a {}x{} grid",
                values.len(),
                layout.frames,
                layout.channels()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("grid value {} at {i} is negative or non-finite", values[i])));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: GridLayout) -> Self {
        Self {
            values: vec![0.0; layout.units()],
            layout,
        }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn frames(&self) -> usize {
        self.layout.frames
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.layout.shape()
    }

    pub fn frame_rate(&self) -> f64 {
        self.layout.frame_rate
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.layout.center_freqs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, channel: usize) -> f64 {
        self.values[frame * self.channels() + channel]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        let c = self.channels();
        &self.values[frame * c..(frame + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let c = self.channels();
        (0..self.frames()).map(move |f| &self.values[f * c..(f + 1) * c])
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Same layout, values multiplied by `gain >= 0`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * gain).collect(), self.layout.clone())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Channel envelopes of `w`. Frame `i` covers samples
/// `[i*hop, i*hop + fft_size)`, zero-padded past the end; there are
/// `ceil(len / hop)` frames. Magnitudes are scaled so a sinusoid of
/// amplitude `a` centred on a bin reads `a` in that bin.
pub fn analyze(w: &Waveform, cfg: &AnalysisConfig) -> Result<EnvelopeGrid> {
    let table = channel_table(cfg)?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::RateMismatch {
            left: w.sample_rate(),
            right: cfg.sample_rate,
        });
    }
    if w.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    let n = cfg.fft_size;
    let frames = w.len().div_ceil(cfg.hop);
    let window = hann(n);
    let scale = 2.0 / window.iter().sum::<f64>();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut power = vec![0.0; n / 2 + 1];
    let x = w.samples();

    let mut values = Vec::with_capacity(frames * cfg.num_channels);
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x.get(start + i).map_or(0.0, |v| v * window[i]);
        }
        fft.process(&mut buf, &mut spec).expect("buffer sizes come from the plan");
        for (p, s) in power.iter_mut().zip(&spec) {
            *p = s.norm_sqr();
        }
        for band in &table.bands {
            let sum: f64 = power[band.clone()].iter().sum();
            values.push(sum.sqrt() * scale);
        }
    }
    EnvelopeGrid::new(values, GridLayout::new(frames, cfg.frame_rate(), table.center_freqs)?)
}
