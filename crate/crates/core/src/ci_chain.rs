//! Post-mask CI processing: N-of-M maxima selection and sine-carrier
//! vocoding of the resulting electrodogram.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::grid_csv;
use crate::tf_analysis::{EnvelopeGrid, GridLayout};

/// ACE-style maxima count.
pub const DEFAULT_MAXIMA: usize = 8;
const OUTPUT_PEAK: f64 = 0.99;

/// One stimulation: channel index and envelope-domain amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub channel: usize,
    pub amplitude: f64,
}

/// Per-frame sparse stimulation pattern. Within a frame stimuli are sorted
/// by channel and never repeat a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Electrodogram {
    frames: Vec<Vec<Stimulus>>,
    layout: GridLayout,
}

impl Electrodogram {
    pub fn frames(&self) -> &[Vec<Stimulus>] {
        &self.frames
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_channels(&self) -> usize {
        self.layout.channels()
    }

    pub fn frame_rate(&self) -> f64 {
        self.layout.frame_rate
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.layout.center_freqs
    }

    pub fn selected_channels(&self, frame: usize) -> Vec<usize> {
        self.frames[frame].iter().map(|s| s.channel).collect()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.frames
            .iter()
            .flatten()
            .fold(0.0, |m, s| m.max(s.amplitude))
    }

    pub fn stimulus_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Dense frames x channels grid, zero where nothing was selected.
    pub fn to_dense(&self) -> EnvelopeGrid {
        let c = self.num_channels();
        let mut values = vec![0.0; self.frames.len() * c];
        for (f, frame) in self.frames.iter().enumerate() {
            for s in frame {
                values[f * c + s.channel] = s.amplitude;
            }
        }
        EnvelopeGrid::new(values, self.layout.clone()).expect("amplitudes are finite and non-negative")
    }

    /// Rebuilds an electrodogram from its dense form; every non-zero unit
    /// counts as selected.
    pub fn from_dense(grid: &EnvelopeGrid) -> Self {
        let frames = grid
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &a)| a > 0.0)
                    .map(|(channel, &amplitude)| Stimulus { channel, amplitude })
                    .collect()
            })
            .collect();
        Self {
            frames,
            layout: grid.layout().clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        grid_csv::to_string(&self.layout, self.to_dense().values())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Ranking resolution relative to the frame peak. Amplitudes closer than
/// this are ties, so rounding noise cannot reorder values that are equal
/// in exact arithmetic (e.g. a flat-spectrum edge frame).
const RANK_STEPS: f64 = 4_294_967_296.0; // 2^32

/// Keeps the `n` largest channels per frame. Ties (at 2^-32 of the frame
/// peak) go to the lower channel. Channels below that resolution, zeros
/// included, are never selected: whether such a unit underflows to 0 is
/// itself a rounding accident.
pub fn select_maxima(grid: &EnvelopeGrid, n: usize) -> Result<Electrodogram> {
    let channels = grid.channels();
    if n == 0 || n > channels {
        return Err(Error::invalid(format!("maxima count must be in 1..={channels}, got {n}")));
    }
    let mut order: Vec<(u64, usize)> = Vec::with_capacity(channels);
    let frames = grid
        .rows()
        .map(|row| {
            let peak = row.iter().fold(0.0f64, |m, &v| m.max(v));
            order.clear();
            order.extend(
                (0..channels)
                    .filter(|&c| row[c] > 0.0)
                    .map(|c| (((row[c] / peak) * RANK_STEPS).round() as u64, c))
                    .filter(|&(key, _)| key > 0),
            );
            order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            order.truncate(n);
            let mut picked: Vec<usize> = order.iter().map(|&(_, c)| c).collect();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|channel| Stimulus {
                    channel,
                    amplitude: row[channel],
                })
                .collect()
        })
        .collect();
    Ok(Electrodogram {
        frames,
        layout: grid.layout().clone(),
    })
}

/// Carrier phase policy for the vocoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CarrierPhase {
    #[default]
    Zero,
    /// Uniform random phase per channel drawn from the seed.
    Random(u64),
}

/// Sine-carrier vocoder with zero carrier phases.
pub fn vocode(e: &Electrodogram, output_rate: u32) -> Result<Waveform> {
    vocode_with_phase(e, output_rate, CarrierPhase::Zero)
}

/// Sums one sinusoid per channel at its center frequency, each scaled by
/// the channel's amplitude track (linear interpolation between frame
/// centers, zero where unselected), then peak-normalizes to 0.99.
pub fn vocode_with_phase(e: &Electrodogram, output_rate: u32, phase: CarrierPhase) -> Result<Waveform> {
    if output_rate == 0 {
        return Err(Error::InvalidRate(output_rate));
    }
    let top = e.center_freqs().iter().fold(0.0f64, |m, &f| m.max(f));
    if (output_rate as f64) < 2.0 * top {
        return Err(Error::invalid(format!(
            "output rate {output_rate} Hz is below twice the highest carrier ({top} Hz)"
        )));
    }
    let fs = output_rate as f64;
    let frames = e.num_frames();
    let len = (frames as f64 / e.frame_rate() * fs).round() as usize;
    let mut out = vec![0.0; len];
    if frames == 0 || e.stimulus_count() == 0 {
        return Waveform::new(out, output_rate);
    }

    let phases: Vec<f64> = match phase {
        CarrierPhase::Zero => vec![0.0; e.num_channels()],
        CarrierPhase::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..e.num_channels()).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
        }
    };
    let dense = e.to_dense();
    let c = e.num_channels();

    // frame centers sit at (f + 0.5) / frame_rate
    let positions: Vec<(usize, usize, f64)> = (0..len)
        .map(|i| {
            let p = (i as f64 / fs) * e.frame_rate() - 0.5;
            if p <= 0.0 {
                (0, 0, 0.0)
            } else if p >= (frames - 1) as f64 {
                (frames - 1, frames - 1, 0.0)
            } else {
                let f0 = p.floor() as usize;
                (f0, f0 + 1, p - f0 as f64)
            }
        })
        .collect();

    for ch in 0..c {
        let track = |f: usize| dense.values()[f * c + ch];
        if (0..frames).all(|f| track(f) == 0.0) {
            continue;
        }
        let omega = 2.0 * PI * e.center_freqs()[ch] / fs;
        for (i, (o, &(f0, f1, frac))) in out.iter_mut().zip(&positions).enumerate() {
            let a = track(f0) * (1.0 - frac) + track(f1) * frac;
            if a != 0.0 {
                *o += a * (omega * i as f64 + phases[ch]).sin();
            }
        }
    }

    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let g = OUTPUT_PEAK / peak;
        out.iter_mut().for_each(|x| *x *= g);
    }
    Waveform::new(out, output_rate)
}
