//! Per-unit speech-to-reverberant ratio and the oracle masks built on it.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid_csv;
use crate::tf_analysis::{EnvelopeGrid, GridLayout};

/// SRR range observed in practice; dB values are clamped to it and linear
/// values saturate at the matching powers of ten.
pub const SRR_CLAMP_DB: f64 = 75.0;
const LIN_MAX: f64 = 31_622_776.601683795; // 10^7.5
const LIN_MIN: f64 = 1.0 / LIN_MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SrrGrid {
    db: Vec<f64>,
    linear: Vec<f64>,
    layout: GridLayout,
}

impl SrrGrid {
    pub fn db_values(&self) -> &[f64] {
        &self.db
    }

    pub fn linear_values(&self) -> &[f64] {
        &self.linear
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn shape(&self) -> (usize, usize) {
        self.layout.shape()
    }

    /// Builds a grid straight from linear ratios (test and tooling entry
    /// point); the same clamping rules as [`srr_grid`] apply.
    pub fn from_linear(ratios: &[f64], layout: GridLayout) -> Result<Self> {
        if ratios.len() != layout.units() {
            return Err(Error::invalid(format!("{} ratios for {} units", ratios.len(), layout.units())));
        }
        let (db, linear) = ratios
            .iter()
            .map(|&r| {
                if r.is_nan() || r < 0.0 {
                    Err(Error::invalid(format!("SRR ratio {r} is not a non-negative number")))
                } else {
                    Ok(saturate(r))
                }
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self { db, linear, layout })
    }
}

fn saturate(ratio: f64) -> (f64, f64) {
    let db = (10.0 * ratio.log10()).clamp(-SRR_CLAMP_DB, SRR_CLAMP_DB);
    (db, ratio.clamp(LIN_MIN, LIN_MAX))
}

fn unit_srr(direct: f64, reverberant: f64) -> (f64, f64) {
    let num = direct * direct;
    let resid = reverberant - direct;
    let den = resid * resid;
    if den == 0.0 {
        if num > 0.0 {
            (SRR_CLAMP_DB, LIN_MAX)
        } else {
            // no direct energy anywhere in the unit: delete it
            (-SRR_CLAMP_DB, LIN_MIN)
        }
    } else {
        saturate(num / den)
    }
}

/// SRR per unit from direct-path and reverberant envelopes:
/// `|D|^2 / |Y - D|^2`, clamped to +-75 dB.
pub fn srr_grid(direct: &EnvelopeGrid, reverberant: &EnvelopeGrid) -> Result<SrrGrid> {
    direct.layout().check_same(reverberant.layout())?;
    let (db, linear) = direct
        .values()
        .iter()
        .zip(reverberant.values())
        .map(|(&d, &y)| unit_srr(d, y))
        .unzip();
    Ok(SrrGrid {
        db,
        linear,
        layout: direct.layout().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Binary,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskParams {
    /// IBM with local threshold `tau_db + esnr_db`.
    Threshold { tau_db: f64, esnr_db: f64 },
    /// IRM gain `(l / (l + alpha))^beta`.
    Ratio { alpha: f64, beta: f64 },
    /// All-ones mask (unmitigated processing).
    Passthrough,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainMask {
    gains: Vec<f64>,
    layout: GridLayout,
    params: MaskParams,
}

impl GainMask {
    pub fn passthrough(layout: GridLayout) -> Self {
        Self {
            gains: vec![1.0; layout.units()],
            layout,
            params: MaskParams::Passthrough,
        }
    }

    /// Binary mask from explicit 0/1 gains.
    pub fn binary(gains: Vec<f64>, layout: GridLayout) -> Result<Self> {
        if gains.len() != layout.units() {
            return Err(Error::invalid(format!("{} gains for {} units", gains.len(), layout.units())));
        }
        if gains.iter().any(|&g| g != 0.0 && g != 1.0) {
            return Err(Error::NonBinaryMask);
        }
        Ok(Self {
            gains,
            layout,
            params: MaskParams::Threshold {
                tau_db: f64::NAN,
                esnr_db: f64::NAN,
            },
        })
    }

    pub fn kind(&self) -> MaskKind {
        match self.params {
            MaskParams::Ratio { .. } => MaskKind::Ratio,
            MaskParams::Threshold { .. } | MaskParams::Passthrough => MaskKind::Binary,
        }
    }

    pub fn params(&self) -> MaskParams {
        self.params
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn shape(&self) -> (usize, usize) {
        self.layout.shape()
    }

    pub fn get(&self, frame: usize, channel: usize) -> f64 {
        self.gains[frame * self.layout.channels() + channel]
    }

    pub fn is_binary(&self) -> bool {
        self.gains.iter().all(|&g| g == 0.0 || g == 1.0)
    }

    pub fn to_csv(&self) -> String {
        grid_csv::to_string(&self.layout, &self.gains)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Ideal binary mask: 1 where the SRR strictly exceeds `tau_db + esnr_db`.
pub fn ibm(srr: &SrrGrid, tau_db: f64, esnr_db: f64) -> GainMask {
    let local = tau_db + esnr_db;
    GainMask {
        gains: srr.db.iter().map(|&v| if v > local { 1.0 } else { 0.0 }).collect(),
        layout: srr.layout.clone(),
        params: MaskParams::Threshold { tau_db, esnr_db },
    }
}

/// Ideal ratio mask `(l / (l + alpha))^beta` over the linear SRR.
pub fn irm(srr: &SrrGrid, alpha: f64, beta: f64) -> Result<GainMask> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("alpha and beta must be > 0, got {alpha}, {beta}")));
    }
    Ok(GainMask {
        gains: srr
            .linear
            .iter()
            .map(|&l| (l / (l + alpha)).powf(beta))
            .collect(),
        layout: srr.layout.clone(),
        params: MaskParams::Ratio { alpha, beta },
    })
}

/// Elementwise product of grid and mask gains.
pub fn apply_mask(grid: &EnvelopeGrid, mask: &GainMask) -> Result<EnvelopeGrid> {
    grid.layout().check_shape(&mask.layout)?;
    let values = grid
        .values()
        .iter()
        .zip(&mask.gains)
        .map(|(v, g)| v * g)
        .collect();
    EnvelopeGrid::new(values, grid.layout().clone())
}

/// Fraction of retained units (binary) or mean gain (ratio).
pub fn mask_density(mask: &GainMask) -> f64 {
    if mask.gains.is_empty() {
        return 0.0;
    }
    mask.gains.iter().sum::<f64>() / mask.gains.len() as f64
}
