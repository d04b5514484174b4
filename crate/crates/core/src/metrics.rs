//! Objective comparisons between processed and direct-path stimuli.
//!
//! These are transparent proxies (normalized cross-correlation of grids and
//! mask hit/false-alarm rates). They do not predict listener scores.

use crate::error::{Error, Result};
use crate::masking::GainMask;
use crate::tf_analysis::EnvelopeGrid;

/// Normalized cross-correlation of two flattened grids after mean removal.
/// Returns 0 when either grid is constant. Densify electrodograms with
/// [`crate::ci_chain::Electrodogram::to_dense`] first.
pub fn grid_similarity(a: &EnvelopeGrid, b: &EnvelopeGrid) -> Result<f64> {
    a.layout().check_shape(b.layout())?;
    ncc(a.values(), b.values())
}

/// Same statistic on raw slices, for waveforms and signed data.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Hit and false-alarm rates of a candidate binary mask against a
/// reference. A rate whose denominator is empty is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub hit_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

pub fn mask_confusion(candidate: &GainMask, reference: &GainMask) -> Result<Confusion> {
    candidate.layout().check_shape(reference.layout())?;
    if !candidate.is_binary() || !reference.is_binary() {
        return Err(Error::NonBinaryMask);
    }
    let (mut ones, mut hits, mut zeros, mut false_alarms) = (0usize, 0usize, 0usize, 0usize);
    for (&c, &r) in candidate.gains().iter().zip(reference.gains()) {
        if r == 1.0 {
            ones += 1;
            hits += (c == 1.0) as usize;
        } else {
            zeros += 1;
            false_alarms += (c == 1.0) as usize;
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Confusion {
        hit_rate: rate(hits, ones),
        false_alarm_rate: rate(false_alarms, zeros),
    })
}

/// Processing condition of one scored run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// Direct-path signal, unmasked. Defines the reference.
    Direct,
    /// Reverberant signal, unmasked.
    Unmitigated,
    /// Binary mask at threshold `tau_db` (offset by the sentence eSNR).
    Ibm(f64),
    /// Ratio mask with exponent `beta`.
    Irm(f64),
}

impl Condition {
    pub fn kind(&self) -> &'static str {
        match self {
            Condition::Direct => "direct",
            Condition::Unmitigated => "unmitigated",
            Condition::Ibm(_) => "ibm",
            Condition::Irm(_) => "irm",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Condition::Ibm(v) | Condition::Irm(v) => Some(v),
            _ => None,
        }
    }

    /// File-name friendly label such as `ibm_-6` or `irm_0.25`.
    pub fn label(&self) -> String {
        match self.param() {
            Some(p) => format!("{}_{p}", self.kind()),
            None => self.kind().to_string(),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}:{p}", self.kind()),
            None => f.write_str(self.kind()),
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    /// Accepts `direct`, `unmitigated`, `ibm:<tau_db>`, `irm:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognized condition '{s}' (direct | unmitigated | ibm:TAU | irm:BETA)"));
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p.trim().parse::<f64>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind.trim(), param) {
            ("direct", None) => Ok(Condition::Direct),
            ("unmitigated", None) => Ok(Condition::Unmitigated),
            ("ibm", Some(t)) if t.is_finite() => Ok(Condition::Ibm(t)),
            ("irm", Some(b)) if b > 0.0 && b.is_finite() => Ok(Condition::Irm(b)),
            _ => Err(bad()),
        }
    }
}

/// Score of one (sentence, condition) run. Absent values mean the
/// statistic does not apply (e.g. hit rate for a ratio mask).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionScore {
    pub sentence_id: String,
    pub condition: Condition,
    pub esnr_db: f64,
    pub density: Option<f64>,
    pub similarity: f64,
    pub hit_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{ibm, SrrGrid};
    use crate::tf_analysis::GridLayout;
    use proptest::prelude::*;

    fn layout(frames: usize, channels: usize) -> GridLayout {
        GridLayout::new(frames, 1000.0, (1..=channels).map(|c| c as f64 * 100.0).collect()).unwrap()
    }

    fn grid(values: Vec<f64>, frames: usize) -> EnvelopeGrid {
        let c = values.len() / frames;
        EnvelopeGrid::new(values, layout(frames, c)).unwrap()
    }

    #[test]
    fn self_similarity() {
        let a = grid(vec![0.1, 0.5, 0.0, 2.0, 1.0, 0.3], 2);
        assert!((grid_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_pattern() {
        let a = [0.1, 0.5, -0.2, 2.0];
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((ncc(&a, &b).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_grid_scores_zero() {
        let a = grid(vec![0.3; 6], 2);
        let b = grid(vec![0.1, 0.5, 0.0, 2.0, 1.0, 0.3], 2);
        assert_eq!(grid_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn shifted_orthogonal_patterns() {
        // period-4 square wave over frames, alternating sign across channels;
        // a one-frame shift of it is orthogonal after mean removal
        let (frames, channels) = (16, 6);
        let square = |f: usize| if (f % 4) < 2 { 1.0 } else { -1.0 };
        let pat = |shift: usize| -> Vec<f64> {
            (0..frames)
                .flat_map(|f| (0..channels).map(move |c| square(f + shift) * if c % 2 == 0 { 1.0 } else { -1.0 }))
                .collect()
        };
        let (a, b) = (pat(0), pat(1));
        // brute-force check of the construction itself
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(mean(&a), 0.0);
        assert_eq!(mean(&b), 0.0);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot, 0.0);
        // shift to non-negative so they are valid envelope grids
        let ga = grid(a.iter().map(|v| v + 1.0).collect(), frames);
        let gb = grid(b.iter().map(|v| v + 1.0).collect(), frames);
        assert!(grid_similarity(&ga, &gb).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let a = grid(vec![0.0; 6], 2);
        let b = grid(vec![0.0; 6], 3);
        assert!(matches!(grid_similarity(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    fn binary(g: &[f64]) -> GainMask {
        GainMask::binary(g.to_vec(), layout(1, g.len())).unwrap()
    }

    #[test]
    fn confusion_cases() {
        let reference = binary(&[1.0, 0.0, 1.0, 0.0]);
        let c = mask_confusion(&reference, &reference).unwrap();
        assert_eq!((c.hit_rate, c.false_alarm_rate), (Some(1.0), Some(0.0)));
        let c = mask_confusion(&binary(&[1.0; 4]), &reference).unwrap();
        assert_eq!((c.hit_rate, c.false_alarm_rate), (Some(1.0), Some(1.0)));
        let c = mask_confusion(&binary(&[0.0, 1.0, 0.0, 1.0]), &reference).unwrap();
        assert_eq!((c.hit_rate, c.false_alarm_rate), (Some(0.0), Some(1.0)));
    }

    #[test]
    fn degenerate_reference_reports_absent() {
        let c = mask_confusion(&binary(&[1.0, 0.0]), &binary(&[1.0, 1.0])).unwrap();
        assert_eq!(c.hit_rate, Some(0.5));
        assert_eq!(c.false_alarm_rate, None);
        let c = mask_confusion(&binary(&[1.0, 0.0]), &binary(&[0.0, 0.0])).unwrap();
        assert_eq!(c.hit_rate, None);
    }

    #[test]
    fn non_binary_rejected() {
        let s = SrrGrid::from_linear(&[1.0, 2.0], layout(1, 2)).unwrap();
        let ratio = crate::masking::irm(&s, 1.0, 1.0).unwrap();
        let b = ibm(&s, 0.0, 0.0);
        assert!(matches!(mask_confusion(&ratio, &b), Err(Error::NonBinaryMask)));
    }

    #[test]
    fn condition_parsing() {
        for (s, c) in [
            ("direct", Condition::Direct),
            ("unmitigated", Condition::Unmitigated),
            ("ibm:-6", Condition::Ibm(-6.0)),
            ("irm:0.25", Condition::Irm(0.25)),
        ] {
            let parsed: Condition = s.parse().unwrap();
            assert_eq!(parsed, c);
            assert_eq!(parsed.to_string(), s);
        }
        assert_eq!(Condition::Ibm(-6.0).label(), "ibm_-6");
        for bad in ["ibm", "irm:0", "irm:-1", "direct:3", "foo", "ibm:x"] {
            assert!(bad.parse::<Condition>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn similarity_invariances(a in proptest::collection::vec(0.0f64..5.0, 12),
                                  b in proptest::collection::vec(0.0f64..5.0, 12),
                                  s in 0.01f64..100.0, k in 0.0f64..10.0) {
            let ga = grid(a.clone(), 3);
            let gb = grid(b.clone(), 3);
            let base = grid_similarity(&ga, &gb).unwrap();
            prop_assert!((-1.0..=1.0).contains(&base));
            prop_assert!((base - grid_similarity(&gb, &ga).unwrap()).abs() < 1e-12);
            prop_assert!((base - grid_similarity(&ga.scaled(s).unwrap(), &gb).unwrap()).abs() < 1e-9);
            let shifted = grid(a.iter().map(|v| v + k).collect(), 3);
            prop_assert!((base - grid_similarity(&shifted, &gb).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn confusion_monotone_above_reference(r in proptest::collection::vec(1e-9f64..1e9, 20),
                                              d1 in 0.0f64..30.0, dd in 0.0f64..30.0, e in -20.0f64..20.0) {
            let s = SrrGrid::from_linear(&r, layout(4, 5)).unwrap();
            let reference = ibm(&s, -6.0, e);
            let lo = mask_confusion(&ibm(&s, -6.0 + d1, e), &reference).unwrap();
            let hi = mask_confusion(&ibm(&s, -6.0 + d1 + dd, e), &reference).unwrap();
            if let (Some(a), Some(b)) = (lo.hit_rate, hi.hit_rate) { prop_assert!(b <= a); }
            if let (Some(a), Some(b)) = (lo.false_alarm_rate, hi.false_alarm_rate) { prop_assert!(b <= a); }
        }
    }
}
