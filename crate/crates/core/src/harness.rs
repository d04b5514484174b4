//! Batch experiment driver: config, per-condition pipeline, sweeps, and
//! artifact writers (CSV, WAV, PGM).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio_io::{self, BitDepth, Waveform};
use crate::ci_chain::{self, Electrodogram};
use crate::error::{Error, Result};
use crate::masking::{self, GainMask, SrrGrid, SRR_CLAMP_DB};
use crate::metrics::{self, Condition, ConditionScore};
use crate::par::{self, Jobs};
use crate::reverb::{self, RoomImpulseResponse, SyntheticRir};
use crate::tf_analysis::{self, AnalysisConfig, EnvelopeGrid, Window};

/// IBM threshold of the ground-truth mask used for hit/false-alarm rates.
pub const REFERENCE_TAU_DB: f64 = -6.0;
/// `sentence_id` of aggregate rows.
pub const AGGREGATE_ID: &str = "ALL";

pub const CSV_HEADER: &str =
    "sentence_id,condition_kind,param,esnr_db,density,similarity,hit_rate,false_alarm_rate,density_sd,similarity_sd";

/// Flat JSON experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus_dir: Option<PathBuf>,
    /// Measured RIR. When absent a synthetic one is generated from the
    /// `rir_*` fields and `seed`.
    pub rir_path: Option<PathBuf>,
    pub rir_rt60_s: f64,
    pub rir_direct_delay_ms: f64,
    pub rir_tail_onset_ms: f64,
    pub rir_tail_gain: f64,
    pub window_ms: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub num_channels: usize,
    pub maxima: usize,
    pub tau_list: Vec<f64>,
    pub beta_list: Vec<f64>,
    pub alpha: f64,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub emit_audio: bool,
    pub emit_images: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rir = SyntheticRir::lecture_hall();
        let analysis = AnalysisConfig::default();
        Self {
            corpus_dir: None,
            rir_path: None,
            rir_rt60_s: rir.rt60_s,
            rir_direct_delay_ms: rir.direct_delay_ms,
            rir_tail_onset_ms: rir.tail_onset_ms,
            rir_tail_gain: rir.tail_gain,
            window_ms: reverb::DIRECT_WINDOW_MS,
            sample_rate: analysis.sample_rate,
            fft_size: analysis.fft_size,
            hop: analysis.hop,
            num_channels: analysis.num_channels,
            maxima: ci_chain::DEFAULT_MAXIMA,
            tau_list: vec![-12.0, -9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            beta_list: vec![0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            alpha: 1.0,
            out_dir: None,
            seed: 0,
            jobs: 1,
            emit_audio: false,
            emit_images: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            sample_rate: self.sample_rate,
            fft_size: self.fft_size,
            hop: self.hop,
            window: Window::Hann,
            num_channels: self.num_channels,
        }
    }

    pub fn synthetic_rir(&self) -> SyntheticRir {
        SyntheticRir {
            rt60_s: self.rir_rt60_s,
            direct_delay_ms: self.rir_direct_delay_ms,
            tail_onset_ms: self.rir_tail_onset_ms,
            sample_rate: self.sample_rate,
            tail_gain: self.rir_tail_gain,
        }
    }

    pub fn jobs(&self) -> Jobs {
        Jobs::new(self.jobs)
    }

    /// Baselines first, then the IBM and IRM grids in list order.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = vec![Condition::Direct, Condition::Unmitigated];
        out.extend(self.tau_list.iter().map(|&t| Condition::Ibm(t)));
        out.extend(self.beta_list.iter().map(|&b| Condition::Irm(b)));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.analysis().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.tau_list.is_empty() || self.beta_list.is_empty() {
            return cfg("tau_list and beta_list must be non-empty".into());
        }
        if let Some(t) = self.tau_list.iter().find(|t| !t.is_finite()) {
            return cfg(format!("tau_list entry {t} is not finite"));
        }
        if let Some(b) = self.beta_list.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return cfg(format!("beta_list entry {b} must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return cfg(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.window_ms >= 0.0 && self.window_ms.is_finite()) {
            return cfg(format!("window_ms must be >= 0, got {}", self.window_ms));
        }
        if self.jobs == 0 {
            return cfg("jobs must be >= 1".into());
        }
        if self.maxima == 0 || self.maxima > self.num_channels {
            return cfg(format!("maxima must be in 1..={}, got {}", self.num_channels, self.maxima));
        }
        Ok(())
    }
}

/// RIR named by the config, at the analysis rate.
pub fn resolve_rir(cfg: &ExperimentConfig) -> Result<RoomImpulseResponse> {
    match &cfg.rir_path {
        Some(path) => {
            let w = audio_io::read_wav(path)?;
            let w = if w.sample_rate() == cfg.sample_rate {
                w
            } else {
                audio_io::resample(&w, cfg.sample_rate)?
            };
            RoomImpulseResponse::from_waveform(w)
        }
        None => cfg.synthetic_rir().generate(cfg.seed),
    }
}

/// Mono WAVs in `dir`, sorted by file name; ids are file stems.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, Waveform)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, audio_io::read_wav(p)?))
        })
        .collect()
}

/// Resamples every sentence to the analysis rate and applies the shared
/// RMS normalization.
pub fn condition_corpus(corpus: &[(String, Waveform)], cfg: &ExperimentConfig) -> Result<Vec<(String, Waveform)>> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let resampled = par::try_map(cfg.jobs(), corpus, |(id, w)| {
        audio_io::resample(w, cfg.sample_rate).map_err(|e| context(id, "resample", e))
    })?;
    let normalized = audio_io::normalize_rms_group(&resampled)?;
    Ok(corpus.iter().map(|(id, _)| id.clone()).zip(normalized).collect())
}

fn context(sentence: &str, condition: impl ToString, e: Error) -> Error {
    Error::Condition {
        sentence: sentence.to_string(),
        condition: condition.to_string(),
        source: Box::new(e),
    }
}

/// Everything about one sentence that does not depend on the condition.
#[derive(Debug, Clone)]
pub struct PreparedSentence {
    pub id: String,
    pub direct: Waveform,
    pub reverberant: Waveform,
    pub direct_grid: EnvelopeGrid,
    pub reverberant_grid: EnvelopeGrid,
    pub srr: SrrGrid,
    /// Clamped to +75 dB for an anechoic (zero-residual) scene.
    pub esnr_db: f64,
    pub reference: Electrodogram,
    pub reference_mask: GainMask,
}

/// Convolves, analyzes and scores the condition-independent parts.
/// `source` must already be at the analysis rate and normalized.
pub fn prepare(id: &str, source: &Waveform, rir: &RoomImpulseResponse, cfg: &ExperimentConfig) -> Result<PreparedSentence> {
    let analysis = cfg.analysis();
    let reverberant = reverb::make_reverberant(source, rir)?;
    let direct = reverb::make_direct(source, rir, cfg.window_ms)?;
    let esnr_db = match reverb::esnr(&direct, &reverberant) {
        Ok(v) => v.clamp(-SRR_CLAMP_DB, SRR_CLAMP_DB),
        Err(Error::Anechoic) => SRR_CLAMP_DB,
        Err(e) => return Err(e),
    };
    let direct_grid = tf_analysis::analyze(&direct, &analysis)?;
    let reverberant_grid = tf_analysis::analyze(&reverberant, &analysis)?;
    let srr = masking::srr_grid(&direct_grid, &reverberant_grid)?;
    let reference = ci_chain::select_maxima(&direct_grid, cfg.maxima)?;
    let reference_mask = masking::ibm(&srr, REFERENCE_TAU_DB, esnr_db);
    Ok(PreparedSentence {
        id: id.to_string(),
        direct,
        reverberant,
        direct_grid,
        reverberant_grid,
        srr,
        esnr_db,
        reference,
        reference_mask,
    })
}

/// Score plus the intermediate products a caller may want to write out.
#[derive(Debug, Clone)]
pub struct ConditionOutcome {
    pub score: ConditionScore,
    pub mask: Option<GainMask>,
    pub electrodogram: Electrodogram,
}

/// Runs one condition on a prepared sentence.
pub fn evaluate(p: &PreparedSentence, condition: Condition, cfg: &ExperimentConfig) -> Result<ConditionOutcome> {
    let run = || -> Result<ConditionOutcome> {
        let (grid, mask) = match condition {
            Condition::Direct => (p.direct_grid.clone(), None),
            Condition::Unmitigated => {
                let m = GainMask::passthrough(p.reverberant_grid.layout().clone());
                (masking::apply_mask(&p.reverberant_grid, &m)?, Some(m))
            }
            Condition::Ibm(tau) => {
                let m = masking::ibm(&p.srr, tau, p.esnr_db);
                (masking::apply_mask(&p.reverberant_grid, &m)?, Some(m))
            }
            Condition::Irm(beta) => {
                let m = masking::irm(&p.srr, cfg.alpha, beta)?;
                (masking::apply_mask(&p.reverberant_grid, &m)?, Some(m))
            }
        };
        let electrodogram = if condition == Condition::Direct {
            p.reference.clone()
        } else {
            ci_chain::select_maxima(&grid, cfg.maxima)?
        };
        let similarity = metrics::grid_similarity(&electrodogram.to_dense(), &p.reference.to_dense())?;
        let (hit_rate, false_alarm_rate) = match &mask {
            Some(m) if m.is_binary() => {
                let c = metrics::mask_confusion(m, &p.reference_mask)?;
                (c.hit_rate, c.false_alarm_rate)
            }
            _ => (None, None),
        };
        Ok(ConditionOutcome {
            score: ConditionScore {
                sentence_id: p.id.clone(),
                condition,
                esnr_db: p.esnr_db,
                density: mask.as_ref().map(masking::mask_density),
                similarity,
                hit_rate,
                false_alarm_rate,
            },
            mask,
            electrodogram,
        })
    };
    run().map_err(|e| context(&p.id, condition, e))
}

/// Single sentence, single condition, from a raw waveform at any rate.
pub fn run_condition(
    id: &str,
    sentence: &Waveform,
    rir: &RoomImpulseResponse,
    cfg: &ExperimentConfig,
    condition: Condition,
) -> Result<ConditionOutcome> {
    let conditioned = condition_corpus(&[(id.to_string(), sentence.clone())], cfg)?;
    let p = prepare(id, &conditioned[0].1, rir, cfg).map_err(|e| context(id, condition, e))?;
    evaluate(&p, condition, cfg)
}

/// Per-condition statistics across sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateScore {
    pub condition: Condition,
    pub sentences: usize,
    pub esnr_db: f64,
    pub density: Option<f64>,
    pub density_sd: Option<f64>,
    pub similarity: f64,
    pub similarity_sd: f64,
    pub hit_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

fn aggregate(condition: Condition, rows: &[&ConditionScore]) -> AggregateScore {
    let collect = |f: &dyn Fn(&ConditionScore) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
    let (esnr_db, _) = mean_sd(&collect(&|r| Some(r.esnr_db))).unwrap_or_default();
    let (similarity, similarity_sd) = mean_sd(&collect(&|r| Some(r.similarity))).unwrap_or_default();
    let density = mean_sd(&collect(&|r| r.density));
    AggregateScore {
        condition,
        sentences: rows.len(),
        esnr_db,
        density: density.map(|d| d.0),
        density_sd: density.map(|d| d.1),
        similarity,
        similarity_sd,
        hit_rate: mean_sd(&collect(&|r| r.hit_rate)).map(|v| v.0),
        false_alarm_rate: mean_sd(&collect(&|r| r.false_alarm_rate)).map(|v| v.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by sentence id, then condition order.
    pub scores: Vec<ConditionScore>,
    /// One per condition, in condition order.
    pub aggregates: Vec<AggregateScore>,
}

impl SweepResult {
    pub fn score(&self, sentence_id: &str, condition: Condition) -> Option<&ConditionScore> {
        self.scores
            .iter()
            .find(|s| s.sentence_id == sentence_id && s.condition == condition)
    }

    pub fn aggregate(&self, condition: Condition) -> Option<&AggregateScore> {
        self.aggregates.iter().find(|a| a.condition == condition)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.scores {
            csv_row(&mut out, &s.sentence_id, s.condition, s.esnr_db, s.density, s.similarity, s.hit_rate, s.false_alarm_rate, None, None);
        }
        for a in &self.aggregates {
            csv_row(
                &mut out,
                AGGREGATE_ID,
                a.condition,
                a.esnr_db,
                a.density,
                a.similarity,
                a.hit_rate,
                a.false_alarm_rate,
                Some(a.density_sd),
                Some(a.similarity_sd),
            );
        }
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Header of a single-score CSV as printed by `process`.
pub fn score_csv(score: &ConditionScore) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    csv_row(&mut out, &score.sentence_id, score.condition, score.esnr_db, score.density, score.similarity, score.hit_rate, score.false_alarm_rate, None, None);
    out
}

#[allow(clippy::too_many_arguments)]
fn csv_row(
    out: &mut String,
    id: &str,
    condition: Condition,
    esnr_db: f64,
    density: Option<f64>,
    similarity: f64,
    hit_rate: Option<f64>,
    false_alarm_rate: Option<f64>,
    density_sd: Option<Option<f64>>,
    similarity_sd: Option<f64>,
) {
    let param = condition.param().map(|p| format!("{p}")).unwrap_or_default();
    let _ = writeln!(
        out,
        "{id},{},{param},{},{},{},{},{},{},{}",
        condition.kind(),
        num(esnr_db),
        opt(density),
        num(similarity),
        opt(hit_rate),
        opt(false_alarm_rate),
        opt(density_sd.flatten()),
        opt(similarity_sd),
    );
}

/// Every configured condition on every sentence. When `artifacts` is given
/// and the config asks for them, vocoded WAVs and electrodogram images are
/// written beneath it.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    corpus: &[(String, Waveform)],
    rir: &RoomImpulseResponse,
    artifacts: Option<&Path>,
) -> Result<SweepResult> {
    cfg.validate()?;
    let mut corpus = condition_corpus(corpus, cfg)?;
    corpus.sort_by(|a, b| a.0.cmp(&b.0));
    let prepared = par::try_map(cfg.jobs(), &corpus, |(id, w)| {
        prepare(id, w, rir, cfg).map_err(|e| context(id, "prepare", e))
    })?;

    let conditions = cfg.conditions();
    let items: Vec<(usize, Condition)> = (0..prepared.len())
        .flat_map(|s| conditions.iter().map(move |&c| (s, c)))
        .collect();
    if let Some(dir) = artifacts {
        create_artifact_dirs(dir, cfg)?;
    }
    let scores = par::try_map(cfg.jobs(), &items, |&(s, c)| {
        let outcome = evaluate(&prepared[s], c, cfg)?;
        if let Some(dir) = artifacts {
            write_artifacts(dir, cfg, &outcome).map_err(|e| context(&prepared[s].id, c, e))?;
        }
        Ok::<_, Error>(outcome.score)
    })?;

    let aggregates = conditions
        .iter()
        .map(|&c| {
            let rows: Vec<&ConditionScore> = scores.iter().filter(|s| s.condition == c).collect();
            aggregate(c, &rows)
        })
        .collect();
    Ok(SweepResult { scores, aggregates })
}

fn create_artifact_dirs(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    for (on, sub) in [(cfg.emit_audio, "audio"), (cfg.emit_images, "images")] {
        if on {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// Writes the vocoded WAV and/or electrodogram image of one outcome.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, outcome: &ConditionOutcome) -> Result<()> {
    let stem = format!("{}__{}", outcome.score.sentence_id, outcome.score.condition.label());
    if cfg.emit_audio {
        let w = ci_chain::vocode(&outcome.electrodogram, cfg.sample_rate)?;
        audio_io::write_wav(&w, dir.join("audio").join(format!("{stem}.wav")), BitDepth::Float32)?;
    }
    if cfg.emit_images {
        render_electrodogram(&outcome.electrodogram, dir.join("images").join(format!("{stem}.pgm")))?;
    }
    Ok(())
}

/// Path of the metadata file written next to an image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// 8-bit binary PGM: one column per frame, one row per channel with
/// channel 1 at the bottom, intensity proportional to amplitude over the
/// electrodogram's maximum.
pub fn electrodogram_pgm(e: &Electrodogram) -> Vec<u8> {
    let (w, h) = (e.num_frames(), e.num_channels());
    let max = e.max_amplitude();
    let mut pixels = vec![0u8; w * h];
    if max > 0.0 {
        for (f, frame) in e.frames().iter().enumerate() {
            for s in frame {
                let row = h - 1 - s.channel;
                pixels[row * w + f] = (s.amplitude / max * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

pub fn render_electrodogram(e: &Electrodogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if e.num_frames() == 0 {
        return Err(Error::Empty("electrodogram"));
    }
    let write = |p: &Path, bytes: &[u8]| -> Result<()> {
        let mut f = std::fs::File::create(p).map_err(|err| Error::io(p, err))?;
        f.write_all(bytes).map_err(|err| Error::io(p, err))
    };
    write(path, &electrodogram_pgm(e))?;

    let mut meta = String::new();
    let _ = writeln!(meta, "width_frames {}", e.num_frames());
    let _ = writeln!(meta, "height_channels {}", e.num_channels());
    let _ = writeln!(meta, "frame_rate_hz {}", e.frame_rate());
    let _ = writeln!(meta, "duration_s {}", e.num_frames() as f64 / e.frame_rate());
    let _ = writeln!(meta, "max_amplitude {}", e.max_amplitude());
    let _ = writeln!(meta, "x_axis time, column i starts at i / frame_rate_hz");
    let _ = writeln!(meta, "y_axis channel, bottom row is channel 1");
    for (c, f) in e.center_freqs().iter().enumerate() {
        let _ = writeln!(meta, "channel {} center_hz {f}", c + 1);
    }
    write(&sidecar_path(path), meta.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci_chain::select_maxima;
    use crate::fixtures;
    use crate::tf_analysis::GridLayout;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            tau_list: vec![-6.0, 75.0],
            beta_list: vec![0.25],
            ..Default::default()
        }
    }

    fn delta() -> RoomImpulseResponse {
        RoomImpulseResponse::new(vec![1.0], 16000).unwrap()
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let e = ExperimentConfig::from_json(r#"{"tau_lst": [1.0]}"#).unwrap_err();
        assert!(matches!(e, Error::Config(m) if m.contains("tau_lst")));
        let cfg = ExperimentConfig::from_json(r#"{"seed": 4, "alpha": 2.0}"#).unwrap();
        assert_eq!((cfg.seed, cfg.alpha, cfg.tau_list.len()), (4, 2.0, 11));
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn config_invariants() {
        for bad in [
            r#"{"tau_list": []}"#,
            r#"{"beta_list": [0.0]}"#,
            r#"{"window_ms": -1.0}"#,
            r#"{"jobs": 0}"#,
            r#"{"maxima": 23}"#,
            r#"{"hop": 0}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn condition_list() {
        let c = ExperimentConfig::default().conditions();
        assert_eq!(c.len(), 24);
        assert_eq!(c[0], Condition::Direct);
        assert_eq!(c[2], Condition::Ibm(-12.0));
        assert_eq!(c[23], Condition::Irm(64.0));
    }

    #[test]
    fn direct_condition_is_self_similar() {
        let s = fixtures::sentence(1, 16000).unwrap();
        let rir = SyntheticRir::lecture_hall().generate(0).unwrap();
        let o = run_condition("s", &s, &rir, &ExperimentConfig::default(), Condition::Direct).unwrap();
        assert_eq!(o.score.similarity, 1.0);
        assert_eq!(o.score.density, None);
        assert!(o.score.esnr_db.is_finite() && o.score.esnr_db < 75.0);
    }

    #[test]
    fn all_delete_threshold() {
        // tau + eSNR at or beyond the clamp keeps nothing
        let s = fixtures::sentence(2, 16000).unwrap();
        let rir = SyntheticRir::lecture_hall().generate(0).unwrap();
        let o = run_condition("s", &s, &rir, &ExperimentConfig::default(), Condition::Ibm(75.0 + 75.0)).unwrap();
        assert_eq!(o.score.density, Some(0.0));
        assert_eq!(o.electrodogram.stimulus_count(), 0);
        assert_eq!(o.score.similarity, 0.0);
    }

    #[test]
    fn anechoic_scene() {
        let s = fixtures::sentence(3, 16000).unwrap();
        let cfg = small_cfg();
        let corpus = condition_corpus(&[("a".into(), s)], &cfg).unwrap();
        let p = prepare("a", &corpus[0].1, &delta(), &cfg).unwrap();
        assert_eq!(p.esnr_db, SRR_CLAMP_DB);
        assert!(p.srr.db_values().iter().all(|&v| v == SRR_CLAMP_DB));
        let o = evaluate(&p, Condition::Ibm(-6.0), &cfg).unwrap();
        assert_eq!(o.score.similarity, 1.0);
    }

    #[test]
    fn errors_carry_context() {
        let cfg = small_cfg();
        let corpus = vec![("quiet".to_string(), Waveform::silence(100, 16000).unwrap())];
        let e = run_sweep(&cfg, &corpus, &delta(), None).unwrap_err();
        assert!(matches!(e, Error::SilentWaveform(0)));
        let e = run_sweep(&cfg, &[], &delta(), None).unwrap_err();
        assert!(matches!(e, Error::Empty("corpus")));
        let s = fixtures::sentence(3, 16000).unwrap();
        let bad = ExperimentConfig { alpha: -1.0, ..small_cfg() };
        let corpus = condition_corpus(&[("x".into(), s)], &cfg).unwrap();
        let p = prepare("x", &corpus[0].1, &delta(), &cfg).unwrap();
        let e = evaluate(&p, Condition::Irm(1.0), &bad).unwrap_err();
        assert!(matches!(e, Error::Condition { ref sentence, ref condition, .. } if sentence == "x" && condition == "irm:1"));
    }

    #[test]
    fn sweep_row_counts() {
        let corpus = fixtures::corpus(2, 5, 16000).unwrap();
        let cfg = ExperimentConfig::default();
        let rir = resolve_rir(&cfg).unwrap();
        let r = run_sweep(&cfg, &corpus, &rir, None).unwrap();
        assert_eq!(r.scores.len(), 48);
        assert_eq!(r.aggregates.len(), 24);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 48 + 24);
        assert!(csv.lines().all(|l| l.split(',').count() == 10));
        let u = r.aggregate(Condition::Unmitigated).unwrap();
        assert_eq!((u.density, u.hit_rate, u.false_alarm_rate), (Some(1.0), Some(1.0), Some(1.0)));
        let irm = r.aggregate(Condition::Irm(0.25)).unwrap();
        assert_eq!(irm.hit_rate, None);
    }

    #[test]
    fn mean_sd_oracle() {
        assert_eq!(mean_sd(&[]), None);
        assert_eq!(mean_sd(&[3.0]), Some((3.0, 0.0)));
        let (m, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    fn dogram(values: Vec<f64>, frames: usize, channels: usize) -> Electrodogram {
        let layout = GridLayout::new(frames, 1000.0, (0..channels).map(|c| 200.0 * (c + 1) as f64).collect()).unwrap();
        select_maxima(&EnvelopeGrid::new(values, layout).unwrap(), channels).unwrap()
    }

    fn parse_pgm(bytes: &[u8]) -> (usize, usize, &[u8]) {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap().to_string());
        }
        assert_eq!(fields[0], "P5");
        assert_eq!(fields[3], "255");
        (fields[1].parse().unwrap(), fields[2].parse().unwrap(), &bytes[pos + 1..])
    }

    #[test]
    fn pgm_single_unit() {
        let (frames, channels) = (10, 6);
        let mut v = vec![0.0; frames * channels];
        v[5 * channels + 2] = 0.7; // frame 5, channel 3
        let (w, h, px) = {
            let bytes = electrodogram_pgm(&dogram(v, frames, channels));
            let (w, h, px) = parse_pgm(&bytes);
            (w, h, px.to_vec())
        };
        assert_eq!((w, h, px.len()), (frames, channels, frames * channels));
        let lit: Vec<usize> = (0..px.len()).filter(|&i| px[i] != 0).collect();
        // channel 3 is row h - 3 from the top
        assert_eq!(lit, vec![(h - 3) * w + 5]);
        assert_eq!(px[lit[0]], 255);
    }

    #[test]
    fn pgm_empty_is_black() {
        let bytes = electrodogram_pgm(&dogram(vec![0.0; 12], 4, 3));
        let (w, h, px) = parse_pgm(&bytes);
        assert_eq!((w, h), (4, 3));
        assert!(px.len() == 12 && px.iter().all(|&p| p == 0));
    }

    #[test]
    fn render_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.pgm");
        render_electrodogram(&dogram(vec![0.1, 0.2, 0.3, 0.4], 2, 2), &path).unwrap();
        let meta = std::fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(meta.contains("width_frames 2") && meta.contains("channel 1 center_hz 200"));
        let bad = dir.path().join("missing").join("e.pgm");
        assert!(matches!(render_electrodogram(&dogram(vec![0.1; 4], 2, 2), bad), Err(Error::Io { .. })));
    }
}
