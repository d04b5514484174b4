//! `srrmask` command-line front end.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use srrmask::audio_io::{self, BitDepth};
use srrmask::ci_chain::{self, Electrodogram};
use srrmask::fixtures;
use srrmask::grid_csv;
use srrmask::harness::{self, ExperimentConfig};
use srrmask::metrics::Condition;
use srrmask::reverb::{self, RoomImpulseResponse};
use srrmask::tf_analysis::{self, EnvelopeGrid};

#[derive(Parser)]
#[command(name = "srrmask", version, about = "Reverberation masks for cochlear-implant processing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat JSON experiment config
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, value_name = "K", global = true)]
    jobs: Option<usize>,
    /// Write vocoded WAVs
    #[arg(long, global = true)]
    emit_audio: bool,
    /// Write electrodogram PGM images
    #[arg(long, global = true)]
    emit_images: bool,
    /// RIR WAV, overriding the config
    #[arg(long, value_name = "PATH", global = true)]
    rir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one condition on one sentence
    Process {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        /// direct | unmitigated | ibm:TAU_DB | irm:BETA
        #[arg(long, default_value = "ibm:-6")]
        condition: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run every configured condition over a corpus
    Sweep {
        /// Directory of WAVs, overriding the config
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Direct-path index, RT60 and per-sentence eSNR of an RIR
    RirInfo {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Electrodogram CSV and vocoded WAV from a sentence or electrodogram CSV
    Vocode {
        /// Sentence WAV or electrodogram CSV
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value = "ibm:-6")]
        condition: String,
        #[command(flatten)]
        common: Common,
    },
    /// Electrodogram image from a sentence or electrodogram CSV
    Render {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value = "ibm:-6")]
        condition: String,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic corpus and RIR
    Fixtures {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = fixtures::FIXTURE_RATE)]
        rate: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Print the analysis channel table
    Bands {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with its exit code: 1 for usage, 2 for data.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<srrmask::Error>() {
            Some(srrmask::Error::Config(_)) => 1,
            _ => 2,
        };
        Failure { code, error }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Process { input, condition, common } => process(&input, &condition, &common),
        Command::Sweep { corpus, common } => sweep(corpus, &common),
        Command::RirInfo { corpus, common } => rir_info(corpus, &common),
        Command::Vocode { input, condition, common } => vocode(&input, &condition, &common),
        Command::Render { input, condition, common } => render(&input, &condition, &common),
        Command::Fixtures { count, rate, common } => make_fixtures(count, rate, &common),
        Command::Bands { common } => bands(&common),
    }
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            srrmask::Error::Io { .. } | srrmask::Error::MissingFile(_) | srrmask::Error::Config(_) => {
                usage(anyhow!(e).context(format!("reading config {}", p.display())))
            }
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(r) = &common.rir {
        cfg.rir_path = Some(r.clone());
    }
    cfg.emit_audio |= common.emit_audio;
    cfg.emit_images |= common.emit_images;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn parse_condition(s: &str) -> CliResult<Condition> {
    s.parse().map_err(usage)
}

fn ensure_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn stem(path: &Path) -> String {
    let s = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    s.strip_suffix(".electrodogram").map(str::to_string).unwrap_or(s)
}

fn process(input: &Path, condition: &str, common: &Common) -> CliResult {
    let condition = parse_condition(condition)?;
    let cfg = load_config(common)?;
    let sentence = audio_io::read_wav(input)?;
    let rir = harness::resolve_rir(&cfg)?;
    let id = stem(input);
    let outcome = harness::run_condition(&id, &sentence, &rir, &cfg, condition)?;
    print!("{}", harness::score_csv(&outcome.score));
    if let Some(dir) = &cfg.out_dir {
        ensure_dir(dir)?;
        let base = format!("{id}__{}", condition.label());
        outcome.electrodogram.write_csv(dir.join(format!("{base}.electrodogram.csv")))?;
        if let Some(mask) = &outcome.mask {
            mask.write_csv(dir.join(format!("{base}.mask.csv")))?;
        }
        if cfg.emit_audio {
            let w = ci_chain::vocode(&outcome.electrodogram, cfg.sample_rate)?;
            audio_io::write_wav(&w, dir.join(format!("{base}.wav")), BitDepth::Float32)?;
        }
        if cfg.emit_images {
            harness::render_electrodogram(&outcome.electrodogram, dir.join(format!("{base}.pgm")))?;
        }
    }
    Ok(())
}

fn sweep(corpus: Option<PathBuf>, common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let dir = corpus
        .or_else(|| cfg.corpus_dir.clone())
        .ok_or_else(|| usage(anyhow!("no corpus: pass --corpus or set corpus_dir")))?;
    let sentences = harness::load_corpus(&dir)?;
    let rir = harness::resolve_rir(&cfg)?;
    info!("{} sentences x {} conditions, {} jobs", sentences.len(), cfg.conditions().len(), cfg.jobs);
    let emit = cfg.emit_audio || cfg.emit_images;
    if emit && cfg.out_dir.is_none() {
        return Err(usage(anyhow!("--emit-audio/--emit-images need --out")));
    }
    if let Some(out) = &cfg.out_dir {
        ensure_dir(out)?;
    }
    let result = harness::run_sweep(&cfg, &sentences, &rir, cfg.out_dir.as_deref().filter(|_| emit))?;
    let csv = result.to_csv();
    match &cfg.out_dir {
        Some(out) => {
            let path = out.join("scores.csv");
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn rir_info(corpus: Option<PathBuf>, common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let rir = harness::resolve_rir(&cfg)?;
    let fs = rir.sample_rate() as f64;
    println!("sample_rate_hz {}", rir.sample_rate());
    println!("taps {}", rir.len());
    println!("direct_index {}", rir.direct_index());
    println!("direct_time_ms {:.3}", rir.direct_index() as f64 / fs * 1000.0);
    match reverb::estimate_rt60(&rir) {
        Ok(t) => println!("rt60_s {t:.4}"),
        Err(e) => println!("rt60_s unavailable ({e})"),
    }
    if let Some(dir) = corpus.or_else(|| cfg.corpus_dir.clone()) {
        let sentences = harness::condition_corpus(&harness::load_corpus(&dir)?, &cfg)?;
        for (id, w) in &sentences {
            let p = harness::prepare(id, w, &rir, &cfg)?;
            println!("esnr_db {id} {:.4}", p.esnr_db);
        }
    }
    Ok(())
}

/// Electrodogram from either a grid CSV or a sentence WAV run through
/// `condition`.
fn electrodogram_from(input: &Path, condition: &str, cfg: &ExperimentConfig) -> CliResult<Electrodogram> {
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
        let (layout, values) = grid_csv::read_dense(BufReader::new(file), cfg.analysis().frame_rate())?;
        return Ok(Electrodogram::from_dense(&EnvelopeGrid::new(values, layout)?));
    }
    let condition = parse_condition(condition)?;
    let sentence = audio_io::read_wav(input)?;
    let rir: RoomImpulseResponse = harness::resolve_rir(cfg)?;
    Ok(harness::run_condition(&stem(input), &sentence, &rir, cfg, condition)?.electrodogram)
}

fn out_dir(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = cfg.out_dir.clone().ok_or_else(|| usage(anyhow!("--out is required")))?;
    ensure_dir(&dir)?;
    Ok(dir)
}

fn vocode(input: &Path, condition: &str, common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg)?;
    let e = electrodogram_from(input, condition, &cfg)?;
    let id = stem(input);
    let csv = dir.join(format!("{id}.electrodogram.csv"));
    e.write_csv(&csv)?;
    let wav = dir.join(format!("{id}.vocoded.wav"));
    audio_io::write_wav(&ci_chain::vocode(&e, cfg.sample_rate)?, &wav, BitDepth::Float32)?;
    println!("{}\n{}", csv.display(), wav.display());
    Ok(())
}

fn render(input: &Path, condition: &str, common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg)?;
    let e = electrodogram_from(input, condition, &cfg)?;
    let path = dir.join(format!("{}.pgm", stem(input)));
    harness::render_electrodogram(&e, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn make_fixtures(count: usize, rate: u32, common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg)?;
    if count == 0 {
        return Err(usage(anyhow!("--count must be at least 1")));
    }
    let corpus_dir = dir.join("corpus");
    ensure_dir(&corpus_dir)?;
    for (id, w) in fixtures::corpus(count, cfg.seed, rate)? {
        audio_io::write_wav(&w, corpus_dir.join(format!("{id}.wav")), BitDepth::Pcm16)?;
    }
    let rir = cfg.synthetic_rir().generate(cfg.seed)?;
    audio_io::write_wav(&rir.to_waveform()?, dir.join("rir.wav"), BitDepth::Float32)?;
    println!("{}\n{}", corpus_dir.display(), dir.join("rir.wav").display());
    Ok(())
}

fn bands(common: &Common) -> CliResult {
    let cfg = load_config(common)?;
    let analysis = cfg.analysis();
    let table = tf_analysis::channel_table(&analysis).map_err(usage)?;
    let bin_hz = analysis.sample_rate as f64 / analysis.fft_size as f64;
    println!("channel,first_bin,last_bin,low_hz,high_hz,center_hz");
    for (c, (band, cf)) in table.bands.iter().zip(&table.center_freqs).enumerate() {
        println!(
            "{},{},{},{:.1},{:.1},{:.1}",
            c + 1,
            band.start(),
            band.end(),
            (*band.start() as f64 - 0.5) * bin_hz,
            (*band.end() as f64 + 0.5) * bin_hz,
            cf
        );
    }
    Ok(())
}
