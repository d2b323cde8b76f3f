//! `afc`: closed-loop feedback cancellation experiments from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afc_core::buffer::db20;
use afc_core::decorrelate::{calibrate_alpha_with, Curve, ThdProbe};
use afc_core::io::{export_report, read_wav, write_audio_pair, write_wav, ExportOptions};
use afc_core::sim::{aggregate, coupling_scale, run_matrix_with, MatrixOutcome, RoomConvolver};
use afc_core::synth::{test_room_response, test_sentence};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "afc", version, about = "Acoustic feedback cancellation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one speech file through one room at one gain.
    Run(RunArgs),
    /// Run the cross product of all speech files, rooms, gains and variants.
    Matrix(MatrixArgs),
    /// Find the mix factor that gives a target THD on a sine probe.
    CalibrateThd(ThdArgs),
    /// Scale a room response to a target feedback level relative to the speech.
    CalibrateCoupling(CouplingArgs),
    /// Write the bundled test sentence and room response as WAV files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Speech WAV file, or `bundled` for the built-in test sentence.
    #[arg(long)]
    speech: Option<String>,
    /// Room response WAV file, or `bundled`.
    #[arg(long)]
    ir: Option<String>,
    /// Speaker label written to the report.
    #[arg(long)]
    speaker: Option<String>,
    /// Decorrelation preset (baseline, vibrato, distortion, edo, prediction, vib+pred, all).
    #[arg(long)]
    variant: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MatrixArgs {
    /// Comma-separated gains in dB, replacing the list from the config file.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gains_db: Option<Vec<f64>>,
    /// Comma-separated variant presets, replacing the list from the config file.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Also print group means separated by speaker.
    #[arg(long)]
    by_speaker: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory for runs.csv, traces, plots and audio.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Export reference/degraded WAV pairs.
    #[arg(long)]
    audio: bool,
    /// Skip SVG plots.
    #[arg(long)]
    no_plots: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ThdArgs {
    /// Curve number 1-4.
    #[arg(long)]
    curve: u8,
    /// Target THD in percent.
    #[arg(long)]
    thd: f64,
    #[arg(long, default_value_t = 0.5)]
    magnitude: f64,
    #[arg(long, default_value_t = 400.0)]
    freq_hz: f64,
    /// Bisection tolerance in percentage points.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args)]
struct CouplingArgs {
    #[arg(long)]
    speech: String,
    #[arg(long)]
    ir: String,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    target_db: f64,
    /// Speech delay in samples for the open-loop pass.
    #[arg(long, default_value_t = 256)]
    delay: usize,
    /// Write the scaled response here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Matrix(args) => matrix(args),
        Command::CalibrateThd(args) => calibrate_thd(args),
        Command::CalibrateCoupling(args) => calibrate_coupling(args),
        Command::Synth(args) => synth(args),
    }
}

fn load_config(common: &CommonArgs) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    common.overrides.apply(&mut cfg);
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.output.audio |= common.audio;
    cfg.output.plots &= !common.no_plots;
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.speech {
        let speaker = args.speaker.unwrap_or_else(|| "unknown".into());
        cfg.speech = vec![config::SpeechEntry::from_arg(&s, &speaker)];
    }
    if let Some(h) = args.ir {
        cfg.ir = vec![config::IrEntry::from_arg(&h)];
    }
    if let Some(v) = args.variant {
        cfg.variants = vec![v];
    }
    cfg.gains_db = vec![cfg.loop_config.gain_db];
    if cfg.speech.len() != 1 || cfg.ir.len() != 1 || cfg.variants.len() > 1 {
        bail!("`run` needs exactly one speech file, one room response and at most one variant");
    }
    execute(&cfg, false)
}

fn matrix(args: MatrixArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if let Some(g) = args.gains_db {
        cfg.gains_db = g;
    }
    if let Some(v) = args.variants {
        cfg.variants = v;
    }
    execute(&cfg, args.by_speaker)
}

fn execute(cfg: &Config, by_speaker: bool) -> Result<ExitCode> {
    let spec = cfg.matrix_spec()?;
    let dir = cfg.output.dir.clone();
    let audio = cfg.output.audio;
    let outcome = run_matrix_with(&spec, |report, run| {
        if audio {
            write_audio_pair(&dir, report.ordinal, &run.s_signal, &run.e_signal)?;
        }
        Ok(())
    })?;
    let opts = ExportOptions {
        traces: cfg.output.traces,
        plots: cfg.output.plots,
        audio,
        sample_rate: spec.mdf.sample_rate,
        hop: spec.mdf.hop(),
    };
    export_report(&outcome.reports(), &dir, &opts)
        .with_context(|| format!("exporting report to {}", dir.display()))?;
    print_summary(&outcome, by_speaker, &dir);
    Ok(exit_status(&outcome))
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

fn print_summary(outcome: &MatrixOutcome, by_speaker: bool, dir: &Path) {
    println!(
        "{:>4}  {:<12} {:<10} {:<10} {:>7}  {:>8} {:>8} {:>9}  status",
        "#", "variant", "speech", "room", "g [dB]", "sd5", "sd20+", "ovf [%]"
    );
    for r in outcome.rows.iter().map(|r| &r.report) {
        println!(
            "{:>4}  {:<12} {:<10} {:<10} {:>7}  {:>8} {:>8} {:>9.3}  {}",
            r.ordinal,
            r.variant,
            r.speech,
            r.ir,
            r.gain_db,
            fmt_db(r.sd5_db),
            fmt_db(r.sd20plus_db),
            r.overflow_pct,
            r.status
        );
    }
    if outcome.rows.len() > 1 {
        println!();
        println!("group means:");
        for g in aggregate(&outcome.reports(), by_speaker) {
            println!(
                "  {:<12} g={:<6} {:<8} n={}/{}  sd5 {:>8}  sd20+ {:>8}  ovf {}",
                g.variant,
                g.gain_db,
                g.speaker,
                g.ok_runs,
                g.runs,
                fmt_db(g.sd5_db),
                fmt_db(g.sd20plus_db),
                g.overflow_pct.map_or_else(|| "-".into(), |v| format!("{v:.3} %"))
            );
        }
    }
    println!("report written to {}", dir.display());
}

fn exit_status(outcome: &MatrixOutcome) -> ExitCode {
    let failed: Vec<_> = outcome.failed().collect();
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    eprintln!("{} of {} rows failed:", failed.len(), outcome.rows.len());
    for r in failed {
        eprintln!("  #{} {} / {} / {} dB / {}: {}", r.ordinal, r.speech, r.ir, r.gain_db, r.variant, r.status);
    }
    ExitCode::FAILURE
}

fn calibrate_thd(args: ThdArgs) -> Result<ExitCode> {
    let curve = Curve::try_from(args.curve)?;
    let probe = ThdProbe {
        freq_hz: args.freq_hz,
        magnitude: args.magnitude,
        ..ThdProbe::default()
    };
    let alpha = calibrate_alpha_with(curve, args.thd, &probe, args.tolerance)?;
    println!("curve {} THD {} %: mix_alpha = {alpha:.4}", args.curve, args.thd);
    Ok(ExitCode::SUCCESS)
}

fn load_signal(arg: &str, fs: u32, bundled: fn(u32) -> afc_core::SampleBuffer) -> Result<afc_core::SampleBuffer> {
    if arg == config::BUNDLED {
        return Ok(bundled(fs));
    }
    read_wav(arg).with_context(|| format!("reading {arg}"))
}

fn calibrate_coupling(args: CouplingArgs) -> Result<ExitCode> {
    let mut s = load_signal(&args.speech, 16_000, test_sentence)?;
    let h = load_signal(&args.ir, s.sample_rate, test_room_response)?;
    if s.sample_rate != h.sample_rate {
        bail!("speech is at {} Hz but the room response is at {} Hz", s.sample_rate, h.sample_rate);
    }
    s.normalize_peak(1.0);
    let factor = coupling_scale(&h.samples, &s.samples, args.target_db, args.delay)?;
    let scaled: Vec<f64> = h.samples.iter().map(|v| v * factor).collect();
    let mut room = RoomConvolver::new(&scaled);
    let r: Vec<f64> = (0..s.len())
        .map(|k| room.process(if k >= args.delay { s.samples[k - args.delay] } else { 0.0 }))
        .collect();
    let measured = db20(afc_core::buffer::rms(&r) / s.rms());
    println!("scale factor {factor:.6} ({:.2} dB); measured coupling {measured:.2} dB", db20(factor));
    if let Some(out) = args.out {
        write_wav(&out, &afc_core::SampleBuffer::new(scaled, h.sample_rate))?;
        println!("scaled response written to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let speech = args.out.join("sentence.wav");
    let room = args.out.join("room.wav");
    write_wav(&speech, &test_sentence(args.sample_rate))?;
    write_wav(&room, &test_room_response(args.sample_rate))?;
    println!("wrote {} and {}", speech.display(), room.display());
    Ok(ExitCode::SUCCESS)
}
