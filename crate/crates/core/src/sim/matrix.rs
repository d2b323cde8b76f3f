//! Batch execution over speech x room x gain x variant.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::{db20, from_db20, SampleBuffer};
use crate::decorrelate::{DecorrelationConfig, DistortionParams, EdoParams, VibratoParams};
use crate::dsp::MdfConfig;
use crate::error::{Error, Result};
use crate::io::{low_freq_eq, read_wav, resample, DEFAULT_EQ_CUTOFF_HZ};
use crate::kalman::KalmanParams;
use crate::metrics::{MetricsReport, SdWindows};
use crate::prediction::PredictionParams;
use crate::sim::{calibrate_coupling, run_simulation, LoopConfig, RunResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Memory(SampleBuffer),
}

impl Source {
    fn load(&self) -> Result<SampleBuffer> {
        match self {
            Source::File(p) => read_wav(p),
            Source::Memory(b) => Ok(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechItem {
    pub tag: String,
    /// Grouping label, e.g. `male` or `female`.
    pub speaker: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrItem {
    pub tag: String,
    pub source: Source,
}

/// A named decorrelation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub decorrelation: DecorrelationConfig,
}

impl Variant {
    pub const PRESETS: [&'static str; 7] =
        ["baseline", "vibrato", "distortion", "edo", "prediction", "vib+pred", "all"];

    /// Builds one of [`Variant::PRESETS`] with default block parameters.
    pub fn preset(name: &str) -> Option<Variant> {
        let vibrato = VibratoParams { enabled: true, ..Default::default() };
        let distortion = DistortionParams { enabled: true, ..Default::default() };
        let edo = EdoParams { enabled: true, ..Default::default() };
        let prediction = PredictionParams { enabled: true, ..Default::default() };
        let off = DecorrelationConfig::default();
        let decorrelation = match name {
            "baseline" => off,
            "vibrato" => DecorrelationConfig { vibrato, ..off },
            "distortion" => DecorrelationConfig { distortion, ..off },
            "edo" => DecorrelationConfig { edo, ..off },
            "prediction" => DecorrelationConfig { prediction, ..off },
            "vib+pred" => DecorrelationConfig { vibrato, prediction, ..off },
            "all" => DecorrelationConfig { vibrato, distortion, edo, prediction },
            _ => return None,
        };
        Some(Variant { name: name.to_string(), decorrelation })
    }
}

/// Conditioning applied to inputs before each run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub target_fs: u32,
    /// Repeat each sentence to at least this duration.
    pub repeat_to_s: Option<f64>,
    /// High-pass cutoff for the room responses.
    pub lf_eq_hz: Option<f64>,
    /// Cut room responses longer than the adaptive filter.
    pub truncate_ir: bool,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            target_fs: 16_000,
            repeat_to_s: Some(42.0),
            lf_eq_hz: Some(DEFAULT_EQ_CUTOFF_HZ),
            truncate_ir: true,
        }
    }
}

impl Preprocess {
    pub fn prepare_speech(&self, raw: &SampleBuffer) -> SampleBuffer {
        let s = resample(raw, self.target_fs);
        match self.repeat_to_s {
            Some(t) => s.repeat_to(t),
            None => s,
        }
    }

    /// Resamples, truncates and equalizes a room response (coupling not yet applied).
    pub fn prepare_ir(&self, raw: &SampleBuffer, mdf: &MdfConfig) -> Result<SampleBuffer> {
        let mut h = resample(raw, self.target_fs);
        if self.truncate_ir {
            h.samples.truncate(mdf.filter_len());
        }
        if let Some(fc) = self.lf_eq_hz {
            h = low_freq_eq(&h, fc)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub speech: Vec<SpeechItem>,
    pub irs: Vec<IrItem>,
    pub gains_db: Vec<f64>,
    pub variants: Vec<Variant>,
    /// Loop settings shared by all rows; `gain_db` is overridden per row.
    pub loop_config: LoopConfig,
    pub mdf: MdfConfig,
    pub kalman: KalmanParams,
    pub preprocess: Preprocess,
    pub windows: SdWindows,
    /// Keep the full [`RunResult`] of every row (memory heavy for long runs).
    pub keep_runs: bool,
}

impl MatrixSpec {
    pub fn new(speech: Vec<SpeechItem>, irs: Vec<IrItem>, gains_db: Vec<f64>, variants: Vec<Variant>) -> Self {
        Self {
            speech,
            irs,
            gains_db,
            variants,
            loop_config: LoopConfig::default(),
            mdf: MdfConfig::default(),
            kalman: KalmanParams::default(),
            preprocess: Preprocess::default(),
            windows: SdWindows::default(),
            keep_runs: false,
        }
    }

    pub fn row_count(&self) -> usize {
        self.speech.len() * self.irs.len() * self.gains_db.len() * self.variants.len()
    }
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub report: MetricsReport,
    pub run: Option<RunResult>,
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    /// Rows in ordinal order (speech, then room, gain, variant).
    pub rows: Vec<MatrixRow>,
}

impl MatrixOutcome {
    pub fn reports(&self) -> Vec<MetricsReport> {
        self.rows.iter().map(|r| r.report.clone()).collect()
    }

    pub fn failed(&self) -> impl Iterator<Item = &MetricsReport> {
        self.rows.iter().map(|r| &r.report).filter(|r| !r.is_ok())
    }
}

struct RowJob<'a> {
    ordinal: usize,
    speech: &'a SpeechItem,
    ir: &'a IrItem,
    gain_db: f64,
    variant: &'a Variant,
}

fn base_report(job: &RowJob) -> MetricsReport {
    let d = &job.variant.decorrelation;
    MetricsReport {
        ordinal: job.ordinal,
        speech: job.speech.tag.clone(),
        speaker: job.speech.speaker.clone(),
        ir: job.ir.tag.clone(),
        gain_db: job.gain_db,
        variant: job.variant.name.clone(),
        vibrato: d.vibrato.enabled,
        distortion: d.distortion.enabled,
        edo: d.edo.enabled,
        prediction: d.prediction.enabled,
        sd5_db: None,
        sd20plus_db: None,
        overflow_pct: 0.0,
        blocks: 0,
        status: "ok".into(),
        sd_trace: Vec::new(),
    }
}

/// Runs the full cross product. Input or run failures mark the row failed
/// and the matrix continues; `sink` sees every successful run.
pub fn run_matrix_with<F>(spec: &MatrixSpec, sink: F) -> Result<MatrixOutcome>
where
    F: Fn(&MetricsReport, &RunResult) -> Result<()> + Sync,
{
    if spec.row_count() == 0 {
        return Err(Error::config("matrix needs at least one speech, room, gain and variant"));
    }
    spec.mdf.validate()?;
    spec.kalman.validate()?;

    let speech: Vec<std::result::Result<SampleBuffer, String>> = spec
        .speech
        .par_iter()
        .map(|it| it.source.load().map(|s| spec.preprocess.prepare_speech(&s)).map_err(|e| e.to_string()))
        .collect();
    let irs: Vec<std::result::Result<SampleBuffer, String>> = spec
        .irs
        .par_iter()
        .map(|it| {
            it.source
                .load()
                .and_then(|h| spec.preprocess.prepare_ir(&h, &spec.mdf))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut jobs = Vec::with_capacity(spec.row_count());
    for (si, s) in spec.speech.iter().enumerate() {
        for (ii, ir) in spec.irs.iter().enumerate() {
            for &gain_db in &spec.gains_db {
                for variant in &spec.variants {
                    jobs.push((si, ii, RowJob { ordinal: jobs.len() + 1, speech: s, ir, gain_db, variant }));
                }
            }
        }
    }

    let rows = jobs
        .par_iter()
        .map(|(si, ii, job)| {
            let mut report = base_report(job);
            let outcome = match (&speech[*si], &irs[*ii]) {
                (Err(e), _) => Err(format!("speech {}: {e}", job.speech.tag)),
                (_, Err(e)) => Err(format!("room {}: {e}", job.ir.tag)),
                (Ok(s), Ok(h)) => run_row(spec, job, s, h).map_err(|e| e.to_string()),
            };
            match outcome {
                Ok(run) => {
                    let el = run.early_late(&spec.windows);
                    report.sd5_db = el.sd5_db;
                    report.sd20plus_db = el.sd20plus_db;
                    report.overflow_pct = run.overflow_pct();
                    report.blocks = run.sd_trace.len();
                    report.sd_trace = run.sd_trace.clone();
                    if let Some(f) = &run.fault {
                        report.status = format!("failed: {} at block {}", f.message, f.block);
                    }
                    if let Err(e) = sink(&report, &run) {
                        report.status = format!("failed: {e}");
                    }
                    MatrixRow { report, run: spec.keep_runs.then_some(run) }
                }
                Err(msg) => {
                    report.status = format!("failed: {msg}");
                    MatrixRow { report, run: None }
                }
            }
        })
        .collect();
    Ok(MatrixOutcome { rows })
}

pub fn run_matrix(spec: &MatrixSpec) -> Result<MatrixOutcome> {
    run_matrix_with(spec, |_, _| Ok(()))
}

fn run_row(spec: &MatrixSpec, job: &RowJob, s: &SampleBuffer, h: &SampleBuffer) -> Result<RunResult> {
    let cfg = LoopConfig { gain_db: job.gain_db, ..spec.loop_config };
    let h = calibrate_coupling(&h.samples, &s.samples, cfg.coupling_db, cfg.fixed_delay)?;
    run_simulation(s, &h, &cfg, &spec.mdf, &spec.kalman, &job.variant.decorrelation)
}

/// Mean metrics over a group of rows sharing variant, gain and speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub gain_db: f64,
    pub speaker: String,
    pub runs: usize,
    pub ok_runs: usize,
    pub sd5_db: Option<f64>,
    pub sd20plus_db: Option<f64>,
    pub overflow_pct: Option<f64>,
}

/// Groups successful rows by (variant, gain, speaker) in order of first
/// appearance. System distances are averaged linearly, then converted to dB.
/// With `by_speaker == false` all speakers fall into one group labelled `all`.
pub fn aggregate(rows: &[MetricsReport], by_speaker: bool) -> Vec<AggregateRow> {
    let mut groups: Vec<(AggregateRow, Vec<&MetricsReport>)> = Vec::new();
    for r in rows {
        let speaker = if by_speaker { r.speaker.as_str() } else { "all" };
        let idx = groups.iter().position(|(g, _)| {
            g.variant == r.variant && g.gain_db.to_bits() == r.gain_db.to_bits() && g.speaker == speaker
        });
        let idx = idx.unwrap_or_else(|| {
            groups.push((
                AggregateRow {
                    variant: r.variant.clone(),
                    gain_db: r.gain_db,
                    speaker: speaker.to_string(),
                    runs: 0,
                    ok_runs: 0,
                    sd5_db: None,
                    sd20plus_db: None,
                    overflow_pct: None,
                },
                Vec::new(),
            ));
            groups.len() - 1
        });
        groups[idx].1.push(r);
    }
    groups
        .into_iter()
        .map(|(mut g, members)| {
            g.runs = members.len();
            let ok: Vec<_> = members.into_iter().filter(|r| r.is_ok()).collect();
            g.ok_runs = ok.len();
            let mean_db = |vals: Vec<f64>| {
                (!vals.is_empty())
                    .then(|| db20(vals.iter().map(|&v| from_db20(v)).sum::<f64>() / vals.len() as f64))
            };
            g.sd5_db = mean_db(ok.iter().filter_map(|r| r.sd5_db).collect());
            g.sd20plus_db = mean_db(ok.iter().filter_map(|r| r.sd20plus_db).collect());
            g.overflow_pct =
                (!ok.is_empty()).then(|| ok.iter().map(|r| r.overflow_pct).sum::<f64>() / ok.len() as f64);
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speech(tag: &str) -> SpeechItem {
        let s: Vec<f64> = (0..16_000).map(|k| ((k as f64) * 0.05).sin() * ((k as f64) * 0.0031).sin()).collect();
        SpeechItem {
            tag: tag.into(),
            speaker: "male".into(),
            source: Source::Memory(SampleBuffer::new(s, 16_000)),
        }
    }

    fn room() -> IrItem {
        let h: Vec<f64> = (0..300).map(|k| (-(k as f64) / 40.0).exp() * if k % 3 == 0 { 1.0 } else { -0.5 }).collect();
        IrItem { tag: "r".into(), source: Source::Memory(SampleBuffer::new(h, 16_000)) }
    }

    #[test]
    fn presets_resolve() {
        for name in Variant::PRESETS {
            assert_eq!(Variant::preset(name).unwrap().name, name);
        }
        assert!(Variant::preset("nope").is_none());
        let v = Variant::preset("vib+pred").unwrap().decorrelation;
        assert!(v.vibrato.enabled && v.prediction.enabled && !v.edo.enabled && !v.distortion.enabled);
    }

    #[test]
    fn missing_file_marks_row_failed() {
        let bad = SpeechItem {
            tag: "missing".into(),
            speaker: "female".into(),
            source: Source::File("/nonexistent/x.wav".into()),
        };
        let mut spec = MatrixSpec::new(
            vec![bad, speech("ok")],
            vec![room()],
            vec![0.0],
            vec![Variant::preset("baseline").unwrap()],
        );
        spec.preprocess.repeat_to_s = None;
        let out = run_matrix(&spec).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].report.status.starts_with("failed"));
        assert!(out.rows[1].report.is_ok());
        assert_eq!(out.failed().count(), 1);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let spec = MatrixSpec::new(vec![], vec![room()], vec![0.0], vec![]);
        assert!(run_matrix(&spec).is_err());
    }

    #[test]
    fn aggregate_of_identical_rows_is_the_row() {
        let r = MetricsReport {
            ordinal: 1,
            speech: "a".into(),
            speaker: "male".into(),
            ir: "r".into(),
            gain_db: 30.0,
            variant: "baseline".into(),
            vibrato: false,
            distortion: false,
            edo: false,
            prediction: false,
            sd5_db: Some(-7.5),
            sd20plus_db: Some(-12.25),
            overflow_pct: 3.5,
            blocks: 10,
            status: "ok".into(),
            sd_trace: vec![],
        };
        let agg = aggregate(&[r.clone(), MetricsReport { ordinal: 2, ..r.clone() }], true);
        assert_eq!(agg.len(), 1);
        assert!((agg[0].sd5_db.unwrap() - -7.5).abs() < 1e-12);
        assert!((agg[0].sd20plus_db.unwrap() - -12.25).abs() < 1e-12);
        assert_eq!(agg[0].overflow_pct, Some(3.5));
        assert_eq!(agg[0].runs, 2);
    }
}
