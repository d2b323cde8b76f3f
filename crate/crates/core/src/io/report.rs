//! Export of run metrics: a summary CSV, per-run trace CSVs, SVG plots,
//! reference/degraded WAV pairs and a key-value manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::buffer::{db20, SampleBuffer};
use crate::error::{Error, Result};
use crate::io::wav::write_wav;
use crate::metrics::{block_center_s, MetricsReport};

/// Column order of the summary CSV; matches the field order of [`MetricsReport`].
const RUN_COLUMNS: [&str; 15] = [
    "ordinal",
    "speech",
    "speaker",
    "ir",
    "gain_db",
    "variant",
    "vibrato",
    "distortion",
    "edo",
    "prediction",
    "sd5_db",
    "sd20plus_db",
    "overflow_pct",
    "blocks",
    "status",
];

const PLOT_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    pub traces: bool,
    pub plots: bool,
    /// List reference/degraded WAV pairs in the manifest (written separately by [`write_audio_pair`]).
    pub audio: bool,
    pub sample_rate: u32,
    pub hop: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            traces: true,
            plots: true,
            audio: false,
            sample_rate: 16_000,
            hop: 256,
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn sorted(rows: &[MetricsReport]) -> Vec<&MetricsReport> {
    let mut v: Vec<&MetricsReport> = rows.iter().collect();
    v.sort_by_key(|r| r.ordinal);
    v
}

/// Writes one CSV row per run, ordered by ordinal. Zero rows yield a header-only file.
pub fn write_runs_csv(rows: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(RUN_COLUMNS)?;
    for r in sorted(rows) {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsReport>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn trace_file_name(ordinal: usize) -> String {
    format!("run_{ordinal:04}.csv")
}

/// Trace rows: block index, block-center time, linear and dB system distance.
pub fn write_trace_csv(trace: &[f64], fs: f64, hop: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["block", "time_s", "sd", "sd_db"])?;
    for (l, &sd) in trace.iter().enumerate() {
        w.serialize((l, block_center_s(l, hop, fs), sd, db20(sd)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn audio_names(ordinal: usize) -> (String, String) {
    (
        format!("run_{ordinal:04}_reference.wav"),
        format!("run_{ordinal:04}_degraded.wav"),
    )
}

/// Writes the clean speech and the enhanced output of one run into `dir/audio`.
pub fn write_audio_pair(
    dir: impl AsRef<Path>,
    ordinal: usize,
    reference: &SampleBuffer,
    degraded: &SampleBuffer,
) -> Result<(PathBuf, PathBuf)> {
    let audio = dir.as_ref().join("audio");
    create_dir(&audio)?;
    let (r, d) = audio_names(ordinal);
    let (r, d) = (audio.join(r), audio.join(d));
    write_wav(&r, reference)?;
    write_wav(&d, degraded)?;
    Ok((r, d))
}

fn gain_label(gain_db: f64) -> String {
    format!("{gain_db}").replace('-', "m")
}

/// Line plot of the dB traces of every run in `rows` against time.
pub fn render_svg(title: &str, rows: &[&MetricsReport], fs: f64, hop: usize) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 200.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 40.0;
    const DB_MIN: f64 = -40.0;
    const DB_MAX: f64 = 10.0;

    let t_max = rows
        .iter()
        .map(|r| block_center_s(r.sd_trace.len(), hop, fs))
        .fold(1.0_f64, f64::max)
        .ceil();
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |t: f64| LEFT + pw * t / t_max;
    let py = |db: f64| TOP + ph * (DB_MAX - db.clamp(DB_MIN, DB_MAX)) / (DB_MAX - DB_MIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="18" font-size="13">{}</text>"#, escape(title));
    for db in (DB_MIN as i32..=DB_MAX as i32).step_by(10) {
        let y = py(db as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{db}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = if t_max > 20.0 { 5 } else { 1 };
    for t in (0..=t_max as usize).step_by(step) {
        let x = px(t as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time [s]</text><text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">sd [dB]</text>"#,
        LEFT + pw / 2.0,
        H - 6.0,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (i, r) in rows.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let points: Vec<String> = r
            .sd_trace
            .iter()
            .enumerate()
            .map(|(l, &sd)| format!("{:.2},{:.2}", px(block_center_s(l, hop, fs)), py(db20(sd))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw + 10.0,
            LEFT + pw + 28.0,
            LEFT + pw + 32.0,
            ly + 4.0,
            escape(&format!("#{} {} {} {}", r.ordinal, r.variant, r.speech, r.ir))
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `runs.csv`, optional traces and plots, and `manifest.txt` into `dir`.
pub fn export_report(rows: &[MetricsReport], dir: impl AsRef<Path>, opts: &ExportOptions) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let fs = opts.sample_rate as f64;
    write_runs_csv(rows, dir.join("runs.csv"))?;

    let mut manifest = String::from("runs = runs.csv\n");
    let rows = sorted(rows);
    if opts.traces {
        create_dir(&dir.join("traces"))?;
    }
    for r in &rows {
        let id = format!("run.{:04}", r.ordinal);
        let _ = writeln!(manifest, "{id}.status = {}", r.status);
        if opts.traces {
            let name = format!("traces/{}", trace_file_name(r.ordinal));
            write_trace_csv(&r.sd_trace, fs, opts.hop, dir.join(&name))?;
            let _ = writeln!(manifest, "{id}.trace = {name}");
        }
        if opts.audio && r.is_ok() {
            let (reference, degraded) = audio_names(r.ordinal);
            let _ = writeln!(manifest, "{id}.reference = audio/{reference}");
            let _ = writeln!(manifest, "{id}.degraded = audio/{degraded}");
        }
    }
    if opts.plots && !rows.is_empty() {
        create_dir(&dir.join("plots"))?;
        // one plot per gain
        let mut groups: BTreeMap<String, Vec<&MetricsReport>> = BTreeMap::new();
        for r in &rows {
            groups.entry(gain_label(r.gain_db)).or_default().push(r);
        }
        for (label, group) in groups {
            let name = format!("plots/sd_gain_{label}.svg");
            let title = format!("system distance, g = {} dB", group[0].gain_db);
            write_text(&dir.join(&name), &render_svg(&title, &group, fs, opts.hop))?;
            let _ = writeln!(manifest, "plot.gain_{label} = {name}");
        }
    }
    write_text(&dir.join("manifest.txt"), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(ordinal: usize, sd5: Option<f64>) -> MetricsReport {
        MetricsReport {
            ordinal,
            speech: "s, \"quoted\"".into(),
            speaker: "male".into(),
            ir: "cabin".into(),
            gain_db: 30.0,
            variant: "vib+pred".into(),
            vibrato: true,
            distortion: false,
            edo: false,
            prediction: true,
            sd5_db: sd5,
            sd20plus_db: None,
            overflow_pct: 0.123456789,
            blocks: 3,
            status: "ok".into(),
            sd_trace: vec![1.0, 0.5, 0.1],
        }
    }

    #[test]
    fn header_only_for_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        write_runs_csv(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("ordinal,speech"));
        assert!(read_runs_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let rows = vec![report(2, Some(-12.345678901234)), report(1, None)];
        write_runs_csv(&rows, &path).unwrap();
        let back = read_runs_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].ordinal, 1);
        let mut expect = rows[0].clone();
        expect.sd_trace.clear();
        assert_eq!(back[1], expect);
    }

    #[test]
    fn export_layout() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ExportOptions { audio: true, ..Default::default() };
        export_report(&[report(1, Some(-3.0))], dir.path(), &opts).unwrap();
        let trace = fs::read_to_string(dir.path().join("traces/run_0001.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 3);
        assert!(dir.path().join("plots/sd_gain_30.svg").exists());
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("run.0001.degraded = audio/run_0001_degraded.wav"));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        assert!(export_report(&[], file.join("sub"), &ExportOptions::default()).is_err());
    }
}
