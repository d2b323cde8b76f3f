//! TOML configuration file and the command-line flags that override it.
//!
//! ```toml
//! gains_db = [0, 6, 12, 30]
//! variants = ["baseline", "vib+pred", "wide-vibrato"]
//!
//! [[speech]]
//! path = "speech/m1.wav"     # relative to this file; "bundled" for the built-in sentence
//! speaker = "male"
//!
//! [[ir]]
//! path = "rooms/cabin.wav"
//! tag = "cabin"
//!
//! [[custom_variant]]
//! name = "wide-vibrato"
//! blocks = ["vibrato", "prediction"]
//!
//! [loop]
//! coupling_db = -10.0
//!
//! [decorrelation.vibrato]    # block parameters shared by every variant
//! max_delay_ms = 3.0
//!
//! [output]
//! dir = "results"
//! audio = true
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use afc_core::decorrelate::{Curve, DecorrelationConfig, EdoVariant};
use afc_core::dsp::MdfConfig;
use afc_core::metrics::SdWindows;
use afc_core::prediction::PredictorScheme;
use afc_core::sim::{IrItem, LimiterReference, LoopConfig, MatrixSpec, Preprocess, Source, SpeechItem, Variant};
use afc_core::synth::{test_room_response, test_sentence};
use afc_core::KalmanParams;
use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::de::{value::StrDeserializer, DeserializeOwned, IntoDeserializer};
use serde::Deserialize;

/// Path keyword selecting the built-in test signals.
pub const BUNDLED: &str = "bundled";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechEntry {
    pub path: String,
    pub tag: Option<String>,
    #[serde(default = "unknown_speaker")]
    pub speaker: String,
}

fn unknown_speaker() -> String {
    "unknown".into()
}

impl SpeechEntry {
    pub fn from_arg(path: &str, speaker: &str) -> Self {
        Self { path: path.into(), tag: None, speaker: speaker.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrEntry {
    pub path: String,
    pub tag: Option<String>,
}

impl IrEntry {
    pub fn from_arg(path: &str) -> Self {
        Self { path: path.into(), tag: None }
    }
}

/// A variant built from a list of enabled block names.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomVariant {
    pub name: String,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub traces: bool,
    pub plots: bool,
    pub audio: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("afc-out"), traces: true, plots: true, audio: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub speech: Vec<SpeechEntry>,
    pub ir: Vec<IrEntry>,
    pub gains_db: Vec<f64>,
    pub variants: Vec<String>,
    pub custom_variant: Vec<CustomVariant>,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub mdf: MdfConfig,
    pub kalman: KalmanParams,
    /// Block parameters; the `enabled` flags are set by each variant.
    pub decorrelation: DecorrelationConfig,
    pub preprocess: Preprocess,
    pub windows: SdWindows,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            speech: vec![SpeechEntry { path: BUNDLED.into(), tag: None, speaker: "male".into() }],
            ir: vec![IrEntry { path: BUNDLED.into(), tag: None }],
            gains_db: vec![0.0, 6.0, 12.0, 30.0],
            variants: vec!["baseline".into()],
            custom_variant: Vec::new(),
            loop_config: LoopConfig::default(),
            mdf: MdfConfig::default(),
            kalman: KalmanParams::default(),
            decorrelation: DecorrelationConfig::default(),
            preprocess: Preprocess::default(),
            windows: SdWindows::default(),
            output: OutputConfig::default(),
        }
    }
}

fn resolve(base: &Path, path: &str) -> String {
    if path == BUNDLED || Path::new(path).is_absolute() {
        path.to_string()
    } else {
        base.join(path).display().to_string()
    }
}

fn tag_of(path: &str, tag: &Option<String>) -> String {
    tag.clone().unwrap_or_else(|| {
        Path::new(path)
            .file_stem()
            .map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned())
    })
}

impl Config {
    /// Reads a TOML file; relative input paths are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.speech {
            s.path = resolve(base, &s.path);
        }
        for h in &mut cfg.ir {
            h.path = resolve(base, &h.path);
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    fn variant(&self, name: &str) -> Result<Variant> {
        let mut enabled = if let Some(custom) = self.custom_variant.iter().find(|c| c.name == name) {
            let mut d = DecorrelationConfig::default();
            for block in &custom.blocks {
                match block.as_str() {
                    "vibrato" => d.vibrato.enabled = true,
                    "distortion" => d.distortion.enabled = true,
                    "edo" => d.edo.enabled = true,
                    "prediction" => d.prediction.enabled = true,
                    other => bail!("variant {name}: unknown block `{other}`"),
                }
            }
            d
        } else {
            Variant::preset(name)
                .ok_or_else(|| {
                    anyhow!("unknown variant `{name}`; presets are {}", Variant::PRESETS.join(", "))
                })?
                .decorrelation
        };
        let p = &self.decorrelation;
        enabled.vibrato = afc_core::decorrelate::VibratoParams { enabled: enabled.vibrato.enabled, ..p.vibrato };
        enabled.distortion =
            afc_core::decorrelate::DistortionParams { enabled: enabled.distortion.enabled, ..p.distortion };
        enabled.edo = afc_core::decorrelate::EdoParams { enabled: enabled.edo.enabled, ..p.edo };
        enabled.prediction =
            afc_core::prediction::PredictionParams { enabled: enabled.prediction.enabled, ..p.prediction };
        Ok(Variant { name: name.to_string(), decorrelation: enabled })
    }

    pub fn matrix_spec(&self) -> Result<MatrixSpec> {
        let fs = self.mdf.sample_rate;
        let speech = self
            .speech
            .iter()
            .map(|s| SpeechItem {
                tag: tag_of(&s.path, &s.tag),
                speaker: s.speaker.clone(),
                source: source(&s.path, || test_sentence(fs)),
            })
            .collect();
        let irs = self
            .ir
            .iter()
            .map(|h| IrItem { tag: tag_of(&h.path, &h.tag), source: source(&h.path, || test_room_response(fs)) })
            .collect();
        let variants = self.variants.iter().map(|v| self.variant(v)).collect::<Result<Vec<_>>>()?;
        let mut spec = MatrixSpec::new(speech, irs, self.gains_db.clone(), variants);
        spec.loop_config = self.loop_config;
        spec.mdf = self.mdf;
        spec.kalman = self.kalman;
        // inputs are always brought to the rate the filter runs at
        spec.preprocess = Preprocess { target_fs: fs, ..self.preprocess };
        spec.windows = self.windows;
        Ok(spec)
    }
}

fn source(path: &str, bundled: impl FnOnce() -> afc_core::SampleBuffer) -> Source {
    if path == BUNDLED {
        Source::Memory(bundled())
    } else {
        Source::File(PathBuf::from(path))
    }
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let de: StrDeserializer<serde::de::value::Error> = s.into_deserializer();
    T::deserialize(de).map_err(|e| e.to_string())
}

fn parse_curve(s: &str) -> Result<Curve, String> {
    let id: u8 = s.parse().map_err(|_| format!("curve must be 1-4, got `{s}`"))?;
    Curve::try_from(id).map_err(|e| e.to_string())
}

/// Flags mirroring the configuration fields; each one overrides the file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Final loop gain in dB.
    #[arg(long, allow_hyphen_values = true)]
    gain_db: Option<f64>,
    /// Gain ramp duration in seconds (default depends on the gain).
    #[arg(long)]
    ramp_s: Option<f64>,
    /// Forward-path delay in samples.
    #[arg(long)]
    fixed_delay: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    limiter_headroom_db: Option<f64>,
    /// `input` or `output`.
    #[arg(long, value_parser = parse_enum::<LimiterReference>)]
    limiter_reference: Option<LimiterReference>,
    #[arg(long, allow_hyphen_values = true)]
    coupling_db: Option<f64>,
    /// Simulated duration in seconds (default: length of the prepared speech).
    #[arg(long)]
    duration_s: Option<f64>,

    #[arg(long)]
    block_len: Option<usize>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    sample_rate: Option<u32>,

    #[arg(long)]
    kalman_alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    transition: Option<f64>,

    #[arg(long)]
    vibrato_max_delay_ms: Option<f64>,
    #[arg(long)]
    vibrato_mod_freq_hz: Option<f64>,
    /// Distortion curve 1-4.
    #[arg(long, value_parser = parse_curve)]
    curve: Option<Curve>,
    #[arg(long)]
    mix_alpha: Option<f64>,
    /// Fixed distortion scale instead of calibrating on the speech.
    #[arg(long)]
    sc: Option<f64>,
    /// `elementwise`, `curve_fit` or `mean_ratio`.
    #[arg(long, value_parser = parse_enum::<EdoVariant>)]
    edo_variant: Option<EdoVariant>,
    #[arg(long)]
    edo_r_min: Option<f64>,
    #[arg(long)]
    edo_r_max: Option<f64>,
    #[arg(long)]
    prediction_order: Option<usize>,
    /// `a` or `b`.
    #[arg(long, value_parser = parse_enum::<PredictorScheme>)]
    prediction_scheme: Option<PredictorScheme>,

    /// Repeat speech to this many seconds.
    #[arg(long)]
    repeat_to_s: Option<f64>,
    #[arg(long, conflicts_with = "repeat_to_s")]
    no_repeat: bool,
    /// High-pass cutoff for room responses.
    #[arg(long)]
    lf_eq_hz: Option<f64>,
    #[arg(long, conflicts_with = "lf_eq_hz")]
    no_lf_eq: bool,
    #[arg(long)]
    no_truncate_ir: bool,
    /// End of the late system-distance window in seconds.
    #[arg(long)]
    sd_late_end_s: Option<f64>,
}

macro_rules! set {
    ($src:expr => $dst:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        let l = &mut cfg.loop_config;
        set!(self.gain_db => l.gain_db);
        set!(self.ramp_s.map(Some) => l.ramp_s);
        set!(self.fixed_delay => l.fixed_delay);
        set!(self.limiter_headroom_db => l.limiter_headroom_db);
        set!(self.limiter_reference => l.limiter_reference);
        set!(self.coupling_db => l.coupling_db);
        set!(self.duration_s.map(Some) => l.duration_s);

        set!(self.block_len => cfg.mdf.block_len);
        set!(self.partitions => cfg.mdf.partitions);
        set!(self.sample_rate => cfg.mdf.sample_rate);

        let k = &mut cfg.kalman;
        set!(self.kalman_alpha => k.kalman_alpha);
        set!(self.gamma => k.gamma);
        set!(self.delta => k.delta);
        set!(self.transition => k.transition);

        let d = &mut cfg.decorrelation;
        set!(self.vibrato_max_delay_ms => d.vibrato.max_delay_ms);
        set!(self.vibrato_mod_freq_hz => d.vibrato.mod_freq_hz);
        set!(self.curve => d.distortion.curve);
        set!(self.mix_alpha => d.distortion.mix_alpha);
        set!(self.sc.map(Some) => d.distortion.sc);
        set!(self.edo_variant => d.edo.variant);
        set!(self.edo_r_min => d.edo.r_min);
        set!(self.edo_r_max => d.edo.r_max);
        set!(self.prediction_order => d.prediction.order);
        set!(self.prediction_scheme => d.prediction.scheme);

        let p = &mut cfg.preprocess;
        set!(self.repeat_to_s.map(Some) => p.repeat_to_s);
        if self.no_repeat {
            p.repeat_to_s = None;
        }
        set!(self.lf_eq_hz.map(Some) => p.lf_eq_hz);
        if self.no_lf_eq {
            p.lf_eq_hz = None;
        }
        if self.no_truncate_ir {
            p.truncate_ir = false;
        }
        set!(self.sd_late_end_s.map(Some) => cfg.windows.late_end_s);
    }
}
