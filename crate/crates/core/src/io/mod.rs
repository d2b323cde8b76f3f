//! File formats and signal conditioning: WAV, resampling, low-frequency
//! equalization and report export.

mod eq;
mod report;
mod resample;
mod wav;

pub use eq::{low_freq_eq, DEFAULT_EQ_CUTOFF_HZ};
pub use report::{
    export_report, read_runs_csv, render_svg, trace_file_name, write_audio_pair, write_runs_csv,
    write_trace_csv, ExportOptions,
};
pub use resample::resample;
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};
