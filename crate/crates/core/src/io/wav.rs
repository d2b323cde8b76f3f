//! Minimal RIFF/WAVE codec.
//!
//! Reads PCM (8/16/24/32-bit) and IEEE float (32/64-bit) files, including
//! `WAVE_FORMAT_EXTENSIBLE`, keeping channel 0. Writes mono 32-bit float.

use std::fs;
use std::path::Path;

use crate::buffer::SampleBuffer;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

fn malformed(offset: usize, msg: impl Into<String>) -> Error {
    Error::Wav {
        offset: offset as u64,
        msg: msg.into(),
    }
}

struct Reader<'a> {
    data: &'a [u8],
}

impl Reader<'_> {
    fn bytes(&self, at: usize, len: usize, what: &str) -> Result<&[u8]> {
        self.data
            .get(at..at + len)
            .ok_or_else(|| malformed(at, format!("truncated {what}")))
    }

    fn u16(&self, at: usize, what: &str) -> Result<u16> {
        let b = self.bytes(at, 2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, at: usize, what: &str) -> Result<u32> {
        let b = self.bytes(at, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Debug, Clone, Copy)]
struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_format(r: &Reader, at: usize, size: usize) -> Result<Format> {
    if size < 16 {
        return Err(malformed(at, format!("fmt chunk of {size} bytes is too short")));
    }
    let mut tag = r.u16(at, "format tag")?;
    let channels = r.u16(at + 2, "channel count")?;
    let sample_rate = r.u32(at + 4, "sample rate")?;
    let bits = r.u16(at + 14, "bits per sample")?;
    if tag == FORMAT_EXTENSIBLE {
        if size < 40 {
            return Err(malformed(at, "extensible fmt chunk is too short"));
        }
        tag = r.u16(at + 24, "sub-format")?;
    }
    if channels == 0 {
        return Err(malformed(at + 2, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(malformed(at + 4, "zero sample rate"));
    }
    let supported = matches!((tag, bits), (FORMAT_PCM, 8 | 16 | 24 | 32) | (FORMAT_FLOAT, 32 | 64));
    if !supported {
        return Err(malformed(
            at,
            format!("unsupported encoding: format tag {tag}, {bits} bits"),
        ));
    }
    Ok(Format {
        tag,
        channels,
        sample_rate,
        bits,
    })
}

fn decode_sample(b: &[u8], fmt: &Format) -> f64 {
    match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 8) => (b[0] as f64 - 128.0) / 128.0,
        (FORMAT_PCM, 16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0,
        (FORMAT_PCM, 24) => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        (FORMAT_PCM, 32) => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        (FORMAT_FLOAT, 32) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (FORMAT_FLOAT, 64) => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        _ => unreachable!("format validated in parse_format"),
    }
}

/// Decodes a WAV byte stream.
pub fn decode_wav(data: &[u8]) -> Result<SampleBuffer> {
    let r = Reader { data };
    if r.bytes(0, 4, "RIFF header")? != b"RIFF" {
        return Err(malformed(0, "missing RIFF signature"));
    }
    if r.bytes(8, 4, "WAVE tag")? != b"WAVE" {
        return Err(malformed(8, "missing WAVE signature"));
    }
    let mut at = 12;
    let mut format: Option<Format> = None;
    while at + 8 <= data.len() {
        let id = r.bytes(at, 4, "chunk id")?;
        let size = r.u32(at + 4, "chunk size")? as usize;
        let body = at + 8;
        match id {
            b"fmt " => format = Some(parse_format(&r, body, size)?),
            b"data" => {
                let fmt = format.ok_or_else(|| malformed(at, "data chunk before fmt chunk"))?;
                let width = fmt.bits as usize / 8;
                let frame = width * fmt.channels as usize;
                // tolerate a data size running past the end of a truncated stream
                let avail = size.min(data.len().saturating_sub(body));
                if avail < size && avail % frame != 0 {
                    return Err(malformed(body + avail, "data chunk ends inside a frame"));
                }
                let frames = avail / frame;
                let samples = (0..frames)
                    .map(|i| decode_sample(&data[body + i * frame..body + i * frame + width], &fmt))
                    .collect();
                return Ok(SampleBuffer::new(samples, fmt.sample_rate));
            }
            _ => {}
        }
        at = body + size + (size & 1);
    }
    Err(malformed(at.min(data.len()), "no data chunk found"))
}

/// Encodes a mono 32-bit float WAV.
pub fn encode_wav(buf: &SampleBuffer) -> Vec<u8> {
    let data_len = buf.samples.len() * 4;
    let mut out = Vec::with_capacity(58 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((50 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&18u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&(buf.samples.len() as u32).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in &buf.samples {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<SampleBuffer> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&data)
}

/// Writes a mono 32-bit float WAV; samples are rounded to single precision.
pub fn write_wav(path: impl AsRef<Path>, buf: &SampleBuffer) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(buf)).map_err(|e| Error::io(path, e))
}
