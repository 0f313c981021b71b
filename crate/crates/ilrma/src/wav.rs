//! RIFF/WAV reading and writing over byte slices. Accepts 16-bit integer
//! and 32-bit float PCM, writes 32-bit float. Every read is bounds-checked
//! and allocations never exceed the input size, so the parser is safe to
//! run on untrusted bytes.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decoded audio: samples in `[-1, 1]`-ish float, `samples x channels`.
#[derive(Debug, Clone)]
pub struct WavData {
    pub sample_rate: u32,
    pub samples: Array2<f64>,
}

impl WavData {
    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }
}

fn wav_err(msg: impl Into<String>) -> Error {
    Error::Wav(msg.into())
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16> {
    let end = at.checked_add(2).ok_or_else(|| wav_err("offset overflow"))?;
    let slice = bytes
        .get(at..end)
        .ok_or_else(|| wav_err(format!("truncated u16 at offset {at}")))?;
    Ok(u16::from_le_bytes([slice[0], slice[1]]))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let end = at.checked_add(4).ok_or_else(|| wav_err("offset overflow"))?;
    let slice = bytes
        .get(at..end)
        .ok_or_else(|| wav_err(format!("truncated u32 at offset {at}")))?;
    Ok(u32::from_le_bytes([slice[0], slice[1], slice[2], slice[3]]))
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_format(chunk: &[u8]) -> Result<Format> {
    if chunk.len() < 16 {
        return Err(wav_err(format!("fmt chunk is {} bytes, need 16", chunk.len())));
    }
    let tag = read_u16(chunk, 0)?;
    let channels = read_u16(chunk, 2)?;
    let sample_rate = read_u32(chunk, 4)?;
    let bits = read_u16(chunk, 14)?;
    if tag == FORMAT_EXTENSIBLE {
        return Err(wav_err("WAVE_FORMAT_EXTENSIBLE is not supported"));
    }
    match (tag, bits) {
        (FORMAT_PCM, 16) | (FORMAT_IEEE_FLOAT, 32) => {}
        _ => {
            return Err(wav_err(format!(
                "unsupported format: tag {tag}, {bits} bits (expected PCM16 or float32)"
            )))
        }
    }
    if channels == 0 {
        return Err(wav_err("zero channels"));
    }
    if sample_rate == 0 {
        return Err(wav_err("zero sample rate"));
    }
    Ok(Format {
        tag,
        channels,
        sample_rate,
        bits,
    })
}

fn decode_samples(format: &Format, data: &[u8]) -> Result<Array2<f64>> {
    let channels = format.channels as usize;
    let bytes_per = (format.bits / 8) as usize;
    let block = bytes_per
        .checked_mul(channels)
        .ok_or_else(|| wav_err("block size overflow"))?;
    if data.len() % block != 0 {
        return Err(wav_err(format!(
            "data chunk of {} bytes is not a whole number of {block}-byte frames",
            data.len()
        )));
    }
    let frames = data.len() / block;
    let mut out = Array2::<f64>::zeros((frames, channels));
    for f in 0..frames {
        for c in 0..channels {
            let at = f * block + c * bytes_per;
            let v = match format.tag {
                FORMAT_PCM => {
                    let raw = i16::from_le_bytes([data[at], data[at + 1]]);
                    raw as f64 / 32768.0
                }
                _ => {
                    let raw = f32::from_le_bytes([
                        data[at],
                        data[at + 1],
                        data[at + 2],
                        data[at + 3],
                    ]);
                    if !raw.is_finite() {
                        return Err(wav_err(format!(
                            "non-finite sample at frame {f}, channel {c}"
                        )));
                    }
                    raw as f64
                }
            };
            out[[f, c]] = v;
        }
    }
    Ok(out)
}

/// Parses a complete WAV file from memory.
pub fn parse_wav(bytes: &[u8]) -> Result<WavData> {
    if bytes.len() < 12 {
        return Err(wav_err(format!("file is {} bytes, need 12", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(wav_err("missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(wav_err("missing WAVE form type"));
    }

    let mut at = 12usize;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while at < bytes.len() {
        if bytes.len() - at < 8 {
            return Err(wav_err(format!("truncated chunk header at offset {at}")));
        }
        let id = &bytes[at..at + 4];
        let size = read_u32(bytes, at + 4)? as usize;
        let body_start = at + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| wav_err("chunk size overflow"))?;
        if body_end > bytes.len() {
            return Err(wav_err(format!(
                "chunk at offset {at} declares {size} bytes but only {} remain",
                bytes.len() - body_start
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if format.is_none() {
                    format = Some(parse_format(body)?);
                }
            }
            b"data" => {
                if format.is_none() {
                    return Err(wav_err("data chunk appears before fmt"));
                }
                if data.is_none() {
                    data = Some(body);
                }
            }
            _ => {}
        }
        // chunks are word-aligned: odd sizes carry a pad byte
        at = body_end + (size & 1);
    }

    let format = format.ok_or_else(|| wav_err("no fmt chunk"))?;
    let data = data.ok_or_else(|| wav_err("no data chunk"))?;
    let samples = decode_samples(&format, data)?;
    Ok(WavData {
        sample_rate: format.sample_rate,
        samples,
    })
}

/// Encodes as 32-bit float PCM with a fact chunk.
pub fn encode_wav(data: &WavData) -> Result<Vec<u8>> {
    let frames = data.samples.nrows();
    let channels = data.samples.ncols();
    if channels == 0 {
        return Err(wav_err("cannot encode zero channels"));
    }
    if data.sample_rate == 0 {
        return Err(wav_err("cannot encode zero sample rate"));
    }
    let data_len = frames
        .checked_mul(channels)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| wav_err("sample count overflow"))?;
    // RIFF size field: 4 (WAVE) + fmt(8+16) + fact(8+4) + data header(8)
    let riff_size = 4usize + 24 + 12 + 8 + data_len;
    if riff_size > u32::MAX as usize {
        return Err(wav_err("audio too long for a RIFF container"));
    }
    if data.samples.iter().any(|v| !v.is_finite()) {
        return Err(wav_err("cannot encode non-finite samples"));
    }

    let mut out = Vec::with_capacity(12 + riff_size);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_size as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&data.sample_rate.to_le_bytes());
    let byte_rate = data.sample_rate as u64 * channels as u64 * 4;
    out.extend_from_slice(&(byte_rate.min(u32::MAX as u64) as u32).to_le_bytes());
    out.extend_from_slice(&((channels * 4) as u16).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());

    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for f in 0..frames {
        for c in 0..channels {
            out.extend_from_slice(&(data.samples[[f, c]] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavData> {
    let bytes = std::fs::read(path)?;
    parse_wav(&bytes)
}

pub fn write_wav(path: impl AsRef<Path>, data: &WavData) -> Result<()> {
    let bytes = encode_wav(data)?;
    std::fs::write(path, bytes)?;
    Ok(())
}
