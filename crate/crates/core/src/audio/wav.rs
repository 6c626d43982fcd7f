//! RIFF/WAVE reading and writing for 16-bit PCM and 32-bit float.
//!
//! Errors carry the byte offset of the offending field.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    b: &'a [u8],
}

impl Reader<'_> {
    fn bytes(&self, at: usize, n: usize) -> Result<&[u8]> {
        self.b
            .get(at..at + n)
            .ok_or_else(|| perr(at, format!("truncated: need {n} bytes, file has {}", self.b.len())))
    }
    fn u16(&self, at: usize) -> Result<u16> {
        let s = self.bytes(at, 2)?;
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }
    fn u32(&self, at: usize) -> Result<u32> {
        let s = self.bytes(at, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }
}

struct Fmt {
    code: u16,
    channels: u16,
    rate: u32,
    bits: u16,
}

/// Decodes a WAV byte stream; stereo is averaged to mono and integer
/// samples are scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let r = Reader { b: bytes };
    if r.bytes(0, 4)? != b"RIFF" {
        return Err(perr(0, "missing RIFF tag"));
    }
    if r.bytes(8, 4)? != b"WAVE" {
        return Err(perr(8, "missing WAVE tag"));
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    while pos + 8 <= bytes.len() {
        let id = r.bytes(pos, 4)?;
        let size = r.u32(pos + 4)? as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(perr(pos + 4, format!("fmt chunk too small ({size} bytes)")));
                }
                let mut code = r.u16(body)?;
                if code == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(perr(pos + 4, "extensible fmt chunk too small"));
                    }
                    code = r.u16(body + 24)?;
                }
                let f = Fmt {
                    code,
                    channels: r.u16(body + 2)?,
                    rate: r.u32(body + 4)?,
                    bits: r.u16(body + 14)?,
                };
                match (f.code, f.bits) {
                    (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) => {}
                    (c, b) => return Err(perr(body, format!("unsupported codec {c} with {b}-bit samples"))),
                }
                if !(1..=2).contains(&f.channels) {
                    return Err(perr(body + 2, format!("unsupported channel count {}", f.channels)));
                }
                if f.rate == 0 {
                    return Err(perr(body + 4, "zero sample rate"));
                }
                fmt = Some(f);
            }
            b"data" => {
                let f = fmt.as_ref().ok_or_else(|| perr(pos, "data chunk before fmt chunk"))?;
                let data = r.bytes(body, size)?;
                return decode_samples(data, f, body);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(perr(bytes.len(), "no data chunk"))
}

fn decode_samples(data: &[u8], f: &Fmt, offset: usize) -> Result<Waveform> {
    let width = (f.bits / 8) as usize;
    let frame = width * f.channels as usize;
    if data.len() % frame != 0 {
        return Err(perr(offset + data.len(), "data chunk ends mid-frame"));
    }
    let frames = data.len() / frame;
    if frames == 0 {
        return Err(perr(offset, "data chunk has no samples"));
    }
    let sample = |i: usize| -> f32 {
        let s = &data[i * width..(i + 1) * width];
        if f.code == FORMAT_PCM {
            i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0
        } else {
            f32::from_le_bytes([s[0], s[1], s[2], s[3]])
        }
    };
    let ch = f.channels as usize;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let sum: f32 = (0..ch).map(|c| sample(t * ch + c)).sum();
        out.push(sum / ch as f32);
    }
    if let Some(i) = out.iter().position(|s| !s.is_finite()) {
        return Err(perr(offset + i * frame, "non-finite float sample"));
    }
    Waveform::new(out, f.rate)
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Encodes mono audio. 16-bit output rounds `x·32768` and saturates.
pub fn encode_wav(w: &Waveform, format: WavFormat) -> Vec<u8> {
    let (code, bits) = match format {
        WavFormat::Pcm16 => (FORMAT_PCM, 16u16),
        WavFormat::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let width = bits as u32 / 8;
    let data_len = w.len() as u32 * width;
    let mut b = Vec::with_capacity(44 + data_len as usize);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&code.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&w.rate().to_le_bytes());
    b.extend_from_slice(&(w.rate() * width).to_le_bytes());
    b.extend_from_slice(&(width as u16).to_le_bytes());
    b.extend_from_slice(&bits.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        match format {
            WavFormat::Pcm16 => {
                let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                b.extend_from_slice(&q.to_le_bytes());
            }
            WavFormat::Float32 => b.extend_from_slice(&s.to_le_bytes()),
        }
    }
    b
}

pub fn write_wav(path: &Path, w: &Waveform, format: WavFormat) -> Result<()> {
    std::fs::write(path, encode_wav(w, format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stereo_pcm(frames: &[(i16, i16)], rate: u32) -> Vec<u8> {
        let data_len = frames.len() as u32 * 4;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * 4).to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&data_len.to_le_bytes());
        for (l, r) in frames {
            b.extend_from_slice(&l.to_le_bytes());
            b.extend_from_slice(&r.to_le_bytes());
        }
        b
    }

    #[test]
    fn silent_mono_pcm() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let back = decode_wav(&encode_wav(&w, WavFormat::Pcm16)).unwrap();
        assert_eq!(back.len(), 16000);
        assert!(back.samples().iter().all(|&s| s == 0.0));
        assert_eq!(back.rate(), 16000);
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let w = decode_wav(&stereo_pcm(&[(16384, -16384); 100], 8000)).unwrap();
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sine_round_trip_within_one_lsb() {
        let sine: Vec<f32> = (0..4000)
            .map(|i| (0.9 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin()) as f32)
            .collect();
        let w = Waveform::new(sine, 16000).unwrap();
        let back = decode_wav(&encode_wav(&w, WavFormat::Pcm16)).unwrap();
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        let exact = decode_wav(&encode_wav(&w, WavFormat::Float32)).unwrap();
        assert_eq!(exact, w);
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let w = Waveform::new(vec![0.1; 10], 8000).unwrap();
        let good = encode_wav(&w, WavFormat::Pcm16);

        let mut bad = good.clone();
        bad[8..12].copy_from_slice(b"AVI ");
        assert!(matches!(decode_wav(&bad), Err(Error::Parse { offset: 8, .. })));

        let mut bad = good.clone();
        bad[34..36].copy_from_slice(&24u16.to_le_bytes());
        assert!(matches!(decode_wav(&bad), Err(Error::Parse { offset: 20, .. })));

        assert!(matches!(decode_wav(&good[..50]), Err(Error::Parse { offset: 44, .. })));
    }
}
