//! Checkpoint files: a text manifest followed by raw tensor bytes.
//!
//! ```text
//! epift-checkpoint 1
//! tensors 2
//! backbone/block0/conv.weight 64,1,3,3 f32 0
//! backbone/block0/conv.bias 64 f32 2304
//! end
//! <little-endian IEEE-754 arrays in manifest order>
//! ```
//!
//! Each manifest line is `name shape dtype byte-offset`; the shape is a
//! comma-separated list (`-` for a scalar) and the offset counts from the
//! first byte after the `end` line.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

const MAGIC: &str = "epift-checkpoint 1";

pub fn encode(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut head = String::new();
    head.push_str(MAGIC);
    head.push('\n');
    head.push_str(&format!("tensors {}\n", entries.len()));
    let mut offset = 0usize;
    for (name, t) in entries {
        let shape = if t.shape().is_empty() {
            "-".to_string()
        } else {
            t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        };
        head.push_str(&format!("{name} {shape} {} {offset}\n", t.dtype()));
        offset += t.len() * t.dtype().byte_width();
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for (_, t) in entries {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let rel = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: "unterminated manifest line".into(),
            })?;
        let line = std::str::from_utf8(&bytes[start..start + rel]).map_err(|_| Error::Parse {
            offset: start,
            message: "manifest is not utf-8".into(),
        })?;
        *pos = start + rel + 1;
        Ok((start, line.to_string()))
    };

    let (off, magic) = next_line(&mut pos)?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: off,
            message: format!("bad magic {magic:?}"),
        });
    }
    let (off, count_line) = next_line(&mut pos)?;
    let count: usize = count_line
        .strip_prefix("tensors ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Parse {
            offset: off,
            message: format!("expected tensor count, found {count_line:?}"),
        })?;

    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let (off, line) = next_line(&mut pos)?;
        let bad = |m: &str| Error::Parse {
            offset: off,
            message: format!("{m} in {line:?}"),
        };
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let shape: Vec<usize> = if fields[1] == "-" {
            Vec::new()
        } else {
            fields[1]
                .split(',')
                .map(|d| d.parse().map_err(|_| bad("bad extent")))
                .collect::<Result<_>>()?
        };
        let dtype = DType::from_name(fields[2]).ok_or_else(|| bad("bad dtype"))?;
        let offset: usize = fields[3].parse().map_err(|_| bad("bad offset"))?;
        manifest.push((fields[0].to_string(), shape, dtype, offset));
    }
    let (off, end) = next_line(&mut pos)?;
    if end != "end" {
        return Err(Error::Parse {
            offset: off,
            message: format!("expected end of manifest, found {end:?}"),
        });
    }

    let data = &bytes[pos..];
    let mut expected = 0usize;
    let mut out = Vec::with_capacity(count);
    for (name, shape, dtype, offset) in manifest {
        let len = shape.iter().product::<usize>() * dtype.byte_width();
        if offset != expected || offset + len > data.len() {
            return Err(Error::Parse {
                offset: pos + offset,
                message: format!("tensor {name} out of place or truncated"),
            });
        }
        out.push((name, Tensor::from_le_bytes(&shape, dtype, &data[offset..offset + len])?));
        expected += len;
    }
    if expected != data.len() {
        return Err(Error::Parse {
            offset: pos + expected,
            message: "trailing bytes after last tensor".into(),
        });
    }
    Ok(out)
}

pub fn write(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let bytes = encode(entries);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_offsets() {
        let entries = vec![
            ("a".to_string(), Tensor::zeros(&[2, 3], DType::F32)),
            ("b".to_string(), Tensor::scalar(1.5, DType::F64)),
        ];
        let bytes = encode(&entries);
        let text = String::from_utf8_lossy(&bytes[..60]);
        assert!(text.contains("a 2,3 f32 0\n"));
        assert!(text.contains("b - f64 24\n"));
        assert_eq!(decode(&bytes).unwrap(), entries);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let entries = vec![("a".to_string(), Tensor::ones(&[4], DType::F32))];
        let bytes = encode(&entries);
        match decode(&bytes[..bytes.len() - 2]) {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
