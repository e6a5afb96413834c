//! File formats: the AHF frame container, tool files and JSON-lines logs.
//!
//! An AHF frame is one JSON manifest line followed by two row-major arrays
//! of little-endian `u16`: reflectivity, then depth in whole millimetres.
//! Frames can be concatenated into a stream file.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::registry::ToolDefinition;
use crate::sensor::{SensorFrame, MAX_DEPTH_MM};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    width: usize,
    height: usize,
    timestamp: f64,
    endianness: String,
    intrinsics: CameraIntrinsics,
}

/// Serializes a frame. Depth is rounded to whole millimetres.
pub fn write_ahf<W: Write>(out: &mut W, frame: &SensorFrame) -> Result<()> {
    let manifest = Manifest {
        format: "AHF".into(),
        width: frame.width,
        height: frame.height,
        timestamp: frame.timestamp,
        endianness: "little".into(),
        intrinsics: frame.intrinsics,
    };
    let mut buf = serde_json::to_vec(&manifest)?;
    buf.push(b'\n');
    buf.reserve(frame.width * frame.height * 4);
    for &r in &frame.reflectivity {
        buf.extend_from_slice(&r.to_le_bytes());
    }
    for &d in &frame.depth {
        let q = d.round().clamp(0.0, MAX_DEPTH_MM) as u16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads every frame in an AHF stream.
pub fn read_ahf_stream<R: Read>(input: R, label: &str) -> Result<Vec<SensorFrame>> {
    let mut reader = BufReader::new(input);
    let mut frames = Vec::new();
    let mut line = Vec::new();
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        let at = |msg: String| Error::Format(format!("{label}: frame {}: {msg}", frames.len()));
        let m: Manifest = serde_json::from_slice(&line).map_err(|e| at(format!("bad manifest: {e}")))?;
        if m.format != "AHF" || m.endianness != "little" {
            return Err(at("unsupported format or endianness".into()));
        }
        if m.width != m.intrinsics.width || m.height != m.intrinsics.height {
            return Err(at("dimensions disagree with intrinsics".into()));
        }
        m.intrinsics.validate().map_err(|e| at(e.to_string()))?;
        let n = m.width * m.height;
        let mut raw = vec![0u8; n * 4];
        reader.read_exact(&mut raw).map_err(|_| at("truncated pixel data".into()))?;
        let words: Vec<u16> = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        let depth: Vec<f64> = words[n..].iter().map(|&d| f64::from(d)).collect();
        if depth.iter().any(|&d| d > MAX_DEPTH_MM) {
            return Err(at("depth value above the sensor maximum".into()));
        }
        frames.push(SensorFrame {
            width: m.width,
            height: m.height,
            reflectivity: words[..n].to_vec(),
            depth,
            timestamp: m.timestamp,
            intrinsics: m.intrinsics,
        });
    }
    Ok(frames)
}

/// AHF files under `path` (a file or a directory of `*.ahf`), sorted by name.
pub fn ahf_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ahf"))
            .collect();
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::Io(format!("{} does not exist", path.display())))
    }
}

pub fn read_frames(path: &Path) -> Result<Vec<SensorFrame>> {
    let mut frames = Vec::new();
    for file in ahf_files(path)? {
        let f = fs::File::open(&file)?;
        frames.extend(read_ahf_stream(f, &file.display().to_string())?);
    }
    Ok(frames)
}

/// Parses a JSON document, reporting line and column on failure.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, label: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("{label}:{}:{}: {e}", e.line(), e.column())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

/// Loads tools from a file holding one tool object or an array of them.
pub fn read_tools(path: &Path) -> Result<Vec<ToolDefinition>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = parse_json(&text, &path.display().to_string())?;
    let label = path.display().to_string();
    let tools = match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| serde_json::from_value(v).map_err(|e| Error::Format(format!("{label}: tool {i}: {e}"))))
            .collect::<Result<Vec<ToolDefinition>>>()?,
        v => vec![serde_json::from_value(v).map_err(|e| Error::Format(format!("{label}: {e}")))?],
    };
    Ok(tools)
}

/// Parses JSON lines, skipping blank lines.
pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
