//! Binary portable graymaps (P5, 8 bit).

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Min-max normalization to `0..=255`; a constant input maps to 128.
pub fn normalize(values: &[f64]) -> Vec<u8> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - min) / (max - min) * 255.0).round() as u8)
        .collect()
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a P5 image with maxval 255; returns `(width, height, pixels)`.
/// Comments are not supported.
pub fn decode(bytes: &[u8]) -> CliResult<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut token = |what: &str| -> CliResult<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::format(format!("missing {what} at byte offset {start}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token("magic")? != "P5" {
        return Err(CliError::format("not a P5 graymap at byte offset 0"));
    }
    let num = |s: String, what: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::format(format!("bad {what} `{s}`")))
    };
    let width = num(token("width")?, "width")?;
    let height = num(token("height")?, "height")?;
    let maxval = num(token("maxval")?, "maxval")?;
    if maxval != 255 {
        return Err(CliError::format(format!("maxval {maxval} unsupported")));
    }
    let start = pos + 1;
    let end = start + width * height;
    if end > bytes.len() {
        return Err(CliError::format(format!(
            "truncated raster: need {} bytes from offset {start}, file has {}",
            width * height,
            bytes.len()
        )));
    }
    Ok((width, height, bytes[start..end].to_vec()))
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> CliResult<()> {
    std::fs::write(path, encode(width, height, pixels)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<(usize, usize, Vec<u8>)> {
    decode(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_mid_gray() {
        assert_eq!(normalize(&[0.3; 5]), vec![128; 5]);
    }

    #[test]
    fn extremes_and_round_trip() {
        let px = normalize(&[-1.0, 0.0, 1.0, 3.0]);
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 255);
        assert_eq!(px[1], 64);
        let bytes = encode(2, 2, &px);
        assert_eq!(decode(&bytes).unwrap(), (2, 2, px));
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(decode(b"P2\n1 1\n255\n\x00").unwrap_err().class, "format");
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n2 2\n65535\n").is_err());
    }
}
