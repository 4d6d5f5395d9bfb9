//! Binary NetPBM codecs: 8-bit `P5`/`P6` images and 16-bit `P5` disparity
//! maps.
//!
//! Disparity rasters store `round(256·d)` per pixel as little-endian `u16`,
//! with `0` marking an invalid pixel.

use crate::disparity::DisparityMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn decode_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Decode {
        offset,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    /// 1 for `P5`, 3 for `P6`.
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Byte offset of the raster.
    pub data_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(decode_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err(start, format!("{what} out of range")))
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<PnmHeader> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(decode_err(0, "expected magic P5 or P6")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(decode_err(2, "expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(decode_err(2, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(decode_err(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(decode_err(cur.pos, "expected single whitespace before raster"));
    }
    Ok(PnmHeader {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: cur.pos + 1,
    })
}

fn raster<'a>(bytes: &'a [u8], h: &PnmHeader, bytes_per_sample: usize) -> Result<&'a [u8]> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels * bytes_per_sample))
        .ok_or_else(|| decode_err(0, "image dimensions overflow"))?;
    let body = &bytes[h.data_offset..];
    if body.len() < need {
        return Err(decode_err(
            bytes.len(),
            format!("truncated raster: {} of {need} bytes", body.len()),
        ));
    }
    if body.len() > need {
        return Err(decode_err(h.data_offset + need, "trailing bytes after raster"));
    }
    Ok(body)
}

/// Decodes an 8-bit `P5` or `P6` image into `H×W×C` values in `[0, 1]`.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    let h = parse_header(bytes)?;
    if h.maxval > 255 {
        return Err(decode_err(h.data_offset - 1, "image must be 8-bit (maxval <= 255)"));
    }
    let body = raster(bytes, &h, 1)?;
    let scale = 1.0 / h.maxval as f32;
    for (i, &b) in body.iter().enumerate() {
        if u32::from(b) > h.maxval {
            return Err(decode_err(h.data_offset + i, "sample exceeds maxval"));
        }
    }
    Tensor::from_vec(
        &[h.height, h.width, h.channels],
        body.iter().map(|&b| f32::from(b) * scale).collect(),
    )
}

/// Encodes an `H×W×1` (or `H×W`) or `H×W×3` tensor with maxval 255;
/// values are clamped to `[0, 1]` and rounded.
pub fn encode_image(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w, c) = match *image.shape() {
        [h, w] => (h, w, 1),
        [h, w, c @ (1 | 3)] => (h, w, c),
        _ => {
            return Err(Error::Shape {
                op: "encode_image",
                detail: format!("expected H×W×1 or H×W×3, got {:?}", image.shape()),
            })
        }
    };
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// Decodes a 16-bit `P5` disparity raster.
pub fn decode_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let h = parse_header(bytes)?;
    if h.channels != 1 {
        return Err(decode_err(0, "disparity maps must be single-channel P5"));
    }
    if h.maxval < 256 {
        return Err(decode_err(h.data_offset - 1, "disparity maps must be 16-bit (maxval >= 256)"));
    }
    let body = raster(bytes, &h, 2)?;
    let mut values = Vec::with_capacity(h.width * h.height);
    let mut valid = Vec::with_capacity(h.width * h.height);
    for px in body.chunks_exact(2) {
        let v = u16::from_le_bytes([px[0], px[1]]);
        values.push(f32::from(v) / 256.0);
        valid.push(v != 0);
    }
    DisparityMap::new(Tensor::from_vec(&[h.height, h.width], values)?, valid)
}

/// Quantized 16-bit code of a valid disparity, clamped to `1..=65535`.
pub fn disparity_code(d: f32) -> u16 {
    (d * 256.0).round().clamp(1.0, 65535.0) as u16
}

pub fn encode_disparity(map: &DisparityMap) -> Vec<u8> {
    let (h, w) = (map.height(), map.width());
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for (&d, &ok) in map.values().data().iter().zip(map.valid()) {
        let code = if ok { disparity_code(d) } else { 0 };
        out.extend_from_slice(&code.to_le_bytes());
    }
    out
}
