//! Netpbm codecs: binary PGM (P5, 8/16-bit), binary PPM (P6, 8-bit) and
//! grayscale PFM (`Pf`, little-endian).

use std::io::Write;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// A decoded P5 graymap. `maxval` is either 255 or 65535.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct HeaderReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        if self.buf.len() < 2 {
            return Err(Error::MalformedHeader("missing magic number".into()));
        }
        self.pos = 2;
        Ok([self.buf[0], self.buf[1]])
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .map_err(|_| Error::MalformedHeader(format!("non-ascii {what}")))
    }

    fn unsigned(&mut self, what: &str) -> Result<usize> {
        let tok = self.token(what)?;
        tok.parse()
            .map_err(|_| Error::MalformedHeader(format!("bad {what} '{tok}'")))
    }

    /// Consumes the single whitespace byte separating header from raster.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.buf.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::MalformedHeader(
                "missing whitespace before raster".into(),
            )),
        }
    }
}

fn check_payload(payload: &[u8], expected: usize) -> Result<()> {
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    Ok(())
}

/// Decodes a binary P5 graymap. 16-bit samples are big-endian.
pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    let mut hdr = HeaderReader::new(bytes);
    if &hdr.magic()? != b"P5" {
        return Err(Error::MalformedHeader("expected P5 magic".into()));
    }
    let width = hdr.unsigned("width")?;
    let height = hdr.unsigned("height")?;
    let maxval = hdr.unsigned("maxval")?;
    let start = hdr.end_of_header()?;
    let maxval = match maxval {
        255 => 255u16,
        65535 => 65535u16,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported maxval {other} (expected 255 or 65535)"
            )))
        }
    };
    let payload = &bytes[start..];
    let n = width * height;
    let pixels = if maxval == 255 {
        check_payload(payload, n)?;
        payload[..n].iter().map(|&b| b as u16).collect()
    } else {
        check_payload(payload, 2 * n)?;
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Graymap {
        width,
        height,
        maxval,
        pixels,
    })
}

/// Encodes a binary P5 graymap with the canonical `P5\n<w> <h>\n<maxval>\n` header.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, pixels: &[u16]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::SizeMismatch(format!(
            "{}x{} graymap needs {} samples, got {}",
            width,
            height,
            width * height,
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.reserve(pixels.len());
        for &p in pixels {
            out.push(p as u8);
        }
    } else {
        out.reserve(2 * pixels.len());
        for &p in pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    Ok(out)
}

/// Encodes interleaved 8-bit RGB as binary P6 with maxval 255.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != 3 * width * height {
        return Err(Error::SizeMismatch(format!(
            "{}x{} pixmap needs {} bytes, got {}",
            width,
            height,
            3 * width * height,
            rgb.len()
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

/// Decodes a binary P6 pixmap with maxval 255 into `(width, height, rgb)`.
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut hdr = HeaderReader::new(bytes);
    if &hdr.magic()? != b"P6" {
        return Err(Error::MalformedHeader("expected P6 magic".into()));
    }
    let width = hdr.unsigned("width")?;
    let height = hdr.unsigned("height")?;
    let maxval = hdr.unsigned("maxval")?;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!(
            "unsupported maxval {maxval} (expected 255)"
        )));
    }
    let start = hdr.end_of_header()?;
    let n = 3 * width * height;
    check_payload(&bytes[start..], n)?;
    Ok((width, height, bytes[start..start + n].to_vec()))
}

/// Encodes a single-channel float map (`Pf`), little-endian (scale `-1.0`).
///
/// PFM stores rows bottom-to-top; the plane is given top-to-bottom.
pub fn encode_pfm(plane: &Plane<f64>) -> Vec<u8> {
    let (w, h) = plane.dims();
    let mut out = Vec::with_capacity(32 + 4 * w * h);
    write!(out, "Pf\n{w} {h}\n-1.0\n").expect("write to Vec");
    for y in (0..h).rev() {
        for &v in plane.row(y) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a single-channel float map of either byte order.
pub fn decode_pfm(bytes: &[u8]) -> Result<Plane<f64>> {
    let mut hdr = HeaderReader::new(bytes);
    if &hdr.magic()? != b"Pf" {
        return Err(Error::MalformedHeader("expected Pf magic".into()));
    }
    let width = hdr.unsigned("width")?;
    let height = hdr.unsigned("height")?;
    let scale_tok = hdr.token("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad scale '{scale_tok}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("bad scale '{scale_tok}'")));
    }
    let little = scale < 0.0;
    let start = hdr.end_of_header()?;
    let n = width * height;
    let payload = &bytes[start..];
    check_payload(payload, 4 * n)?;
    let mut data = vec![0.0f64; n];
    for (i, c) in payload[..4 * n].chunks_exact(4).enumerate() {
        let raw = [c[0], c[1], c[2], c[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, y_up) = (i % width, i / width);
        data[(height - 1 - y_up) * width + x] = v as f64;
    }
    Plane::from_vec(width, height, data)
}
