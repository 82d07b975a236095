//! The six 8-bit visualizations: RGB, DIF, MONO, DOLP, POL and PAULI.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::demosaic::GrayImage;
use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::pnm;
use crate::stokes::{idif_px, StokesImage};

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl RenderedImage {
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        pnm::encode_ppm(self.width, self.height, &self.rgb).expect("buffer sized at render time")
    }
}

/// Visualization selector; the names double as output-file suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Mono,
    Rgb,
    Dif,
    Dolp,
    Pol,
    Pauli,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Mono,
        Modality::Rgb,
        Modality::Dif,
        Modality::Dolp,
        Modality::Pol,
        Modality::Pauli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Mono => "mono",
            Modality::Rgb => "rgb",
            Modality::Dif => "dif",
            Modality::Dolp => "dolp",
            Modality::Pol => "pol",
            Modality::Pauli => "pauli",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownToken {
                kind: "channel",
                token: s.to_string(),
            })
    }
}

/// Round-half-up of `255·x`, clamped to `[0, 255]`.
#[inline]
pub fn quantize(x: f64) -> u8 {
    let v = 255.0 * x + 0.5;
    // truncation is floor for positive values; NaN fails the first test
    if !(v >= 1.0) {
        0
    } else if v >= 255.0 {
        255
    } else {
        v as u8
    }
}

/// HSV to unit RGB; `h` in degrees, `s` and `v` in `[0, 1]`.
///
/// The largest output channel is exactly `v`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = if (0.0..360.0).contains(&h) { h } else { h.rem_euclid(360.0) } / 60.0;
    let sector = (h as usize).min(5);
    let f = h - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[inline]
fn quantize3(c: [f64; 3]) -> [u8; 3] {
    [quantize(c[0]), quantize(c[1]), quantize(c[2])]
}

fn render_with<F>(width: usize, height: usize, f: F) -> RenderedImage
where
    F: Fn(usize) -> [u8; 3] + Sync,
{
    let mut rgb = vec![0u8; 3 * width * height];
    let row = width.max(1);
    rgb.par_chunks_mut(3 * row).enumerate().for_each(|(y, out)| {
        for (x, px) in out.chunks_exact_mut(3).enumerate() {
            px.copy_from_slice(&f(y * row + x));
        }
    });
    RenderedImage { width, height, rgb }
}

fn same_dims(a: &StokesImage, others: &[&StokesImage]) -> Result<(usize, usize)> {
    for o in others {
        a.s0.ensure_same_dims(&o.s0)?;
    }
    Ok(a.dims())
}

/// Color image from the per-channel total intensity: `quantize(S0 / 2)`.
pub fn render_rgb(r: &StokesImage, g: &StokesImage, b: &StokesImage) -> Result<RenderedImage> {
    let (w, h) = same_dims(r, &[g, b])?;
    let (r0, g0, b0) = (r.s0.as_slice(), g.s0.as_slice(), b.s0.as_slice());
    Ok(render_with(w, h, |i| {
        quantize3([r0[i] / 2.0, g0[i] / 2.0, b0[i] / 2.0])
    }))
}

/// Color image from the per-channel diffuse intensity.
///
/// Uses the same full-scale (`S0 = 2`) as [`render_rgb`], so an unpolarized
/// pixel renders identically in both.
pub fn render_dif(r: &StokesImage, g: &StokesImage, b: &StokesImage) -> Result<RenderedImage> {
    let (w, h) = same_dims(r, &[g, b])?;
    let idif = |s: &StokesImage, i: usize| {
        idif_px(s.s0.as_slice()[i], s.s1.as_slice()[i], s.s2.as_slice()[i])
    };
    Ok(render_with(w, h, |i| {
        quantize3([idif(r, i), idif(g, i), idif(b, i)])
    }))
}

/// Grayscale from the monochrome total intensity.
pub fn render_mono(m: &StokesImage) -> RenderedImage {
    let (w, h) = m.dims();
    let s0 = m.s0.as_slice();
    render_with(w, h, |i| {
        let v = quantize(s0[i] / 2.0);
        [v, v, v]
    })
}

/// Pseudo-color for a degree of polarization: hue sweeps 240° (blue, 0) to
/// 0° (red, 1) at full saturation and value.
pub fn dolp_color(dolp: f64) -> [u8; 3] {
    let d = dolp.clamp(0.0, 1.0);
    quantize3(hsv_to_rgb(240.0 * (1.0 - d), 1.0, 1.0))
}

pub fn render_dolp(dolp: &Plane<f64>) -> RenderedImage {
    let (w, h) = dolp.dims();
    let d = dolp.as_slice();
    render_with(w, h, |i| dolp_color(d[i]))
}

/// HSV with hue `2·AoLP`, saturation 1 and value DoLP.
pub fn pol_color(dolp: f64, aolp_deg: f64) -> [u8; 3] {
    quantize3(hsv_to_rgb(2.0 * aolp_deg, 1.0, dolp.clamp(0.0, 1.0)))
}

pub fn render_pol(dolp: &Plane<f64>, aolp: &Plane<f64>) -> Result<RenderedImage> {
    dolp.ensure_same_dims(aolp)?;
    let (w, h) = dolp.dims();
    let (d, a) = (dolp.as_slice(), aolp.as_slice());
    Ok(render_with(w, h, |i| pol_color(d[i], a[i])))
}

/// `R = |S1|`, `G = I45`, `B = S0 / 2` of the monochrome channel.
pub fn render_pauli(m: &StokesImage, i45: &GrayImage) -> Result<RenderedImage> {
    m.s0.ensure_same_dims(i45)?;
    let (w, h) = m.dims();
    let (s0, s1, g) = (m.s0.as_slice(), m.s1.as_slice(), i45.as_slice());
    Ok(render_with(w, h, |i| {
        quantize3([s1[i].abs(), g[i], s0[i] / 2.0])
    }))
}
