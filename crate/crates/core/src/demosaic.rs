//! Debayering of the per-angle RGGB planes and luma extraction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mosaic::max_code;
use crate::plane::Plane;

/// Unit-normalized single-channel image.
pub type GrayImage = Plane<f64>;

/// Unit-normalized RGB image stored as three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub r: Plane<f64>,
    pub g: Plane<f64>,
    pub b: Plane<f64>,
}

impl ColorImage {
    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DebayerMethod {
    /// Copy the nearest same-color sample from the enclosing 2×2 quad.
    Nearest,
    /// Average the nearest same-color neighbors.
    #[default]
    Bilinear,
}

impl FromStr for DebayerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(DebayerMethod::Nearest),
            "bilinear" => Ok(DebayerMethod::Bilinear),
            _ => Err(Error::UnknownToken {
                kind: "debayer method",
                token: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for DebayerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DebayerMethod::Nearest => "nearest",
            DebayerMethod::Bilinear => "bilinear",
        })
    }
}

/// Normalizes integer codes by the full-scale code and debayers.
pub fn debayer(plane: &Plane<u16>, bit_depth: u32, method: DebayerMethod) -> Result<ColorImage> {
    let scale = 1.0 / max_code(bit_depth) as f64;
    debayer_normalized(&plane.map(|c| c as f64 * scale), method)
}

/// Debayers an RGGB mosaic whose samples are already in `[0, 1]`.
///
/// Borders are mirrored (`-1 → 1`, `n → n-2`), which replicates the nearest
/// same-color sample and keeps the CFA phase intact.
pub fn debayer_normalized(plane: &Plane<f64>, method: DebayerMethod) -> Result<ColorImage> {
    let (w, h) = plane.dims();
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "bayer plane needs even, nonzero dimensions",
        });
    }
    let mut r = vec![0.0; w * h];
    let mut g = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    r.par_chunks_mut(w)
        .zip(g.par_chunks_mut(w))
        .zip(b.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((rr, gr), br))| match method {
            DebayerMethod::Nearest => nearest_row(plane, y, rr, gr, br),
            DebayerMethod::Bilinear => bilinear_row(plane, y, rr, gr, br),
        });
    Ok(ColorImage {
        r: Plane::from_vec(w, h, r)?,
        g: Plane::from_vec(w, h, g)?,
        b: Plane::from_vec(w, h, b)?,
    })
}

fn nearest_row(p: &Plane<f64>, y: usize, rr: &mut [f64], gr: &mut [f64], br: &mut [f64]) {
    let y0 = y & !1;
    let top = p.row(y0);
    let bottom = p.row(y0 + 1);
    for x in 0..rr.len() {
        let x0 = x & !1;
        rr[x] = top[x0];
        br[x] = bottom[x0 + 1];
        gr[x] = match (y & 1, x & 1) {
            (0, 0) => top[x0 + 1],
            (1, 1) => bottom[x0],
            _ => p.get(x, y),
        };
    }
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

fn bilinear_row(p: &Plane<f64>, y: usize, rr: &mut [f64], gr: &mut [f64], br: &mut [f64]) {
    let (w, h) = p.dims();
    let up = p.row(mirror(y as isize - 1, h));
    let mid = p.row(y);
    let down = p.row(mirror(y as isize + 1, h));
    for x in 0..w {
        let xl = mirror(x as isize - 1, w);
        let xr = mirror(x as isize + 1, w);
        // Summation follows 3×3 raster order: NW N NE / W E / SW S SE.
        let cross = || (up[x] + mid[xl] + mid[xr] + down[x]) / 4.0;
        let diag = || (up[xl] + up[xr] + down[xl] + down[xr]) / 4.0;
        let horiz = || (mid[xl] + mid[xr]) / 2.0;
        let vert = || (up[x] + down[x]) / 2.0;
        let own = mid[x];
        let (r, g, b) = match (y & 1, x & 1) {
            (0, 0) => (own, cross(), diag()),
            (0, 1) => (horiz(), own, vert()),
            (1, 0) => (vert(), own, horiz()),
            _ => (diag(), cross(), own),
        };
        rr[x] = r;
        gr[x] = g;
        br[x] = b;
    }
}

pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

/// Rec.601 luma of one RGB triple.
///
/// Written relative to green so that gray inputs map to themselves exactly.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    (g + LUMA_R * (r - g) + LUMA_B * (b - g)).clamp(0.0, 1.0)
}

/// Rec.601 grayscale conversion.
pub fn to_grayscale(rgb: &ColorImage) -> GrayImage {
    let (w, h) = rgb.dims();
    let (r, g, b) = (rgb.r.as_slice(), rgb.g.as_slice(), rgb.b.as_slice());
    let mut data = vec![0.0; w * h];
    let row = w.max(1);
    data.par_chunks_mut(row).enumerate().for_each(|(y, out)| {
        let span = y * row..y * row + out.len();
        let (rr, gr, br) = (&r[span.clone()], &g[span.clone()], &b[span]);
        for x in 0..out.len() {
            out[x] = luma(rr[x], gr[x], br[x]);
        }
    });
    Plane::from_vec(w, h, data).expect("dims taken from input")
}
