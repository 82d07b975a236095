//! Synthetic polarized scenes and an ideal inverse sensor model.
//!
//! A [`SceneSpec`] describes piecewise-constant color, DoLP and AoLP at
//! half resolution (one sample per 2×2 polarizer quad). [`bake_truth`]
//! turns it into exact Stokes planes and [`mosaicize`] samples those planes
//! through ideal linear polarizers into a raw microgrid frame.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demosaic::{LUMA_B, LUMA_G, LUMA_R};
use crate::error::{Error, Result};
use crate::mosaic::{max_code, MosaicLayout, RawMosaicImage};
use crate::plane::Plane;
use crate::pnm;
use crate::stokes::{Channel, StokesImage};

/// One constant patch of a scene. A missing `rect` covers the whole frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// `[x, y, w, h]` in half-resolution pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<[usize; 4]>,
    /// Mean intensity seen through any single polarizer, per color filter.
    pub rgb: [f64; 3],
    pub dolp: f64,
    pub aolp_deg: f64,
}

impl RegionSpec {
    pub fn new(rect: Option<[usize; 4]>, rgb: [f64; 3], dolp: f64, aolp_deg: f64) -> Self {
        Self {
            rect,
            rgb,
            dolp,
            aolp_deg,
        }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        match self.rect {
            None => true,
            Some([rx, ry, rw, rh]) => x >= rx && x < rx + rw && y >= ry && y < ry + rh,
        }
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        if let Some([x, y, w, h]) = self.rect {
            if w == 0 || h == 0 || x + w > width || y + h > height {
                return Err(Error::InvalidScene(format!(
                    "rect [{x},{y},{w},{h}] outside {width}x{height}"
                )));
            }
        }
        if self.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidScene(format!("rgb {:?} outside [0,1]", self.rgb)));
        }
        if !(0.0..=1.0).contains(&self.dolp) {
            return Err(Error::InvalidScene(format!("dolp {} outside [0,1]", self.dolp)));
        }
        if !(0.0..180.0).contains(&self.aolp_deg) {
            return Err(Error::InvalidScene(format!(
                "aolp {} outside [0,180)",
                self.aolp_deg
            )));
        }
        Ok(())
    }
}

/// Declarative ground truth; later regions overdraw earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Half-resolution width (the raw frame is twice as wide).
    pub width: usize,
    pub height: usize,
    pub background: RegionSpec,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(Error::InvalidScene(format!(
                "scene must have even, nonzero dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        self.background.validate(self.width, self.height)?;
        for r in &self.regions {
            r.validate(self.width, self.height)?;
        }
        Ok(())
    }

    /// A `cols × rows` grid of cells filled row-major from `cells`; the last
    /// row and column absorb any remainder. Cells beyond `cells.len()` keep
    /// the background.
    pub fn tiled(
        width: usize,
        height: usize,
        cols: usize,
        rows: usize,
        background: RegionSpec,
        cells: &[([f64; 3], f64, f64)],
    ) -> Result<Self> {
        if cols == 0 || rows == 0 || cols > width || rows > height {
            return Err(Error::InvalidScene(format!(
                "cannot tile {width}x{height} into {cols}x{rows}"
            )));
        }
        let (cw, ch) = (width / cols, height / rows);
        let regions = cells
            .iter()
            .take(cols * rows)
            .enumerate()
            .map(|(i, &(rgb, dolp, aolp))| {
                let (col, row) = (i % cols, i / cols);
                let w = if col + 1 == cols { width - col * cw } else { cw };
                let h = if row + 1 == rows { height - row * ch } else { ch };
                RegionSpec::new(Some([col * cw, row * ch, w, h]), rgb, dolp, aolp)
            })
            .collect();
        let spec = SceneSpec {
            width,
            height,
            background: RegionSpec { rect: None, ..background },
            regions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Index of the region visible at `(x, y)`: 0 for background, `k + 1`
    /// for `regions[k]`.
    pub fn label_at(&self, x: usize, y: usize) -> usize {
        self.regions
            .iter()
            .rposition(|r| r.contains(x, y))
            .map_or(0, |k| k + 1)
    }

    pub fn region(&self, label: usize) -> &RegionSpec {
        if label == 0 {
            &self.background
        } else {
            &self.regions[label - 1]
        }
    }

    pub fn labels(&self) -> Plane<usize> {
        Plane::from_fn(self.width, self.height, |x, y| self.label_at(x, y))
    }

    /// `true` where every pixel within Chebyshev distance `margin` (and
    /// inside the frame) shows the same region.
    pub fn interior_mask(&self, margin: usize) -> Plane<bool> {
        let labels = self.labels();
        Plane::from_fn(self.width, self.height, |x, y| {
            let own = labels.get(x, y);
            let (x0, x1) = (x.saturating_sub(margin), (x + margin).min(self.width - 1));
            let (y0, y1) = (y.saturating_sub(margin), (y + margin).min(self.height - 1));
            (y0..=y1).all(|yy| (x0..=x1).all(|xx| labels.get(xx, yy) == own))
        })
    }
}

/// Exact Stokes planes of a scene, indexed R, G, B, M.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthPlanes {
    pub stokes: [StokesImage; 4],
    pub dolp: Plane<f64>,
    pub aolp: Plane<f64>,
}

impl TruthPlanes {
    pub fn dims(&self) -> (usize, usize) {
        self.dolp.dims()
    }

    pub fn channel(&self, c: Channel) -> &StokesImage {
        match c {
            Channel::R => &self.stokes[0],
            Channel::G => &self.stokes[1],
            Channel::B => &self.stokes[2],
            Channel::M => &self.stokes[3],
        }
    }

    /// Writes `s{0,1,2}_{r,g,b,m}.pfm`, `dolp.pfm` and `aolp.pfm` into `dir`.
    pub fn export_pfm(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: String, plane: &Plane<f64>| {
            let path = dir.join(name);
            std::fs::write(&path, pnm::encode_pfm(plane)).map_err(|e| Error::io(path, e))
        };
        for s in &self.stokes {
            write(format!("s0_{}.pfm", s.channel), &s.s0)?;
            write(format!("s1_{}.pfm", s.channel), &s.s1)?;
            write(format!("s2_{}.pfm", s.channel), &s.s2)?;
        }
        write("dolp.pfm".into(), &self.dolp)?;
        write("aolp.pfm".into(), &self.aolp)
    }
}

/// Exact `cos 2φ, sin 2φ`, with the four polarizer angles tabulated.
fn cos_sin_double(phi_deg: f64) -> (f64, f64) {
    match phi_deg {
        0.0 => (1.0, 0.0),
        45.0 => (0.0, 1.0),
        90.0 => (-1.0, 0.0),
        135.0 => (0.0, -1.0),
        _ => {
            let (s, c) = (2.0 * phi_deg).to_radians().sin_cos();
            (c, s)
        }
    }
}

/// Intensity behind an ideal linear polarizer at `phi_deg`:
/// `½·(S0 + S1·cos2φ + S2·sin2φ)`.
pub fn polarizer_intensity(s: [f64; 3], phi_deg: f64) -> Result<f64> {
    let [s0, s1, s2] = s;
    let tol = 1e-12 * s0.abs().max(1.0);
    if s0 < 0.0 || s1.hypot(s2) > s0 + tol || !s.iter().all(|v| v.is_finite()) {
        return Err(Error::UnphysicalStokes { s0, s1, s2 });
    }
    let (c, sn) = cos_sin_double(phi_deg);
    Ok(0.5 * (s0 + s1 * c + s2 * sn))
}

fn linear_luma(r: f64, g: f64, b: f64) -> f64 {
    LUMA_R * r + LUMA_G * g + LUMA_B * b
}

/// Rasterizes the scene into exact Stokes planes.
///
/// Per color `c`: `S0 = 2·rgb_c`, `S1 = dolp·S0·cos 2θ`, `S2 = dolp·S0·sin 2θ`;
/// the M channel is the Rec.601 combination of the color planes.
pub fn bake_truth(spec: &SceneSpec) -> Result<TruthPlanes> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let labels = spec.labels();
    // Per region: [R, G, B, M] Stokes triples.
    let table: Vec<[[f64; 3]; 4]> = (0..=spec.regions.len())
        .map(|k| {
            let reg = spec.region(k);
            let (sin2, cos2) = (2.0 * reg.aolp_deg).to_radians().sin_cos();
            let color = |v: f64| {
                let s0 = 2.0 * v;
                [s0, reg.dolp * s0 * cos2, reg.dolp * s0 * sin2]
            };
            let [r, g, b] = reg.rgb.map(color);
            let m = [0, 1, 2].map(|i| linear_luma(r[i], g[i], b[i]));
            [r, g, b, m]
        })
        .collect();
    let stokes = [0usize, 1, 2, 3].map(|ci| {
        let comp = |k: usize| labels.map(|l| table[l][ci][k]);
        StokesImage {
            s0: comp(0),
            s1: comp(1),
            s2: comp(2),
            channel: Channel::ALL[ci],
            validity: Plane::new(w, h, true),
        }
    });
    Ok(TruthPlanes {
        stokes,
        dolp: labels.map(|l| spec.region(l).dolp),
        aolp: labels.map(|l| spec.region(l).aolp_deg),
    })
}

/// Additive Gaussian noise on codes, `sigma` as a fraction of full scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Bayer color of half-resolution site `(x, y)` in an RGGB plane.
#[inline]
pub fn bayer_channel(x: usize, y: usize) -> Channel {
    match (y & 1, x & 1) {
        (0, 0) => Channel::R,
        (1, 1) => Channel::B,
        _ => Channel::G,
    }
}

/// Samples the truth through the microgrid into a raw frame twice the truth
/// size per axis.
///
/// Each half-resolution site carries the Stokes vector of its Bayer color
/// and fills one 2×2 polarizer quad. Codes are
/// `clamp(round(round(I·full) + N(0, sigma·full)))`; the noise stream of
/// each raw row is seeded independently, so output does not depend on
/// thread scheduling.
pub fn mosaicize(
    truth: &TruthPlanes,
    layout: MosaicLayout,
    bit_depth: u32,
    noise: Option<NoiseSpec>,
) -> Result<RawMosaicImage> {
    let (tw, th) = truth.dims();
    if tw % 2 != 0 || th % 2 != 0 || tw == 0 || th == 0 {
        return Err(Error::SizeMismatch(format!(
            "truth {tw}x{th} must be even so the raw frame tiles whole superpixels"
        )));
    }
    for s in &truth.stokes {
        s.s0.ensure_same_dims(&truth.dolp)?;
    }
    if bit_depth != 8 && bit_depth != 16 {
        return Err(Error::UnsupportedBitDepth(bit_depth));
    }
    let full = max_code(bit_depth) as f64;
    let normal = match noise {
        Some(n) if n.sigma > 0.0 => Some(
            Normal::new(0.0, n.sigma * full)
                .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?,
        ),
        Some(n) if n.sigma < 0.0 || n.sigma.is_nan() => {
            return Err(Error::InvalidArgument(format!("noise sigma {}", n.sigma)))
        }
        _ => None,
    };
    let seed = noise.map_or(0, |n| n.seed);
    let (w, h) = (2 * tw, 2 * th);
    let mut pixels = vec![0u16; w * h];
    pixels
        .par_chunks_mut(w)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            let mut rng = normal.map(|_| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(y as u64);
                r
            });
            let (ty, dr) = (y / 2, y % 2);
            for (x, code) in row.iter_mut().enumerate() {
                let (tx, dc) = (x / 2, x % 2);
                let s = truth.channel(bayer_channel(tx, ty)).at(tx, ty);
                let angle = layout.angle_at(dr, dc);
                let intensity = polarizer_intensity(s, angle.degrees())?;
                let mut v = (intensity * full).round();
                if let (Some(dist), Some(rng)) = (normal.as_ref(), rng.as_mut()) {
                    v = (v + dist.sample(rng)).round();
                }
                *code = v.clamp(0.0, full) as u16;
            }
            Ok(())
        })?;
    RawMosaicImage::new(w, h, bit_depth, pixels, layout)
}
