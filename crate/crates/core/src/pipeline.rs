//! End-to-end extraction: raw frame → per-angle RGB and luma → Stokes for
//! R, G, B and M → polarization planes → renderings.

use std::time::Instant;

use crate::demosaic::{debayer, to_grayscale, ColorImage, DebayerMethod, GrayImage};
use crate::error::{Error, Result};
use crate::mosaic::{
    saturation_mask_with_margin, split_planes, Angle, MosaicLayout, RawMosaicImage, ValidityMask,
};
use crate::plane::Plane;
use crate::pnm;
use crate::render::{self, Modality, RenderedImage};
use crate::stokes::{compute_all, default_eps, ChannelStack, StokesSet};
use crate::synth::{self, RegionSpec, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub method: DebayerMethod,
    /// Codes within this distance of full scale count as saturated.
    pub saturation_margin: u16,
    /// S0 degeneracy threshold; defaults to one code step.
    pub eps: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            method: DebayerMethod::Bilinear,
            saturation_margin: 0,
            eps: None,
        }
    }
}

/// Everything the renderers need from one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub stokes: StokesSet,
    /// Luma behind the 45° polarizer.
    pub i45_m: GrayImage,
    pub saturation: ValidityMask,
}

impl Extraction {
    pub fn dims(&self) -> (usize, usize) {
        self.i45_m.dims()
    }
}

pub fn extract(raw: &RawMosaicImage, opts: &ExtractOptions) -> Result<Extraction> {
    let planes = split_planes(raw);
    let saturation = saturation_mask_with_margin(raw, opts.saturation_margin);
    let mut colors: Vec<ColorImage> = Vec::with_capacity(4);
    let mut grays: Vec<GrayImage> = Vec::with_capacity(4);
    for angle in Angle::ALL {
        let rgb = debayer(planes.plane(angle), raw.bit_depth(), opts.method)?;
        grays.push(to_grayscale(&rgb));
        colors.push(rgb);
    }
    let [c0, c45, c90, c135]: [ColorImage; 4] = colors
        .try_into()
        .map_err(|_| Error::InvalidArgument("expected four angle images".into()))?;
    let r = ChannelStack::new(c0.r, c45.r, c90.r, c135.r)?;
    let g = ChannelStack::new(c0.g, c45.g, c90.g, c135.g)?;
    let b = ChannelStack::new(c0.b, c45.b, c90.b, c135.b)?;
    let i45_m = grays[1].clone();
    let [m0, m45, m90, m135]: [GrayImage; 4] = grays
        .try_into()
        .map_err(|_| Error::InvalidArgument("expected four gray images".into()))?;
    let m = ChannelStack::new(m0, m45, m90, m135)?;
    let eps = opts.eps.unwrap_or_else(|| default_eps(raw.bit_depth()));
    let stokes = compute_all([&r, &g, &b, &m], Some(&saturation), eps)?;
    Ok(Extraction {
        stokes,
        i45_m,
        saturation,
    })
}

pub fn render(ex: &Extraction, modality: Modality) -> Result<RenderedImage> {
    let s = &ex.stokes;
    match modality {
        Modality::Rgb => render::render_rgb(&s.r, &s.g, &s.b),
        Modality::Dif => render::render_dif(&s.r, &s.g, &s.b),
        Modality::Mono => Ok(render::render_mono(&s.m)),
        Modality::Dolp => Ok(render::render_dolp(&s.polar.dolp.values)),
        Modality::Pol => render::render_pol(&s.polar.dolp.values, &s.polar.aolp.values),
        Modality::Pauli => render::render_pauli(&s.m, &ex.i45_m),
    }
}

/// Extracts a frame and renders the requested modalities, in the given order.
pub fn extract_and_render(
    raw: &RawMosaicImage,
    opts: &ExtractOptions,
    modalities: &[Modality],
) -> Result<Vec<(Modality, RenderedImage)>> {
    let ex = extract(raw, opts)?;
    modalities
        .iter()
        .map(|&m| Ok((m, render(&ex, m)?)))
        .collect()
}

/// Named float planes for PFM export: `s{0,1,2}` of M, `dolp`, `aolp`, `idif`.
pub fn float_planes(ex: &Extraction) -> Vec<(&'static str, &Plane<f64>)> {
    let m = &ex.stokes.m;
    let p = &ex.stokes.polar;
    vec![
        ("s0", &m.s0),
        ("s1", &m.s1),
        ("s2", &m.s2),
        ("dolp", &p.dolp.values),
        ("aolp", &p.aolp.values),
        ("idif", &p.idif),
    ]
}

pub fn encode_pfm_planes(ex: &Extraction) -> Vec<(&'static str, Vec<u8>)> {
    float_planes(ex)
        .into_iter()
        .map(|(name, plane)| (name, pnm::encode_pfm(plane)))
        .collect()
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sensor resolution of the reference camera.
pub const SENSOR_WIDTH: usize = 2448;
pub const SENSOR_HEIGHT: usize = 2048;

/// A noise-free full-resolution test frame: an 8×8 grid of patches sweeping
/// color, DoLP and AoLP, with a saturated patch in one corner.
pub fn benchmark_frame(bit_depth: u32) -> Result<RawMosaicImage> {
    let cells: Vec<([f64; 3], f64, f64)> = (0..64)
        .map(|i| {
            let k = i as f64;
            let rgb = [
                0.05 + 0.4 * ((k * 0.37) % 1.0),
                0.05 + 0.4 * ((k * 0.61) % 1.0),
                0.05 + 0.4 * ((k * 0.13) % 1.0),
            ];
            let rgb = if i == 63 { [1.0; 3] } else { rgb };
            (rgb, (i % 11) as f64 / 10.0, (i * 10 % 180) as f64)
        })
        .collect();
    let scene = SceneSpec::tiled(
        SENSOR_WIDTH / 2,
        SENSOR_HEIGHT / 2,
        8,
        8,
        RegionSpec::new(None, [0.2; 3], 0.0, 0.0),
        &cells,
    )?;
    synth::mosaicize(&synth::bake_truth(&scene)?, MosaicLayout::default(), bit_depth, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub workers: usize,
    pub seconds: f64,
    pub fps: f64,
}

/// Times six-channel extraction of `frame`, repeated `frames` times after
/// one untimed warm-up run.
pub fn bench(frame: &RawMosaicImage, frames: usize, workers: usize) -> Result<BenchReport> {
    let frames = frames.max(1);
    let opts = ExtractOptions::default();
    let seconds = with_workers(workers, || -> Result<f64> {
        // one untimed frame so allocator and page-fault warm-up is not counted
        std::hint::black_box(extract_and_render(frame, &opts, &Modality::ALL)?);
        let start = Instant::now();
        for _ in 0..frames {
            let out = extract_and_render(frame, &opts, &Modality::ALL)?;
            std::hint::black_box(out);
        }
        Ok(start.elapsed().as_secs_f64())
    })??;
    Ok(BenchReport {
        frames,
        workers: workers.max(1),
        seconds,
        fps: frames as f64 / seconds,
    })
}
