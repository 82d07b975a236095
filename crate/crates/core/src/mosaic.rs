//! Raw microgrid frames: container I/O, the polarizer layout of a 2×2 quad,
//! the split into four per-angle Bayer planes, and saturation masking.
//!
//! The sensor superimposes a 2×2 wire-grid polarizer quad on each Bayer
//! site, so a 4×4 tile holds every (angle, color) combination. Splitting by
//! quad offset yields four half-resolution RGGB mosaics, one per angle.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::pnm;

/// Half-resolution boolean plane; `true` marks trustworthy polarization data.
pub type ValidityMask = Plane<bool>;

/// Polarizer orientation of one microgrid pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Angle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::Deg0, Angle::Deg45, Angle::Deg90, Angle::Deg135];

    /// Position in `ALL` (0°, 45°, 90°, 135°).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn degrees(self) -> f64 {
        45.0 * self.index() as f64
    }

    pub fn from_degrees(deg: u32) -> Option<Angle> {
        match deg {
            0 => Some(Angle::Deg0),
            45 => Some(Angle::Deg45),
            90 => Some(Angle::Deg90),
            135 => Some(Angle::Deg135),
            _ => None,
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees() as u32)
    }
}

impl FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u32>()
            .ok()
            .and_then(Angle::from_degrees)
            .ok_or_else(|| Error::UnknownToken {
                kind: "polarizer angle",
                token: s.to_string(),
            })
    }
}

/// Maps the offset `(row mod 2, col mod 2)` inside a polarizer quad to its angle.
///
/// The half-resolution planes produced by [`split_planes`] are always RGGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MosaicLayout {
    angle_at_offset: [[Angle; 2]; 2],
}

impl Default for MosaicLayout {
    /// 90° 45° on the first row, 135° 0° on the second.
    fn default() -> Self {
        Self {
            angle_at_offset: [[Angle::Deg90, Angle::Deg45], [Angle::Deg135, Angle::Deg0]],
        }
    }
}

impl MosaicLayout {
    pub fn new(angle_at_offset: [[Angle; 2]; 2]) -> Result<Self> {
        let mut seen = [false; 4];
        for a in angle_at_offset.iter().flatten() {
            if std::mem::replace(&mut seen[a.index()], true) {
                return Err(Error::InvalidLayout(format!(
                    "angle {a} appears at more than one offset"
                )));
            }
        }
        Ok(Self { angle_at_offset })
    }

    #[inline]
    pub fn angle_at(&self, dr: usize, dc: usize) -> Angle {
        self.angle_at_offset[dr & 1][dc & 1]
    }

    /// Quad offset `(dr, dc)` that carries `angle`.
    pub fn offset_of(&self, angle: Angle) -> (usize, usize) {
        for dr in 0..2 {
            for dc in 0..2 {
                if self.angle_at_offset[dr][dc] == angle {
                    return (dr, dc);
                }
            }
        }
        unreachable!("layout is validated to contain every angle")
    }

    fn to_map(self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        for dr in 0..2 {
            for dc in 0..2 {
                map.insert(format!("{dr}{dc}"), self.angle_at(dr, dc).to_string());
            }
        }
        map
    }

    fn from_map(map: &BTreeMap<String, AngleToken>) -> Result<Self> {
        let mut grid = [[None; 2]; 2];
        for (key, tok) in map {
            let (dr, dc) = match key.as_str() {
                "00" => (0, 0),
                "01" => (0, 1),
                "10" => (1, 0),
                "11" => (1, 1),
                _ => return Err(Error::InvalidLayout(format!("unknown offset key '{key}'"))),
            };
            grid[dr][dc] = Some(tok.angle()?);
        }
        let get = |dr: usize, dc: usize| {
            grid[dr][dc]
                .ok_or_else(|| Error::InvalidLayout(format!("missing offset '{dr}{dc}'")))
        };
        Self::new([[get(0, 0)?, get(0, 1)?], [get(1, 0)?, get(1, 1)?]])
    }
}

impl fmt::Display for MosaicLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.angle_at_offset;
        write!(f, "{},{},{},{}", a[0][0], a[0][1], a[1][0], a[1][1])
    }
}

/// Parses `"a00,a01,a10,a11"`, e.g. `"90,45,135,0"`.
impl FromStr for MosaicLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let angles: Vec<Angle> = s.split(',').map(str::parse).collect::<Result<_>>()?;
        if angles.len() != 4 {
            return Err(Error::InvalidLayout(format!(
                "expected four comma-separated angles, got '{s}'"
            )));
        }
        Self::new([[angles[0], angles[1]], [angles[2], angles[3]]])
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AngleToken {
    Text(String),
    Number(u32),
}

impl AngleToken {
    fn angle(&self) -> Result<Angle> {
        match self {
            AngleToken::Text(s) => s.parse(),
            AngleToken::Number(n) => Angle::from_degrees(*n).ok_or_else(|| Error::UnknownToken {
                kind: "polarizer angle",
                token: n.to_string(),
            }),
        }
    }
}

impl Serialize for MosaicLayout {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MosaicLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, AngleToken>::deserialize(d)?;
        MosaicLayout::from_map(&map).map_err(serde::de::Error::custom)
    }
}

/// Byte order of 16-bit samples in a headerless `.raw` payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    #[default]
    Le,
    Be,
}

/// JSON sidecar describing a headerless `.raw` payload (or overriding the
/// layout of a PGM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDescriptor {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u32,
    #[serde(default)]
    pub layout: Option<MosaicLayout>,
    #[serde(default)]
    pub byte_order: ByteOrder,
}

impl RawDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A single-channel sensor frame plus its polarizer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMosaicImage {
    width: usize,
    height: usize,
    bit_depth: u32,
    pixels: Vec<u16>,
    layout: MosaicLayout,
}

impl RawMosaicImage {
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u32,
        pixels: Vec<u16>,
        layout: MosaicLayout,
    ) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::UnsupportedBitDepth(bit_depth));
        }
        if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "odd dimensions",
            });
        }
        if !width.is_multiple_of(4) || !height.is_multiple_of(4) || width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "must be a nonzero multiple of the 4x4 superpixel",
            });
        }
        if pixels.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{}x{} frame needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        let max = max_code(bit_depth);
        if let Some(&code) = pixels.iter().find(|&&p| p > max) {
            return Err(Error::CodeOutOfRange { code, max });
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pixels,
            layout,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn max_code(&self) -> u16 {
        max_code(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn layout(&self) -> MosaicLayout {
        self.layout
    }

    pub fn with_layout(mut self, layout: MosaicLayout) -> Self {
        self.layout = layout;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    /// Crops a window aligned to whole 4×4 superpixels.
    pub fn crop_superpixels(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if !x.is_multiple_of(4) || !y.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "crop origin ({x},{y}) not aligned to the 4x4 superpixel"
            )));
        }
        let plane = Plane::from_vec(self.width, self.height, self.pixels.clone())?;
        let cropped = plane.crop(x, y, w, h)?;
        Self::new(w, h, self.bit_depth, cropped.into_vec(), self.layout)
    }

    /// Parses a P5 graymap; maxval 255 gives depth 8, 65535 gives depth 16.
    pub fn from_pgm_bytes(bytes: &[u8], layout: MosaicLayout) -> Result<Self> {
        let g = pnm::decode_pgm(bytes)?;
        let bit_depth = if g.maxval == 255 { 8 } else { 16 };
        Self::new(g.width, g.height, bit_depth, g.pixels, layout)
    }

    /// Parses a headerless payload described by `desc`.
    pub fn from_raw_bytes(bytes: &[u8], desc: &RawDescriptor) -> Result<Self> {
        let n = desc.width * desc.height;
        let pixels = match desc.bit_depth {
            8 => {
                check_exact(bytes.len(), n)?;
                bytes.iter().map(|&b| b as u16).collect()
            }
            16 => {
                check_exact(bytes.len(), 2 * n)?;
                bytes
                    .chunks_exact(2)
                    .map(|c| match desc.byte_order {
                        ByteOrder::Le => u16::from_le_bytes([c[0], c[1]]),
                        ByteOrder::Be => u16::from_be_bytes([c[0], c[1]]),
                    })
                    .collect()
            }
            other => return Err(Error::UnsupportedBitDepth(other)),
        };
        Self::new(
            desc.width,
            desc.height,
            desc.bit_depth,
            pixels,
            desc.layout.unwrap_or_default(),
        )
    }

    /// Encodes as a canonical P5 graymap (maxval `2^bit_depth - 1`).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        pnm::encode_pgm(self.width, self.height, self.max_code(), &self.pixels)
            .expect("pixel count validated at construction")
    }
}

fn check_exact(found: usize, expected: usize) -> Result<()> {
    if found < expected {
        Err(Error::TruncatedPayload { expected, found })
    } else if found > expected {
        Err(Error::SizeMismatch(format!(
            "descriptor implies {expected} bytes, payload has {found}"
        )))
    } else {
        Ok(())
    }
}

pub fn max_code(bit_depth: u32) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

/// Loads a frame from a P5 PGM, or from a headerless `.raw` with a JSON
/// sidecar descriptor. A descriptor given alongside a PGM supplies the
/// layout and must agree with the PGM's dimensions.
pub fn load_raw(path: &Path, descriptor: Option<&Path>) -> Result<RawMosaicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let desc = descriptor
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RawDescriptor::from_json(&text)
        })
        .transpose()?;
    if bytes.starts_with(b"P5") {
        let raw = RawMosaicImage::from_pgm_bytes(&bytes, MosaicLayout::default())?;
        match desc {
            None => Ok(raw),
            Some(d) => {
                if d.width != raw.width || d.height != raw.height || d.bit_depth != raw.bit_depth
                {
                    return Err(Error::SizeMismatch(format!(
                        "descriptor says {}x{}@{} but PGM is {}x{}@{}",
                        d.width, d.height, d.bit_depth, raw.width, raw.height, raw.bit_depth
                    )));
                }
                Ok(raw.with_layout(d.layout.unwrap_or_default()))
            }
        }
    } else {
        let d = desc.ok_or_else(|| {
            Error::MalformedHeader(format!(
                "{} is not a P5 PGM and no descriptor was given",
                path.display()
            ))
        })?;
        RawMosaicImage::from_raw_bytes(&bytes, &d)
    }
}

/// Writes the frame as a P5 PGM.
pub fn save_raw(raw: &RawMosaicImage, path: &Path) -> Result<()> {
    std::fs::write(path, raw.to_pgm_bytes()).map_err(|e| Error::io(path, e))
}

/// Four half-resolution RGGB mosaics indexed by [`Angle::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMosaics {
    planes: [Plane<u16>; 4],
    bit_depth: u32,
}

impl AngleMosaics {
    pub fn plane(&self, angle: Angle) -> &Plane<u16> {
        &self.planes[angle.index()]
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    /// Interleaves the planes back into a full-resolution frame.
    pub fn reassemble(&self, layout: MosaicLayout) -> Result<RawMosaicImage> {
        let (hw, hh) = self.dims();
        let (w, h) = (2 * hw, 2 * hh);
        let mut pixels = vec![0u16; w * h];
        for angle in Angle::ALL {
            let (dr, dc) = layout.offset_of(angle);
            let plane = self.plane(angle);
            for r in 0..hh {
                let row = plane.row(r);
                let out = &mut pixels[(2 * r + dr) * w..(2 * r + dr + 1) * w];
                for (c, &v) in row.iter().enumerate() {
                    out[2 * c + dc] = v;
                }
            }
        }
        RawMosaicImage::new(w, h, self.bit_depth, pixels, layout)
    }
}

/// Splits the frame into one half-resolution plane per polarizer angle.
pub fn split_planes(raw: &RawMosaicImage) -> AngleMosaics {
    let (hw, hh) = (raw.width / 2, raw.height / 2);
    let planes = Angle::ALL.map(|angle| {
        let (dr, dc) = raw.layout.offset_of(angle);
        Plane::from_fn(hw, hh, |c, r| raw.get(2 * c + dc, 2 * r + dr))
    });
    AngleMosaics {
        planes,
        bit_depth: raw.bit_depth,
    }
}

/// Marks quads where any angle sits at the top code.
pub fn saturation_mask(raw: &RawMosaicImage) -> ValidityMask {
    saturation_mask_with_margin(raw, 0)
}

/// Like [`saturation_mask`], but treats codes within `margin` of the top
/// code as saturated.
pub fn saturation_mask_with_margin(raw: &RawMosaicImage, margin: u16) -> ValidityMask {
    let threshold = raw.max_code().saturating_sub(margin);
    Plane::from_fn(raw.width / 2, raw.height / 2, |c, r| {
        let (x, y) = (2 * c, 2 * r);
        raw.get(x, y)
            .max(raw.get(x + 1, y))
            .max(raw.get(x, y + 1))
            .max(raw.get(x + 1, y + 1))
            < threshold
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> RawMosaicImage {
        let px = (0..w * h).map(|i| (i % 251) as u16).collect();
        RawMosaicImage::new(w, h, 8, px, MosaicLayout::default()).unwrap()
    }

    #[test]
    fn layout_rejects_duplicates() {
        let err = MosaicLayout::new([[Angle::Deg0, Angle::Deg0], [Angle::Deg90, Angle::Deg135]]);
        assert!(matches!(err, Err(Error::InvalidLayout(_))));
        assert!("90,45,135".parse::<MosaicLayout>().is_err());
        assert!("90,45,135,30".parse::<MosaicLayout>().is_err());
        assert_eq!(
            "90,45,135,0".parse::<MosaicLayout>().unwrap(),
            MosaicLayout::default()
        );
    }

    #[test]
    fn layout_json_matches_sidecar_schema() {
        let json = serde_json::to_string(&MosaicLayout::default()).unwrap();
        assert_eq!(json, r#"{"00":"90","01":"45","10":"135","11":"0"}"#);
        let back: MosaicLayout = serde_json::from_str(r#"{"00":0,"01":45,"10":90,"11":"135"}"#)
            .unwrap();
        assert_eq!(back.angle_at(1, 0), Angle::Deg90);
    }

    #[test]
    fn constructor_invariants() {
        let l = MosaicLayout::default();
        assert!(matches!(
            RawMosaicImage::new(6, 4, 8, vec![0; 24], l),
            Err(Error::InvalidDimensions { .. })
        ));
        assert!(matches!(
            RawMosaicImage::new(5, 4, 8, vec![0; 20], l),
            Err(Error::InvalidDimensions { reason: "odd dimensions", .. })
        ));
        assert!(matches!(
            RawMosaicImage::new(4, 4, 12, vec![0; 16], l),
            Err(Error::UnsupportedBitDepth(12))
        ));
        assert!(matches!(
            RawMosaicImage::new(4, 4, 8, vec![256; 16], l),
            Err(Error::CodeOutOfRange { .. })
        ));
        assert!(RawMosaicImage::new(4, 4, 8, vec![0; 15], l).is_err());
    }

    #[test]
    fn constant_pgm_loads() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([10u8; 16]);
        let raw = RawMosaicImage::from_pgm_bytes(&bytes, MosaicLayout::default()).unwrap();
        assert_eq!((raw.width(), raw.height(), raw.bit_depth()), (4, 4, 8));
        assert_eq!(raw.pixels(), &[10u16; 16]);
    }

    #[test]
    fn raw_payload_with_descriptor() {
        let desc = RawDescriptor::from_json(
            r#"{"width":4,"height":4,"bit_depth":16,"layout":{"00":"0","01":"45","10":"135","11":"90"}}"#,
        )
        .unwrap();
        let bytes: Vec<u8> = (0..16u16).flat_map(|v| (v * 300).to_le_bytes()).collect();
        let raw = RawMosaicImage::from_raw_bytes(&bytes, &desc).unwrap();
        assert_eq!(raw.get(1, 0), 300);
        assert_eq!(raw.layout().angle_at(0, 0), Angle::Deg0);
        assert!(matches!(
            RawMosaicImage::from_raw_bytes(&bytes[..30], &desc),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            RawMosaicImage::from_raw_bytes(&long, &desc),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn load_raw_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let raw = ramp(8, 4);
        let pgm = dir.path().join("f.pgm");
        save_raw(&raw, &pgm).unwrap();
        assert_eq!(load_raw(&pgm, None).unwrap(), raw);

        let desc = dir.path().join("f.json");
        std::fs::write(&desc, r#"{"width":8,"height":4,"bit_depth":8,"layout":{"00":"0","01":"45","10":"90","11":"135"}}"#).unwrap();
        let with = load_raw(&pgm, Some(&desc)).unwrap();
        assert_eq!(with.layout().to_string(), "0,45,90,135");

        std::fs::write(&desc, r#"{"width":4,"height":4,"bit_depth":8}"#).unwrap();
        assert!(matches!(load_raw(&pgm, Some(&desc)), Err(Error::SizeMismatch(_))));

        let bin = dir.path().join("f.raw");
        std::fs::write(&bin, [0u8; 16]).unwrap();
        assert!(load_raw(&bin, None).is_err());
        assert!(load_raw(&dir.path().join("missing.pgm"), None).is_err());
    }

    #[test]
    fn split_constant_codes_per_angle() {
        let l = MosaicLayout::default();
        let mut px = vec![0u16; 16];
        for y in 0..4 {
            for x in 0..4 {
                px[y * 4 + x] = 10 * l.angle_at(y, x).index() as u16;
            }
        }
        let raw = RawMosaicImage::new(4, 4, 8, px, l).unwrap();
        let planes = split_planes(&raw);
        for a in Angle::ALL {
            assert_eq!(planes.plane(a).as_slice(), &[10 * a.index() as u16; 4]);
        }
    }

    #[test]
    fn split_full_sensor_resolution() {
        let raw = RawMosaicImage::new(2448, 2048, 8, vec![0; 2448 * 2048], MosaicLayout::default())
            .unwrap();
        let planes = split_planes(&raw);
        for a in Angle::ALL {
            assert_eq!(planes.plane(a).dims(), (1224, 1024));
        }
    }

    #[test]
    fn saturation_extremes() {
        let l = MosaicLayout::default();
        let sat = RawMosaicImage::new(4, 4, 8, vec![255; 16], l).unwrap();
        assert_eq!(saturation_mask(&sat).count_true(), 0);
        let ok = RawMosaicImage::new(4, 4, 8, vec![254; 16], l).unwrap();
        assert_eq!(saturation_mask(&ok).count_true(), 4);
        assert_eq!(saturation_mask_with_margin(&ok, 1).count_true(), 0);
    }

    #[test]
    fn single_saturated_code_masks_one_site() {
        let l = MosaicLayout::default();
        for y in 0..4 {
            for x in 0..4 {
                let mut px = vec![100u16; 16];
                px[y * 4 + x] = 255;
                let raw = RawMosaicImage::new(4, 4, 8, px, l).unwrap();
                let mask = saturation_mask(&raw);
                for r in 0..2 {
                    for c in 0..2 {
                        assert_eq!(mask.get(c, r), !(r == y / 2 && c == x / 2));
                    }
                }
            }
        }
    }

    #[test]
    fn crop_alignment() {
        let raw = ramp(16, 8);
        assert!(raw.crop_superpixels(2, 0, 4, 4).is_err());
        assert!(raw.crop_superpixels(4, 4, 8, 4).is_ok());
    }
}
