//! Linear Stokes parameters from four polarizer intensities, and the
//! derived degree/angle of linear polarization and diffuse intensity.
//!
//! `S3` is never stored; the sensor has no circular analyzer.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mosaic::ValidityMask;
use crate::plane::Plane;

/// Spectral channel a Stokes image was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
    /// Luma (monochrome) channel.
    M,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::R, Channel::G, Channel::B, Channel::M];

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "r",
            Channel::G => "g",
            Channel::B => "b",
            Channel::M => "m",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(Channel::R),
            "g" => Ok(Channel::G),
            "b" => Ok(Channel::B),
            "m" => Ok(Channel::M),
            _ => Err(Error::UnknownToken {
                kind: "channel",
                token: s.to_string(),
            }),
        }
    }
}

/// The four co-registered polarizer intensities of one spectral channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub i0: Plane<f64>,
    pub i45: Plane<f64>,
    pub i90: Plane<f64>,
    pub i135: Plane<f64>,
}

impl ChannelStack {
    pub fn new(i0: Plane<f64>, i45: Plane<f64>, i90: Plane<f64>, i135: Plane<f64>) -> Result<Self> {
        i0.ensure_same_dims(&i45)?;
        i0.ensure_same_dims(&i90)?;
        i0.ensure_same_dims(&i135)?;
        Ok(Self { i0, i45, i90, i135 })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i0.dims()
    }
}

/// Per-pixel `(S0, S1, S2)` for one channel, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    pub s0: Plane<f64>,
    pub s1: Plane<f64>,
    pub s2: Plane<f64>,
    pub channel: Channel,
    pub validity: ValidityMask,
}

impl StokesImage {
    pub fn dims(&self) -> (usize, usize) {
        self.s0.dims()
    }

    /// Replaces the validity mask; dimensions must match.
    pub fn with_validity(mut self, mask: ValidityMask) -> Result<Self> {
        self.s0.ensure_same_dims(&mask)?;
        self.validity = mask;
        Ok(self)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        [self.s0.get(x, y), self.s1.get(x, y), self.s2.get(x, y)]
    }
}

/// A plane of derived values with its own validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPlane {
    pub values: Plane<f64>,
    pub valid: ValidityMask,
}

/// DoLP, AoLP (degrees) and diffuse intensity of the monochrome channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPlanes {
    pub dolp: MaskedPlane,
    pub aolp: MaskedPlane,
    pub idif: Plane<f64>,
}

/// `S0 = I0 + I90`, `S1 = I0 - I90`, `S2 = I45 - I135`.
#[inline]
pub fn stokes_px(i0: f64, i45: f64, i90: f64, i135: f64) -> [f64; 3] {
    [i0 + i90, i0 - i90, i45 - i135]
}

/// Degree of linear polarization clamped to `[0, 1]`; `None` when `S0 < eps`.
#[inline]
pub fn dolp_px(s0: f64, s1: f64, s2: f64, eps: f64) -> Option<f64> {
    if s0 < eps {
        None
    } else {
        Some((norm(s1, s2) / s0).clamp(0.0, 1.0))
    }
}

/// Angle of linear polarization in `[0°, 180°)`; `None` when undefined.
#[inline]
pub fn aolp_px(s0: f64, s1: f64, s2: f64, eps: f64) -> Option<f64> {
    if s0 < eps || (s1 == 0.0 && s2 == 0.0) {
        return None;
    }
    Some(wrap_half_turn(0.5 * s2.atan2(s1).to_degrees()))
}

/// Length of the linear component; values stay far from overflow.
#[inline]
fn norm(s1: f64, s2: f64) -> f64 {
    (s1 * s1 + s2 * s2).sqrt()
}

/// Maps any angle in degrees into `[0, 180)`.
#[inline]
pub fn wrap_half_turn(deg: f64) -> f64 {
    let d = if (-180.0..0.0).contains(&deg) {
        deg + 180.0
    } else if (0.0..180.0).contains(&deg) {
        deg
    } else {
        deg.rem_euclid(180.0)
    };
    if d >= 180.0 {
        0.0
    } else {
        d + 0.0
    }
}

/// `(S0 - sqrt(S1² + S2²)) / 2`, clamped below at 0.
#[inline]
pub fn idif_px(s0: f64, s1: f64, s2: f64) -> f64 {
    ((s0 - norm(s1, s2)) / 2.0).max(0.0)
}

pub fn stokes_from_intensities(stack: &ChannelStack, channel: Channel) -> Result<StokesImage> {
    let (w, h) = stack.dims();
    let n = w * h;
    let (i0, i45, i90, i135) = (
        stack.i0.as_slice(),
        stack.i45.as_slice(),
        stack.i90.as_slice(),
        stack.i135.as_slice(),
    );
    if [i45.len(), i90.len(), i135.len()].iter().any(|&l| l != n) {
        return Err(Error::DimensionMismatch("channel stack planes differ".into()));
    }
    let mut s0 = vec![0.0; n];
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    let row = w.max(1);
    s0.par_chunks_mut(row)
        .zip(s1.par_chunks_mut(row))
        .zip(s2.par_chunks_mut(row))
        .enumerate()
        .for_each(|(y, ((a, b), c))| {
            let span = y * row..y * row + a.len();
            let (p0, p45) = (&i0[span.clone()], &i45[span.clone()]);
            let (p90, p135) = (&i90[span.clone()], &i135[span]);
            for x in 0..a.len() {
                [a[x], b[x], c[x]] = stokes_px(p0[x], p45[x], p90[x], p135[x]);
            }
        });
    Ok(StokesImage {
        s0: Plane::from_vec(w, h, s0)?,
        s1: Plane::from_vec(w, h, s1)?,
        s2: Plane::from_vec(w, h, s2)?,
        channel,
        validity: Plane::new(w, h, true),
    })
}

fn derive<F>(s: &StokesImage, f: F) -> MaskedPlane
where
    F: Fn(f64, f64, f64) -> Option<f64> + Sync,
{
    let (w, h) = s.dims();
    let (s0, s1, s2, valid) = (
        s.s0.as_slice(),
        s.s1.as_slice(),
        s.s2.as_slice(),
        s.validity.as_slice(),
    );
    let (values, valid): (Vec<f64>, Vec<bool>) = (0..w * h)
        .into_par_iter()
        .map(|i| match f(s0[i], s1[i], s2[i]) {
            Some(v) => (v, valid[i]),
            None => (0.0, false),
        })
        .unzip();
    MaskedPlane {
        values: Plane::from_vec(w, h, values).expect("dims from input"),
        valid: Plane::from_vec(w, h, valid).expect("dims from input"),
    }
}

/// Degree of linear polarization. Pixels with `S0 < eps` read 0 and are invalid.
pub fn dolp(s: &StokesImage, eps: f64) -> MaskedPlane {
    derive(s, |a, b, c| dolp_px(a, b, c, eps))
}

/// Angle of linear polarization in degrees. Pixels with `S0 < eps` or with
/// no linear component read 0 and are invalid.
pub fn aolp(s: &StokesImage, eps: f64) -> MaskedPlane {
    derive(s, |a, b, c| aolp_px(a, b, c, eps))
}

/// Diffuse (unpolarized) intensity.
pub fn i_dif(s: &StokesImage) -> Plane<f64> {
    let (w, h) = s.dims();
    let (s0, s1, s2) = (s.s0.as_slice(), s.s1.as_slice(), s.s2.as_slice());
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| idif_px(s0[i], s1[i], s2[i]))
        .collect();
    Plane::from_vec(w, h, data).expect("dims from input")
}

/// DoLP, AoLP and diffuse intensity in one pass; each matches its
/// standalone function.
pub fn polar_planes(s: &StokesImage, eps: f64) -> PolarPlanes {
    let (w, h) = s.dims();
    let n = w * h;
    let (s0, s1, s2, mask) = (
        s.s0.as_slice(),
        s.s1.as_slice(),
        s.s2.as_slice(),
        s.validity.as_slice(),
    );
    let mut dolp = vec![0.0; n];
    let mut aolp = vec![0.0; n];
    let mut idif = vec![0.0; n];
    let mut dolp_ok = vec![false; n];
    let mut aolp_ok = vec![false; n];
    let row = w.max(1);
    dolp.par_chunks_mut(row)
        .zip(aolp.par_chunks_mut(row))
        .zip(idif.par_chunks_mut(row))
        .zip(dolp_ok.par_chunks_mut(row))
        .zip(aolp_ok.par_chunks_mut(row))
        .enumerate()
        .for_each(|(y, ((((d, a), di), dv), av))| {
            for x in 0..d.len() {
                let i = y * row + x;
                let (p0, p1, p2) = (s0[i], s1[i], s2[i]);
                if let Some(v) = dolp_px(p0, p1, p2, eps) {
                    d[x] = v;
                    dv[x] = mask[i];
                }
                if let Some(v) = aolp_px(p0, p1, p2, eps) {
                    a[x] = v;
                    av[x] = mask[i];
                }
                di[x] = idif_px(p0, p1, p2);
            }
        });
    let plane = |v| Plane::from_vec(w, h, v).expect("dims from input");
    PolarPlanes {
        dolp: MaskedPlane {
            values: plane(dolp),
            valid: Plane::from_vec(w, h, dolp_ok).expect("dims from input"),
        },
        aolp: MaskedPlane {
            values: plane(aolp),
            valid: Plane::from_vec(w, h, aolp_ok).expect("dims from input"),
        },
        idif: plane(idif),
    }
}

/// Default degeneracy threshold: one code step.
pub fn default_eps(bit_depth: u32) -> f64 {
    1.0 / (1u64 << bit_depth) as f64
}

/// Stokes images for all four channels plus monochrome-derived planes.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesSet {
    pub r: StokesImage,
    pub g: StokesImage,
    pub b: StokesImage,
    pub m: StokesImage,
    pub polar: PolarPlanes,
}

impl StokesSet {
    pub fn get(&self, channel: Channel) -> &StokesImage {
        match channel {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
            Channel::M => &self.m,
        }
    }
}

/// Computes Stokes for R, G, B and M; DoLP, AoLP and diffuse intensity come
/// from M alone. `validity` (typically the saturation mask) is attached to
/// every Stokes image.
pub fn compute_all(
    stacks: [&ChannelStack; 4],
    validity: Option<&ValidityMask>,
    eps: f64,
) -> Result<StokesSet> {
    let mut images = Vec::with_capacity(4);
    for (stack, channel) in stacks.into_iter().zip(Channel::ALL) {
        let mut s = stokes_from_intensities(stack, channel)?;
        if let Some(mask) = validity {
            s = s.with_validity(mask.clone())?;
        }
        images.push(s);
    }
    images[0].s0.ensure_same_dims(&images[1].s0)?;
    images[0].s0.ensure_same_dims(&images[2].s0)?;
    images[0].s0.ensure_same_dims(&images[3].s0)?;
    let m = images.pop().expect("four images");
    let b = images.pop().expect("four images");
    let g = images.pop().expect("four images");
    let r = images.pop().expect("four images");
    let polar = polar_planes(&m, eps);
    Ok(StokesSet { r, g, b, m, polar })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_of(i: [f64; 4]) -> ChannelStack {
        let p = |v| Plane::new(2, 2, v);
        ChannelStack::new(p(i[0]), p(i[1]), p(i[2]), p(i[3])).unwrap()
    }

    fn single(s: [f64; 3]) -> StokesImage {
        let p = |v| Plane::new(1, 1, v);
        StokesImage {
            s0: p(s[0]),
            s1: p(s[1]),
            s2: p(s[2]),
            channel: Channel::M,
            validity: Plane::new(1, 1, true),
        }
    }

    #[test]
    fn stokes_examples() {
        let cases = [
            ([0.5, 0.5, 0.5, 0.5], [1.0, 0.0, 0.0]),
            ([1.0, 0.5, 0.0, 0.5], [1.0, 1.0, 0.0]),
            ([0.5, 1.0, 0.5, 0.0], [1.0, 0.0, 1.0]),
        ];
        for (i, want) in cases {
            let s = stokes_from_intensities(&stack_of(i), Channel::G).unwrap();
            assert_eq!(s.at(1, 1), want);
            assert_eq!(s.channel, Channel::G);
        }
    }

    #[test]
    fn fused_polar_planes_match_standalone() {
        let vals: [f64; 6] = [0.0, 0.3, -0.4, 1e-7, 0.9, -0.2];
        let s0 = Plane::from_fn(3, 2, |x, y| vals[(x + 3 * y) % 6].abs() + 0.1 * x as f64);
        let s1 = Plane::from_fn(3, 2, |x, y| vals[(x + y) % 6] / 2.0);
        let s2 = Plane::from_fn(3, 2, |x, y| vals[(2 * x + y) % 6] / 3.0);
        let mut validity = Plane::new(3, 2, true);
        validity.set(1, 1, false);
        let s = StokesImage { s0, s1, s2, channel: Channel::M, validity };
        let fused = polar_planes(&s, 1e-3);
        assert_eq!(fused.dolp, dolp(&s, 1e-3));
        assert_eq!(fused.aolp, aolp(&s, 1e-3));
        assert_eq!(fused.idif, i_dif(&s));
    }

    #[test]
    fn stack_dimension_mismatch() {
        let r = ChannelStack::new(
            Plane::new(2, 2, 0.0),
            Plane::new(2, 2, 0.0),
            Plane::new(2, 3, 0.0),
            Plane::new(2, 2, 0.0),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dolp_examples() {
        assert_eq!(dolp_px(1.0, 0.0, 0.0, 1e-6), Some(0.0));
        assert_eq!(dolp_px(1.0, 1.0, 0.0, 1e-6), Some(1.0));
        assert_eq!(dolp_px(1.0, 0.6, 0.8, 1e-6), Some(1.0));
        assert!((dolp_px(1.0, 0.3, 0.4, 1e-6).unwrap() - 0.5).abs() < 1e-15);
        // noise pushing the polarized part above S0 is clamped
        assert_eq!(dolp_px(1.0, 1.1, 0.0, 1e-6), Some(1.0));
        let d = dolp(&single([1e-9, 1e-9, 0.0]), 1e-6);
        assert_eq!(d.values.get(0, 0), 0.0);
        assert!(!d.valid.get(0, 0));
    }

    #[test]
    fn aolp_examples() {
        assert_eq!(aolp_px(1.0, 1.0, 0.0, 1e-6), Some(0.0));
        assert!((aolp_px(1.0, 0.0, 1.0, 1e-6).unwrap() - 45.0).abs() < 1e-12);
        assert!((aolp_px(1.0, -1.0, 0.0, 1e-6).unwrap() - 90.0).abs() < 1e-12);
        assert!((aolp_px(1.0, 0.0, -1.0, 1e-6).unwrap() - 135.0).abs() < 1e-12);
        assert_eq!(aolp_px(1.0, 1.0, -0.0, 1e-6), Some(0.0));
        let a = aolp(&single([1.0, 0.0, 0.0]), 1e-6);
        assert_eq!(a.values.get(0, 0), 0.0);
        assert!(!a.valid.get(0, 0));
    }

    #[test]
    fn wrap_stays_in_range() {
        for d in [-1e-300, -180.0, 180.0, 359.999, -0.0, 90.0] {
            let w = wrap_half_turn(d);
            assert!((0.0..180.0).contains(&w), "{d} -> {w}");
            assert!(w.is_sign_positive());
        }
    }

    #[test]
    fn idif_examples() {
        assert_eq!(idif_px(1.0, 0.0, 0.0), 0.5);
        assert_eq!(idif_px(1.0, 1.0, 0.0), 0.0);
        assert!((idif_px(1.0, 0.3, 0.4) - 0.25).abs() < 1e-15);
        assert_eq!(idif_px(1.0, 1.2, 0.0), 0.0);
    }

    #[test]
    fn saturated_pixels_stay_invalid() {
        let mut mask = Plane::new(2, 2, true);
        mask.set(1, 0, false);
        let s = stokes_from_intensities(&stack_of([0.9, 0.5, 0.1, 0.5]), Channel::M)
            .unwrap()
            .with_validity(mask)
            .unwrap();
        let d = dolp(&s, 1e-6);
        assert!(!d.valid.get(1, 0));
        assert!(d.valid.get(0, 0));
        assert!((d.values.get(1, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn compute_all_uses_mono_for_polar_planes() {
        let r = stack_of([1.0, 0.5, 0.0, 0.5]);
        let m = stack_of([0.5, 1.0, 0.5, 0.0]);
        let set = compute_all([&r, &r, &r, &m], None, 1e-6).unwrap();
        assert!((set.polar.aolp.values.get(0, 0) - 45.0).abs() < 1e-12);
        assert_eq!(set.get(Channel::R).s1.get(0, 0), 1.0);
        let bad = ChannelStack::new(
            Plane::new(1, 1, 0.0),
            Plane::new(1, 1, 0.0),
            Plane::new(1, 1, 0.0),
            Plane::new(1, 1, 0.0),
        )
        .unwrap();
        assert!(compute_all([&r, &r, &r, &bad], None, 1e-6).is_err());
    }

    #[test]
    fn default_eps_is_one_code() {
        assert_eq!(default_eps(8), 1.0 / 256.0);
        assert_eq!(default_eps(16), 1.0 / 65536.0);
    }
}
