//! Analytic polarization models for a camera above open water: Brewster's
//! angle, Fresnel reflection DoLP, single-scattering skylight DoLP, and the
//! flat-water mapping from ground distance to angle of incidence.

use crate::error::{Error, Result};

/// A planar boundary between two dielectrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSpec {
    /// Refractive index on the incident side.
    pub n1: f64,
    /// Refractive index on the transmitted side.
    pub n2: f64,
}

impl InterfaceSpec {
    pub const AIR_WATER: InterfaceSpec = InterfaceSpec { n1: 1.0, n2: 1.33 };

    pub fn new(n1: f64, n2: f64) -> Result<Self> {
        if !(n1 > 0.0 && n2 > 0.0 && n1.is_finite() && n2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "refractive indices must be positive, got n1={n1}, n2={n2}"
            )));
        }
        Ok(Self { n1, n2 })
    }
}

/// Camera mounted `height_m` meters above a flat water surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGeometry {
    pub height_m: f64,
}

impl CameraGeometry {
    pub fn new(height_m: f64) -> Result<Self> {
        if !(height_m > 0.0 && height_m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "camera height must be positive, got {height_m}"
            )));
        }
        Ok(Self { height_m })
    }
}

/// Incidence angle (degrees) at which reflected light is fully polarized.
pub fn brewster_angle(iface: InterfaceSpec) -> f64 {
    (iface.n2 / iface.n1).atan().to_degrees()
}

/// Fresnel power reflectances `(Rs, Rp)` at incidence `theta_i_deg`.
pub fn fresnel_reflectances(theta_i_deg: f64, iface: InterfaceSpec) -> Result<(f64, f64)> {
    if !(0.0..90.0).contains(&theta_i_deg) {
        return Err(Error::InvalidArgument(format!(
            "incidence angle {theta_i_deg} outside [0, 90)"
        )));
    }
    let ti = theta_i_deg.to_radians();
    let sin_t = iface.n1 / iface.n2 * ti.sin();
    if sin_t > 1.0 {
        return Err(Error::Evanescent {
            theta_deg: theta_i_deg,
        });
    }
    let (cos_i, cos_t) = (ti.cos(), (1.0 - sin_t * sin_t).sqrt());
    let (n1, n2) = (iface.n1, iface.n2);
    let rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    let rp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i);
    Ok((rs * rs, rp * rp))
}

/// Degree of linear polarization of initially unpolarized light after
/// specular reflection: `(Rs - Rp) / (Rs + Rp)`.
pub fn fresnel_dolp(theta_i_deg: f64, iface: InterfaceSpec) -> Result<f64> {
    let (rs, rp) = fresnel_reflectances(theta_i_deg, iface)?;
    let total = rs + rp;
    if total == 0.0 {
        // matched indices: nothing is reflected
        return Ok(0.0);
    }
    Ok(((rs - rp) / total).clamp(0.0, 1.0))
}

/// Angle from the surface normal of the camera ray that meets the water
/// `distance_m` meters away horizontally.
pub fn incidence_from_distance(geom: CameraGeometry, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok((distance_m / geom.height_m).atan().to_degrees())
}

/// Single-scattering Rayleigh DoLP, `d_max · sin²θ / (1 + cos²θ)`.
pub fn rayleigh_dolp(scatter_angle_deg: f64, d_max: f64) -> Result<f64> {
    if !(0.0..=180.0).contains(&scatter_angle_deg) {
        return Err(Error::InvalidArgument(format!(
            "scattering angle {scatter_angle_deg} outside [0, 180]"
        )));
    }
    if !(d_max > 0.0 && d_max <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "d_max must be in (0, 1], got {d_max}"
        )));
    }
    let (s, c) = scatter_angle_deg.to_radians().sin_cos();
    Ok(d_max * s * s / (1.0 + c * c))
}

/// One row of a reflection-DoLP profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub distance_m: f64,
    pub theta_i_deg: f64,
    pub dolp: f64,
}

/// Reflection DoLP at each horizontal distance.
pub fn dolp_distance_profile(
    geom: CameraGeometry,
    iface: InterfaceSpec,
    distances: &[f64],
) -> Result<Vec<ProfilePoint>> {
    distances
        .iter()
        .map(|&d| {
            let theta = incidence_from_distance(geom, d)?;
            Ok(ProfilePoint {
                distance_m: d,
                theta_i_deg: theta,
                dolp: fresnel_dolp(theta, iface)?,
            })
        })
        .collect()
}

/// `start, start+step, …` up to and including `end` (within half a step).
///
/// Points are computed as `start + i·step` to avoid accumulated drift.
pub fn distance_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::InvalidArgument(format!(
            "bad grid start={start} end={end} step={step}"
        )));
    }
    let n = ((end - start) / step + 0.5).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Point with the largest DoLP; the first one wins on ties.
pub fn profile_peak(profile: &[ProfilePoint]) -> Option<ProfilePoint> {
    profile
        .iter()
        .copied()
        .fold(None, |best: Option<ProfilePoint>, p| match best {
            Some(b) if b.dolp >= p.dolp => Some(b),
            _ => Some(p),
        })
}

/// CSV with header `d,theta_i_deg,dolp`.
pub fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut out = String::from("d,theta_i_deg,dolp\n");
    for p in profile {
        out.push_str(&format!("{},{},{}\n", p.distance_m, p.theta_i_deg, p.dolp));
    }
    out
}
