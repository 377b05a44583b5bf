//! Directional sun: Planck base spectrum attenuated by Rayleigh scattering
//! along a plane-parallel atmosphere.

use thiserror::Error;

use crate::math::Vec3;
use crate::spectral::{Spectrum, WavelengthGrid};

const PLANCK_H: f64 = 6.626_070_15e-34;
const LIGHT_C: f64 = 2.997_924_58e8;
const BOLTZMANN_K: f64 = 1.380_649e-23;

/// Airmass cap near the horizon.
pub const MAX_AIRMASS: f64 = 40.0;
pub const DEFAULT_SUN_TEMPERATURE_K: f64 = 5778.0;
pub const DEFAULT_TAU_550: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SunError {
    #[error("temperature {0} K must be positive")]
    Temperature(f64),
    #[error("sun elevation {0} deg is at or below the horizon")]
    BelowHorizon(f64),
    #[error("sun elevation {0} deg exceeds 90 deg")]
    Elevation(f64),
    #[error("invalid atmosphere parameter: {0}")]
    Atmosphere(String),
}

/// Ideal directional source.
#[derive(Debug, Clone, PartialEq)]
pub struct SunLight {
    /// Unit vector pointing from the sun toward the scene.
    pub direction: Vec3,
    pub emission: Spectrum,
}

impl SunLight {
    pub fn new(direction: Vec3, emission: Spectrum) -> Self {
        SunLight { direction: direction.normalized(), emission }
    }

    /// Unit vector from a surface toward the sun.
    pub fn to_light(&self) -> Vec3 {
        -self.direction
    }
}

/// Sky placement and atmosphere of a sun, as written in scene files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunParams {
    pub elevation_deg: f64,
    /// Measured from +z toward +x.
    pub azimuth_deg: f64,
    pub temperature_k: f64,
    pub tau_550: f64,
    pub power_scale: f64,
}

impl SunParams {
    /// Direction of travel of sunlight (y is up).
    pub fn direction(&self) -> Vec3 {
        let (el, az) = (self.elevation_deg.to_radians(), self.azimuth_deg.to_radians());
        -Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    pub fn to_light(&self, grid: &WavelengthGrid) -> Result<SunLight, SunError> {
        let emission = solar_spectrum(grid, self.temperature_k, self.elevation_deg, self.tau_550, self.power_scale)?;
        Ok(SunLight::new(self.direction(), emission))
    }
}

fn planck(nm: f64, temperature_k: f64) -> f64 {
    let lambda = nm * 1e-9;
    let a = 2.0 * PLANCK_H * LIGHT_C * LIGHT_C / lambda.powi(5);
    let b = PLANCK_H * LIGHT_C / (lambda * BOLTZMANN_K * temperature_k);
    a / b.exp_m1()
}

/// Planck spectral radiance on `grid`, normalized so its largest sample is 1.
pub fn blackbody_spectrum(grid: &WavelengthGrid, temperature_k: f64) -> Result<Spectrum, SunError> {
    if !(temperature_k > 0.0) || !temperature_k.is_finite() {
        return Err(SunError::Temperature(temperature_k));
    }
    let raw = Spectrum::from_fn(*grid, |nm| planck(nm, temperature_k));
    let peak = raw.max_value();
    Ok(raw.scaled(1.0 / peak))
}

/// Direct-beam transmission `exp(-tau_550 (550/lambda)^4 airmass)`.
pub fn rayleigh_transmission(wavelength_nm: f64, airmass: f64, tau_550: f64) -> f64 {
    (-tau_550 * (550.0 / wavelength_nm).powi(4) * airmass).exp()
}

/// Plane-parallel relative airmass `1 / sin(elevation)`, capped at
/// [`MAX_AIRMASS`].
pub fn airmass(sun_elevation_deg: f64) -> Result<f64, SunError> {
    if !(sun_elevation_deg > 0.0) {
        return Err(SunError::BelowHorizon(sun_elevation_deg));
    }
    if sun_elevation_deg > 90.0 {
        return Err(SunError::Elevation(sun_elevation_deg));
    }
    Ok((1.0 / sun_elevation_deg.to_radians().sin()).min(MAX_AIRMASS))
}

pub fn solar_spectrum_at_airmass(
    grid: &WavelengthGrid,
    temperature_k: f64,
    airmass: f64,
    tau_550: f64,
    power_scale: f64,
) -> Result<Spectrum, SunError> {
    if !(tau_550 >= 0.0) {
        return Err(SunError::Atmosphere(format!("tau_550 = {tau_550} must be >= 0")));
    }
    if !(power_scale >= 0.0) {
        return Err(SunError::Atmosphere(format!("power scale {power_scale} must be >= 0")));
    }
    if !(airmass >= 1.0) {
        return Err(SunError::Atmosphere(format!("airmass {airmass} must be >= 1")));
    }
    let base = blackbody_spectrum(grid, temperature_k)?;
    let values = grid
        .wavelengths()
        .zip(base.values())
        .map(|(nm, b)| power_scale * b * rayleigh_transmission(nm, airmass, tau_550))
        .collect();
    Ok(Spectrum::new(*grid, values).expect("solar samples are non-negative"))
}

/// Sun emission after the atmosphere at the given elevation.
pub fn solar_spectrum(
    grid: &WavelengthGrid,
    temperature_k: f64,
    sun_elevation_deg: f64,
    tau_550: f64,
    power_scale: f64,
) -> Result<Spectrum, SunError> {
    solar_spectrum_at_airmass(grid, temperature_k, airmass(sun_elevation_deg)?, tau_550, power_scale)
}
