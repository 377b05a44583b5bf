//! Spectral radiance to CIE XYZ and display sRGB.

use thiserror::Error;

use crate::spectral::{parse_table, resample_columns, Spectrum, SpectralError, WavelengthGrid};

const CIE1931_TABLE: &str = include_str!("../data/cie1931_2deg_5nm.csv");
const D65_TABLE: &str = include_str!("../data/cie_d65_5nm.csv");

/// Linear sRGB from XYZ (D65 reference white).
const XYZ_TO_LINEAR_SRGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

#[derive(Debug, Error)]
pub enum ColorError {
    #[error("spectrum and observer are sampled on different wavelength grids")]
    GridMismatch,
    #[error("chromaticity undefined for X + Y + Z = 0")]
    ZeroSum,
    #[error(transparent)]
    Table(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Xyz { x, y, z }
    }

    pub fn scaled(self, s: f64) -> Xyz {
        Xyz::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Color-matching functions tabulated on a wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverCmf {
    grid: WavelengthGrid,
    xbar: Vec<f64>,
    ybar: Vec<f64>,
    zbar: Vec<f64>,
}

impl ObserverCmf {
    /// CIE 1931 2° standard observer, resampled onto `grid` (exact on the
    /// default 5 nm grid).
    pub fn cie1931(grid: &WavelengthGrid) -> Self {
        let rows = parse_table(CIE1931_TABLE, 3, 1).expect("bundled CMF table is well formed");
        let mut cols = resample_columns(&rows, grid);
        let zbar = cols.pop().unwrap();
        let ybar = cols.pop().unwrap();
        let xbar = cols.pop().unwrap();
        ObserverCmf { grid: *grid, xbar, ybar, zbar }
    }

    /// Parses a `wavelength,xbar,ybar,zbar` table.
    pub fn from_table(text: &str, grid: &WavelengthGrid) -> Result<Self, ColorError> {
        let rows = parse_table(text, 3, 1)?;
        let mut cols = resample_columns(&rows, grid);
        let zbar = cols.pop().unwrap();
        let ybar = cols.pop().unwrap();
        let xbar = cols.pop().unwrap();
        Ok(ObserverCmf { grid: *grid, xbar, ybar, zbar })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn xbar(&self) -> &[f64] {
        &self.xbar
    }

    pub fn ybar(&self) -> &[f64] {
        &self.ybar
    }

    pub fn zbar(&self) -> &[f64] {
        &self.zbar
    }
}

/// CIE standard illuminant D65 relative power on `grid`.
pub fn d65_illuminant(grid: &WavelengthGrid) -> Spectrum {
    let rows = parse_table(D65_TABLE, 1, 1).expect("bundled D65 table is well formed");
    let values = resample_columns(&rows, grid).swap_remove(0);
    Spectrum::new(*grid, values).expect("D65 table is non-negative")
}

/// Rectangle-rule integration against the color-matching functions.
pub fn spectrum_to_xyz(radiance: &Spectrum, cmf: &ObserverCmf) -> Result<Xyz, ColorError> {
    if *radiance.grid() != cmf.grid {
        return Err(ColorError::GridMismatch);
    }
    Ok(integrate(radiance.values(), cmf))
}

pub(crate) fn integrate(values: &[f64], cmf: &ObserverCmf) -> Xyz {
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        x += v * cmf.xbar[i];
        y += v * cmf.ybar[i];
        z += v * cmf.zbar[i];
    }
    let d = cmf.grid.step_nm();
    Xyz::new(x * d, y * d, z * d)
}

pub fn chromaticity(xyz: Xyz) -> Result<(f64, f64), ColorError> {
    let sum = xyz.x + xyz.y + xyz.z;
    if sum == 0.0 || !sum.is_finite() {
        return Err(ColorError::ZeroSum);
    }
    Ok((xyz.x / sum, xyz.y / sum))
}

/// Linear sRGB before clamping, after dividing by `white_luminance`.
pub fn xyz_to_linear_srgb(xyz: Xyz, white_luminance: f64) -> [f64; 3] {
    let v = [xyz.x / white_luminance, xyz.y / white_luminance, xyz.z / white_luminance];
    let m = &XYZ_TO_LINEAR_SRGB;
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

pub fn srgb_encode(linear: f64) -> f64 {
    if linear <= 0.0031308 {
        12.92 * linear
    } else {
        1.055 * linear.powf(1.0 / 2.4) - 0.055
    }
}

/// Display-encoded sRGB in `[0, 1]` per channel (per-channel gamut clamp).
pub fn xyz_to_srgb(xyz: Xyz, white_luminance: f64) -> [f64; 3] {
    xyz_to_linear_srgb(xyz, white_luminance).map(|c| srgb_encode(c.clamp(0.0, 1.0)))
}

pub fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmf() -> ObserverCmf {
        ObserverCmf::cie1931(&WavelengthGrid::visible())
    }

    #[test]
    fn ybar_peaks_near_555() {
        let c = cmf();
        let (imax, _) = c
            .ybar()
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        let peak = c.grid().wavelength(imax);
        assert!((550.0..=560.0).contains(&peak), "peak at {peak}");
    }

    #[test]
    fn zero_spectrum_is_black() {
        let s = Spectrum::zero(WavelengthGrid::visible());
        assert_eq!(spectrum_to_xyz(&s, &cmf()).unwrap(), Xyz::default());
        assert_eq!(xyz_to_srgb(Xyz::default(), 1.0), [0.0; 3]);
    }

    #[test]
    fn equal_energy_is_achromatic() {
        let s = Spectrum::constant(WavelengthGrid::visible(), 1.0);
        let xyz = spectrum_to_xyz(&s, &cmf()).unwrap();
        let (x, y) = chromaticity(xyz).unwrap();
        // independent numpy summation of the shipped table: 0.333334, 0.333331
        assert!((x - 0.33333428637674695).abs() < 1e-9);
        assert!((y - 0.3333312003193014).abs() < 1e-9);
        let doubled = spectrum_to_xyz(&s.scaled(2.0), &cmf()).unwrap();
        assert_eq!(doubled, xyz.scaled(2.0));
    }

    #[test]
    fn chromaticity_of_white_and_zero() {
        let (x, y) = chromaticity(Xyz::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!((x, y), (1.0 / 3.0, 1.0 / 3.0));
        assert_eq!(chromaticity(Xyz::new(2.0, 2.0, 2.0)).unwrap(), (x, y));
        assert!(matches!(chromaticity(Xyz::default()), Err(ColorError::ZeroSum)));
    }

    #[test]
    fn monochromatic_red_clamps_green_and_blue() {
        let g = WavelengthGrid::visible();
        let i700 = g.nearest_index(700.0);
        let s = Spectrum::from_fn(g, |nm| if nm == 700.0 { 1.0 } else { 0.0 });
        let xyz = spectrum_to_xyz(&s, &cmf()).unwrap();
        let lin = xyz_to_linear_srgb(xyz, xyz.y);
        // numpy: M @ (cmf[700] / ybar[700]) = (7.43628, -0.80807, -0.04994)
        assert!((lin[0] - 7.43628114).abs() < 1e-6);
        assert!((lin[1] + 0.80806681).abs() < 1e-6);
        assert!((lin[2] + 0.04993899).abs() < 1e-6);
        let rgb = xyz_to_srgb(xyz, xyz.y);
        assert!((rgb[0] - 1.0).abs() < 1e-12 && rgb[1] == 0.0 && rgb[2] == 0.0);
        assert!(cmf().xbar()[i700] > 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let other = WavelengthGrid::new(400.0, 10.0, 31).unwrap();
        assert!(matches!(
            spectrum_to_xyz(&Spectrum::zero(other), &cmf()),
            Err(ColorError::GridMismatch)
        ));
    }
}
