//! XYZ buffers to 8-bit sRGB files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use spectralium::colorimetry::{to_u8, xyz_to_srgb, Xyz};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    /// From the file extension, case-insensitively.
    pub fn from_path(path: &Path) -> Option<ImageFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(ImageFormat::Png),
            "ppm" => Some(ImageFormat::Ppm),
            _ => None,
        }
    }
}

/// Row-major interleaved RGB bytes.
pub fn to_rgb8(xyz: &[Xyz], white_luminance: f64) -> Vec<u8> {
    xyz.iter().flat_map(|p| xyz_to_srgb(*p, white_luminance).map(to_u8)).collect()
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(rgb)?;
        w.finish()?;
    }
    Ok(out)
}

pub fn write_image(path: &Path, format: ImageFormat, width: usize, height: usize, rgb: &[u8]) -> std::io::Result<()> {
    let bytes = match format {
        ImageFormat::Ppm => encode_ppm(width, height, rgb),
        ImageFormat::Png => encode_png(width, height, rgb).map_err(std::io::Error::other)?,
    };
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()
}
