//! Wavelength-sampled spectra, complex indices of refraction, Fresnel
//! power coefficients and spectral transmittance maps.
//!
//! Every spectrum in a computation lives on one [`WavelengthGrid`]; the
//! default grid covers 380–780 nm in 5 nm steps (81 samples).

use std::fs;
use std::ops::{Add, Mul};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("wavelength grids differ")]
    GridMismatch,
    #[error("absorbing media (k > 0) do not transmit through a Fresnel interface")]
    UnsupportedTransmission,
    #[error("invalid wavelength grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T, E = SpectralError> = std::result::Result<T, E>;

/// Uniform wavelength sampling `start_nm + i * step_nm`, `i < count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthGrid {
    start_nm: f64,
    step_nm: f64,
    count: usize,
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        WavelengthGrid::visible()
    }
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if !(step_nm > 0.0) || !step_nm.is_finite() {
            return Err(SpectralError::InvalidGrid(format!("step {step_nm} nm must be > 0")));
        }
        if count < 2 {
            return Err(SpectralError::InvalidGrid(format!("count {count} must be >= 2")));
        }
        if !(start_nm > 0.0) || !start_nm.is_finite() {
            return Err(SpectralError::InvalidGrid(format!("start {start_nm} nm must be > 0")));
        }
        Ok(WavelengthGrid { start_nm, step_nm, count })
    }

    /// 380–780 nm at 5 nm.
    pub const fn visible() -> Self {
        WavelengthGrid { start_nm: 380.0, step_nm: 5.0, count: 81 }
    }

    pub fn start_nm(&self) -> f64 {
        self.start_nm
    }

    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.count - 1)
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.wavelength(i))
    }

    /// Index of the sample nearest to `nm`, clamped into the grid.
    pub fn nearest_index(&self, nm: f64) -> usize {
        let i = ((nm - self.start_nm) / self.step_nm).round();
        (i.max(0.0) as usize).min(self.count - 1)
    }
}

/// Non-negative samples on a [`WavelengthGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(SpectralError::Format(format!(
                "expected {} samples, got {}",
                grid.count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SpectralError::Domain(format!("spectral value {v} is not a finite non-negative number")));
        }
        Ok(Spectrum { grid, values })
    }

    pub fn constant(grid: WavelengthGrid, value: f64) -> Self {
        Spectrum { grid, values: vec![value; grid.count()] }
    }

    pub fn zero(grid: WavelengthGrid) -> Self {
        Spectrum::constant(grid, 0.0)
    }

    pub fn from_fn(grid: WavelengthGrid, f: impl Fn(f64) -> f64) -> Self {
        Spectrum { grid, values: grid.wavelengths().map(f).collect() }
    }

    /// Builds a spectrum from a function of the sample index.
    pub fn from_fn_indexed(grid: WavelengthGrid, f: impl Fn(usize) -> f64) -> Self {
        Spectrum { grid, values: (0..grid.count()).map(f).collect() }
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_black(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// True when every sample lies in `[0, 1]`.
    pub fn is_unit_bounded(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum { grid: self.grid, values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Spectrum {
        Spectrum { grid: self.grid, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn add_assign(&mut self, o: &Spectrum) {
        for (a, b) in self.values.iter_mut().zip(&o.values) {
            *a += b;
        }
    }

    pub fn mul_assign(&mut self, o: &Spectrum) {
        for (a, b) in self.values.iter_mut().zip(&o.values) {
            *a *= b;
        }
    }

    /// Value at an arbitrary wavelength by linear interpolation, clamped at
    /// the grid ends.
    pub fn at_wavelength(&self, nm: f64) -> f64 {
        let x = (nm - self.grid.start_nm) / self.grid.step_nm;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

impl Add for &Spectrum {
    type Output = Spectrum;
    fn add(self, o: &Spectrum) -> Spectrum {
        let mut s = self.clone();
        s.add_assign(o);
        s
    }
}

impl Mul for &Spectrum {
    type Output = Spectrum;
    fn mul(self, o: &Spectrum) -> Spectrum {
        let mut s = self.clone();
        s.mul_assign(o);
        s
    }
}

/// Complex index of refraction `n + ik = n (1 + i kappa)` per wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexIOR {
    grid: WavelengthGrid,
    n: Vec<f64>,
    k: Vec<f64>,
}

impl ComplexIOR {
    pub fn new(grid: WavelengthGrid, n: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        if n.len() != grid.count() || k.len() != grid.count() {
            return Err(SpectralError::Format(format!(
                "IOR needs {} samples of n and k, got {} and {}",
                grid.count(),
                n.len(),
                k.len()
            )));
        }
        if let Some(v) = n.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(SpectralError::Domain(format!("optical index n = {v} must be > 0")));
        }
        if let Some(v) = k.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SpectralError::Domain(format!("absorption index k = {v} must be >= 0")));
        }
        Ok(ComplexIOR { grid, n, k })
    }

    pub fn constant(grid: WavelengthGrid, n: f64, k: f64) -> Result<Self> {
        ComplexIOR::new(grid, vec![n; grid.count()], vec![k; grid.count()])
    }

    /// Vacuum / air.
    pub fn vacuum(grid: WavelengthGrid) -> Self {
        ComplexIOR { grid, n: vec![1.0; grid.count()], k: vec![0.0; grid.count()] }
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn complex(&self, i: usize) -> Complex64 {
        Complex64::new(self.n[i], self.k[i])
    }

    /// Index of absorption `kappa = k / n`.
    pub fn kappa(&self, i: usize) -> f64 {
        self.k[i] / self.n[i]
    }

    pub fn is_dielectric(&self) -> bool {
        self.k.iter().all(|k| *k == 0.0)
    }

    /// Optical index at the grid sample nearest `nm`.
    pub fn n_at(&self, nm: f64) -> f64 {
        self.n[self.grid.nearest_index(nm)]
    }
}

/// Unpolarized power reflectance at a smooth interface between a
/// non-absorbing medium of index `n1` and a medium of complex index `n2`.
///
/// Uses the complex-amplitude s/p coefficients; the transmitted-side
/// `n2 cos(theta_t)` is taken on the principal square-root branch, which
/// yields the evanescent solution past the critical angle and the decaying
/// wave inside conductors.
pub fn fresnel_power_reflectance(n1: f64, n2: Complex64, cos_i: f64) -> f64 {
    if n2 == Complex64::new(n1, 0.0) {
        return 0.0;
    }
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin2_i = (1.0 - cos_i * cos_i).max(0.0);
    let n2_sq = n2 * n2;
    let n2_cos_t = (n2_sq - n1 * n1 * sin2_i).sqrt();
    let a = Complex64::new(n1 * cos_i, 0.0);
    let rs_den = a + n2_cos_t;
    let rp_num = n2_sq * cos_i - n2_cos_t * n1;
    let rp_den = n2_sq * cos_i + n2_cos_t * n1;
    if rs_den.norm_sqr() == 0.0 || rp_den.norm_sqr() == 0.0 {
        // Grazing incidence on an index-matched interface: no interface at all.
        return 0.0;
    }
    let rs = (a - n2_cos_t) / rs_den;
    let rp = rp_num / rp_den;
    (0.5 * (rs.norm_sqr() + rp.norm_sqr())).clamp(0.0, 1.0)
}

fn check_interface(outside: &ComplexIOR, inside: &ComplexIOR, cos_theta_i: f64, wavelength_index: usize) -> Result<()> {
    if outside.grid != inside.grid {
        return Err(SpectralError::GridMismatch);
    }
    if wavelength_index >= outside.grid.count() {
        return Err(SpectralError::Domain(format!(
            "wavelength index {wavelength_index} outside grid of {} samples",
            outside.grid.count()
        )));
    }
    if !(cos_theta_i > 0.0) || cos_theta_i > 1.0 + 1e-12 {
        return Err(SpectralError::Domain(format!("cos(theta_i) = {cos_theta_i} outside (0, 1]")));
    }
    if outside.k[wavelength_index] != 0.0 {
        return Err(SpectralError::Domain("incident medium must be non-absorbing".into()));
    }
    Ok(())
}

/// Unpolarized Fresnel reflectance for light arriving from `ior_outside`.
pub fn fresnel_reflectance(
    ior_outside: &ComplexIOR,
    ior_inside: &ComplexIOR,
    cos_theta_i: f64,
    wavelength_index: usize,
) -> Result<f64> {
    check_interface(ior_outside, ior_inside, cos_theta_i, wavelength_index)?;
    Ok(fresnel_power_reflectance(
        ior_outside.n[wavelength_index],
        ior_inside.complex(wavelength_index),
        cos_theta_i,
    ))
}

/// Transmitted power fraction `1 - R` for a dielectric interior.
pub fn fresnel_transmittance(
    ior_outside: &ComplexIOR,
    ior_inside: &ComplexIOR,
    cos_theta_i: f64,
    wavelength_index: usize,
) -> Result<f64> {
    check_interface(ior_outside, ior_inside, cos_theta_i, wavelength_index)?;
    if ior_inside.k[wavelength_index] > 0.0 {
        return Err(SpectralError::UnsupportedTransmission);
    }
    Ok(1.0 - fresnel_reflectance(ior_outside, ior_inside, cos_theta_i, wavelength_index)?)
}

/// Cosine of the refraction angle from Snell's law, `None` past the
/// critical angle.
pub fn snell_cos_t(n1: f64, n2: f64, cos_i: f64) -> Option<f64> {
    let eta = n1 / n2;
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t >= 1.0 {
        None
    } else {
        Some((1.0 - sin2_t).sqrt())
    }
}

/// Row-major grid of transmittance spectra addressed by texture coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceMap {
    width: usize,
    height: usize,
    texels: Vec<Spectrum>,
}

impl TransmittanceMap {
    pub fn new(width: usize, height: usize, texels: Vec<Spectrum>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SpectralError::Format("transmittance map must be at least 1x1".into()));
        }
        if texels.len() != width * height {
            return Err(SpectralError::Format(format!(
                "transmittance map {width}x{height} needs {} texels, got {}",
                width * height,
                texels.len()
            )));
        }
        let grid = *texels[0].grid();
        for t in &texels {
            if *t.grid() != grid {
                return Err(SpectralError::GridMismatch);
            }
            if !t.is_unit_bounded() {
                return Err(SpectralError::Domain("transmittance texel outside [0, 1]".into()));
            }
        }
        Ok(TransmittanceMap { width, height, texels })
    }

    pub fn uniform(t: Spectrum) -> Result<Self> {
        TransmittanceMap::new(1, 1, vec![t])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texels(&self) -> &[Spectrum] {
        &self.texels
    }

    pub fn texel(&self, x: usize, y: usize) -> &Spectrum {
        &self.texels[y * self.width + x]
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.texels[0].grid()
    }
}

fn wrap_axis(coord: f64, size: usize) -> (usize, usize, f64) {
    let wrapped = coord - coord.floor();
    let x = wrapped * size as f64 - 0.5;
    let x0 = x.floor();
    let frac = x - x0;
    let i0 = (x0 as i64).rem_euclid(size as i64) as usize;
    (i0, (i0 + 1) % size, frac)
}

/// Bilinear lookup between texel centers with repeat wrapping.
pub fn sample_transmittance_map(map: &TransmittanceMap, u: f64, v: f64) -> Spectrum {
    let (x0, x1, fx) = wrap_axis(u, map.width);
    let (y0, y1, fy) = wrap_axis(v, map.height);
    let (a, b, c, d) = (map.texel(x0, y0), map.texel(x1, y0), map.texel(x0, y1), map.texel(x1, y1));
    let values = (0..a.len())
        .map(|i| {
            let top = a.values[i] + fx * (b.values[i] - a.values[i]);
            let bottom = c.values[i] + fx * (d.values[i] - c.values[i]);
            (top + fy * (bottom - top)).clamp(0.0, 1.0)
        })
        .collect();
    Spectrum { grid: *a.grid(), values }
}

/// One data row of a tabulated file: wavelength followed by value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub wavelength_nm: f64,
    pub values: Vec<f64>,
}

/// Parses comma-separated rows of `wavelength, v1, ..., v_columns`.
/// Blank lines and `#` comments are skipped. `first_line` offsets the
/// reported line numbers when the text is a block of a larger file.
pub fn parse_table(text: &str, columns: usize, first_line: usize) -> Result<Vec<TableRow>> {
    let mut rows: Vec<TableRow> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = first_line + i;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns + 1 {
            return Err(SpectralError::Parse {
                line: line_no,
                msg: format!("expected {} comma-separated fields, found {}", columns + 1, fields.len()),
            });
        }
        let mut nums = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| SpectralError::Parse {
                line: line_no,
                msg: format!("'{f}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(SpectralError::Parse { line: line_no, msg: format!("'{f}' is not finite") });
            }
            nums.push(v);
        }
        let wavelength_nm = nums[0];
        if let Some(prev) = rows.last() {
            if wavelength_nm <= prev.wavelength_nm {
                return Err(SpectralError::Format(format!(
                    "line {line_no}: wavelength {wavelength_nm} nm does not ascend (previous {} nm)",
                    prev.wavelength_nm
                )));
            }
        }
        rows.push(TableRow { wavelength_nm, values: nums[1..].to_vec() });
    }
    if rows.is_empty() {
        return Err(SpectralError::Format("no data rows".into()));
    }
    Ok(rows)
}

/// Linear interpolation of column `col` of `rows` at `nm`, clamped to the
/// end values outside the tabulated range.
pub fn interpolate_column(rows: &[TableRow], col: usize, nm: f64) -> f64 {
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    if nm <= first.wavelength_nm {
        return first.values[col];
    }
    if nm >= last.wavelength_nm {
        return last.values[col];
    }
    let hi = rows.partition_point(|r| r.wavelength_nm < nm);
    let b = &rows[hi];
    if b.wavelength_nm == nm {
        return b.values[col];
    }
    let a = &rows[hi - 1];
    let f = (nm - a.wavelength_nm) / (b.wavelength_nm - a.wavelength_nm);
    a.values[col] + f * (b.values[col] - a.values[col])
}

/// Resamples every column of a table onto `grid`.
pub fn resample_columns(rows: &[TableRow], grid: &WavelengthGrid) -> Vec<Vec<f64>> {
    let columns = rows[0].values.len();
    (0..columns)
        .map(|c| grid.wavelengths().map(|nm| interpolate_column(rows, c, nm)).collect())
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SpectralError::Io { path: path.to_path_buf(), source })
}

pub fn parse_spd(text: &str, grid: &WavelengthGrid) -> Result<Spectrum> {
    let rows = parse_table(text, 1, 1)?;
    let values = resample_columns(&rows, grid).swap_remove(0);
    Spectrum::new(*grid, values)
}

/// Reads a `wavelength_nm,value` file and resamples it onto `grid`.
pub fn load_spd(path: impl AsRef<Path>, grid: &WavelengthGrid) -> Result<Spectrum> {
    parse_spd(&read_text(path.as_ref())?, grid)
}

pub fn parse_ior(text: &str, grid: &WavelengthGrid) -> Result<ComplexIOR> {
    let rows = parse_table(text, 2, 1)?;
    let mut cols = resample_columns(&rows, grid);
    let k = cols.pop().unwrap_or_default();
    let n = cols.pop().unwrap_or_default();
    ComplexIOR::new(*grid, n, k)
}

/// Reads a `wavelength_nm,n,k` file.
pub fn load_ior(path: impl AsRef<Path>, grid: &WavelengthGrid) -> Result<ComplexIOR> {
    parse_ior(&read_text(path.as_ref())?, grid)
}

/// Parses a transmittance map: a `width height` header line followed by
/// `width * height` SPD blocks in row-major order separated by blank lines.
pub fn parse_transmittance_map(text: &str, grid: &WavelengthGrid) -> Result<TransmittanceMap> {
    let lines: Vec<&str> = text.lines().collect();
    let mut idx = 0;
    let strip = |l: &str| l.split('#').next().unwrap_or("").trim().to_string();
    while idx < lines.len() && strip(lines[idx]).is_empty() {
        idx += 1;
    }
    if idx == lines.len() {
        return Err(SpectralError::Format("empty transmittance map".into()));
    }
    let header = strip(lines[idx]);
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| SpectralError::Parse {
            line: idx + 1,
            msg: format!("bad map dimension '{s}'"),
        })
    };
    if dims.len() != 2 {
        return Err(SpectralError::Parse { line: idx + 1, msg: "expected 'width height' header".into() });
    }
    let (width, height) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    idx += 1;

    let mut texels = Vec::with_capacity(width * height);
    let mut block = String::new();
    let mut block_start = idx + 1;
    let flush = |block: &mut String, start: usize, texels: &mut Vec<Spectrum>| -> Result<()> {
        if block.trim().is_empty() {
            block.clear();
            return Ok(());
        }
        let rows = parse_table(block, 1, start)?;
        let values = resample_columns(&rows, grid).swap_remove(0);
        texels.push(Spectrum::new(*grid, values)?);
        block.clear();
        Ok(())
    };
    for (off, line) in lines[idx..].iter().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, block_start, &mut texels)?;
            block_start = idx + off + 2;
        } else {
            if block.is_empty() {
                block_start = idx + off + 1;
            }
            block.push_str(line);
            block.push('\n');
        }
    }
    flush(&mut block, block_start, &mut texels)?;
    TransmittanceMap::new(width, height, texels)
}

pub fn load_transmittance_map(path: impl AsRef<Path>, grid: &WavelengthGrid) -> Result<TransmittanceMap> {
    parse_transmittance_map(&read_text(path.as_ref())?, grid)
}
