//! Line-oriented scene format. See `docs/scene-format.md` for the grammar.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::math::{Vec2, Vec3};
use crate::spectral::{
    load_ior, load_spd, load_transmittance_map, ComplexIOR, SpectralError, Spectrum, TransmittanceMap,
    WavelengthGrid,
};
use crate::sunlight::SunParams;

use super::{Camera, FaceVertex, Material, MaterialKind, Mesh, Scene, Texture, MIN_TRIANGLE_AREA};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unknown directive '{directive}'")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate material '{name}' (lines {first} and {second})")]
    DuplicateMaterial { name: String, first: usize, second: usize },
    #[error("duplicate texture '{name}' (lines {first} and {second})")]
    DuplicateTexture { name: String, first: usize, second: usize },
    #[error("line {line}: material '{name}' is not defined")]
    DanglingMaterial { line: usize, name: String },
    #[error("line {line}: texture '{name}' is not defined")]
    DanglingTexture { line: usize, name: String },
    #[error("line {line}: data file {} not found", path.display())]
    MissingFile { line: usize, path: PathBuf },
    #[error("line {line}: {}: {source}", path.display())]
    Data {
        line: usize,
        path: PathBuf,
        #[source]
        source: SpectralError,
    },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

impl SceneError {
    /// Line number in the scene file the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            SceneError::Io { .. } => None,
            SceneError::UnknownDirective { line, .. }
            | SceneError::Syntax { line, .. }
            | SceneError::DanglingMaterial { line, .. }
            | SceneError::DanglingTexture { line, .. }
            | SceneError::MissingFile { line, .. }
            | SceneError::Data { line, .. }
            | SceneError::Invalid { line, .. } => Some(*line),
            SceneError::DuplicateMaterial { second, .. } | SceneError::DuplicateTexture { second, .. } => {
                Some(*second)
            }
        }
    }
}

type Result<T> = std::result::Result<T, SceneError>;

/// Reads a scene file; data files resolve relative to its directory.
pub fn parse_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scene_str(&text, base, &WavelengthGrid::visible())
}

struct Tokens<'a> {
    line: usize,
    words: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn syntax(&self, msg: impl Into<String>) -> SceneError {
        SceneError::Syntax { line: self.line, msg: msg.into() }
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        let w = self.words.get(self.pos).copied().ok_or_else(|| self.syntax(format!("missing {what}")))?;
        self.pos += 1;
        Ok(w)
    }

    fn peek(&self) -> Option<&'a str> {
        self.words.get(self.pos).copied()
    }

    fn real(&mut self, what: &str) -> Result<f64> {
        let w = self.word(what)?;
        match w.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.syntax(format!("{what}: '{w}' is not a finite number"))),
        }
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let w = self.word(what)?;
        w.parse::<usize>().map_err(|_| self.syntax(format!("{what}: '{w}' is not a non-negative integer")))
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.real(what)).collect()
    }

    fn vec3(&mut self, what: &str) -> Result<Vec3> {
        Ok(Vec3::new(self.real(what)?, self.real(what)?, self.real(what)?))
    }

    fn finish(&self) -> Result<()> {
        match self.words.get(self.pos) {
            Some(extra) => Err(self.syntax(format!("unexpected trailing token '{extra}'"))),
            None => Ok(()),
        }
    }
}

struct Ctx<'a> {
    base: &'a Path,
    grid: WavelengthGrid,
}

impl Ctx<'_> {
    fn data_path(&self, line: usize, rel: &str) -> Result<PathBuf> {
        let path = self.base.join(rel);
        if !path.is_file() {
            return Err(SceneError::MissingFile { line, path });
        }
        Ok(path)
    }

    fn spectrum(&self, t: &mut Tokens) -> Result<Spectrum> {
        let line = t.line;
        let data = |e: SpectralError| SceneError::Invalid { line, msg: e.to_string() };
        match t.word("spectrum form (const|file|values)")? {
            "const" => {
                let v = t.real("spectrum value")?;
                Spectrum::new(self.grid, vec![v; self.grid.count()]).map_err(data)
            }
            "values" => Spectrum::new(self.grid, t.reals(self.grid.count(), "spectrum sample")?).map_err(data),
            "file" => {
                let path = self.data_path(line, t.word("spectrum file")?)?;
                load_spd(&path, &self.grid).map_err(|source| SceneError::Data { line, path, source })
            }
            other => Err(t.syntax(format!("unknown spectrum form '{other}'"))),
        }
    }

    fn ior(&self, t: &mut Tokens) -> Result<ComplexIOR> {
        let line = t.line;
        let data = |e: SpectralError| SceneError::Invalid { line, msg: e.to_string() };
        match t.word("IOR form (const|file|values)")? {
            "const" => {
                let n = t.real("optical index n")?;
                let k = t.real("absorption index k")?;
                ComplexIOR::constant(self.grid, n, k).map_err(data)
            }
            "values" => {
                let n = t.reals(self.grid.count(), "optical index sample")?;
                let k = t.reals(self.grid.count(), "absorption index sample")?;
                ComplexIOR::new(self.grid, n, k).map_err(data)
            }
            "file" => {
                let path = self.data_path(line, t.word("IOR file")?)?;
                load_ior(&path, &self.grid).map_err(|source| SceneError::Data { line, path, source })
            }
            other => Err(t.syntax(format!("unknown IOR form '{other}'"))),
        }
    }

    fn map(&self, t: &mut Tokens) -> Result<TransmittanceMap> {
        let line = t.line;
        let data = |e: SpectralError| SceneError::Invalid { line, msg: e.to_string() };
        match t.word("map form (const|file|inline)")? {
            "const" => {
                let v = t.real("transmittance")?;
                let s = Spectrum::new(self.grid, vec![v; self.grid.count()]).map_err(data)?;
                TransmittanceMap::uniform(s).map_err(data)
            }
            "inline" => {
                let w = t.count("map width")?;
                let h = t.count("map height")?;
                let mut texels = Vec::with_capacity(w * h);
                for _ in 0..w * h {
                    let values = t.reals(self.grid.count(), "texel sample")?;
                    texels.push(Spectrum::new(self.grid, values).map_err(data)?);
                }
                TransmittanceMap::new(w, h, texels).map_err(data)
            }
            "file" => {
                let path = self.data_path(line, t.word("map file")?)?;
                load_transmittance_map(&path, &self.grid).map_err(|source| SceneError::Data { line, path, source })
            }
            other => Err(t.syntax(format!("unknown map form '{other}'"))),
        }
    }
}

enum RawKind {
    Lambertian(Spectrum),
    Dielectric { ior: ComplexIOR, texture: Option<String>, solid: bool },
    Conductor(ComplexIOR),
}

struct RawMaterial {
    name: String,
    line: usize,
    kind: RawKind,
}

struct RawMesh {
    material: String,
    line: usize,
    mesh: Mesh,
    face_lines: Vec<usize>,
}

fn parse_face_vertex(t: &Tokens, word: &str, mesh: &Mesh) -> Result<FaceVertex> {
    let parts: Vec<&str> = word.split('/').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(t.syntax(format!("bad face vertex '{word}'")));
    }
    let index = |s: &str, len: usize, what: &str| -> Result<usize> {
        let i: usize = s.parse().map_err(|_| t.syntax(format!("bad {what} index '{s}' in '{word}'")))?;
        if i == 0 || i > len {
            return Err(t.syntax(format!("{what} index {i} out of range (1..={len})")));
        }
        Ok(i - 1)
    };
    let v = index(parts[0], mesh.vertices.len(), "vertex")?;
    let uv = match parts.get(1) {
        Some(s) if !s.is_empty() => Some(index(s, mesh.uvs.len(), "texture coordinate")?),
        _ => None,
    };
    let n = match parts.get(2) {
        Some(s) if !s.is_empty() => Some(index(s, mesh.normals.len(), "normal")?),
        Some(_) => return Err(t.syntax(format!("empty normal index in '{word}'"))),
        None => None,
    };
    Ok(FaceVertex { v, uv, n })
}

/// Applies one line inside a `mesh` block; returns true on `end`.
fn mesh_line(m: &mut RawMesh, directive: &str, t: &mut Tokens) -> Result<bool> {
    match directive {
        "v" => m.mesh.vertices.push(t.vec3("vertex coordinate")?),
        "vn" => m.mesh.normals.push(t.vec3("normal component")?),
        "vt" => m.mesh.uvs.push(Vec2::new(t.real("u")?, t.real("v")?)),
        "f" => {
            let mut fvs = Vec::new();
            while let Some(w) = t.peek() {
                t.pos += 1;
                fvs.push(parse_face_vertex(t, w, &m.mesh)?);
            }
            if fvs.len() < 3 {
                return Err(t.syntax("face needs at least 3 vertices"));
            }
            for k in 1..fvs.len() - 1 {
                m.mesh.triangles.push([fvs[0], fvs[k], fvs[k + 1]]);
                m.face_lines.push(t.line);
            }
        }
        "end" => return Ok(true),
        other => {
            return Err(SceneError::UnknownDirective { line: t.line, directive: other.to_string() });
        }
    }
    Ok(false)
}

fn resolve_mesh(mut rm: RawMesh, materials: &[Material]) -> Result<Mesh> {
    rm.mesh.material = materials
        .iter()
        .position(|m| m.name == rm.material)
        .ok_or_else(|| SceneError::DanglingMaterial { line: rm.line, name: rm.material.clone() })?;
    for (tri, line) in rm.mesh.triangles.iter().zip(&rm.face_lines) {
        let p = tri.map(|fv| rm.mesh.vertices[fv.v]);
        let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).length();
        if !(area > MIN_TRIANGLE_AREA) {
            return Err(SceneError::Invalid { line: *line, msg: format!("degenerate triangle (area {area:e} m^2)") });
        }
    }
    Ok(rm.mesh)
}

/// Parses text holding only `mesh ... end` blocks whose material names
/// refer to `materials`. Line numbers in errors start at `first_line`.
pub fn parse_mesh_blocks(text: &str, first_line: usize, materials: &[Material]) -> Result<Vec<Mesh>> {
    let mut meshes = Vec::new();
    let mut open_mesh: Option<RawMesh> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = first_line + i;
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let mut t = Tokens { line, words, pos: 0 };
        let directive = t.word("directive")?;
        if let Some(m) = open_mesh.as_mut() {
            if mesh_line(m, directive, &mut t)? {
                meshes.push(resolve_mesh(open_mesh.take().expect("open mesh"), materials)?);
            }
        } else if directive == "mesh" {
            let material = t.word("mesh material")?.to_string();
            open_mesh = Some(RawMesh { material, line, mesh: Mesh::new(0), face_lines: Vec::new() });
        } else {
            return Err(SceneError::UnknownDirective { line, directive: directive.to_string() });
        }
        t.finish()?;
    }
    if let Some(m) = open_mesh {
        return Err(SceneError::Syntax { line: m.line, msg: "mesh block is missing 'end'".into() });
    }
    Ok(meshes)
}

/// Parses scene text. `base_dir` anchors relative data-file paths.
pub fn parse_scene_str(text: &str, base_dir: &Path, grid: &WavelengthGrid) -> Result<Scene> {
    let ctx = Ctx { base: base_dir, grid: *grid };
    let mut materials: Vec<RawMaterial> = Vec::new();
    let mut textures: Vec<(String, usize, TransmittanceMap)> = Vec::new();
    let mut meshes: Vec<RawMesh> = Vec::new();
    let mut suns: Vec<(usize, SunParams)> = Vec::new();
    let mut camera: Option<(usize, Camera)> = None;
    let mut open_mesh: Option<RawMesh> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let mut t = Tokens { line, words, pos: 0 };
        let directive = t.word("directive")?;

        if let Some(m) = open_mesh.as_mut() {
            if mesh_line(m, directive, &mut t)? {
                meshes.push(open_mesh.take().expect("open mesh"));
            }
            t.finish()?;
            continue;
        }

        match directive {
            "material" => {
                let name = t.word("material name")?.to_string();
                let kind = match t.word("material kind")? {
                    "lambertian" => RawKind::Lambertian(ctx.spectrum(&mut t)?),
                    "dielectric" => {
                        let ior = ctx.ior(&mut t)?;
                        let mut texture = None;
                        let mut solid = false;
                        while let Some(opt) = t.peek() {
                            t.pos += 1;
                            match opt {
                                "texture" => texture = Some(t.word("texture name")?.to_string()),
                                "solid" => solid = true,
                                other => return Err(t.syntax(format!("unknown dielectric option '{other}'"))),
                            }
                        }
                        RawKind::Dielectric { ior, texture, solid }
                    }
                    "conductor" => RawKind::Conductor(ctx.ior(&mut t)?),
                    other => return Err(t.syntax(format!("unknown material kind '{other}'"))),
                };
                if let Some(prev) = materials.iter().find(|m| m.name == name) {
                    return Err(SceneError::DuplicateMaterial { name, first: prev.line, second: line });
                }
                materials.push(RawMaterial { name, line, kind });
            }
            "texture" => {
                let name = t.word("texture name")?.to_string();
                let map = ctx.map(&mut t)?;
                if let Some(prev) = textures.iter().find(|x| x.0 == name) {
                    return Err(SceneError::DuplicateTexture { name, first: prev.1, second: line });
                }
                textures.push((name, line, map));
            }
            "sun" => {
                let p = SunParams {
                    elevation_deg: t.real("sun elevation")?,
                    azimuth_deg: t.real("sun azimuth")?,
                    temperature_k: t.real("sun temperature")?,
                    tau_550: t.real("optical depth")?,
                    power_scale: t.real("power scale")?,
                };
                suns.push((line, p));
            }
            "camera" => {
                let cam = Camera {
                    position: t.vec3("camera position")?,
                    look_at: t.vec3("camera target")?,
                    up: t.vec3("camera up")?,
                    vertical_fov_deg: t.real("vertical fov")?,
                    width: t.count("image width")?,
                    height: t.count("image height")?,
                };
                cam.validate().map_err(|msg| SceneError::Invalid { line, msg })?;
                if let Some((first, _)) = camera {
                    return Err(SceneError::Invalid { line, msg: format!("second camera (first on line {first})") });
                }
                camera = Some((line, cam));
            }
            "mesh" => {
                let material = t.word("mesh material")?.to_string();
                open_mesh = Some(RawMesh { material, line, mesh: Mesh::new(0), face_lines: Vec::new() });
            }
            other => return Err(SceneError::UnknownDirective { line, directive: other.to_string() }),
        }
        t.finish()?;
    }
    if let Some(m) = open_mesh {
        return Err(SceneError::Syntax { line: m.line, msg: "mesh block is missing 'end'".into() });
    }

    let texture_index: HashMap<&str, usize> = textures.iter().enumerate().map(|(i, t)| (t.0.as_str(), i)).collect();
    let mut scene = Scene::empty(*grid);
    for m in &materials {
        let invalid = |msg: String| SceneError::Invalid { line: m.line, msg };
        let kind = match &m.kind {
            RawKind::Lambertian(r) => {
                if !r.is_unit_bounded() {
                    return Err(invalid(format!("lambertian reflectance of '{}' outside [0, 1]", m.name)));
                }
                MaterialKind::Lambertian { reflectance: r.clone() }
            }
            RawKind::Dielectric { ior, texture, solid } => {
                if !ior.is_dielectric() {
                    return Err(invalid(format!("dielectric '{}' has k > 0", m.name)));
                }
                let bulk = match texture {
                    Some(name) => Some(*texture_index.get(name.as_str()).ok_or_else(|| {
                        SceneError::DanglingTexture { line: m.line, name: name.clone() }
                    })?),
                    None => None,
                };
                MaterialKind::Dielectric { ior: ior.clone(), bulk, solid: *solid }
            }
            RawKind::Conductor(ior) => MaterialKind::Conductor { ior: ior.clone() },
        };
        scene.materials.push(Material { name: m.name.clone(), kind });
    }
    scene.textures = textures.into_iter().map(|(name, _, map)| Texture { name, map: Arc::new(map) }).collect();

    for rm in meshes {
        let mesh = resolve_mesh(rm, &scene.materials)?;
        scene.meshes.push(mesh);
    }
    for (line, p) in suns {
        let light = p.to_light(grid).map_err(|e| SceneError::Invalid { line, msg: e.to_string() })?;
        scene.suns.push(p);
        scene.lights.push(light);
    }
    scene.camera = camera.map(|c| c.1);
    Ok(scene)
}

fn push_values(out: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(out, " {v:?}");
    }
}

/// Serializes a scene with every spectrum inlined; the output re-parses to
/// an equal scene.
pub fn write_scene(scene: &Scene) -> String {
    let mut out = String::from("# spectralium scene\n");
    for tex in &scene.textures {
        let _ = write!(out, "texture {} inline {} {}", tex.name, tex.map.width(), tex.map.height());
        for texel in tex.map.texels() {
            push_values(&mut out, texel.values());
        }
        out.push('\n');
    }
    for m in &scene.materials {
        let _ = write!(out, "material {} ", m.name);
        match &m.kind {
            MaterialKind::Lambertian { reflectance } => {
                out.push_str("lambertian values");
                push_values(&mut out, reflectance.values());
            }
            MaterialKind::Dielectric { ior, bulk, solid } => {
                out.push_str("dielectric values");
                push_values(&mut out, ior.n());
                push_values(&mut out, ior.k());
                if let Some(t) = bulk {
                    let _ = write!(out, " texture {}", scene.textures[*t].name);
                }
                if *solid {
                    out.push_str(" solid");
                }
            }
            MaterialKind::Conductor { ior } => {
                out.push_str("conductor values");
                push_values(&mut out, ior.n());
                push_values(&mut out, ior.k());
            }
        }
        out.push('\n');
    }
    for s in &scene.suns {
        let _ = writeln!(
            out,
            "sun {:?} {:?} {:?} {:?} {:?}",
            s.elevation_deg, s.azimuth_deg, s.temperature_k, s.tau_550, s.power_scale
        );
    }
    if let Some(c) = &scene.camera {
        let _ = writeln!(
            out,
            "camera {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {} {}",
            c.position.x,
            c.position.y,
            c.position.z,
            c.look_at.x,
            c.look_at.y,
            c.look_at.z,
            c.up.x,
            c.up.y,
            c.up.z,
            c.vertical_fov_deg,
            c.width,
            c.height
        );
    }
    for mesh in &scene.meshes {
        let _ = writeln!(out, "mesh {}", scene.materials[mesh.material].name);
        for v in &mesh.vertices {
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for n in &mesh.normals {
            let _ = writeln!(out, "vn {:?} {:?} {:?}", n.x, n.y, n.z);
        }
        for uv in &mesh.uvs {
            let _ = writeln!(out, "vt {:?} {:?}", uv.x, uv.y);
        }
        for tri in &mesh.triangles {
            out.push('f');
            for fv in tri {
                let _ = write!(out, " {}", fv.v + 1);
                match (fv.uv, fv.n) {
                    (None, None) => {}
                    (Some(t), None) => {
                        let _ = write!(out, "/{}", t + 1);
                    }
                    (None, Some(n)) => {
                        let _ = write!(out, "//{}", n + 1);
                    }
                    (Some(t), Some(n)) => {
                        let _ = write!(out, "/{}/{}", t + 1, n + 1);
                    }
                }
            }
            out.push('\n');
        }
        out.push_str("end\n");
    }
    out
}
