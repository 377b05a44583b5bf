//! Scene description: meshes, spectral materials, suns and a pinhole camera,
//! plus the text format parser and the triangle BVH.

mod bvh;
mod parser;

use std::sync::Arc;

pub use bvh::{brute_force_intersect, intersect, BvhNode, SpatialIndex};
pub use parser::{parse_mesh_blocks, parse_scene, parse_scene_str, write_scene, SceneError};

use crate::math::{Aabb, Vec2, Vec3};
use crate::spectral::{ComplexIOR, Spectrum, TransmittanceMap, WavelengthGrid};
use crate::sunlight::{SunLight, SunParams};

pub type MaterialId = usize;

/// Minimum triangle area in square meters.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceVertex {
    pub v: usize,
    pub uv: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub triangles: Vec<[FaceVertex; 3]>,
    pub material: MaterialId,
}

impl Mesh {
    pub fn new(material: MaterialId) -> Self {
        Mesh { vertices: Vec::new(), normals: Vec::new(), uvs: Vec::new(), triangles: Vec::new(), material }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaterialKind {
    Lambertian { reflectance: Spectrum },
    /// Clear dielectric interface. `bulk` indexes [`Scene::textures`]; without
    /// one the interior transmits fully. Thin sheets pass the transmitted ray
    /// straight through; `solid` bends it at the 550 nm index.
    Dielectric { ior: ComplexIOR, bulk: Option<usize>, solid: bool },
    Conductor { ior: ComplexIOR },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub kind: MaterialKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub name: String,
    pub map: Arc<TransmittanceMap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

/// Geometric ray with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRay {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl GeoRay {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        GeoRay { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), String> {
        let view = self.look_at - self.position;
        if view.length() == 0.0 {
            return Err("camera look_at equals position".into());
        }
        if self.up.length() == 0.0 || view.normalized().cross(self.up.normalized()).length() < 1e-9 {
            return Err("camera up vector is parallel to the view direction".into());
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(format!("vertical fov {} deg outside (0, 180)", self.vertical_fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            return Err("camera image size must be positive".into());
        }
        Ok(())
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Camera {
        self.width = width;
        self.height = height;
        self
    }

    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalized();
        let right = forward.cross(self.up.normalized()).normalized();
        let up = right.cross(forward);
        (forward, right, up)
    }

    /// Pinhole ray through pixel `(pixel_x, pixel_y)` (row 0 at the top)
    /// at sub-pixel offset `jitter` in `[0, 1)^2`.
    pub fn generate_ray(&self, pixel_x: usize, pixel_y: usize, jitter: (f64, f64)) -> GeoRay {
        let (forward, right, up) = self.basis();
        let half_h = (self.vertical_fov_deg.to_radians() * 0.5).tan();
        let half_w = half_h * self.width as f64 / self.height as f64;
        let sx = (2.0 * (pixel_x as f64 + jitter.0) / self.width as f64 - 1.0) * half_w;
        let sy = (1.0 - 2.0 * (pixel_y as f64 + jitter.1) / self.height as f64) * half_h;
        GeoRay::new(self.position, (forward + right * sx + up * sy).normalized())
    }
}

pub fn generate_ray(camera: &Camera, pixel_x: usize, pixel_y: usize, jitter: (f64, f64)) -> GeoRay {
    camera.generate_ray(pixel_x, pixel_y, jitter)
}

/// Flattens meshes in order, filling defaults: missing normals take the
/// geometric normal, missing uvs the corner coordinates (0,0), (1,0), (0,1).
pub fn mesh_triangles(meshes: &[Mesh]) -> Vec<Triangle> {
    let default_uv = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
    let mut out = Vec::with_capacity(meshes.iter().map(|m| m.triangles.len()).sum());
    for mesh in meshes {
        for tri in &mesh.triangles {
            let p = tri.map(|fv| mesh.vertices[fv.v]);
            let geo = (p[1] - p[0]).cross(p[2] - p[0]).normalized();
            let mut n = [geo; 3];
            let mut uv = default_uv;
            for (k, fv) in tri.iter().enumerate() {
                if let Some(i) = fv.n {
                    n[k] = mesh.normals[i].normalized();
                }
                if let Some(i) = fv.uv {
                    uv[k] = mesh.uvs[i];
                }
            }
            out.push(Triangle { p, n, uv, material: mesh.material });
        }
    }
    out
}

/// Flattened triangle with resolved per-vertex attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub p: [Vec3; 3],
    pub n: [Vec3; 3],
    pub uv: [Vec2; 3],
    pub material: MaterialId,
}

impl Triangle {
    pub fn geometric_normal(&self) -> Vec3 {
        (self.p[1] - self.p[0]).cross(self.p[2] - self.p[0]).normalized()
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.p[1] - self.p[0]).cross(self.p[2] - self.p[0]).length()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in self.p {
            b.grow(p);
        }
        b
    }

    pub fn centroid(&self) -> Vec3 {
        (self.p[0] + self.p[1] + self.p[2]) / 3.0
    }
}

/// Surface intersection record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Geometric normal, flipped to face the incoming ray.
    pub normal: Vec3,
    /// Interpolated normal, on the same side as `normal`.
    pub shading_normal: Vec3,
    pub uv: Vec2,
    pub material: MaterialId,
    /// The ray struck the side the triangle winding faces.
    pub front_face: bool,
    pub triangle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub grid: WavelengthGrid,
    pub materials: Vec<Material>,
    pub textures: Vec<Texture>,
    pub meshes: Vec<Mesh>,
    pub suns: Vec<SunParams>,
    pub lights: Vec<SunLight>,
    pub camera: Option<Camera>,
}

impl Scene {
    pub fn empty(grid: WavelengthGrid) -> Self {
        Scene {
            grid,
            materials: Vec::new(),
            textures: Vec::new(),
            meshes: Vec::new(),
            suns: Vec::new(),
            lights: Vec::new(),
            camera: None,
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(|m| m.triangles.len()).sum()
    }

    /// All mesh triangles in mesh order; see [`mesh_triangles`].
    pub fn triangles(&self) -> Vec<Triangle> {
        mesh_triangles(&self.meshes)
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for m in &self.meshes {
            for v in &m.vertices {
                b.grow(*v);
            }
        }
        b
    }

    pub fn material_by_name(&self, name: &str) -> Option<MaterialId> {
        self.materials.iter().position(|m| m.name == name)
    }

    pub fn texture_map(&self, id: Option<usize>) -> Option<&TransmittanceMap> {
        id.map(|i| self.textures[i].map.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(fov: f64, w: usize, h: usize) -> Camera {
        Camera {
            position: Vec3::new(0.0, 1.0, 5.0),
            look_at: Vec3::new(0.0, 1.0, 0.0),
            up: Vec3::new(0.0, 1.0, 0.0),
            vertical_fov_deg: fov,
            width: w,
            height: h,
        }
    }

    #[test]
    fn center_pixel_looks_forward() {
        let c = camera(45.0, 5, 3);
        let r = c.generate_ray(2, 1, (0.5, 0.5));
        let look = (c.look_at - c.position).normalized();
        assert!((r.direction - look).length() < 1e-12);
    }

    #[test]
    fn symmetric_pixels_mirror() {
        let c = camera(60.0, 8, 6);
        let look = (c.look_at - c.position).normalized();
        let a = c.generate_ray(1, 2, (0.5, 0.5)).direction;
        let b = c.generate_ray(6, 3, (0.5, 0.5)).direction;
        // mirrored through the look axis: a + b is parallel to look
        let s = a + b;
        assert!(s.normalized().cross(look).length() < 1e-12);
        assert!((a.dot(look) - b.dot(look)).abs() < 1e-12);
    }

    #[test]
    fn narrow_fov_converges() {
        let c = camera(1.0, 16, 16);
        let look = (c.look_at - c.position).normalized();
        for (x, y) in [(0, 0), (15, 0), (0, 15), (15, 15)] {
            let d = c.generate_ray(x, y, (0.0, 0.0)).direction;
            let angle = d.dot(look).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 1.0, "{angle}");
        }
    }

    #[test]
    fn camera_validation() {
        assert!(camera(45.0, 4, 4).validate().is_ok());
        let mut c = camera(45.0, 4, 4);
        c.look_at = c.position;
        assert!(c.validate().is_err());
        let mut c = camera(45.0, 4, 4);
        c.up = Vec3::new(0.0, 0.0, 1.0);
        assert!(c.validate().is_err());
        assert!(camera(180.0, 4, 4).validate().is_err());
    }
}
