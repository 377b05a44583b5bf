//! Programmatic scene construction and the bundled demo scenes.

use std::sync::Arc;

use crate::math::{Vec2, Vec3};
use crate::scene::{Camera, FaceVertex, Material, MaterialId, MaterialKind, Mesh, Scene, Texture};
use crate::spectral::{ComplexIOR, Spectrum, TransmittanceMap, WavelengthGrid};
use crate::sunlight::{SunError, SunLight, SunParams, DEFAULT_SUN_TEMPERATURE_K};

/// Incremental scene assembly; every quad becomes its own mesh.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    scene: Scene,
    max_edge: Option<f64>,
}

impl Default for SceneBuilder {
    fn default() -> Self {
        SceneBuilder::new(WavelengthGrid::visible())
    }
}

impl SceneBuilder {
    pub fn new(grid: WavelengthGrid) -> Self {
        SceneBuilder { scene: Scene::empty(grid), max_edge: None }
    }

    /// Subdivides every later quad into a grid of cells no longer than
    /// `max_edge` on a side.
    pub fn tessellate(&mut self, max_edge: f64) {
        assert!(max_edge > 0.0, "edge length must be positive");
        self.max_edge = Some(max_edge);
    }

    pub fn grid(&self) -> WavelengthGrid {
        self.scene.grid
    }

    fn material(&mut self, name: &str, kind: MaterialKind) -> MaterialId {
        self.scene.materials.push(Material { name: name.to_string(), kind });
        self.scene.materials.len() - 1
    }

    pub fn lambertian(&mut self, name: &str, reflectance: Spectrum) -> MaterialId {
        self.material(name, MaterialKind::Lambertian { reflectance })
    }

    pub fn gray(&mut self, name: &str, rho: f64) -> MaterialId {
        let g = self.scene.grid;
        self.lambertian(name, Spectrum::constant(g, rho))
    }

    /// Dielectric; a bulk map is registered as texture `<name>_map`.
    pub fn dielectric(&mut self, name: &str, ior: ComplexIOR, bulk: Option<TransmittanceMap>, solid: bool) -> MaterialId {
        let bulk = bulk.map(|map| {
            self.scene.textures.push(Texture { name: format!("{name}_map"), map: Arc::new(map) });
            self.scene.textures.len() - 1
        });
        self.material(name, MaterialKind::Dielectric { ior, bulk, solid })
    }

    pub fn conductor(&mut self, name: &str, ior: ComplexIOR) -> MaterialId {
        self.material(name, MaterialKind::Conductor { ior })
    }

    /// Two triangles `(a, b, c)` and `(a, c, d)`; uvs run (0,0), (1,0),
    /// (1,1), (0,1) around the corners. With tessellation on, the same
    /// pattern repeats over each grid cell.
    pub fn quad(&mut self, material: MaterialId, corners: [Vec3; 4]) {
        let [a, b, c, d] = corners;
        let cells = |len: f64| self.max_edge.map_or(1, |e| ((len / e).ceil() as usize).max(1));
        let (nu, nv) = (cells((b - a).length().max((c - d).length())), cells((d - a).length().max((c - b).length())));
        let mut mesh = Mesh::new(material);
        for j in 0..=nv {
            for i in 0..=nu {
                let (u, v) = (i as f64 / nu as f64, j as f64 / nv as f64);
                let p = if (u, v) == (0.0, 0.0) {
                    a
                } else if (u, v) == (1.0, 0.0) {
                    b
                } else if (u, v) == (1.0, 1.0) {
                    c
                } else if (u, v) == (0.0, 1.0) {
                    d
                } else {
                    let bottom = a + (b - a) * u;
                    let top = d + (c - d) * u;
                    bottom + (top - bottom) * v
                };
                mesh.vertices.push(p);
                mesh.uvs.push(Vec2::new(u, v));
            }
        }
        let fv = |i: usize, j: usize| {
            let k = j * (nu + 1) + i;
            FaceVertex { v: k, uv: Some(k), n: None }
        };
        for j in 0..nv {
            for i in 0..nu {
                mesh.triangles.push([fv(i, j), fv(i + 1, j), fv(i + 1, j + 1)]);
                mesh.triangles.push([fv(i, j), fv(i + 1, j + 1), fv(i, j + 1)]);
            }
        }
        self.scene.meshes.push(mesh);
    }

    pub fn triangle(&mut self, material: MaterialId, p: [Vec3; 3]) {
        let mut mesh = Mesh::new(material);
        mesh.vertices = p.to_vec();
        let fv = |i: usize| FaceVertex { v: i, uv: None, n: None };
        mesh.triangles = vec![[fv(0), fv(1), fv(2)]];
        self.scene.meshes.push(mesh);
    }

    /// Axis-aligned rectangle at `y = height` spanning `[x0,x1] x [z0,z1]`.
    pub fn horizontal(&mut self, material: MaterialId, height: f64, x: (f64, f64), z: (f64, f64)) {
        self.quad(
            material,
            [
                Vec3::new(x.0, height, z.0),
                Vec3::new(x.0, height, z.1),
                Vec3::new(x.1, height, z.1),
                Vec3::new(x.1, height, z.0),
            ],
        );
    }

    /// Rectangle at `x = at` spanning `[y0,y1] x [z0,z1]`.
    pub fn wall_x(&mut self, material: MaterialId, at: f64, y: (f64, f64), z: (f64, f64)) {
        self.quad(
            material,
            [Vec3::new(at, y.0, z.0), Vec3::new(at, y.0, z.1), Vec3::new(at, y.1, z.1), Vec3::new(at, y.1, z.0)],
        );
    }

    /// Rectangle at `z = at` spanning `[x0,x1] x [y0,y1]`.
    pub fn wall_z(&mut self, material: MaterialId, at: f64, x: (f64, f64), y: (f64, f64)) {
        self.quad(
            material,
            [Vec3::new(x.0, y.0, at), Vec3::new(x.1, y.0, at), Vec3::new(x.1, y.1, at), Vec3::new(x.0, y.1, at)],
        );
    }

    /// Closed box with outward-facing windings; `bottom` adds the face at
    /// `min.y`.
    pub fn cuboid(&mut self, material: MaterialId, min: Vec3, max: Vec3, bottom: bool) {
        let c = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let (a, b) = (min, max);
        self.quad(material, [c(a.x, b.y, a.z), c(a.x, b.y, b.z), c(b.x, b.y, b.z), c(b.x, b.y, a.z)]);
        if bottom {
            self.quad(material, [c(a.x, a.y, a.z), c(b.x, a.y, a.z), c(b.x, a.y, b.z), c(a.x, a.y, b.z)]);
        }
        self.quad(material, [c(a.x, a.y, a.z), c(a.x, a.y, b.z), c(a.x, b.y, b.z), c(a.x, b.y, a.z)]);
        self.quad(material, [c(b.x, a.y, a.z), c(b.x, b.y, a.z), c(b.x, b.y, b.z), c(b.x, a.y, b.z)]);
        self.quad(material, [c(a.x, a.y, a.z), c(a.x, b.y, a.z), c(b.x, b.y, a.z), c(b.x, a.y, a.z)]);
        self.quad(material, [c(a.x, a.y, b.z), c(b.x, a.y, b.z), c(b.x, b.y, b.z), c(a.x, b.y, b.z)]);
    }

    pub fn sun(&mut self, params: SunParams) -> Result<(), SunError> {
        let light = params.to_light(&self.scene.grid)?;
        self.scene.suns.push(params);
        self.scene.lights.push(light);
        Ok(())
    }

    /// Adds a light with an explicit emission spectrum. Such lights are not
    /// written out by the scene serializer.
    pub fn light(&mut self, light: SunLight) {
        self.scene.lights.push(light);
    }

    pub fn camera(&mut self, camera: Camera) {
        self.scene.camera = Some(camera);
    }

    pub fn build(self) -> Scene {
        self.scene
    }
}

/// Smooth band-pass shaped reflectance or transmittance.
pub fn bump(grid: WavelengthGrid, base: f64, peak: f64, center_nm: f64, width_nm: f64) -> Spectrum {
    Spectrum::from_fn(grid, |nm| {
        let x = (nm - center_nm) / width_nm;
        base + (peak - base) * (-0.5 * x * x).exp()
    })
}

/// Soda-lime glass with Cauchy dispersion.
pub fn crown_glass(grid: WavelengthGrid) -> ComplexIOR {
    let n = grid.wavelengths().map(|nm| 1.5046 + 4200.0 / (nm * nm)).collect();
    ComplexIOR::new(grid, n, vec![0.0; grid.count()]).expect("valid glass index")
}

/// Gold optical constants, piecewise linear through tabulated points.
pub fn gold(grid: WavelengthGrid) -> ComplexIOR {
    const TABLE: [(f64, f64, f64); 9] = [
        (380.0, 1.70, 1.90),
        (400.0, 1.66, 1.96),
        (450.0, 1.38, 1.92),
        (500.0, 0.97, 1.87),
        (550.0, 0.43, 2.45),
        (600.0, 0.25, 2.98),
        (650.0, 0.18, 3.45),
        (700.0, 0.16, 3.95),
        (780.0, 0.17, 4.70),
    ];
    let lerp = |nm: f64, col: usize| {
        let i = TABLE.iter().rposition(|r| r.0 <= nm).unwrap_or(0).min(TABLE.len() - 2);
        let (a, b) = (TABLE[i], TABLE[i + 1]);
        let f = ((nm - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        let (va, vb) = if col == 0 { (a.1, b.1) } else { (a.2, b.2) };
        va + f * (vb - va)
    };
    let n = grid.wavelengths().map(|nm| lerp(nm, 0)).collect();
    let k = grid.wavelengths().map(|nm| lerp(nm, 1)).collect();
    ComplexIOR::new(grid, n, k).expect("valid gold constants")
}

/// Open-fronted box with colored side walls, a skylight glazed with clear
/// glass, a diffuse block, a glass block and a gold block. The sun stands
/// behind the box and reaches the interior only through the skylight.
pub fn cornell_box() -> Scene {
    let mut b = SceneBuilder::default();
    let g = b.grid();
    let white = b.gray("white", 0.75);
    let red = b.lambertian("red", bump(g, 0.06, 0.7, 650.0, 60.0));
    let green = b.lambertian("green", bump(g, 0.05, 0.6, 530.0, 45.0));
    let glass = b.dielectric("skylight", crown_glass(g), None, false);
    let block_glass = b.dielectric("crystal", crown_glass(g), None, true);
    let gold_mat = b.conductor("gold", gold(g));

    let (lo, hi) = (0.0, 4.0);
    b.horizontal(white, lo, (lo, hi), (lo, hi));
    // ceiling around a square opening over [1.3, 2.9] x [1.1, 2.7]
    b.horizontal(white, hi, (lo, 1.3), (lo, hi));
    b.horizontal(white, hi, (2.9, hi), (lo, hi));
    b.horizontal(white, hi, (1.3, 2.9), (lo, 1.1));
    b.horizontal(white, hi, (1.3, 2.9), (2.7, hi));
    b.horizontal(glass, 3.93, (1.3, 2.9), (1.1, 2.7));
    b.wall_z(white, lo, (lo, hi), (lo, hi));
    b.wall_x(red, lo, (lo, hi), (lo, hi));
    b.wall_x(green, hi, (lo, hi), (lo, hi));

    b.cuboid(white, Vec3::new(0.55, 0.0, 0.6), Vec3::new(1.65, 1.35, 1.75), false);
    b.cuboid(gold_mat, Vec3::new(2.45, 0.0, 0.5), Vec3::new(3.35, 1.1, 1.45), false);
    b.cuboid(block_glass, Vec3::new(2.6, 0.0, 2.4), Vec3::new(3.3, 0.7, 3.1), true);

    b.sun(SunParams {
        elevation_deg: 72.0,
        azimuth_deg: 196.0,
        temperature_k: DEFAULT_SUN_TEMPERATURE_K,
        tau_550: 0.1,
        power_scale: 1.0,
    })
    .expect("valid sun");
    b.camera(Camera {
        position: Vec3::new(2.03, 1.97, 10.5),
        look_at: Vec3::new(2.03, 1.97, 0.0),
        up: Vec3::new(0.0, 1.0, 0.0),
        vertical_fov_deg: 40.0,
        width: 64,
        height: 64,
    });
    b.build()
}

/// 2x2 stained-glass transmittance: ruby, cobalt, amber and green panes.
pub fn stained_glass(grid: WavelengthGrid) -> TransmittanceMap {
    let texels = vec![
        bump(grid, 0.03, 0.8, 680.0, 50.0),
        bump(grid, 0.04, 0.7, 450.0, 35.0),
        Spectrum::from_fn(grid, |nm| 0.05 + 0.8 / (1.0 + (-(nm - 560.0) / 20.0).exp())),
        bump(grid, 0.05, 0.65, 530.0, 40.0),
    ];
    TransmittanceMap::new(2, 2, texels).expect("valid stained glass")
}

/// Long hall with two rows of pillars and a wall of stained-glass windows
/// lit by a low sun from outside.
pub fn nave() -> Scene {
    nave_build(None)
}

/// The hall with every surface cut into cells of at most `max_edge`
/// meters: the same building as a heavier model.
pub fn nave_detailed(max_edge: f64) -> Scene {
    nave_build(Some(max_edge))
}

fn nave_build(max_edge: Option<f64>) -> Scene {
    let mut b = SceneBuilder::default();
    if let Some(e) = max_edge {
        b.tessellate(e);
    }
    let g = b.grid();
    let stone = b.lambertian("stone", Spectrum::from_fn(g, |nm| 0.45 + 0.25 * (nm - 380.0) / 400.0));
    let floor = b.gray("floor", 0.35);
    let window = b.dielectric("window", crown_glass(g), Some(stained_glass(g)), false);

    let (w, h, len) = (6.0, 5.0, 16.0);
    b.horizontal(floor, 0.0, (0.0, w), (0.0, len));
    b.horizontal(stone, h, (0.0, w), (0.0, len));
    b.wall_x(stone, w, (0.0, h), (0.0, len));
    b.wall_z(stone, 0.0, (0.0, w), (0.0, h));
    b.wall_z(stone, len, (0.0, w), (0.0, h));

    // window wall at x = 0: sill band, head band and piers between openings
    let (sill, head) = (1.4, 3.9);
    let openings = [(1.3, 2.9), (5.1, 6.7), (9.3, 10.9), (13.1, 14.7)];
    b.wall_x(stone, 0.0, (0.0, sill), (0.0, len));
    b.wall_x(stone, 0.0, (head, h), (0.0, len));
    let mut z = 0.0;
    for &(z0, z1) in &openings {
        b.wall_x(stone, 0.0, (sill, head), (z, z0));
        b.wall_x(window, 0.0, (sill, head), (z0, z1));
        z = z1;
    }
    b.wall_x(stone, 0.0, (sill, head), (z, len));

    for &px in &[1.55, 4.45] {
        for &pz in &[2.3, 5.7, 10.3, 13.7] {
            b.cuboid(stone, Vec3::new(px - 0.25, 0.0, pz - 0.25), Vec3::new(px + 0.25, 4.6, pz + 0.25), false);
        }
    }

    b.sun(SunParams {
        elevation_deg: 24.0,
        azimuth_deg: -68.0,
        temperature_k: DEFAULT_SUN_TEMPERATURE_K,
        tau_550: 0.1,
        power_scale: 1.0,
    })
    .expect("valid sun");
    b.camera(Camera {
        position: Vec3::new(3.17, 1.73, 15.3),
        look_at: Vec3::new(2.2, 1.9, 0.5),
        up: Vec3::new(0.0, 1.0, 0.0),
        vertical_fov_deg: 60.0,
        width: 64,
        height: 64,
    });
    b.build()
}
