//! Local illumination from directional suns with shadow rays, specular
//! recursion through Fresnel interfaces, and two-pass photon mapping for
//! caustic and indirect diffuse light.

mod accumulator;
mod photon_map;
pub(crate) mod transport;

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

pub use accumulator::{ImageAccumulator, TermKey};
pub use photon_map::{estimate_radiance, Photon, PhotonMap};
pub use transport::{PhotonMaps, ShadeContext};

use crate::math::Vec3;
use crate::scene::{Camera, GeoRay, Hit, MaterialKind, Scene, SpatialIndex};
use crate::spectral::Spectrum;
use crate::sunlight::SunLight;
use transport::{camera_vertex, lambert_direct, scatter_camera, scatter_photon, Emit, Emitter, PathVertex};

/// Parametric offset that keeps spawned rays off their own surface (meters).
pub const RAY_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_DEPTH: u32 = 8;
/// Diffuse photon bounces from this depth on continue by Russian roulette.
pub const ROULETTE_DEPTH: u32 = 3;
pub const DEFAULT_GATHER_K: usize = 100;
/// Deepest path tree the term keys can number.
pub const MAX_SUPPORTED_DEPTH: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid render settings: {0}")]
    Settings(String),
    #[error("invalid camera: {0}")]
    Camera(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RayKind {
    Camera = 0,
    Specular = 1,
    Shadow = 2,
    Photon = 3,
}

impl RayKind {
    pub fn from_u8(v: u8) -> Option<RayKind> {
        Some(match v {
            0 => RayKind::Camera,
            1 => RayKind::Specular,
            2 => RayKind::Shadow,
            3 => RayKind::Photon,
            _ => return None,
        })
    }
}

/// A ray carrying spectral importance (camera side) or flux (photons).
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub throughput: Spectrum,
    pub depth: u32,
    pub pixel_id: u64,
    pub kind: RayKind,
}

impl Ray {
    pub fn geo(&self) -> GeoRay {
        GeoRay::new(self.origin, self.direction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub samples_per_pixel: u32,
    /// Photons emitted per sun; 0 skips the photon pass.
    pub n_photons: usize,
    pub max_depth: u32,
    pub seed: u64,
    pub gather_k: usize,
    /// Gather radius; defaults to a twentieth of the scene diagonal.
    pub gather_radius: Option<f64>,
    pub threads: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            width: 64,
            height: 64,
            samples_per_pixel: 1,
            n_photons: 10_000,
            max_depth: DEFAULT_MAX_DEPTH,
            seed: 0,
            gather_k: DEFAULT_GATHER_K,
            gather_radius: None,
            threads: 1,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::Settings(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if self.samples_per_pixel == 0 {
            return bad("samples per pixel must be at least 1");
        }
        if self.max_depth > MAX_SUPPORTED_DEPTH {
            return bad(&format!("max depth above {MAX_SUPPORTED_DEPTH}"));
        }
        if self.gather_k == 0 {
            return bad("gather k must be at least 1");
        }
        if let Some(r) = self.gather_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("gather radius must be positive");
            }
        }
        if self.threads == 0 {
            return bad("thread count must be at least 1");
        }
        Ok(())
    }
}

/// Scene plus its triangle index.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    scene: Scene,
    index: SpatialIndex,
}

impl PreparedScene {
    pub fn new(scene: Scene) -> Self {
        let index = SpatialIndex::build(scene.triangles());
        PreparedScene { scene, index }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }
}

/// Camera used when the scene file declares none.
pub fn default_camera() -> Camera {
    Camera {
        position: Vec3::new(0.0, 0.0, 1.0),
        look_at: Vec3::ZERO,
        up: Vec3::new(0.0, 1.0, 0.0),
        vertical_fov_deg: 45.0,
        width: 1,
        height: 1,
    }
}

/// Scene camera at the settings' resolution.
pub fn resolve_camera(scene: &Scene, settings: &RenderSettings) -> Result<Camera, RenderError> {
    let camera = scene.camera.unwrap_or_else(default_camera).with_resolution(settings.width, settings.height);
    camera.validate().map_err(RenderError::Camera)?;
    Ok(camera)
}

/// Reflected radiance from the suns at a Lambertian hit, with a shadow ray
/// per sun: `sum_s rho/pi * L_s * max(0, n . w_s)` over unoccluded suns.
/// Specular materials have no response to a delta light and give zero.
pub fn direct_illumination(hit: &Hit, outgoing_dir: Vec3, lights: &[SunLight], scene: &PreparedScene) -> Spectrum {
    let grid = scene.scene.grid;
    let mut out = Spectrum::zero(grid);
    let MaterialKind::Lambertian { reflectance } = &scene.scene.materials[hit.material].kind else {
        return out;
    };
    if hit.normal.dot(outgoing_dir) <= 0.0 {
        return out;
    }
    for light in lights {
        if let Some(term) = lambert_direct(hit, reflectance, light) {
            if !scene.index.occluded(&GeoRay::new(hit.point, light.to_light()), RAY_EPS, f64::INFINITY) {
                out.add_assign(&term);
            }
        }
    }
    out
}

/// Spectral radiance arriving along `ray`, recursing through specular
/// interfaces until `ctx.max_depth`.
pub fn shade(ctx: &ShadeContext, index: &SpatialIndex, ray: &Ray) -> Spectrum {
    let mut out = Spectrum::zero(ctx.scene.grid);
    let mut stack = vec![PathVertex { ray: ray.clone(), node: 1 }];
    let mut emits = Vec::new();
    while let Some(v) = stack.pop() {
        let Some(hit) = index.intersect(&v.ray.geo(), RAY_EPS, f64::INFINITY) else {
            continue;
        };
        scatter_camera(ctx, &v, &hit, &mut emits);
        for e in emits.drain(..) {
            match e {
                Emit::Term { value, .. } => out.add_assign(&value),
                Emit::Shadow { ray, value, .. } => {
                    if !index.occluded(&ray, RAY_EPS, f64::INFINITY) {
                        out.add_assign(&value);
                    }
                }
                Emit::Child(c) => stack.push(c),
            }
        }
    }
    out
}

/// Photon pass: `n_photons` per sun from a disk perpendicular to the sun
/// covering the scene, each carrying an equal share of the power crossing
/// it. Returns `(global, caustic)`.
pub fn trace_photons(
    scene: &PreparedScene,
    lights: &[SunLight],
    n_photons: usize,
    rng_seed: u64,
    max_depth: u32,
) -> (PhotonMap, PhotonMap) {
    let settings = RenderSettings { seed: rng_seed, max_depth, ..RenderSettings::default() };
    let mut shading_scene = scene.scene.clone();
    shading_scene.lights = lights.to_vec();
    let ctx = ShadeContext::new(&shading_scene, None, &settings);
    let maps = trace_photon_maps(&ctx, &scene.index, n_photons);
    (maps.global, maps.caustic)
}

pub(crate) fn trace_photon_maps(ctx: &ShadeContext, index: &SpatialIndex, n_photons: usize) -> PhotonMaps {
    let lights = ctx.lights();
    let emitted = n_photons * lights.len();
    let Some(emitter) = Emitter::new(&ctx.scene.bounds()).filter(|_| n_photons > 0) else {
        return transport::build_maps(Vec::new(), emitted);
    };
    let mut deposits = Vec::new();
    for (li, light) in lights.iter().enumerate() {
        for i in 0..n_photons {
            let id = (li * n_photons + i) as u64;
            let mut path = transport::emit_photon(ctx.seed, &emitter, light, id, n_photons);
            while let Some(hit) = index.intersect(&path.ray, RAY_EPS, f64::INFINITY) {
                let (deposit, next) = scatter_photon(ctx, &path, &hit);
                deposits.extend(deposit);
                match next {
                    Some(n) => path = n,
                    None => break,
                }
            }
        }
    }
    transport::build_maps(deposits, emitted)
}

/// Renders scanlines top to bottom on `settings.threads` workers.
pub fn render_image(scene: &PreparedScene, settings: &RenderSettings) -> Result<ImageAccumulator, RenderError> {
    settings.validate()?;
    let camera = resolve_camera(&scene.scene, settings)?;
    let maps = photon_pass(scene, settings);
    let ctx = ShadeContext::new(&scene.scene, maps.as_ref(), settings);
    let acc = ImageAccumulator::new(settings.width, settings.height);
    let next_row = AtomicUsize::new(0);
    let workers = settings.threads.min(settings.height);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut emits = Vec::new();
                let mut stack = Vec::new();
                loop {
                    let y = next_row.fetch_add(1, Ordering::Relaxed);
                    if y >= settings.height {
                        break;
                    }
                    for x in 0..settings.width {
                        let pixel = y * settings.width + x;
                        render_pixel(&ctx, &scene.index, &camera, settings, pixel, &acc, &mut stack, &mut emits);
                    }
                }
            });
        }
    });
    Ok(acc)
}

pub(crate) fn photon_pass(scene: &PreparedScene, settings: &RenderSettings) -> Option<PhotonMaps> {
    (settings.n_photons > 0).then(|| {
        let ctx = ShadeContext::new(&scene.scene, None, settings);
        trace_photon_maps(&ctx, &scene.index, settings.n_photons)
    })
}

#[allow(clippy::too_many_arguments)]
fn render_pixel(
    ctx: &ShadeContext,
    index: &SpatialIndex,
    camera: &Camera,
    settings: &RenderSettings,
    pixel: usize,
    acc: &ImageAccumulator,
    stack: &mut Vec<PathVertex>,
    emits: &mut Vec<Emit>,
) {
    let spp = settings.samples_per_pixel;
    acc.add_samples(pixel, spp);
    for sample in 0..spp {
        stack.push(camera_vertex(camera, ctx.scene.grid, settings.seed, pixel as u64, sample, spp));
        while let Some(v) = stack.pop() {
            let Some(hit) = index.intersect(&v.ray.geo(), RAY_EPS, f64::INFINITY) else {
                continue;
            };
            scatter_camera(ctx, &v, &hit, emits);
            for e in emits.drain(..) {
                match e {
                    Emit::Term { term, value } => deposit(ctx, acc, pixel, TermKey { sample, node: v.node, term }, &value),
                    Emit::Shadow { term, ray, value } => {
                        if !index.occluded(&ray, RAY_EPS, f64::INFINITY) {
                            deposit(ctx, acc, pixel, TermKey { sample, node: v.node, term }, &value);
                        }
                    }
                    Emit::Child(c) => stack.push(c),
                }
            }
        }
    }
}

pub(crate) fn deposit(ctx: &ShadeContext, acc: &ImageAccumulator, pixel: usize, key: TermKey, value: &Spectrum) {
    let xyz = ctx.xyz(value);
    if xyz != [0.0; 3] {
        acc.add_term(pixel, key, xyz);
    }
}
