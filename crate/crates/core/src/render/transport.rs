//! Interaction rules shared by the single-domain renderer and the
//! domain-decomposed scheduler. Both drive the same functions so that every
//! term and every stored photon comes out bit-for-bit the same.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::photon_map::{estimate_radiance, Photon, PhotonMap};
use super::{Ray, RayKind, RenderSettings, ROULETTE_DEPTH};
use crate::colorimetry::{integrate, ObserverCmf};
use crate::math::{Aabb, Vec3};
use crate::scene::{Camera, GeoRay, Hit, MaterialKind, Scene};
use crate::spectral::{fresnel_reflectance, sample_transmittance_map, snell_cos_t, ComplexIOR, Spectrum, WavelengthGrid};
use crate::sunlight::SunLight;

const CAMERA_STREAM: u64 = 1;
const EMIT_STREAM: u64 = 2;
const BOUNCE_STREAM: u64 = 3;

/// Independent generator for one `(stream, a, b)` coordinate. Nothing is
/// carried between draws, so results do not depend on scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, stream, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Global and caustic photon maps.
#[derive(Debug, Clone, Default)]
pub struct PhotonMaps {
    pub global: PhotonMap,
    pub caustic: PhotonMap,
}

/// Everything needed to shade a hit, independent of how rays are traced.
pub struct ShadeContext<'a> {
    pub scene: &'a Scene,
    pub maps: Option<&'a PhotonMaps>,
    pub gather_k: usize,
    pub gather_radius: f64,
    pub max_depth: u32,
    pub seed: u64,
    pub(crate) cmf: ObserverCmf,
    air: ComplexIOR,
}

impl<'a> ShadeContext<'a> {
    pub fn new(scene: &'a Scene, maps: Option<&'a PhotonMaps>, settings: &RenderSettings) -> Self {
        let diag = scene.bounds().diagonal();
        let default_radius = if diag > 0.0 { diag / 20.0 } else { 1.0 };
        ShadeContext {
            scene,
            maps,
            gather_k: settings.gather_k,
            gather_radius: settings.gather_radius.unwrap_or(default_radius),
            max_depth: settings.max_depth,
            seed: settings.seed,
            cmf: ObserverCmf::cie1931(&scene.grid),
            air: ComplexIOR::vacuum(scene.grid),
        }
    }

    pub fn lights(&self) -> &'a [SunLight] {
        &self.scene.lights
    }

    pub(crate) fn xyz(&self, s: &Spectrum) -> [f64; 3] {
        integrate(s.values(), &self.cmf).to_array()
    }
}

/// A camera-side ray together with its place in the specular path tree.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PathVertex {
    pub ray: Ray,
    pub node: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Emit {
    /// Contribution known at the hit.
    Term { term: u32, value: Spectrum },
    /// Contribution that counts only if `ray` escapes the scene unblocked.
    Shadow { term: u32, ray: GeoRay, value: Spectrum },
    Child(PathVertex),
}

/// Stratified, jittered primary ray for sample `sample` of `pixel_id`.
pub(crate) fn camera_vertex(
    camera: &Camera,
    grid: WavelengthGrid,
    seed: u64, pixel_id: u64, sample: u32, spp: u32) -> PathVertex {
    let nx = (spp as f64).sqrt().ceil() as u32;
    let ny = spp.div_ceil(nx);
    let (sx, sy) = (sample % nx, sample / nx);
    let mut rng = stream_rng(seed, CAMERA_STREAM, pixel_id, sample as u64);
    let jx = (sx as f64 + rng.gen::<f64>()) / nx as f64;
    let jy = (sy as f64 + rng.gen::<f64>()) / ny as f64;
    let w = camera.width as u64;
    let g = camera.generate_ray((pixel_id % w) as usize, (pixel_id / w) as usize, (jx, jy));
    PathVertex {
        ray: Ray {
            origin: g.origin,
            direction: g.direction,
            throughput: Spectrum::constant(grid, 1.0),
            depth: 0,
            pixel_id,
            kind: RayKind::Camera,
        },
        node: 1,
    }
}

fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    (d - n * (2.0 * d.dot(n))).normalized()
}

fn refract(d: Vec3, n: Vec3, eta: f64, cos_i: f64, cos_t: f64) -> Vec3 {
    (d * eta + n * (eta * cos_i - cos_t)).normalized()
}

/// Fresnel split at a specular surface.
struct Interface {
    reflected: Vec3,
    reflectance: Spectrum,
    /// Direction and per-wavelength weight of the transmitted ray.
    transmitted: Option<(Vec3, Spectrum)>,
}

fn specular_interface(ctx: &ShadeContext, kind: &MaterialKind, dir: Vec3, hit: &Hit) -> Option<Interface> {
    let n = hit.normal;
    let cos_i = (-dir.dot(n)).clamp(1e-9, 1.0);
    let grid = ctx.scene.grid;
    let fresnel = |outside: &ComplexIOR, inside: &ComplexIOR| {
        Spectrum::from_fn_indexed(grid, |i| {
            fresnel_reflectance(outside, inside, cos_i, i).expect("interface on the scene grid")
        })
    };
    match kind {
        MaterialKind::Lambertian { .. } => None,
        MaterialKind::Conductor { ior } => {
            Some(Interface { reflected: reflect(dir, n), reflectance: fresnel(&ctx.air, ior), transmitted: None })
        }
        MaterialKind::Dielectric { ior, bulk, solid } => {
            let (outside, inside) = if *solid && !hit.front_face { (ior, &ctx.air) } else { (&ctx.air, ior) };
            let r = fresnel(outside, inside);
            let mut t = r.map(|v| 1.0 - v);
            if let Some(map) = ctx.scene.texture_map(*bulk) {
                t.mul_assign(&sample_transmittance_map(map, hit.uv.x, hit.uv.y));
            }
            let tdir = if *solid {
                let (n1, n2) = (outside.n_at(550.0), inside.n_at(550.0));
                snell_cos_t(n1, n2, cos_i).map(|cos_t| refract(dir, n, n1 / n2, cos_i, cos_t))
            } else {
                Some(dir)
            };
            Some(Interface { reflected: reflect(dir, n), reflectance: r, transmitted: tdir.map(|d| (d, t)) })
        }
    }
}

/// Unoccluded direct term of one sun at a Lambertian hit:
/// `rho/pi * L_s * cos`, or `None` when the sun is behind the surface.
pub(crate) fn lambert_direct(hit: &Hit, reflectance: &Spectrum, light: &SunLight) -> Option<Spectrum> {
    let ws = light.to_light();
    if hit.normal.dot(ws) <= 0.0 {
        return None;
    }
    let cos = hit.shading_normal.dot(ws);
    if cos <= 0.0 {
        return None;
    }
    let e = light.emission.values();
    Some(Spectrum::from_fn_indexed(*reflectance.grid(), |i| {
        reflectance.values()[i] / PI * e[i] * cos
    }))
}

/// Local terms and specular children of a camera-side hit.
pub(crate) fn scatter_camera(ctx: &ShadeContext, v: &PathVertex, hit: &Hit, out: &mut Vec<Emit>) {
    let ray = &v.ray;
    let kind = &ctx.scene.materials[hit.material].kind;
    if let MaterialKind::Lambertian { reflectance } = kind {
        let lights = ctx.lights();
        for (s, light) in lights.iter().enumerate() {
            if let Some(l) = lambert_direct(hit, reflectance, light) {
                let value = &ray.throughput * &l;
                if !value.is_black() {
                    out.push(Emit::Shadow { term: s as u32, ray: GeoRay::new(hit.point, light.to_light()), value });
                }
            }
        }
        if let Some(maps) = ctx.maps {
            let wo = -ray.direction;
            for (j, map) in [&maps.caustic, &maps.global].into_iter().enumerate() {
                let est = estimate_radiance(map, hit, wo, ctx.gather_k, ctx.gather_radius, reflectance);
                let value = &ray.throughput * &est;
                if !value.is_black() {
                    out.push(Emit::Term { term: (lights.len() + j) as u32, value });
                }
            }
        }
        return;
    }
    if ray.depth >= ctx.max_depth {
        return;
    }
    let Some(iface) = specular_interface(ctx, kind, ray.direction, hit) else {
        return;
    };
    let mut child = |node: u64, dir: Vec3, weight: &Spectrum| {
        let throughput = &ray.throughput * weight;
        if throughput.is_black() {
            return;
        }
        out.push(Emit::Child(PathVertex {
            ray: Ray {
                origin: hit.point,
                direction: dir,
                throughput,
                depth: ray.depth + 1,
                pixel_id: ray.pixel_id,
                kind: RayKind::Specular,
            },
            node,
        }));
    };
    child(2 * v.node, iface.reflected, &iface.reflectance);
    if let Some((dir, t)) = &iface.transmitted {
        child(2 * v.node + 1, *dir, t);
    }
}

/// Source disk of the photon pass: perpendicular to each sun, covering the
/// bounding sphere of the scene.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Emitter {
    center: Vec3,
    radius: f64,
}

impl Emitter {
    pub fn new(bounds: &Aabb) -> Option<Self> {
        if bounds.is_empty() {
            return None;
        }
        Some(Emitter { center: bounds.center(), radius: (bounds.diagonal() * 0.5).max(1e-6) })
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhotonPath {
    pub ray: GeoRay,
    pub flux: Spectrum,
    /// Surface interactions so far.
    pub depth: u32,
    pub id: u64,
    pub specular_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MapKind {
    Global,
    Caustic,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Deposit {
    pub map: MapKind,
    pub id: u64,
    pub depth: u32,
    pub photon: Photon,
}

pub(crate) fn emit_photon(seed: u64, emitter: &Emitter, light: &SunLight, id: u64, n_photons: usize) -> PhotonPath {
    let mut rng = stream_rng(seed, EMIT_STREAM, id, 0);
    let d = light.direction;
    let (a, b) = d.orthonormal_basis();
    let r = emitter.radius * rng.gen::<f64>().sqrt();
    let phi = 2.0 * PI * rng.gen::<f64>();
    let origin = emitter.center - d * (2.0 * emitter.radius) + a * (r * phi.cos()) + b * (r * phi.sin());
    PhotonPath {
        ray: GeoRay::new(origin, d),
        flux: light.emission.scaled(emitter.area() / n_photons as f64),
        depth: 0,
        id,
        specular_only: true,
    }
}

fn cosine_hemisphere(n: Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let (a, b) = n.orthonormal_basis();
    (a * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalized()
}

/// Storage decision and continuation of a photon at a surface.
pub(crate) fn scatter_photon(ctx: &ShadeContext, p: &PhotonPath, hit: &Hit) -> (Option<Deposit>, Option<PhotonPath>) {
    let kind = &ctx.scene.materials[hit.material].kind;
    let d = p.depth;
    let mut rng = stream_rng(ctx.seed, BOUNCE_STREAM, p.id, d as u64);
    let next = |dir: Vec3, flux: Spectrum, specular: bool| {
        (!flux.is_black()).then(|| PhotonPath {
            ray: GeoRay::new(hit.point, dir),
            flux,
            depth: d + 1,
            id: p.id,
            specular_only: p.specular_only && specular,
        })
    };
    if let MaterialKind::Lambertian { reflectance } = kind {
        let deposit = (d >= 1).then(|| Deposit {
            map: if p.specular_only { MapKind::Caustic } else { MapKind::Global },
            id: p.id,
            depth: d,
            photon: Photon { position: hit.point, incident_direction: p.ray.direction, flux: p.flux.clone() },
        });
        if d >= ctx.max_depth {
            return (deposit, None);
        }
        let flux = if d >= ROULETTE_DEPTH {
            let survive = reflectance.mean();
            if survive <= 0.0 || rng.gen::<f64>() >= survive {
                return (deposit, None);
            }
            (&p.flux * reflectance).scaled(1.0 / survive)
        } else {
            &p.flux * reflectance
        };
        let dir = cosine_hemisphere(hit.normal, &mut rng);
        return (deposit, next(dir, flux, false));
    }
    if d >= ctx.max_depth {
        return (None, None);
    }
    let Some(iface) = specular_interface(ctx, kind, p.ray.direction, hit) else {
        return (None, None);
    };
    let p_reflect = iface.reflectance.mean();
    let u = rng.gen::<f64>();
    if u < p_reflect {
        let flux = (&p.flux * &iface.reflectance).scaled(1.0 / p_reflect);
        return (None, next(iface.reflected, flux, true));
    }
    match iface.transmitted {
        Some((dir, t)) if p_reflect < 1.0 => {
            let flux = (&p.flux * &t).scaled(1.0 / (1.0 - p_reflect));
            (None, next(dir, flux, true))
        }
        _ => (None, None),
    }
}

/// Splits deposits into the two maps in canonical `(photon id, depth)` order.
pub(crate) fn build_maps(mut deposits: Vec<Deposit>, emitted: usize) -> PhotonMaps {
    deposits.sort_by_key(|d| (d.id, d.depth));
    let (mut global, mut caustic) = (Vec::new(), Vec::new());
    for d in deposits {
        match d.map {
            MapKind::Global => global.push(d.photon),
            MapKind::Caustic => caustic.push(d.photon),
        }
    }
    PhotonMaps { global: PhotonMap::build(global, emitted), caustic: PhotonMap::build(caustic, emitted) }
}
