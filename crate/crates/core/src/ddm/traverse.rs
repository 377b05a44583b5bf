//! Moving a ray through one sub-domain and handing it to the next.
//!
//! Rays keep their original origin; a sub-domain only narrows the parameter
//! window in which hits are accepted. Hit points therefore come out exactly
//! as a whole-scene query would compute them.

use super::message::RayMessage;
use super::partition::{LoadedSubDomain, Partition, BOX_EPS};
use super::DdmError;
use crate::scene::{GeoRay, Hit};

/// Entry points may sit this far outside the receiving box (meters).
pub const ENTRY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Hit(Hit),
    Exit { neighbor: usize, message: RayMessage },
    Escape,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Segment {
    Hit(Hit),
    Blocked,
    Exit { next: usize, t_enter: f64 },
    Escape,
}

/// Sub-domain to continue in at parameter `t`: among boxes other than
/// `current` that contain the point, the one the ray stays in longest.
/// Neighbors across a face are tried before edge and corner neighbors.
pub(crate) fn route(partition: &Partition, current: Option<usize>, neighbors: &[usize], ray: &GeoRay, t: f64) -> Option<usize> {
    let p = ray.at(t);
    let pick = |candidates: &mut dyn Iterator<Item = usize>| {
        let mut best: Option<(usize, f64)> = None;
        for c in candidates {
            if Some(c) == current {
                continue;
            }
            let b = &partition.subdomains[c].bounds;
            if !b.contains(p, BOX_EPS) {
                continue;
            }
            let Some((_, t1)) = b.ray_interval(ray.origin, ray.direction) else {
                continue;
            };
            if t1 > t && best.map_or(true, |(_, bt)| t1 > bt) {
                best = Some((c, t1));
            }
        }
        best.map(|b| b.0)
    };
    pick(&mut neighbors.iter().copied()).or_else(|| pick(&mut (0..partition.len())))
}

/// First sub-domain along the ray at or after `t_start`, with the
/// parameter where the ray enters it. `None` when the ray misses the scene.
pub(crate) fn locate(partition: &Partition, ray: &GeoRay, t_start: f64) -> Option<(usize, f64)> {
    if partition.bounds.is_empty() {
        return None;
    }
    let (g0, g1) = partition.bounds.ray_interval(ray.origin, ray.direction)?;
    let t = t_start.max(g0);
    if g1 < t {
        return None;
    }
    route(partition, None, &[], ray, t).map(|s| (s, t))
}

/// Advances a ray from `t_enter` through `sub`. With `any_hit` the first
/// blocker found ends the segment as `Blocked`.
pub(crate) fn advance_segment(
    partition: &Partition,
    sub: &LoadedSubDomain,
    ray: &GeoRay,
    t_enter: f64,
    t_min: f64,
    any_hit: bool,
) -> Result<Segment, DdmError> {
    let entry = ray.at(t_enter);
    if !sub.bounds.contains(entry, ENTRY_TOLERANCE) {
        return Err(DdmError::Protocol(format!(
            "entry point ({}, {}, {}) lies outside sub-domain {}",
            entry.x, entry.y, entry.z, sub.id
        )));
    }
    let t_exit = sub.bounds.ray_interval(ray.origin, ray.direction).map_or(t_enter, |(_, t1)| t1.max(t_enter));
    let lo = t_min.max(t_enter - BOX_EPS);
    let hi = t_exit + BOX_EPS;
    if any_hit {
        if sub.index.occluded(ray, lo, hi) {
            return Ok(Segment::Blocked);
        }
    } else if let Some(hit) = sub.index.intersect(ray, lo, hi) {
        return Ok(Segment::Hit(hit));
    }
    Ok(match route(partition, Some(sub.id), &sub.neighbors, ray, t_exit) {
        Some(next) => Segment::Exit { next, t_enter: t_exit },
        None => Segment::Escape,
    })
}

/// One step of the migration protocol: the nearest hit inside `sub`
/// (with `t` measured from the entry point), or the message to hand to the
/// neighbor the ray crosses into, or escape from the scene.
pub fn advance_ray(msg: &RayMessage, sub: &LoadedSubDomain, partition: &Partition) -> Result<Advance, DdmError> {
    let ray = GeoRay::new(msg.entry_point, msg.direction);
    Ok(match advance_segment(partition, sub, &ray, 0.0, 0.0, false)? {
        Segment::Hit(h) => Advance::Hit(h),
        Segment::Exit { next, t_enter } => Advance::Exit {
            neighbor: next,
            message: RayMessage { entry_point: ray.at(t_enter), partial_t: msg.partial_t + t_enter, ..msg.clone() },
        },
        Segment::Escape | Segment::Blocked => Advance::Escape,
    })
}
