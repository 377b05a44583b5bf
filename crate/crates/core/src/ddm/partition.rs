//! Spatial decomposition into axis-aligned sub-domains, their on-disk
//! partition files, and the loader that brings one back into memory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::DdmError;
use crate::math::{Aabb, Vec3};
use crate::scene::{mesh_triangles, parse_mesh_blocks, Scene, SpatialIndex};

/// Distance tolerance for box containment and segment windows (meters).
pub const BOX_EPS: f64 = 1e-7;
/// Boxes are grown by this much when deciding triangle membership, so any
/// hit a segment window can accept belongs to that sub-domain.
pub const REPLICATION_EPS: f64 = 2e-7;

/// Face shared with a neighboring sub-domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub neighbor: usize,
    pub axis: usize,
    /// 0 when the face is on this box's min side, 1 on its max side.
    pub side: usize,
    /// The shared rectangle (flat along `axis`).
    pub face: Aabb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubDomain {
    pub id: usize,
    pub bounds: Aabb,
    /// Indices into `Scene::triangles()` of every triangle touching the box.
    pub triangles: Vec<usize>,
    pub interfaces: Vec<Interface>,
}

impl SubDomain {
    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.interfaces.iter().map(|i| i.neighbor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Union of all sub-domain boxes (the scene bounds).
    pub bounds: Aabb,
    pub subdomains: Vec<SubDomain>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }
}

/// Recursive midpoint split along the longest axis, `log2(n)` levels deep.
pub fn split_boxes(bounds: Aabb, n_subdomains: usize) -> Vec<Aabb> {
    fn rec(b: Aabb, levels: u32, out: &mut Vec<Aabb>) {
        if levels == 0 {
            out.push(b);
            return;
        }
        let a = b.longest_axis();
        let mid = 0.5 * (b.min[a] + b.max[a]);
        let (mut lo, mut hi) = (b, b);
        set(&mut lo.max, a, mid);
        set(&mut hi.min, a, mid);
        rec(lo, levels - 1, out);
        rec(hi, levels - 1, out);
    }
    let mut out = Vec::with_capacity(n_subdomains);
    rec(bounds, n_subdomains.trailing_zeros(), &mut out);
    out
}

fn set(v: &mut Vec3, axis: usize, value: f64) {
    match axis {
        0 => v.x = value,
        1 => v.y = value,
        _ => v.z = value,
    }
}

/// Separating-axis overlap test between a triangle and a box (boundaries
/// count as overlapping).
pub fn triangle_overlaps_box(tri: &[Vec3; 3], b: &Aabb) -> bool {
    let c = b.center();
    let h = b.extent() * 0.5;
    let v = tri.map(|p| p - c);
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > h[a] || hi < -h[a] {
            return false;
        }
    }
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let separated = |axis: Vec3| {
        if axis.length_squared() == 0.0 {
            return false;
        }
        let p = v.map(|q| q.dot(axis));
        let r = h.x * axis.x.abs() + h.y * axis.y.abs() + h.z * axis.z.abs();
        p[0].min(p[1]).min(p[2]) > r || p[0].max(p[1]).max(p[2]) < -r
    };
    if separated(e[0].cross(e[1])) {
        return false;
    }
    let units = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    !e.iter().any(|edge| units.iter().any(|u| separated(u.cross(*edge))))
}

/// Overlap of `[a0, a1]` and `[b0, b1]` as a face extent: positive length,
/// or a shared point when both intervals are degenerate.
fn face_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> Option<(f64, f64)> {
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if hi > lo || (hi == lo && a0 == a1 && b0 == b1) {
        Some((lo, hi))
    } else {
        None
    }
}

fn interfaces_of(boxes: &[Aabb], i: usize) -> Vec<Interface> {
    let a = &boxes[i];
    let mut out = Vec::new();
    for (j, b) in boxes.iter().enumerate() {
        if j == i {
            continue;
        }
        for axis in 0..3 {
            let side = if a.max[axis] == b.min[axis] {
                1
            } else if a.min[axis] == b.max[axis] {
                0
            } else {
                continue;
            };
            let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
            let (Some(r1), Some(r2)) = (
                face_overlap(a.min[o1], a.max[o1], b.min[o1], b.max[o1]),
                face_overlap(a.min[o2], a.max[o2], b.min[o2], b.max[o2]),
            ) else {
                continue;
            };
            let plane = if side == 1 { a.max[axis] } else { a.min[axis] };
            let mut min = Vec3::ZERO;
            let mut max = Vec3::ZERO;
            set(&mut min, axis, plane);
            set(&mut max, axis, plane);
            set(&mut min, o1, r1.0);
            set(&mut max, o1, r1.1);
            set(&mut min, o2, r2.0);
            set(&mut max, o2, r2.1);
            out.push(Interface { neighbor: j, axis, side, face: Aabb::new(min, max) });
            break;
        }
    }
    out
}

/// Splits the scene into `n_subdomains` boxes (a power of two) and assigns
/// every triangle to every box it touches.
pub fn partition(scene: &Scene, n_subdomains: usize) -> Result<Partition, DdmError> {
    if n_subdomains == 0 || !n_subdomains.is_power_of_two() {
        return Err(DdmError::Config(format!("sub-domain count {n_subdomains} is not a power of two")));
    }
    let triangles = scene.triangles();
    let bounds = scene.bounds();
    if triangles.is_empty() {
        let sub = SubDomain { id: 0, bounds, triangles: Vec::new(), interfaces: Vec::new() };
        return Ok(Partition { bounds, subdomains: vec![sub] });
    }
    let boxes = split_boxes(bounds, n_subdomains);
    let grown: Vec<Aabb> = boxes.iter().map(|b| b.expanded(REPLICATION_EPS)).collect();
    let mut members = vec![Vec::new(); boxes.len()];
    for (ti, tri) in triangles.iter().enumerate() {
        for (bi, b) in grown.iter().enumerate() {
            if triangle_overlaps_box(&tri.p, b) {
                members[bi].push(ti);
            }
        }
    }
    let subdomains = members
        .into_iter()
        .enumerate()
        .map(|(id, triangles)| SubDomain { id, bounds: boxes[id], triangles, interfaces: interfaces_of(&boxes, id) })
        .collect();
    Ok(Partition { bounds, subdomains })
}

/// `(mesh, triangle)` of every flattened triangle, in `Scene::triangles()`
/// order.
fn triangle_origins(scene: &Scene) -> Vec<(usize, usize)> {
    scene
        .meshes
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| (0..m.triangles.len()).map(move |ti| (mi, ti)))
        .collect()
}

/// Text of one partition file: the header line, then one mesh block per
/// triangle carrying its original vertex data so the loaded triangles are
/// bit-identical to the scene's.
pub fn partition_file_text(scene: &Scene, sub: &SubDomain) -> String {
    let origins = triangle_origins(scene);
    let b = &sub.bounds;
    let mut out = format!(
        "subdomain {} {:?} {:?} {:?} {:?} {:?} {:?} interfaces",
        sub.id, b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
    );
    for n in sub.neighbors() {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
    for &ti in &sub.triangles {
        let (mi, k) = origins[ti];
        let mesh = &scene.meshes[mi];
        let tri = &mesh.triangles[k];
        let _ = writeln!(out, "mesh {}", scene.materials[mesh.material].name);
        for fv in tri {
            let v = mesh.vertices[fv.v];
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        let mut uvs = 0;
        let mut normals = 0;
        for fv in tri {
            if let Some(i) = fv.uv {
                let uv = mesh.uvs[i];
                let _ = writeln!(out, "vt {:?} {:?}", uv.x, uv.y);
            }
            if let Some(i) = fv.n {
                let n = mesh.normals[i];
                let _ = writeln!(out, "vn {:?} {:?} {:?}", n.x, n.y, n.z);
            }
        }
        out.push('f');
        for (k, fv) in tri.iter().enumerate() {
            let _ = write!(out, " {}", k + 1);
            match (fv.uv, fv.n) {
                (None, None) => {}
                (Some(_), None) => {
                    uvs += 1;
                    let _ = write!(out, "/{uvs}");
                }
                (None, Some(_)) => {
                    normals += 1;
                    let _ = write!(out, "//{normals}");
                }
                (Some(_), Some(_)) => {
                    uvs += 1;
                    normals += 1;
                    let _ = write!(out, "/{uvs}/{normals}");
                }
            }
        }
        out.push_str("\nend\n");
    }
    out
}

/// Writes `subdomain_<id>.part` for every sub-domain into `dir`.
pub fn write_partition_files(scene: &Scene, partition: &Partition, dir: &Path) -> Result<Vec<PathBuf>, DdmError> {
    partition
        .subdomains
        .iter()
        .map(|sub| {
            let path = dir.join(format!("subdomain_{}.part", sub.id));
            fs::write(&path, partition_file_text(scene, sub)).map_err(|source| DdmError::Io { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}

/// Sub-domain geometry in memory.
#[derive(Debug)]
pub struct LoadedSubDomain {
    pub id: usize,
    pub bounds: Aabb,
    pub neighbors: Vec<usize>,
    pub index: SpatialIndex,
}

struct Header {
    id: usize,
    bounds: Aabb,
    neighbors: Vec<usize>,
}

fn parse_header(line: &str, path: &Path) -> Result<Header, DdmError> {
    let bad = |msg: &str| DdmError::Load { path: path.to_path_buf(), msg: format!("header: {msg}") };
    let words: Vec<&str> = line.split_whitespace().collect();
    if words.len() < 9 || words[0] != "subdomain" || words[8] != "interfaces" {
        return Err(bad("expected 'subdomain id box(6) interfaces ...'"));
    }
    let id = words[1].parse().map_err(|_| bad("bad id"))?;
    let r: Vec<f64> = words[2..8].iter().map(|w| w.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad("bad box"))?;
    let neighbors = words[9..].iter().map(|w| w.parse()).collect::<Result<_, _>>().map_err(|_| bad("bad neighbor"))?;
    Ok(Header { id, bounds: Aabb::new(Vec3::new(r[0], r[1], r[2]), Vec3::new(r[3], r[4], r[5])), neighbors })
}

/// Reads a partition file and builds its index. `load_cost` is slept before
/// the build to emulate fetching a large model.
pub fn load_subdomain(path: &Path, scene: &Scene, load_cost: Duration) -> Result<LoadedSubDomain, DdmError> {
    let text = fs::read_to_string(path).map_err(|source| DdmError::Io { path: path.to_path_buf(), source })?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let header = parse_header(first, path)?;
    let meshes = parse_mesh_blocks(rest, 2, &scene.materials)
        .map_err(|e| DdmError::Load { path: path.to_path_buf(), msg: e.to_string() })?;
    if !load_cost.is_zero() {
        std::thread::sleep(load_cost);
    }
    let index = SpatialIndex::build(mesh_triangles(&meshes));
    Ok(LoadedSubDomain { id: header.id, bounds: header.bounds, neighbors: header.neighbors, index })
}
