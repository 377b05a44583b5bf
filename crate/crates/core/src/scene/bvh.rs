use crate::math::{Aabb, Vec2, Vec3};

use super::{GeoRay, Hit, Triangle};

const MAX_LEAF_TRIANGLES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum BvhNode {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Interior { bounds: Aabb, left: usize, right: usize },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Interior { bounds, .. } => bounds,
        }
    }
}

/// Median-split bounding volume hierarchy over triangles; leaves hold at
/// most four triangles. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    triangles: Vec<Triangle>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl SpatialIndex {
    pub fn build(triangles: Vec<Triangle>) -> Self {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
        let bounds: Vec<Aabb> = triangles.iter().map(Triangle::bounds).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            build_node(&mut nodes, &mut order, 0, &centroids, &bounds);
        }
        SpatialIndex { triangles, order, nodes }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Triangle indices stored in a leaf.
    pub fn leaf_triangles(&self, start: usize, count: usize) -> &[usize] {
        &self.order[start..start + count]
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or_else(Aabb::empty, |n| *n.bounds())
    }

    /// Nearest hit with `t` in the open interval `(t_min, t_max)`.
    pub fn intersect(&self, ray: &GeoRay, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<(f64, usize, f64, f64)> = None;
        let mut t_best = t_max;
        self.traverse(ray, t_min, &mut t_best, |tri_idx, t, b1, b2| {
            best = Some((t, tri_idx, b1, b2));
            false
        });
        best.map(|(t, idx, b1, b2)| make_hit(&self.triangles[idx], idx, ray, t, b1, b2))
    }

    /// Whether any triangle blocks the ray within `(t_min, t_max)`.
    pub fn occluded(&self, ray: &GeoRay, t_min: f64, t_max: f64) -> bool {
        let mut found = false;
        let mut t_best = t_max;
        self.traverse(ray, t_min, &mut t_best, |_, _, _, _| {
            found = true;
            true
        });
        found
    }

    fn traverse(
        &self,
        ray: &GeoRay,
        t_min: f64,
        t_best: &mut f64,
        mut on_hit: impl FnMut(usize, f64, f64, f64) -> bool,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if slab(node.bounds(), ray.origin, inv, t_min, *t_best).is_none() {
                continue;
            }
            match *node {
                BvhNode::Leaf { start, count, .. } => {
                    for &ti in &self.order[start..start + count] {
                        if let Some((t, b1, b2)) = intersect_triangle(&self.triangles[ti], ray) {
                            if t > t_min && t < *t_best {
                                *t_best = t;
                                if on_hit(ti, t, b1, b2) {
                                    return;
                                }
                            }
                        }
                    }
                }
                BvhNode::Interior { left, right, .. } => {
                    let dl = slab(self.nodes[left].bounds(), ray.origin, inv, t_min, *t_best);
                    let dr = slab(self.nodes[right].bounds(), ray.origin, inv, t_min, *t_best);
                    match (dl, dr) {
                        (Some(a), Some(b)) => {
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    order: &mut [usize],
    offset: usize,
    centroids: &[Vec3],
    tri_bounds: &[Aabb],
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in order.iter() {
        bounds = bounds.union(&tri_bounds[i]);
        cbounds.grow(centroids[i]);
    }
    let index = nodes.len();
    if order.len() <= MAX_LEAF_TRIANGLES {
        nodes.push(BvhNode::Leaf { bounds, start: offset, count: order.len() });
        return index;
    }
    nodes.push(BvhNode::Leaf { bounds, start: offset, count: 0 });
    let axis = cbounds.longest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |a, b| {
        centroids[*a][axis].total_cmp(&centroids[*b][axis]).then(a.cmp(b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, centroids, tri_bounds);
    let right = build_node(nodes, hi, offset + mid, centroids, tri_bounds);
    nodes[index] = BvhNode::Interior { bounds, left, right };
    index
}

/// Entry distance of the ray into `b` clipped to `[t_min, t_max]`.
fn slab(b: &Aabb, origin: Vec3, inv: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        let mut ta = (b.min[a] - origin[a]) * inv[a];
        let mut tb = (b.max[a] - origin[a]) * inv[a];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // Conservative far bound so flat boxes and shared faces survive rounding.
        tb *= 1.0 + 1e-12;
        // NaN (0 * inf on a face) keeps the current bounds.
        if ta > t0 {
            t0 = ta;
        }
        if tb < t1 {
            t1 = tb;
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Möller–Trumbore. Returns `(t, b1, b2)` with barycentrics of vertices 1
/// and 2; edges are inclusive.
pub(crate) fn intersect_triangle(tri: &Triangle, ray: &GeoRay) -> Option<(f64, f64, f64)> {
    let e1 = tri.p[1] - tri.p[0];
    let e2 = tri.p[2] - tri.p[0];
    let pvec = ray.direction.cross(e2);
    let det = e1.dot(pvec);
    let area2 = e1.cross(e2).length();
    if det.abs() <= 1e-12 * area2 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri.p[0];
    let b1 = tvec.dot(pvec) * inv_det;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let b2 = ray.direction.dot(qvec) * inv_det;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    t.is_finite().then_some((t, b1, b2))
}

fn make_hit(tri: &Triangle, idx: usize, ray: &GeoRay, t: f64, b1: f64, b2: f64) -> Hit {
    let b0 = 1.0 - b1 - b2;
    let geo = tri.geometric_normal();
    let front_face = geo.dot(ray.direction) < 0.0;
    let normal = if front_face { geo } else { -geo };
    let mut shading = (tri.n[0] * b0 + tri.n[1] * b1 + tri.n[2] * b2).normalized();
    if shading.length_squared() == 0.0 {
        shading = normal;
    } else if shading.dot(normal) < 0.0 {
        shading = -shading;
    }
    let uv = Vec2::new(
        tri.uv[0].x * b0 + tri.uv[1].x * b1 + tri.uv[2].x * b2,
        tri.uv[0].y * b0 + tri.uv[1].y * b1 + tri.uv[2].y * b2,
    );
    Hit {
        t,
        point: ray.at(t),
        normal,
        shading_normal: shading,
        uv,
        material: tri.material,
        front_face,
        triangle: idx,
    }
}

/// Nearest hit through the index.
pub fn intersect(ray: &GeoRay, index: &SpatialIndex, t_min: f64, t_max: f64) -> Option<Hit> {
    index.intersect(ray, t_min, t_max)
}

/// Linear scan over every triangle; reference for the hierarchy.
pub fn brute_force_intersect(ray: &GeoRay, triangles: &[Triangle], t_min: f64, t_max: f64) -> Option<Hit> {
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (i, tri) in triangles.iter().enumerate() {
        if let Some((t, b1, b2)) = intersect_triangle(tri, ray) {
            if t > t_min && t < t_max && best.map_or(true, |b| t < b.0) {
                best = Some((t, i, b1, b2));
            }
        }
    }
    best.map(|(t, i, b1, b2)| make_hit(&triangles[i], i, ray, t, b1, b2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri(p0: Vec3, p1: Vec3, p2: Vec3) -> Triangle {
        let n = (p1 - p0).cross(p2 - p0).normalized();
        Triangle {
            p: [p0, p1, p2],
            n: [n; 3],
            uv: [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            material: 0,
        }
    }

    fn unit_tri(z: f64) -> Triangle {
        tri(Vec3::new(0.0, 0.0, z), Vec3::new(1.0, 0.0, z), Vec3::new(0.0, 1.0, z))
    }

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<Triangle> {
        let mut out = Vec::new();
        while out.len() < n {
            let c = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let mut r = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = tri(c + r(), c + r(), c + r());
            if t.area() > 1e-6 {
                out.push(t);
            }
        }
        out
    }

    #[test]
    fn single_triangle_is_single_leaf() {
        let idx = SpatialIndex::build(vec![unit_tri(0.0)]);
        assert_eq!(idx.nodes().len(), 1);
        assert!(matches!(idx.nodes()[0], BvhNode::Leaf { count: 1, .. }));
        assert!(SpatialIndex::build(Vec::new()).nodes().is_empty());
    }

    #[test]
    fn centroid_hit_and_parallel_miss() {
        let t = unit_tri(0.0);
        let idx = SpatialIndex::build(vec![t]);
        let c = t.centroid();
        let ray = GeoRay::new(c + Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0));
        let hit = idx.intersect(&ray, 0.0, f64::INFINITY).unwrap();
        assert!((hit.t - 1.0).abs() < 1e-12);
        assert!((hit.uv.x - 1.0 / 3.0).abs() < 1e-12 && (hit.uv.y - 1.0 / 3.0).abs() < 1e-12);
        assert!(hit.normal.dot(ray.direction) < 0.0);
        assert!(hit.front_face);

        let par = GeoRay::new(Vec3::new(-1.0, 0.2, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert!(idx.intersect(&par, 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn nearer_of_stacked_triangles() {
        let idx = SpatialIndex::build(vec![unit_tri(0.0), unit_tri(0.5)]);
        let ray = GeoRay::new(Vec3::new(0.2, 0.2, 2.0), Vec3::new(0.0, 0.0, -1.0));
        let hit = idx.intersect(&ray, 0.0, f64::INFINITY).unwrap();
        assert!((hit.t - 1.5).abs() < 1e-12);
        let back = GeoRay::new(Vec3::new(0.2, 0.2, -2.0), Vec3::new(0.0, 0.0, 1.0));
        let hit = idx.intersect(&back, 0.0, f64::INFINITY).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        assert!(!hit.front_face);
        assert!(hit.normal.z < 0.0);
    }

    #[test]
    fn separated_clusters_split_at_root() {
        let mut tris = Vec::new();
        for i in 0..8 {
            let o = i as f64 * 0.1;
            tris.push(unit_tri(o));
            tris.push(tri(
                Vec3::new(100.0, 0.0, o),
                Vec3::new(101.0, 0.0, o),
                Vec3::new(100.0, 1.0, o),
            ));
        }
        let idx = SpatialIndex::build(tris);
        match idx.nodes()[0] {
            BvhNode::Interior { left, right, .. } => {
                assert!(!idx.nodes()[left].bounds().overlaps(idx.nodes()[right].bounds()));
            }
            _ => panic!("root should be interior"),
        }
    }

    fn check_structure(idx: &SpatialIndex) {
        let mut seen = vec![0usize; idx.triangles().len()];
        for node in idx.nodes() {
            match *node {
                BvhNode::Interior { bounds, left, right } => {
                    assert!(bounds.contains_box(idx.nodes()[left].bounds(), 0.0));
                    assert!(bounds.contains_box(idx.nodes()[right].bounds(), 0.0));
                }
                BvhNode::Leaf { bounds, start, count } => {
                    assert!(count <= MAX_LEAF_TRIANGLES);
                    for &t in idx.leaf_triangles(start, count) {
                        seen[t] += 1;
                        assert!(bounds.contains_box(&idx.triangles()[t].bounds(), 0.0));
                    }
                }
            }
        }
        assert!(seen.iter().all(|c| *c == 1));
    }

    #[test]
    fn hierarchy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tris = random_scene(&mut rng, 100);
        let idx = SpatialIndex::build(tris.clone());
        check_structure(&idx);
        for _ in 0..10_000 {
            let o = Vec3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .normalized();
            let ray = GeoRay::new(o, d);
            let a = idx.intersect(&ray, 0.0, f64::INFINITY);
            let b = brute_force_intersect(&ray, &tris, 0.0, f64::INFINITY);
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert!((a.t - b.t).abs() <= 1e-9 * b.t.abs());
                    assert!(a.normal.dot(d) < 0.0);
                    assert!((a.normal.length() - 1.0).abs() < 1e-6);
                }
                (a, b) => panic!("index {a:?} vs brute force {b:?}"),
            }
            assert_eq!(idx.occluded(&ray, 0.0, f64::INFINITY), b.is_some());
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tris = random_scene(&mut rng, 57);
        let a = SpatialIndex::build(tris.clone());
        let b = SpatialIndex::build(tris);
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.order, b.order);
    }
}
