//! Photon storage: a balanced kd-tree laid out in place, with k-nearest
//! queries and the density estimate built on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::math::{Aabb, Vec3};
use crate::scene::Hit;
use crate::spectral::Spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct Photon {
    pub position: Vec3,
    /// Direction of travel when the photon arrived.
    pub incident_direction: Vec3,
    pub flux: Spectrum,
}

/// Balanced kd-tree: the subtree over `photons[lo..hi]` keeps its splitting
/// photon at `(lo + hi) / 2`, left half below it, right half above.
#[derive(Debug, Clone, Default)]
pub struct PhotonMap {
    photons: Vec<Photon>,
    axes: Vec<u8>,
    emitted_count: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.dist2.total_cmp(&o.dist2).then(self.index.cmp(&o.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl PhotonMap {
    /// Builds the tree. The layout depends only on the input order.
    pub fn build(mut photons: Vec<Photon>, emitted_count: usize) -> Self {
        let mut axes = vec![0u8; photons.len()];
        let n = photons.len();
        balance(&mut photons, &mut axes, 0, n);
        PhotonMap { photons, axes, emitted_count }
    }

    pub fn empty() -> Self {
        PhotonMap::default()
    }

    pub fn len(&self) -> usize {
        self.photons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.photons.is_empty()
    }

    pub fn emitted_count(&self) -> usize {
        self.emitted_count
    }

    pub fn photons(&self) -> &[Photon] {
        &self.photons
    }

    /// Per-wavelength sum of stored flux.
    pub fn total_flux(&self) -> Option<Spectrum> {
        let mut it = self.photons.iter();
        let mut sum = it.next()?.flux.clone();
        for p in it {
            sum.add_assign(&p.flux);
        }
        Some(sum)
    }

    /// The `k` photons nearest to `p` within `r_max`, closest first, as
    /// `(squared distance, photon)` pairs.
    pub fn nearest(&self, p: Vec3, k: usize, r_max: f64) -> Vec<(f64, &Photon)> {
        if k == 0 || self.photons.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(p, k, r_max * r_max, 0, self.photons.len(), &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| (c.dist2, &self.photons[c.index])).collect()
    }

    fn search(&self, p: Vec3, k: usize, r2: f64, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let photon = &self.photons[mid];
        let axis = self.axes[mid] as usize;
        let d = p[axis] - photon.position[axis];
        let (near, far) = if d < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(p, k, r2, near.0, near.1, heap);

        let dist2 = (photon.position - p).length_squared();
        if dist2 <= r2 {
            let c = Candidate { dist2, index: mid };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        }
        let bound = if heap.len() < k { r2 } else { heap.peek().unwrap().dist2 };
        if d * d <= bound {
            self.search(p, k, r2, far.0, far.1, heap);
        }
    }
}

fn balance(photons: &mut [Photon], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mut b = Aabb::empty();
    for ph in &photons[lo..hi] {
        b.grow(ph.position);
    }
    let axis = b.longest_axis();
    let mid = (lo + hi) / 2;
    photons[lo..hi].select_nth_unstable_by(mid - lo, |a, c| a.position[axis].total_cmp(&c.position[axis]));
    axes[mid] = axis as u8;
    balance(photons, axes, lo, mid);
    balance(photons, axes, mid + 1, hi);
}

/// Density estimate of reflected radiance at a Lambertian point:
/// `sum(rho/pi * flux) / (pi r^2)` over the `k` nearest photons within
/// `r_max`, `r` being the distance to the farthest one gathered. Photons
/// that arrived from the far side of the surface contribute nothing.
pub fn estimate_radiance(
    map: &PhotonMap,
    hit: &Hit,
    outgoing_dir: Vec3,
    k: usize,
    r_max: f64,
    reflectance: &Spectrum,
) -> Spectrum {
    let mut out = Spectrum::zero(*reflectance.grid());
    let gathered = map.nearest(hit.point, k, r_max);
    let Some(&(r2, _)) = gathered.last() else {
        return out;
    };
    if r2 <= 0.0 {
        return out;
    }
    let n = if hit.normal.dot(outgoing_dir) >= 0.0 { hit.normal } else { -hit.normal };
    let mut sum = vec![0.0; reflectance.len()];
    for (_, ph) in &gathered {
        if ph.incident_direction.dot(n) >= 0.0 {
            continue;
        }
        for (s, f) in sum.iter_mut().zip(ph.flux.values()) {
            *s += f;
        }
    }
    let scale = 1.0 / (PI * PI * r2);
    out = Spectrum::new(
        *reflectance.grid(),
        sum.iter().zip(reflectance.values()).map(|(s, rho)| rho * s * scale).collect(),
    )
    .expect("non-negative estimate");
    out
}
