//! Output buffer with per-cell exclusive updates.
//!
//! Every contribution is recorded under a key naming the camera sample, the
//! node of the specular path tree it came from, and the term at that node.
//! Resolving a pixel sorts its terms by key before summing, so the result
//! does not depend on the order in which concurrent writers arrived.

use parking_lot::Mutex;

use crate::colorimetry::Xyz;

/// Identifies one additive term of a pixel estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub sample: u32,
    /// Heap-numbered node of the specular path tree: the camera ray is 1,
    /// the reflected child of node `p` is `2p`, the transmitted one `2p + 1`.
    pub node: u64,
    /// Light index for direct terms, followed by the caustic and global
    /// estimates.
    pub term: u32,
}

#[derive(Debug, Default)]
struct Cell {
    terms: Vec<(TermKey, [f64; 3])>,
    samples: u32,
}

#[derive(Debug)]
pub struct ImageAccumulator {
    width: usize,
    height: usize,
    cells: Vec<Mutex<Cell>>,
}

impl ImageAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let cells = (0..width * height).map(|_| Mutex::new(Cell::default())).collect();
        ImageAccumulator { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn add_term(&self, pixel: usize, key: TermKey, xyz: [f64; 3]) {
        self.cells[pixel].lock().terms.push((key, xyz));
    }

    pub fn add_samples(&self, pixel: usize, n: u32) {
        self.cells[pixel].lock().samples += n;
    }

    pub fn samples(&self, pixel: usize) -> u32 {
        self.cells[pixel].lock().samples
    }

    pub fn term_count(&self) -> usize {
        self.cells.iter().map(|c| c.lock().terms.len()).sum()
    }

    /// Mean XYZ of one pixel.
    pub fn pixel(&self, pixel: usize) -> Xyz {
        let cell = self.cells[pixel].lock();
        if cell.samples == 0 {
            return Xyz::default();
        }
        let mut terms = cell.terms.clone();
        let samples = cell.samples;
        drop(cell);
        terms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut sum = [0.0f64; 3];
        for (_, v) in &terms {
            for c in 0..3 {
                sum[c] += v[c];
            }
        }
        let n = samples as f64;
        Xyz::new(sum[0] / n, sum[1] / n, sum[2] / n)
    }

    /// Row-major XYZ buffer, row 0 at the top.
    pub fn xyz_buffer(&self) -> Vec<Xyz> {
        (0..self.cells.len()).map(|i| self.pixel(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn key(sample: u32, node: u64, term: u32) -> TermKey {
        TermKey { sample, node, term }
    }

    #[test]
    fn order_of_arrival_does_not_matter() {
        let vals = [[0.1, 1e16, 3.0], [0.2, -1e16, 1e-3], [0.3, 1.0, 7.0], [1e-17, 2.5, 0.0]];
        let a = ImageAccumulator::new(1, 1);
        let b = ImageAccumulator::new(1, 1);
        for (i, v) in vals.iter().enumerate() {
            a.add_term(0, key(0, 1, i as u32), *v);
        }
        for (i, v) in vals.iter().enumerate().rev() {
            b.add_term(0, key(0, 1, i as u32), *v);
        }
        a.add_samples(0, 2);
        b.add_samples(0, 2);
        assert_eq!(a.pixel(0), b.pixel(0));
    }

    #[test]
    fn empty_pixel_is_black() {
        let a = ImageAccumulator::new(2, 1);
        a.add_term(1, key(0, 1, 0), [1.0, 1.0, 1.0]);
        assert_eq!(a.pixel(0), Xyz::default());
        // no samples recorded yet
        assert_eq!(a.pixel(1), Xyz::default());
        a.add_samples(1, 4);
        assert_eq!(a.pixel(1), Xyz::new(0.25, 0.25, 0.25));
    }

    #[test]
    fn concurrent_writers_to_one_cell_serialize() {
        let acc = Arc::new(ImageAccumulator::new(1, 1));
        std::thread::scope(|s| {
            for t in 0..4u32 {
                let acc = Arc::clone(&acc);
                s.spawn(move || {
                    for i in 0..1000u32 {
                        acc.add_term(0, key(t, i as u64, 0), [1.0, 0.0, 0.0]);
                    }
                    acc.add_samples(0, 1);
                });
            }
        });
        assert_eq!(acc.term_count(), 4000);
        assert_eq!(acc.pixel(0).x, 1000.0);
    }
}
