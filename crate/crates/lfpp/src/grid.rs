//! Dense row-major indexing for hypercubic site grids.
//!
//! A `Grid` covers `{0, ..., side-1}^d`. Coordinate 0 varies slowest; the
//! last coordinate is contiguous in memory. Left/right crossing queries run
//! along coordinate 0.

/// A `d`-dimensional hypercubic grid with `side` sites per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    dimension: usize,
    side: usize,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(dimension: usize, side: usize) -> Self {
        assert!(dimension >= 1 && side >= 1);
        let mut strides = vec![0usize; dimension];
        let mut acc = 1usize;
        for axis in (0..dimension).rev() {
            strides[axis] = acc;
            acc = acc
                .checked_mul(side)
                .expect("grid size overflows usize");
        }
        Grid {
            dimension,
            side,
            strides,
            len: acc,
        }
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dimension);
        let mut idx = 0;
        for (c, s) in coords.iter().zip(&self.strides) {
            debug_assert!(*c < self.side);
            idx += c * s;
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        debug_assert!(idx < self.len);
        let mut out = vec![0usize; self.dimension];
        for axis in 0..self.dimension {
            out[axis] = idx / self.strides[axis];
            idx %= self.strides[axis];
        }
        out
    }

    /// Coordinate of `idx` along `axis` without materializing the full tuple.
    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.side
    }

    /// Nearest-neighbor sites of `idx` (2d of them, fewer on the boundary).
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dimension).flat_map(move |axis| {
            let c = self.coord(idx, axis);
            let stride = self.strides[axis];
            let down = (c > 0).then(|| idx - stride);
            let up = (c + 1 < self.side).then(|| idx + stride);
            down.into_iter().chain(up)
        })
    }

    /// True if `a` and `b` differ by exactly one step along one axis.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let mut diff_axes = 0;
        for axis in 0..self.dimension {
            let ca = self.coord(a, axis);
            let cb = self.coord(b, axis);
            match ca.abs_diff(cb) {
                0 => {}
                1 => diff_axes += 1,
                _ => return false,
            }
        }
        diff_axes == 1
    }

    /// All site indices, in memory order.
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        0..self.len
    }

    /// Sites whose coordinate along `axis` equals `value`.
    pub fn slab(&self, axis: usize, value: usize) -> Vec<usize> {
        self.iter()
            .filter(|&i| self.coord(i, axis) == value)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(3, 5);
        assert_eq!(g.len(), 125);
        for idx in g.iter() {
            let c = g.coords(idx);
            assert_eq!(g.index(&c), idx);
            for axis in 0..3 {
                assert_eq!(g.coord(idx, axis), c[axis]);
            }
        }
    }

    #[test]
    fn neighbor_counts() {
        let g = Grid::new(2, 3);
        let corner = g.index(&[0, 0]);
        let center = g.index(&[1, 1]);
        assert_eq!(g.neighbors(corner).count(), 2);
        assert_eq!(g.neighbors(center).count(), 4);
        for n in g.neighbors(center) {
            assert!(g.adjacent(center, n));
        }
        assert!(!g.adjacent(corner, g.index(&[1, 1])));
        assert!(!g.adjacent(corner, corner));
    }

    #[test]
    fn slab_sizes() {
        let g = Grid::new(3, 4);
        assert_eq!(g.slab(0, 0).len(), 16);
        assert_eq!(g.slab(2, 3).len(), 16);
    }
}
