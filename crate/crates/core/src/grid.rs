//! Antenna grid coordinates.

use std::fmt;

/// Zero-based `(receive, transmit)` antenna pair, i.e. entry `(row, col)` of `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
}

impl GridPoint {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Squared Euclidean distance on the integer grid.
    #[inline]
    pub fn dist_sq(self, other: GridPoint) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr * dr + dc * dc
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Every grid point in column-major order.
pub fn full_grid(n_rx: usize, n_tx: usize) -> Vec<GridPoint> {
    (0..n_tx)
        .flat_map(|c| (0..n_rx).map(move |r| GridPoint::new(r, c)))
        .collect()
}

/// Grid points not in `observed`, column-major order.
pub fn complement(n_rx: usize, n_tx: usize, observed: &[GridPoint]) -> Vec<GridPoint> {
    let mut mask = vec![false; n_rx * n_tx];
    for p in observed {
        mask[p.row + p.col * n_rx] = true;
    }
    full_grid(n_rx, n_tx)
        .into_iter()
        .filter(|p| !mask[p.row + p.col * n_rx])
        .collect()
}
