//! Regular grids on the unit square, lattice fields and rectangle increments.
//!
//! A lattice of resolution `n` holds the `(n+1)²` values of a field at the
//! points `(i/n, j/n)`, stored row-major with `i` (the `s` coordinate) as the
//! slow index. Cell `(i, j)` with `1 ≤ i, j ≤ n` is the rectangle
//! `[(i-1)/n, i/n] × [(j-1)/n, j/n]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when snapping `n·s` to an integer.
const SNAP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidResolution(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Points per side, `n + 1`.
    #[inline]
    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn mesh(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Fails unless `coarse` divides this grid's resolution; returns the refinement factor.
    pub fn refinement_over(&self, coarse: usize) -> Result<usize> {
        if coarse == 0 {
            return Err(Error::InvalidResolution(coarse));
        }
        if !self.n.is_multiple_of(coarse) {
            return Err(Error::NonDividing { coarse, fine: self.n });
        }
        Ok(self.n / coarse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub fn new(grid: Grid, i: usize, j: usize) -> Result<Self> {
        let n = grid.n();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::CellOutOfRange { i, j, n });
        }
        Ok(Self { i, j })
    }

    /// Lower-left corner `((i-1)/n, (j-1)/n)`.
    pub fn corner(&self, grid: Grid) -> ParamPoint {
        let h = grid.mesh();
        ParamPoint {
            s: (self.i - 1) as f64 * h,
            t: (self.j - 1) as f64 * h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub s: f64,
    pub t: f64,
}

impl ParamPoint {
    pub fn new(s: f64, t: f64) -> Result<Self> {
        check_unit("s", s)?;
        check_unit("t", t)?;
        Ok(Self { s, t })
    }

    pub const ORIGIN: ParamPoint = ParamPoint { s: 0.0, t: 0.0 };
    pub const UNIT: ParamPoint = ParamPoint { s: 1.0, t: 1.0 };

    /// Partial order: `self ⪯ other` iff both coordinates are no larger.
    pub fn precedes(&self, other: &ParamPoint) -> bool {
        self.s <= other.s && self.t <= other.t
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfUnitInterval { name, value });
    }
    Ok(())
}

/// `[n·s]`, with `n·s` snapped to the nearest integer when within a relative
/// `1e-12` so that decimal inputs like `0.29` at `n = 100` land on cell 29.
pub fn floor_index(s: f64, n: usize) -> Result<usize> {
    check_unit("s", s)?;
    if n == 0 {
        return Err(Error::InvalidResolution(n));
    }
    Ok(snapped_floor(n as f64 * s).min(n as f64) as usize)
}

pub(crate) fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * r.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

pub(crate) fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Max-norm distance `max(|s - s'|, |t - t'|)`.
pub fn max_norm_dist(p: ParamPoint, q: ParamPoint) -> f64 {
    (p.s - q.s).abs().max((p.t - q.t).abs())
}

/// A real field sampled on every point of a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    grid: Grid,
    values: Vec<f64>,
}

impl Lattice {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.side() * grid.side()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.side() * grid.side();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: expected,
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `field(i/n, j/n)` at every grid point.
    pub fn from_fn(grid: Grid, mut field: impl FnMut(f64, f64) -> f64) -> Self {
        let h = grid.mesh();
        let side = grid.side();
        let mut values = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                values.push(field(i as f64 * h, j as f64 * h));
            }
        }
        Self { grid, values }
    }

    /// Builds the additive field whose cell increments are `increments`
    /// (an `n×n` row-major array, cell `(i, j)` at `(i-1)*n + (j-1)`).
    pub fn from_increments(grid: Grid, increments: &[f64]) -> Result<Self> {
        let n = grid.n();
        if increments.len() != n * n {
            return Err(Error::LengthMismatch {
                left: increments.len(),
                right: n * n,
            });
        }
        let side = grid.side();
        let mut values = vec![0.0; side * side];
        for i in 1..=n {
            let mut row_sum = 0.0;
            for j in 1..=n {
                row_sum += increments[(i - 1) * n + (j - 1)];
                values[i * side + j] = values[(i - 1) * side + j] + row_sum;
            }
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at grid point `(i/n, j/n)`. Panics when out of range.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        let side = self.grid.side();
        assert!(i < side && j < side, "lattice index ({i}, {j}) out of range");
        self.values[i * side + j]
    }

    /// Row `i` (all `t` values at `s = i/n`).
    pub fn row(&self, i: usize) -> &[f64] {
        let side = self.grid.side();
        &self.values[i * side..(i + 1) * side]
    }

    /// Càdlàg evaluation: the value at `([n s]/n, [n t]/n)`.
    pub fn value_at(&self, point: ParamPoint) -> Result<f64> {
        let n = self.n();
        Ok(self.at(floor_index(point.s, n)?, floor_index(point.t, n)?))
    }

    /// Four-corner alternating sum over cell `(i, j)`, `1 ≤ i, j ≤ n`, the cell
    /// with upper-right corner `(i/n, j/n)`.
    pub fn rectangle_increment(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::CellOutOfRange { i, j, n });
        }
        Ok(self.cell_increment_unchecked(i, j))
    }

    #[inline]
    fn cell_increment_unchecked(&self, i: usize, j: usize) -> f64 {
        let side = self.grid.side();
        let lo = (i - 1) * side;
        let hi = i * side;
        self.values[lo + j - 1] + self.values[hi + j] - self.values[lo + j] - self.values[hi + j - 1]
    }

    /// Increment over the index rectangle `[i0, i1] × [j0, j1]` of grid points,
    /// i.e. over the union of cells `i0 < i ≤ i1`, `j0 < j ≤ j1`.
    pub fn block_increment(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<f64> {
        let n = self.n();
        if i0 > i1 || j0 > j1 || i1 > n || j1 > n {
            return Err(Error::CellOutOfRange { i: i1, j: j1, n });
        }
        Ok(self.at(i0, j0) + self.at(i1, j1) - self.at(i0, j1) - self.at(i1, j0))
    }

    /// All `n×n` cell increments, row-major.
    pub fn cell_increments(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n);
        for i in 1..=n {
            for j in 1..=n {
                out.push(self.cell_increment_unchecked(i, j));
            }
        }
        out
    }

    /// Restriction to the coarse grid `G_coarse`; `coarse` must divide `n`.
    pub fn restrict(&self, coarse: usize) -> Result<Lattice> {
        let r = self.grid.refinement_over(coarse)?;
        let grid = Grid::new(coarse)?;
        let side = grid.side();
        let mut values = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                values.push(self.at(i * r, j * r));
            }
        }
        Ok(Lattice { grid, values })
    }

    pub fn scaled(&self, c: f64) -> Lattice {
        Lattice {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// True when every value on the axes `i = 0` or `j = 0` is exactly zero.
    pub fn vanishes_on_axes(&self) -> bool {
        let side = self.grid.side();
        (0..side).all(|k| self.at(0, k) == 0.0 && self.at(k, 0) == 0.0)
    }
}

impl AsRef<Lattice> for Lattice {
    fn as_ref(&self) -> &Lattice {
        self
    }
}
