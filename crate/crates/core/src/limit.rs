//! The limit process `X = √2 ∫ f(W) dB` driven by an independent sheet `B`,
//! the lattice modulus of continuity, tightness probes and evaluation along
//! monotone flows.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::corner_quadrature;
use crate::error::{Error, Result};
use crate::functions::ScalarFn;
use crate::grid::{snapped_ceil, Grid, Lattice, ParamPoint};
use crate::sheet::{generate_sheet, BrownianSheet, SeedSpec, SheetRole};
use crate::variation::weighted_qv_process;

#[derive(Clone, Debug)]
pub struct LimitProcess {
    lattice: Lattice,
    pub f_name: String,
    pub driving_w_seed: Option<SeedSpec>,
    pub independent_b_seed: Option<SeedSpec>,
}

impl LimitProcess {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn value_at(&self, point: ParamPoint) -> Result<f64> {
        self.lattice.value_at(point)
    }
}

impl AsRef<Lattice> for LimitProcess {
    fn as_ref(&self) -> &Lattice {
        &self.lattice
    }
}

/// Cumulative sums of `√2·f(W(corner))·Δ_{k,l}B`.
pub fn simulate_limit(f: &ScalarFn, sheet_w: &BrownianSheet, sheet_b: &BrownianSheet) -> Result<LimitProcess> {
    let grid = sheet_w.grid();
    if sheet_b.grid() != grid {
        return Err(Error::GridMismatch(grid.n(), sheet_b.grid().n()));
    }
    if let (Some(a), Some(b)) = (sheet_w.seed(), sheet_b.seed()) {
        if a == b {
            return Err(Error::DependentSheets(a));
        }
    }
    let m = grid.n();
    let w = sheet_w.lattice();
    let db = sheet_b.increments();
    let mut incs = Vec::with_capacity(m * m);
    for k in 1..=m {
        for l in 1..=m {
            let weight = f.eval(w.at(k - 1, l - 1));
            if !weight.is_finite() {
                return Err(Error::NonFinite { what: "weight", i: k, j: l });
            }
            incs.push(std::f64::consts::SQRT_2 * weight * db[(k - 1) * m + (l - 1)]);
        }
    }
    Ok(LimitProcess {
        lattice: Lattice::from_increments(grid, &incs)?,
        f_name: f.name(),
        driving_w_seed: sheet_w.seed(),
        independent_b_seed: sheet_b.seed(),
    })
}

/// `E[X(z₁)X(z₂) | W] = 2∫_{[0, z₁∧z₂]} f²(W) dρ`, by corner quadrature on the sheet's grid.
pub fn conditional_covariance(f: &ScalarFn, sheet_w: &BrownianSheet, z1: ParamPoint, z2: ParamPoint) -> f64 {
    let meet = ParamPoint {
        s: z1.s.min(z2.s),
        t: z1.t.min(z2.t),
    };
    2.0 * corner_quadrature(sheet_w, meet, |w| {
        let v = f.eval(w);
        v * v
    })
}

/// Largest admissible index gap for `w(·, δ)` on `G_n`: pairs with
/// `gap/n < δ`, and every pair once `δ ≥ 1`.
fn window_half_width(n: usize, delta: f64) -> usize {
    if delta >= 1.0 {
        return n;
    }
    (snapped_ceil(n as f64 * delta) as usize).saturating_sub(1).min(n)
}

/// Sliding-window maxima and minima of width `width` (monotone deques).
fn sliding_extrema(values: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let count = values.len() + 1 - width;
    let mut maxs = Vec::with_capacity(count);
    let mut mins = Vec::with_capacity(count);
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    for (idx, &v) in values.iter().enumerate() {
        while hi.back().is_some_and(|&b| values[b] <= v) {
            hi.pop_back();
        }
        hi.push_back(idx);
        while lo.back().is_some_and(|&b| values[b] >= v) {
            lo.pop_back();
        }
        lo.push_back(idx);
        if idx + 1 >= width {
            let start = idx + 1 - width;
            while hi.front().is_some_and(|&f| f < start) {
                hi.pop_front();
            }
            while lo.front().is_some_and(|&f| f < start) {
                lo.pop_front();
            }
            maxs.push(values[*hi.front().unwrap()]);
            mins.push(values[*lo.front().unwrap()]);
        }
    }
    (maxs, mins)
}

/// `w(F, δ) = sup |F(z) - F(z')|` over grid points with `‖z - z'‖ < δ`.
pub fn modulus_of_continuity(field: &Lattice, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::NonPositive(delta));
    }
    let side = field.grid().side();
    let half = window_half_width(field.n(), delta);
    if half == 0 {
        return Ok(0.0);
    }
    let width = half + 1;
    let count = side - half;
    // row pass: window extrema along t for every row
    let mut row_max = vec![0.0; side * count];
    let mut row_min = vec![0.0; side * count];
    for i in 0..side {
        let (mx, mn) = sliding_extrema(field.row(i), width);
        row_max[i * count..(i + 1) * count].copy_from_slice(&mx);
        row_min[i * count..(i + 1) * count].copy_from_slice(&mn);
    }
    // column pass over the row results
    let mut best = 0.0f64;
    let mut col = vec![0.0; side];
    for p in 0..count {
        for i in 0..side {
            col[i] = row_max[i * count + p];
        }
        let (mx, _) = sliding_extrema(&col, width);
        for i in 0..side {
            col[i] = row_min[i * count + p];
        }
        let (_, mn) = sliding_extrema(&col, width);
        for (a, b) in mx.iter().zip(&mn) {
            best = best.max(a - b);
        }
    }
    Ok(best)
}

/// Default probe schedules for the tightness diagnostic.
pub const DEFAULT_DELTAS: [f64; 4] = [1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
pub const DEFAULT_EPSILONS: [f64; 3] = [1.0, 2.0, 5.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub n: usize,
    pub delta: f64,
    pub eps: f64,
    pub p_hat: f64,
    #[serde(rename = "N")]
    pub replicates: usize,
}

/// `P̂[w(Xⁿ, δ) ≥ ε]` for every `(n, δ, ε)`, from `replicates` driving sheets
/// on `G_n` seeded by `(master_seed, k, DrivingW)`. Runs on the current rayon pool.
pub fn tightness_diagnostic(
    f: &ScalarFn,
    n_list: &[usize],
    delta_list: &[f64],
    eps_list: &[f64],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<TightnessRow>> {
    if n_list.is_empty() || delta_list.is_empty() || eps_list.is_empty() {
        return Err(Error::InvalidCampaign("tightness probe lists must be nonempty".into()));
    }
    if replicates == 0 {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = Grid::new(n)?;
        let moduli: Vec<Vec<f64>> = (0..replicates as u64)
            .into_par_iter()
            .map(|k| {
                let sheet = generate_sheet(grid, SeedSpec::new(master_seed, k, SheetRole::DrivingW));
                let x = weighted_qv_process(f, &sheet)?;
                delta_list
                    .iter()
                    .map(|&d| modulus_of_continuity(x.lattice(), d))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (di, &delta) in delta_list.iter().enumerate() {
            for &eps in eps_list {
                let hits = moduli.iter().filter(|w| w[di] >= eps).count();
                rows.push(TightnessRow {
                    n,
                    delta,
                    eps,
                    p_hat: hits as f64 / replicates as f64,
                    replicates,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_tightness_csv<W: std::io::Write>(rows: &[TightnessRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Nondecreasing piecewise-linear map `[0,1] → [0,1]` with value 0 at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    /// Breakpoints must start at `x = 0`, end at `x = 1`, be strictly
    /// increasing in `x` and nondecreasing in `y ∈ [0, 1]` with `y(0) = 0`.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidFlow("need at least two breakpoints".into()));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
            return Err(Error::InvalidFlow("breakpoints must span [0, 1]".into()));
        }
        if ys[0] != 0.0 {
            return Err(Error::InvalidFlow("flow must start at the empty rectangle".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidFlow("breakpoints must be strictly increasing".into()));
        }
        if ys.windows(2).any(|w| !(w[0] <= w[1])) || ys.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(Error::InvalidFlow("values must be nondecreasing in [0, 1]".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn identity() -> Self {
        Self {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.xs.partition_point(|&x| x <= t);
        if k == 0 {
            return self.ys[0];
        }
        if k == self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        if t == x0 {
            return y0;
        }
        (y0 + (y1 - y0) * (t - x0) / (x1 - x0)).clamp(0.0, 1.0)
    }
}

/// A flow of rectangles `t ↦ [0, (φ₁(t), φ₂(t))]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleFlow {
    pub phi1: PiecewiseLinear,
    pub phi2: PiecewiseLinear,
}

impl SimpleFlow {
    pub fn new(phi1: PiecewiseLinear, phi2: PiecewiseLinear) -> Self {
        Self { phi1, phi2 }
    }

    pub fn diagonal() -> Self {
        Self::new(PiecewiseLinear::identity(), PiecewiseLinear::identity())
    }

    pub fn at(&self, t: f64) -> ParamPoint {
        ParamPoint {
            s: self.phi1.eval(t),
            t: self.phi2.eval(t),
        }
    }
}

/// Values of a partial-sum field at the corners `φ(t)` for each `t`.
pub fn evaluate_along_flow(process: &impl AsRef<Lattice>, flow: &SimpleFlow, t_list: &[f64]) -> Result<Vec<f64>> {
    if t_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidFlow("times must be sorted".into()));
    }
    let lattice = process.as_ref();
    t_list
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfUnitInterval { name: "t", value: t });
            }
            lattice.value_at(flow.at(t))
        })
        .collect()
}
