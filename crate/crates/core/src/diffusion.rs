//! The sheet-driven diffusion `Y = ∫σ(W) dW + ∫M dρ`, simulated with a
//! lower-left-corner Euler scheme on a fine grid, and its quadratic
//! variation `C = ∫σ²(W) dρ` by the matching corner quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{DriftFn, ScalarFn};
use crate::grid::{snapped_ceil, snapped_floor, Grid, Lattice, ParamPoint};
use crate::sheet::{BrownianSheet, SeedSpec};

/// Declared regularity of `σ`: bounded with bounded derivatives up to order 4 or 8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    R1,
    R2,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub sigma: ScalarFn,
    pub sigma_smoothness: Smoothness,
    pub drift: DriftFn,
    pub sigma_bound: f64,
}

impl ModelSpec {
    /// Model with zero drift. Registered volatilities are smooth, so they are
    /// tagged `R2`; custom ones default to `R1`.
    pub fn new(sigma: ScalarFn) -> Self {
        let sigma_smoothness = match sigma {
            ScalarFn::Custom { .. } => Smoothness::R1,
            _ => Smoothness::R2,
        };
        Self {
            sigma_bound: sigma.bound(),
            sigma,
            sigma_smoothness,
            drift: DriftFn::Zero,
        }
    }

    pub fn with_drift(mut self, drift: DriftFn) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.sigma_smoothness = smoothness;
        self
    }

    pub fn from_names(sigma: &str, drift: &str) -> Result<Self> {
        Ok(Self::new(ScalarFn::from_name(sigma)?).with_drift(DriftFn::from_name(drift)?))
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionPath {
    lattice: Lattice,
    model: ModelSpec,
    driving: Option<SeedSpec>,
}

impl DiffusionPath {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn grid(&self) -> Grid {
        self.lattice.grid()
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn driving_seed(&self) -> Option<SeedSpec> {
        self.driving
    }
}

impl AsRef<Lattice> for DiffusionPath {
    fn as_ref(&self) -> &Lattice {
        &self.lattice
    }
}

/// Euler–Itô increment of `Y` on one fine cell with lower-left corner `(s, t)`.
#[inline]
pub(crate) fn euler_increment(
    model: &ModelSpec,
    s: f64,
    t: f64,
    w_corner: f64,
    dw: f64,
    cell_area: f64,
) -> (f64, f64) {
    let sig = model.sigma.eval(w_corner);
    let mut dy = sig * dw;
    if !model.drift.is_zero() {
        dy += model.drift.eval(s, t, w_corner) * cell_area;
    }
    (dy, sig)
}

pub fn simulate_diffusion(model: &ModelSpec, sheet: &BrownianSheet) -> Result<DiffusionPath> {
    let grid = sheet.grid();
    let m = grid.n();
    let side = grid.side();
    let h = grid.mesh();
    let area = h * h;
    let w = sheet.lattice();
    let increments = sheet.increments();
    let mut values = vec![0.0; side * side];
    for k in 1..=m {
        let mut row_sum = 0.0;
        for l in 1..=m {
            let corner = w.at(k - 1, l - 1);
            let dw = increments[(k - 1) * m + (l - 1)];
            let (dy, _) = euler_increment(model, (k - 1) as f64 * h, (l - 1) as f64 * h, corner, dw, area);
            if !dy.is_finite() {
                return Err(Error::NonFinite {
                    what: "diffusion increment",
                    i: k,
                    j: l,
                });
            }
            row_sum += dy;
            values[k * side + l] = values[(k - 1) * side + l] + row_sum;
        }
    }
    Ok(DiffusionPath {
        lattice: Lattice::from_values(grid, values)?,
        model: model.clone(),
        driving: sheet.seed(),
    })
}

/// Restriction of the simulated path to `G_n`.
pub fn observe_on_grid(path: &DiffusionPath, n: usize) -> Result<Lattice> {
    path.lattice.restrict(n)
}

/// Widths of the fine cells `1..=count` clipped to `[0, x]`.
pub(crate) fn clipped_widths(x: f64, m: usize) -> Vec<f64> {
    let h = 1.0 / m as f64;
    let mx = m as f64 * x;
    let full = snapped_floor(mx) as usize;
    let count = (snapped_ceil(mx) as usize).min(m);
    (1..=count)
        .map(|k| if k <= full { h } else { x - (k - 1) as f64 * h })
        .collect()
}

/// Left-corner quadrature `∫_{[0,s]×[0,t]} g(W) dρ` on the sheet's grid, with
/// partial cells clipped to the point.
pub fn corner_quadrature(sheet: &BrownianSheet, point: ParamPoint, g: impl Fn(f64) -> f64) -> f64 {
    let lattice = sheet.lattice();
    let m = lattice.n();
    let ws = clipped_widths(point.s, m);
    let wt = clipped_widths(point.t, m);
    let mut total = 0.0;
    for (k, &a) in ws.iter().enumerate() {
        let row = lattice.row(k);
        let mut row_total = 0.0;
        for (l, &b) in wt.iter().enumerate() {
            row_total += g(row[l]) * b;
        }
        total += row_total * a;
    }
    total
}

/// `C(s, t) = ∫σ²(W)` by fine-grid corner quadrature on the driving sheet.
pub fn true_quadratic_variation(model: &ModelSpec, sheet: &BrownianSheet, point: ParamPoint) -> f64 {
    corner_quadrature(sheet, point, |w| {
        let s = model.sigma.eval(w);
        s * s
    })
}

/// `C` at every point of `G_n`, for a sheet on a grid refining `G_n`.
pub fn quadratic_variation_field(model: &ModelSpec, sheet: &BrownianSheet, n: usize) -> Result<Lattice> {
    let lattice = sheet.lattice();
    let m = lattice.n();
    let r = sheet.grid().refinement_over(n)?;
    let area = 1.0 / (m * m) as f64;
    let mut cells = vec![0.0; n * n];
    for k in 1..=m {
        let row = lattice.row(k - 1);
        let i = (k - 1) / r;
        for l in 1..=m {
            let s = model.sigma.eval(row[l - 1]);
            cells[i * n + (l - 1) / r] += s * s * area;
        }
    }
    Lattice::from_increments(Grid::new(n)?, &cells)
}
