//! Single-pass replicate kernel.
//!
//! Streams the fine sheet row by row and accumulates `Vⁿ`, `Sⁿ` and the
//! corner quadratures of `σ²` and `σ⁴` without materializing any lattice. It draws exactly
//! the same variates in the same order as [`generate_sheet`] followed by
//! [`simulate_diffusion`], so both routes agree up to summation round-off.
//!
//! [`generate_sheet`]: crate::sheet::generate_sheet
//! [`simulate_diffusion`]: crate::diffusion::simulate_diffusion

use crate::diffusion::{clipped_widths, euler_increment, ModelSpec};
use crate::error::{Error, Result};
use crate::grid::{floor_index, Grid, ParamPoint};
use crate::sheet::{SeedSpec, SheetStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateStats {
    pub v_n: f64,
    pub s_n: f64,
    pub c_true: f64,
    /// `∫σ⁴(W)` by the same quadrature as `c_true`; `Sⁿ/3` estimates it.
    pub quarticity: f64,
}

/// Simulates `Y` on the fine grid `m = n·r` and returns `Vⁿ`, `Sⁿ`, `C` and
/// the quarticity at `point`.
pub fn stream_replicate(
    model: &ModelSpec,
    n: usize,
    r: usize,
    point: ParamPoint,
    seed: &SeedSpec,
) -> Result<ReplicateStats> {
    let coarse = Grid::new(n)?;
    if r == 0 {
        return Err(Error::InvalidResolution(r));
    }
    let grid = Grid::new(n * r)?;
    let m = grid.n();
    let h = grid.mesh();
    let area = h * h;
    let ws = clipped_widths(point.s, m);
    let wt = clipped_widths(point.t, m);
    let (rows_in, cols_in) = (floor_index(point.s, coarse.n())?, floor_index(point.t, coarse.n())?);

    let mut acc = vec![0.0; n];
    let mut v_n = 0.0;
    let mut fourth = 0.0;
    let mut c_true = 0.0;
    let mut quarticity = 0.0;
    let mut bad: Option<(usize, usize)> = None;
    let mut stream = SheetStream::new(grid, seed);

    for k in 1..=m {
        let s0 = (k - 1) as f64 * h;
        let row_weight = ws.get(k - 1).copied();
        let mut row_c = 0.0;
        let mut row_q = 0.0;
        stream.advance(|l, w, dw| {
            let (dy, sig) = euler_increment(model, s0, (l - 1) as f64 * h, w, dw, area);
            if !dy.is_finite() && bad.is_none() {
                bad = Some((k, l));
            }
            acc[(l - 1) / r] += dy;
            if row_weight.is_some() && l <= wt.len() {
                let s2 = sig * sig;
                row_c += s2 * wt[l - 1];
                row_q += s2 * s2 * wt[l - 1];
            }
        });
        if let Some(a) = row_weight {
            c_true += row_c * a;
            quarticity += row_q * a;
        }
        if k % r == 0 {
            if k / r <= rows_in {
                for d in &acc[..cols_in] {
                    let d2 = d * d;
                    v_n += d2;
                    fourth += d2 * d2;
                }
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
        }
    }
    if let Some((i, j)) = bad {
        return Err(Error::NonFinite {
            what: "diffusion increment",
            i,
            j,
        });
    }
    let nf = n as f64;
    Ok(ReplicateStats {
        v_n,
        s_n: nf * nf * fourth,
        c_true,
        quarticity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{corner_quadrature, observe_on_grid, simulate_diffusion, true_quadratic_variation};
    use crate::functions::{DriftFn, ScalarFn};
    use crate::sheet::{generate_sheet, SheetRole};
    use crate::variation::{fourth_power_stat, raw_qv};

    fn reference(model: &ModelSpec, n: usize, r: usize, p: ParamPoint, seed: &SeedSpec) -> ReplicateStats {
        let sheet = generate_sheet(Grid::new(n * r).unwrap(), *seed);
        let path = simulate_diffusion(model, &sheet).unwrap();
        let y = observe_on_grid(&path, n).unwrap();
        ReplicateStats {
            v_n: raw_qv(&y, p).unwrap(),
            s_n: fourth_power_stat(&y, p).unwrap(),
            c_true: true_quadratic_variation(model, &sheet, p),
            quarticity: corner_quadrature(&sheet, p, |w| model.sigma.eval(w).powi(4)),
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn agrees_with_lattice_route() {
        let models = [
            ModelSpec::new(ScalarFn::Constant(1.0)),
            ModelSpec::new(ScalarFn::Cos),
            ModelSpec::new(ScalarFn::InvQuad).with_drift(DriftFn::from_name("cos").unwrap()),
        ];
        let points = [ParamPoint::UNIT, ParamPoint::new(0.5, 0.75).unwrap(), ParamPoint::new(0.33, 0.9).unwrap()];
        for (mi, model) in models.iter().enumerate() {
            for (pi, p) in points.iter().enumerate() {
                for (n, r) in [(4, 1), (8, 4), (16, 3)] {
                    let seed = SeedSpec::new(2024, (mi * 10 + pi) as u64, SheetRole::DrivingW);
                    let a = stream_replicate(model, n, r, *p, &seed).unwrap();
                    let b = reference(model, n, r, *p, &seed);
                    assert!(close(a.v_n, b.v_n), "{a:?} {b:?}");
                    assert!(close(a.s_n, b.s_n), "{a:?} {b:?}");
                    assert!(close(a.c_true, b.c_true), "{a:?} {b:?}");
                    assert!(close(a.quarticity, b.quarticity), "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let model = ModelSpec::new(ScalarFn::Cos);
        let seed = SeedSpec::new(1, 1, SheetRole::DrivingW);
        let a = stream_replicate(&model, 8, 4, ParamPoint::UNIT, &seed).unwrap();
        let b = stream_replicate(&model, 8, 4, ParamPoint::UNIT, &seed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_volatility_is_flat() {
        let model = ModelSpec::new(ScalarFn::Zero);
        let seed = SeedSpec::new(1, 1, SheetRole::DrivingW);
        let a = stream_replicate(&model, 8, 2, ParamPoint::UNIT, &seed).unwrap();
        assert_eq!((a.v_n, a.s_n, a.c_true), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_zero_refinement() {
        let model = ModelSpec::new(ScalarFn::Cos);
        let seed = SeedSpec::new(1, 1, SheetRole::DrivingW);
        assert!(stream_replicate(&model, 8, 0, ParamPoint::UNIT, &seed).is_err());
    }
}
