//! Quadratic-variation statistics on the observation grid: the weighted
//! process `Xⁿ`, the estimator `Vⁿ`, the fourth-power sum `Sⁿ`, the
//! normalized error `n(Vⁿ - C)`, the studentized statistic and its
//! confidence interval.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::functions::ScalarFn;
use crate::grid::{floor_index, Grid, Lattice, ParamPoint};
use crate::sheet::{BrownianSheet, SeedSpec};

/// Asymptotic variance of the studentized statistic.
pub const STUDENTIZED_LIMIT_VARIANCE: f64 = 2.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    WeightedQvX,
    RawQvV,
    FourthPowerS,
    NormalizedErrorY,
}

/// A two-parameter partial-sum field on `G_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationProcess {
    pub kind: VariationKind,
    lattice: Lattice,
}

impl VariationProcess {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.lattice.n()
    }

    /// Càdlàg evaluation at `([ns]/n, [nt]/n)`.
    pub fn value_at(&self, point: ParamPoint) -> Result<f64> {
        self.lattice.value_at(point)
    }
}

impl AsRef<Lattice> for VariationProcess {
    fn as_ref(&self) -> &Lattice {
        &self.lattice
    }
}

fn partial_sums(kind: VariationKind, grid: Grid, summands: &[f64]) -> Result<VariationProcess> {
    Ok(VariationProcess {
        kind,
        lattice: Lattice::from_increments(grid, summands)?,
    })
}

/// `Xⁿ(s,t) = Σ_{i≤[ns], j≤[nt]} n·f(W((i-1)/n,(j-1)/n))·(|Δ_{i,j}W|² - 1/n²)`
/// for a sheet given on `G_n`.
pub fn weighted_qv_process(f: &ScalarFn, sheet_obs: &BrownianSheet) -> Result<VariationProcess> {
    let grid = sheet_obs.grid();
    let n = grid.n();
    let nf = n as f64;
    let area = 1.0 / (nf * nf);
    let w = sheet_obs.lattice();
    let incs = sheet_obs.increments();
    let mut summands = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let weight = f.eval(w.at(i - 1, j - 1));
            if !weight.is_finite() {
                return Err(Error::NonFinite { what: "weight", i, j });
            }
            let d = incs[(i - 1) * n + (j - 1)];
            summands.push(nf * weight * (d * d - area));
        }
    }
    partial_sums(VariationKind::WeightedQvX, grid, &summands)
}

/// Predictable bracket `(2/n²)·Σ f²(W(corner))` over the cells below `point`.
pub fn predictable_bracket(f: &ScalarFn, sheet_obs: &BrownianSheet, point: ParamPoint) -> Result<f64> {
    let n = sheet_obs.grid().n();
    let (is, js) = (floor_index(point.s, n)?, floor_index(point.t, n)?);
    let w = sheet_obs.lattice();
    let mut total = 0.0;
    for i in 1..=is {
        for j in 1..=js {
            let v = f.eval(w.at(i - 1, j - 1));
            total += v * v;
        }
    }
    Ok(2.0 * total / (n * n) as f64)
}

fn index_rect(observed: &Lattice, point: ParamPoint) -> Result<(usize, usize)> {
    let n = observed.n();
    Ok((floor_index(point.s, n)?, floor_index(point.t, n)?))
}

fn power_sum(observed: &Lattice, point: ParamPoint, power: i32) -> Result<f64> {
    let (is, js) = index_rect(observed, point)?;
    let mut total = 0.0;
    for i in 1..=is {
        for j in 1..=js {
            total += observed.rectangle_increment(i, j)?.powi(power);
        }
    }
    Ok(total)
}

/// `Vⁿ(s,t) = Σ |Δ_{i,j}Y|²` over the index rectangle of `point`.
pub fn raw_qv(observed: &Lattice, point: ParamPoint) -> Result<f64> {
    power_sum(observed, point, 2)
}

/// `Sⁿ(s,t) = n²·Σ |Δ_{i,j}Y|⁴`.
pub fn fourth_power_stat(observed: &Lattice, point: ParamPoint) -> Result<f64> {
    let n = observed.n() as f64;
    Ok(n * n * power_sum(observed, point, 4)?)
}

/// `Vⁿ` as a field on `G_n`.
pub fn raw_qv_process(observed: &Lattice) -> Result<VariationProcess> {
    let sq: Vec<f64> = observed.cell_increments().iter().map(|d| d * d).collect();
    partial_sums(VariationKind::RawQvV, observed.grid(), &sq)
}

/// `Sⁿ` as a field on `G_n`.
pub fn fourth_power_process(observed: &Lattice) -> Result<VariationProcess> {
    let n2 = (observed.n() * observed.n()) as f64;
    let q: Vec<f64> = observed.cell_increments().iter().map(|d| n2 * d.powi(4)).collect();
    partial_sums(VariationKind::FourthPowerS, observed.grid(), &q)
}

/// `n·(Vⁿ - C)` on `G_n`, given `C` at the grid points.
pub fn normalized_error_process(observed: &Lattice, c_field: &Lattice) -> Result<VariationProcess> {
    if observed.grid() != c_field.grid() {
        return Err(Error::MixedResolution(observed.n(), c_field.n()));
    }
    let nf = observed.n() as f64;
    let summands: Vec<f64> = observed
        .cell_increments()
        .iter()
        .zip(c_field.cell_increments())
        .map(|(d, c)| nf * (d * d - c))
        .collect();
    partial_sums(VariationKind::NormalizedErrorY, observed.grid(), &summands)
}

/// `T = n·(Vⁿ - C)/√Sⁿ`, asymptotically `N(0, 2/3)`.
pub fn studentized(v_n: f64, c_true: f64, s_n: f64, n: usize) -> Result<f64> {
    if !(s_n > 0.0) {
        return Err(Error::Degenerate);
    }
    Ok(n as f64 * (v_n - c_true) / s_n.sqrt())
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `Vⁿ ± z_{1-α/2}·√(2/3)·√Sⁿ/n`.
pub fn confidence_interval(v_n: f64, s_n: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(s_n > 0.0) {
        return Err(Error::Degenerate);
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half = z * STUDENTIZED_LIMIT_VARIANCE.sqrt() * s_n.sqrt() / n as f64;
    Ok((v_n - half, v_n + half))
}

/// One replicate's estimate of `C(s,t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub r: usize,
    pub sigma_name: String,
    pub point: ParamPoint,
    pub v_n: f64,
    pub c_true: f64,
    pub s_n: f64,
    pub studentized: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: SeedSpec,
}

impl EstimateReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: SeedSpec,
        n: usize,
        r: usize,
        sigma_name: String,
        point: ParamPoint,
        v_n: f64,
        c_true: f64,
        s_n: f64,
        alpha: f64,
    ) -> Result<Self> {
        let studentized = studentized(v_n, c_true, s_n, n)?;
        let (ci_low, ci_high) = confidence_interval(v_n, s_n, n, alpha)?;
        Ok(Self {
            n,
            r,
            sigma_name,
            point,
            v_n,
            c_true,
            s_n,
            studentized,
            ci_low,
            ci_high,
            seed,
        })
    }

    pub fn covers_truth(&self) -> bool {
        self.ci_low <= self.c_true && self.c_true <= self.ci_high
    }
}

/// Column order of the per-replicate CSV.
pub const REPORT_CSV_HEADER: [&str; 12] = [
    "seed", "n", "r", "sigma_name", "point_s", "point_t", "v_n", "c_true", "s_n", "studentized",
    "ci_low", "ci_high",
];

#[derive(Serialize, Deserialize)]
struct ReportRow<'a> {
    seed: String,
    n: usize,
    r: usize,
    sigma_name: &'a str,
    point_s: f64,
    point_t: f64,
    v_n: f64,
    c_true: f64,
    s_n: f64,
    studentized: f64,
    ci_low: f64,
    ci_high: f64,
}

/// Seeds are written as `master:stream_index`.
pub fn write_reports_csv<W: std::io::Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.serialize(ReportRow {
            seed: format!("{}:{}", r.seed.master_seed, r.seed.stream_index),
            n: r.n,
            r: r.r,
            sigma_name: &r.sigma_name,
            point_s: r.point.s,
            point_t: r.point.t,
            v_n: r.v_n,
            c_true: r.c_true,
            s_n: r.s_n,
            studentized: r.studentized,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sheet::{generate_sheet, SheetRole};

    fn sheet(n: usize, k: u64) -> BrownianSheet {
        generate_sheet(Grid::new(n).unwrap(), SeedSpec::new(5, k, SheetRole::DrivingW))
    }

    #[test]
    fn zero_weight_gives_zero_field() {
        let x = weighted_qv_process(&ScalarFn::Zero, &sheet(8, 0)).unwrap();
        assert!(x.lattice().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_process_is_recentred_chi_square() {
        let s = sheet(1, 3);
        let g = s.lattice().at(1, 1);
        let x = weighted_qv_process(&ScalarFn::Constant(1.0), &s).unwrap();
        assert!((x.value_at(ParamPoint::UNIT).unwrap() - (g * g - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn process_vanishes_on_axes_and_sums_summands() {
        let s = sheet(12, 4);
        let x = weighted_qv_process(&ScalarFn::Cos, &s).unwrap();
        assert!(x.lattice().vanishes_on_axes());
        let w = s.lattice();
        let incs = s.increments();
        for i in 1..=12 {
            for j in 1..=12 {
                let d = incs[(i - 1) * 12 + (j - 1)];
                let summand = 12.0 * w.at(i - 1, j - 1).cos() * (d * d - 1.0 / 144.0);
                assert!((x.lattice().rectangle_increment(i, j).unwrap() - summand).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let s = sheet(16, 5);
        let base = weighted_qv_process(&ScalarFn::Cos, &s).unwrap();
        let scaled_f = ScalarFn::custom("3cos", 3.0, |x| 3.0 * x.cos()).unwrap();
        let scaled = weighted_qv_process(&scaled_f, &s).unwrap();
        for (a, b) in base.lattice().values().iter().zip(scaled.lattice().values()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn raw_and_fourth_power_basics() {
        let g = Grid::new(4).unwrap();
        let zero = Lattice::zeros(g);
        assert_eq!(raw_qv(&zero, ParamPoint::UNIT).unwrap(), 0.0);
        assert_eq!(fourth_power_stat(&zero, ParamPoint::UNIT).unwrap(), 0.0);

        let st = Lattice::from_fn(g, |s, t| s * t);
        assert!((raw_qv(&st, ParamPoint::UNIT).unwrap() - 16.0 / 256.0).abs() < 1e-15);
        assert!((fourth_power_stat(&st, ParamPoint::UNIT).unwrap() - 16.0 * 16.0 / 65536.0).abs() < 1e-15);
        let half = ParamPoint::new(0.5, 0.8).unwrap();
        assert!((raw_qv(&st, half).unwrap() - 6.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn fields_agree_with_pointwise() {
        let s = sheet(10, 6);
        let y = s.lattice();
        let v = raw_qv_process(y).unwrap();
        let q = fourth_power_process(y).unwrap();
        for (a, b) in [(0.3, 0.7), (1.0, 1.0), (0.0, 0.5), (0.95, 0.15)] {
            let p = ParamPoint::new(a, b).unwrap();
            assert!((v.value_at(p).unwrap() - raw_qv(y, p).unwrap()).abs() < 1e-12);
            assert!((q.value_at(p).unwrap() - fourth_power_stat(y, p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn studentized_examples() {
        assert_eq!(studentized(1.0, 1.0, 3.0, 50).unwrap(), 0.0);
        let t = studentized(1.02, 1.00, 3.0, 100).unwrap();
        assert!((t - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((t - 1.1547).abs() < 1e-4);
        assert!(matches!(studentized(1.0, 1.0, 0.0, 10), Err(Error::Degenerate)));
    }

    #[test]
    fn confidence_interval_examples() {
        let (lo, hi) = confidence_interval(1.0, 3.0, 100, 0.05).unwrap();
        assert!((lo - 0.97229).abs() < 1e-5, "{lo}");
        assert!((hi - 1.02771).abs() < 1e-5, "{hi}");
        let (lo, hi) = confidence_interval(1.0, 3.0, 100, 1.0 - 1e-12).unwrap();
        assert!((hi - lo).abs() < 1e-12);
        assert!(confidence_interval(1.0, 3.0, 100, 0.0).is_err());
        assert!(confidence_interval(1.0, 3.0, 100, 1.0).is_err());
        assert!(confidence_interval(1.0, 0.0, 100, 0.05).is_err());
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn report_interval_brackets_estimate() {
        let seed = SeedSpec::new(1, 2, SheetRole::DrivingW);
        let r = EstimateReport::new(seed, 16, 8, "cos".into(), ParamPoint::UNIT, 0.8, 0.79, 2.1, 0.05).unwrap();
        assert!(r.ci_low <= r.v_n && r.v_n <= r.ci_high);
        assert!(r.s_n >= 0.0);
    }

    #[test]
    fn normalized_error_at_exact_quadrature_is_zero() {
        let s = sheet(6, 7);
        let y = s.lattice();
        let sq: Vec<f64> = y.cell_increments().iter().map(|d| d * d).collect();
        let c = Lattice::from_increments(y.grid(), &sq).unwrap();
        let e = normalized_error_process(y, &c).unwrap();
        assert!(e.lattice().values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(e.kind, VariationKind::NormalizedErrorY);
    }

    #[test]
    fn csv_has_fixed_header() {
        let seed = SeedSpec::new(9, 0, SheetRole::DrivingW);
        let r = EstimateReport::new(seed, 4, 16, "one".into(), ParamPoint::UNIT, 1.0, 1.0, 3.0, 0.05).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_CSV_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("9:0,4,16,one,1.0,1.0,"));
    }
}
