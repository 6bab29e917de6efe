//! Monte Carlo campaigns.
//!
//! Every replicate is a pure function of its [`SeedSpec`]; replicates run on a
//! dedicated rayon pool and are gathered in replicate order before any
//! floating-point reduction, so a campaign's summary and report files are
//! identical for any worker count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::ModelSpec;
use crate::error::{Error, Result};
use crate::functions::{DriftFn, ScalarFn};
use crate::grid::{Grid, ParamPoint};
use crate::kernel::stream_replicate;
use crate::limit::{
    conditional_covariance, evaluate_along_flow, simulate_limit, tightness_diagnostic, SimpleFlow, TightnessRow,
    DEFAULT_DELTAS, DEFAULT_EPSILONS,
};
use crate::sheet::{generate_sheet, SeedSpec, SheetRole};
use crate::stats::{
    correlation, covariance_with_se, ks_critical, ks_distance, moment_with_se, rate_slope, Moment, Sample,
    TestVerdict,
};
use crate::variation::{predictable_bracket, weighted_qv_process, EstimateReport, STUDENTIZED_LIMIT_VARIANCE};

pub const SCHEMA_VERSION: u32 = 1;
/// Statistical gates are only evaluated from this many replicates on.
pub const MIN_GATE_REPLICATES: usize = 100;
/// KS tolerance for the studentized statistic against `N(0, 2/3)`.
pub const CLT_KS_TOLERANCE: f64 = 0.08;
pub const CLT_VARIANCE_BAND: (f64, f64) = (0.55, 0.80);
pub const COVERAGE_BAND: (f64, f64) = (0.90, 0.98);
pub const SLOPE_BAND: (f64, f64) = (-1.3, -0.7);
/// Significance level of the conditional-Gaussianity KS test.
pub const KS_LEVEL: f64 = 0.01;
pub const SIGMA_GATE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    CltCheck,
    ConsistencyRate,
    Coverage,
    VarianceIdentity,
    StrongMartingale,
    Tightness,
    LimitCovariance,
}

impl Experiment {
    fn uses_reports(self) -> bool {
        matches!(self, Experiment::CltCheck | Experiment::ConsistencyRate | Experiment::Coverage)
    }
}

fn default_refinement() -> usize {
    16
}
fn default_drift() -> String {
    "zero".into()
}
fn default_point() -> ParamPoint {
    ParamPoint::UNIT
}
fn default_alpha() -> f64 {
    0.05
}
fn default_gates() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    #[serde(default = "default_refinement")]
    pub refinement_r: usize,
    /// Replicates per resolution.
    #[serde(rename = "N")]
    pub replicates: usize,
    /// Volatility `σ` for estimation experiments, weight `f` for process ones.
    #[serde(alias = "f_name")]
    pub sigma_name: String,
    #[serde(default = "default_drift")]
    pub drift_name: String,
    #[serde(default = "default_point")]
    pub point: ParamPoint,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default = "default_gates")]
    pub gates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
}

impl CampaignSpec {
    pub fn new(experiment: Experiment, n_list: Vec<usize>, replicates: usize, sigma_name: &str, master_seed: u64) -> Self {
        Self {
            experiment,
            n_list,
            refinement_r: default_refinement(),
            replicates,
            sigma_name: sigma_name.into(),
            drift_name: default_drift(),
            point: default_point(),
            alpha: default_alpha(),
            master_seed,
            gates: true,
            delta_list: None,
            eps_list: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCampaign(msg));
        if self.replicates < 2 {
            return bad(format!("N must be at least 2, got {}", self.replicates));
        }
        if self.refinement_r < 1 {
            return bad("refinement_r must be at least 1".into());
        }
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        let mut seen = self.n_list.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.n_list.len() {
            return bad("n_list has duplicates".into());
        }
        for &n in &self.n_list {
            Grid::new(n)?;
            if self.experiment == Experiment::StrongMartingale && n % 2 != 0 {
                return bad(format!("strong_martingale needs even n, got {n}"));
            }
        }
        ScalarFn::from_name(&self.sigma_name)?;
        DriftFn::from_name(&self.drift_name)?;
        ParamPoint::new(self.point.s, self.point.t)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if let Some(d) = &self.delta_list {
            if d.is_empty() || d.iter().any(|x| !(*x > 0.0)) {
                return bad("delta_list must hold positive values".into());
            }
        }
        if let Some(e) = &self.eps_list {
            if e.is_empty() || e.iter().any(|x| !x.is_finite()) {
                return bad("eps_list must hold finite values".into());
            }
        }
        Ok(())
    }

    fn gated(&self) -> bool {
        self.gates && self.replicates >= MIN_GATE_REPLICATES
    }
}

/// Aggregated statistics for one resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub replicates: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub schema_version: u32,
    pub spec: CampaignSpec,
    pub per_n: BTreeMap<usize, PerN>,
    pub verdicts: Vec<TestVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness: Option<Vec<TightnessRow>>,
    pub wall_time: f64,
}

impl McSummary {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with `wall_time` zeroed, for reproducibility comparisons.
    pub fn to_json_without_wall_time(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_time = 0.0;
        copy.to_json()
    }
}

pub struct CampaignOutput {
    pub summary: McSummary,
    /// Per-replicate estimates, ordered by resolution then replicate
    /// (empty for process experiments).
    pub reports: Vec<EstimateReport>,
}

pub fn derive_seed(master: u64, replicate: u64, role: SheetRole) -> SeedSpec {
    SeedSpec::new(master, replicate, role)
}

/// Statistics of one resolution's estimate reports.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportAggregate {
    pub n: usize,
    pub count: usize,
    pub mean_v: f64,
    pub mean_c: f64,
    pub mean_studentized: f64,
    pub se_mean_studentized: f64,
    pub var_studentized: f64,
    pub se_var_studentized: f64,
    pub ks_studentized: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    /// `√mean((Vⁿ - C)²)`
    pub rmse: f64,
    /// `mean((Vⁿ - C)²)` and its standard error.
    pub l2_error: f64,
    pub l2_se: f64,
}

impl ReportAggregate {
    fn metrics(&self) -> BTreeMap<String, f64> {
        [
            ("mean_v", self.mean_v),
            ("mean_c", self.mean_c),
            ("mean_studentized", self.mean_studentized),
            ("se_mean_studentized", self.se_mean_studentized),
            ("var_studentized", self.var_studentized),
            ("se_var_studentized", self.se_var_studentized),
            ("ks_studentized", self.ks_studentized),
            ("coverage", self.coverage),
            ("coverage_se", self.coverage_se),
            ("rmse", self.rmse),
            ("l2_error", self.l2_error),
            ("l2_se", self.l2_se),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Order-independent aggregation: reports are sorted by replicate index
/// before any reduction. All reports must share one resolution.
pub fn aggregate(reports: &[EstimateReport]) -> Result<ReportAggregate> {
    let first = reports.first().ok_or(Error::EmptySample)?;
    if let Some(other) = reports.iter().find(|r| r.n != first.n) {
        return Err(Error::MixedResolution(first.n, other.n));
    }
    let mut sorted: Vec<&EstimateReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.seed.stream_index, r.seed.master_seed));
    let count = sorted.len();
    let col = |f: fn(&EstimateReport) -> f64| sorted.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let t = Sample::new("studentized", col(|r| r.studentized))?;
    let sq_err = Sample::new("squared_error", col(|r| (r.v_n - r.c_true).powi(2)))?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_t, se_t, var_t, se_var_t, l2_se) = if count >= 2 {
        let (m, s) = moment_with_se(&t, Moment::Mean)?;
        let (v, sv) = moment_with_se(&t, Moment::Variance)?;
        let (_, l2se) = moment_with_se(&sq_err, Moment::Mean)?;
        (m, s, v, sv, l2se)
    } else {
        (t.mean(), f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let covered = sorted.iter().filter(|r| r.covers_truth()).count() as f64 / count as f64;
    let l2 = sq_err.mean();
    Ok(ReportAggregate {
        n: first.n,
        count,
        mean_v: mean(col(|r| r.v_n)),
        mean_c: mean(col(|r| r.c_true)),
        mean_studentized: mean_t,
        se_mean_studentized: se_t,
        var_studentized: var_t,
        se_var_studentized: se_var_t,
        ks_studentized: ks_distance(&t, STUDENTIZED_LIMIT_VARIANCE.sqrt())?,
        coverage: covered,
        coverage_se: (covered * (1.0 - covered) / count as f64).sqrt(),
        rmse: l2.sqrt(),
        l2_error: l2,
        l2_se,
    })
}

/// Runs `job(k)` for `k = 0..count` and gathers results in replicate order.
fn replicate_map<T: Send>(count: usize, n: usize, job: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            job(k).map_err(|e| Error::Replicate {
                n,
                replicate: k,
                source: Box::new(e),
            })
        })
        .collect()
}

fn sample(label: &str, values: Vec<f64>) -> Result<Sample> {
    Sample::new(label, values)
}

/// Runs a campaign on a pool of `workers` threads (0 = rayon's default).
pub fn run_campaign(spec: &CampaignSpec, workers: usize) -> Result<CampaignOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidCampaign(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut out = pool.install(|| run_experiment(spec))?;
    out.summary.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

struct Collected {
    per_n: BTreeMap<usize, PerN>,
    verdicts: Vec<TestVerdict>,
    reports: Vec<EstimateReport>,
    tightness: Option<Vec<TightnessRow>>,
}

impl Collected {
    fn new() -> Self {
        Self {
            per_n: BTreeMap::new(),
            verdicts: Vec::new(),
            reports: Vec::new(),
            tightness: None,
        }
    }

    fn record(&mut self, n: usize, replicates: usize, metrics: BTreeMap<String, f64>) {
        self.per_n.insert(n, PerN { n, replicates, metrics });
    }
}

fn run_experiment(spec: &CampaignSpec) -> Result<CampaignOutput> {
    let mut acc = Collected::new();
    match spec.experiment {
        e if e.uses_reports() => estimate_campaign(spec, &mut acc)?,
        Experiment::VarianceIdentity => variance_identity(spec, &mut acc)?,
        Experiment::StrongMartingale => strong_martingale(spec, &mut acc)?,
        Experiment::Tightness => tightness(spec, &mut acc)?,
        Experiment::LimitCovariance => limit_covariance(spec, &mut acc)?,
        _ => unreachable!("estimate experiments handled above"),
    }
    let verdicts = if spec.gated() { acc.verdicts } else { Vec::new() };
    Ok(CampaignOutput {
        summary: McSummary {
            schema_version: SCHEMA_VERSION,
            spec: spec.clone(),
            per_n: acc.per_n,
            verdicts,
            tightness: acc.tightness,
            wall_time: 0.0,
        },
        reports: acc.reports,
    })
}

fn estimate_campaign(spec: &CampaignSpec, acc: &mut Collected) -> Result<()> {
    let model = ModelSpec::from_names(&spec.sigma_name, &spec.drift_name)?;
    let sigma_name = model.sigma.name();
    let mut rmse = Vec::new();
    for &n in &spec.n_list {
        let reports = replicate_map(spec.replicates, n, |k| {
            let seed = derive_seed(spec.master_seed, k, SheetRole::DrivingW);
            let stats = stream_replicate(&model, n, spec.refinement_r, spec.point, &seed)?;
            EstimateReport::new(
                seed,
                n,
                spec.refinement_r,
                sigma_name.clone(),
                spec.point,
                stats.v_n,
                stats.c_true,
                stats.s_n,
                spec.alpha,
            )
        })?;
        let agg = aggregate(&reports)?;
        rmse.push(agg.rmse);
        let count = agg.count;
        match spec.experiment {
            Experiment::CltCheck => {
                acc.verdicts.push(TestVerdict::at_most(
                    agg.ks_studentized,
                    CLT_KS_TOLERANCE,
                    count,
                    format!("clt n={n}: KS distance of studentized statistic to N(0, 2/3)"),
                ));
                acc.verdicts.push(TestVerdict::in_band(
                    agg.var_studentized,
                    CLT_VARIANCE_BAND.0,
                    CLT_VARIANCE_BAND.1,
                    count,
                    format!("clt n={n}: variance of studentized statistic"),
                ));
            }
            Experiment::ConsistencyRate => {
                let r = model.sigma_bound;
                let bound = 2.0 * r.powi(4) / (n * n) as f64;
                acc.verdicts.push(TestVerdict::at_most(
                    agg.l2_error,
                    bound + SIGMA_GATE * agg.l2_se,
                    count,
                    format!("consistency n={n}: E|V - C|^2 <= 2R^4/n^2 + 3 SE"),
                ));
            }
            Experiment::Coverage => {
                acc.verdicts.push(TestVerdict::in_band(
                    agg.coverage,
                    COVERAGE_BAND.0,
                    COVERAGE_BAND.1,
                    count,
                    format!("coverage n={n}: {}% interval", 100.0 * (1.0 - spec.alpha)),
                ));
            }
            _ => {}
        }
        acc.record(n, count, agg.metrics());
        acc.reports.extend(reports);
    }
    if spec.experiment == Experiment::ConsistencyRate && spec.n_list.len() >= 3 {
        let slope = rate_slope(&spec.n_list, &rmse)?;
        acc.verdicts.push(TestVerdict::in_band(
            slope,
            SLOPE_BAND.0,
            SLOPE_BAND.1,
            spec.n_list.len(),
            "consistency: log-log slope of RMSE(V - C) in n",
        ));
    }
    Ok(())
}

fn variance_identity(spec: &CampaignSpec, acc: &mut Collected) -> Result<()> {
    let f = ScalarFn::from_name(&spec.sigma_name)?;
    for &n in &spec.n_list {
        let grid = Grid::new(n)?;
        let rows = replicate_map(spec.replicates, n, |k| {
            let sheet = generate_sheet(grid, derive_seed(spec.master_seed, k, SheetRole::DrivingW));
            let x = weighted_qv_process(&f, &sheet)?;
            Ok((x.value_at(spec.point)?, predictable_bracket(&f, &sheet, spec.point)?))
        })?;
        let (xs, brackets): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let xs = sample("X", xs)?;
        let brackets = sample("bracket", brackets)?;
        let (mean_x, se_mean_x) = moment_with_se(&xs, Moment::Mean)?;
        let (var_x, se_var_x) = moment_with_se(&xs, Moment::Variance)?;
        let (mean_b, se_b) = moment_with_se(&brackets, Moment::Mean)?;
        let count = xs.len();
        acc.verdicts.push(TestVerdict::at_most(
            mean_x.abs(),
            SIGMA_GATE * se_mean_x,
            count,
            format!("variance_identity n={n}: E[X] = 0 within 3 SE"),
        ));
        acc.verdicts.push(TestVerdict::within(
            var_x,
            mean_b,
            SIGMA_GATE * (se_var_x * se_var_x + se_b * se_b).sqrt(),
            count,
            format!("variance_identity n={n}: Var X matches mean predictable bracket within 3 SE"),
        ));
        let metrics = [
            ("mean_x", mean_x),
            ("se_mean_x", se_mean_x),
            ("var_x", var_x),
            ("se_var_x", se_var_x),
            ("mean_bracket", mean_b),
            ("se_bracket", se_b),
        ];
        acc.record(n, count, metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
    }
    Ok(())
}

/// Bounded functionals of the sheet on `[0,1]×[0,1/2] ∪ [0,1/2]×[0,1]`.
pub const PAST_FUNCTIONALS: [&str; 3] = ["cos W(1/2,1/2)", "tanh W(1,1/2)", "1{W(1/2,1) > 0}"];

fn strong_martingale(spec: &CampaignSpec, acc: &mut Collected) -> Result<()> {
    let f = ScalarFn::from_name(&spec.sigma_name)?;
    let diagonal = SimpleFlow::diagonal();
    for &n in &spec.n_list {
        let grid = Grid::new(n)?;
        let h = n / 2;
        let rows = replicate_map(spec.replicates, n, |k| {
            let sheet = generate_sheet(grid, derive_seed(spec.master_seed, k, SheetRole::DrivingW));
            let w = sheet.lattice();
            let x = weighted_qv_process(&f, &sheet)?;
            let future = x.lattice().block_increment(h, n, h, n)?;
            let along = evaluate_along_flow(&x, &diagonal, &[0.5, 1.0])?;
            Ok([
                future,
                w.at(h, h).cos(),
                w.at(n, h).tanh(),
                if w.at(h, n) > 0.0 { 1.0 } else { 0.0 },
                along[1] - along[0],
                along[0].tanh(),
            ])
        })?;
        let column = |c: usize| sample("col", rows.iter().map(|r| r[c]).collect());
        let future = column(0)?;
        let threshold = SIGMA_GATE / (rows.len() as f64).sqrt();
        let mut metrics = BTreeMap::new();
        for (idx, name) in PAST_FUNCTIONALS.iter().enumerate() {
            let rho = correlation(&future, &column(idx + 1)?)?;
            metrics.insert(format!("corr[{name}]"), rho);
            acc.verdicts.push(TestVerdict::at_most(
                rho.abs(),
                threshold,
                rows.len(),
                format!("strong_martingale n={n}: corr(X increment on [1/2,1]^2, {name})"),
            ));
        }
        let rho = correlation(&column(4)?, &column(5)?)?;
        metrics.insert("corr[diagonal flow increment, tanh X(1/2,1/2)]".into(), rho);
        acc.verdicts.push(TestVerdict::at_most(
            rho.abs(),
            threshold,
            rows.len(),
            format!("strong_martingale n={n}: diagonal-flow increment orthogonal to its past"),
        ));
        acc.record(n, rows.len(), metrics);
    }
    Ok(())
}

/// Counts steps, taken from the largest `δ` down, where `P̂` rises by more
/// than 3 binomial SE as `δ` shrinks.
pub fn tightness_violations(rows: &[TightnessRow]) -> usize {
    let mut violations = 0;
    let mut keys: Vec<(usize, u64)> = rows.iter().map(|r| (r.n, r.eps.to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    for (n, eps) in keys {
        let mut line: Vec<&TightnessRow> = rows.iter().filter(|r| r.n == n && r.eps.to_bits() == eps).collect();
        line.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        for pair in line.windows(2) {
            let (big, small) = (pair[0], pair[1]);
            let se = (big.p_hat * (1.0 - big.p_hat) / big.replicates as f64).sqrt();
            if small.p_hat > big.p_hat + SIGMA_GATE * se {
                violations += 1;
            }
        }
    }
    violations
}

fn tightness(spec: &CampaignSpec, acc: &mut Collected) -> Result<()> {
    let f = ScalarFn::from_name(&spec.sigma_name)?;
    let deltas = spec.delta_list.clone().unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    let eps = spec.eps_list.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let rows = tightness_diagnostic(&f, &spec.n_list, &deltas, &eps, spec.replicates, spec.master_seed)?;
    for &n in &spec.n_list {
        let metrics = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| (format!("p_hat[delta={},eps={}]", r.delta, r.eps), r.p_hat))
            .collect();
        acc.record(n, spec.replicates, metrics);
    }
    let violations = tightness_violations(&rows);
    acc.verdicts.push(TestVerdict::at_most(
        violations as f64,
        1.0,
        spec.replicates,
        "tightness: P[w(X, delta) >= eps] shrinks with delta (violations beyond 3 SE)",
    ));
    acc.tightness = Some(rows);
    Ok(())
}

fn limit_covariance(spec: &CampaignSpec, acc: &mut Collected) -> Result<()> {
    let f = ScalarFn::from_name(&spec.sigma_name)?;
    let z1 = ParamPoint::new(1.0, 0.5)?;
    let z2 = ParamPoint::new(0.5, 1.0)?;
    for &n in &spec.n_list {
        let grid = Grid::new(n * spec.refinement_r)?;
        let m = grid.n();
        let sheet_w = generate_sheet(grid, derive_seed(spec.master_seed, 0, SheetRole::DrivingW));
        let rows = replicate_map(spec.replicates, n, |k| {
            let sheet_b = generate_sheet(grid, derive_seed(spec.master_seed, k, SheetRole::IndependentB));
            let x = simulate_limit(&f, &sheet_w, &sheet_b)?;
            let l = x.lattice();
            Ok([
                x.value_at(ParamPoint::UNIT)?,
                x.value_at(z1)?,
                x.value_at(z2)?,
                l.block_increment(0, m / 2, 0, m / 2)?,
                l.block_increment(m / 2, m, m / 2, m)?,
            ])
        })?;
        let column = |c: usize| sample("col", rows.iter().map(|r| r[c]).collect());
        let count = rows.len();
        let var11 = conditional_covariance(&f, &sheet_w, ParamPoint::UNIT, ParamPoint::UNIT);
        let mut metrics = BTreeMap::new();
        metrics.insert("conditional_var_x11".into(), var11);
        if var11 > 0.0 {
            let standardized = sample("X(1,1)", column(0)?.values().iter().map(|x| x / var11.sqrt()).collect())?;
            let ks = ks_distance(&standardized, 1.0)?;
            metrics.insert("ks_standardized_x11".into(), ks);
            acc.verdicts.push(TestVerdict::at_most(
                ks,
                ks_critical(count, KS_LEVEL),
                count,
                format!("limit n={n}: conditional KS of standardized X(1,1) vs N(0,1) at level 0.01"),
            ));
        }
        let target = conditional_covariance(&f, &sheet_w, z1, z2);
        let (cov, se) = covariance_with_se(&column(1)?, &column(2)?)?;
        metrics.insert("cov_overlap".into(), cov);
        metrics.insert("cov_overlap_target".into(), target);
        metrics.insert("cov_overlap_se".into(), se);
        acc.verdicts.push(TestVerdict::within(
            cov,
            target,
            SIGMA_GATE * se,
            count,
            format!("limit n={n}: Cov(X(1,1/2), X(1/2,1)) = 2 * quadrature of f^2 over [0,1/2]^2"),
        ));
        let rho = correlation(&column(3)?, &column(4)?)?;
        metrics.insert("corr_disjoint_increments".into(), rho);
        acc.verdicts.push(TestVerdict::at_most(
            rho.abs(),
            SIGMA_GATE / (count as f64).sqrt(),
            count,
            format!("limit n={n}: increments on disjoint rectangles uncorrelated given W"),
        ));
        acc.record(n, count, metrics);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn report(k: u64, n: usize, v: f64) -> EstimateReport {
        EstimateReport::new(
            derive_seed(3, k, SheetRole::DrivingW),
            n,
            4,
            "one".into(),
            ParamPoint::UNIT,
            v,
            1.0,
            3.0,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn derive_seed_is_deterministic_and_role_separated() {
        assert_eq!(derive_seed(9, 4, SheetRole::DrivingW), derive_seed(9, 4, SheetRole::DrivingW));
        assert_ne!(derive_seed(9, 0, SheetRole::DrivingW), derive_seed(9, 0, SheetRole::IndependentB));
    }

    #[test]
    fn million_derived_streams_are_distinct() {
        use rand::RngCore;
        let mut specs = HashSet::new();
        let mut words = HashSet::new();
        for k in 0..500_000u64 {
            for role in [SheetRole::DrivingW, SheetRole::IndependentB] {
                let seed = derive_seed(42, k, role);
                assert!(specs.insert(seed));
                assert!(words.insert(seed.rng().next_u64()));
            }
        }
        assert_eq!(specs.len(), 1_000_000);
    }

    #[test]
    fn aggregate_single_and_permuted() {
        let one = aggregate(&[report(0, 8, 1.1)]).unwrap();
        assert_eq!(one.count, 1);
        assert_eq!(one.mean_v, 1.1);
        assert!((one.mean_studentized - 8.0 * 0.1 / 3f64.sqrt()).abs() < 1e-12);

        let reps: Vec<EstimateReport> = (0..50).map(|k| report(k, 8, 1.0 + (k as f64 * 0.37).sin() * 0.1)).collect();
        let mut shuffled = reps.clone();
        shuffled.reverse();
        shuffled.rotate_left(17);
        let a = aggregate(&reps).unwrap();
        let b = aggregate(&shuffled).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn aggregate_rejects_mixed_n() {
        assert!(matches!(
            aggregate(&[report(0, 8, 1.0), report(1, 16, 1.0)]),
            Err(Error::MixedResolution(8, 16))
        ));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn spec_validation() {
        let ok = CampaignSpec::new(Experiment::CltCheck, vec![4], 10, "cos", 1);
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.replicates = 1;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.sigma_name = "sin".into();
        assert!(matches!(bad.validate(), Err(Error::UnknownFunction(_))));
        let mut bad = ok.clone();
        bad.n_list = vec![4, 4];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.refinement_r = 0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.experiment = Experiment::StrongMartingale;
        bad.n_list = vec![5];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn smoke_variance_identity() {
        let spec = CampaignSpec::new(Experiment::VarianceIdentity, vec![4], 2, "one", 7);
        let out = run_campaign(&spec, 1).unwrap();
        let per = &out.summary.per_n[&4];
        assert_eq!(per.replicates, 2);
        assert!(per.metrics["var_x"].is_finite());
        assert!(out.summary.verdicts.is_empty());
        assert!(out.reports.is_empty());
    }

    #[test]
    fn replicate_failure_carries_provenance() {
        let spec = CampaignSpec::new(Experiment::CltCheck, vec![4], 3, "zero", 7);
        match run_campaign(&spec, 1) {
            Err(Error::Replicate { n: 4, replicate: 0, source }) => {
                assert!(matches!(*source, Error::Degenerate));
            }
            other => panic!("unexpected {:?}", other.map(|o| o.summary)),
        }
    }

    #[test]
    fn summary_json_round_trip() {
        let mut spec = CampaignSpec::new(Experiment::Coverage, vec![4, 8], 5, "cos", 11);
        spec.refinement_r = 2;
        let out = run_campaign(&spec, 1).unwrap();
        let text = out.summary.to_json().unwrap();
        let back = McSummary::from_json(&text).unwrap();
        assert_eq!(back, out.summary);
        assert_eq!(out.reports.len(), 10);
        assert_eq!(back.per_n.keys().copied().collect::<Vec<_>>(), vec![4, 8]);
    }

    #[test]
    fn spec_rejects_unknown_keys() {
        let text = r#"{"experiment":"clt_check","n_list":[4],"N":3,"sigma_name":"one","master_seed":1,"bogus":2}"#;
        assert!(serde_json::from_str::<CampaignSpec>(text).is_err());
        let text = r#"{"experiment":"clt_check","n_list":[4],"N":3,"f_name":"one","master_seed":1}"#;
        let spec: CampaignSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.refinement_r, 16);
        assert_eq!(spec.point, ParamPoint::UNIT);
        assert_eq!(spec.alpha, 0.05);
    }

    #[test]
    fn tightness_violation_counter() {
        let row = |delta, p_hat| TightnessRow {
            n: 8,
            delta,
            eps: 1.0,
            p_hat,
            replicates: 100,
        };
        assert_eq!(tightness_violations(&[row(0.25, 0.5), row(0.125, 0.3), row(0.0625, 0.1)]), 0);
        assert_eq!(tightness_violations(&[row(0.25, 0.1), row(0.125, 0.5)]), 1);
    }
}
