//! Multi-scale Monte Carlo estimation of the distance exponent
//! `lambda(d, xi)`, its xi-derivative, thick-point count exponents, and the
//! statistical audits of the monotonicity / Lipschitz / differential
//! inequalities, together with the append-only record store.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::{
    sample_field_uncentered_with_cap, sample_subbox_values, FieldError, FieldSpec,
    DEFAULT_MEMORY_CAP_BYTES,
};
use crate::grid::Grid;
use crate::metric::{
    set_to_set_distance, DistanceQuery, GridRegion, MetricError, VertexWeights,
};
use crate::stats::{self, LineFit};

#[derive(Debug, thiserror::Error)]
pub enum ExponentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(&'static str),
    #[error("underdetermined fit: need at least 3 scales with data")]
    UnderdeterminedFit,
    #[error("xi grid must be uniformly spaced with at least 3 points")]
    GridSpacing,
    #[error("incompatible estimates: xi values differ")]
    IncompatibleEstimates,
    #[error("no records match d={d}, xi={xi}")]
    NoRecords { d: usize, xi: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record store error: {0}")]
    Csv(#[from] csv::Error),
}

/// Parameters of a multi-scale estimation sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dimension: usize,
    /// Sorted ascending.
    pub xi_grid: Vec<f64>,
    pub k_min: u32,
    pub k_max: u32,
    pub replicates_per_cell: usize,
    pub master_seed: u64,
    /// Quantile order p in (0,1); 0.5 estimates the median slope.
    pub quantile: f64,
    /// Memory cap for field synthesis, bytes.
    pub memory_cap_bytes: u64,
}

impl ExperimentPlan {
    pub fn new(dimension: usize, xi_grid: Vec<f64>, k_min: u32, k_max: u32) -> Self {
        ExperimentPlan {
            dimension,
            xi_grid,
            k_min,
            k_max,
            replicates_per_cell: 20,
            master_seed: 0,
            quantile: 0.5,
            memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES,
        }
    }

    pub fn validate(&self) -> Result<(), ExponentError> {
        if self.dimension < 2 {
            return Err(ExponentError::InvalidPlan("dimension must be >= 2"));
        }
        if self.k_min < 2 {
            return Err(ExponentError::InvalidPlan("k_min must be >= 2"));
        }
        if self.k_max < self.k_min + 2 {
            return Err(ExponentError::InvalidPlan(
                "k range must contain at least 3 scales",
            ));
        }
        if self.replicates_per_cell < 2 {
            return Err(ExponentError::InvalidPlan("need >= 2 replicates per cell"));
        }
        if self.xi_grid.is_empty() || self.xi_grid.iter().any(|x| !(*x >= 0.0)) {
            return Err(ExponentError::InvalidPlan("xi grid must be >= 0"));
        }
        if self.xi_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(ExponentError::InvalidPlan("xi grid must be sorted ascending"));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(ExponentError::InvalidPlan("quantile must lie in (0,1)"));
        }
        Ok(())
    }

    pub fn scales(&self) -> impl Iterator<Item = u32> {
        self.k_min..=self.k_max
    }
}

/// One Monte Carlo cell: a crossing distance at fixed `(d, xi, k, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub d: usize,
    pub xi: f64,
    pub k: u32,
    pub seed: u64,
    pub log_distance: f64,
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn dedup_key(&self) -> (usize, u64, u32, u64) {
        (self.d, self.xi.to_bits(), self.k, self.seed)
    }
}

/// Samples one field, builds exponential weights, and measures the
/// left-right crossing distance of the unit box.
pub fn run_cell(
    d: usize,
    xi: f64,
    k: u32,
    seed: u64,
    job_key: &str,
) -> Result<ResultRecord, ExponentError> {
    run_cell_with_cap(d, xi, k, seed, job_key, DEFAULT_MEMORY_CAP_BYTES)
}

pub fn run_cell_with_cap(
    d: usize,
    xi: f64,
    k: u32,
    seed: u64,
    job_key: &str,
    cap_bytes: u64,
) -> Result<ResultRecord, ExponentError> {
    let start = Instant::now();
    let spec = FieldSpec::new(d, k, seed).with_job_key(job_key);
    let sample = sample_field_uncentered_with_cap(&spec, cap_bytes)?;
    let weights = VertexWeights::from_field(&sample, xi)?;
    let query = DistanceQuery::left_right(GridRegion::full(d, k))?;
    let (distance, _) = set_to_set_distance(&query, &weights)?;
    Ok(ResultRecord {
        d,
        xi,
        k,
        seed,
        log_distance: distance.ln(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Job key namespace for estimation cells; replicate index enters through
/// the seed so that the record store's `(d, xi, k, seed)` key is unique.
pub const ESTIMATE_JOB_KEY: &str = "estimate";

/// Runs every cell of the plan sequentially and returns records sorted by
/// `(d, xi, k, seed)` so downstream fits are order-independent.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ResultRecord>, ExponentError> {
    plan.validate()?;
    let mut records = Vec::new();
    for &xi in &plan.xi_grid {
        for k in plan.scales() {
            for rep in 0..plan.replicates_per_cell {
                let seed = plan.master_seed.wrapping_add(rep as u64);
                records.push(run_cell_with_cap(
                    plan.dimension,
                    xi,
                    k,
                    seed,
                    ESTIMATE_JOB_KEY,
                    plan.memory_cap_bytes,
                )?);
            }
        }
    }
    sort_records(&mut records);
    Ok(records)
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        a.d.cmp(&b.d)
            .then(a.xi.total_cmp(&b.xi))
            .then(a.k.cmp(&b.k))
            .then(a.seed.cmp(&b.seed))
    });
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentEstimate {
    pub d: usize,
    pub xi: f64,
    pub lambda_hat: f64,
    pub stderr: f64,
    /// `(k, p-quantile of log D)` per scale.
    pub per_scale: Vec<(u32, f64)>,
    pub fit: LineFit,
    pub quantile: f64,
}

/// Deterministic distance of the zero field: `log(1 + eps)`. Subtracted
/// from the quantiles before regression so the xi = 0 slope is exactly
/// zero; the subtraction is a finite-size offset vanishing as eps -> 0.
fn zero_field_baseline(k: u32) -> f64 {
    0.5f64.powi(k as i32).ln_1p()
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Quantile-slope estimate of `lambda(d, xi)` over the plan's scale range:
/// weighted least squares of `quantile_p(log D) - log(1 + eps)` against
/// `log eps = -k log 2`, with a nonparametric bootstrap for the stderr and
/// the WLS weights.
pub fn estimate_lambda(
    plan: &ExperimentPlan,
    xi: f64,
    records: &[ResultRecord],
) -> Result<ExponentEstimate, ExponentError> {
    plan.validate()?;
    let mut per_k: Vec<(u32, Vec<f64>)> = Vec::new();
    for k in plan.scales() {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.d == plan.dimension && r.xi == xi && r.k == k)
            .map(|r| r.log_distance)
            .collect();
        if !vals.is_empty() {
            per_k.push((k, vals));
        }
    }
    if per_k.is_empty() {
        return Err(ExponentError::NoRecords {
            d: plan.dimension,
            xi,
        });
    }
    if per_k.len() < 3 {
        return Err(ExponentError::UnderdeterminedFit);
    }

    let xs: Vec<f64> = per_k
        .iter()
        .map(|(k, _)| -(*k as f64) * std::f64::consts::LN_2)
        .collect();
    let ys: Vec<f64> = per_k
        .iter()
        .map(|(k, v)| stats::quantile(v, plan.quantile) - zero_field_baseline(*k))
        .collect();

    // bootstrap over replicates within each scale
    let mut rng = bootstrap_rng(plan.master_seed, plan.dimension, xi);
    let mut slope_samples = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut quantile_samples: Vec<Vec<f64>> = vec![Vec::new(); per_k.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut ys_b = Vec::with_capacity(per_k.len());
        for (j, (k, vals)) in per_k.iter().enumerate() {
            let resample: Vec<f64> = (0..vals.len())
                .map(|_| vals[rng.gen_range(0..vals.len())])
                .collect();
            let q = stats::quantile(&resample, plan.quantile) - zero_field_baseline(*k);
            quantile_samples[j].push(q);
            ys_b.push(q);
        }
        slope_samples.push(stats::linear_fit(&xs, &ys_b).slope);
    }
    let stderr = stats::sample_variance(&slope_samples).sqrt();

    // WLS weights from the bootstrap variance of each scale's quantile
    let weights: Vec<f64> = quantile_samples
        .iter()
        .map(|qs| {
            let v = stats::sample_variance(qs).max(1e-12);
            1.0 / v
        })
        .collect();
    let fit = stats::weighted_linear_fit(&xs, &ys, &weights);

    Ok(ExponentEstimate {
        d: plan.dimension,
        xi,
        lambda_hat: fit.slope,
        stderr,
        per_scale: per_k
            .iter()
            .zip(&ys)
            .map(|((k, _), y)| (*k, *y + zero_field_baseline(*k)))
            .collect(),
        fit,
        quantile: plan.quantile,
    })
}

fn bootstrap_rng(master_seed: u64, d: usize, xi: f64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"lfpp.exponent.bootstrap.v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update((d as u64).to_le_bytes());
    hasher.update(xi.to_bits().to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeEstimate {
    pub xi: f64,
    pub lambda_prime_hat: f64,
    pub delta_xi: f64,
    pub stderr: f64,
}

/// Central differences of adjacent exponent estimates on a uniform xi grid.
pub fn estimate_derivative(
    estimates: &[ExponentEstimate],
) -> Result<Vec<DerivativeEstimate>, ExponentError> {
    if estimates.len() < 3 {
        return Err(ExponentError::GridSpacing);
    }
    let h = estimates[1].xi - estimates[0].xi;
    if h <= 0.0 {
        return Err(ExponentError::GridSpacing);
    }
    for w in estimates.windows(2) {
        if ((w[1].xi - w[0].xi) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(ExponentError::GridSpacing);
        }
    }
    Ok(estimates
        .windows(3)
        .map(|w| DerivativeEstimate {
            xi: w[1].xi,
            lambda_prime_hat: (w[2].lambda_hat - w[0].lambda_hat) / (2.0 * h),
            delta_xi: h,
            stderr: (w[0].stderr.powi(2) + w[2].stderr.powi(2)).sqrt() / (2.0 * h),
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub xi: f64,
    pub lower: f64,
    pub upper: f64,
    pub lambda_prime_hat: f64,
    pub tolerance: f64,
    pub margin_lower: f64,
    pub margin_upper: f64,
    pub pass: bool,
    /// Violation beyond 4x combined stderr: likely sampler bias.
    pub contradiction: bool,
}

/// Audits `max{-xi, (lambda-1)/xi} <= lambda' <= sqrt(2(d-1)+2lambda+xi^2)
/// - xi` at the matching grid point, at 2x combined stderr; the
/// `(lambda-1)/xi` branch is skipped at xi = 0.
pub fn check_differential_inequalities(
    est: &ExponentEstimate,
    der: &DerivativeEstimate,
    d: usize,
) -> Result<InequalityReport, ExponentError> {
    if (est.xi - der.xi).abs() > 1e-12 {
        return Err(ExponentError::IncompatibleEstimates);
    }
    let xi = est.xi;
    let lam = est.lambda_hat;
    let lower = if xi > 0.0 {
        (-xi).max((lam - 1.0) / xi)
    } else {
        -xi
    };
    let upper = (2.0 * (d as f64 - 1.0) + 2.0 * lam + xi * xi).sqrt() - xi;
    let tolerance = 2.0 * (der.stderr + est.stderr);
    let margin_lower = der.lambda_prime_hat - lower;
    let margin_upper = upper - der.lambda_prime_hat;
    let pass = margin_lower >= -tolerance && margin_upper >= -tolerance;
    let contradiction = margin_lower < -2.0 * tolerance || margin_upper < -2.0 * tolerance;
    Ok(InequalityReport {
        xi,
        lower,
        upper,
        lambda_prime_hat: der.lambda_prime_hat,
        tolerance,
        margin_lower,
        margin_upper,
        pass,
        contradiction,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzRow {
    pub xi_lo: f64,
    pub xi_hi: f64,
    pub increment: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub d: usize,
    pub rows: Vec<LipschitzRow>,
    pub pass: bool,
}

/// Audits the `sqrt(2d)`-Lipschitz bound on adjacent estimates:
/// `|increment| <= sqrt(2d) dxi + 2(stderr_i + stderr_{i+1})`.
pub fn check_lipschitz(estimates: &[ExponentEstimate], d: usize) -> LipschitzReport {
    let slope_bound = (2.0 * d as f64).sqrt();
    let rows: Vec<LipschitzRow> = estimates
        .windows(2)
        .map(|w| {
            let dxi = w[1].xi - w[0].xi;
            let increment = (w[1].lambda_hat - w[0].lambda_hat).abs();
            let bound = slope_bound * dxi + 2.0 * (w[0].stderr + w[1].stderr);
            LipschitzRow {
                xi_lo: w[0].xi,
                xi_hi: w[1].xi,
                increment,
                bound,
                pass: increment <= bound,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    LipschitzReport { d, rows, pass }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub xi: f64,
    pub d_low: usize,
    pub d_high: usize,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Audits `lambda(d+1, xi) >= lambda(d, xi)` within 2x combined stderr.
pub fn check_monotone_in_dimension(
    est_d: &ExponentEstimate,
    est_d_plus: &ExponentEstimate,
) -> Result<MonotoneReport, ExponentError> {
    if (est_d.xi - est_d_plus.xi).abs() > 1e-12 {
        return Err(ExponentError::IncompatibleEstimates);
    }
    let tolerance = 2.0 * (est_d.stderr + est_d_plus.stderr);
    Ok(MonotoneReport {
        xi: est_d.xi,
        d_low: est_d.d,
        d_high: est_d_plus.d,
        lambda_low: est_d.lambda_hat,
        lambda_high: est_d_plus.lambda_hat,
        tolerance,
        pass: est_d_plus.lambda_hat >= est_d.lambda_hat - tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThickPointReport {
    pub d: usize,
    pub alpha: f64,
    /// `(k, mean count of sites with h < alpha log eps)` per scale.
    pub per_scale: Vec<(u32, f64)>,
    pub fitted_exponent: f64,
    /// Reference `d - alpha^2/2` from the counting lemma.
    pub reference_exponent: f64,
    /// Expected count is O(1): the fit has little statistical power.
    pub low_power: bool,
}

/// Counts low-field sites (`h < alpha log eps`, a negative threshold) per
/// scale and fits `log mean-count` against `log(1/eps)`. Sampling may be
/// restricted to a dyadic sub-box: per-site marginals are stationary, so
/// the count only changes by the constant volume factor, which drops out of
/// the slope.
pub fn thick_point_scan(
    d: usize,
    alpha: f64,
    k_range: (u32, u32),
    replicates: usize,
    seed: u64,
    domain_side: f64,
) -> Result<ThickPointReport, ExponentError> {
    if !(alpha > 0.0) {
        return Err(ExponentError::InvalidPlan("alpha must be > 0"));
    }
    if replicates < 2 {
        return Err(ExponentError::InvalidPlan("need >= 2 replicates"));
    }
    if k_range.1 < k_range.0 + 2 {
        return Err(ExponentError::InvalidPlan(
            "k range must contain at least 3 scales",
        ));
    }
    let mut per_scale = Vec::new();
    for k in k_range.0..=k_range.1 {
        let threshold = alpha * (0.5f64.powi(k as i32)).ln();
        let mut total = 0usize;
        for rep in 0..replicates {
            let spec = FieldSpec::new(d, k, seed.wrapping_add(rep as u64))
                .with_job_key(format!("thick.a{alpha}"));
            let values = sample_subbox_values(&spec, domain_side)?;
            // Count over the half-open window (drop the far boundary site on
            // each axis) so the site count is exactly (2^k b)^d; the extra
            // boundary column would otherwise bias the fitted slope downward
            // at coarse scales.
            let side = (values.len() as f64).powf(1.0 / d as f64).round() as usize;
            let grid = Grid::new(d, side);
            total += values
                .iter()
                .enumerate()
                .filter(|(i, h)| {
                    **h < threshold && (0..d).all(|axis| grid.coord(*i, axis) < side - 1)
                })
                .count();
        }
        per_scale.push((k, total as f64 / replicates as f64));
    }
    let pts: Vec<(f64, f64)> = per_scale
        .iter()
        .filter(|(_, c)| *c > 0.0)
        .map(|(k, c)| (*k as f64 * std::f64::consts::LN_2, c.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(ExponentError::UnderdeterminedFit);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = stats::linear_fit(&xs, &ys);
    Ok(ThickPointReport {
        d,
        alpha,
        per_scale,
        fitted_exponent: fit.slope,
        reference_exponent: d as f64 - alpha * alpha / 2.0,
        low_power: alpha * alpha / 2.0 >= d as f64,
    })
}

pub const RECORD_HEADER: &str = "d,xi,k,seed,log_distance,wall_seconds";

/// Appends records to the CSV store, creating it with a header when absent
/// and silently dropping rows whose `(d, xi, k, seed)` key is already
/// present. Returns the number of rows written.
pub fn append_records(path: &Path, records: &[ResultRecord]) -> Result<usize, ExponentError> {
    let mut seen: HashSet<(usize, u64, u32, u64)> = HashSet::new();
    let exists = path.exists();
    if exists {
        for r in load_records(path)? {
            seen.insert(r.dedup_key());
        }
    }
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut out = std::io::BufWriter::new(file);
    if !exists {
        writeln!(out, "{RECORD_HEADER}")?;
    }
    let mut written = 0usize;
    for r in records {
        if seen.insert(r.dedup_key()) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.d, r.xi, r.k, r.seed, r.log_distance, r.wall_seconds
            )?;
            written += 1;
        }
    }
    out.flush()?;
    Ok(written)
}

pub fn load_records(path: &Path) -> Result<Vec<ResultRecord>, ExponentError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize::<ResultRecord>() {
        records.push(row?);
    }
    Ok(records)
}
