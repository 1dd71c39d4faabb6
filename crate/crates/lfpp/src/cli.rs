//! Command-line front end: argument parsing with environment overrides,
//! deterministic job orchestration over a bounded worker pool, the
//! append-only record store with checksum sidecars, and report emission.
//!
//! Reproducibility contract: the config snapshot and master seed determine
//! every byte of every data file. Timing always goes to stderr, never into
//! data files (the record store's `wall_seconds` column is written as 0).

use std::collections::HashSet;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{
    self, d_gamma_bounds, d_gamma_derivative_check, lambda_bounds, rho_lower_2d, rho_upper_2d,
    solve_d_gamma, write_figure_csv, BoundsError, LambdaFunction,
};
use crate::config::{parse_float_list, parse_k_range, ConfigError, RunConfig};
use crate::exponent::{
    append_records, check_differential_inequalities, check_lipschitz, estimate_derivative,
    estimate_lambda, load_records, run_cell_with_cap, sort_records, thick_point_scan,
    ExperimentPlan, ExponentError, ResultRecord, ESTIMATE_JOB_KEY,
};
use crate::field::{
    sample_field_uncentered_with_cap, save_snapshot, variance_profile, FieldError, FieldSpec,
};
use crate::grid::Grid;
use crate::metric::{
    brute_force_distance, set_to_set_distance, DistanceQuery, GridRegion, MetricError,
    VertexWeights,
};
use crate::stats;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("bounds error ({context}): {source}")]
    Bounds {
        context: String,
        source: BoundsError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} job(s) failed; see {manifest}")]
    PartialFailure { failed: usize, manifest: PathBuf },
    #[error("checksum mismatch for {0}; result store may be corrupted")]
    ChecksumMismatch(PathBuf),
    #[error("verification failed: {0:?}")]
    VerifyFailed(Vec<String>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn bounds_err(context: impl Into<String>) -> impl FnOnce(BoundsError) -> CliError {
    let context = context.into();
    move |source| CliError::Bounds { context, source }
}

/// Simulator and numerical verifier for Liouville first passage percolation
/// in dimension d >= 2.
#[derive(Debug, Parser)]
#[command(name = "lfpp", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Lattice dimension d >= 2.
    #[arg(long, default_value_t = 2, env = "LFPP_D")]
    pub d: usize,
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 0, env = "LFPP_SEED")]
    pub seed: u64,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1, env = "LFPP_WORKERS")]
    pub workers: usize,
    /// Memory cap in bytes, enforced before any field allocation.
    #[arg(long, default_value_t = 4 * 1024 * 1024 * 1024, env = "LFPP_MEM_CAP")]
    pub mem_cap: u64,
    /// Output directory for this run.
    #[arg(long, default_value = "out", env = "LFPP_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the distance exponent lambda(d, xi) by multi-scale Monte
    /// Carlo and run the statistical audits.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma list (`0.1,0.25`) or range (`a:b:step`) of xi values.
        #[arg(long, default_value = "0.4082", env = "LFPP_XI")]
        xi: String,
        /// Scale range `a..b` (grid spacing eps = 2^-k).
        #[arg(long, default_value = "5..9", env = "LFPP_K")]
        k: String,
        /// Replicates per (xi, k) cell.
        #[arg(long, default_value_t = 20, env = "LFPP_REPS")]
        reps: usize,
        /// Quantile order p in (0,1) for the slope regression.
        #[arg(long, default_value_t = 0.5, env = "LFPP_QUANTILE")]
        quantile: f64,
    },
    /// Emit closed-form bound tables and figure CSVs.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Which figure table: `lambda` or `dgamma`.
        #[arg(long, default_value = "lambda", env = "LFPP_FIGURE")]
        figure: String,
        /// xi range for the lambda figure (comma list or `a:b:step`).
        #[arg(long, default_value = "0:1.5:0.001", env = "LFPP_XI")]
        xi: String,
    },
    /// Solve the fixed-point dimension d_gamma under bracketing lambdas.
    Dgamma {
        #[command(flatten)]
        common: CommonArgs,
        /// gamma values (comma list or `a:b:step`); default: full range at
        /// step 0.01.
        #[arg(long, env = "LFPP_GAMMA")]
        gamma: Option<String>,
    },
    /// Sample fields and store snapshots plus summary statistics.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// Scale index k (grid spacing eps = 2^-k).
        #[arg(long, default_value = "6", env = "LFPP_K")]
        k: String,
        /// Number of independent samples.
        #[arg(long, default_value_t = 1, env = "LFPP_REPS")]
        reps: usize,
    },
    /// Run the self-verification suite and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Small-k subset finishing in well under a minute.
        #[arg(long, env = "LFPP_QUICK")]
        quick: bool,
    },
}

impl Cli {
    /// Flattens parsed arguments into the persisted config form.
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let common = match &self.command {
            Command::Estimate { common, .. }
            | Command::Bounds { common, .. }
            | Command::Dgamma { common, .. }
            | Command::Sample { common, .. }
            | Command::Verify { common, .. } => common,
        };
        cfg.d = common.d;
        cfg.seed = common.seed;
        cfg.workers = common.workers;
        cfg.mem_cap = common.mem_cap;
        cfg.out = common.out.clone();
        let parse_xi = |s: &str| {
            parse_float_list(s)
                .ok_or_else(|| CliError::InvalidArgument(format!("--xi {s}")))
        };
        let parse_k = |s: &str| {
            parse_k_range(s).ok_or_else(|| CliError::InvalidArgument(format!("--k {s}")))
        };
        match &self.command {
            Command::Estimate {
                xi,
                k,
                reps,
                quantile,
                ..
            } => {
                cfg.subcommand = "estimate".into();
                cfg.xi = parse_xi(xi)?;
                let (lo, hi) = parse_k(k)?;
                cfg.k_min = lo;
                cfg.k_max = hi;
                cfg.reps = *reps;
                cfg.quantile = *quantile;
            }
            Command::Bounds { figure, xi, .. } => {
                cfg.subcommand = "bounds".into();
                cfg.figure = Some(figure.clone());
                cfg.xi = parse_xi(xi)?;
            }
            Command::Dgamma { gamma, .. } => {
                cfg.subcommand = "dgamma".into();
                if let Some(g) = gamma {
                    cfg.gamma = parse_float_list(g)
                        .ok_or_else(|| CliError::InvalidArgument(format!("--gamma {g}")))?;
                }
            }
            Command::Sample { k, reps, .. } => {
                cfg.subcommand = "sample".into();
                let (lo, hi) = parse_k(k)?;
                cfg.k_min = lo;
                cfg.k_max = hi;
                cfg.reps = *reps;
            }
            Command::Verify { quick, .. } => {
                cfg.subcommand = "verify".into();
                cfg.quick = *quick;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Dispatches a parsed config to its subcommand.
pub fn run_config(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    match cfg.subcommand.as_str() {
        "estimate" => cmd_estimate(cfg),
        "bounds" => cmd_bounds(cfg),
        "dgamma" => cmd_dgamma(cfg),
        "sample" => cmd_sample(cfg),
        "verify" => cmd_verify(cfg),
        other => Err(CliError::InvalidArgument(format!(
            "unknown subcommand {other}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// checksum sidecars

fn checksum_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".sha256");
    path.with_file_name(name)
}

fn write_checksum(path: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    std::fs::write(checksum_path(path), format!("{hex}\n"))?;
    Ok(())
}

/// Verifies a file against its checksum sidecar; missing sidecars pass
/// (nothing to compare against).
pub fn verify_checksum(path: &Path) -> Result<(), CliError> {
    let sidecar = checksum_path(path);
    if !sidecar.exists() {
        return Ok(());
    }
    let expected = std::fs::read_to_string(&sidecar)?;
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    if expected.trim() != hex {
        return Err(CliError::ChecksumMismatch(path.to_path_buf()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// worker pool

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    xi: f64,
    k: u32,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct JobFailure {
    xi: f64,
    k: u32,
    seed: u64,
    error: String,
}

/// Static partition of cells over workers by hash of the cell key; results
/// are merged and sorted, so output is independent of the worker count.
fn run_cells(
    d: usize,
    cells: &[Cell],
    workers: usize,
    cap: u64,
) -> (Vec<ResultRecord>, Vec<JobFailure>) {
    let assign = |c: &Cell| -> usize {
        let mut h = DefaultHasher::new();
        (d, c.xi.to_bits(), c.k, c.seed).hash(&mut h);
        (h.finish() % workers as u64) as usize
    };
    let mut partitions: Vec<Vec<Cell>> = vec![Vec::new(); workers];
    for c in cells {
        partitions[assign(c)].push(*c);
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = partitions
            .iter()
            .map(|part| {
                scope.spawn(move || {
                    let mut recs = Vec::new();
                    let mut fails = Vec::new();
                    for c in part {
                        match run_cell_with_cap(d, c.xi, c.k, c.seed, ESTIMATE_JOB_KEY, cap) {
                            Ok(mut r) => {
                                eprintln!(
                                    "cell d={d} xi={} k={} seed={}: {:.3}s",
                                    c.xi, c.k, c.seed, r.wall_seconds
                                );
                                // timings live in logs only, never data files
                                r.wall_seconds = 0.0;
                                recs.push(r);
                            }
                            Err(e) => fails.push(JobFailure {
                                xi: c.xi,
                                k: c.k,
                                seed: c.seed,
                                error: e.to_string(),
                            }),
                        }
                    }
                    (recs, fails)
                })
            })
            .collect();
        for h in handles {
            let (recs, fails) = h.join().expect("worker panicked");
            records.extend(recs);
            failures.extend(fails);
        }
    });
    sort_records(&mut records);
    failures.sort_by(|a, b| {
        a.xi.total_cmp(&b.xi)
            .then(a.k.cmp(&b.k))
            .then(a.seed.cmp(&b.seed))
    });
    (records, failures)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn xi_file_tag(xi: f64) -> String {
    format!("{xi}").replace('.', "p")
}

// ---------------------------------------------------------------------------
// estimate

fn cmd_estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut plan = ExperimentPlan::new(cfg.d, cfg.xi.clone(), cfg.k_min, cfg.k_max);
    plan.replicates_per_cell = cfg.reps;
    plan.master_seed = cfg.seed;
    plan.quantile = cfg.quantile;
    plan.memory_cap_bytes = cfg.mem_cap;
    plan.validate()?;

    let records_path = cfg.out.join("records.csv");
    verify_checksum(&records_path)?;
    let existing: HashSet<(usize, u64, u32, u64)> = if records_path.exists() {
        load_records(&records_path)?
            .iter()
            .map(|r| r.dedup_key())
            .collect()
    } else {
        HashSet::new()
    };

    let mut cells = Vec::new();
    for &xi in &plan.xi_grid {
        for k in plan.scales() {
            for rep in 0..plan.replicates_per_cell {
                let seed = plan.master_seed.wrapping_add(rep as u64);
                if !existing.contains(&(cfg.d, xi.to_bits(), k, seed)) {
                    cells.push(Cell { xi, k, seed });
                }
            }
        }
    }
    let (records, failures) = run_cells(cfg.d, &cells, cfg.workers, cfg.mem_cap);
    append_records(&records_path, &records)?;
    write_checksum(&records_path)?;

    let mut all = load_records(&records_path)?;
    sort_records(&mut all);
    let mut estimates = Vec::new();
    for &xi in &plan.xi_grid {
        match estimate_lambda(&plan, xi, &all) {
            Ok(est) => {
                write_json(
                    &cfg.out
                        .join(format!("lambda_d{}_xi{}.json", cfg.d, xi_file_tag(xi))),
                    &est,
                )?;
                estimates.push(est);
            }
            Err(e) => eprintln!("estimate for xi={xi} skipped: {e}"),
        }
    }
    if estimates.len() >= 2 {
        write_json(
            &cfg.out.join("lipschitz.json"),
            &check_lipschitz(&estimates, cfg.d),
        )?;
    }
    if let Ok(ders) = estimate_derivative(&estimates) {
        let mut reports = Vec::new();
        for der in &ders {
            if let Some(est) = estimates.iter().find(|e| (e.xi - der.xi).abs() < 1e-12) {
                reports.push(check_differential_inequalities(est, der, cfg.d)?);
            }
        }
        write_json(&cfg.out.join("differential.json"), &reports)?;
    }

    if failures.is_empty() {
        Ok(())
    } else {
        let manifest = cfg.out.join("errors.json");
        write_json(&manifest, &failures)?;
        Err(CliError::PartialFailure {
            failed: failures.len(),
            manifest,
        })
    }
}

// ---------------------------------------------------------------------------
// bounds / dgamma

fn cmd_bounds(cfg: &RunConfig) -> Result<(), CliError> {
    let figure = cfg.figure.as_deref().unwrap_or("lambda");
    match figure {
        "lambda" => {
            let mut rows = Vec::with_capacity(cfg.xi.len());
            for &xi in &cfg.xi {
                let b = lambda_bounds(cfg.d, xi)
                    .map_err(bounds_err(format!("d={} xi={xi}", cfg.d)))?;
                rows.push((xi, b.lower, b.upper));
            }
            write_figure_csv(
                &cfg.out.join(format!("figure_lambda_d{}.csv", cfg.d)),
                ("xi", "lower", "upper"),
                &rows,
            )
            .map_err(bounds_err("figure csv"))?;
        }
        "dgamma" => {
            let rows = bounds::dgamma_figure_rows(cfg.d, 0.001)
                .map_err(bounds_err(format!("d={}", cfg.d)))?;
            write_figure_csv(
                &cfg.out.join(format!("figure_dgamma_d{}.csv", cfg.d)),
                ("gamma", "lower", "upper"),
                &rows,
            )
            .map_err(bounds_err("figure csv"))?;
        }
        other => {
            return Err(CliError::InvalidArgument(format!("--figure {other}")));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DgammaRow {
    gamma: f64,
    corollary_lower: f64,
    corollary_upper: f64,
    dgamma_at_lower_lambda: f64,
    dgamma_at_upper_lambda: f64,
}

#[derive(Debug, Serialize)]
struct DgammaReport {
    d: usize,
    xi_c_bracket: (f64, f64),
    derivative_rows: Vec<bounds::DerivativeCheckRow>,
    derivative_positive: bool,
}

fn lambda_bracket_functions(d: usize) -> (LambdaFunction, LambdaFunction) {
    let lower = LambdaFunction::from_fn(|xi| rho_lower_2d(xi).unwrap_or(0.0));
    let upper = if d == 2 {
        LambdaFunction::from_fn(|xi| rho_upper_2d(xi).unwrap_or(0.0))
    } else {
        let s = (2.0 * d as f64 - 2.0).sqrt();
        LambdaFunction::from_fn(move |xi| xi * s)
    };
    (lower, upper)
}

fn cmd_dgamma(cfg: &RunConfig) -> Result<(), CliError> {
    let d = cfg.d.max(3); // the Corollary bracket needs d >= 3
    let gmax = (2.0 * d as f64).sqrt();
    let gammas: Vec<f64> = if cfg.gamma.is_empty() {
        let n = (gmax / 0.01).ceil() as usize;
        (1..n)
            .map(|i| i as f64 * 0.01)
            .filter(|g| *g < gmax)
            .collect()
    } else {
        cfg.gamma.clone()
    };
    let (lam_lower, lam_upper) = lambda_bracket_functions(d);
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in &gammas {
        let cor = d_gamma_bounds(d, gamma).map_err(bounds_err(format!("gamma={gamma}")))?;
        let lo = solve_d_gamma(gamma, d, &lam_lower)
            .map_err(bounds_err(format!("gamma={gamma} (lower lambda)")))?;
        let hi = solve_d_gamma(gamma, d, &lam_upper)
            .map_err(bounds_err(format!("gamma={gamma} (upper lambda)")))?;
        rows.push(DgammaRow {
            gamma,
            corollary_lower: cor.lower,
            corollary_upper: cor.upper,
            dgamma_at_lower_lambda: lo.d_gamma,
            dgamma_at_upper_lambda: hi.d_gamma,
        });
    }
    let mut csv = String::from(
        "gamma,corollary_lower,corollary_upper,dgamma_at_lower_lambda,dgamma_at_upper_lambda\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.gamma,
            r.corollary_lower,
            r.corollary_upper,
            r.dgamma_at_lower_lambda,
            r.dgamma_at_upper_lambda
        ));
    }
    std::fs::write(cfg.out.join(format!("dgamma_d{d}.csv")), csv)?;

    let bracket = bounds::xi_c_bracket(d, &lam_lower, &lam_upper)
        .map_err(bounds_err("xi_c bracket"))?;
    // derivative audit on a subcritical grid under the lower lambda, whose
    // xi_c is the bracket's upper end
    let hi = bracket.1 * 0.9;
    let grid: Vec<f64> = (1..=20).map(|i| hi * i as f64 / 20.0).collect();
    let derivative_rows = d_gamma_derivative_check(&lam_lower, d, &grid)
        .map_err(bounds_err("derivative check"))?;
    let derivative_positive = derivative_rows.iter().all(|r| r.formula_value > 0.0);
    write_json(
        &cfg.out.join(format!("dgamma_report_d{d}.json")),
        &DgammaReport {
            d,
            xi_c_bracket: bracket,
            derivative_rows,
            derivative_positive,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sample

#[derive(Debug, Serialize)]
struct SampleSummary {
    d: usize,
    k: u32,
    seed: u64,
    file: String,
    mean: f64,
    variance: f64,
}

fn cmd_sample(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.k_max;
    let mut summaries = Vec::new();
    for rep in 0..cfg.reps {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let spec = FieldSpec::new(cfg.d, k, seed).with_job_key("sample");
        let sample = sample_field_uncentered_with_cap(&spec, cfg.mem_cap)?;
        let name = format!("field_d{}_k{k}_seed{seed}", cfg.d);
        save_snapshot(&sample, &cfg.out.join(&name))?;
        summaries.push(SampleSummary {
            d: cfg.d,
            k,
            seed,
            file: format!("{name}.field"),
            mean: stats::mean(&sample.values),
            variance: stats::sample_variance(&sample.values),
        });
    }
    write_json(&cfg.out.join("samples.json"), &summaries)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn verify_bound_identities() -> CheckOutcome {
    let bp = 1.0 / 6.0f64.sqrt();
    let lo = rho_lower_2d(bp).unwrap();
    let hi = rho_upper_2d(bp).unwrap();
    let mut pass = (lo - 1.0 / 6.0).abs() < 1e-12 && (hi - 1.0 / 6.0).abs() < 1e-12;
    for i in 0..=3000 {
        let xi = i as f64 * 1e-3;
        if rho_lower_2d(xi).unwrap() > rho_upper_2d(xi).unwrap() + 1e-12 {
            pass = false;
            break;
        }
    }
    check(
        "bound_branch_identities",
        pass,
        format!("rho at branch point: [{lo}, {hi}]"),
    )
}

fn verify_dgamma_solver(quick: bool) -> CheckOutcome {
    let lam = LambdaFunction::from_fn(|xi| 0.5 - xi);
    let sol = match solve_d_gamma(1.0, 3, &lam) {
        Ok(s) => s,
        Err(e) => return check("dgamma_solver", false, e.to_string()),
    };
    let mut pass = (sol.d_gamma - 5.0).abs() <= 1e-9;
    let zero = LambdaFunction::from_fn(|_| 0.0);
    let edge = solve_d_gamma(1.0, 3, &zero).unwrap().d_gamma;
    pass &= (edge - 3.5).abs() <= 1e-8;
    let upper = LambdaFunction::from_fn(|xi| 2.0 * xi);
    let edge = solve_d_gamma(1.0, 3, &upper).unwrap().d_gamma;
    pass &= (edge - 5.5).abs() <= 1e-8;
    let step = if quick { 0.05 } else { 0.01 };
    let mut prev = 0.0;
    let mut g = step;
    while g < 6.0f64.sqrt() {
        let s = solve_d_gamma(g, 3, &zero).unwrap().d_gamma;
        if s <= prev {
            pass = false;
            break;
        }
        prev = s;
        g += step;
    }
    check(
        "dgamma_solver",
        pass,
        format!("linear case d_gamma = {}", sol.d_gamma),
    )
}

fn verify_metric_oracle(seed: u64, instances: usize) -> CheckOutcome {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x6d65_7472);
    let mut worst: f64 = 0.0;
    for case in 0..instances {
        let (region, k, right_col) = if case % 2 == 0 {
            (GridRegion::full(2, 1), 1u32, 2usize)
        } else {
            let g = Grid::new(2, 5);
            let mut mask = vec![false; g.len()];
            for i in g.iter() {
                if g.coord(i, 0) < 4 && g.coord(i, 1) < 4 {
                    mask[i] = true;
                }
            }
            (GridRegion::with_mask(2, 2, mask), 2, 3)
        };
        let n = region.grid().len();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4.0)).collect();
        let weights =
            VertexWeights::from_raw(FieldSpec::new(2, k, 0), 0.0, w).expect("positive weights");
        let grid = region.grid().clone();
        let sources: Vec<usize> = grid
            .slab(0, 0)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        let targets: Vec<usize> = grid
            .slab(0, right_col)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        let query = DistanceQuery::new(region, sources, targets).expect("valid query");
        let fast = set_to_set_distance(&query, &weights).map(|(d, _)| d);
        let slow = brute_force_distance(&query, &weights);
        match (fast, slow) {
            (Ok(f), Ok(s)) => worst = worst.max((f - s).abs()),
            _ => return check("metric_oracle", false, format!("case {case} errored")),
        }
    }
    check(
        "metric_oracle",
        worst <= 1e-12,
        format!("{instances} instances, max |diff| = {worst:.3e}"),
    )
}

fn verify_xi_zero(quick: bool, cap: u64) -> CheckOutcome {
    let dims: &[usize] = if quick { &[2, 3] } else { &[2, 3, 4] };
    let kmax = if quick { 4 } else { 6 };
    let mut worst: f64 = 0.0;
    for &d in dims {
        for k in 2..=kmax {
            let r = match crate::exponent::run_cell_with_cap(d, 0.0, k, 1, "verify", cap) {
                Ok(r) => r,
                Err(e) => return check("xi_zero_exactness", false, e.to_string()),
            };
            let expected = (1.0 + 0.5f64.powi(k as i32)).ln();
            worst = worst.max((r.log_distance - expected).abs());
        }
    }
    check(
        "xi_zero_exactness",
        worst <= 1e-12,
        format!("max |log D - log(1+eps)| = {worst:.3e}"),
    )
}

fn verify_variance_slope(seed: u64, quick: bool, cap: u64) -> CheckOutcome {
    let reps = if quick { 30 } else { 100 };
    let kmax = if quick { 6 } else { 7 };
    let specs: Vec<FieldSpec> = (3..=kmax)
        .map(|k| FieldSpec::new(2, k, seed).with_job_key("verify.var"))
        .collect();
    let _ = cap;
    let rows = match variance_profile(&specs, reps, 1.0) {
        Ok(r) => r,
        Err(e) => return check("variance_slope", false, e.to_string()),
    };
    let xs: Vec<f64> = rows
        .iter()
        .map(|r| r.scale_index as f64 * std::f64::consts::LN_2)
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_pointwise_variance).collect();
    let fit = stats::linear_fit(&xs, &ys);
    check(
        "variance_slope",
        fit.slope > 0.85 && fit.slope < 1.15,
        format!("slope = {:.4}", fit.slope),
    )
}

fn verify_thick_points(seed: u64, quick: bool) -> CheckOutcome {
    let reps = if quick { 20 } else { 60 };
    match thick_point_scan(2, 1.0, (3, 5), reps, seed, 1.0) {
        Ok(rep) => {
            let err = (rep.fitted_exponent - rep.reference_exponent).abs();
            check(
                "thick_points",
                err < 0.5,
                format!(
                    "fitted {:.3} vs reference {:.3}",
                    rep.fitted_exponent, rep.reference_exponent
                ),
            )
        }
        Err(e) => check("thick_points", false, e.to_string()),
    }
}

fn verify_record_store(cfg: &RunConfig) -> Result<CheckOutcome, CliError> {
    let path = cfg.out.join("records.csv");
    // an existing store must match its sidecar before we touch it
    if let Err(CliError::ChecksumMismatch(p)) = verify_checksum(&path) {
        return Ok(check(
            "record_store_integrity",
            false,
            format!("checksum mismatch: {}", p.display()),
        ));
    }
    let mut records = Vec::new();
    for (xi, k) in [(0.0, 3u32), (0.25, 3), (0.25, 4)] {
        for rep in 0..3u64 {
            let mut r = run_cell_with_cap(
                2,
                xi,
                k,
                cfg.seed.wrapping_add(rep),
                ESTIMATE_JOB_KEY,
                cfg.mem_cap,
            )?;
            r.wall_seconds = 0.0;
            records.push(r);
        }
    }
    sort_records(&mut records);
    append_records(&path, &records)?;
    write_checksum(&path)?;
    verify_checksum(&path)?;
    let loaded = load_records(&path)?;
    Ok(check(
        "record_store_integrity",
        loaded.len() >= records.len(),
        format!("{} rows stored", loaded.len()),
    ))
}

fn cmd_verify(cfg: &RunConfig) -> Result<(), CliError> {
    let start = std::time::Instant::now();
    let quick = cfg.quick;
    let mut outcomes = vec![
        verify_bound_identities(),
        verify_dgamma_solver(quick),
        verify_metric_oracle(cfg.seed, if quick { 20 } else { 100 }),
        verify_xi_zero(quick, cfg.mem_cap),
        verify_variance_slope(cfg.seed, quick, cfg.mem_cap),
        verify_thick_points(cfg.seed, quick),
    ];
    outcomes.push(verify_record_store(cfg)?);
    write_json(&cfg.out.join("verify_report.json"), &outcomes)?;
    write_checksum(&cfg.out.join("verify_report.json"))?;

    let mut failed = Vec::new();
    for o in &outcomes {
        println!(
            "{} {:<24} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        if !o.pass {
            failed.push(o.name.clone());
        }
    }
    eprintln!("verify finished in {:.2}s", start.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failed))
    }
}
