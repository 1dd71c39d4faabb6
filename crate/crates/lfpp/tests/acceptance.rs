//! End-to-end acceptance suite: thirteen numbered checks covering field
//! statistics, metric exactness, exponent estimation, closed-form bound
//! algebra, and reproducibility. Each check prints one PASS/FAIL line; the
//! suite asserts at the end so every line is always printed.
//!
//! Tolerances are pinned as constants next to each check.

use std::time::Instant;

use lfpp::bounds::{
    d_gamma_bounds, lambda_bounds, rho_lower_2d, rho_upper_2d, solve_d_gamma, LambdaFunction,
};
use lfpp::exponent::{
    check_differential_inequalities, check_lipschitz, check_monotone_in_dimension,
    estimate_derivative, estimate_lambda, run_cell, run_plan, thick_point_scan,
    DerivativeEstimate, ExperimentPlan, ExponentEstimate,
};
use lfpp::field::{
    restrict_to_hyperplane, sample_field_uncentered, variance_profile, FieldSpec,
};
use lfpp::grid::Grid;
use lfpp::metric::{
    brute_force_distance, set_to_set_distance, DistanceQuery, GridRegion, VertexWeights,
};
use lfpp::stats;

struct Outcome {
    index: usize,
    name: &'static str,
    pass: bool,
    seconds: f64,
    detail: String,
}

fn run_check(
    index: usize,
    name: &'static str,
    time_limit: f64,
    f: impl FnOnce() -> (bool, String),
) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    if seconds > time_limit {
        pass = false;
        detail.push_str(&format!(" [over time limit {time_limit}s]"));
    }
    Outcome {
        index,
        name,
        pass,
        seconds,
        detail,
    }
}

const SEED: u64 = 20260823;

// ---------------------------------------------------------------------------
// 1. variance slope

fn c01_variance_slope() -> (bool, String) {
    const SLOPE_WINDOW: (f64, f64) = (0.9, 1.1);
    const REPLICATES: usize = 200;
    let mut details = Vec::new();
    let mut pass = true;
    for (d, domain_side) in [(2usize, 1.0), (3, 0.25)] {
        let specs: Vec<FieldSpec> = (3..=8)
            .map(|k| FieldSpec::new(d, k, SEED + d as u64))
            .collect();
        let rows = variance_profile(&specs, REPLICATES, domain_side).expect("variance profile");
        let xs: Vec<f64> = rows
            .iter()
            .map(|r| r.scale_index as f64 * std::f64::consts::LN_2)
            .collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_pointwise_variance).collect();
        let fit = stats::linear_fit(&xs, &ys);
        pass &= fit.slope >= SLOPE_WINDOW.0 && fit.slope <= SLOPE_WINDOW.1;
        details.push(format!("d={d}: slope {:.4}", fit.slope));
    }
    (pass, details.join("; "))
}

// ---------------------------------------------------------------------------
// 2. covariance slope

fn c02_covariance_slope() -> (bool, String) {
    const SLOPE_WINDOW: (f64, f64) = (0.85, 1.15);
    const REPLICATES: usize = 2000;
    let k = 8u32;
    let grid = Grid::new(2, (1 << k) + 1);
    let anchor = grid.index(&[64, 64]);
    // separations along one axis with |x - y| in [0.05, 0.3]
    let steps: [usize; 8] = [13, 17, 22, 28, 36, 46, 59, 76];
    let partners: Vec<usize> = steps.iter().map(|s| grid.index(&[64, 64 + s])).collect();

    // streaming moment accumulation: holding 2000 full samples would be
    // ~1 GB, the running sums are a few hundred bytes
    let mut sum_x = 0.0;
    let mut sum_y = vec![0.0; partners.len()];
    let mut sum_xy = vec![0.0; partners.len()];
    for rep in 0..REPLICATES {
        let spec = FieldSpec::new(2, k, SEED ^ 0xc0f) .with_job_key(format!("acc2.{rep}"));
        let sample = sample_field_uncentered(&spec).expect("sample");
        let hx = sample.values[anchor];
        sum_x += hx;
        for (j, &p) in partners.iter().enumerate() {
            sum_y[j] += sample.values[p];
            sum_xy[j] += hx * sample.values[p];
        }
    }
    let n = REPLICATES as f64;
    let xs: Vec<f64> = steps
        .iter()
        .map(|s| -((*s as f64) * 0.5f64.powi(k as i32)).ln())
        .collect();
    let ys: Vec<f64> = (0..partners.len())
        .map(|j| (sum_xy[j] - sum_x * sum_y[j] / n) / (n - 1.0))
        .collect();
    let fit = stats::linear_fit(&xs, &ys);
    (
        fit.slope >= SLOPE_WINDOW.0 && fit.slope <= SLOPE_WINDOW.1,
        format!("slope {:.4} over {} pair separations", fit.slope, steps.len()),
    )
}

// ---------------------------------------------------------------------------
// 3. restriction law

fn c03_restriction_increments() -> (bool, String) {
    const TOLERANCE: f64 = 1.0;
    const REPLICATES: usize = 500;
    let k = 5u32;
    let grid2 = Grid::new(2, (1 << k) + 1);
    let a = grid2.index(&[8, 8]);
    // separations 0.125, 0.25, 0.375 (in [0.1, 0.4])
    let steps: [usize; 3] = [4, 8, 12];
    let partners: Vec<usize> = steps.iter().map(|s| grid2.index(&[8, 8 + s])).collect();

    let mut sq_slice = vec![0.0; steps.len()];
    let mut sq_native = vec![0.0; steps.len()];
    for rep in 0..REPLICATES {
        let spec3 = FieldSpec::new(3, k, SEED + 300).with_job_key(format!("acc3.s{rep}"));
        let slice = restrict_to_hyperplane(&sample_field_uncentered(&spec3).expect("3d sample"))
            .expect("restriction");
        let spec2 = FieldSpec::new(2, k, SEED + 301).with_job_key(format!("acc3.n{rep}"));
        let native = sample_field_uncentered(&spec2).expect("2d sample");
        for (j, &p) in partners.iter().enumerate() {
            sq_slice[j] += (slice.values[a] - slice.values[p]).powi(2);
            sq_native[j] += (native.values[a] - native.values[p]).powi(2);
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for (j, s) in steps.iter().enumerate() {
        let vs = sq_slice[j] / REPLICATES as f64;
        let vn = sq_native[j] / REPLICATES as f64;
        pass &= (vs - vn).abs() <= TOLERANCE;
        detail.push(format!("r={}: {:.3} vs {:.3}", *s as f64 / 32.0, vs, vn));
    }
    (pass, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 4. metric oracle

fn c04_metric_oracle() -> (bool, String) {
    const EXACT: f64 = 1e-12;
    const INSTANCES: usize = 100;
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    for case in 0..INSTANCES {
        let (region, k, right) = if case % 2 == 0 {
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
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..5.0)).collect();
        let weights = VertexWeights::from_raw(FieldSpec::new(2, k, 0), 0.0, w).unwrap();
        let grid = region.grid().clone();
        let sources: Vec<usize> = grid
            .slab(0, 0)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        let targets: Vec<usize> = grid
            .slab(0, right)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        let query = DistanceQuery::new(region, sources, targets).unwrap();
        let (fast, _) = set_to_set_distance(&query, &weights).unwrap();
        let slow = brute_force_distance(&query, &weights).unwrap();
        worst = worst.max((fast - slow).abs());
    }
    (
        worst <= EXACT,
        format!("{INSTANCES} instances, max |diff| = {worst:.3e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. xi = 0 exactness

fn c05_xi_zero_exactness() -> (bool, String) {
    const EXACT: f64 = 1e-12;
    let mut worst: f64 = 0.0;
    for d in [2usize, 3, 4] {
        for k in 2..=6u32 {
            let rec = run_cell(d, 0.0, k, SEED + 5, "acc5").expect("cell");
            let eps = 0.5f64.powi(k as i32);
            worst = worst.max((rec.log_distance.exp() - (1.0 + eps)).abs());
        }
    }
    (worst <= EXACT, format!("max |D - (1+eps)| = {worst:.3e}"))
}

// ---------------------------------------------------------------------------
// shared estimation runs for checks 6, 7, 8, 12

struct SharedEstimates {
    d2: Vec<ExponentEstimate>,
    d3: Vec<ExponentEstimate>,
    seconds_d2: f64,
    seconds_d3: f64,
}

fn xi_branch_point() -> f64 {
    1.0 / 6.0f64.sqrt()
}

fn shared_estimates() -> SharedEstimates {
    let bp = xi_branch_point();
    let mut xi2 = vec![0.1, 0.25, 0.3, 0.35, 0.4, bp, 0.45, 0.5, 0.6];
    xi2.sort_by(f64::total_cmp);
    let mut plan2 = ExperimentPlan::new(2, xi2, 5, 9);
    plan2.replicates_per_cell = 20;
    plan2.master_seed = SEED + 600;

    let mut plan3 = ExperimentPlan::new(3, vec![0.1, 0.25, bp, 0.6], 4, 7);
    plan3.replicates_per_cell = 10;
    plan3.master_seed = SEED + 700;

    let t0 = Instant::now();
    let rec2 = run_plan(&plan2).expect("d=2 plan");
    let seconds_d2 = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let rec3 = run_plan(&plan3).expect("d=3 plan");
    let seconds_d3 = t0.elapsed().as_secs_f64();

    let d2 = plan2
        .xi_grid
        .iter()
        .map(|&xi| estimate_lambda(&plan2, xi, &rec2).expect("estimate"))
        .collect();
    let d3 = plan3
        .xi_grid
        .iter()
        .map(|&xi| estimate_lambda(&plan3, xi, &rec3).expect("estimate"))
        .collect();
    SharedEstimates {
        d2,
        d3,
        seconds_d2,
        seconds_d3,
    }
}

fn c06_known_2d_value(shared: &SharedEstimates) -> (bool, String) {
    const WINDOW: (f64, f64) = (0.08, 0.28);
    let bp = xi_branch_point();
    let est = shared
        .d2
        .iter()
        .find(|e| (e.xi - bp).abs() < 1e-12)
        .expect("branch-point estimate");
    (
        est.lambda_hat >= WINDOW.0 && est.lambda_hat <= WINDOW.1,
        format!(
            "lambda_hat(2, 1/sqrt6) = {:.4} +- {:.4}",
            est.lambda_hat, est.stderr
        ),
    )
}

fn c07_bound_bracket(shared: &SharedEstimates) -> (bool, String) {
    const FINITE_SIZE_ALLOWANCE: f64 = 0.1;
    let bp = xi_branch_point();
    let targets = [0.1, 0.25, bp, 0.6];
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, ests) in [(2usize, &shared.d2), (3, &shared.d3)] {
        for &xi in &targets {
            let est = ests
                .iter()
                .find(|e| (e.xi - xi).abs() < 1e-12)
                .expect("target estimate");
            let b = lambda_bounds(d, xi).unwrap();
            let ok = est.lambda_hat >= b.lower - FINITE_SIZE_ALLOWANCE
                && est.lambda_hat <= b.upper + FINITE_SIZE_ALLOWANCE;
            pass &= ok;
            detail.push(format!(
                "d={d} xi={xi:.3}: {:.3} in [{:.3}, {:.3}]{}",
                est.lambda_hat,
                b.lower - FINITE_SIZE_ALLOWANCE,
                b.upper + FINITE_SIZE_ALLOWANCE,
                if ok { "" } else { "!" }
            ));
        }
    }
    (pass, detail.join("; "))
}

fn c08_dimension_monotonicity(shared: &SharedEstimates) -> (bool, String) {
    let bp = xi_branch_point();
    let mut pass = true;
    let mut detail = Vec::new();
    for &xi in &[0.25, bp] {
        let e2 = shared.d2.iter().find(|e| (e.xi - xi).abs() < 1e-12).unwrap();
        let e3 = shared.d3.iter().find(|e| (e.xi - xi).abs() < 1e-12).unwrap();
        let rep = check_monotone_in_dimension(e2, e3).unwrap();
        pass &= rep.pass;
        detail.push(format!(
            "xi={xi:.3}: lambda3 {:.3} vs lambda2 {:.3} (tol {:.3})",
            rep.lambda_high, rep.lambda_low, rep.tolerance
        ));
    }
    (pass, detail.join("; "))
}

fn c12_differential_audit(shared: &SharedEstimates) -> (bool, String) {
    // uniform sub-grid 0.3..0.5 step 0.05 of the d=2 estimates
    let grid = [0.3, 0.35, 0.4, 0.45, 0.5];
    let ests: Vec<ExponentEstimate> = grid
        .iter()
        .map(|&xi| {
            shared
                .d2
                .iter()
                .find(|e| (e.xi - xi).abs() < 1e-12)
                .expect("grid estimate")
                .clone()
        })
        .collect();
    let ders = estimate_derivative(&ests).expect("derivative");
    let mut pass = true;
    let mut detail = Vec::new();
    for der in &ders {
        let est = ests.iter().find(|e| (e.xi - der.xi).abs() < 1e-12).unwrap();
        let rep = check_differential_inequalities(est, der, 2).unwrap();
        pass &= rep.pass;
        detail.push(format!(
            "xi={:.2}: lambda' {:.3} in [{:.3}, {:.3}] tol {:.3}{}",
            rep.xi,
            rep.lambda_prime_hat,
            rep.lower,
            rep.upper,
            rep.tolerance,
            if rep.pass { "" } else { " !" }
        ));
    }
    // negative controls must be flagged
    let mid = &ests[2];
    let wild = DerivativeEstimate {
        xi: mid.xi,
        lambda_prime_hat: 50.0,
        delta_xi: 0.05,
        stderr: 0.001,
    };
    let flagged = !check_differential_inequalities(mid, &wild, 2).unwrap().pass;
    pass &= flagged;
    let mut jump = ests.clone();
    jump[2].lambda_hat += 10.0 * 0.05;
    jump[2].stderr = 0.0;
    jump[1].stderr = 0.0;
    jump[3].stderr = 0.0;
    let lipschitz_flagged = !check_lipschitz(&jump, 2).pass;
    pass &= lipschitz_flagged;
    detail.push(format!(
        "negative controls flagged: {}",
        flagged && lipschitz_flagged
    ));
    (pass, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 9. thick points

fn c09_thick_points() -> (bool, String) {
    const TOLERANCE: f64 = 0.3;
    const REPLICATES: usize = 100;
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, domain_side) in [(2usize, 1.0), (3, 0.125)] {
        let rep = thick_point_scan(d, 1.0, (4, 8), REPLICATES, SEED + 9 + d as u64, domain_side)
            .expect("thick point scan");
        let ok = (rep.fitted_exponent - rep.reference_exponent).abs() <= TOLERANCE;
        pass &= ok;
        detail.push(format!(
            "d={d}: fitted {:.3} vs {:.1}",
            rep.fitted_exponent, rep.reference_exponent
        ));
    }
    (pass, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 10. bound algebra

fn c10_bound_algebra() -> (bool, String) {
    const EXACT: f64 = 1e-12;
    let bp = xi_branch_point();
    let mut pass = (rho_lower_2d(bp).unwrap() - 1.0 / 6.0).abs() <= EXACT
        && (rho_upper_2d(bp).unwrap() - 1.0 / 6.0).abs() <= EXACT;
    // continuity at the branch point
    for f in [rho_lower_2d, rho_upper_2d] {
        let gap = (f(bp - 5e-13).unwrap() - f(bp + 5e-13).unwrap()).abs();
        pass &= gap <= EXACT + 3.0 * 5e-13; // allow the Lipschitz drift of the 1e-12 offset
    }
    let mut ordered = true;
    for i in 0..=3000 {
        let xi = i as f64 * 1e-3;
        if rho_lower_2d(xi).unwrap() > rho_upper_2d(xi).unwrap() + EXACT {
            ordered = false;
            break;
        }
    }
    pass &= ordered;
    (
        pass,
        format!(
            "rho(1/sqrt6) = [{:.15}, {:.15}], ordered on [0,3]: {ordered}",
            rho_lower_2d(bp).unwrap(),
            rho_upper_2d(bp).unwrap()
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. d_gamma solver

fn c11_dgamma_solver() -> (bool, String) {
    const LINEAR_TOL: f64 = 1e-9;
    const EDGE_TOL: f64 = 1e-8;
    let linear = LambdaFunction::from_fn(|xi| 0.5 - xi);
    let sol = solve_d_gamma(1.0, 3, &linear).expect("linear case");
    let mut pass = (sol.d_gamma - 5.0).abs() <= LINEAR_TOL;

    let zero = LambdaFunction::from_fn(|_| 0.0);
    let upper = LambdaFunction::from_fn(|xi| 2.0 * xi);
    for g10 in [5u32, 10, 15, 20] {
        let gamma = g10 as f64 / 10.0;
        let b = d_gamma_bounds(3, gamma).unwrap();
        let lo = solve_d_gamma(gamma, 3, &zero).unwrap().d_gamma;
        let hi = solve_d_gamma(gamma, 3, &upper).unwrap().d_gamma;
        pass &= (lo - (3.0 + gamma * gamma / 2.0)).abs() <= EDGE_TOL;
        pass &= (hi - b.upper).abs() <= EDGE_TOL;
    }

    // strictly increasing in gamma, step 0.01, for an in-between lambda
    let mid = LambdaFunction::from_fn(|xi| xi);
    let mut prev = 0.0;
    let mut monotone = true;
    let mut g = 0.01;
    while g < 6.0f64.sqrt() {
        let s = solve_d_gamma(g, 3, &mid).expect("monotone grid").d_gamma;
        if s <= prev {
            monotone = false;
            break;
        }
        prev = s;
        g += 0.01;
    }
    pass &= monotone;
    (
        pass,
        format!("linear case {:.12}, monotone: {monotone}", sol.d_gamma),
    )
}

// ---------------------------------------------------------------------------
// 13. reproducibility of verify --quick

fn c13_reproducibility() -> (bool, String) {
    const TIME_LIMIT_EACH: f64 = 60.0;
    let bin = env!("CARGO_BIN_EXE_lfpp");
    let dir = tempfile::tempdir().unwrap();
    let mut times = Vec::new();
    for run in ["a", "b"] {
        let start = Instant::now();
        let status = std::process::Command::new(bin)
            .args(["verify", "--quick", "--seed", "0", "--out"])
            .arg(dir.path().join(run).join("vq"))
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .expect("spawn verify");
        times.push(start.elapsed().as_secs_f64());
        if !status.success() {
            return (false, format!("verify run {run} exited with {status}"));
        }
    }
    let mut identical = true;
    let mut compared = 0usize;
    for name in [
        "records.csv",
        "records.csv.sha256",
        "verify_report.json",
        "verify_report.json.sha256",
    ] {
        let a = std::fs::read(dir.path().join("a").join("vq").join(name)).expect("read a");
        let b = std::fs::read(dir.path().join("b").join("vq").join(name)).expect("read b");
        identical &= a == b;
        compared += 1;
    }
    let within_time = times.iter().all(|t| *t < TIME_LIMIT_EACH);
    (
        identical && within_time,
        format!(
            "{compared} data files byte-identical: {identical}; runs took {:.2}s / {:.2}s",
            times[0], times[1]
        ),
    )
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    outcomes.push(run_check(1, "variance_slope", 300.0, c01_variance_slope));
    outcomes.push(run_check(2, "covariance_slope", 600.0, c02_covariance_slope));
    outcomes.push(run_check(
        3,
        "restriction_increments",
        600.0,
        c03_restriction_increments,
    ));
    outcomes.push(run_check(4, "metric_oracle", 10.0, c04_metric_oracle));
    outcomes.push(run_check(5, "xi_zero_exactness", 600.0, c05_xi_zero_exactness));

    let shared = shared_estimates();
    // checks 6 and 7 share the estimation runs; their time budget is the
    // shared sampling time plus the (negligible) analysis time
    let sampling = shared.seconds_d2 + shared.seconds_d3;
    let mut c6 = run_check(6, "known_2d_value", 1800.0, || c06_known_2d_value(&shared));
    c6.seconds += shared.seconds_d2;
    c6.pass &= c6.seconds < 1800.0;
    outcomes.push(c6);
    let mut c7 = run_check(7, "bound_bracket", 7200.0, || c07_bound_bracket(&shared));
    c7.seconds += sampling;
    c7.pass &= c7.seconds < 7200.0;
    outcomes.push(c7);
    outcomes.push(run_check(8, "dimension_monotonicity", 600.0, || {
        c08_dimension_monotonicity(&shared)
    }));
    outcomes.push(run_check(9, "thick_points", 900.0, c09_thick_points));
    outcomes.push(run_check(10, "bound_algebra", 60.0, c10_bound_algebra));
    outcomes.push(run_check(11, "dgamma_solver", 60.0, c11_dgamma_solver));
    outcomes.push(run_check(12, "differential_audit", 600.0, || {
        c12_differential_audit(&shared)
    }));
    outcomes.push(run_check(13, "reproducibility", 120.0, c13_reproducibility));

    let mut all_pass = true;
    println!("\n=== acceptance suite ===");
    for o in &outcomes {
        println!(
            "{} {:02} {:<24} ({:7.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.index,
            o.name,
            o.seconds,
            o.detail
        );
        all_pass &= o.pass;
    }
    assert!(all_pass, "one or more acceptance checks failed (see table)");
}
