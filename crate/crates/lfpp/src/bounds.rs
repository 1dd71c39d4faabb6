//! Closed-form bounds on the distance exponent `lambda(d, xi)`, the
//! `Q-hat`/`xi_c` machinery, and the fixed-point solver for the fractal
//! dimension `d_gamma` together with its monotonicity audit and figure-data
//! emitters.
//!
//! All irrational constants are computed from library square roots at full
//! double precision; the identities at the branch point `xi = 1/sqrt(6)`
//! need exact algebraic agreement.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum BoundsError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("q_hat is undefined at xi = 0")]
    ExcludedPoint,
    #[error("outside the subcritical regime: q_hat = {q_hat} <= sqrt(2d) at xi = {xi}")]
    OutsideSubcritical { xi: f64, q_hat: f64 },
    #[error("no root for d_gamma in the widened bracket; lambda input violates the bounds")]
    NoRoot,
    #[error("no crossing of q_hat with sqrt(2d) in the search range")]
    BracketFailure,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[inline]
fn branch_point() -> f64 {
    1.0 / 6.0f64.sqrt()
}

/// Linear branch `(sqrt(5/2) - 1/sqrt(6)) xi - (sqrt(15) - 2)/6`.
#[inline]
fn linear_branch(xi: f64) -> f64 {
    (2.5f64.sqrt() - 1.0 / 6.0f64.sqrt()) * xi - (15.0f64.sqrt() - 2.0) / 6.0
}

/// Quadratic branch `1/4 - xi^2/2`.
#[inline]
fn quadratic_branch(xi: f64) -> f64 {
    0.25 - xi * xi / 2.0
}

fn check_xi(xi: f64) -> Result<(), BoundsError> {
    if xi >= 0.0 && xi.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Domain("xi must be >= 0 and finite"))
    }
}

/// Lower bound on `lambda(2, xi)`: piecewise with the branch switch at
/// `xi = 1/sqrt(6)`.
pub fn rho_lower_2d(xi: f64) -> Result<f64, BoundsError> {
    check_xi(xi)?;
    let v = if xi <= branch_point() {
        linear_branch(xi)
    } else {
        quadratic_branch(xi)
    };
    Ok(v.max(0.0))
}

/// Upper bound on `lambda(2, xi)`.
pub fn rho_upper_2d(xi: f64) -> Result<f64, BoundsError> {
    check_xi(xi)?;
    let v = if xi <= branch_point() {
        quadratic_branch(xi).min(2.0f64.sqrt() * xi)
    } else {
        linear_branch(xi).min(1.0)
    };
    Ok(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub d: usize,
    /// xi for lambda bounds, gamma for dimension bounds.
    pub at: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_branch: &'static str,
    pub upper_branch: &'static str,
}

/// Two-sided bound on `lambda(d, xi)`: the 2D theorem for `d = 2`, and
/// `[rho_lower, xi sqrt(2d-2)]` for `d >= 3`.
pub fn lambda_bounds(d: usize, xi: f64) -> Result<BoundReport, BoundsError> {
    if d < 2 {
        return Err(BoundsError::Domain("d must be >= 2"));
    }
    check_xi(xi)?;
    let lower = rho_lower_2d(xi)?;
    let (upper, upper_branch) = if d == 2 {
        (rho_upper_2d(xi)?, "rho_upper_2d")
    } else {
        (xi * (2.0 * d as f64 - 2.0).sqrt(), "xi*sqrt(2d-2)")
    };
    Ok(BoundReport {
        d,
        at: xi,
        lower,
        upper,
        lower_branch: "rho_lower_2d",
        upper_branch,
    })
}

/// High-dimensional lower bound `A xi - 1/A`, valid only above an
/// unspecified dimension threshold; display-only against data.
pub fn highdim_lower(a: f64, xi: f64) -> Result<f64, BoundsError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(BoundsError::Domain("A must be > 0"));
    }
    check_xi(xi)?;
    Ok(a * xi - 1.0 / a)
}

/// `q_hat = (1 - lambda)/xi`, the inverse-relation quantity for `d_gamma`.
pub fn q_hat(lambda: f64, xi: f64) -> Result<f64, BoundsError> {
    if xi == 0.0 {
        return Err(BoundsError::ExcludedPoint);
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(BoundsError::Domain("xi must be > 0 and finite"));
    }
    Ok((1.0 - lambda) / xi)
}

/// A `xi -> lambda` map: a closure, or a linearly interpolated table.
#[derive(Clone)]
pub enum LambdaFunction {
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Knots must be strictly increasing in xi; evaluation clamps to the
    /// end knots outside the table range.
    Table { xis: Vec<f64>, values: Vec<f64> },
}

impl std::fmt::Debug for LambdaFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaFunction::Closure(_) => f.write_str("LambdaFunction::Closure"),
            LambdaFunction::Table { xis, .. } => {
                write!(f, "LambdaFunction::Table({} knots)", xis.len())
            }
        }
    }
}

impl LambdaFunction {
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        LambdaFunction::Closure(Arc::new(f))
    }

    pub fn from_table(xis: Vec<f64>, values: Vec<f64>) -> Result<Self, BoundsError> {
        if xis.len() != values.len() || xis.is_empty() {
            return Err(BoundsError::Domain("table knots and values must match"));
        }
        if xis.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BoundsError::Domain("table knots must be strictly increasing"));
        }
        Ok(LambdaFunction::Table { xis, values })
    }

    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            LambdaFunction::Closure(f) => f(xi),
            LambdaFunction::Table { xis, values } => {
                if xi <= xis[0] {
                    return values[0];
                }
                if xi >= *xis.last().unwrap() {
                    return *values.last().unwrap();
                }
                let j = xis.partition_point(|x| *x <= xi);
                let (x0, x1) = (xis[j - 1], xis[j]);
                let t = (xi - x0) / (x1 - x0);
                values[j - 1] * (1.0 - t) + values[j] * t
            }
        }
    }

    /// Wraps the map so every value is clamped into the theorem bracket for
    /// dimension `d`, keeping the fixed-point solver inside its
    /// guaranteed-uniqueness regime when fed noisy estimates.
    pub fn clamped_to_bounds(self, d: usize) -> Self {
        let inner = self;
        LambdaFunction::from_fn(move |xi| {
            let raw = inner.eval(xi);
            match lambda_bounds(d, xi) {
                Ok(b) => raw.clamp(b.lower, b.upper),
                Err(_) => raw,
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionSolution {
    pub gamma: f64,
    pub d: usize,
    pub d_gamma: f64,
    pub xi: f64,
    pub q: f64,
    pub residual: f64,
}

const DGAMMA_RESIDUAL_TOL: f64 = 1e-9;

/// Solves `lambda(gamma/m) = 1 - (gamma/m) Q` for `m = d_gamma` by bisection
/// on the Corollary bracket widened by +1; widens once more before reporting
/// no-root.
pub fn solve_d_gamma(
    gamma: f64,
    d: usize,
    lam: &LambdaFunction,
) -> Result<DimensionSolution, BoundsError> {
    let df = d as f64;
    if !(gamma > 0.0 && gamma < (2.0 * df).sqrt()) {
        return Err(BoundsError::Domain("gamma must lie in (0, sqrt(2d))"));
    }
    let q = df / gamma + gamma / 2.0;
    let f = |m: f64| lam.eval(gamma / m) - 1.0 + (gamma / m) * q;

    let lo = df;
    let mut hi = df + gamma * gamma / 2.0 + gamma * (2.0 * df - 2.0).sqrt() + 1.0;
    if f(lo) * f(hi) > 0.0 {
        hi += gamma * (2.0 * df - 2.0).sqrt() + 1.0; // widen once
        if f(lo) * f(hi) > 0.0 {
            return Err(BoundsError::NoRoot);
        }
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, _fb) = (f(a), f(b));
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fa * fm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    let m = 0.5 * (a + b);
    let residual = f(m).abs();
    if residual > DGAMMA_RESIDUAL_TOL {
        return Err(BoundsError::NoRoot);
    }
    Ok(DimensionSolution {
        gamma,
        d,
        d_gamma: m,
        xi: gamma / m,
        q,
        residual,
    })
}

/// The Corollary's closed-form two-sided bound on `d_gamma` for `d >= 3`.
pub fn d_gamma_bounds(d: usize, gamma: f64) -> Result<BoundReport, BoundsError> {
    if d < 3 {
        return Err(BoundsError::Domain("d must be >= 3"));
    }
    let df = d as f64;
    if !(gamma > 0.0 && gamma < (2.0 * df).sqrt()) {
        return Err(BoundsError::Domain("gamma must lie in (0, sqrt(2d))"));
    }
    let base = df + gamma * gamma / 2.0;
    let alt = 6.0 / (15.0f64.sqrt() + 4.0)
        * (base + (2.5f64.sqrt() - (1.0f64 / 6.0).sqrt()) * gamma);
    let (lower, lower_branch) = if base >= alt {
        (base, "d+gamma^2/2")
    } else {
        (alt, "6/(sqrt15+4) branch")
    };
    Ok(BoundReport {
        d,
        at: gamma,
        lower,
        upper: base + gamma * (2.0 * df - 2.0).sqrt(),
        lower_branch,
        upper_branch: "d+gamma^2/2+gamma*sqrt(2d-2)",
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheckRow {
    pub xi: f64,
    pub q_hat: f64,
    /// Two-factor expression for `d d_gamma / d xi` with finite-difference
    /// `q_hat'`.
    pub formula_value: f64,
    /// Direct finite difference of the solver composed with the inverse map.
    pub finite_difference: f64,
    /// `q_hat` within 1e-3 of `sqrt(2d)`: the expression diverges there.
    pub near_critical: bool,
}

/// `d_gamma` as a function of xi through the inverse relation
/// `gamma = q_hat - sqrt(q_hat^2 - 2d)`, `d_gamma = gamma / xi`.
fn d_gamma_of_xi(lam: &LambdaFunction, d: usize, xi: f64) -> Result<f64, BoundsError> {
    let qh = q_hat(lam.eval(xi), xi)?;
    let disc = qh * qh - 2.0 * d as f64;
    if disc <= 0.0 {
        return Err(BoundsError::OutsideSubcritical { xi, q_hat: qh });
    }
    Ok((qh - disc.sqrt()) / xi)
}

/// Evaluates the two-factor derivative expression at each interior grid
/// point and cross-checks it against finite differences of the solver chain;
/// errors when the grid leaves the subcritical regime `q_hat > sqrt(2d)`.
pub fn d_gamma_derivative_check(
    lam: &LambdaFunction,
    d: usize,
    xi_grid: &[f64],
) -> Result<Vec<DerivativeCheckRow>, BoundsError> {
    if xi_grid.len() < 3 {
        return Err(BoundsError::Domain("xi grid needs at least 3 points"));
    }
    let df = d as f64;
    let sqrt2d = (2.0 * df).sqrt();
    let mut rows = Vec::new();
    for &xi in &xi_grid[1..xi_grid.len() - 1] {
        let qh = q_hat(lam.eval(xi), xi)?;
        if qh <= sqrt2d {
            return Err(BoundsError::OutsideSubcritical { xi, q_hat: qh });
        }
        // central differences with a step independent of the grid spacing
        let h = 1e-5 * xi.max(1.0);
        let qm = q_hat(lam.eval(xi - h), xi - h)?;
        let qp = q_hat(lam.eval(xi + h), xi + h)?;
        let qh_prime = (qp - qm) / (2.0 * h);
        let disc_root = (qh * qh - 2.0 * df).sqrt();
        let formula_value =
            -1.0 / (xi * xi) * (qh - disc_root) * (1.0 + xi * qh_prime / disc_root);
        let dm = d_gamma_of_xi(lam, d, xi - h)?;
        let dp = d_gamma_of_xi(lam, d, xi + h)?;
        let finite_difference = (dp - dm) / (2.0 * h);
        // cross-check the inverse map against the bisection solver
        let gamma_here = qh - disc_root;
        let sol = solve_d_gamma(gamma_here, d, lam)?;
        debug_assert!((sol.d_gamma - gamma_here / xi).abs() < 1e-6);
        rows.push(DerivativeCheckRow {
            xi,
            q_hat: qh,
            formula_value,
            finite_difference,
            near_critical: qh < sqrt2d + 1e-3,
        });
    }
    Ok(rows)
}

/// Interval bracketing `xi_c = sup{xi : q_hat(xi) > sqrt(2d)}` from a pair
/// of lambda maps bracketing the true exponent; the upper lambda gives the
/// smaller crossing point.
pub fn xi_c_bracket(
    d: usize,
    lam_lower: &LambdaFunction,
    lam_upper: &LambdaFunction,
) -> Result<(f64, f64), BoundsError> {
    let lo = xi_c_of(d, lam_upper)?;
    let hi = xi_c_of(d, lam_lower)?;
    Ok((lo.min(hi), lo.max(hi)))
}

fn xi_c_of(d: usize, lam: &LambdaFunction) -> Result<f64, BoundsError> {
    let sqrt2d = (2.0 * d as f64).sqrt();
    let g = |xi: f64| q_hat(lam.eval(xi), xi).map(|q| q - sqrt2d);
    let (mut a, mut b) = (1e-9, 10.0);
    if !(g(a)? > 0.0 && g(b)? < 0.0) {
        return Err(BoundsError::BracketFailure);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if g(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Rows `(xi, lower, upper)` for the lambda-bound figures at the given step.
pub fn lambda_figure_rows(
    d: usize,
    xi_max: f64,
    step: f64,
) -> Result<Vec<(f64, f64, f64)>, BoundsError> {
    if !(step > 0.0 && xi_max > 0.0) {
        return Err(BoundsError::Domain("step and xi_max must be > 0"));
    }
    let n = (xi_max / step).round() as usize;
    (0..=n)
        .map(|i| {
            let xi = i as f64 * step;
            lambda_bounds(d, xi).map(|b| (xi, b.lower, b.upper))
        })
        .collect()
}

/// Rows `(gamma, lower, upper)` for the dimension-bound figures over
/// `gamma in (0, sqrt(2d))` at the given step.
pub fn dgamma_figure_rows(d: usize, step: f64) -> Result<Vec<(f64, f64, f64)>, BoundsError> {
    if step <= 0.0 {
        return Err(BoundsError::Domain("step must be > 0"));
    }
    let gmax = (2.0 * d as f64).sqrt();
    let n = (gmax / step).ceil() as usize;
    let mut rows = Vec::new();
    for i in 1..n {
        let gamma = i as f64 * step;
        if gamma >= gmax {
            break;
        }
        let b = d_gamma_bounds(d, gamma)?;
        rows.push((gamma, b.lower, b.upper));
    }
    Ok(rows)
}

/// Writes figure rows as a CSV table with the given header triple.
pub fn write_figure_csv(
    path: &Path,
    header: (&str, &str, &str),
    rows: &[(f64, f64, f64)],
) -> Result<(), BoundsError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{},{},{}", header.0, header.1, header.2)?;
    for (x, lo, hi) in rows {
        writeln!(out, "{x},{lo},{hi}")?;
    }
    out.flush()?;
    Ok(())
}
