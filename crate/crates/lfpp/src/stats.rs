//! Small statistics helpers shared by the field validators and the
//! exponent-fitting code.

/// Pairwise (cascade) summation; bounds roundoff growth to O(log n) ulps.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (denominator n-1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2);
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Unbiased sample covariance of two paired series.
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let mx = mean(xs);
    let my = mean(ys);
    let prod: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    pairwise_sum(&prod) / (xs.len() - 1) as f64
}

/// Linearly interpolated p-quantile (the common "type 7" rule).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let f = h - lo as f64;
        sorted[lo] * (1.0 - f) + sorted[hi] * f
    }
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let w = vec![1.0; xs.len()];
    weighted_linear_fit(xs, ys, &w)
}

/// Weighted least-squares line fit; weights need not be normalized.
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), ws.len());
    assert!(xs.len() >= 2, "need at least two points for a line fit");
    let wsum: f64 = ws.iter().sum();
    assert!(wsum > 0.0);
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    assert!(sxx > 0.0, "degenerate abscissae in line fit");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = residuals.iter().zip(ws).map(|(r, w)| w * r * r).sum();
    let ss_tot: f64 = ys
        .iter()
        .zip(ws)
        .map(|(y, w)| w * (y - my) * (y - my))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
        residuals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line_is_recovered() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys);
        assert_abs_diff_eq!(fit.slope, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_endpoints_and_median() {
        let xs = [3.0, 1.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 3.0);
        assert_eq!(quantile(&xs, 0.5), 2.0);
        let xs = [1.0, 2.0];
        assert_eq!(quantile(&xs, 0.5), 1.5);
    }

    #[test]
    fn covariance_matches_variance_on_self() {
        let xs = [0.5, 1.5, -2.0, 4.0, 0.25];
        assert_abs_diff_eq!(
            sample_covariance(&xs, &xs),
            sample_variance(&xs),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_abs_diff_eq!(pairwise_sum(&xs), naive, epsilon = 1e-9);
    }
}
