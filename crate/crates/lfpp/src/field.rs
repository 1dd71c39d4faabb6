//! Grid approximations of the whole-space log-correlated Gaussian field.
//!
//! A sample at scale index `k` is the sum of `k` independent stationary
//! Gaussian layers. Layer `j` has covariance
//!
//! ```text
//! C_j(x - y) = ln 2 * exp(-4^j |x - y|^2 / (2 s^2))
//! ```
//!
//! so the pointwise variance of the sum is `k ln 2 + O(1) = ln(1/eps) + O(1)`
//! and the covariance of the sum reproduces `log 1/|x-y|` up to O(1) for
//! `eps << |x-y| << 1`.
//!
//! Each layer is drawn by spectral synthesis on a torus: the (separable,
//! periodized) kernel is diagonalized by the DFT, frequency coefficients are
//! scaled complex Gaussians, and the real part of the transform is an exact
//! stationary Gaussian field on the torus grid. Layers much smoother than the
//! sample spacing are synthesized on a decimated grid (8 points per
//! correlation length) and upsampled multilinearly; the interpolation error
//! variance is below 1e-4 of a layer's variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

use crate::fftnd::fft_nd;
use crate::grid::Grid;
use crate::stats;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Default cap on transient synthesis memory (bytes).
pub const DEFAULT_MEMORY_CAP_BYTES: u64 = 3 * 1024 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("dimension must be >= 2, got {0}")]
    InvalidDimension(usize),
    #[error("scale index must be >= 1, got {0}")]
    InvalidScaleIndex(u32),
    #[error("padding factor must be >= 2, got {0}")]
    InvalidPadding(f64),
    #[error("layer base scale must be positive, got {0}")]
    InvalidBaseScale(f64),
    #[error("resource limit: synthesis needs {needed} bytes, cap is {cap}")]
    ResourceLimit { needed: u64, cap: u64 },
    #[error("invalid resolution: target scale index {target} must be below {fine}")]
    InvalidResolution { target: u32, fine: u32 },
    #[error("kernel kind {0:?} cannot be applied as a box average")]
    UnsupportedKernel(MollifierKind),
    #[error("kernel dimension {kernel} incompatible with field dimension {field}")]
    KernelDimension { kernel: usize, field: usize },
    #[error("incompatible samples: specs differ")]
    IncompatibleSamples,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("x == y: use the variance path instead of covariance")]
    SamePoint,
    #[error("restriction requires dimension >= 3, got {0}")]
    RestrictionDimension(usize),
    #[error("variance profile needs >= 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("domain side must be a dyadic fraction in (0, 1] resolvable at this scale")]
    InvalidDomainSide,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

/// Parameters identifying one field realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// Ambient dimension d >= 2.
    pub dimension: usize,
    /// Scale index k >= 1; the mollification scale is eps = 2^-k.
    pub scale_index: u32,
    /// Torus-embedding ratio, >= 2.
    pub padding_factor: f64,
    /// Base correlation length s of the coarsest layer.
    pub layer_base_scale: f64,
    pub master_seed: u64,
    /// Opaque label mixed into the per-layer stream derivation.
    pub job_key: String,
}

impl FieldSpec {
    pub fn new(dimension: usize, scale_index: u32, master_seed: u64) -> Self {
        FieldSpec {
            dimension,
            scale_index,
            padding_factor: 2.0,
            layer_base_scale: 1.0,
            master_seed,
            job_key: String::new(),
        }
    }

    pub fn with_job_key(mut self, job_key: impl Into<String>) -> Self {
        self.job_key = job_key.into();
        self
    }

    pub fn epsilon(&self) -> f64 {
        0.5f64.powi(self.scale_index as i32)
    }

    /// Sample grid: (2^k + 1)^d sites covering [0,1]^d at spacing eps.
    pub fn grid(&self) -> Grid {
        Grid::new(self.dimension, (1usize << self.scale_index) + 1)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.dimension < 2 {
            return Err(FieldError::InvalidDimension(self.dimension));
        }
        if self.scale_index < 1 {
            return Err(FieldError::InvalidScaleIndex(self.scale_index));
        }
        if !(self.padding_factor >= 2.0) {
            return Err(FieldError::InvalidPadding(self.padding_factor));
        }
        if !(self.layer_base_scale > 0.0) {
            return Err(FieldError::InvalidBaseScale(self.layer_base_scale));
        }
        Ok(())
    }

    /// Peak transient bytes needed to synthesize this spec (largest layer
    /// buffer plus the output array).
    pub fn memory_estimate_bytes(&self, domain_exp: u32) -> u64 {
        let mut peak = 0u64;
        for layer in 1..=self.scale_index {
            let plan = LayerPlan::new(self, layer, domain_exp);
            let torus_len = (plan.torus as u64).pow(self.dimension as u32);
            peak = peak.max(torus_len * 16);
        }
        let side_out = (1u64 << (self.scale_index - domain_exp)) + 1;
        peak + side_out.pow(self.dimension as u32) * 8
    }
}

/// One realization of the mollified field on the sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub spec: FieldSpec,
    /// Row-major over the sample grid (coordinate 0 slowest).
    pub values: Vec<f64>,
    /// True if the grid mean has been subtracted.
    pub centered: bool,
}

impl FieldSample {
    pub fn grid(&self) -> Grid {
        self.spec.grid()
    }

    pub fn value(&self, coords: &[usize]) -> f64 {
        self.values[self.grid().index(coords)]
    }

    fn center(&mut self) {
        let m = stats::mean(&self.values);
        for v in &mut self.values {
            *v -= m;
        }
        self.centered = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MollifierKind {
    /// Uniform measure on [-1,1]^d.
    BoxD,
    /// Uniform measure on the slice [-1,1]^(d-1) x {0}.
    BoxSlice,
    /// Truncation of the layer sum (not an averaging kernel).
    LayerTruncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MollifierKernel {
    pub kind: MollifierKind,
    pub dimension: usize,
}

// ---------------------------------------------------------------------------
// Spectral synthesis
// ---------------------------------------------------------------------------

struct LayerPlan {
    /// Correlation length s / 2^j.
    ell: f64,
    /// Synthesis spacing is 2^-res_exp.
    res_exp: u32,
    /// Torus points per axis.
    torus: usize,
    /// Output steps per synthesis step, 2^(k - res_exp).
    refine: usize,
}

impl LayerPlan {
    fn new(spec: &FieldSpec, layer: u32, domain_exp: u32) -> Self {
        let k = spec.scale_index;
        let ell = spec.layer_base_scale / f64::powi(2.0, layer as i32);
        // Need spacing <= ell / 8 unless the sample grid itself is coarser.
        let wanted = (8.0 / ell).log2().ceil().max(0.0) as u32;
        let res_exp = wanted.clamp(domain_exp, k);
        let delta = 0.5f64.powi(res_exp as i32);
        let box_pts = 1usize << (res_exp - domain_exp);
        // 4 correlation lengths of padding: the kernel tail beyond the
        // margin is exp(-8) of its peak, far below statistical resolution
        let margin_len = (4.0 * ell).min(spec.padding_factor - 1.0);
        let margin_pts = ((margin_len / delta).ceil() as usize).max(2);
        let torus = next_smooth(box_pts + margin_pts);
        LayerPlan {
            ell,
            res_exp,
            torus,
            refine: 1usize << (k - res_exp),
        }
    }

    /// Periodized 1-D kernel on the synthesis torus (without the ln 2 factor).
    fn kernel_1d(&self) -> Vec<f64> {
        let delta = 0.5f64.powi(self.res_exp as i32);
        let m = self.torus as f64;
        (0..self.torus)
            .map(|i| {
                let mut acc = 0.0;
                for image in -3i64..=3 {
                    let dist = (i as f64 + image as f64 * m) * delta;
                    acc += (-dist * dist / (2.0 * self.ell * self.ell)).exp();
                }
                acc
            })
            .collect()
    }
}

/// Smallest 7-smooth integer >= n (keeps the mixed-radix FFT fast).
fn next_smooth(n: usize) -> usize {
    fn is_smooth(mut n: usize) -> bool {
        for p in [2, 3, 5, 7] {
            while n % p == 0 {
                n /= p;
            }
        }
        n == 1
    }
    let mut n = n.max(2);
    while !is_smooth(n) {
        n += 1;
    }
    n
}

fn layer_rng(spec: &FieldSpec, layer: u32) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(b"lfpp.field.layer.v1");
    h.update(spec.master_seed.to_le_bytes());
    h.update((spec.job_key.len() as u64).to_le_bytes());
    h.update(spec.job_key.as_bytes());
    h.update(layer.to_le_bytes());
    ChaCha12Rng::from_seed(h.finalize().into())
}

/// Draw one layer on its torus and add it onto the output grid.
fn accumulate_layer(
    spec: &FieldSpec,
    layer: u32,
    domain_exp: u32,
    out: &mut [f64],
    out_grid: &Grid,
    planner: &mut FftPlanner<f64>,
) {
    let d = spec.dimension;
    let plan = LayerPlan::new(spec, layer, domain_exp);
    let m = plan.torus;
    let total: usize = m.pow(d as u32);

    // Eigenvalues of the separable circulant kernel: products of the 1-D DFT.
    let mut kern: Vec<Complex<f64>> = plan
        .kernel_1d()
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    fft_nd(&mut kern, &[m], planner);
    let sq1: Vec<f64> = kern.iter().map(|c| c.re.max(0.0).sqrt()).collect();

    // Frequency coefficients: sqrt(lambda / M_total) * standard complex noise.
    let base = (LN_2 / total as f64).sqrt();
    let mut rng = layer_rng(spec, layer);
    let mut data = vec![Complex::default(); total];
    let mut prefix = vec![0usize; d - 1];
    for row in 0..total / m {
        let mut amp_prefix = base;
        for &ix in &prefix {
            amp_prefix *= sq1[ix];
        }
        let start = row * m;
        for (i, slot) in data[start..start + m].iter_mut().enumerate() {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let amp = amp_prefix * sq1[i];
            *slot = Complex::new(a * amp, b * amp);
        }
        for axis in (0..prefix.len()).rev() {
            prefix[axis] += 1;
            if prefix[axis] < m {
                break;
            }
            prefix[axis] = 0;
        }
    }

    let dims = vec![m; d];
    fft_nd(&mut data, &dims, planner);

    // Evaluate on the output grid (multilinear upsampling if decimated).
    let side_out = out_grid.side();
    let r = plan.refine;
    let mut syn_strides = vec![0usize; d];
    {
        let mut acc = 1usize;
        for axis in (0..d).rev() {
            syn_strides[axis] = acc;
            acc *= m;
        }
    }
    if r == 1 {
        let mut coords = vec![0usize; d];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut idx = o;
            let mut syn = 0usize;
            for axis in 0..d {
                let stride = out_grid_stride(side_out, d, axis);
                coords[axis] = idx / stride;
                idx %= stride;
                syn += coords[axis] * syn_strides[axis];
            }
            *slot += data[syn].re;
        }
    } else {
        let base_idx: Vec<usize> = (0..side_out).map(|n| n / r).collect();
        let frac: Vec<f64> = (0..side_out).map(|n| (n % r) as f64 / r as f64).collect();
        let mut coords = vec![0usize; d];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut idx = o;
            for axis in 0..d {
                let stride = out_grid_stride(side_out, d, axis);
                coords[axis] = idx / stride;
                idx %= stride;
            }
            let mut acc = 0.0;
            for mask in 0..(1usize << d) {
                let mut w = 1.0;
                let mut syn = 0usize;
                for axis in 0..d {
                    let f = frac[coords[axis]];
                    if mask & (1 << axis) != 0 {
                        if f == 0.0 {
                            w = 0.0;
                            break;
                        }
                        w *= f;
                        syn += (base_idx[coords[axis]] + 1) * syn_strides[axis];
                    } else {
                        w *= 1.0 - f;
                        syn += base_idx[coords[axis]] * syn_strides[axis];
                    }
                }
                if w != 0.0 {
                    acc += w * data[syn].re;
                }
            }
            *slot += acc;
        }
    }
}

#[inline]
fn out_grid_stride(side: usize, d: usize, axis: usize) -> usize {
    side.pow((d - 1 - axis) as u32)
}

/// Raw (uncentered) synthesis over a dyadic sub-box of side 2^-domain_exp.
/// Optionally snapshots the partial sum after `snapshot_after` layers,
/// subsampled onto the grid of that scale index.
fn synthesize(
    spec: &FieldSpec,
    domain_exp: u32,
    cap_bytes: u64,
    snapshot_after: Option<u32>,
) -> Result<(Vec<f64>, Option<Vec<f64>>), FieldError> {
    spec.validate()?;
    if domain_exp >= spec.scale_index {
        return Err(FieldError::InvalidDomainSide);
    }
    let needed = spec.memory_estimate_bytes(domain_exp);
    if needed > cap_bytes {
        return Err(FieldError::ResourceLimit {
            needed,
            cap: cap_bytes,
        });
    }
    let d = spec.dimension;
    let side_out = (1usize << (spec.scale_index - domain_exp)) + 1;
    let out_grid = Grid::new(d, side_out);
    let mut out = vec![0.0f64; out_grid.len()];
    let mut snapshot = None;
    let mut planner = FftPlanner::new();
    for layer in 1..=spec.scale_index {
        accumulate_layer(spec, layer, domain_exp, &mut out, &out_grid, &mut planner);
        if snapshot_after == Some(layer) {
            let stride = 1usize << (spec.scale_index - layer);
            snapshot = Some(subsample(&out, &out_grid, stride));
        }
    }
    Ok((out, snapshot))
}

/// Every `stride`-th site along each axis.
fn subsample(values: &[f64], grid: &Grid, stride: usize) -> Vec<f64> {
    let d = grid.dimension();
    let side = grid.side();
    debug_assert_eq!((side - 1) % stride, 0);
    let coarse_side = (side - 1) / stride + 1;
    let coarse = Grid::new(d, coarse_side);
    coarse
        .iter()
        .map(|ci| {
            let mut fine = 0usize;
            for axis in 0..d {
                fine += coarse.coord(ci, axis) * stride * out_grid_stride(side, d, axis);
            }
            values[fine]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Centered sample of the layer-truncated field at scale eps = 2^-k.
pub fn sample_field(spec: &FieldSpec) -> Result<FieldSample, FieldError> {
    sample_field_with_cap(spec, DEFAULT_MEMORY_CAP_BYTES)
}

pub fn sample_field_with_cap(spec: &FieldSpec, cap_bytes: u64) -> Result<FieldSample, FieldError> {
    let mut sample = sample_field_uncentered_with_cap(spec, cap_bytes)?;
    sample.center();
    Ok(sample)
}

/// Same realization as [`sample_field`] without the grid-mean subtraction.
pub fn sample_field_uncentered(spec: &FieldSpec) -> Result<FieldSample, FieldError> {
    sample_field_uncentered_with_cap(spec, DEFAULT_MEMORY_CAP_BYTES)
}

pub fn sample_field_uncentered_with_cap(
    spec: &FieldSpec,
    cap_bytes: u64,
) -> Result<FieldSample, FieldError> {
    let (values, _) = synthesize(spec, 0, cap_bytes, None)?;
    Ok(FieldSample {
        spec: spec.clone(),
        values,
        centered: false,
    })
}

/// A coupled pair: the full sample at scale k and the truncation of the same
/// layer sum at `target_k`, read off on the coarser grid. Both uncentered.
pub fn sample_truncated_pair(
    spec: &FieldSpec,
    target_k: u32,
) -> Result<(FieldSample, FieldSample), FieldError> {
    if target_k < 1 || target_k >= spec.scale_index {
        return Err(FieldError::InvalidResolution {
            target: target_k,
            fine: spec.scale_index,
        });
    }
    let (values, snap) = synthesize(spec, 0, DEFAULT_MEMORY_CAP_BYTES, Some(target_k))?;
    let fine = FieldSample {
        spec: spec.clone(),
        values,
        centered: false,
    };
    let mut coarse_spec = spec.clone();
    coarse_spec.scale_index = target_k;
    let coarse = FieldSample {
        spec: coarse_spec,
        values: snap.expect("snapshot layer within range"),
        centered: false,
    };
    Ok((fine, coarse))
}

/// Arithmetic mean of fine-grid values inside `x + [-eps_t, eps_t]^d` (or the
/// corresponding slice box), clipped to the grid near the boundary.
pub fn box_mollify(
    fine: &FieldSample,
    target_k: u32,
    kernel: &MollifierKernel,
) -> Result<FieldSample, FieldError> {
    let k = fine.spec.scale_index;
    if target_k >= k || target_k < 1 {
        return Err(FieldError::InvalidResolution {
            target: target_k,
            fine: k,
        });
    }
    if kernel.dimension != fine.spec.dimension {
        return Err(FieldError::KernelDimension {
            kernel: kernel.dimension,
            field: fine.spec.dimension,
        });
    }
    let box_axes = match kernel.kind {
        MollifierKind::BoxD => fine.spec.dimension,
        MollifierKind::BoxSlice => fine.spec.dimension - 1,
        MollifierKind::LayerTruncation => {
            return Err(FieldError::UnsupportedKernel(kernel.kind))
        }
    };
    let d = fine.spec.dimension;
    let fine_grid = fine.grid();
    let stride_ratio = 1usize << (k - target_k); // coarse step in fine units
    let radius = stride_ratio; // eps_t = 2^-target_k = stride_ratio * eps
    let coarse_grid = Grid::new(d, (1usize << target_k) + 1);
    let mut values = vec![0.0f64; coarse_grid.len()];
    let fine_side = fine_grid.side();
    let mut lo = vec![0usize; d];
    let mut hi = vec![0usize; d];
    for ci in coarse_grid.iter() {
        for axis in 0..d {
            let center = coarse_grid.coord(ci, axis) * stride_ratio;
            if axis < box_axes {
                lo[axis] = center.saturating_sub(radius);
                hi[axis] = (center + radius).min(fine_side - 1);
            } else {
                lo[axis] = center;
                hi[axis] = center;
            }
        }
        // iterate the window
        let mut cursor = lo.clone();
        let mut sum = 0.0;
        let mut count = 0usize;
        loop {
            sum += fine.values[fine_grid.index(&cursor)];
            count += 1;
            let mut axis = d;
            loop {
                if axis == 0 {
                    cursor.clear();
                    break;
                }
                axis -= 1;
                cursor[axis] += 1;
                if cursor[axis] <= hi[axis] {
                    break;
                }
                cursor[axis] = lo[axis];
            }
            if cursor.is_empty() {
                break;
            }
        }
        values[ci] = sum / count as f64;
    }
    let mut spec = fine.spec.clone();
    spec.scale_index = target_k;
    Ok(FieldSample {
        spec,
        values,
        centered: false,
    })
}

fn check_same_spec(samples: &[FieldSample]) -> Result<(), FieldError> {
    if samples.len() < 2 {
        return Err(FieldError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let spec0 = &samples[0].spec;
    if samples.iter().any(|s| {
        s.spec.dimension != spec0.dimension
            || s.spec.scale_index != spec0.scale_index
            || s.spec.padding_factor != spec0.padding_factor
            || s.spec.layer_base_scale != spec0.layer_base_scale
    }) {
        return Err(FieldError::IncompatibleSamples);
    }
    Ok(())
}

/// Unbiased sample covariance of h(x) and h(y) across realizations.
pub fn covariance_estimate(
    samples: &[FieldSample],
    x: &[usize],
    y: &[usize],
) -> Result<f64, FieldError> {
    check_same_spec(samples)?;
    if x == y {
        return Err(FieldError::SamePoint);
    }
    let grid = samples[0].grid();
    let ix = grid.index(x);
    let iy = grid.index(y);
    let xs: Vec<f64> = samples.iter().map(|s| s.values[ix]).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.values[iy]).collect();
    Ok(stats::sample_covariance(&xs, &ys))
}

/// Unbiased sample variance of h(x) across realizations.
pub fn variance_estimate(samples: &[FieldSample], x: &[usize]) -> Result<f64, FieldError> {
    check_same_spec(samples)?;
    let ix = samples[0].grid().index(x);
    let xs: Vec<f64> = samples.iter().map(|s| s.values[ix]).collect();
    Ok(stats::sample_variance(&xs))
}

/// The slice {last coordinate = 0} of a d-dimensional sample, re-centered as
/// a (d-1)-dimensional sample.
pub fn restrict_to_hyperplane(sample: &FieldSample) -> Result<FieldSample, FieldError> {
    let d = sample.spec.dimension;
    if d < 3 {
        return Err(FieldError::RestrictionDimension(d));
    }
    let grid = sample.grid();
    let side = grid.side();
    let slice_grid = Grid::new(d - 1, side);
    let mut values = vec![0.0f64; slice_grid.len()];
    for si in slice_grid.iter() {
        let mut coords = slice_grid.coords(si);
        coords.push(0); // last axis pinned to the hyperplane
        values[si] = sample.values[grid.index(&coords)];
    }
    let mut spec = sample.spec.clone();
    spec.dimension = d - 1;
    let mut out = FieldSample {
        spec,
        values,
        centered: false,
    };
    out.center();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceRow {
    pub scale_index: u32,
    pub mean_pointwise_variance: f64,
}

/// Per-spec averaged pointwise variance of the raw (uncentered) field, from
/// `replicates` independent realizations.
///
/// `domain_side` restricts synthesis to a dyadic sub-box [0, b]^d; by
/// stationarity the per-site marginal law does not depend on the box size, so
/// a small window gives the same variance at a fraction of the cost.
pub fn variance_profile(
    specs: &[FieldSpec],
    replicates: usize,
    domain_side: f64,
) -> Result<Vec<VarianceRow>, FieldError> {
    if replicates < 2 {
        return Err(FieldError::TooFewReplicates(replicates));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let domain_exp = domain_exponent(spec, domain_side)?;
        let mut sum: Vec<f64> = Vec::new();
        let mut sumsq: Vec<f64> = Vec::new();
        for rep in 0..replicates {
            let mut rep_spec = spec.clone();
            rep_spec.job_key = format!("{}::vp{}", spec.job_key, rep);
            let (values, _) = synthesize(&rep_spec, domain_exp, DEFAULT_MEMORY_CAP_BYTES, None)?;
            if sum.is_empty() {
                sum = vec![0.0; values.len()];
                sumsq = vec![0.0; values.len()];
            }
            for (i, v) in values.iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        let n = replicates as f64;
        let site_vars: Vec<f64> = sum
            .iter()
            .zip(&sumsq)
            .map(|(s, sq)| (sq - s * s / n) / (n - 1.0))
            .collect();
        rows.push(VarianceRow {
            scale_index: spec.scale_index,
            mean_pointwise_variance: stats::mean(&site_vars),
        });
    }
    Ok(rows)
}

/// Raw field values over a dyadic sub-box, for statistics that do not need
/// the full unit box (thick-point counts, variance profiling).
pub fn sample_subbox_values(spec: &FieldSpec, domain_side: f64) -> Result<Vec<f64>, FieldError> {
    let domain_exp = domain_exponent(spec, domain_side)?;
    let (values, _) = synthesize(spec, domain_exp, DEFAULT_MEMORY_CAP_BYTES, None)?;
    Ok(values)
}

fn domain_exponent(spec: &FieldSpec, domain_side: f64) -> Result<u32, FieldError> {
    if !(domain_side > 0.0 && domain_side <= 1.0) {
        return Err(FieldError::InvalidDomainSide);
    }
    let t = -domain_side.log2();
    if (t - t.round()).abs() > 1e-12 {
        return Err(FieldError::InvalidDomainSide);
    }
    let t = t.round() as u32;
    if t >= spec.scale_index {
        return Err(FieldError::InvalidDomainSide);
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Snapshot persistence
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 4] = b"LFPF";
const SNAPSHOT_VERSION: u32 = 1;

fn job_key_hash(job_key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(job_key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Write `<base>.field` (fixed-width LE header + row-major f64 payload) and a
/// `<base>.meta.json` sidecar with the full spec.
pub fn save_snapshot(sample: &FieldSample, base: &Path) -> Result<(), FieldError> {
    let bin_path = base.with_extension("field");
    let mut out = Vec::with_capacity(33 + sample.values.len() * 8);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sample.spec.dimension as u32).to_le_bytes());
    out.extend_from_slice(&sample.spec.scale_index.to_le_bytes());
    out.extend_from_slice(&sample.spec.master_seed.to_le_bytes());
    out.extend_from_slice(&job_key_hash(&sample.spec.job_key).to_le_bytes());
    out.extend_from_slice(&(sample.centered as u32).to_le_bytes());
    for v in &sample.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(&bin_path)?.write_all(&out)?;

    let meta = serde_json::json!({
        "spec": sample.spec,
        "centered": sample.centered,
        "value_count": sample.values.len(),
    });
    let meta_path = base.with_extension("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(())
}

pub fn load_snapshot(base: &Path) -> Result<FieldSample, FieldError> {
    let meta_path = base.with_extension("meta.json");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| FieldError::Snapshot(format!("bad metadata: {e}")))?;
    let spec: FieldSpec = serde_json::from_value(meta["spec"].clone())
        .map_err(|e| FieldError::Snapshot(format!("bad spec in metadata: {e}")))?;

    let bin_path = base.with_extension("field");
    let mut bytes = Vec::new();
    std::fs::File::open(&bin_path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 36 || &bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(FieldError::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != SNAPSHOT_VERSION {
        return Err(FieldError::Snapshot("unsupported version".into()));
    }
    if u32_at(8) as usize != spec.dimension
        || u32_at(12) != spec.scale_index
        || u64_at(16) != spec.master_seed
        || u64_at(24) != job_key_hash(&spec.job_key)
    {
        return Err(FieldError::Snapshot("header/metadata mismatch".into()));
    }
    let centered = u32_at(32) != 0;
    let payload = &bytes[36..];
    if payload.len() % 8 != 0 {
        return Err(FieldError::Snapshot("truncated payload".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.len() != spec.grid().len() {
        return Err(FieldError::Snapshot("payload size mismatch".into()));
    }
    Ok(FieldSample {
        spec,
        values,
        centered,
    })
}
