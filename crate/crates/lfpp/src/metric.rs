//! The vertex-weighted first-passage length functional and exact geodesic
//! distances between vertex sets on sub-lattices of `eps Z^d`.
//!
//! A path visiting sites `P(1), ..., P(N)` has length `sum_i w(P(i))` with
//! `w(v) = eps * exp(xi * h_eps(v))`; distances are infima over region-
//! confined nearest-neighbor paths, including both endpoints' weights (a
//! single-vertex path has length `w(v)`).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::field::{FieldSample, FieldSpec};
use crate::grid::Grid;
use crate::stats;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("xi must be >= 0 and finite, got {0}")]
    InvalidXi(f64),
    #[error("weights must be strictly positive and finite")]
    NonPositiveWeight,
    #[error("weight array length {got} does not cover the region grid ({want})")]
    WeightCoverage { got: usize, want: usize },
    #[error("malformed path: consecutive sites are not nearest neighbors")]
    MalformedPath,
    #[error("path leaves the query region")]
    PathOutsideRegion,
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("no region-confined path connects the sources to the targets")]
    Disconnected,
    #[error("oracle size limit: region has {got} sites, limit is {limit}")]
    OracleSizeLimit { got: usize, limit: usize },
    #[error("parameter order: xi_tilde {xi_tilde} exceeds xi {xi}")]
    ParameterOrder { xi: f64, xi_tilde: f64 },
}

/// Exponential vertex weights `w(v) = eps * exp(xi * h(v))` together with the
/// field values that produced them (kept for threshold splits).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexWeights {
    pub spec: FieldSpec,
    pub xi: f64,
    pub weights: Vec<f64>,
    pub field_values: Vec<f64>,
}

impl VertexWeights {
    pub fn from_field(sample: &FieldSample, xi: f64) -> Result<Self, MetricError> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(MetricError::InvalidXi(xi));
        }
        let eps = sample.spec.epsilon();
        let weights: Vec<f64> = sample.values.iter().map(|h| eps * (xi * h).exp()).collect();
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(MetricError::NonPositiveWeight);
        }
        Ok(VertexWeights {
            spec: sample.spec.clone(),
            xi,
            weights,
            field_values: sample.values.clone(),
        })
    }

    /// Explicit weights, mainly for tests and hand-built instances. Field
    /// values are recovered as `ln(w/eps)/xi` (zero when `xi == 0`).
    pub fn from_raw(spec: FieldSpec, xi: f64, weights: Vec<f64>) -> Result<Self, MetricError> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(MetricError::InvalidXi(xi));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(MetricError::NonPositiveWeight);
        }
        let eps = spec.epsilon();
        let field_values = if xi > 0.0 {
            weights.iter().map(|w| (w / eps).ln() / xi).collect()
        } else {
            vec![0.0; weights.len()]
        };
        Ok(VertexWeights {
            spec,
            xi,
            weights,
            field_values,
        })
    }

    #[inline]
    pub fn weight(&self, site: usize) -> f64 {
        self.weights[site]
    }
}

/// A sub-lattice of the sample grid with O(1) membership tests.
#[derive(Debug, Clone)]
pub struct GridRegion {
    pub dimension: usize,
    pub scale_index: u32,
    grid: Grid,
    mask: Option<Vec<bool>>,
}

impl GridRegion {
    /// The full box `S^eps = [0,1]^d` grid.
    pub fn full(dimension: usize, scale_index: u32) -> Self {
        let grid = Grid::new(dimension, (1usize << scale_index) + 1);
        GridRegion {
            dimension,
            scale_index,
            grid,
            mask: None,
        }
    }

    pub fn with_mask(dimension: usize, scale_index: u32, mask: Vec<bool>) -> Self {
        let grid = Grid::new(dimension, (1usize << scale_index) + 1);
        assert_eq!(mask.len(), grid.len());
        GridRegion {
            dimension,
            scale_index,
            grid,
            mask: Some(mask),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, site: usize) -> bool {
        site < self.grid.len() && self.mask.as_ref().map_or(true, |m| m[site])
    }

    pub fn member_count(&self) -> usize {
        match &self.mask {
            None => self.grid.len(),
            Some(m) => m.iter().filter(|b| **b).count(),
        }
    }

    pub fn members(&self) -> Vec<usize> {
        self.grid.iter().filter(|&i| self.contains(i)).collect()
    }
}

/// Source and target vertex sets inside a region.
#[derive(Debug, Clone)]
pub struct DistanceQuery {
    pub region: GridRegion,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

impl DistanceQuery {
    pub fn new(
        region: GridRegion,
        sources: Vec<usize>,
        targets: Vec<usize>,
    ) -> Result<Self, MetricError> {
        if sources.is_empty() || targets.is_empty() {
            return Err(MetricError::InvalidQuery("empty source or target set"));
        }
        if sources.iter().chain(&targets).any(|s| !region.contains(*s)) {
            return Err(MetricError::InvalidQuery(
                "source or target outside the region",
            ));
        }
        Ok(DistanceQuery {
            region,
            sources,
            targets,
        })
    }

    /// Left-to-right crossing: sources on the face `x_0 = 0`, targets on
    /// `x_0 = 1`.
    pub fn left_right(region: GridRegion) -> Result<Self, MetricError> {
        let grid = region.grid();
        let sources: Vec<usize> = grid
            .slab(0, 0)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        let targets: Vec<usize> = grid
            .slab(0, grid.side() - 1)
            .into_iter()
            .filter(|&s| region.contains(s))
            .collect();
        DistanceQuery::new(region, sources, targets)
    }
}

/// An ordered list of nearest-neighbor lattice sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePath {
    pub sites: Vec<usize>,
}

impl LatticePath {
    pub fn validate(&self, grid: &Grid) -> Result<(), MetricError> {
        if self.sites.is_empty() {
            return Err(MetricError::MalformedPath);
        }
        if self.sites.iter().any(|&s| s >= grid.len()) {
            return Err(MetricError::MalformedPath);
        }
        for w in self.sites.windows(2) {
            if !grid.adjacent(w[0], w[1]) {
                return Err(MetricError::MalformedPath);
            }
        }
        Ok(())
    }

    pub fn confined_to(&self, region: &GridRegion) -> bool {
        self.sites.iter().all(|&s| region.contains(s))
    }
}

/// Path length per the summed vertex-weight functional (pairwise summation).
pub fn path_length(path: &LatticePath, weights: &VertexWeights) -> Result<f64, MetricError> {
    let grid = weights.spec.grid();
    path.validate(&grid)?;
    let terms: Vec<f64> = path.sites.iter().map(|&s| weights.weights[s]).collect();
    Ok(stats::pairwise_sum(&terms))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    site: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then on site index for deterministic pop order
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.site.cmp(&self.site))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_coverage(query: &DistanceQuery, weights: &VertexWeights) -> Result<(), MetricError> {
    let want = query.region.grid().len();
    if weights.weights.len() != want {
        return Err(MetricError::WeightCoverage {
            got: weights.weights.len(),
            want,
        });
    }
    Ok(())
}

/// Exact minimum of `path_length` over region-confined nearest-neighbor paths
/// from any source to any target, with one minimizing path.
///
/// Multi-source vertex-weighted Dijkstra with a lazy-deletion binary heap:
/// sources start at `dist(s) = w(s)` and relaxation adds the weight of the
/// vertex being entered. Ties pick the lexicographically smallest
/// predecessor.
pub fn set_to_set_distance(
    query: &DistanceQuery,
    weights: &VertexWeights,
) -> Result<(f64, LatticePath), MetricError> {
    check_coverage(query, weights)?;
    let grid = query.region.grid();
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();

    let mut sources = query.sources.clone();
    sources.sort_unstable();
    sources.dedup();
    for &s in &sources {
        let w = weights.weights[s];
        if w < dist[s] {
            dist[s] = w;
            heap.push(HeapEntry { cost: w, site: s });
        }
    }
    let mut is_target = vec![false; n];
    for &t in &query.targets {
        is_target[t] = true;
    }

    while let Some(HeapEntry { cost, site }) = heap.pop() {
        if settled[site] {
            continue;
        }
        settled[site] = true;
        if is_target[site] {
            let mut sites = vec![site];
            let mut cur = site;
            while pred[cur] != usize::MAX {
                cur = pred[cur];
                sites.push(cur);
            }
            sites.reverse();
            return Ok((cost, LatticePath { sites }));
        }
        for nb in grid.neighbors(site) {
            if settled[nb] || !query.region.contains(nb) {
                continue;
            }
            let cand = cost + weights.weights[nb];
            if cand < dist[nb] {
                dist[nb] = cand;
                pred[nb] = site;
                heap.push(HeapEntry {
                    cost: cand,
                    site: nb,
                });
            } else if cand == dist[nb] && site < pred[nb] {
                pred[nb] = site;
            }
        }
    }
    Err(MetricError::Disconnected)
}

/// Singleton-set specialization of [`set_to_set_distance`].
pub fn point_to_point_distance(
    x: usize,
    y: usize,
    region: &GridRegion,
    weights: &VertexWeights,
) -> Result<f64, MetricError> {
    let query = DistanceQuery::new(region.clone(), vec![x], vec![y])?;
    set_to_set_distance(&query, weights).map(|(d, _)| d)
}

pub const ORACLE_SITE_LIMIT: usize = 20;

/// Exhaustive enumeration of simple source-to-target paths. Positive weights
/// make simple paths lossless, so this is an exact oracle on tiny regions.
pub fn brute_force_distance(
    query: &DistanceQuery,
    weights: &VertexWeights,
) -> Result<f64, MetricError> {
    check_coverage(query, weights)?;
    let site_count = query.region.member_count();
    if site_count > ORACLE_SITE_LIMIT {
        return Err(MetricError::OracleSizeLimit {
            got: site_count,
            limit: ORACLE_SITE_LIMIT,
        });
    }
    let grid = query.region.grid();
    let mut is_target = vec![false; grid.len()];
    for &t in &query.targets {
        is_target[t] = true;
    }
    let mut best = f64::INFINITY;
    let mut on_path = vec![false; grid.len()];

    fn dfs(
        site: usize,
        acc: f64,
        grid: &Grid,
        region: &GridRegion,
        weights: &[f64],
        is_target: &[bool],
        on_path: &mut [bool],
        best: &mut f64,
    ) {
        let here = acc + weights[site];
        if here >= *best {
            return; // positive weights: extending only grows the length
        }
        if is_target[site] {
            *best = here;
            return;
        }
        on_path[site] = true;
        for nb in grid.neighbors(site) {
            if !on_path[nb] && region.contains(nb) {
                dfs(nb, here, grid, region, weights, is_target, on_path, best);
            }
        }
        on_path[site] = false;
    }

    let mut sources = query.sources.clone();
    sources.sort_unstable();
    sources.dedup();
    for &s in &sources {
        dfs(
            s,
            0.0,
            grid,
            &query.region,
            &weights.weights,
            &is_target,
            &mut on_path,
            &mut best,
        );
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(MetricError::Disconnected)
    }
}

/// Split of the `xi_tilde`-length of a path over the threshold
/// `alpha * log(eps)`: `A1` sums sites with `h < alpha log eps`, `A2` the
/// rest, so `A1 + A2` equals the path length under `xi_tilde`.
pub fn two_parameter_length_comparison(
    path: &LatticePath,
    weights_xi: &VertexWeights,
    weights_xitilde: &VertexWeights,
    alpha: f64,
) -> Result<(f64, f64), MetricError> {
    if weights_xitilde.xi > weights_xi.xi {
        return Err(MetricError::ParameterOrder {
            xi: weights_xi.xi,
            xi_tilde: weights_xitilde.xi,
        });
    }
    let grid = weights_xi.spec.grid();
    path.validate(&grid)?;
    if weights_xi.weights.len() != weights_xitilde.weights.len() {
        return Err(MetricError::WeightCoverage {
            got: weights_xitilde.weights.len(),
            want: weights_xi.weights.len(),
        });
    }
    let eps = weights_xi.spec.epsilon();
    let threshold = alpha * eps.ln();
    let mut low = Vec::new();
    let mut high = Vec::new();
    for &s in &path.sites {
        // threshold on the field carried by the larger-xi weights
        if weights_xi.field_values[s] < threshold {
            low.push(weights_xitilde.weights[s]);
        } else {
            high.push(weights_xitilde.weights[s]);
        }
    }
    Ok((stats::pairwise_sum(&low), stats::pairwise_sum(&high)))
}
