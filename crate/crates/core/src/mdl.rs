//! Code lengths (in bits) for every part of a non-redundant clustering model.
//!
//! The per-subspace terms are: dimensionality and cluster count under the
//! universal integer prior, uniformly coded centers, uniform cluster
//! assignments, the objects under a tied-variance spherical Gaussian, the
//! variance parameter, and (when outlier detection is on) the outlier count,
//! indices and uniformly coded outlier points. The whole model adds the
//! universal code of the subspace count. Everything is expressed through the
//! precision `delta` and the maximum pairwise distance, so the total is
//! invariant under a joint rescaling of the data and `delta`.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataGeometry, DataMatrix};
use crate::error::{Error, Result};
use crate::model::{project_rotated, NrModel, Rotation, Subspace};

/// Normalizing constant of the universal prior for integers.
pub const UNIVERSAL_PRIOR_C: f64 = 2.865064;

/// Lower bound on the tied variance; zero-scatter clusters have no finite code.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Absolute slack under which two costs are treated as equal.
pub const COST_TIE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdlConstants {
    pub c: f64,
    pub delta: f64,
    pub max_dist: f64,
}

impl MdlConstants {
    pub fn new(delta: f64, max_dist: f64) -> Result<Self> {
        if !(delta > 0.0 && max_dist > 0.0 && delta.is_finite() && max_dist.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta and max_dist must be positive, got {delta} and {max_dist}"
            )));
        }
        Ok(Self {
            c: UNIVERSAL_PRIOR_C,
            delta,
            max_dist,
        })
    }

    pub fn from_geometry(g: &DataGeometry) -> Result<Self> {
        Self::new(g.delta, g.max_dist)
    }
}

/// `candidate` beats `incumbent` by more than the tie slack.
pub fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - COST_TIE_SLACK
}

fn log_star(n: f64) -> f64 {
    let mut total = 0.0;
    let mut term = n.log2();
    while term > 0.0 {
        total += term;
        term = term.log2();
    }
    total
}

pub fn universal_int_cost(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("universal prior needs n >= 1".into()));
    }
    Ok(universal_bits(n))
}

fn universal_bits(n: u64) -> f64 {
    log_star(n as f64) + UNIVERSAL_PRIOR_C.log2()
}

pub fn center_cost(m: usize, consts: &MdlConstants) -> f64 {
    -(m as f64) * ((1.0 / consts.max_dist).log2() + consts.delta.log2())
}

pub fn assignment_cost(k: usize, count: usize) -> f64 {
    (k as f64).log2() * count as f64
}

pub fn param_cost(p: usize, n: usize) -> f64 {
    p as f64 / 2.0 * (n as f64).log2()
}

/// Coded exactly like a cluster center.
pub fn outlier_point_cost(m: usize, consts: &MdlConstants) -> f64 {
    center_cost(m, consts)
}

/// Full price of moving one object of a k-cluster subspace to the outlier
/// list: the point itself plus its index, minus the assignment it no longer needs.
pub fn outlier_total_cost(m: usize, n: usize, k: usize, consts: &MdlConstants) -> f64 {
    outlier_point_cost(m, consts) + (n as f64).log2() - (k as f64).log2()
}

/// Squared residuals of `x_j` rows against their assigned centers, restricted
/// to inliers.
pub fn sum_squared_error(
    x_j: &DMatrix<f64>,
    centers: &[Vec<f64>],
    assignments: &[usize],
    inliers: Option<&[bool]>,
) -> f64 {
    let mut sse = 0.0;
    for (i, &l) in assignments.iter().enumerate() {
        if inliers.is_some_and(|mask| !mask[i]) {
            continue;
        }
        let c = &centers[l];
        for (dim, &cv) in c.iter().enumerate() {
            let diff = x_j[(i, dim)] - cv;
            sse += diff * diff;
        }
    }
    sse
}

/// Maximum likelihood tied variance. Returns 0 for zero scatter; callers that
/// need a code length go through [`object_cost_from_sse`], which applies the floor.
pub fn variance_mle(sse: f64, m: usize, n_inliers: usize) -> Result<f64> {
    if n_inliers == 0 || m == 0 {
        return Err(Error::InvalidArgument("variance needs at least one point".into()));
    }
    Ok(sse / (m * n_inliers) as f64)
}

/// Code length of `n_inliers` points in `m` dimensions under the spherical
/// model with MLE variance, including the precision term.
pub fn object_cost_from_sse(sse: f64, m: usize, n_inliers: usize, consts: &MdlConstants) -> f64 {
    let mn = (m * n_inliers) as f64;
    if mn == 0.0 {
        return 0.0;
    }
    let mut var = sse / mn;
    if var < VARIANCE_FLOOR {
        log::warn!("zero scatter in a {m}-d subspace; using variance floor {VARIANCE_FLOOR:e}");
        var = VARIANCE_FLOOR;
    }
    mn / (2.0 * LN_2) * (1.0 + (2.0 * PI * var).ln()) - mn * consts.delta.log2()
}

pub fn object_cost_spherical(
    x_j: &DMatrix<f64>,
    centers: &[Vec<f64>],
    assignments: &[usize],
    inliers: Option<&[bool]>,
    consts: &MdlConstants,
) -> Result<f64> {
    let m = x_j.ncols();
    let n_in = match inliers {
        Some(mask) => mask.iter().filter(|b| **b).count(),
        None => assignments.len(),
    };
    if n_in == 0 {
        return Err(Error::Degenerate("subspace without inliers".into()));
    }
    let sse = sum_squared_error(x_j, centers, assignments, inliers);
    Ok(object_cost_from_sse(sse, m, n_in, consts))
}

/// Squared distance beyond which a point is cheaper to code as an outlier.
///
/// `y` is the summed squared error over the `n` points of the subspace. The
/// comparison is between coding all `n` points in their clusters and coding
/// `n-1` of them plus the single outlier; the precision term of the removed
/// point cancels against the one in its uniform code.
pub fn outlier_distance_threshold(
    y: f64,
    n: usize,
    m: usize,
    k: usize,
    consts: &MdlConstants,
) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::InvalidArgument(format!("outlier threshold needs Y > 0, got {y}")));
    }
    if n < 2 || m == 0 || k == 0 {
        return Err(Error::InvalidArgument("outlier threshold needs n >= 2, m >= 1, k >= 1".into()));
    }
    let nf = n as f64;
    let mf = m as f64;
    let budget = outlier_total_cost(m, n, k, consts) + mf * consts.delta.log2();
    let a = (2.0 * LN_2 * budget / mf - 1.0 - (2.0 * PI / (mf * nf)).ln() - y.ln()) / (nf - 1.0);
    Ok(y * (1.0 - (nf - 1.0) / nf * (-a).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubspaceCost {
    pub dim_cost: f64,
    pub k_cost: f64,
    pub center_cost: f64,
    pub assignment_cost: f64,
    pub object_cost: f64,
    pub param_cost: f64,
    pub outlier_count_cost: f64,
    pub outlier_index_cost: f64,
    pub outlier_point_cost: f64,
}

impl SubspaceCost {
    pub fn total(&self) -> f64 {
        self.dim_cost
            + self.k_cost
            + self.center_cost
            + self.assignment_cost
            + self.object_cost
            + self.param_cost
            + self.outlier_count_cost
            + self.outlier_index_cost
            + self.outlier_point_cost
    }
}

/// Scalar summary of a subspace that fully determines its spherical code length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceSummary {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub n_outliers: usize,
    pub sse: f64,
}

/// Per-subspace cost from summary statistics. `outliers_enabled` controls
/// whether the outlier terms are part of the code at all; the outlier count
/// is coded as `L0(|O|+1)` so that an empty set has a finite code.
pub fn subspace_cost_from_summary(
    s: &SubspaceSummary,
    outliers_enabled: bool,
    consts: &MdlConstants,
) -> SubspaceCost {
    let n_in = s.n - s.n_outliers;
    let mut cost = SubspaceCost {
        dim_cost: universal_bits(s.m as u64),
        k_cost: universal_bits(s.k as u64),
        center_cost: s.k as f64 * center_cost(s.m, consts),
        assignment_cost: assignment_cost(s.k, n_in),
        object_cost: object_cost_from_sse(s.sse, s.m, n_in, consts),
        param_cost: param_cost(1, s.n),
        ..Default::default()
    };
    if outliers_enabled {
        let o = s.n_outliers as f64;
        cost.outlier_count_cost = universal_bits(s.n_outliers as u64 + 1);
        cost.outlier_index_cost = o * (s.n as f64).log2();
        cost.outlier_point_cost = o * outlier_point_cost(s.m, consts);
    }
    cost
}

/// Pluggable object encoding. Only the tied-variance spherical Gaussian ships.
pub trait ObjectEncoding {
    /// Number of distribution-specific parameters for a subspace.
    fn param_count(&self, m: usize, k: usize) -> usize;

    fn object_cost(
        &self,
        x_j: &DMatrix<f64>,
        centers: &[Vec<f64>],
        assignments: &[usize],
        inliers: &[bool],
        consts: &MdlConstants,
    ) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Spherical;

impl ObjectEncoding for Spherical {
    fn param_count(&self, _m: usize, _k: usize) -> usize {
        1
    }

    fn object_cost(
        &self,
        x_j: &DMatrix<f64>,
        centers: &[Vec<f64>],
        assignments: &[usize],
        inliers: &[bool],
        consts: &MdlConstants,
    ) -> Result<f64> {
        object_cost_spherical(x_j, centers, assignments, Some(inliers), consts)
    }
}

pub fn subspace_cost(
    sub: &Subspace,
    x: &DataMatrix,
    rotation: &Rotation,
    outliers_enabled: bool,
    consts: &MdlConstants,
) -> Result<SubspaceCost> {
    if rotation.d() != x.d() {
        return Err(Error::DimensionMismatch("rotation and data disagree on d".into()));
    }
    let rotated = x.values() * rotation.matrix();
    subspace_cost_with(&Spherical, sub, &rotated, outliers_enabled, consts)
}

/// Cost of one subspace given the already rotated data `x · V`.
pub fn subspace_cost_with<E: ObjectEncoding>(
    encoding: &E,
    sub: &Subspace,
    rotated: &DMatrix<f64>,
    outliers_enabled: bool,
    consts: &MdlConstants,
) -> Result<SubspaceCost> {
    let x_j = project_rotated(rotated, &sub.dims);
    let n = rotated.nrows();
    let mask = sub.inlier_mask(n);
    let n_out = sub.outliers.len();
    let n_in = n - n_out;
    if n_in == 0 {
        return Err(Error::Degenerate("every object is an outlier".into()));
    }
    let mut cost = SubspaceCost {
        dim_cost: universal_bits(sub.m() as u64),
        k_cost: universal_bits(sub.k as u64),
        center_cost: sub.k as f64 * center_cost(sub.m(), consts),
        assignment_cost: assignment_cost(sub.k, n_in),
        object_cost: encoding.object_cost(&x_j, &sub.centers, &sub.assignments, &mask, consts)?,
        param_cost: param_cost(encoding.param_count(sub.m(), sub.k), n),
        ..Default::default()
    };
    if outliers_enabled {
        let o = n_out as f64;
        cost.outlier_count_cost = universal_bits(n_out as u64 + 1);
        cost.outlier_index_cost = o * (n as f64).log2();
        cost.outlier_point_cost = o * outlier_point_cost(sub.m(), consts);
    }
    Ok(cost)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j_cost: f64,
    pub per_subspace: Vec<SubspaceCost>,
    pub total: f64,
}

impl CostBreakdown {
    pub fn from_parts(per_subspace: Vec<SubspaceCost>) -> Self {
        let j_cost = universal_bits(per_subspace.len().max(1) as u64);
        let total = j_cost + per_subspace.iter().map(SubspaceCost::total).sum::<f64>();
        CostBreakdown {
            j_cost,
            per_subspace,
            total,
        }
    }
}

pub fn model_cost(model: &NrModel, x: &DataMatrix, consts: &MdlConstants) -> Result<CostBreakdown> {
    model_cost_matrix(model, x.values(), consts)
}

/// [`model_cost`] on a raw data matrix (used for subspace-local models).
pub fn model_cost_matrix(
    model: &NrModel,
    data: &DMatrix<f64>,
    consts: &MdlConstants,
) -> Result<CostBreakdown> {
    if model.d() != data.ncols() {
        return Err(Error::DimensionMismatch("model and data disagree on d".into()));
    }
    let rotated = data * model.rotation.matrix();
    model_cost_rotated(model, &rotated, consts)
}

pub(crate) fn model_cost_rotated(
    model: &NrModel,
    rotated: &DMatrix<f64>,
    consts: &MdlConstants,
) -> Result<CostBreakdown> {
    let parts = model
        .subspaces
        .iter()
        .map(|s| subspace_cost_with(&Spherical, s, rotated, model.outlier_detection, consts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostBreakdown::from_parts(parts))
}

/// Model-independent code lengths (object count, dimensionality, bounding
/// cube, rotation). Reported for information only; never part of a total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCosts {
    pub n_cost: f64,
    pub d_cost: f64,
    pub cube_cost: f64,
    pub rotation_cost: f64,
}

pub fn constant_costs(n: usize, geometry: &DataGeometry) -> ConstantCosts {
    let d = geometry.feature_min.len();
    let log_delta = geometry.delta.log2();
    // Integer part of a real is coded by magnitude; +1 keeps zero codeable.
    let real_bits = |r: f64| universal_bits(r.floor().abs() as u64 + 1) - log_delta;
    let cube_cost = real_bits(geometry.max_dist) + geometry.feature_min.iter().map(|&r| real_bits(r)).sum::<f64>();
    ConstantCosts {
        n_cost: universal_bits(n as u64),
        d_cost: universal_bits(d as u64),
        cube_cost,
        rotation_cost: -log_delta * (d * d.saturating_sub(1)) as f64 / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn consts(delta: f64, max_dist: f64) -> MdlConstants {
        MdlConstants::new(delta, max_dist).unwrap()
    }

    // Reference log* evaluated by explicit recursion.
    fn log_star_ref(x: f64) -> f64 {
        let l = x.log2();
        if l <= 0.0 {
            0.0
        } else {
            l + log_star_ref(l)
        }
    }

    #[test]
    fn universal_prior_values() {
        let lc = 2.865064f64.log2();
        assert!((lc - 1.5186).abs() < 1e-4);
        assert!((universal_int_cost(1).unwrap() - lc).abs() < 1e-12);
        assert!((universal_int_cost(2).unwrap() - (1.0 + lc)).abs() < 1e-12);
        assert!((universal_int_cost(4).unwrap() - (3.0 + lc)).abs() < 1e-12);
        for n in 1..200u64 {
            assert!((universal_int_cost(n).unwrap() - (log_star_ref(n as f64) + lc)).abs() < 1e-12);
        }
        assert!(universal_int_cost(0).is_err());
    }

    #[test]
    fn universal_prior_increasing() {
        for n in 2..5000u64 {
            assert!(universal_int_cost(n + 1).unwrap() > universal_int_cost(n).unwrap());
        }
    }

    #[test]
    fn center_cost_values() {
        let want = -2.0 * (0.2f64.log2() + 0.5f64.log2());
        assert!((center_cost(2, &consts(0.5, 5.0)) - want).abs() < 1e-12);
        assert!((want - 6.6439).abs() < 1e-4);
        assert_eq!(center_cost(1, &consts(1.0, 1.0)), 0.0);
        let c = consts(0.3, 7.0);
        assert!((center_cost(6, &c) - 2.0 * center_cost(3, &c)).abs() < 1e-12);
    }

    #[test]
    fn assignment_and_param_values() {
        assert_eq!(assignment_cost(1, 1234), 0.0);
        assert_eq!(assignment_cost(4, 100), 200.0);
        assert!((assignment_cost(3, 10) - 15.8496).abs() < 1e-4);
        assert_eq!(param_cost(1, 1024), 5.0);
        assert_eq!(param_cost(0, 77), 0.0);
        assert_eq!(param_cost(2, 2), 1.0);
    }

    #[test]
    fn outlier_point_and_total_values() {
        let c = consts(0.5, 5.0);
        for m in 1..6 {
            assert_eq!(outlier_point_cost(m, &c), center_cost(m, &c));
        }
        let l = outlier_point_cost(2, &c);
        let total = outlier_total_cost(2, 100, 4, &c);
        assert!((total - (l + 100f64.log2() - 2.0)).abs() < 1e-12);
        assert!((total - 11.2877).abs() < 1e-3);
    }

    fn four_points() -> (DMatrix<f64>, Vec<Vec<f64>>, Vec<usize>) {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        (x, vec![vec![0.0, 0.0]], vec![0; 4])
    }

    // -log2 of the spherical normal pdf, summed point by point.
    fn per_point_oracle(x: &DMatrix<f64>, centers: &[Vec<f64>], labels: &[usize], delta: f64) -> f64 {
        let m = x.ncols();
        let n = x.nrows();
        let mut sse = 0.0;
        for i in 0..n {
            for d in 0..m {
                sse += (x[(i, d)] - centers[labels[i]][d]).powi(2);
            }
        }
        let var = sse / (m * n) as f64;
        let mut bits = 0.0;
        for i in 0..n {
            let mut z = 0.0;
            for d in 0..m {
                z += (x[(i, d)] - centers[labels[i]][d]).powi(2);
            }
            let pdf = (-z / (2.0 * var)).exp() / (2.0 * PI * var).powf(m as f64 / 2.0);
            bits += -pdf.log2() - m as f64 * delta.log2();
        }
        bits
    }

    #[test]
    fn variance_and_object_cost_four_points() {
        let (x, c, l) = four_points();
        let sse = sum_squared_error(&x, &c, &l, None);
        assert_eq!(variance_mle(sse, 2, 4).unwrap(), 0.5);
        let k = consts(1.0, 10.0);
        let cost = object_cost_spherical(&x, &c, &l, None, &k).unwrap();
        let closed = 8.0 / (2.0 * LN_2) * (1.0 + (2.0 * PI / 8.0).ln() + 4f64.ln());
        assert!((cost - closed).abs() < 1e-12);
        assert!((cost - 12.377).abs() < 1e-3);
        assert!((cost - per_point_oracle(&x, &c, &l, 1.0)).abs() < 1e-9);
        assert_eq!(variance_mle(0.0, 2, 4).unwrap(), 0.0);
    }

    #[test]
    fn object_cost_matches_oracle_and_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let n = rng.random_range(3..60);
            let m = rng.random_range(1..5);
            let k = rng.random_range(1..4);
            let x = DMatrix::from_fn(n, m, |_, _| rng.random_range(-3.0..3.0));
            let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let delta = rng.random_range(0.001..0.5);
            let c = consts(delta, 10.0);
            let cost = object_cost_spherical(&x, &centers, &labels, None, &c).unwrap();
            let oracle = per_point_oracle(&x, &centers, &labels, delta);
            assert!((cost - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "{cost} vs {oracle}");

            let f = 37.5;
            let xs = &x * f;
            let cs: Vec<Vec<f64>> = centers.iter().map(|r| r.iter().map(|v| v * f).collect()).collect();
            let scaled = object_cost_spherical(&xs, &cs, &labels, None, &consts(delta * f, 10.0 * f)).unwrap();
            assert!((scaled - cost).abs() < 1e-9 * cost.abs().max(1.0));
        }
    }

    #[test]
    fn negative_object_cost_is_possible() {
        // Large delta relative to spread makes the density-times-delta exceed 1.
        let (x, c, l) = four_points();
        let cost = object_cost_spherical(&x, &c, &l, None, &consts(50.0, 100.0)).unwrap();
        assert!(cost < 0.0);
    }

    #[test]
    fn threshold_rejects_bad_input() {
        let c = consts(0.1, 10.0);
        assert!(outlier_distance_threshold(0.0, 10, 2, 2, &c).is_err());
        assert!(outlier_distance_threshold(-1.0, 10, 2, 2, &c).is_err());
        assert!(outlier_distance_threshold(5.0, 1, 2, 2, &c).is_err());
    }

    #[test]
    fn summary_cost_matches_itemized() {
        let s = SubspaceSummary {
            m: 3,
            k: 4,
            n: 500,
            n_outliers: 7,
            sse: 1234.5,
        };
        let c = consts(0.01, 40.0);
        let cost = subspace_cost_from_summary(&s, true, &c);
        let lc = UNIVERSAL_PRIOR_C.log2();
        assert!((cost.dim_cost - (log_star_ref(3.0) + lc)).abs() < 1e-12);
        assert!((cost.assignment_cost - 2.0 * 493.0).abs() < 1e-9);
        assert!((cost.outlier_count_cost - universal_int_cost(8).unwrap()).abs() < 1e-12);
        assert!((cost.outlier_index_cost - 7.0 * 500f64.log2()).abs() < 1e-9);
        let summed = cost.dim_cost
            + cost.k_cost
            + cost.center_cost
            + cost.assignment_cost
            + cost.object_cost
            + cost.param_cost
            + cost.outlier_count_cost
            + cost.outlier_index_cost
            + cost.outlier_point_cost;
        assert!((summed - cost.total()).abs() < 1e-9);
        let off = subspace_cost_from_summary(&SubspaceSummary { n_outliers: 0, ..s }, false, &c);
        assert_eq!(off.outlier_count_cost + off.outlier_index_cost + off.outlier_point_cost, 0.0);
    }

    #[test]
    fn constant_costs_are_informational() {
        let g = DataGeometry {
            delta: 0.5,
            max_dist: 10.0,
            feature_min: vec![0.0, -2.5],
        };
        let cc = constant_costs(100, &g);
        assert!((cc.rotation_cost - 1.0).abs() < 1e-12);
        assert!(cc.cube_cost > 0.0);
    }
}
