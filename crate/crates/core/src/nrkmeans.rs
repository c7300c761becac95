//! Non-redundant k-means: every subspace is clustered by k-means while the
//! rotation and the split of rotated dimensions between subspaces are refined
//! pair by pair through eigendecompositions of scatter-matrix differences.
//!
//! Dimensions shared between a cluster space and the noise space are divided
//! by an MDL sweep over the eigenvalue order instead of a fixed threshold.
//! When outlier detection is on, the outliers of every subspace are
//! re-determined from scratch in each iteration and excluded from centers,
//! scatter matrices and variances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_error, random_orthogonal, symmetric_eigen_sorted};
use crate::mdl::{
    model_cost_rotated, outlier_distance_threshold, subspace_cost_from_summary, sum_squared_error,
    universal_int_cost, CostBreakdown, MdlConstants, SubspaceSummary,
};
use crate::model::{ClusterStats, NrModel, Projection, Rotation, Subspace, ORTHO_TOL};

/// Reseeding attempts for an empty cluster before it is dropped.
const RESEED_ATTEMPTS: usize = 3;

/// Relative change of each subspace's scatter below which the rotation is settled.
const SSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitConfig {
    pub max_iter: usize,
    pub outlier_detection: bool,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 300,
            outlier_detection: true,
            rng_seed: 0,
        }
    }
}

/// Eigenvalues ascending with matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSplit {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSplit {
    pub fn of(m: &DMatrix<f64>) -> Self {
        let (eigenvalues, eigenvectors) = symmetric_eigen_sorted(m);
        EigenSplit {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn negative_count(&self) -> usize {
        self.eigenvalues.iter().filter(|v| **v < 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CenterInit {
    /// k-means++ seeding in the subspace.
    PlusPlus,
    /// k rows of m coordinates in the rotated subspace.
    Centers(Vec<Vec<f64>>),
    /// Means of the labelled objects (outliers excluded).
    Labels {
        labels: Vec<usize>,
        outliers: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceInit {
    pub dims: Projection,
    pub k: usize,
    pub is_noise: bool,
    pub centers: CenterInit,
}

impl SubspaceInit {
    pub fn noise(dims: Projection) -> Self {
        SubspaceInit {
            dims,
            k: 1,
            is_noise: true,
            centers: CenterInit::PlusPlus,
        }
    }

    pub fn cluster(dims: Projection, k: usize, centers: CenterInit) -> Self {
        SubspaceInit {
            dims,
            k,
            is_noise: false,
            centers,
        }
    }

    /// Continues from a fitted subspace.
    pub fn from_subspace(s: &Subspace) -> Self {
        SubspaceInit {
            dims: s.dims.clone(),
            k: s.k,
            is_noise: s.is_noise,
            centers: CenterInit::Labels {
                labels: s.assignments.clone(),
                outliers: s.outliers.clone(),
            },
        }
    }
}

/// Per-subspace squared errors around one assignment/update step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub sse_before_assign: Vec<f64>,
    pub sse_after_assign: Vec<f64>,
    pub sse_after_update: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: NrModel,
    pub cost: CostBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// D² seeding: the first center is a uniformly drawn row, each further one a
/// row drawn proportionally to its squared distance to the closest chosen center.
pub fn kmeanspp_init<R: Rng + ?Sized>(x_j: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let n = x_j.nrows();
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k-means++ needs k >= 1 and data".into()));
    }
    let row = |i: usize| -> Vec<f64> { x_j.row(i).iter().copied().collect() };
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist_row(x_j, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fewer than k={k} distinct rows for k-means++"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let c = row(pick.expect("positive total weight"));
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist_row(x_j, i, &c));
        }
        centers.push(c);
    }
    Ok(centers)
}

fn sq_dist_row(x: &DMatrix<f64>, i: usize, c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(d, &v)| {
            let diff = x[(i, d)] - v;
            diff * diff
        })
        .sum()
}

/// Nearest center per row; ties go to the lowest center index.
pub fn assign(x_j: &DMatrix<f64>, centers: &[Vec<f64>]) -> Vec<usize> {
    (0..x_j.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist_row(x_j, i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Per-cluster means and diagonal covariances over the inliers. Fails with
/// [`Error::EmptyCluster`] naming the first cluster without members.
pub fn update_centers(
    x_j: &DMatrix<f64>,
    labels: &[usize],
    inliers: Option<&[bool]>,
    k: usize,
) -> Result<(Vec<Vec<f64>>, Vec<ClusterStats>)> {
    let m = x_j.ncols();
    let mut sums = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if inliers.is_some_and(|mask| !mask[i]) {
            continue;
        }
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} >= k={k}")));
        }
        counts[l] += 1;
        for d in 0..m {
            sums[l][d] += x_j[(i, d)];
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster { cluster: empty });
    }
    let centers: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let mut var = vec![vec![0.0; m]; k];
    for (i, &l) in labels.iter().enumerate() {
        if inliers.is_some_and(|mask| !mask[i]) {
            continue;
        }
        for d in 0..m {
            let diff = x_j[(i, d)] - centers[l][d];
            var[l][d] += diff * diff;
        }
    }
    let stats = var
        .into_iter()
        .zip(&counts)
        .map(|(v, &c)| ClusterStats {
            size: c,
            cov_diag: v.into_iter().map(|s| s / c as f64).collect(),
        })
        .collect();
    Ok((centers, stats))
}

/// Inputs of the dimensionality sweep between a cluster space and the noise space.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweep<'a> {
    pub eig: &'a EigenSplit,
    /// Squared residuals of the cluster space along each eigenvector.
    pub cluster_scatter: &'a [f64],
    /// Squared residuals of the noise space along each eigenvector.
    pub noise_scatter: &'a [f64],
    pub cluster_k: usize,
    pub n: usize,
    pub cluster_outliers: usize,
    pub noise_outliers: usize,
    /// Number of subspaces in the model while the noise space still has dimensions.
    pub j: usize,
    pub outliers_enabled: bool,
}

/// Chooses how many of the lowest-eigenvalue directions go to the cluster
/// space. Starts with one and adds directions while the model cost keeps
/// falling, never beyond the count of negative eigenvalues. Returns
/// `(m_cluster, m_noise)`; `m_cluster = 0` when no eigenvalue is negative.
pub fn assign_noise_dims_mdl(sweep: &NoiseSweep<'_>, consts: &MdlConstants) -> (usize, usize) {
    let total = sweep.eig.eigenvalues.len();
    let negatives = sweep.eig.negative_count();
    if negatives == 0 {
        return (0, total);
    }
    let cost_at = |m_c: usize| -> f64 {
        let m_n = total - m_c;
        let cluster = SubspaceSummary {
            m: m_c,
            k: sweep.cluster_k,
            n: sweep.n,
            n_outliers: sweep.cluster_outliers,
            sse: sweep.cluster_scatter[..m_c].iter().sum(),
        };
        let mut bits = subspace_cost_from_summary(&cluster, sweep.outliers_enabled, consts).total();
        let j = if m_n == 0 {
            bits += 0.0;
            sweep.j - 1
        } else {
            let noise = SubspaceSummary {
                m: m_n,
                k: 1,
                n: sweep.n,
                n_outliers: sweep.noise_outliers,
                sse: sweep.noise_scatter[m_c..].iter().sum(),
            };
            bits += subspace_cost_from_summary(&noise, sweep.outliers_enabled, consts).total();
            sweep.j
        };
        bits + universal_int_cost(j.max(1) as u64).expect("j >= 1")
    };
    let mut best = 1;
    let mut prev = cost_at(1);
    for m_c in 2..=negatives {
        let c = cost_at(m_c);
        if c > prev {
            break;
        }
        prev = c;
        best = m_c;
    }
    (best, total - best)
}

/// Recomputes the outlier set of a subspace: a point is an outlier when its
/// squared distance to its center exceeds the threshold computed from the
/// current inliers. Every point is tested, so earlier outliers can return.
pub fn detect_outliers(
    x_j: &DMatrix<f64>,
    centers: &[Vec<f64>],
    labels: &[usize],
    inliers: Option<&[bool]>,
    consts: &MdlConstants,
) -> Result<Vec<usize>> {
    let m = x_j.ncols();
    let z: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist_row(x_j, i, &centers[l]))
        .collect();
    let is_in = |i: usize| inliers.is_none_or(|mask| mask[i]);
    let y: f64 = (0..z.len()).filter(|&i| is_in(i)).map(|i| z[i]).sum();
    let n_in = (0..z.len()).filter(|&i| is_in(i)).count();
    if !(y > 0.0) || n_in < 2 {
        return Ok(Vec::new());
    }
    let thr = outlier_distance_threshold(y, n_in, m, centers.len(), consts)?;
    let out: Vec<usize> = (0..z.len()).filter(|&i| z[i] > thr).collect();
    if out.len() == z.len() {
        return Err(Error::Degenerate("every object flagged as outlier".into()));
    }
    Ok(out)
}

struct SubState {
    dims: Vec<usize>,
    k: usize,
    is_noise: bool,
    labels: Vec<usize>,
    inlier: Vec<bool>,
    outliers: Vec<usize>,
    /// k×m, used for assignment.
    centers: Vec<Vec<f64>>,
    /// k×d cluster means in all rotated coordinates.
    means_full: DMatrix<f64>,
}

impl SubState {
    fn m(&self) -> usize {
        self.dims.len()
    }
}

fn select(rotated: &DMatrix<f64>, dims: &[usize]) -> DMatrix<f64> {
    rotated.select_columns(dims)
}

/// Full-coordinate means per label over inliers; `None` for empty clusters.
fn full_means(rotated: &DMatrix<f64>, labels: &[usize], inlier: &[bool], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let d = rotated.ncols();
    let mut sums = DMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if !inlier[i] {
            continue;
        }
        counts[l] += 1;
        for c in 0..d {
            sums[(l, c)] += rotated[(i, c)];
        }
    }
    for (l, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for c in 0..d {
                sums[(l, c)] /= cnt as f64;
            }
        }
    }
    (sums, counts)
}

fn centers_from_full(means_full: &DMatrix<f64>, dims: &[usize]) -> Vec<Vec<f64>> {
    (0..means_full.nrows())
        .map(|l| dims.iter().map(|&c| means_full[(l, c)]).collect())
        .collect()
}

/// Within-cluster scatter of `sub` over the combined dimensions.
fn scatter(rotated: &DMatrix<f64>, sub: &SubState, dims: &[usize]) -> DMatrix<f64> {
    let rows: Vec<usize> = (0..rotated.nrows()).filter(|&i| sub.inlier[i]).collect();
    let mut r = DMatrix::zeros(rows.len(), dims.len());
    for (ri, &i) in rows.iter().enumerate() {
        let l = sub.labels[i];
        for (c, &g) in dims.iter().enumerate() {
            r[(ri, c)] = rotated[(i, g)] - sub.means_full[(l, g)];
        }
    }
    r.transpose() * r
}

fn sse_of(rotated: &DMatrix<f64>, s: &SubState) -> f64 {
    let x_j = select(rotated, &s.dims);
    sum_squared_error(&x_j, &s.centers, &s.labels, Some(&s.inlier))
}

struct Engine<'a> {
    data: &'a DMatrix<f64>,
    v: DMatrix<f64>,
    rotated: DMatrix<f64>,
    subs: Vec<SubState>,
    consts: &'a MdlConstants,
    config: FitConfig,
}

impl<'a> Engine<'a> {
    fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Reseeds empty clusters at the point farthest from its center, dropping
    /// the cluster after repeated failures.
    fn repair_empty(&mut self, j: usize) -> Result<()> {
        let mut attempts = 0;
        loop {
            let (means, counts) = {
                let s = &self.subs[j];
                full_means(&self.rotated, &s.labels, &s.inlier, s.k)
            };
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                let s = &mut self.subs[j];
                s.centers = centers_from_full(&means, &s.dims);
                s.means_full = means;
                return Ok(());
            };
            let x_j = select(&self.rotated, &self.subs[j].dims);
            let s = &mut self.subs[j];
            if attempts < RESEED_ATTEMPTS {
                attempts += 1;
                // Far point relative to the current centers, inliers only.
                let far = (0..x_j.nrows())
                    .filter(|&i| s.inlier[i])
                    .map(|i| (i, sq_dist_row(&x_j, i, &s.centers[s.labels[i]])))
                    .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, dd)| if dd > acc.1 { (i, dd) } else { acc });
                if far.0 == usize::MAX {
                    return Err(Error::Degenerate("no inliers left to reseed from".into()));
                }
                s.centers[empty] = x_j.row(far.0).iter().copied().collect();
            } else {
                log::warn!("cluster {empty} stayed empty after {RESEED_ATTEMPTS} reseeds; reducing k to {}", s.k - 1);
                s.centers.remove(empty);
                s.k -= 1;
                attempts = 0;
                if !s.is_noise && s.k < 2 {
                    return Err(Error::Degenerate("cluster space collapsed to a single cluster".into()));
                }
            }
            s.labels = assign(&x_j, &s.centers);
        }
    }

    fn iterate(&mut self) -> Result<(usize, bool, Vec<IterationRecord>)> {
        let mut history = Vec::new();
        let mut prev: Option<(Vec<f64>, Vec<usize>)> = None;
        for iter in 0..self.config.max_iter {
            let mut changed = false;
            let mut rec = IterationRecord {
                sse_before_assign: Vec::new(),
                sse_after_assign: Vec::new(),
                sse_after_update: Vec::new(),
            };
            for s in &mut self.subs {
                let x_j = select(&self.rotated, &s.dims);
                rec.sse_before_assign
                    .push(sum_squared_error(&x_j, &s.centers, &s.labels, Some(&s.inlier)));
                let labels = if s.k == 1 { vec![0; x_j.nrows()] } else { assign(&x_j, &s.centers) };
                changed |= labels != s.labels;
                s.labels = labels;
                rec.sse_after_assign
                    .push(sum_squared_error(&x_j, &s.centers, &s.labels, Some(&s.inlier)));
                if self.config.outlier_detection {
                    let out = detect_outliers(&x_j, &s.centers, &s.labels, Some(&s.inlier), self.consts)?;
                    changed |= out != s.outliers;
                    s.inlier = vec![true; x_j.nrows()];
                    for &o in &out {
                        s.inlier[o] = false;
                    }
                    s.outliers = out;
                }
            }
            for j in 0..self.subs.len() {
                self.repair_empty(j)?;
            }
            for s in &self.subs {
                rec.sse_after_update.push(sse_of(&self.rotated, s));
            }
            // Converged once labels, outliers and dimensionalities are fixed and
            // the rotation no longer moves scatter between subspaces.
            let sse = rec.sse_after_update.clone();
            let shape: Vec<usize> = self.subs.iter().map(SubState::m).collect();
            history.push(rec);
            let settled = self.subs.len() == 1
                || prev.as_ref().is_some_and(|(p, sh)| {
                    *sh == shape && p.iter().zip(&sse).all(|(a, b)| (a - b).abs() <= SSE_TOL * b.max(1.0))
                });
            if !changed && settled {
                return Ok((iter + 1, true, history));
            }
            prev = Some((sse, shape));
            if iter + 1 == self.config.max_iter {
                break;
            }
            self.update_rotation()?;
        }
        Ok((self.config.max_iter, false, history))
    }

    fn pair_order(&self) -> Vec<(usize, usize)> {
        let j = self.subs.len();
        let mut pairs = Vec::new();
        for a in 0..j {
            for b in (a + 1)..j {
                if self.subs[a].is_noise {
                    pairs.push((b, a));
                } else {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    fn update_rotation(&mut self) -> Result<()> {
        if self.subs.len() < 2 {
            return Ok(());
        }
        let d = self.v.nrows();
        let mut vanished_noise = false;
        for (a, b) in self.pair_order() {
            if vanished_noise && (self.subs[a].is_noise || self.subs[b].is_noise) {
                continue;
            }
            let combined: Vec<usize> = self.subs[a].dims.iter().chain(&self.subs[b].dims).copied().collect();
            let s_a = scatter(&self.rotated, &self.subs[a], &combined);
            let s_b = scatter(&self.rotated, &self.subs[b], &combined);
            let eig = EigenSplit::of(&(&s_a - &s_b));
            let q = &eig.eigenvectors;
            let m_a = if self.subs[b].is_noise {
                let proj_a = q.transpose() * &s_a * q;
                let proj_b = q.transpose() * &s_b * q;
                let ca: Vec<f64> = proj_a.diagonal().iter().copied().collect();
                let cb: Vec<f64> = proj_b.diagonal().iter().copied().collect();
                let sweep = NoiseSweep {
                    eig: &eig,
                    cluster_scatter: &ca,
                    noise_scatter: &cb,
                    cluster_k: self.subs[a].k,
                    n: self.n(),
                    cluster_outliers: self.subs[a].outliers.len(),
                    noise_outliers: self.subs[b].outliers.len(),
                    j: self.subs.len(),
                    outliers_enabled: self.config.outlier_detection,
                };
                // A cluster space keeps at least one direction.
                assign_noise_dims_mdl(&sweep, self.consts).0.max(1)
            } else {
                self.subs[a].m()
            };
            // Rotate the combined coordinates of data, rotation and every mean.
            let rotate_cols = |mat: &mut DMatrix<f64>| {
                let block = mat.select_columns(&combined) * q;
                for (c, &g) in combined.iter().enumerate() {
                    mat.set_column(g, &block.column(c));
                }
            };
            rotate_cols(&mut self.v);
            rotate_cols(&mut self.rotated);
            for s in &mut self.subs {
                rotate_cols(&mut s.means_full);
            }
            self.subs[a].dims = combined[..m_a].to_vec();
            self.subs[b].dims = combined[m_a..].to_vec();
            if self.subs[b].dims.is_empty() {
                vanished_noise = true;
            }
        }
        if vanished_noise {
            self.subs.retain(|s| !s.dims.is_empty());
        }
        if orthogonality_error(&self.v) > ORTHO_TOL {
            self.v = Rotation::repaired(self.v.clone()).into_inner();
        }
        self.rotated = self.data * &self.v;
        for s in &mut self.subs {
            s.centers = centers_from_full(&s.means_full, &s.dims);
        }
        debug_assert_eq!(self.subs.iter().map(SubState::m).sum::<usize>(), d);
        Ok(())
    }

    fn into_outcome(self, iterations: usize, converged: bool, history: Vec<IterationRecord>) -> Result<FitOutcome> {
        let n = self.n();
        let subspaces = self
            .subs
            .iter()
            .map(|s| {
                let sse = sse_of(&self.rotated, s);
                let n_in = s.inlier.iter().filter(|b| **b).count();
                Subspace {
                    dims: Projection::new(s.dims.clone(), self.v.nrows()).expect("valid dims"),
                    k: s.k,
                    centers: s.centers.clone(),
                    assignments: s.labels.clone(),
                    variance: sse / (s.m() * n_in) as f64,
                    outliers: s.outliers.clone(),
                    is_noise: s.is_noise,
                }
            })
            .collect();
        let model = NrModel {
            rotation: Rotation::repaired(self.v),
            subspaces,
            outlier_detection: self.config.outlier_detection,
        };
        debug_assert_eq!(model.n(), n);
        // Recompute from data·V exactly as model_cost does.
        let rotated = self.data * model.rotation.matrix();
        let cost = model_cost_rotated(&model, &rotated, self.consts)?;
        Ok(FitOutcome {
            model,
            cost,
            iterations,
            converged,
            history,
        })
    }
}

/// One run of non-redundant k-means from the given rotation and subspaces.
pub fn fit(
    data: &DMatrix<f64>,
    rotation: &Rotation,
    inits: Vec<SubspaceInit>,
    consts: &MdlConstants,
    config: &FitConfig,
) -> Result<FitOutcome> {
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let n = data.nrows();
    let d = data.ncols();
    if rotation.d() != d {
        return Err(Error::DimensionMismatch(format!("rotation is {}-d, data {}-d", rotation.d(), d)));
    }
    let mut seen = vec![false; d];
    for init in &inits {
        for &i in init.dims.dims() {
            if i >= d || seen[i] {
                return Err(Error::InvalidArgument("projections must partition the dimensions".into()));
            }
            seen[i] = true;
        }
        if init.is_noise != (init.k == 1) {
            return Err(Error::InvalidArgument("noise spaces have k=1, cluster spaces k>=2".into()));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("projections must cover every dimension".into()));
    }
    if inits.iter().filter(|s| s.is_noise).count() > 1 {
        return Err(Error::InvalidArgument("at most one noise space".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let v = rotation.matrix().clone();
    let rotated = data * &v;
    let mut subs = Vec::with_capacity(inits.len());
    for init in inits {
        let dims = init.dims.dims().to_vec();
        let x_j = select(&rotated, &dims);
        let (centers, labels, outliers) = match init.centers {
            _ if init.k == 1 => {
                let mean: Vec<f64> = (0..dims.len()).map(|c| x_j.column(c).mean()).collect();
                (vec![mean], vec![0; n], Vec::new())
            }
            CenterInit::PlusPlus => {
                let c = kmeanspp_init(&x_j, init.k, &mut rng)?;
                let labels = assign(&x_j, &c);
                (c, labels, Vec::new())
            }
            CenterInit::Centers(c) => {
                if c.len() != init.k || c.iter().any(|r| r.len() != dims.len()) {
                    return Err(Error::DimensionMismatch("initial centers must be k x m".into()));
                }
                let labels = assign(&x_j, &c);
                (c, labels, Vec::new())
            }
            CenterInit::Labels { labels, outliers } => {
                if labels.len() != n || labels.iter().any(|&l| l >= init.k) {
                    return Err(Error::InvalidArgument("initial labels must be in [0,k)".into()));
                }
                let mut inlier = vec![true; n];
                for &o in &outliers {
                    inlier[o] = false;
                }
                let (means, counts) = full_means(&rotated, &labels, &inlier, init.k);
                let mut c = centers_from_full(&means, &dims);
                // Empty labels get a fresh D² seed.
                for (l, &cnt) in counts.iter().enumerate() {
                    if cnt == 0 {
                        let far = (0..n)
                            .max_by(|&p, &q| {
                                let dp = sq_dist_row(&x_j, p, &c[labels[p]]);
                                let dq = sq_dist_row(&x_j, q, &c[labels[q]]);
                                dp.total_cmp(&dq).then(q.cmp(&p))
                            })
                            .expect("n >= 1");
                        c[l] = x_j.row(far).iter().copied().collect();
                    }
                }
                (c, labels, outliers)
            }
        };
        let mut inlier = vec![true; n];
        for &o in &outliers {
            inlier[o] = false;
        }
        subs.push(SubState {
            dims,
            k: init.k,
            is_noise: init.is_noise,
            labels,
            inlier,
            outliers,
            centers,
            means_full: DMatrix::zeros(init.k, d),
        });
    }
    let mut engine = Engine {
        data,
        v,
        rotated,
        subs,
        consts,
        config: *config,
    };
    let (iterations, converged, history) = engine.iterate()?;
    engine.into_outcome(iterations, converged, history)
}

/// Deterministic per-run seed from a master seed and a run index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shape of a randomly initialized run: one entry per subspace, `(m, k)`,
/// with `k = 1` marking the noise space. Dimensions are laid out contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomLayout {
    pub subspaces: Vec<(usize, usize)>,
}

impl RandomLayout {
    fn inits(&self) -> Vec<SubspaceInit> {
        let mut start = 0;
        self.subspaces
            .iter()
            .map(|&(m, k)| {
                let dims = Projection::range(start, start + m);
                start += m;
                if k == 1 {
                    SubspaceInit::noise(dims)
                } else {
                    SubspaceInit::cluster(dims, k, CenterInit::PlusPlus)
                }
            })
            .collect()
    }

    pub fn d(&self) -> usize {
        self.subspaces.iter().map(|s| s.0).sum()
    }
}

/// One random restart: random rotation, contiguous projections, k-means++ centers.
pub fn random_fit(
    data: &DMatrix<f64>,
    layout: &RandomLayout,
    consts: &MdlConstants,
    config: &FitConfig,
) -> Result<FitOutcome> {
    if layout.d() != data.ncols() {
        return Err(Error::DimensionMismatch("layout does not match data dimensionality".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let v = Rotation::repaired(random_orthogonal(data.ncols(), &mut rng));
    let cfg = FitConfig {
        rng_seed: rng.random(),
        ..*config
    };
    fit(data, &v, layout.inits(), consts, &cfg)
}

/// Runs `run(i, seed_i)` for every `i < reps` and keeps the lowest total
/// cost, ties to the lowest index. Failed runs are skipped; if all fail the
/// first error is returned. Parallel and serial execution give identical results.
pub fn best_of<F>(reps: usize, master_seed: u64, parallel: bool, run: F) -> Result<(usize, FitOutcome)>
where
    F: Fn(usize, u64) -> Result<FitOutcome> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    let go = |i: usize| run(i, derive_seed(master_seed, i as u64));
    let results: Vec<Result<FitOutcome>> = if parallel {
        (0..reps).into_par_iter().map(go).collect()
    } else {
        (0..reps).map(go).collect()
    };
    let mut best: Option<(usize, FitOutcome)> = None;
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(outcome) => {
                let better = best.as_ref().is_none_or(|(_, b)| outcome.cost.total < b.cost.total);
                if better {
                    best = Some((i, outcome));
                }
            }
            Err(e) => {
                log::debug!("run {i} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Degenerate("no successful run".into())))
}

/// `reps` random restarts of [`random_fit`] with seeds derived from `seed`.
pub fn best_of_runs(
    data: &DMatrix<f64>,
    layout: &RandomLayout,
    consts: &MdlConstants,
    config: &FitConfig,
    reps: usize,
    seed: u64,
    parallel: bool,
) -> Result<FitOutcome> {
    best_of(reps, seed, parallel, |_, s| {
        random_fit(data, layout, consts, &FitConfig { rng_seed: s, ..*config })
    })
    .map(|(_, o)| o)
}
