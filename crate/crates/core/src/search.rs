//! Greedy MDL search over the number of subspaces and clusters.
//!
//! Starting from a single noise space, the search repeatedly tries to split
//! the most expensive subspaces (noise spaces into a cluster space plus
//! residual noise, cluster spaces into two cluster spaces). Each candidate is
//! first built on the subspace's own coordinates; when it codes those
//! coordinates more cheaply it is joined into the full model and refitted
//! once, and kept only if the total description length drops. When no split
//! helps, pairs of cluster spaces are merged under the same two gates.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataGeometry, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::mdl::{improves, CostBreakdown, MdlConstants};
use crate::model::{compose_rotation, embed_rotation_full, project_rotated, ClusterStats, NrModel, Projection, Rotation, Subspace};
use crate::nrkmeans::{
    best_of, derive_seed, fit, random_fit, update_centers, CenterInit, FitConfig, FitOutcome, RandomLayout,
    SubspaceInit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub reps: usize,
    pub master_seed: u64,
    pub outlier_detection: bool,
    /// Cap on clusters per subspace; `None` means N−1.
    pub max_k: Option<usize>,
    pub max_iter: usize,
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            reps: 15,
            master_seed: 0,
            outlier_detection: true,
            max_k: None,
            max_iter: 300,
            parallel: true,
        }
    }
}

impl SearchConfig {
    fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_iter: self.max_iter,
            outlier_detection: self.outlier_detection,
            rng_seed: seed,
        }
    }

    fn k_cap(&self, n: usize) -> usize {
        let cap = n.saturating_sub(1).max(2);
        self.max_k.map_or(cap, |k| k.clamp(2, cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    NoiseSplit,
    ClusterSplit,
    Merge,
}

/// A candidate built on the coordinates of the subspace(s) it replaces. The
/// local model's rotation is m×m and its projections index those coordinates.
#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub operation: Operation,
    pub local: NrModel,
    pub local_cost: f64,
    /// Cluster counts of every admissible local fit, in evaluation order.
    pub evaluated: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub operation: Operation,
    /// Indices of the replaced subspaces in the incumbent model.
    pub replaced: Vec<usize>,
    pub replaced_dims: Vec<Vec<usize>>,
    pub replaced_k: Vec<usize>,
    pub candidate_k: Vec<usize>,
    pub candidate_m: Vec<usize>,
    pub evaluated: Vec<Vec<usize>>,
    pub incumbent_local_cost: f64,
    pub candidate_local_cost: Option<f64>,
    pub local_gate: bool,
    pub full_cost: Option<f64>,
    pub incumbent_total: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub model: NrModel,
    pub cost: CostBreakdown,
    pub trace: Vec<TraceEntry>,
    /// Total cost of the initial noise-only model followed by every accepted model.
    pub accepted_costs: Vec<f64>,
}

pub fn write_trace<W: Write>(trace: &[TraceEntry], mut out: W) -> Result<()> {
    for e in trace {
        let line = serde_json::to_string(e)?;
        writeln!(out, "{line}").map_err(|err| Error::io("trace", err))?;
    }
    Ok(())
}

/// `max(k1,k2) <= k_orig <= k1*k2`.
pub fn split_valid(k_orig: usize, k1: usize, k2: usize) -> bool {
    k1.max(k2) <= k_orig && k_orig <= k1 * k2
}

pub fn merge_valid(k1: usize, k2: usize, k_m: usize) -> bool {
    split_valid(k_m, k1, k2)
}

/// Cluster spaces by descending cost, ties in index order, noise space last.
pub fn sort_spaces(model: &NrModel, cost: &CostBreakdown) -> Vec<usize> {
    let mut clusters: Vec<usize> = (0..model.j()).filter(|&j| !model.subspaces[j].is_noise).collect();
    clusters.sort_by(|&a, &b| {
        cost.per_subspace[b]
            .total()
            .total_cmp(&cost.per_subspace[a].total())
            .then(a.cmp(&b))
    });
    clusters.extend(model.noise_index());
    clusters
}

/// Replaces the cluster with the largest summed variance by the two centers
/// `μ ± diag(Σ)/(m·|C|)`; the second is appended. Ties go to the lowest index.
pub fn split_centers_largest_dispersion(centers: &[Vec<f64>], stats: &[ClusterStats], delta: f64) -> Vec<Vec<f64>> {
    let disp = |s: &ClusterStats| s.cov_diag.iter().sum::<f64>();
    let mut pick = 0;
    for (i, s) in stats.iter().enumerate() {
        if disp(s) > disp(&stats[pick]) {
            pick = i;
        }
    }
    let m = centers[pick].len();
    let size = stats[pick].size.max(1);
    let step: Vec<f64> = stats[pick].cov_diag.iter().map(|v| v / (m * size) as f64).collect();
    let mut plus: Vec<f64> = centers[pick].iter().zip(&step).map(|(c, s)| c + s).collect();
    let mut minus: Vec<f64> = centers[pick].iter().zip(&step).map(|(c, s)| c - s).collect();
    if plus == minus {
        plus[0] += delta / 2.0;
        minus[0] -= delta / 2.0;
    }
    let mut out = centers.to_vec();
    out[pick] = plus;
    out.push(minus);
    out
}

/// Replaces the closest pair of centers by their mean (ties: lowest pair).
pub fn merge_nearest_centers(centers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut best = (0, 1, f64::INFINITY);
    for a in 0..centers.len() {
        for b in (a + 1)..centers.len() {
            let d: f64 = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            if d < best.2 {
                best = (a, b, d);
            }
        }
    }
    let (a, b, _) = best;
    let mut out = centers.to_vec();
    out[a] = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x + y) / 2.0).collect();
    out.remove(b);
    out
}

/// Pairs visited while both sides are merged in lockstep from `(k, k)`.
pub fn split_phase1_schedule(k_orig: usize) -> Vec<(usize, usize)> {
    (2..=k_orig).rev().map(|k| (k, k)).take_while(|&(a, b)| split_valid(k_orig, a, b)).collect()
}

/// Pairs visited when one side stays at `fixed` and the other is decremented
/// from `start`. Pairs are `(fixed, other)`.
pub fn split_phase2_schedule(k_orig: usize, fixed: usize, start: usize) -> Vec<(usize, usize)> {
    (2..start).rev().map(|k| (fixed, k)).take_while(|&(a, b)| split_valid(k_orig, a, b)).collect()
}

/// Cluster counts visited by a merge of a `k1`- and a `k2`-cluster space.
pub fn merge_schedule(k1: usize, k2: usize, max_k: usize) -> Vec<usize> {
    let start = (k1 * k2).min(max_k);
    (k1.max(k2)..=start).rev().filter(|&k| merge_valid(k1, k2, k)).collect()
}

fn local_cost(o: &FitOutcome) -> f64 {
    o.cost.per_subspace.iter().map(|c| c.total()).sum()
}

fn cluster_ks(model: &NrModel) -> Vec<usize> {
    model.subspaces.iter().filter(|s| !s.is_noise).map(|s| s.k).collect()
}

fn noise_m(model: &NrModel) -> usize {
    model.noise_index().map_or(0, |i| model.subspaces[i].m())
}

fn pick_better(a: Option<FitOutcome>, b: Option<FitOutcome>) -> Option<FitOutcome> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if local_cost(&b) < local_cost(&a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

struct Ctx<'a> {
    consts: &'a MdlConstants,
    cfg: &'a SearchConfig,
    k_cap: usize,
}

/// Splits a noise space into a cluster space and residual noise, for k = 2, 3, …
/// until the local cost stops falling.
pub fn noise_space_split(
    x_noise: &DMatrix<f64>,
    consts: &MdlConstants,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Option<CandidateResult>> {
    let ctx = Ctx {
        consts,
        cfg,
        k_cap: cfg.k_cap(x_noise.nrows()),
    };
    noise_split_inner(x_noise, &ctx, seed)
}

fn noise_split_inner(x_noise: &DMatrix<f64>, ctx: &Ctx<'_>, seed: u64) -> Result<Option<CandidateResult>> {
    let m = x_noise.ncols();
    let layout_for = |k: usize| RandomLayout {
        subspaces: if m == 1 { vec![(1, k)] } else { vec![(1, k), (m - 1, 1)] },
    };
    let mut best: Option<FitOutcome> = None;
    let mut evaluated = Vec::new();
    let mut last_noise_m: Option<usize> = None;
    let mut random_restarts = true;
    for k in 2..=ctx.k_cap {
        let fit_cfg = ctx.cfg.fit_config(0);
        let warm = match &best {
            Some(prev) => warm_split(x_noise, prev, ctx, derive_seed(seed, 2 * k as u64)).ok(),
            None => None,
        };
        let random_reps = match (&best, random_restarts) {
            (None, _) => ctx.cfg.reps,
            (Some(_), true) => ctx.cfg.reps.saturating_sub(1),
            (Some(_), false) => 0,
        };
        let random = if random_reps > 0 {
            let layout = layout_for(k);
            best_of(random_reps, derive_seed(seed, 2 * k as u64 + 1), ctx.cfg.parallel, |_, s| {
                random_fit(x_noise, &layout, ctx.consts, &FitConfig { rng_seed: s, ..fit_cfg })
            })
            .ok()
            .map(|(_, o)| o)
        } else {
            None
        };
        let Some(current) = pick_better(warm, random) else {
            break;
        };
        evaluated.push(cluster_ks(&current.model));
        let improved = best.as_ref().is_none_or(|b| local_cost(&current) < local_cost(b));
        log::debug!("noise split k={k}: local cost {:.3}", local_cost(&current));
        if !improved {
            break;
        }
        let nm = noise_m(&current.model);
        if last_noise_m == Some(nm) {
            random_restarts = false;
        }
        last_noise_m = Some(nm);
        best = Some(current);
    }
    Ok(best.map(|o| CandidateResult {
        operation: Operation::NoiseSplit,
        local_cost: local_cost(&o),
        local: o.model,
        evaluated,
    }))
}

/// Continues from the previous best with the most dispersed cluster split in two.
fn warm_split(x_noise: &DMatrix<f64>, prev: &FitOutcome, ctx: &Ctx<'_>, seed: u64) -> Result<FitOutcome> {
    let model = &prev.model;
    let rotated = x_noise * model.rotation.matrix();
    let inits = model
        .subspaces
        .iter()
        .map(|s| {
            if s.is_noise {
                return Ok(SubspaceInit::noise(s.dims.clone()));
            }
            let x_j = project_rotated(&rotated, &s.dims);
            let mask = s.inlier_mask(x_j.nrows());
            let (centers, stats) = update_centers(&x_j, &s.assignments, Some(&mask), s.k)?;
            let split = split_centers_largest_dispersion(&centers, &stats, ctx.consts.delta);
            Ok(SubspaceInit::cluster(s.dims.clone(), s.k + 1, CenterInit::Centers(split)))
        })
        .collect::<Result<Vec<_>>>()?;
    fit(x_noise, &model.rotation, inits, ctx.consts, &ctx.cfg.fit_config(seed))
}

fn side_inits(m: usize, m1: usize, k: (usize, usize), centers: (CenterInit, CenterInit)) -> Vec<SubspaceInit> {
    vec![
        SubspaceInit::cluster(Projection::range(0, m1), k.0, centers.0),
        SubspaceInit::cluster(Projection::range(m1, m), k.1, centers.1),
    ]
}

/// Continues a two-sided local fit with the nearest centers merged on the
/// sides flagged in `merge`.
fn refit_merged(x_j: &DMatrix<f64>, prev: &FitOutcome, merge: (bool, bool), ctx: &Ctx<'_>, seed: u64) -> Result<FitOutcome> {
    let subs = &prev.model.subspaces;
    let inits = subs
        .iter()
        .zip([merge.0, merge.1])
        .map(|(s, mg)| {
            if mg {
                let c = merge_nearest_centers(&s.centers);
                SubspaceInit::cluster(s.dims.clone(), c.len(), CenterInit::Centers(c))
            } else {
                SubspaceInit::from_subspace(s)
            }
        })
        .collect();
    fit(x_j, &prev.model.rotation, inits, ctx.consts, &ctx.cfg.fit_config(seed))
}

fn two_sided_ks(o: &FitOutcome) -> Option<(usize, usize)> {
    match o.model.subspaces.as_slice() {
        [a, b] if !a.is_noise && !b.is_noise => Some((a.k, b.k)),
        _ => None,
    }
}

/// Splits a cluster space with `k_orig` clusters into two cluster spaces.
/// Both sides start from the original clusters and are merged in lockstep;
/// then one side is held while the other keeps shrinking.
pub fn cluster_space_split(
    x_j: &DMatrix<f64>,
    sub: &Subspace,
    consts: &MdlConstants,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Option<CandidateResult>> {
    let ctx = Ctx {
        consts,
        cfg,
        k_cap: cfg.k_cap(x_j.nrows()),
    };
    let m = x_j.ncols();
    let k_orig = sub.k;
    if m < 2 || k_orig < 2 {
        return Ok(None);
    }
    let mut best: Option<FitOutcome> = None;
    let mut evaluated = Vec::new();
    let mut seed_i = 0u64;
    let mut next = || {
        seed_i += 1;
        derive_seed(seed, seed_i)
    };
    let consider = |o: FitOutcome, best: &mut Option<FitOutcome>, evaluated: &mut Vec<Vec<usize>>| -> Option<(usize, usize)> {
        let ks = two_sided_ks(&o)?;
        if !split_valid(k_orig, ks.0, ks.1) {
            return None;
        }
        evaluated.push(vec![ks.0, ks.1]);
        if best.as_ref().is_none_or(|b| local_cost(&o) < local_cost(b)) {
            *best = Some(o);
        }
        Some(ks)
    };
    // The warm continuation competes with random restarts of the same shape.
    let with_restarts = |warm: Option<FitOutcome>, m1: usize, ks: (usize, usize), seed: u64| -> Option<FitOutcome> {
        let reps = cfg.reps.saturating_sub(1);
        let random = if reps > 0 {
            let layout = RandomLayout {
                subspaces: vec![(m1, ks.0), (m - m1, ks.1)],
            };
            let fit_cfg = cfg.fit_config(0);
            best_of(reps, seed, cfg.parallel, |_, s| {
                random_fit(x_j, &layout, consts, &FitConfig { rng_seed: s, ..fit_cfg })
            })
            .ok()
            .map(|(_, o)| o)
        } else {
            None
        };
        pick_better(warm, random)
    };
    let labels = || CenterInit::Labels {
        labels: sub.assignments.clone(),
        outliers: sub.outliers.clone(),
    };
    for m1 in 1..=m / 2 {
        let inits = side_inits(m, m1, (k_orig, k_orig), (labels(), labels()));
        let warm = fit(x_j, &Rotation::identity(m), inits, consts, &cfg.fit_config(next())).ok();
        let Some(mut cur) = with_restarts(warm, m1, (k_orig, k_orig), next()) else {
            continue;
        };
        let Some(mut ks) = consider(cur.clone(), &mut best, &mut evaluated) else {
            continue;
        };
        let mut phase1_best = (cur.clone(), ks);
        // Phase 1: both sides shrink together while the constraint allows.
        while ks.0 > 2 && ks.1 > 2 && split_valid(k_orig, ks.0 - 1, ks.1 - 1) {
            let warm = refit_merged(x_j, &cur, (true, true), &ctx, next()).ok();
            let Some(o) = with_restarts(warm, m1, (ks.0 - 1, ks.1 - 1), next()) else {
                break;
            };
            match consider(o.clone(), &mut best, &mut evaluated) {
                Some(k) => {
                    if local_cost(&o) < local_cost(&phase1_best.0) {
                        phase1_best = (o.clone(), k);
                    }
                    ks = k;
                    cur = o;
                }
                None => break,
            }
        }
        // Phase 2: from the cheapest lockstep pair, hold one side and shrink the other
        // down to the constraint boundary.
        for hold_first in [true, false] {
            let mut state = phase1_best.0.clone();
            let mut state_ks = phase1_best.1;
            loop {
                let (fixed, other) = if hold_first { (state_ks.0, state_ks.1) } else { (state_ks.1, state_ks.0) };
                if other <= 2 || !split_valid(k_orig, fixed, other - 1) {
                    break;
                }
                let merge = if hold_first { (false, true) } else { (true, false) };
                let target = if hold_first { (fixed, other - 1) } else { (other - 1, fixed) };
                let warm = refit_merged(x_j, &state, merge, &ctx, next()).ok();
                let Some(o) = with_restarts(warm, m1, target, next()) else {
                    break;
                };
                // A transient rise is tolerated; overfull sides often dip only after two merges.
                match consider(o.clone(), &mut best, &mut evaluated) {
                    Some(k) => {
                        state_ks = k;
                        state = o;
                    }
                    _ => break,
                }
            }
        }
    }
    Ok(best.map(|o| CandidateResult {
        operation: Operation::ClusterSplit,
        local_cost: local_cost(&o),
        local: o.model,
        evaluated,
    }))
}

/// Merges two cluster spaces into one, starting from every combination of
/// their centers and merging the closest centers while the cost falls.
pub fn cluster_space_merge(
    x_merged: &DMatrix<f64>,
    sub_a: &Subspace,
    sub_b: &Subspace,
    consts: &MdlConstants,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Option<CandidateResult>> {
    let (k1, k2) = (sub_a.k, sub_b.k);
    let m = x_merged.ncols();
    if sub_a.m() + sub_b.m() != m {
        return Err(Error::DimensionMismatch("merged matrix must hold both subspaces".into()));
    }
    let k_cap = cfg.k_cap(x_merged.nrows());
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k1 * k2);
    for ca in &sub_a.centers {
        for cb in &sub_b.centers {
            centers.push(ca.iter().chain(cb).copied().collect());
        }
    }
    while centers.len() > k_cap {
        centers = merge_nearest_centers(&centers);
    }
    let floor = k1.max(k2);
    let mut best: Option<FitOutcome> = None;
    let mut prev_cost = f64::INFINITY;
    let mut evaluated = Vec::new();
    let mut step = 0u64;
    while centers.len() >= floor {
        step += 1;
        let k = centers.len();
        let inits = vec![SubspaceInit::cluster(Projection::range(0, m), k, CenterInit::Centers(centers.clone()))];
        let Ok(o) = fit(x_merged, &Rotation::identity(m), inits, consts, &cfg.fit_config(derive_seed(seed, step))) else {
            break;
        };
        let got = o.model.subspaces[0].k;
        if !merge_valid(k1, k2, got) {
            break;
        }
        evaluated.push(vec![got]);
        let c = local_cost(&o);
        if c >= prev_cost {
            break;
        }
        prev_cost = c;
        centers = merge_nearest_centers(&o.model.subspaces[0].centers);
        best = Some(o);
        if got <= floor {
            break;
        }
    }
    Ok(best.map(|o| CandidateResult {
        operation: Operation::Merge,
        local_cost: local_cost(&o),
        local: o.model,
        evaluated,
    }))
}

/// Joins a local candidate into the full model in place of `replaced` and
/// refits once from the joined parameters.
pub fn full_space_execution(
    x: &DataMatrix,
    model: &NrModel,
    replaced: &[usize],
    candidate: &NrModel,
    consts: &MdlConstants,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    let d = model.d();
    let union: Vec<usize> = replaced
        .iter()
        .flat_map(|&j| model.subspaces[j].dims.dims().to_vec())
        .collect();
    let p_union = Projection::new(union.clone(), d)?;
    let embed = embed_rotation_full(candidate.rotation.matrix(), &p_union, d)?;
    let rotation = compose_rotation(&model.rotation, &embed)?;
    // Candidate spaces take the slot of the first replaced space; noise goes last.
    let first = *replaced.iter().min().ok_or_else(|| Error::InvalidArgument("nothing replaced".into()))?;
    let mut clusters = Vec::new();
    let mut noise = None;
    for (j, s) in model.subspaces.iter().enumerate() {
        if j == first {
            for c in &candidate.subspaces {
                let dims: Vec<usize> = c.dims.dims().iter().map(|&l| union[l]).collect();
                let init = SubspaceInit {
                    dims: Projection::new(dims, d)?,
                    ..SubspaceInit::from_subspace(c)
                };
                if c.is_noise {
                    if noise.is_some() {
                        return Err(Error::InvalidArgument("candidate adds a second noise space".into()));
                    }
                    noise = Some(init);
                } else {
                    clusters.push(init);
                }
            }
        }
        if replaced.contains(&j) {
            continue;
        }
        let init = SubspaceInit::from_subspace(s);
        if s.is_noise {
            if noise.is_some() {
                return Err(Error::InvalidArgument("candidate adds a second noise space".into()));
            }
            noise = Some(init);
        } else {
            clusters.push(init);
        }
    }
    clusters.extend(noise);
    fit(x.values(), &rotation, clusters, consts, cfg)
}

/// Initial model: a random rotation and a single noise space.
pub fn initial_model(x: &DataMatrix, consts: &MdlConstants, cfg: &SearchConfig) -> Result<FitOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, 0));
    let v = Rotation::repaired(random_orthogonal(x.d(), &mut rng));
    fit(
        x.values(),
        &v,
        vec![SubspaceInit::noise(Projection::range(0, x.d()))],
        consts,
        &cfg.fit_config(0),
    )
}

fn trace_entry(
    step: usize,
    operation: Operation,
    model: &NrModel,
    cost: &CostBreakdown,
    replaced: &[usize],
    cand: Option<&CandidateResult>,
) -> TraceEntry {
    TraceEntry {
        step,
        operation,
        replaced: replaced.to_vec(),
        replaced_dims: replaced.iter().map(|&j| model.subspaces[j].dims.dims().to_vec()).collect(),
        replaced_k: replaced.iter().map(|&j| model.subspaces[j].k).collect(),
        candidate_k: cand.map_or(Vec::new(), |c| c.local.subspaces.iter().map(|s| s.k).collect()),
        candidate_m: cand.map_or(Vec::new(), |c| c.local.subspaces.iter().map(|s| s.m()).collect()),
        evaluated: cand.map_or(Vec::new(), |c| c.evaluated.clone()),
        incumbent_local_cost: replaced.iter().map(|&j| cost.per_subspace[j].total()).sum(),
        candidate_local_cost: cand.map(|c| c.local_cost),
        local_gate: false,
        full_cost: None,
        incumbent_total: cost.total,
        accepted: false,
    }
}

struct Searcher<'a> {
    x: &'a DataMatrix,
    consts: MdlConstants,
    cfg: SearchConfig,
    current: FitOutcome,
    trace: Vec<TraceEntry>,
    accepted_costs: Vec<f64>,
    counter: u64,
}

impl Searcher<'_> {
    fn next_seed(&mut self) -> u64 {
        self.counter += 1;
        derive_seed(self.cfg.master_seed, self.counter)
    }

    fn local_data(&self, replaced: &[usize]) -> DMatrix<f64> {
        let model = &self.current.model;
        let dims: Vec<usize> = replaced
            .iter()
            .flat_map(|&j| model.subspaces[j].dims.dims().to_vec())
            .collect();
        let rotated = self.x.values() * model.rotation.matrix();
        rotated.select_columns(&dims)
    }

    /// Gates and, if both pass, installs a candidate. Returns whether it was accepted.
    fn try_candidate(&mut self, operation: Operation, replaced: &[usize], cand: Option<CandidateResult>) -> Result<bool> {
        let step = self.trace.len();
        let mut entry = trace_entry(step, operation, &self.current.model, &self.current.cost, replaced, cand.as_ref());
        let Some(cand) = cand else {
            self.trace.push(entry);
            return Ok(false);
        };
        entry.local_gate = improves(cand.local_cost, entry.incumbent_local_cost);
        if entry.local_gate {
            let seed = self.next_seed();
            match full_space_execution(
                self.x,
                &self.current.model,
                replaced,
                &cand.local,
                &self.consts,
                &self.cfg.fit_config(seed),
            ) {
                Ok(next) => {
                    entry.full_cost = Some(next.cost.total);
                    if improves(next.cost.total, self.current.cost.total) {
                        entry.accepted = true;
                        log::info!(
                            "accepted {operation:?} on {replaced:?}: {:.3} -> {:.3} bits, k = {:?}",
                            self.current.cost.total,
                            next.cost.total,
                            next.model.subspaces.iter().map(|s| s.k).collect::<Vec<_>>()
                        );
                        self.accepted_costs.push(next.cost.total);
                        self.current = next;
                    }
                }
                Err(e) => log::debug!("full-space execution failed: {e}"),
            }
        }
        self.trace.push(entry);
        Ok(self.trace.last().is_some_and(|e| e.accepted))
    }

    fn split_pass(&mut self) -> Result<bool> {
        let order = sort_spaces(&self.current.model, &self.current.cost);
        for j in order {
            let sub = self.current.model.subspaces[j].clone();
            let x_j = self.local_data(&[j]);
            let seed = self.next_seed();
            let (op, cand) = if sub.is_noise {
                (Operation::NoiseSplit, noise_space_split(&x_j, &self.consts, &self.cfg, seed)?)
            } else {
                let local = Subspace {
                    dims: Projection::range(0, sub.m()),
                    ..sub.clone()
                };
                (Operation::ClusterSplit, cluster_space_split(&x_j, &local, &self.consts, &self.cfg, seed)?)
            };
            if self.try_candidate(op, &[j], cand)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn merge_pass(&mut self) -> Result<bool> {
        let model = &self.current.model;
        let clusters: Vec<usize> = (0..model.j()).filter(|&j| !model.subspaces[j].is_noise).collect();
        for (ia, &a) in clusters.iter().enumerate() {
            for &b in &clusters[ia + 1..] {
                let sa = self.current.model.subspaces[a].clone();
                let sb = self.current.model.subspaces[b].clone();
                let x_ab = self.local_data(&[a, b]);
                let local_a = Subspace {
                    dims: Projection::range(0, sa.m()),
                    ..sa
                };
                let local_b = Subspace {
                    dims: Projection::range(local_a.m(), local_a.m() + sb.m()),
                    ..sb
                };
                let seed = self.next_seed();
                let cand = cluster_space_merge(&x_ab, &local_a, &local_b, &self.consts, &self.cfg, seed)?;
                if self.try_candidate(Operation::Merge, &[a, b], cand)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Runs the full search. The result is a function of the data and
/// `cfg.master_seed` only.
pub fn auto_search(x: &DataMatrix, geometry: &DataGeometry, cfg: &SearchConfig) -> Result<SearchResult> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    let consts = MdlConstants::from_geometry(geometry)?;
    let current = initial_model(x, &consts, cfg)?;
    let mut s = Searcher {
        x,
        consts,
        cfg: *cfg,
        accepted_costs: vec![current.cost.total],
        current,
        trace: Vec::new(),
        counter: 0,
    };
    loop {
        if s.split_pass()? {
            continue;
        }
        let mut merged = false;
        while s.merge_pass()? {
            merged = true;
        }
        if !merged {
            break;
        }
    }
    Ok(SearchResult {
        model: s.current.model,
        cost: s.current.cost,
        trace: s.trace,
        accepted_costs: s.accepted_costs,
    })
}
