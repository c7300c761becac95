//! Synthetic ground-truth data: independent Gaussian mixtures per subspace,
//! optional isotropic noise dimensions, an optional random rotation, and
//! uniform outliers injected one subspace at a time.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::metrics::LabelMatrix;
use crate::model::{NrModel, Projection, Rotation, Subspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub m: usize,
    pub k: usize,
    pub center_spread: f64,
    pub cluster_std: f64,
    /// Minimum distance between any two centers; centers are redrawn until it holds.
    #[serde(default)]
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub subspaces: Vec<SubspaceSpec>,
    pub noise_dims: usize,
    pub noise_std: f64,
    #[serde(default)]
    pub outliers_per_subspace: usize,
    pub rotate: bool,
    pub seed: u64,
}

impl SynthSpec {
    /// Three 2-d subspaces with 4, 3 and 2 clusters plus noise dimensions.
    pub fn syn3(n: usize, noise_dims: usize, seed: u64) -> Self {
        let sub = |k| SubspaceSpec {
            m: 2,
            k,
            center_spread: 40.0,
            cluster_std: 1.0,
            min_separation: 8.0,
        };
        SynthSpec {
            n,
            subspaces: vec![sub(4), sub(3), sub(2)],
            noise_dims,
            noise_std: 1.0,
            outliers_per_subspace: 0,
            rotate: true,
            seed,
        }
    }

    pub fn d(&self) -> usize {
        self.subspaces.iter().map(|s| s.m).sum::<usize>() + self.noise_dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.subspaces.is_empty() && self.noise_dims == 0 {
            return Err(Error::InvalidArgument("spec has no dimensions".into()));
        }
        for (j, s) in self.subspaces.iter().enumerate() {
            if s.m == 0 || s.k == 0 || s.k > self.n {
                return Err(Error::InvalidArgument(format!("subspace {j}: need m >= 1 and 1 <= k <= n")));
            }
            if !(s.cluster_std > 0.0) || !(s.center_spread >= 0.0) {
                return Err(Error::InvalidArgument(format!("subspace {j}: std must be > 0")));
            }
            // Rejection sampling needs room: k disjoint balls must fit in the cube.
            if s.k > 1 && s.min_separation > 0.0 {
                let room = s.center_spread / s.min_separation + 1.0;
                if room.powi(s.m as i32) < 2.0 * s.k as f64 {
                    return Err(Error::InvalidArgument(format!(
                        "subspace {j}: min_separation too large for center_spread"
                    )));
                }
            }
        }
        if self.noise_dims > 0 && !(self.noise_std > 0.0) {
            return Err(Error::InvalidArgument("noise_std must be > 0".into()));
        }
        if self.n < 2 {
            return Err(Error::TooFewObjects(self.n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub data: DataMatrix,
    /// One column per cluster subspace.
    pub labels: LabelMatrix,
    pub model: NrModel,
    /// Injected outlier rows per cluster subspace.
    pub outliers: Vec<Vec<usize>>,
}

struct Layout {
    centers: Vec<Vec<Vec<f64>>>,
    offsets: Vec<usize>,
}

fn sample_centers(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Layout {
    let mut offsets = Vec::new();
    let mut at = 0;
    let centers = spec
        .subspaces
        .iter()
        .map(|s| {
            offsets.push(at);
            at += s.m;
            let mut draw = || -> Vec<f64> { (0..s.m).map(|_| rng.random::<f64>() * s.center_spread).collect() };
            let min2 = s.min_separation * s.min_separation;
            let mut centers: Vec<Vec<f64>> = Vec::with_capacity(s.k);
            let mut tries = 0usize;
            while centers.len() < s.k {
                let c = draw();
                tries += 1;
                let far = centers
                    .iter()
                    .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min2);
                if far {
                    centers.push(c);
                } else if tries.is_multiple_of(1000) {
                    // Start over when earlier centers block the remaining room.
                    centers.clear();
                }
            }
            centers
        })
        .collect();
    Layout { centers, offsets }
}

/// Row of one object in unrotated coordinates.
fn sample_row(spec: &SynthSpec, layout: &Layout, labels: &[usize], rng: &mut ChaCha8Rng, row: &mut [f64]) {
    for (j, s) in spec.subspaces.iter().enumerate() {
        let normal = Normal::new(0.0, s.cluster_std).expect("std > 0");
        for c in 0..s.m {
            row[layout.offsets[j] + c] = layout.centers[j][labels[j]][c] + normal.sample(rng);
        }
    }
    if spec.noise_dims > 0 {
        let normal = Normal::new(0.0, spec.noise_std).expect("std > 0");
        let start = spec.d() - spec.noise_dims;
        for v in &mut row[start..] {
            *v = normal.sample(rng);
        }
    }
}

/// Generates the dataset. Labels are assigned round-robin so clusters are
/// balanced, and subspace `j` uses the label `(i / Π_{l<j} k_l) mod k_j` so the
/// label sets are independent.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = sample_centers(spec, &mut rng);
    let d = spec.d();
    let n = spec.n;
    let mut stride = 1;
    let label_cols: Vec<Vec<usize>> = spec
        .subspaces
        .iter()
        .map(|s| {
            let col = (0..n).map(|i| (i / stride) % s.k).collect();
            stride *= s.k;
            col
        })
        .collect();
    let mut raw = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        let labels: Vec<usize> = label_cols.iter().map(|c| c[i]).collect();
        sample_row(spec, &layout, &labels, &mut rng, &mut row);
        for c in 0..d {
            raw[(i, c)] = row[c];
        }
    }
    // The data are X = raw·Vᵀ so that X·V recovers the axis-aligned layout.
    let v = if spec.rotate {
        Rotation::repaired(random_orthogonal(d, &mut rng))
    } else {
        Rotation::identity(d)
    };
    let x = &raw * v.matrix().transpose();
    let model = ground_truth_model(spec, &layout, v, &label_cols, &vec![Vec::new(); spec.subspaces.len()]);
    let labels = if label_cols.is_empty() {
        LabelMatrix::new(vec![vec![0; n]])?
    } else {
        LabelMatrix::new(label_cols)?
    };
    let outliers = vec![Vec::new(); spec.subspaces.len()];
    let mut out = SynthData {
        data: DataMatrix::new(x)?,
        labels,
        model,
        outliers,
    };
    if spec.outliers_per_subspace > 0 {
        out = inject_outliers(spec, &out, spec.outliers_per_subspace, spec.seed ^ 0x5EED_0071_1E85)?;
    }
    Ok(out)
}

fn ground_truth_model(
    spec: &SynthSpec,
    layout: &Layout,
    rotation: Rotation,
    labels: &[Vec<usize>],
    outliers: &[Vec<usize>],
) -> NrModel {
    let n = labels.first().map_or(spec.n, Vec::len);
    let mut subspaces: Vec<Subspace> = spec
        .subspaces
        .iter()
        .enumerate()
        .map(|(j, s)| Subspace {
            dims: Projection::range(layout.offsets[j], layout.offsets[j] + s.m),
            k: s.k,
            centers: layout.centers[j].clone(),
            assignments: labels[j].clone(),
            variance: s.cluster_std * s.cluster_std,
            outliers: outliers[j].clone(),
            is_noise: false,
        })
        .collect();
    if spec.noise_dims > 0 {
        let d = spec.d();
        subspaces.push(Subspace {
            dims: Projection::range(d - spec.noise_dims, d),
            k: 1,
            centers: vec![vec![0.0; spec.noise_dims]],
            assignments: vec![0; n],
            variance: spec.noise_std * spec.noise_std,
            outliers: Vec::new(),
            is_noise: true,
        });
    }
    NrModel {
        rotation,
        subspaces,
        outlier_detection: spec.outliers_per_subspace > 0,
    }
}

/// Appends `count` objects per cluster subspace. In its target subspace an
/// injected object is uniform over the bounding cube of that subspace (side
/// equal to the widest coordinate range) inflated 1.5× around its middle; elsewhere it is an ordinary cluster member with a
/// round-robin label.
pub fn inject_outliers(spec: &SynthSpec, base: &SynthData, count: usize, seed: u64) -> Result<SynthData> {
    if count == 0 {
        return Ok(base.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = base.model.rotation.clone();
    let raw = base.data.values() * v.matrix();
    let n0 = raw.nrows();
    let d = raw.ncols();
    let layout = Layout {
        centers: base
            .model
            .subspaces
            .iter()
            .filter(|s| !s.is_noise)
            .map(|s| s.centers.clone())
            .collect(),
        offsets: base
            .model
            .subspaces
            .iter()
            .filter(|s| !s.is_noise)
            .map(|s| s.dims.dims()[0])
            .collect(),
    };
    let j_c = spec.subspaces.len();
    let total = n0 + count * j_c;
    let mut rows = DMatrix::zeros(total, d);
    rows.rows_mut(0, n0).copy_from(&raw);
    let mut labels: Vec<Vec<usize>> = (0..j_c).map(|j| base.labels.column(j).to_vec()).collect();
    let mut outliers = base.outliers.clone();
    let mut row = vec![0.0; d];
    let mut at = n0;
    for target in 0..j_c {
        let s = &spec.subspaces[target];
        let off = layout.offsets[target];
        let ranges: Vec<(f64, f64)> = (0..s.m)
            .map(|c| {
                let col = raw.column(off + c);
                (col.min(), col.max())
            })
            .collect();
        let half = 0.75 * ranges.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        let bounds: Vec<(f64, f64)> = ranges
            .iter()
            .map(|(lo, hi)| {
                let mid = (lo + hi) / 2.0;
                (mid - half, mid + half)
            })
            .collect();
        for r in 0..count {
            let lab: Vec<usize> = spec.subspaces.iter().map(|t| r % t.k).collect();
            sample_row(spec, &layout, &lab, &mut rng, &mut row);
            for (c, &(lo, hi)) in bounds.iter().enumerate() {
                row[off + c] = rng.random_range(lo..hi);
            }
            for c in 0..d {
                rows[(at, c)] = row[c];
            }
            for (j, col) in labels.iter_mut().enumerate() {
                col.push(lab[j]);
            }
            outliers[target].push(at);
            at += 1;
        }
    }
    let x = &rows * v.matrix().transpose();
    let model = ground_truth_model(spec, &layout, v, &labels, &outliers);
    let model = NrModel {
        outlier_detection: true,
        ..model
    };
    Ok(SynthData {
        data: DataMatrix::new(x)?,
        labels: LabelMatrix::new(labels)?,
        model,
        outliers,
    })
}
