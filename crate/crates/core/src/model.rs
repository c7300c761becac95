//! The non-redundant clustering model: an orthogonal rotation of the feature
//! space plus a partition of the rotated dimensions into subspaces, each with
//! its own k-means style clustering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataGeometry, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::{orthogonality_error, orthonormalize};

/// Entrywise tolerance on `VᵀV = I`.
pub const ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub fn identity(d: usize) -> Self {
        Rotation(DMatrix::identity(d, d))
    }

    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.nrows() != v.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "rotation must be square, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        let err = orthogonality_error(&v);
        if err > ORTHO_TOL {
            return Err(Error::NotOrthogonal(err));
        }
        Ok(Rotation(v))
    }

    /// Accepts `v` as is when within tolerance, otherwise replaces it by the
    /// orthogonal factor of its QR decomposition.
    pub fn repaired(v: DMatrix<f64>) -> Self {
        if orthogonality_error(&v) > ORTHO_TOL {
            Rotation(orthonormalize(&v))
        } else {
            Rotation(v)
        }
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows())
            .map(|r| self.0.row(r).iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rotation rows must be square".into()));
        }
        Rotation::new(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
    }
}

/// Ordered list of rotated dimensions belonging to a subspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Projection(Vec<usize>);

impl Projection {
    pub fn new(dims: Vec<usize>, d: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("projection needs at least one dimension".into()));
        }
        let mut seen = vec![false; d];
        for &i in &dims {
            if i >= d {
                return Err(Error::DimensionMismatch(format!("dimension {i} >= d={d}")));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("dimension {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(Projection(dims))
    }

    pub fn range(start: usize, end: usize) -> Self {
        Projection((start..end).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub size: usize,
    /// Per-dimension population variance of the cluster's inliers.
    pub cov_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub dims: Projection,
    pub k: usize,
    /// k rows of m coordinates in the rotated space.
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub variance: f64,
    /// Sorted object indices.
    pub outliers: Vec<usize>,
    pub is_noise: bool,
}

impl Subspace {
    pub fn m(&self) -> usize {
        self.dims.m()
    }

    pub fn inlier_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![true; n];
        for &o in &self.outliers {
            mask[o] = false;
        }
        mask
    }

    pub fn n_inliers(&self) -> usize {
        self.assignments.len() - self.outliers.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrModel {
    pub rotation: Rotation,
    pub subspaces: Vec<Subspace>,
    pub outlier_detection: bool,
}

impl NrModel {
    pub fn j(&self) -> usize {
        self.subspaces.len()
    }

    pub fn d(&self) -> usize {
        self.rotation.d()
    }

    pub fn n(&self) -> usize {
        self.subspaces.first().map_or(0, |s| s.assignments.len())
    }

    pub fn noise_index(&self) -> Option<usize> {
        self.subspaces.iter().position(|s| s.is_noise)
    }

    /// Checks the structural invariants: partition of the dimensions, at most
    /// one noise space, k and label consistency.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let n = self.n();
        let mut seen = vec![false; d];
        let mut total = 0;
        for (j, s) in self.subspaces.iter().enumerate() {
            for &i in s.dims.dims() {
                if i >= d || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "subspace {j}: projections do not partition the dimensions"
                    )));
                }
                seen[i] = true;
            }
            total += s.m();
            if s.is_noise != (s.k == 1) {
                return Err(Error::InvalidArgument(format!(
                    "subspace {j}: noise spaces have k=1, cluster spaces k>=2"
                )));
            }
            if s.centers.len() != s.k || s.centers.iter().any(|c| c.len() != s.m()) {
                return Err(Error::DimensionMismatch(format!("subspace {j}: center shape")));
            }
            if s.assignments.len() != n || s.assignments.iter().any(|&l| l >= s.k) {
                return Err(Error::InvalidArgument(format!("subspace {j}: bad assignments")));
            }
            if s.outliers.iter().any(|&o| o >= n) {
                return Err(Error::InvalidArgument(format!("subspace {j}: bad outlier index")));
            }
        }
        if total != d {
            return Err(Error::InvalidArgument("projections do not cover all dimensions".into()));
        }
        if self.subspaces.iter().filter(|s| s.is_noise).count() > 1 {
            return Err(Error::InvalidArgument("more than one noise space".into()));
        }
        Ok(())
    }
}

/// Rows of `x · V` restricted to the projection's dimensions.
pub fn project(x: &DataMatrix, rotation: &Rotation, p: &Projection) -> Result<DMatrix<f64>> {
    if rotation.d() != x.d() {
        return Err(Error::DimensionMismatch(format!(
            "rotation is {}x{}, data has d={}",
            rotation.d(),
            rotation.d(),
            x.d()
        )));
    }
    if p.dims().iter().any(|&i| i >= x.d()) {
        return Err(Error::DimensionMismatch("projection index out of range".into()));
    }
    Ok(project_rotated(&(x.values() * rotation.matrix()), p))
}

pub(crate) fn project_rotated(rotated: &DMatrix<f64>, p: &Projection) -> DMatrix<f64> {
    rotated.select_columns(p.dims())
}

/// Embeds an m×m orthogonal matrix acting on `p_sub`'s dimensions into a d×d
/// rotation that is the identity elsewhere.
pub fn embed_rotation_full(v_sub: &DMatrix<f64>, p_sub: &Projection, d: usize) -> Result<Rotation> {
    let m = p_sub.m();
    if v_sub.nrows() != m || v_sub.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "sub-rotation is {}x{}, projection has {m} dims",
            v_sub.nrows(),
            v_sub.ncols()
        )));
    }
    if p_sub.dims().iter().any(|&i| i >= d) {
        return Err(Error::DimensionMismatch("projection index out of range".into()));
    }
    let err = orthogonality_error(v_sub);
    if err > ORTHO_TOL {
        return Err(Error::NotOrthogonal(err));
    }
    let mut full = DMatrix::identity(d, d);
    let dims = p_sub.dims();
    for (a_local, &a) in dims.iter().enumerate() {
        for (b_local, &b) in dims.iter().enumerate() {
            full[(a, b)] = v_sub[(a_local, b_local)];
        }
    }
    Ok(Rotation(full))
}

pub fn compose_rotation(v_old: &Rotation, v_full: &Rotation) -> Result<Rotation> {
    if v_old.d() != v_full.d() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose {}-d and {}-d rotations",
            v_old.d(),
            v_full.d()
        )));
    }
    Ok(Rotation::repaired(v_old.matrix() * v_full.matrix()))
}

/// Means of the rotated rows per label, in all d rotated coordinates.
pub fn lift_centers(
    x: &DataMatrix,
    rotation: &Rotation,
    assignments: &[usize],
    k: usize,
) -> Result<DMatrix<f64>> {
    if assignments.len() != x.n() {
        return Err(Error::DimensionMismatch("one label per object required".into()));
    }
    let rotated = x.values() * rotation.matrix();
    let mut sums = DMatrix::zeros(k, x.d());
    let mut counts = vec![0usize; k];
    for (i, &l) in assignments.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} >= k={k}")));
        }
        counts[l] += 1;
        for c in 0..x.d() {
            sums[(l, c)] += rotated[(i, c)];
        }
    }
    for (l, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            return Err(Error::EmptyCluster { cluster: l });
        }
        for c in 0..x.d() {
            sums[(l, c)] /= cnt as f64;
        }
    }
    Ok(sums)
}

/// JSON model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub max_dist: f64,
    pub outlier_detection: bool,
    /// Row-major.
    pub rotation: Vec<Vec<f64>>,
    pub subspaces: Vec<Subspace>,
}

impl ModelDocument {
    pub fn from_model(model: &NrModel, geometry: &DataGeometry) -> Self {
        ModelDocument {
            n: model.n(),
            d: model.d(),
            delta: geometry.delta,
            max_dist: geometry.max_dist,
            outlier_detection: model.outlier_detection,
            rotation: model.rotation.to_rows(),
            subspaces: model.subspaces.clone(),
        }
    }

    pub fn to_model(&self) -> Result<NrModel> {
        let model = NrModel {
            rotation: Rotation::from_rows(&self.rotation)?,
            subspaces: self.subspaces.clone(),
            outlier_detection: self.outlier_detection,
        };
        if model.d() != self.d || model.n() != self.n {
            return Err(Error::DimensionMismatch("document header disagrees with body".into()));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planar(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn random_data(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-5.0..5.0))).unwrap()
    }

    #[test]
    fn identity_projection_keeps_columns() {
        let x = random_data(6, 3, 1);
        let p = project(&x, &Rotation::identity(3), &Projection::range(0, 2)).unwrap();
        assert_eq!(p, x.values().columns(0, 2).into_owned());
    }

    #[test]
    fn quarter_turn_projection() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = Rotation::new(planar(std::f64::consts::FRAC_PI_2)).unwrap();
        let p = project(&x, &r, &Projection::new(vec![0], 2).unwrap()).unwrap();
        assert!(p[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn projections_partition_rotated_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_data(20, 5, 2);
        let r = Rotation::new(random_orthogonal(5, &mut rng)).unwrap();
        let full = x.values() * r.matrix();
        let a = Projection::new(vec![3, 0], 5).unwrap();
        let b = Projection::new(vec![1, 4, 2], 5).unwrap();
        let pa = project(&x, &r, &a).unwrap();
        let pb = project(&x, &r, &b).unwrap();
        for (p, proj) in [(&pa, &a), (&pb, &b)] {
            for (local, &g) in proj.dims().iter().enumerate() {
                for i in 0..20 {
                    assert!((p[(i, local)] - full[(i, g)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn project_rejects_mismatch() {
        let x = random_data(4, 3, 3);
        assert!(project(&x, &Rotation::identity(2), &Projection::range(0, 1)).is_err());
    }

    #[test]
    fn embed_identity_and_planar() {
        let p = Projection::new(vec![1, 3], 4).unwrap();
        let e = embed_rotation_full(&DMatrix::identity(2, 2), &p, 4).unwrap();
        assert_eq!(e.matrix(), &DMatrix::<f64>::identity(4, 4));

        let e = embed_rotation_full(&planar(0.7), &p, 4).unwrap();
        assert!(orthogonality_error(e.matrix()) < 1e-12);
        let m = e.matrix();
        for fixed in [0usize, 2] {
            for r in 0..4 {
                let want = if r == fixed { 1.0 } else { 0.0 };
                assert_eq!(m[(r, fixed)], want);
                assert_eq!(m[(fixed, r)], want);
            }
        }
        assert!((m[(1, 1)] - 0.7f64.cos()).abs() < 1e-15);
        assert!((m[(3, 1)] - 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn embed_rejects_non_orthogonal() {
        let p = Projection::new(vec![0, 1], 3).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(embed_rotation_full(&bad, &p, 3), Err(Error::NotOrthogonal(_))));
    }

    #[test]
    fn embed_random_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let v = random_orthogonal(3, &mut rng);
            let mut dims: Vec<usize> = (0..7).collect();
            for i in (1..7).rev() {
                dims.swap(i, rng.random_range(0..=i));
            }
            dims.truncate(3);
            let e = embed_rotation_full(&v, &Projection::new(dims, 7).unwrap(), 7).unwrap();
            let g = e.matrix() * e.matrix().transpose() - DMatrix::<f64>::identity(7, 7);
            assert!(g.abs().max() < 1e-8);
        }
    }

    #[test]
    fn composition_adds_angles() {
        let a = Rotation::new(planar(0.3)).unwrap();
        let b = Rotation::new(planar(1.1)).unwrap();
        let c = compose_rotation(&a, &b).unwrap();
        assert!((c.matrix() - planar(1.4)).abs().max() < 1e-12);
        let id = compose_rotation(&a, &Rotation::identity(2)).unwrap();
        assert!((id.matrix() - a.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn long_composition_chain_stays_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = Rotation::identity(6);
        for _ in 0..1000 {
            let step = Rotation::new(random_orthogonal(6, &mut rng)).unwrap();
            v = compose_rotation(&v, &step).unwrap();
        }
        assert!(orthogonality_error(v.matrix()) < 1e-6);
    }

    #[test]
    fn lift_centers_cases() {
        let x = random_data(10, 3, 5);
        let r = Rotation::identity(3);
        let one = lift_centers(&x, &r, &[0; 10], 1).unwrap();
        let mean = x.values().row_mean();
        for c in 0..3 {
            assert!((one[(0, c)] - mean[c]).abs() < 1e-12);
        }

        let two = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = lift_centers(&two, &Rotation::identity(2), &[1, 0], 2).unwrap();
        assert_eq!(c.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert!(matches!(
            lift_centers(&two, &Rotation::identity(2), &[0, 0], 2),
            Err(Error::EmptyCluster { cluster: 1 })
        ));
    }

    #[test]
    fn lifted_centers_project_to_subspace_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_data(40, 4, 6);
        let r = Rotation::new(random_orthogonal(4, &mut rng)).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let lifted = lift_centers(&x, &r, &labels, 3).unwrap();
        let p = Projection::new(vec![2, 0], 4).unwrap();
        let xj = project(&x, &r, &p).unwrap();
        for l in 0..3 {
            for (local, &g) in p.dims().iter().enumerate() {
                let members: Vec<f64> = (0..40).filter(|i| labels[*i] == l).map(|i| xj[(i, local)]).collect();
                let direct = members.iter().sum::<f64>() / members.len() as f64;
                assert!((direct - lifted[(l, g)]).abs() < 1e-10);
            }
        }
    }
}
