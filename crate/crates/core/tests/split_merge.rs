use nrmdl::dataset::{DataGeometry, MaxDistMode};
use nrmdl::mdl::MdlConstants;
use nrmdl::model::{Projection, Subspace};
use nrmdl::search::{cluster_space_merge, cluster_space_split, merge_valid, split_valid, SearchConfig};
use nrmdl::synth::{generate, SubspaceSpec, SynthSpec};

fn product_spec(seed: u64) -> SynthSpec {
    let sub = |k| SubspaceSpec { m: 2, k, center_spread: 40.0, cluster_std: 1.0, min_separation: 8.0 };
    SynthSpec {
        n: 1200,
        subspaces: vec![sub(4), sub(3)],
        noise_dims: 0,
        noise_std: 1.0,
        outliers_per_subspace: 0,
        rotate: true,
        seed,
    }
}

fn cfg() -> SearchConfig {
    SearchConfig { reps: 8, outlier_detection: false, parallel: false, ..Default::default() }
}

#[test]
fn product_space_splits_into_its_factors() {
    let mut good = 0;
    for seed in 0..10 {
        let s = generate(&product_spec(100 + seed)).unwrap();
        let x = s.data.values() * s.model.rotation.matrix();
        let consts = MdlConstants::from_geometry(&DataGeometry::compute(&s.data, MaxDistMode::Exact).unwrap()).unwrap();
        let (a, b) = (s.labels.column(0), s.labels.column(1));
        let assignments: Vec<usize> = a.iter().zip(b).map(|(&i, &j)| i * 3 + j).collect();
        let mut centers = vec![vec![0.0; 4]; 12];
        let mut counts = [0usize; 12];
        for (r, &l) in assignments.iter().enumerate() {
            counts[l] += 1;
            for c in 0..4 {
                centers[l][c] += x[(r, c)];
            }
        }
        for (c, &n) in centers.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
        let sub = Subspace {
            dims: Projection::range(0, 4),
            k: 12,
            centers,
            assignments,
            variance: 1.0,
            outliers: Vec::new(),
            is_noise: false,
        };
        let cand = cluster_space_split(&x, &sub, &consts, &cfg(), seed).unwrap().unwrap();
        assert!(cand.evaluated.iter().all(|ks| split_valid(12, ks[0], ks[1])));
        let mut ks: Vec<usize> = cand.local.subspaces.iter().map(|s| s.k).collect();
        ks.sort_unstable();
        good += (ks == [3, 4]) as usize;
    }
    assert!(good >= 8, "{good}/10");
}

#[test]
fn merge_of_independent_factors_stays_in_range() {
    let s = generate(&product_spec(7)).unwrap();
    let x = s.data.values() * s.model.rotation.matrix();
    let consts = MdlConstants::from_geometry(&DataGeometry::compute(&s.data, MaxDistMode::Exact).unwrap()).unwrap();
    let local = |j: usize, dims: std::ops::Range<usize>| Subspace {
        dims: Projection::range(0, dims.len()),
        ..s.model.subspaces[j].clone()
    };
    let (a, b) = (local(0, 0..2), local(1, 2..4));
    let cand = cluster_space_merge(&x, &a, &b, &consts, &cfg(), 1).unwrap().unwrap();
    assert!(!cand.evaluated.is_empty());
    assert!(cand.evaluated.iter().all(|k| merge_valid(4, 3, k[0])));
    assert_eq!(cand.evaluated[0], vec![12]);
}
