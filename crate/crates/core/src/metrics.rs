//! Agreement between clusterings: NMI, pair-counting F1, and the per-subspace
//! best-match score used to compare several label sets at once.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NrModel;

/// One label vector per column, all of length N.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    columns: Vec<Vec<usize>>,
}

impl LabelMatrix {
    /// Columns are canonicalized to contiguous labels in first-seen order.
    pub fn new(columns: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::InvalidArgument("label matrix needs at least one column".into()));
        };
        let n = first.len();
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("label columns must share a nonzero length".into()));
        }
        Ok(Self {
            columns: columns.iter().map(|c| canonicalize(c)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn j(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[usize] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Integer labels, one column per label set. A first line that does not
    /// parse is treated as a header.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<usize>, _> =
                line.split(',').map(|c| c.trim().parse::<usize>()).collect();
            match parsed {
                Ok(r) => {
                    if rows.first().is_some_and(|f| f.len() != r.len()) {
                        return Err(Error::MalformedRow {
                            row: idx + 1,
                            msg: "inconsistent label column count".into(),
                        });
                    }
                    rows.push(r);
                }
                Err(_) if idx == 0 => continue,
                Err(e) => {
                    return Err(Error::MalformedRow {
                        row: idx + 1,
                        msg: format!("label is not a nonnegative integer: {e}"),
                    })
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("no label rows".into()));
        }
        let j = rows[0].len();
        Self::new((0..j).map(|c| rows.iter().map(|r| r[c]).collect()).collect())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nmi,
    F1,
}

impl Metric {
    pub fn score(self, gt: &[usize], pred: &[usize]) -> f64 {
        match self {
            Metric::Nmi => nmi(gt, pred),
            Metric::F1 => pair_f1(pred, gt),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nmi => "nmi",
            Metric::F1 => "f1",
        }
    }

    /// Normalization or counting variant, reported next to scores.
    pub fn variant(self) -> &'static str {
        match self {
            Metric::Nmi => "arithmetic_mean_entropy",
            Metric::F1 => "pair_counting",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nmi" => Ok(Metric::Nmi),
            "f1" => Ok(Metric::F1),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

fn contingency(a: &[usize], b: &[usize]) -> (HashMap<(usize, usize), usize>, HashMap<usize, usize>, HashMap<usize, usize>) {
    let mut joint = HashMap::new();
    let mut ca = HashMap::new();
    let mut cb = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    (joint, ca, cb)
}

fn entropy(counts: &HashMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    assert!(!a.is_empty(), "label vectors are empty");
    let n = a.len() as f64;
    let (joint, ca, cb) = contingency(a, b);
    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    if ca.len() == 1 || cb.len() == 1 {
        // Zero-entropy side: only an identical single-class partition agrees.
        return if ca.len() == 1 && cb.len() == 1 { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        let px = ca[&x] as f64 / n;
        let py = cb[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    (mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0)
}

fn pairs(c: usize) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Pair-counting F1 with `pred` as the prediction: precision is the share of
/// predicted same-cluster pairs that are also together in `gt`.
pub fn pair_f1(pred: &[usize], gt: &[usize]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "label vectors differ in length");
    let (joint, cp, cg) = contingency(pred, gt);
    let agree: f64 = joint.values().map(|&c| pairs(c)).sum();
    let pred_pairs: f64 = cp.values().map(|&c| pairs(c)).sum();
    let gt_pairs: f64 = cg.values().map(|&c| pairs(c)).sum();
    if pred_pairs == 0.0 || gt_pairs == 0.0 || agree == 0.0 {
        return 0.0;
    }
    let p = agree / pred_pairs;
    let r = agree / gt_pairs;
    2.0 * p * r / (p + r)
}

/// For every ground-truth column, the best score over all predicted columns.
/// Label columns of the cluster spaces, with each space's outliers in an extra
/// class `k`. Errors if the model has no cluster space.
pub fn subspace_labels(model: &NrModel) -> Result<LabelMatrix> {
    let columns = model
        .subspaces
        .iter()
        .filter(|s| !s.is_noise)
        .map(|s| {
            let mut col = s.assignments.clone();
            for &o in &s.outliers {
                col[o] = s.k;
            }
            col
        })
        .collect();
    LabelMatrix::new(columns)
}

pub fn best_match_score(gt: &LabelMatrix, pred: &LabelMatrix, metric: Metric) -> Result<Vec<f64>> {
    if gt.n() != pred.n() {
        return Err(Error::DimensionMismatch(format!(
            "gt has {} objects, prediction {}",
            gt.n(),
            pred.n()
        )));
    }
    Ok(gt
        .columns()
        .iter()
        .map(|g| {
            pred.columns()
                .iter()
                .map(|p| metric.score(g, p))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

pub fn averaged_score(gt: &LabelMatrix, pred: &LabelMatrix, metric: Metric) -> Result<f64> {
    let s = best_match_score(gt, pred, metric)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_f1(pred: &[usize], gt: &[usize]) -> f64 {
        let (mut tp, mut pp, mut gp) = (0.0, 0.0, 0.0);
        for i in 0..pred.len() {
            for j in (i + 1)..pred.len() {
                let sp = pred[i] == pred[j];
                let sg = gt[i] == gt[j];
                pp += sp as u8 as f64;
                gp += sg as u8 as f64;
                tp += (sp && sg) as u8 as f64;
            }
        }
        if pp == 0.0 || gp == 0.0 || tp == 0.0 {
            return 0.0;
        }
        let (p, r) = (tp / pp, tp / gp);
        2.0 * p * r / (p + r)
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]), 0.0);
        assert_eq!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]), 0.0);
    }

    #[test]
    fn nmi_independent_labelings_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        assert!(nmi(&a, &b) < 0.05);
    }

    #[test]
    fn nmi_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let x = nmi(&a, &b);
            assert!((0.0..=1.0).contains(&x));
            assert!((x - nmi(&b, &a)).abs() < 1e-12);
            let perm: Vec<usize> = a.iter().map(|l| 3 - l).collect();
            assert!((x - nmi(&perm, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_examples_and_oracle() {
        assert_eq!(pair_f1(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        assert!((pair_f1(&[0, 0, 0, 0], &[0, 0, 1, 1]) - 0.5).abs() < 1e-12);
        assert_eq!(pair_f1(&[0, 1, 2, 3], &[0, 0, 1, 1]), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            assert!((pair_f1(&a, &b) - brute_f1(&a, &b)).abs() < 1e-12);
            assert_eq!(pair_f1(&a, &a) == 1.0, a.iter().any(|l| a.iter().filter(|m| *m == l).count() > 1));
        }
    }

    #[test]
    fn best_match_and_average() {
        let gt = LabelMatrix::new(vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]]).unwrap();
        let pred = LabelMatrix::new(vec![vec![5, 2, 5, 2], vec![1, 1, 0, 0]]).unwrap();
        assert_eq!(best_match_score(&gt, &pred, Metric::Nmi).unwrap(), vec![1.0, 1.0]);
        let single = LabelMatrix::new(vec![vec![0, 0, 1, 1]]).unwrap();
        let s = best_match_score(&gt, &single, Metric::Nmi).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert_eq!(averaged_score(&gt, &single, Metric::Nmi).unwrap(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let cols = |rng: &mut ChaCha8Rng, j: usize| -> Vec<Vec<usize>> {
                (0..j).map(|_| (0..15).map(|_| rng.random_range(0..3)).collect()).collect()
            };
            let g = LabelMatrix::new(cols(&mut rng, 3)).unwrap();
            let p = LabelMatrix::new(cols(&mut rng, 2)).unwrap();
            let s = best_match_score(&g, &p, Metric::F1).unwrap();
            for (j, sj) in s.iter().enumerate() {
                let table: Vec<f64> = (0..2).map(|i| pair_f1(p.column(i), g.column(j))).collect();
                assert_eq!(*sj, table.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            let mut rev = p.columns().to_vec();
            rev.reverse();
            assert_eq!(best_match_score(&g, &LabelMatrix::new(rev).unwrap(), Metric::F1).unwrap(), s);
        }
    }

    #[test]
    fn csv_round_trip() {
        let m = LabelMatrix::new(vec![vec![0, 1, 1], vec![2, 2, 0]]).unwrap();
        let back = LabelMatrix::parse_csv(&format!("s0,s1\n{}", m.to_csv())).unwrap();
        assert_eq!(back, m);
        assert!(LabelMatrix::parse_csv("0,1\n1\n").is_err());
    }
}
