//! Brute-force k-nearest-neighbors over the raw feature matrix.
//!
//! Distances are exact squared Euclidean sums in input order, so an
//! exhaustive oracle reproduces predictions bit for bit. Ties in distance
//! break by training-row index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurize::FeatureMatrix;
use crate::types::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeighting {
    Uniform,
    /// Inverse-distance weights; zero-distance neighbors take over alone.
    Distance,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub weighting: KnnWeighting,
}

impl KnnParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    data: Vec<f64>,
    n_cols: usize,
    labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(params: KnnParams, x: &FeatureMatrix, y: &[Label]) -> KnnModel {
        KnnModel {
            params,
            data: x.data().to_vec(),
            n_cols: x.n_cols(),
            labels: y.iter().map(|l| l.as_f64() as u8).collect(),
        }
    }

    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .into_par_iter()
            .map(|r| self.predict_row(x.row(r)))
            .collect()
    }

    fn predict_row(&self, query: &[f64]) -> f64 {
        let n = self.n_train();
        let k = self.params.k.min(n);
        let mut dists: Vec<(f64, u32)> = (0..n)
            .map(|i| {
                let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
                (squared_distance(row, query), i as u32)
            })
            .collect();
        let cmp = |a: &(f64, u32), b: &(f64, u32)| {
            a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
        };
        if k < n {
            dists.select_nth_unstable_by(k - 1, cmp);
            dists.truncate(k);
        }
        dists.sort_unstable_by(cmp);
        knn_vote(&dists, &self.labels, self.params.weighting)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the sum order is fixed and the loop vectorizes.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            let d = a[i * 4 + j] - b[i * 4 + j];
            acc[j] += d * d;
        }
    }
    let mut rest = 0.0;
    for i in chunks * 4..a.len() {
        let d = a[i] - b[i];
        rest += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Fake-probability vote over the selected neighbors (ascending distance).
pub(crate) fn knn_vote(neighbors: &[(f64, u32)], labels: &[u8], weighting: KnnWeighting) -> f64 {
    match weighting {
        KnnWeighting::Uniform => {
            let fake: usize = neighbors
                .iter()
                .map(|&(_, i)| labels[i as usize] as usize)
                .sum();
            fake as f64 / neighbors.len() as f64
        }
        KnnWeighting::Distance => {
            let zero: Vec<&(f64, u32)> = neighbors.iter().filter(|(d, _)| *d == 0.0).collect();
            if !zero.is_empty() {
                let fake: usize = zero.iter().map(|&&(_, i)| labels[i as usize] as usize).sum();
                return fake as f64 / zero.len() as f64;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(d, i) in neighbors {
                let w = 1.0 / d.sqrt();
                num += w * labels[i as usize] as f64;
                den += w;
            }
            num / den
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{ColumnKind, ColumnMeta, FeatureTag};

    fn matrix_1d(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(
            values.to_vec(),
            values.len(),
            vec![ColumnMeta {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            }],
        )
    }

    #[test]
    fn nearest_point_wins_with_k1() {
        let x = matrix_1d(&[0.0, 10.0]);
        let y = [Label::Real, Label::Fake];
        let m = KnnModel::fit(
            KnnParams {
                k: 1,
                weighting: KnnWeighting::Uniform,
            },
            &x,
            &y,
        );
        let p = m.predict_proba(&matrix_1d(&[1.0]));
        assert_eq!(Label::from_p_fake(p[0]), Label::Real);
    }

    #[test]
    fn zero_distance_dominates_inverse_weighting() {
        let x = matrix_1d(&[0.0, 0.001, 0.002, 5.0]);
        let y = [Label::Fake, Label::Real, Label::Real, Label::Real];
        let m = KnnModel::fit(
            KnnParams {
                k: 3,
                weighting: KnnWeighting::Distance,
            },
            &x,
            &y,
        );
        let p = m.predict_proba(&matrix_1d(&[0.0]));
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn uniform_vote_fractions() {
        let x = matrix_1d(&[0.0, 1.0, 2.0, 100.0]);
        let y = [Label::Fake, Label::Fake, Label::Real, Label::Real];
        let m = KnnModel::fit(
            KnnParams {
                k: 3,
                weighting: KnnWeighting::Uniform,
            },
            &x,
            &y,
        );
        let p = m.predict_proba(&matrix_1d(&[0.5]));
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_ties_break_by_index() {
        // Neighbors at identical distances: the lower training index is
        // selected first.
        let x = matrix_1d(&[-1.0, 1.0, -1.0]);
        let y = [Label::Fake, Label::Real, Label::Real];
        let m = KnnModel::fit(
            KnnParams {
                k: 1,
                weighting: KnnWeighting::Uniform,
            },
            &x,
            &y,
        );
        let p = m.predict_proba(&matrix_1d(&[0.0]));
        assert_eq!(p[0], 1.0); // index 0 (fake) wins the tie
    }

    #[test]
    fn k_clamps_to_train_size() {
        let x = matrix_1d(&[0.0, 1.0]);
        let y = [Label::Fake, Label::Real];
        let m = KnnModel::fit(
            KnnParams {
                k: 5,
                weighting: KnnWeighting::Uniform,
            },
            &x,
            &y,
        );
        let p = m.predict_proba(&matrix_1d(&[0.4]));
        assert_eq!(p[0], 0.5);
    }
}
