//! Feature binning shared by the tree-based learners.
//!
//! Every column is quantized once per fit into at most 255 bins. Columns
//! with few distinct values (categorical codes, n-gram counts) get one bin
//! per value, so splits on them are exact. Each bin carries an
//! upper-inclusive boundary in the raw feature domain; a split at bin `b`
//! therefore corresponds exactly to the real-valued test `x <= edges[b]`.

use crate::featurize::FeatureMatrix;

pub const MAX_BINS: usize = 1024;

#[derive(Debug, Clone)]
pub struct BinnedColumn {
    /// Bin index per row.
    pub bins: Vec<u16>,
    /// Upper-inclusive boundary per bin, ascending.
    pub edges: Vec<f64>,
}

impl BinnedColumn {
    pub fn n_bins(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub cols: Vec<BinnedColumn>,
    pub n_rows: usize,
    /// Start offset of each column's bins in a flat histogram, plus the
    /// total number of bins at the end.
    pub hist_offsets: Vec<usize>,
}

impl BinnedMatrix {
    pub fn total_bins(&self) -> usize {
        *self.hist_offsets.last().unwrap()
    }

    pub fn from_matrix(x: &FeatureMatrix) -> Self {
        let n_rows = x.n_rows();
        let d = x.n_cols();
        let mut cols = Vec::with_capacity(d);
        let mut scratch: Vec<f64> = Vec::with_capacity(n_rows);
        for c in 0..d {
            scratch.clear();
            scratch.extend((0..n_rows).map(|r| x.get(r, c)));
            cols.push(bin_column(&scratch));
        }
        let mut hist_offsets = Vec::with_capacity(d + 1);
        let mut acc = 0usize;
        for col in &cols {
            hist_offsets.push(acc);
            acc += col.n_bins();
        }
        hist_offsets.push(acc);
        BinnedMatrix {
            cols,
            n_rows,
            hist_offsets,
        }
    }
}

fn bin_column(values: &[f64]) -> BinnedColumn {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let edges: Vec<f64> = if sorted.len() <= MAX_BINS {
        sorted
    } else {
        // Quantile cuts: pick evenly spaced distinct values.
        let mut edges = Vec::with_capacity(MAX_BINS);
        for k in 1..=MAX_BINS {
            let idx = k * sorted.len() / MAX_BINS - 1;
            edges.push(sorted[idx]);
        }
        edges.dedup();
        edges
    };
    let bins = values.iter().map(|&v| bin_of(&edges, v) as u16).collect();
    BinnedColumn { bins, edges }
}

/// First bin whose edge is >= v; values above every edge land in the last bin.
pub fn bin_of(edges: &[f64], v: f64) -> usize {
    let p = edges.partition_point(|&e| e < v);
    p.min(edges.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{ColumnKind, ColumnMeta, FeatureTag};

    fn matrix(cols: Vec<Vec<f64>>) -> FeatureMatrix {
        let n_rows = cols[0].len();
        let metas: Vec<ColumnMeta> = (0..cols.len())
            .map(|i| ColumnMeta {
                name: format!("c{i}"),
                kind: ColumnKind::Numeric,
                tag: FeatureTag::Basic,
            })
            .collect();
        let mut data = Vec::new();
        for r in 0..n_rows {
            for c in &cols {
                data.push(c[r]);
            }
        }
        FeatureMatrix::new(data, n_rows, metas)
    }

    #[test]
    fn distinct_values_get_own_bins() {
        let m = matrix(vec![vec![3.0, 1.0, 2.0, 1.0]]);
        let b = BinnedMatrix::from_matrix(&m);
        assert_eq!(b.cols[0].edges, vec![1.0, 2.0, 3.0]);
        assert_eq!(b.cols[0].bins, vec![2, 0, 1, 0]);
    }

    #[test]
    fn split_edge_matches_raw_threshold() {
        let m = matrix(vec![vec![5.0, 10.0, 20.0]]);
        let b = BinnedMatrix::from_matrix(&m);
        let edges = &b.cols[0].edges;
        // split at bin 1 means x <= 10.0
        assert_eq!(edges[1], 10.0);
        assert_eq!(bin_of(edges, 10.0), 1);
        assert_eq!(bin_of(edges, 10.1), 2);
        // unseen values below the minimum map to bin 0
        assert_eq!(bin_of(edges, -100.0), 0);
        assert_eq!(bin_of(edges, 100.0), 2);
    }

    #[test]
    fn many_distinct_values_quantized() {
        let vals: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = matrix(vec![vals]);
        let b = BinnedMatrix::from_matrix(&m);
        assert!(b.cols[0].n_bins() <= MAX_BINS);
        assert!(b.cols[0].n_bins() >= 1000);
    }
}
