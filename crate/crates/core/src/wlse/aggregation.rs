//! 0/1 matrices that map asset-level, step-level flows onto the footprint of
//! a data series.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::WlseError;
use crate::sparse::SparseMatrix;

/// Capability aggregation: row `m` has a 1 in every column of footprint `m`.
pub fn build_capability_aggregation(
    footprints: &[Vec<usize>],
    n_capabilities: usize,
) -> Result<SparseMatrix, WlseError> {
    let mut t = Vec::new();
    for (m, fp) in footprints.iter().enumerate() {
        if fp.is_empty() {
            return Err(WlseError::Measurement {
                id: format!("row{m}"),
                message: "empty capability footprint".into(),
            });
        }
        let set: BTreeSet<usize> = fp.iter().copied().collect();
        for c in set {
            if c >= n_capabilities {
                return Err(WlseError::Measurement {
                    id: format!("row{m}"),
                    message: format!("capability index {c} out of range"),
                });
            }
            t.push((m, c, 1.0));
        }
    }
    Ok(SparseMatrix::from_triplets(
        footprints.len(),
        n_capabilities,
        t,
    )?)
}

/// Temporal aggregation `K × K_D`: entry `(k, d)` is 1 when step `k` (1-based)
/// lies in bucket `d`.
pub fn build_temporal_aggregation(
    horizon: usize,
    buckets: &[Vec<usize>],
) -> Result<SparseMatrix, WlseError> {
    let mut seen = BTreeSet::new();
    let mut t = Vec::new();
    for (d, bucket) in buckets.iter().enumerate() {
        if bucket.is_empty() {
            return Err(WlseError::Bucket(format!("bucket {d} is empty")));
        }
        for &k in bucket {
            if k == 0 || k > horizon {
                return Err(WlseError::Bucket(format!(
                    "step {k} of bucket {d} is outside 1..={horizon}"
                )));
            }
            if !seen.insert(k) {
                return Err(WlseError::Bucket(format!(
                    "step {k} appears in more than one bucket"
                )));
            }
            t.push((k - 1, d, 1.0));
        }
    }
    Ok(SparseMatrix::from_triplets(horizon, buckets.len(), t)?)
}

/// `d_timeᵀ ⊗ d_cap`, acting on the column-major stacking of the
/// `|E_S| × K` flow matrix.
pub fn build_measurement_matrix(d_cap: &SparseMatrix, d_time: &SparseMatrix) -> SparseMatrix {
    SparseMatrix::kron(&d_time.transpose(), d_cap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationMatrices {
    pub d_cap: SparseMatrix,
    pub d_time: SparseMatrix,
    pub d_u: SparseMatrix,
}

impl AggregationMatrices {
    pub fn new(d_cap: SparseMatrix, d_time: SparseMatrix) -> Self {
        let d_u = build_measurement_matrix(&d_cap, &d_time);
        AggregationMatrices { d_cap, d_time, d_u }
    }
}

/// Samples at a resolution finer than the model step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineSeries {
    pub id: String,
    pub capabilities: Vec<String>,
    pub values: Vec<f64>,
    /// Number of samples falling in model steps `1, 2, …`.
    pub samples_per_step: Vec<usize>,
}

/// Sums fine samples within each model step, giving one bucket per step.
pub fn downsample_fine_data(
    series: &FineSeries,
    horizon: usize,
) -> Result<super::MeasurementSeries, WlseError> {
    let err = |message: String| WlseError::Measurement {
        id: series.id.clone(),
        message,
    };
    if series.samples_per_step.len() > horizon {
        return Err(err(format!(
            "{} steps of samples exceed the horizon {horizon}",
            series.samples_per_step.len()
        )));
    }
    if series.samples_per_step.contains(&0) {
        return Err(err("every step needs at least one sample".into()));
    }
    let expected: usize = series.samples_per_step.iter().sum();
    if series.values.len() != expected {
        return Err(err(format!(
            "{} samples do not fill whole steps ({expected} expected)",
            series.values.len()
        )));
    }
    let mut values = Vec::with_capacity(series.samples_per_step.len());
    let mut at = 0;
    for &n in &series.samples_per_step {
        values.push(series.values[at..at + n].iter().sum());
        at += n;
    }
    Ok(super::MeasurementSeries {
        id: series.id.clone(),
        capabilities: series.capabilities.clone(),
        buckets: (1..=values.len()).map(|k| vec![k]).collect(),
        values,
        weight: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annual_bucket_is_a_column_of_ones() {
        let d = build_temporal_aggregation(12, &[(1..=12).collect()]).unwrap();
        assert_eq!(d.shape(), (12, 1));
        assert_eq!(d.nnz(), 12);
        let monthly: Vec<Vec<usize>> = (1..=12).map(|k| vec![k]).collect();
        assert_eq!(
            build_temporal_aggregation(12, &monthly).unwrap(),
            SparseMatrix::identity(12)
        );
    }

    #[test]
    fn quarterly_buckets() {
        let q: Vec<Vec<usize>> = (0..4).map(|i| (3 * i + 1..=3 * i + 3).collect()).collect();
        let d = build_temporal_aggregation(12, &q).unwrap();
        for c in 0..4 {
            assert_eq!(d.column(c).count(), 3);
        }
    }

    #[test]
    fn overlapping_and_out_of_range_buckets_fail() {
        assert!(build_temporal_aggregation(3, &[vec![1, 2], vec![2]]).is_err());
        assert!(build_temporal_aggregation(3, &[vec![4]]).is_err());
        assert!(build_capability_aggregation(&[vec![]], 2).is_err());
    }

    #[test]
    fn annual_single_capability_row() {
        let d_cap = build_capability_aggregation(&[vec![1]], 3).unwrap();
        let d_time = build_temporal_aggregation(12, &[(1..=12).collect()]).unwrap();
        let d_u = build_measurement_matrix(&d_cap, &d_time);
        assert_eq!(d_u.shape(), (1, 36));
        let cols: Vec<usize> = d_u.iter().map(|(_, c, _)| c).collect();
        assert_eq!(cols, (0..12).map(|k| 3 * k + 1).collect::<Vec<_>>());
    }

    #[test]
    fn downsampling_sums_whole_steps() {
        let s = FineSeries {
            id: "d".into(),
            capabilities: vec!["w".into()],
            values: vec![1.0; 31 + 28],
            samples_per_step: vec![31, 28],
        };
        let m = downsample_fine_data(&s, 2).unwrap();
        assert_eq!(m.values, vec![31.0, 28.0]);
        assert_eq!(m.buckets, vec![vec![1], vec![2]]);
        let mut partial = s.clone();
        partial.values.pop();
        assert!(downsample_fine_data(&partial, 2).is_err());
        assert!(downsample_fine_data(&s, 1).is_err());
    }
}
