use serde::{Deserialize, Serialize};

use super::{MeasurementSeries, WlseError};

/// How the flow penalty `α` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum AlphaRule {
    /// `0.01 · min over series of (max over buckets of value²)`.
    #[default]
    FromData,
    /// `0.01 · min over series of the error weight`, keeping the flow penalty
    /// two orders of magnitude below the smallest error weight.
    ErrorScaled,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightingScheme {
    /// One weight per series, shared by all of its buckets.
    pub f_error: Vec<f64>,
    pub alpha: f64,
}

fn default_weight(s: &MeasurementSeries) -> f64 {
    let max = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == 0.0 {
        1.0
    } else {
        1.0 / (max * max)
    }
}

pub fn compute_weights(
    measurements: &[MeasurementSeries],
    rule: AlphaRule,
) -> Result<WeightingScheme, WlseError> {
    if measurements.is_empty() {
        return Err(WlseError::NoMeasurements);
    }
    let f_error: Vec<f64> = measurements
        .iter()
        .map(|s| s.weight.unwrap_or_else(|| default_weight(s)))
        .collect();
    let alpha = match rule {
        AlphaRule::FromData => {
            let min = measurements
                .iter()
                .map(|s| s.values.iter().map(|v| v * v).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            0.01 * min
        }
        AlphaRule::ErrorScaled => 0.01 * f_error.iter().copied().fold(f64::INFINITY, f64::min),
        AlphaRule::Fixed(a) => a,
    };
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(WlseError::Alpha(alpha));
    }
    Ok(WeightingScheme { f_error, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> MeasurementSeries {
        MeasurementSeries {
            id: "s".into(),
            capabilities: vec!["c".into()],
            buckets: (1..=values.len()).map(|k| vec![k]).collect(),
            values,
            weight: None,
        }
    }

    #[test]
    fn single_series() {
        let w = compute_weights(&[series(vec![2.0, 4.0])], AlphaRule::FromData).unwrap();
        assert_eq!(w.f_error, vec![1.0 / 16.0]);
        assert!((w.alpha - 0.16).abs() < 1e-15);
    }

    #[test]
    fn two_series() {
        let w = compute_weights(
            &[series(vec![10.0, 3.0]), series(vec![100.0])],
            AlphaRule::FromData,
        )
        .unwrap();
        assert_eq!(w.f_error, vec![1.0 / 100.0, 1.0 / 10000.0]);
        assert!((w.alpha - 1.0).abs() < 1e-15);
        let e = compute_weights(
            &[series(vec![10.0, 3.0]), series(vec![100.0])],
            AlphaRule::ErrorScaled,
        )
        .unwrap();
        assert!((e.alpha - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn zero_series_and_overrides() {
        let w = compute_weights(&[series(vec![0.0, 0.0])], AlphaRule::FromData).unwrap();
        assert_eq!(w.f_error, vec![1.0]);
        assert_eq!(w.alpha, 0.0);
        let mut s = series(vec![5.0]);
        s.weight = Some(3.0);
        assert_eq!(
            compute_weights(&[s], AlphaRule::Fixed(0.5)).unwrap(),
            WeightingScheme {
                f_error: vec![3.0],
                alpha: 0.5
            }
        );
        assert!(compute_weights(&[], AlphaRule::FromData).is_err());
        assert!(compute_weights(&[series(vec![1.0])], AlphaRule::Fixed(-1.0)).is_err());
    }
}
