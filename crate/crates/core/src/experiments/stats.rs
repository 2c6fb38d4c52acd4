//! Summary statistics over trial rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Row;
use crate::theory::semicircle_cdf;

/// Statistics of one tracked quantity `(quantity, index_i, index_j)` across trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub quantity: String,
    pub index_i: Option<usize>,
    pub index_j: Option<usize>,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub mean_predicted: Option<f64>,
    pub mean_abs_deviation: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups rows in canonical order and summarises each group.
pub fn aggregate_rows(rows: &[Row]) -> Vec<Aggregate> {
    type Key<'a> = (&'a str, Option<usize>, Option<usize>);
    let mut groups: BTreeMap<Key, Vec<&Row>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.quantity.as_str(), row.index_i, row.index_j))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((quantity, index_i, index_j), group)| {
            let obs: Vec<f64> = group.iter().map(|r| r.observed).collect();
            let mut sorted = obs.clone();
            sorted.sort_by(f64::total_cmp);
            let predicted: Vec<f64> = group.iter().filter_map(|r| r.predicted).collect();
            let deviations: Vec<f64> = group.iter().filter_map(|r| r.deviation.map(f64::abs)).collect();
            Aggregate {
                quantity: quantity.to_string(),
                index_i,
                index_j,
                count: obs.len(),
                mean: mean(&obs),
                std: sample_std(&obs),
                min: sorted[0],
                max: sorted[sorted.len() - 1],
                q05: quantile_sorted(&sorted, 0.05),
                median: quantile_sorted(&sorted, 0.5),
                q95: quantile_sorted(&sorted, 0.95),
                mean_predicted: (!predicted.is_empty()).then(|| mean(&predicted)),
                mean_abs_deviation: (!deviations.is_empty()).then(|| mean(&deviations)),
            }
        })
        .collect()
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `sorted` (ascending) and the semicircle law.
pub fn ks_semicircle(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = semicircle_cdf(x);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

/// Histogram of `values` over `[lo, hi)` with `bins` equal bins; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(q: &str, i: usize, obs: f64, pred: Option<f64>) -> Row {
        Row {
            trial: 0,
            quantity: q.into(),
            index_i: Some(i),
            index_j: None,
            observed: obs,
            predicted: pred,
            deviation: pred.map(|p| obs - p),
        }
    }

    #[test]
    fn grouping_and_moments() {
        let rows = vec![
            row("a", 0, 1.0, Some(2.0)),
            row("b", 0, 5.0, None),
            row("a", 0, 3.0, Some(2.0)),
            row("a", 1, 7.0, None),
        ];
        let agg = aggregate_rows(&rows);
        assert_eq!(agg.len(), 3);
        assert_eq!(agg[0].quantity, "a");
        assert_eq!(agg[0].index_i, Some(0));
        assert_eq!(agg[0].mean, 2.0);
        assert!((agg[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg[0].mean_abs_deviation, Some(1.0));
        assert_eq!(agg[1].index_i, Some(1));
        assert_eq!(agg[1].std, 0.0);
        assert_eq!(agg[2].mean_predicted, None);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert!((quantile_sorted(&s, 0.05) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn ks_of_semicircle_quantiles_is_small() {
        // Midpoint quantiles of the law itself: KS distance is exactly 1/(2m).
        let m = 2000;
        let xs: Vec<f64> = (0..m)
            .map(|i| {
                let target = (i as f64 + 0.5) / m as f64;
                let (mut lo, mut hi) = (-2.0, 2.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if semicircle_cdf(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        assert!((ks_semicircle(&xs) - 0.5 / m as f64).abs() < 1e-9);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_semicircle(&shifted) > 0.3);
    }

    #[test]
    fn histogram_edges() {
        let c = histogram(&[0.0, 0.5, 1.0, 2.0, -1.0], 0.0, 1.0, 2);
        assert_eq!(c, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn aggregate_bounds(xs in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let rows: Vec<Row> = xs.iter().map(|&x| row("x", 0, x, None)).collect();
            let a = &aggregate_rows(&rows)[0];
            prop_assert!(a.min <= a.q05 && a.q05 <= a.median && a.median <= a.q95 && a.q95 <= a.max);
            prop_assert!(a.min <= a.mean + 1e-9 && a.mean <= a.max + 1e-9);
            prop_assert!(a.std >= 0.0);
            prop_assert_eq!(a.count, xs.len());
        }
    }
}
