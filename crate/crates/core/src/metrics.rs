//! Localization accuracy metrics: per-event Euclidean errors, nearest-rank
//! percentiles, and a per-grid-point RMSE map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated touch event: ground truth in radar coordinates plus the
/// estimate, or `None` when positioning was unavailable for the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub event_id: usize,
    /// Grid point identifier used to group repetitions for the RMSE map.
    pub point_index: usize,
    pub gt_cm: (f64, f64),
    pub estimate_cm: Option<(f64, f64)>,
}

/// RMSE over all available repetitions of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRmse {
    pub point_index: usize,
    pub gt_cm: (f64, f64),
    pub rmse_cm: f64,
    pub n_events: usize,
}

/// Summary statistics over one evaluated set of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_events: usize,
    pub n_available: usize,
    pub n_unavailable: usize,
    pub median_error_cm: f64,
    pub p90_error_cm: f64,
    pub rmse_map: Vec<PointRmse>,
    pub rmse_map_median_cm: f64,
    pub rmse_map_p90_cm: f64,
    /// Raw per-event errors (available events only, unsorted) for CDF plots.
    pub errors_cm: Vec<f64>,
}

/// Nearest-rank percentile: the ceil(p*n)-th smallest value (1-indexed),
/// requiring 0 < p <= 1 and a non-empty sample. The input need not be
/// sorted.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("percentile of an empty sample".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("percentile p={p} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN errors"));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn euclidean_cm(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Evaluate a set of records: Euclidean error per available event, median
/// and 90th-percentile error, and a per-point RMSE map with its own median
/// and 90th percentile. Unavailable events are counted but never enter the
/// error statistics.
pub fn evaluate(records: &[EvalRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::Config("cannot evaluate an empty record set".into()));
    }
    let mut errors = Vec::new();
    let mut by_point: std::collections::BTreeMap<usize, ((f64, f64), Vec<f64>)> =
        std::collections::BTreeMap::new();
    let mut n_unavailable = 0usize;
    for rec in records {
        match rec.estimate_cm {
            Some(est) => {
                let err = euclidean_cm(est, rec.gt_cm);
                errors.push(err);
                by_point
                    .entry(rec.point_index)
                    .or_insert_with(|| (rec.gt_cm, Vec::new()))
                    .1
                    .push(err);
            }
            None => n_unavailable += 1,
        }
    }
    if errors.is_empty() {
        return Err(Error::Config(
            "no available estimates among evaluated events".into(),
        ));
    }
    let rmse_map: Vec<PointRmse> = by_point
        .into_iter()
        .map(|(point_index, (gt_cm, errs))| PointRmse {
            point_index,
            gt_cm,
            rmse_cm: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt(),
            n_events: errs.len(),
        })
        .collect();
    let rmse_values: Vec<f64> = rmse_map.iter().map(|p| p.rmse_cm).collect();
    Ok(Metrics {
        n_events: records.len(),
        n_available: errors.len(),
        n_unavailable,
        median_error_cm: percentile_nearest_rank(&errors, 0.5)?,
        p90_error_cm: percentile_nearest_rank(&errors, 0.9)?,
        rmse_map_median_cm: percentile_nearest_rank(&rmse_values, 0.5)?,
        rmse_map_p90_cm: percentile_nearest_rank(&rmse_values, 0.9)?,
        rmse_map,
        errors_cm: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(id: usize, point: usize, gt: (f64, f64), est: Option<(f64, f64)>) -> EvalRecord {
        EvalRecord {
            event_id: id,
            point_index: point,
            gt_cm: gt,
            estimate_cm: est,
        }
    }

    #[test]
    fn nearest_rank_examples() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_relative_eq!(percentile_nearest_rank(&v, 0.5).unwrap(), 3.0);
        assert_relative_eq!(percentile_nearest_rank(&v, 0.9).unwrap(), 10.0);
        assert_relative_eq!(percentile_nearest_rank(&v, 1.0).unwrap(), 10.0);
        // Order independence.
        let shuffled = [10.0, 3.0, 1.0, 4.0, 2.0];
        assert_relative_eq!(percentile_nearest_rank(&shuffled, 0.5).unwrap(), 3.0);
        // Single element.
        assert_relative_eq!(percentile_nearest_rank(&[7.0], 0.9).unwrap(), 7.0);
        assert!(percentile_nearest_rank(&[], 0.5).is_err());
        assert!(percentile_nearest_rank(&v, 0.0).is_err());
        assert!(percentile_nearest_rank(&v, 1.5).is_err());
    }

    #[test]
    fn perfect_estimates_give_zero_errors() {
        let records: Vec<EvalRecord> = (0..10)
            .map(|i| {
                let gt = (i as f64, -(i as f64));
                record(i, i % 3, gt, Some(gt))
            })
            .collect();
        let m = evaluate(&records).unwrap();
        assert_eq!(m.n_available, 10);
        assert_eq!(m.n_unavailable, 0);
        assert_relative_eq!(m.median_error_cm, 0.0);
        assert_relative_eq!(m.p90_error_cm, 0.0);
        for p in &m.rmse_map {
            assert_relative_eq!(p.rmse_cm, 0.0);
        }
    }

    #[test]
    fn rmse_of_two_repetitions() {
        // Errors 3 and 4 at the same point: RMSE = sqrt((9 + 16) / 2).
        let gt = (10.0, -5.0);
        let records = vec![
            record(0, 7, gt, Some((13.0, -5.0))),
            record(1, 7, gt, Some((10.0, -1.0))),
        ];
        let m = evaluate(&records).unwrap();
        assert_eq!(m.rmse_map.len(), 1);
        assert_relative_eq!(m.rmse_map[0].rmse_cm, 12.5_f64.sqrt(), max_relative = 1e-12);
        assert_eq!(m.rmse_map[0].n_events, 2);
        assert_relative_eq!(m.median_error_cm, 3.0);
        assert_relative_eq!(m.p90_error_cm, 4.0);
    }

    #[test]
    fn unavailable_events_counted_separately() {
        let gt = (10.0, -5.0);
        let records = vec![
            record(0, 0, gt, Some((11.0, -5.0))),
            record(1, 0, gt, None),
            record(2, 1, gt, Some((10.0, -7.0))),
        ];
        let m = evaluate(&records).unwrap();
        assert_eq!(m.n_events, 3);
        assert_eq!(m.n_available, 2);
        assert_eq!(m.n_unavailable, 1);
        // Errors are 1 and 2; the unavailable event contributes nothing.
        assert_relative_eq!(m.median_error_cm, 1.0);
        assert_relative_eq!(m.p90_error_cm, 2.0);
    }

    #[test]
    fn empty_and_all_unavailable_are_errors() {
        assert!(evaluate(&[]).is_err());
        let records = vec![record(0, 0, (1.0, -1.0), None)];
        assert!(evaluate(&records).is_err());
    }
}
