/// Recall sample points of the interpolated precision envelope.
pub const RECALL_POINTS: usize = 101;

/// 101-point interpolated AP of a ranked list. `ranked` holds `true` for true
/// positives, in descending score order; neutral detections must be removed
/// beforehand. Returns `None` when `num_positives` is zero.
pub fn average_precision(ranked: &[bool], num_positives: usize) -> Option<f64> {
    if num_positives == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, &hit) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_positives as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty() {
        assert_eq!(average_precision(&[true, true], 2), Some(1.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[true], 0), None);
    }

    #[test]
    fn miss_then_hit() {
        let ap = average_precision(&[false, true], 1).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_recall() {
        // one of two positives found at rank 1: precision 1 up to recall 0.5
        let ap = average_precision(&[true], 2).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-12);
    }
}
