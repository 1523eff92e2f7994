use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to this distance from 0 and 1 before taking logs.
pub const LOGLIK_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Absent when the input lacks either a positive or a negative.
    pub auc: Option<f64>,
    pub loglik: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Rank-statistic AUC; tied scores count one half.
pub fn auc(scores: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end < sorted.len() && sorted[end].0 == sorted[start].0 {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos = sorted[start..end].iter().filter(|s| s.1).count();
        rank_sum += midrank * pos as f64;
        start = end;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn log_prob(p: f64, truth: bool) -> f64 {
    let p = p.clamp(LOGLIK_CLAMP, 1.0 - LOGLIK_CLAMP);
    if truth {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

pub fn evaluate(scores: &[(f64, bool)]) -> Result<Metrics> {
    if scores.is_empty() {
        return Err(Error::Data("cannot evaluate an empty score list".into()));
    }
    let loglik = scores.iter().map(|&(p, t)| log_prob(p, t)).sum();
    let correct = scores.iter().filter(|&&(p, t)| (p >= 0.5) == t).count();
    Ok(Metrics {
        auc: auc(scores),
        loglik,
        accuracy: correct as f64 / scores.len() as f64,
        count: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[(f64, bool)]) -> Option<f64> {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for &(p, tp) in scores {
            for &(q, tq) in scores {
                if tp && !tq {
                    pairs += 1;
                    total += if p > q {
                        1.0
                    } else if p == q {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0).then(|| total / pairs as f64)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[(0.9, true), (0.8, true), (0.2, false)]), Some(1.0));
        assert_eq!(auc(&[(0.5, true), (0.5, false), (0.5, true)]), Some(0.5));
        let mixed = [(0.9, true), (0.8, false), (0.7, true)];
        assert_eq!(brute_auc(&mixed), Some(0.5));
        assert_eq!(auc(&mixed), Some(0.5));
        assert_eq!(auc(&[(0.4, true)]), None);
    }

    #[test]
    fn evaluate_examples() {
        assert!(evaluate(&[]).is_err());
        let m = evaluate(&[(1.0, true), (0.0, false), (0.25, true)]).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        let expected = 2.0 * (1.0 - LOGLIK_CLAMP).ln() + 0.25f64.ln();
        assert!((m.loglik - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(raw in proptest::collection::vec((0u8..6, any::<bool>()), 1..40)) {
            let scores: Vec<(f64, bool)> = raw.iter().map(|&(s, t)| (f64::from(s) / 5.0, t)).collect();
            let a = auc(&scores);
            let b = brute_auc(&scores);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)) {
            let moved: Vec<(f64, bool)> = raw.iter().map(|&(s, t)| ((3.0 * s).exp() - 7.0, t)).collect();
            prop_assert_eq!(auc(&raw), auc(&moved));
        }
    }
}
