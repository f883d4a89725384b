use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Area under the ROC curve by the rank-sum statistic; tied scores share
/// their mid-rank.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            actual: labels.len(),
            context: "auc labels",
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auc scores"));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean and standard error of the mean; the error is 0 for one value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// SHA-256 of the canonical JSON form of `config` (object keys sorted).
pub fn fingerprint<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean over rounds.
    pub stderr: f64,
    pub rounds: usize,
    /// Set when the report has one round and `stderr` is undefined.
    pub single_round: bool,
    pub fingerprint: String,
}

impl MetricsReport {
    /// Summarizes per-round values; at least one round is required.
    pub fn from_rounds(metric: &str, values: &[f64], fingerprint: &str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("report rounds"));
        }
        let (mean, stderr) = mean_stderr(values);
        Ok(Self {
            metric: metric.to_string(),
            mean,
            stderr,
            rounds: values.len(),
            single_round: values.len() == 1,
            fingerprint: fingerprint.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        let s = [0.8, 0.6, 0.7, 0.2, 0.5];
        let l = [1, 0, 1, 0, 1];
        assert!((auc(&s, &l).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert!((pairwise(&s, &l) - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_single_class_and_bad_input() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::SingleClass)));
        assert!(auc(&[0.1], &[1, 0]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn stderr_conventions() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // Sample sd sqrt(5/3), divided by 2.
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        let r = MetricsReport::from_rounds("s_rating", &[3.0], "f").unwrap();
        assert!(r.single_round);
        assert_eq!(r.stderr, 0.0);
        assert!(MetricsReport::from_rounds("s_rating", &[], "f").is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn fingerprint_is_canonical() {
        #[derive(Serialize)]
        struct A {
            b: u32,
            a: f64,
        }
        let f = fingerprint(&A { b: 1, a: 0.5 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(r#"{"a":0.5,"b":1}"#).unwrap();
        assert_eq!(f, fingerprint(&v).unwrap());
        assert_ne!(f, fingerprint(&A { b: 2, a: 0.5 }).unwrap());
        assert_eq!(f.len(), 64);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(
            pts in proptest::collection::vec((0u8..20, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = pts.iter().map(|p| p.0 as f64 / 4.0).collect();
            let labels: Vec<u8> = pts.iter().map(|p| u8::from(p.1)).collect();
            match auc(&scores, &labels) {
                Ok(a) => prop_assert!((a - pairwise(&scores, &labels)).abs() < 1e-12),
                Err(Error::SingleClass) => prop_assert!(labels.iter().all(|&l| l == labels[0])),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
