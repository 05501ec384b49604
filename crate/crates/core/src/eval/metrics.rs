//! Cosine scoring, EER, minDCF and DET points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("cosine_score: lengths {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Score("cosine score of a zero or non-finite vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Parallel label and score arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    labels: Vec<bool>,
    scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(labels: Vec<bool>, scores: Vec<f64>) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::Dimension(format!(
                "score set: {} labels but {} scores",
                labels.len(),
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Score(format!("score {i} is not finite")));
        }
        Ok(Self { labels, scores })
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_target(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_nontarget(&self) -> usize {
        self.labels.len() - self.n_target()
    }
}

/// Detection-cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Config(format!("p_target must lie in (0, 1), got {}", self.p_target)));
        }
        if !(self.c_miss > 0.0) || !(self.c_fa > 0.0) || !self.c_miss.is_finite() || !self.c_fa.is_finite() {
            return Err(Error::Config("detection costs must be positive".into()));
        }
        Ok(())
    }
}

/// Operating point at one threshold (accept iff `score >= threshold`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Operating points at every distinct score, ascending, then at `+inf`.
pub fn det_points(set: &ScoreSet) -> Result<Vec<DetPoint>> {
    let (nt, nn) = (set.n_target(), set.n_nontarget());
    if nt == 0 || nn == 0 {
        return Err(Error::Metric(format!(
            "need at least one target and one nontarget trial, got {nt} and {nn}"
        )));
    }
    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    let mut points = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = set.scores[order[i]];
        points.push(DetPoint {
            threshold: t,
            p_miss: tar_below as f64 / nt as f64,
            p_fa: (nn - non_below) as f64 / nn as f64,
        });
        while i < order.len() && set.scores[order[i]] == t {
            if set.labels[order[i]] {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// Equal error rate of a sorted operating-point sweep.
///
/// Finds the first point with `p_miss >= p_fa` and linearly interpolates the
/// crossing with its predecessor. The returned threshold is that point's.
pub fn eer_from_points(points: &[DetPoint]) -> (f64, f64) {
    let i = points
        .iter()
        .position(|p| p.p_miss >= p.p_fa)
        .unwrap_or(points.len() - 1);
    let cur = points[i];
    let d1 = cur.p_miss - cur.p_fa;
    if d1 == 0.0 || i == 0 {
        return (0.5 * (cur.p_miss + cur.p_fa), cur.threshold);
    }
    let prev = points[i - 1];
    let d0 = prev.p_miss - prev.p_fa;
    let lambda = -d0 / (d1 - d0);
    (prev.p_miss + lambda * (cur.p_miss - prev.p_miss), cur.threshold)
}

/// `(eer, threshold)`.
pub fn eer(set: &ScoreSet) -> Result<(f64, f64)> {
    Ok(eer_from_points(&det_points(set)?))
}

/// Normalised detection cost of one operating point.
pub fn dcf_at(p_miss: f64, p_fa: f64, p: &DcfParams) -> f64 {
    let raw = p.c_miss * p.p_target * p_miss + p.c_fa * (1.0 - p.p_target) * p_fa;
    raw / (p.c_miss * p.p_target).min(p.c_fa * (1.0 - p.p_target))
}

pub fn min_dcf_from_points(points: &[DetPoint], p: &DcfParams) -> (f64, f64) {
    let mut best = (dcf_at(0.0, 1.0, p), f64::NEG_INFINITY);
    for pt in points {
        let c = dcf_at(pt.p_miss, pt.p_fa, p);
        if c < best.0 {
            best = (c, pt.threshold);
        }
    }
    best
}

/// `(min_dcf, threshold)`; the threshold may be `-inf` (accept all) or
/// `+inf` (reject all).
pub fn min_dcf(set: &ScoreSet, p: &DcfParams) -> Result<(f64, f64)> {
    p.validate()?;
    Ok(min_dcf_from_points(&det_points(set)?, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tar: &[f64], non: &[f64]) -> ScoreSet {
        let mut labels = vec![true; tar.len()];
        labels.extend(vec![false; non.len()]);
        ScoreSet::new(labels, [tar, non].concat()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let a = [1.0, 2.0, -0.5];
        assert!((cosine_score(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let b = [0.3, -1.0, 2.0];
        let a3: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        assert!((cosine_score(&a3, &b).unwrap() - cosine_score(&a, &b).unwrap()).abs() < 1e-12);
        assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Score(_))));
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap().0, 0.0);
        assert_eq!(eer(&set(&[0.8, 0.4], &[0.6, 0.2])).unwrap().0, 0.5);
        assert!(matches!(eer(&set(&[0.1], &[])), Err(Error::Metric(_))));
    }

    #[test]
    fn min_dcf_endpoints() {
        let p = DcfParams::default();
        assert_eq!(min_dcf(&set(&[0.9, 0.8], &[0.1, 0.2]), &p).unwrap().0, 0.0);
        let (c, t) = min_dcf(&set(&[0.5; 3], &[0.5; 4]), &p).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        assert_eq!(t, f64::INFINITY);
    }

    #[test]
    fn rejects_bad_params() {
        let p = DcfParams { p_target: 1.0, ..DcfParams::default() };
        assert!(p.validate().is_err());
        assert!(ScoreSet::new(vec![true], vec![f64::NAN]).is_err());
    }
}
