//! Disparity evaluation against masked ground truth.

use std::fmt;
use std::str::FromStr;

use crate::disparity::DisparityMap;
use crate::error::{shape_err, Error, Result};

/// How the absolute (3 px) and relative (5 %) outlier thresholds combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OutlierRule {
    /// Outlier if either threshold is reached.
    #[default]
    Or,
    /// Outlier only if both are reached.
    And,
}

impl OutlierRule {
    pub fn is_outlier(self, est: f32, gt: f32) -> bool {
        let err = (est - gt).abs();
        let abs = err >= 3.0;
        let rel = err >= 0.05 * gt;
        match self {
            OutlierRule::Or => abs || rel,
            OutlierRule::And => abs && rel,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutlierRule::Or => "or",
            OutlierRule::And => "and",
        }
    }
}

impl fmt::Display for OutlierRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutlierRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or" | "or_rule" => Ok(OutlierRule::Or),
            "and" | "and_rule" => Ok(OutlierRule::And),
            _ => Err(Error::Config(format!("unknown outlier rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Outlier percentage in `[0, 100]`.
    pub d1_all: f64,
    /// Mean absolute error in pixels.
    pub epe: f64,
    pub evaluated_pixels: usize,
    pub outliers: usize,
    pub rule: OutlierRule,
}

fn check(est: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if est.values().shape() != gt.values().shape() {
        return Err(shape_err(
            "metrics",
            format!("estimate {:?} vs ground truth {:?}", est.values().shape(), gt.values().shape()),
        ));
    }
    if gt.valid_count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Pixels valid in the ground truth; estimate validity is ignored.
fn pairs<'a>(est: &'a DisparityMap, gt: &'a DisparityMap) -> impl Iterator<Item = (f32, f32)> + 'a {
    est.values()
        .data()
        .iter()
        .zip(gt.values().data())
        .zip(gt.valid())
        .filter(|(_, &v)| v)
        .map(|((&e, &g), _)| (e, g))
}

pub fn evaluate(est: &DisparityMap, gt: &DisparityMap, rule: OutlierRule) -> Result<EvalReport> {
    check(est, gt)?;
    let mut n = 0usize;
    let mut outliers = 0usize;
    let mut abs_sum = 0.0f64;
    for (e, g) in pairs(est, gt) {
        n += 1;
        outliers += usize::from(rule.is_outlier(e, g));
        abs_sum += f64::from((e - g).abs());
    }
    Ok(EvalReport {
        d1_all: 100.0 * outliers as f64 / n as f64,
        epe: abs_sum / n as f64,
        evaluated_pixels: n,
        outliers,
        rule,
    })
}

pub fn d1_all(est: &DisparityMap, gt: &DisparityMap, rule: OutlierRule) -> Result<f64> {
    Ok(evaluate(est, gt, rule)?.d1_all)
}

pub fn epe(est: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    Ok(evaluate(est, gt, OutlierRule::Or)?.epe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(v: f32) -> DisparityMap {
        DisparityMap::dense(Tensor::from_vec(&[1, 1], vec![v]).unwrap()).unwrap()
    }

    #[test]
    fn worked_example() {
        let (est, gt) = (single(104.0), single(100.0));
        assert_eq!(d1_all(&est, &gt, OutlierRule::Or).unwrap(), 100.0);
        assert_eq!(d1_all(&est, &gt, OutlierRule::And).unwrap(), 0.0);
        assert_eq!(epe(&est, &gt).unwrap(), 4.0);
    }

    #[test]
    fn perfect_estimate() {
        let gt = DisparityMap::dense(Tensor::from_fn(&[3, 3], |i| i as f32 + 1.0)).unwrap();
        let r = evaluate(&gt, &gt, OutlierRule::Or).unwrap();
        assert_eq!((r.d1_all, r.epe, r.evaluated_pixels), (0.0, 0.0, 9));
        let shifted = DisparityMap::dense(gt.values().map(|v| v + 1.0)).unwrap();
        assert_eq!(epe(&shifted, &gt).unwrap(), 1.0);
    }

    #[test]
    fn empty_mask_and_shape_errors() {
        let gt = DisparityMap::new(Tensor::zeros(&[2, 2]), vec![false; 4]).unwrap();
        let est = DisparityMap::dense(Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(evaluate(&est, &gt, OutlierRule::Or), Err(Error::EmptyMask)));
        assert!(evaluate(&single(1.0), &est, OutlierRule::Or).is_err());
    }
}
