//! Precision/recall curves, F-measure and MAE against binary ground truth.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HcaError, Result};
use crate::imaging::{quantize, SaliencyMap};

/// Precision weight used throughout: beta^2 = 0.3.
pub const BETA2: f64 = 0.3;
pub const THRESHOLDS: usize = 256;

/// Binary mask; pixels are foreground or background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl GroundTruth {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || mask.len() != width * height {
            return Err(HcaError::Format(format!(
                "mask of {} pixels does not fit {width}x{height}",
                mask.len()
            )));
        }
        Ok(GroundTruth { width, height, mask })
    }

    /// Foreground wherever the map is at least one half.
    pub fn from_map(map: &SaliencyMap) -> Self {
        GroundTruth {
            width: map.width(),
            height: map.height(),
            mask: map.values().iter().map(|&v| v >= 0.5).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn foreground(&self) -> usize {
        self.mask.iter().filter(|&&g| g).count()
    }

    /// No foreground pixel: recall is undefined.
    pub fn is_degenerate(&self) -> bool {
        self.foreground() == 0
    }

    pub fn to_map(&self) -> SaliencyMap {
        let values = self.mask.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
        SaliencyMap::new(self.width, self.height, values).expect("mask dimensions are valid")
    }
}

/// Curves over the 256 integer thresholds, plus scalar summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurves {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub fbeta: Vec<f64>,
    pub mae: f64,
    pub adaptive_f: f64,
}

impl EvalCurves {
    /// Macro-average: per-threshold arithmetic mean over images.
    pub fn mean(curves: &[EvalCurves]) -> Option<EvalCurves> {
        let n = curves.len() as f64;
        let first = curves.first()?;
        let avg = |pick: fn(&EvalCurves) -> &Vec<f64>| -> Vec<f64> {
            (0..pick(first).len())
                .map(|t| curves.iter().map(|c| pick(c)[t]).sum::<f64>() / n)
                .collect()
        };
        Some(EvalCurves {
            precision: avg(|c| &c.precision),
            recall: avg(|c| &c.recall),
            fbeta: avg(|c| &c.fbeta),
            mae: curves.iter().map(|c| c.mae).sum::<f64>() / n,
            adaptive_f: curves.iter().map(|c| c.adaptive_f).sum::<f64>() / n,
        })
    }

    /// `threshold,precision,recall,fbeta` with one row per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall,fbeta\n");
        for t in 0..self.precision.len() {
            writeln!(out, "{t},{},{},{}", self.precision[t], self.recall[t], self.fbeta[t]).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| HcaError::io(path, e))
    }

    pub fn summary(&self) -> String {
        format!("mae={} adaptive_f={}", self.mae, self.adaptive_f)
    }
}

/// `(1 + b2) p r / (b2 p + r)`, zero when both are zero.
pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

fn check_dims(map: &SaliencyMap, gt: &GroundTruth) -> Result<()> {
    if map.dims() != gt.dims() {
        return Err(HcaError::dims(gt.dims(), map.dims()));
    }
    Ok(())
}

fn require_foreground(gt: &GroundTruth) -> Result<()> {
    if gt.is_degenerate() {
        return Err(HcaError::Degenerate("ground truth has no foreground pixels".into()));
    }
    Ok(())
}

/// Precision and recall of a binary detection; empty detections have precision 1.
fn precision_recall(detected: usize, hits: usize, positives: usize) -> (f64, f64) {
    let precision = if detected == 0 { 1.0 } else { hits as f64 / detected as f64 };
    (precision, hits as f64 / positives as f64)
}

pub fn mae(map: &SaliencyMap, gt: &GroundTruth) -> Result<f64> {
    check_dims(map, gt)?;
    let total: f64 = map
        .values()
        .iter()
        .zip(&gt.mask)
        .map(|(&s, &g)| (s - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(total / gt.mask.len() as f64)
}

/// F-measure after binarizing at `min(2 * mean, 1)`.
pub fn adaptive_f(map: &SaliencyMap, gt: &GroundTruth) -> Result<f64> {
    check_dims(map, gt)?;
    require_foreground(gt)?;
    let tau = (2.0 * map.mean()).min(1.0);
    let (mut detected, mut hits) = (0, 0);
    for (&s, &g) in map.values().iter().zip(&gt.mask) {
        if s >= tau {
            detected += 1;
            if g {
                hits += 1;
            }
        }
    }
    let (p, r) = precision_recall(detected, hits, gt.foreground());
    Ok(f_measure(p, r, BETA2))
}

/// Sliding threshold over the 8-bit quantized map: pixel `i` is detected
/// at threshold `t` when `round(255 s_i) >= t`.
pub fn pr_curve(map: &SaliencyMap, gt: &GroundTruth) -> Result<EvalCurves> {
    check_dims(map, gt)?;
    require_foreground(gt)?;
    let mut detected_at = [0usize; THRESHOLDS];
    let mut hits_at = [0usize; THRESHOLDS];
    for (&s, &g) in map.values().iter().zip(&gt.mask) {
        let q = quantize(s) as usize;
        detected_at[q] += 1;
        if g {
            hits_at[q] += 1;
        }
    }
    let positives = gt.foreground();
    let mut precision = vec![0.0; THRESHOLDS];
    let mut recall = vec![0.0; THRESHOLDS];
    let mut fbeta = vec![0.0; THRESHOLDS];
    let (mut detected, mut hits) = (0, 0);
    for t in (0..THRESHOLDS).rev() {
        detected += detected_at[t];
        hits += hits_at[t];
        let (p, r) = precision_recall(detected, hits, positives);
        precision[t] = p;
        recall[t] = r;
        fbeta[t] = f_measure(p, r, BETA2);
    }
    Ok(EvalCurves { precision, recall, fbeta, mae: mae(map, gt)?, adaptive_f: adaptive_f(map, gt)? })
}
