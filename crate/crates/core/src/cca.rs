//! Cuboid cellular automaton: Bayesian fusion of several pixel maps.
//!
//! Every pixel of layer `m` watches the same coordinate in the other layers
//! and the 4-connected pixels in all layers (`5M - 1` cells). Each watched
//! cell above its layer's Otsu threshold adds `lambda` to the pixel's
//! log-odds, each one below subtracts it.

use rayon::prelude::*;

use crate::error::{HcaError, Result};
use crate::imaging::SaliencyMap;

const BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcaParams {
    /// Log-odds increment per unit of evidence.
    pub lambda: f64,
    pub iterations: usize,
    /// States are clamped to `[epsilon, 1 - epsilon]` before taking the logit.
    pub epsilon: f64,
}

impl Default for CcaParams {
    fn default() -> Self {
        CcaParams { lambda: 0.05, iterations: 3, epsilon: 1e-4 }
    }
}

impl CcaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(HcaError::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(HcaError::InvalidParameter("CCA needs at least one iteration".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(HcaError::InvalidParameter(format!("epsilon must be in (0, 0.5), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// 256-bin histogram on `[0, 1]`; bin `k` holds `[k/256, (k+1)/256)`, with 1.0 in the last bin.
pub fn histogram(values: &[f64]) -> [u64; BINS] {
    let mut hist = [0u64; BINS];
    for &v in values {
        hist[value_bin(v)] += 1;
    }
    hist
}

fn value_bin(v: f64) -> usize {
    ((v * BINS as f64) as usize).min(BINS - 1)
}

/// Otsu cut over a 256-bin histogram: the `t` in `1..=255` splitting bins
/// `< t` from `>= t` with maximal between-class variance, lowest `t` on ties.
/// Returns `None` when fewer than two bins are occupied.
pub fn otsu_bin(hist: &[u64; BINS]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let total_sum: u128 = hist.iter().enumerate().map(|(b, &c)| b as u128 * c as u128).sum();
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best: Option<(usize, f64)> = None;
    for t in 1..BINS {
        n0 += hist[t - 1];
        s0 += (t - 1) as u128 * hist[t - 1] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        // N^2 * sigma_B^2 = (n1 s0 - n0 s1)^2 / (n0 n1), numerator exact in integers
        let diff = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128) as f64;
        let score = diff * diff / (n0 as f64 * n1 as f64);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| t)
}

/// Adaptive threshold in `[0, 1]`; a map occupying a single bin returns its mean.
pub fn otsu_threshold(map: &SaliencyMap) -> f64 {
    match otsu_bin(&histogram(map.values())) {
        Some(t) => t as f64 / BINS as f64,
        None => map.mean(),
    }
}

pub fn logit(s: f64, eps: f64) -> f64 {
    let s = s.clamp(eps, 1.0 - eps);
    (s / (1.0 - s)).ln()
}

pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// `M` equally sized maps and their thresholds, fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MapStack {
    width: usize,
    height: usize,
    layers: Vec<Vec<f64>>,
    gammas: Vec<f64>,
}

impl MapStack {
    /// Stack maps, thresholding each with Otsu's method.
    pub fn new(maps: Vec<SaliencyMap>) -> Result<Self> {
        let gammas = maps.iter().map(otsu_threshold).collect();
        Self::with_thresholds(maps, gammas)
    }

    pub fn with_thresholds(maps: Vec<SaliencyMap>, gammas: Vec<f64>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(HcaError::InvalidParameter("map stack needs at least one map".into()));
        };
        if gammas.len() != maps.len() {
            return Err(HcaError::InvalidParameter("one threshold per map is required".into()));
        }
        let dims = first.dims();
        if let Some(bad) = maps.iter().find(|m| m.dims() != dims) {
            return Err(HcaError::dims(dims, bad.dims()));
        }
        Ok(MapStack {
            width: dims.0,
            height: dims.1,
            layers: maps.into_iter().map(SaliencyMap::into_values).collect(),
            gammas,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, m: usize) -> &[f64] {
        &self.layers[m]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn to_maps(&self) -> Vec<SaliencyMap> {
        self.layers
            .iter()
            .map(|l| SaliencyMap::new(self.width, self.height, l.clone()).expect("states stay in [0, 1]"))
            .collect()
    }

    /// Per-pixel evidence: sum of threshold signs over the cuboid zone of
    /// `(layer, pixel)`. Out-of-image positions contribute nothing.
    pub fn evidence(&self) -> Vec<Vec<i32>> {
        let (w, h) = (self.width, self.height);
        let signs: Vec<Vec<i8>> = self
            .layers
            .iter()
            .zip(&self.gammas)
            .map(|(layer, &g)| layer.iter().map(|&s| sign(s - g)).collect())
            .collect();
        // cross[p] = sum over layers of (centre + 4-neighbours)
        let mut cross = vec![0i32; w * h];
        for layer in &signs {
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let mut acc = i32::from(layer[p]);
                    if x > 0 {
                        acc += i32::from(layer[p - 1]);
                    }
                    if x + 1 < w {
                        acc += i32::from(layer[p + 1]);
                    }
                    if y > 0 {
                        acc += i32::from(layer[p - w]);
                    }
                    if y + 1 < h {
                        acc += i32::from(layer[p + w]);
                    }
                    cross[p] += acc;
                }
            }
        }
        signs
            .iter()
            .map(|own| cross.iter().zip(own).map(|(&c, &s)| c - i32::from(s)).collect())
            .collect()
    }
}

fn sign(d: f64) -> i8 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// One synchronous update of every layer.
pub fn cca_step(stack: &MapStack, params: &CcaParams) -> MapStack {
    let evidence = stack.evidence();
    let layers = stack
        .layers
        .par_iter()
        .zip(evidence.par_iter())
        .map(|(layer, sigma)| {
            layer
                .iter()
                .zip(sigma)
                .map(|(&s, &e)| sigmoid(logit(s, params.epsilon) + f64::from(e) * params.lambda))
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>();
    debug_assert!(layers.iter().flatten().all(|&s| s > 0.0 && s < 1.0));
    MapStack { width: stack.width, height: stack.height, layers, gammas: stack.gammas.clone() }
}

/// Evolve `params.iterations` steps and average the layers.
pub fn cca_fuse(stack: &MapStack, params: &CcaParams) -> SaliencyMap {
    let mut current = stack.clone();
    for _ in 0..params.iterations {
        current = cca_step(&current, params);
    }
    average(&current)
}

fn average(stack: &MapStack) -> SaliencyMap {
    let m = stack.depth() as f64;
    let values: Vec<f64> = (0..stack.width * stack.height)
        .map(|p| stack.layers.iter().map(|l| l[p]).sum::<f64>() / m)
        .collect();
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)), "fused saliency left [0, 1]");
    SaliencyMap::new(stack.width, stack.height, values).expect("fused map is valid")
}
