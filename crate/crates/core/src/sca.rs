//! Single-layer cellular automaton over superpixels.
//!
//! Each superpixel is a cell whose state is its saliency. Cells talk to
//! their 2-hop neighbours (plus every other border cell), weighted by
//! feature similarity, and all update synchronously:
//!
//! `s(t+1) = C* s(t) + (I - C*) F* s(t)`

use std::collections::BTreeSet;

use crate::error::{HcaError, Result};
use crate::features::SuperpixelDescriptors;
use crate::imaging::SaliencyMap;
use crate::slic::{adjacency, SuperpixelSegmentation};

pub const BOUNDARY_SEED: f64 = 0.001;
pub const INTERIOR_SEED: f64 = 0.5;
const PRIOR_CLAMP: (f64, f64) = (0.001, 0.999);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaParams {
    /// Similarity bandwidth sigma_f^2.
    pub sigma_f2: f64,
    /// Coherence span; c* lands in `[b, a + b]`.
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
}

impl Default for ScaParams {
    fn default() -> Self {
        ScaParams { sigma_f2: 0.1, a: 0.6, b: 0.2, iterations: 20 }
    }
}

impl ScaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f2 > 0.0 && self.sigma_f2.is_finite()) {
            return Err(HcaError::InvalidParameter(format!("sigma_f^2 must be positive, got {}", self.sigma_f2)));
        }
        if !(self.a > 0.0 && self.b >= 0.0 && self.a + self.b <= 1.0) {
            return Err(HcaError::InvalidParameter(format!(
                "coherence range [{}, {}] must lie in [0, 1] with a > 0",
                self.b,
                self.a + self.b
            )));
        }
        if self.iterations == 0 {
            return Err(HcaError::InvalidParameter("SCA needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Initial per-superpixel saliency.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorVector(Vec<f64>);

impl PriorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(HcaError::InvalidParameter(format!("prior value {v} outside [0, 1]")));
        }
        Ok(PriorVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-superpixel saliency after evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyVector(pub Vec<f64>);

impl SaliencyVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Constant-per-superpixel pixel map.
    pub fn project(&self, seg: &SuperpixelSegmentation) -> Result<SaliencyMap> {
        let (w, h) = seg.dims();
        SaliencyMap::new(w, h, seg.project(&self.0))
    }
}

/// Border superpixels start near zero, everything else at one half.
pub fn boundary_prior(seg: &SuperpixelSegmentation) -> PriorVector {
    PriorVector(
        (0..seg.count())
            .map(|i| if seg.is_boundary(i) { BOUNDARY_SEED } else { INTERIOR_SEED })
            .collect(),
    )
}

/// Mean of an external map inside each superpixel, clamped to `[0.001, 0.999]`.
pub fn prior_from_map(map: &SaliencyMap, seg: &SuperpixelSegmentation) -> Result<PriorVector> {
    if map.dims() != seg.dims() {
        return Err(HcaError::dims(seg.dims(), map.dims()));
    }
    let mut sums = vec![0.0; seg.count()];
    for (&l, &v) in seg.labels().iter().zip(map.values()) {
        sums[l] += v;
    }
    Ok(PriorVector(
        sums.iter()
            .zip(seg.sizes())
            .map(|(s, &n)| (s / n as f64).clamp(PRIOR_CLAMP.0, PRIOR_CLAMP.1))
            .collect(),
    ))
}

/// Neighbour sets NB(i), ascending and without `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }
}

pub fn build_graph(seg: &SuperpixelSegmentation) -> NeighborGraph {
    graph_from_adjacency(&adjacency(seg), &seg.boundary_set())
}

/// Two-hop closure of `adjacency`, then a clique over `boundary`.
pub fn graph_from_adjacency(adjacency: &[Vec<usize>], boundary: &[usize]) -> NeighborGraph {
    let n = adjacency.len();
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, direct) in adjacency.iter().enumerate() {
        for &k in direct {
            sets[i].insert(k);
            sets[i].extend(adjacency[k].iter().copied());
        }
    }
    for &i in boundary {
        sets[i].extend(boundary.iter().copied());
    }
    for (i, s) in sets.iter_mut().enumerate() {
        s.remove(&i);
    }
    NeighborGraph { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() }
}

/// Sparse impact factors (raw and row-normalised) plus the diagonal
/// coherence weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpactMatrices {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    raw: Vec<f64>,
    normalized: Vec<f64>,
    coherence: Vec<f64>,
}

impl ImpactMatrices {
    /// Assemble from a dense row-stochastic `fstar` and coherence diagonal.
    /// The raw impact matrix is taken equal to `fstar`.
    pub fn from_dense(fstar: &[Vec<f64>], coherence: Vec<f64>) -> Result<Self> {
        let n = fstar.len();
        if coherence.len() != n || fstar.iter().any(|r| r.len() != n) {
            return Err(HcaError::InvalidParameter("impact matrix must be square and match coherence".into()));
        }
        if let Some(c) = coherence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(HcaError::InvalidParameter(format!("coherence {c} outside [0, 1]")));
        }
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in fstar {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Ok(ImpactMatrices { row_start, cols, raw: vals.clone(), normalized: vals, coherence })
    }

    pub fn len(&self) -> usize {
        self.coherence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coherence.is_empty()
    }

    /// Nonzero `(j, F_ij)` entries of row `i` of the raw matrix.
    pub fn raw_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.raw[r].iter().copied())
    }

    /// Nonzero `(j, F*_ij)` entries of row `i`.
    pub fn normalized_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.normalized[r].iter().copied())
    }

    /// Diagonal of C*.
    pub fn coherence(&self) -> &[f64] {
        &self.coherence
    }

    pub fn to_dense_normalized(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                for (j, v) in self.normalized_row(i) {
                    row[j] = v;
                }
                row
            })
            .collect()
    }
}

pub fn impact_matrix(
    desc: &SuperpixelDescriptors,
    graph: &NeighborGraph,
    params: &ScaParams,
) -> Result<ImpactMatrices> {
    params.validate()?;
    let n = graph.len();
    if desc.count() != n {
        return Err(HcaError::InvalidParameter(format!(
            "{} descriptors for a graph of {n} cells",
            desc.count()
        )));
    }
    let mut row_start = Vec::with_capacity(n + 1);
    row_start.push(0);
    let mut cols = Vec::new();
    let mut raw = Vec::new();
    let mut normalized = Vec::new();
    let mut inv_max = Vec::with_capacity(n);
    for i in 0..n {
        let nb = graph.neighbors(i);
        if nb.is_empty() {
            return Err(HcaError::Degenerate(format!("superpixel {i} has no neighbours")));
        }
        let start = raw.len();
        for &j in nb {
            cols.push(j);
            raw.push((-desc.pair_distance(i, j) / params.sigma_f2).exp());
        }
        let row = &raw[start..];
        let degree: f64 = row.iter().sum();
        let max = row.iter().copied().fold(0.0, f64::max);
        if !(degree > 0.0 && max > 0.0) {
            return Err(HcaError::Degenerate(format!(
                "superpixel {i} has zero similarity to every neighbour"
            )));
        }
        normalized.extend(row.iter().map(|f| f / degree));
        inv_max.push(1.0 / max);
        row_start.push(cols.len());
    }

    let lo = inv_max.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inv_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let coherence = if hi > lo {
        inv_max.iter().map(|c| params.a * (c - lo) / (hi - lo) + params.b).collect()
    } else {
        vec![params.b + params.a / 2.0; n]
    };
    Ok(ImpactMatrices { row_start, cols, raw, normalized, coherence })
}

/// Run the synchronous update `params.iterations` times.
pub fn sca_evolve(prior: &PriorVector, mats: &ImpactMatrices, params: &ScaParams) -> SaliencyVector {
    sca_evolve_observed(prior, mats, params, |_, _| {})
}

/// As [`sca_evolve`], calling `observe(t, state)` after every step.
pub fn sca_evolve_observed(
    prior: &PriorVector,
    mats: &ImpactMatrices,
    params: &ScaParams,
    mut observe: impl FnMut(usize, &[f64]),
) -> SaliencyVector {
    assert_eq!(prior.len(), mats.len(), "prior and matrices disagree on cell count");
    let lo = prior.0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = prior.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut state = prior.0.clone();
    let mut next = vec![0.0; state.len()];
    for t in 1..=params.iterations {
        for (i, out) in next.iter_mut().enumerate() {
            let propagated: f64 = mats.normalized_row(i).map(|(j, f)| f * state[j]).sum();
            let c = mats.coherence[i];
            *out = c * state[i] + (1.0 - c) * propagated;
        }
        std::mem::swap(&mut state, &mut next);
        debug_assert!(
            state.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12),
            "state left the prior's range at step {t}"
        );
        observe(t, &state);
    }
    SaliencyVector(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3x3() -> SuperpixelSegmentation {
        // 9 superpixels, 2x2 pixels each, on a 6x6 image
        let labels = (0..36).map(|p| (p / 6 / 2) * 3 + (p % 6) / 2).collect();
        SuperpixelSegmentation::from_labels(6, 6, labels, None).unwrap()
    }

    #[test]
    fn boundary_prior_on_grid() {
        let p = boundary_prior(&grid3x3());
        for (i, &v) in p.values().iter().enumerate() {
            assert_eq!(v, if i == 4 { 0.5 } else { 0.001 });
        }
        let single = SuperpixelSegmentation::from_labels(3, 3, vec![0; 9], None).unwrap();
        assert_eq!(boundary_prior(&single).values(), &[0.001]);
        let strips = SuperpixelSegmentation::from_labels(3, 1, vec![0, 1, 2], None).unwrap();
        assert_eq!(boundary_prior(&strips).values(), &[0.001; 3]);
    }

    #[test]
    fn prior_from_map_means_and_clamps() {
        let seg = grid3x3();
        let p = prior_from_map(&SaliencyMap::constant(6, 6, 0.7).unwrap(), &seg).unwrap();
        assert!(p.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let p = prior_from_map(&SaliencyMap::constant(6, 6, 1.0).unwrap(), &seg).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.999));
        assert!(prior_from_map(&SaliencyMap::constant(5, 6, 0.2).unwrap(), &seg).is_err());
    }

    #[test]
    fn prior_from_map_matches_explicit_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (w, h, n) = (9, 7, 6);
        let mut labels: Vec<usize> = (0..w * h).map(|_| rng.gen_range(0..n)).collect();
        labels[..n].copy_from_slice(&(0..n).collect::<Vec<_>>());
        let values: Vec<f64> = (0..w * h).map(|_| rng.gen()).collect();
        let seg = SuperpixelSegmentation::from_labels(w, h, labels.clone(), None).unwrap();
        let p = prior_from_map(&SaliencyMap::new(w, h, values.clone()).unwrap(), &seg).unwrap();
        for id in 0..n {
            let picked: Vec<f64> = (0..w * h).filter(|&q| labels[q] == id).map(|q| values[q]).collect();
            let mean = picked.iter().sum::<f64>() / picked.len() as f64;
            assert!((p.values()[id] - mean.clamp(0.001, 0.999)).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_two_hop_and_boundary_clique() {
        // path a - b - c, no boundary
        let g = graph_from_adjacency(&[vec![1], vec![0, 2], vec![1]], &[]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        let strips = SuperpixelSegmentation::from_labels(4, 1, vec![0, 1, 2, 3], None).unwrap();
        let g = build_graph(&strips);
        for i in 0..4 {
            let expected: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            assert_eq!(g.neighbors(i), expected.as_slice());
        }
        let g = build_graph(&grid3x3());
        // centre reaches everything in two hops
        assert_eq!(g.neighbors(4), &[0, 1, 2, 3, 5, 6, 7, 8]);
    }

    fn descriptors_1d(values: &[f64]) -> SuperpixelDescriptors {
        SuperpixelDescriptors::from_tables(values.len(), vec![1], vec![1.0], vec![values.to_vec()]).unwrap()
    }

    #[test]
    fn impact_factor_values() {
        let g = graph_from_adjacency(&[vec![1], vec![0, 2], vec![1]], &[]);
        let params = ScaParams::default();
        let m = impact_matrix(&descriptors_1d(&[0.0, 0.0, 0.1]), &g, &params).unwrap();
        let row0: Vec<(usize, f64)> = m.raw_row(0).collect();
        assert_eq!(row0[0], (1, 1.0));
        assert!((row0[1].1 - (-1.0f64).exp()).abs() < 1e-15);
        assert!((row0[1].1 - 0.367879).abs() < 1e-6);
        for i in 0..3 {
            let s: f64 = m.normalized_row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let c = m.coherence();
        let (lo, hi) = c.iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!((lo - 0.2).abs() < 1e-12 && (hi - 0.8).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn degenerate_coherence_is_midpoint() {
        let g = graph_from_adjacency(&[vec![1], vec![0]], &[]);
        let m = impact_matrix(&descriptors_1d(&[0.3, 0.5]), &g, &ScaParams::default()).unwrap();
        assert_eq!(m.coherence(), &[0.5, 0.5]);
    }

    #[test]
    fn isolated_cell_is_rejected() {
        let g = graph_from_adjacency(&[vec![], vec![2], vec![1]], &[]);
        let err = impact_matrix(&descriptors_1d(&[0.0, 0.1, 0.2]), &g, &ScaParams::default());
        assert!(matches!(err, Err(HcaError::Degenerate(_))));
    }

    #[test]
    fn identity_coherence_freezes_prior() {
        let f = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = ImpactMatrices::from_dense(&f, vec![1.0, 1.0]).unwrap();
        let prior = PriorVector::new(vec![0.2, 0.9]).unwrap();
        let out = sca_evolve(&prior, &m, &ScaParams { iterations: 7, ..Default::default() });
        assert_eq!(out.values(), prior.values());
    }

    #[test]
    fn zero_coherence_single_step_is_pure_propagation() {
        let f = vec![vec![0.0, 0.25, 0.75], vec![0.5, 0.0, 0.5], vec![1.0, 0.0, 0.0]];
        let m = ImpactMatrices::from_dense(&f, vec![0.0; 3]).unwrap();
        let prior = PriorVector::new(vec![0.4, 1.0, 0.0]).unwrap();
        let out = sca_evolve(&prior, &m, &ScaParams { iterations: 1, ..Default::default() });
        assert_eq!(out.values(), &[0.25, 0.2, 0.4]);
    }

    #[test]
    fn three_cell_hand_example() {
        let f = vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]];
        let m = ImpactMatrices::from_dense(&f, vec![0.5; 3]).unwrap();
        let prior = PriorVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let out = sca_evolve(&prior, &m, &ScaParams { iterations: 1, ..Default::default() });
        assert_eq!(out.values(), &[0.5, 0.25, 0.0]);
    }

    #[test]
    fn constant_prior_is_a_fixed_point() {
        let g = build_graph(&grid3x3());
        let d = descriptors_1d(&[0.1, 0.5, 0.2, 0.9, 0.4, 0.3, 0.0, 0.7, 0.6]);
        let m = impact_matrix(&d, &g, &ScaParams::default()).unwrap();
        let prior = PriorVector::new(vec![0.37; 9]).unwrap();
        let out = sca_evolve(&prior, &m, &ScaParams::default());
        assert!(out.values().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn params_validation() {
        assert!(ScaParams::default().validate().is_ok());
        assert!(ScaParams { sigma_f2: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScaParams { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(ScaParams { a: 0.0, ..Default::default() }.validate().is_err());
    }
}
