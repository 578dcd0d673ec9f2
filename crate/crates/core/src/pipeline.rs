//! End-to-end modes: saliency from scratch, refinement of external maps,
//! and fusion of external maps.

use rayon::prelude::*;

use crate::cca::{cca_fuse, CcaParams, MapStack};
use crate::error::{HcaError, Result};
use crate::features::{pool_descriptors, FeatureSource, FeatureStack};
use crate::imaging::{rgb_to_lab, LabImage, RgbImage, SaliencyMap};
use crate::sca::{
    boundary_prior, build_graph, impact_matrix, prior_from_map, sca_evolve_observed, PriorVector,
    ScaParams,
};
use crate::slic::{slic_segment, SuperpixelSegmentation, DEFAULT_COMPACTNESS};

pub const DEFAULT_SCALES: [usize; 3] = [120, 160, 200];

#[derive(Debug)]
pub struct PipelineConfig {
    /// Superpixel counts, one SCA layer each.
    pub scales: Vec<usize>,
    pub sca: ScaParams,
    pub cca: CcaParams,
    pub compactness: f64,
    pub features: FeatureSource,
    /// Keep every intermediate SCA state in [`ScaleResult::trace`].
    pub trace: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scales: DEFAULT_SCALES.to_vec(),
            sca: ScaParams::default(),
            cca: CcaParams::default(),
            compactness: DEFAULT_COMPACTNESS,
            features: FeatureSource::default(),
            trace: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(HcaError::InvalidParameter("at least one scale is required".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HcaError::InvalidParameter(format!(
                "scales must be strictly increasing, got {:?}",
                self.scales
            )));
        }
        if self.scales[0] < 2 {
            return Err(HcaError::InvalidParameter("each scale needs at least 2 superpixels".into()));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(HcaError::InvalidParameter(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        self.sca.validate()?;
        self.cca.validate()
    }
}

/// How the initial per-superpixel saliency is obtained.
pub trait PriorStrategy: Sync {
    fn name(&self) -> &str;
    fn prior(&self, seg: &SuperpixelSegmentation) -> Result<PriorVector>;
}

/// Border superpixels as background seeds.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundaryPrior;

impl PriorStrategy for BoundaryPrior {
    fn name(&self) -> &str {
        "boundary"
    }

    fn prior(&self, seg: &SuperpixelSegmentation) -> Result<PriorVector> {
        Ok(boundary_prior(seg))
    }
}

/// Superpixel means of an externally computed saliency map.
#[derive(Debug, Clone, Copy)]
pub struct MapPrior<'a>(pub &'a SaliencyMap);

impl PriorStrategy for MapPrior<'_> {
    fn name(&self) -> &str {
        "map"
    }

    fn prior(&self, seg: &SuperpixelSegmentation) -> Result<PriorVector> {
        prior_from_map(self.0, seg)
    }
}

/// The same value in every superpixel.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPrior(pub f64);

impl PriorStrategy for ConstantPrior {
    fn name(&self) -> &str {
        "constant"
    }

    fn prior(&self, seg: &SuperpixelSegmentation) -> Result<PriorVector> {
        PriorVector::new(vec![self.0; seg.count()])
    }
}

/// Output of one SCA layer.
#[derive(Debug, Clone)]
pub struct ScaleResult {
    pub n_target: usize,
    pub segmentation: SuperpixelSegmentation,
    pub map: SaliencyMap,
    /// Per-superpixel states after each step, when tracing is enabled.
    pub trace: Vec<Vec<f64>>,
}

/// Everything shared by the scales of one image.
pub struct PreparedImage {
    lab: LabImage,
    features: FeatureStack,
}

impl PreparedImage {
    pub fn new(img: &RgbImage, cfg: &PipelineConfig) -> Result<Self> {
        let lab = rgb_to_lab(img);
        let features = cfg.features.build(img, &lab)?;
        if features.dims() != img.dims() {
            return Err(HcaError::dims(img.dims(), features.dims()));
        }
        Ok(PreparedImage { lab, features })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.lab.dims()
    }
}

/// Segment, seed and evolve one scale.
pub fn run_scale(
    prepared: &PreparedImage,
    n_target: usize,
    cfg: &PipelineConfig,
    prior: &dyn PriorStrategy,
) -> Result<ScaleResult> {
    let (w, h) = prepared.dims();
    let seg = slic_segment(&prepared.lab, n_target.min(w * h), cfg.compactness)?;
    let seed = prior.prior(&seg)?;
    let desc = pool_descriptors(&prepared.features, &seg)?;
    let graph = build_graph(&seg);
    let mats = impact_matrix(&desc, &graph, &cfg.sca)?;
    let mut trace = Vec::new();
    let state = sca_evolve_observed(&seed, &mats, &cfg.sca, |_, s| {
        if cfg.trace {
            trace.push(s.to_vec());
        }
    });
    let map = state.project(&seg)?;
    Ok(ScaleResult { n_target, segmentation: seg, map, trace })
}

/// One SCA result per configured scale, in scale order.
pub fn sca_scales(
    img: &RgbImage,
    cfg: &PipelineConfig,
    prior: &dyn PriorStrategy,
) -> Result<Vec<ScaleResult>> {
    cfg.validate()?;
    let prepared = PreparedImage::new(img, cfg)?;
    cfg.scales
        .par_iter()
        .map(|&n| run_scale(&prepared, n, cfg, prior))
        .collect()
}

/// Multi-scale SCA from `prior`, fused by CCA.
pub fn propagate_and_fuse(
    img: &RgbImage,
    cfg: &PipelineConfig,
    prior: &dyn PriorStrategy,
) -> Result<SaliencyMap> {
    let maps = sca_scales(img, cfg, prior)?.into_iter().map(|r| r.map).collect();
    Ok(cca_fuse(&MapStack::new(maps)?, &cfg.cca))
}

/// Saliency from scratch with boundary seeds.
pub fn run_hca(img: &RgbImage, cfg: &PipelineConfig) -> Result<SaliencyMap> {
    propagate_and_fuse(img, cfg, &BoundaryPrior)
}

/// Refine an external map: per-scale SCA seeded by it, then CCA.
pub fn optimize_map(img: &RgbImage, prior: &SaliencyMap, cfg: &PipelineConfig) -> Result<SaliencyMap> {
    optimize_maps(img, std::slice::from_ref(prior), cfg)
}

/// Refine several external maps and fuse every refined layer in one CCA stack.
pub fn optimize_maps(img: &RgbImage, priors: &[SaliencyMap], cfg: &PipelineConfig) -> Result<SaliencyMap> {
    if priors.is_empty() {
        return Err(HcaError::InvalidParameter("at least one prior map is required".into()));
    }
    if let Some(bad) = priors.iter().find(|p| p.dims() != img.dims()) {
        return Err(HcaError::dims(img.dims(), bad.dims()));
    }
    cfg.validate()?;
    let prepared = PreparedImage::new(img, cfg)?;
    let jobs: Vec<(usize, &SaliencyMap)> = priors
        .iter()
        .flat_map(|p| cfg.scales.iter().map(move |&n| (n, p)))
        .collect();
    let maps = jobs
        .par_iter()
        .map(|&(n, p)| run_scale(&prepared, n, cfg, &MapPrior(p)).map(|r| r.map))
        .collect::<Result<Vec<_>>>()?;
    Ok(cca_fuse(&MapStack::new(maps)?, &cfg.cca))
}

/// CCA fusion of at least two external maps.
pub fn fuse_maps(maps: &[SaliencyMap], cfg: &PipelineConfig) -> Result<SaliencyMap> {
    if maps.len() < 2 {
        return Err(HcaError::InvalidParameter(format!(
            "fusion needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    cfg.cca.validate()?;
    Ok(cca_fuse(&MapStack::new(maps.to_vec())?, &cfg.cca))
}
