//! Per-pixel feature fields, superpixel pooling and the weighted
//! multi-layer distance between superpixels.
//!
//! Feature sources are pluggable: a [`FeatureProvider`] turns an image into a
//! [`FeatureField`], and a [`FeatureRegistry`] resolves provider names (or
//! file paths) given on the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{HcaError, Result};
use crate::imaging::{resample, rgb_to_lab, LabImage, ResizeNearest, RgbImage};
use crate::slic::SuperpixelSegmentation;

/// Dense `height x width x channels` tensor, channels contiguous per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureField {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HcaError::InvalidParameter(format!(
                "feature field dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels == 0 {
            return Err(HcaError::Format("feature field has zero channels".into()));
        }
        if data.len() != width * height * channels {
            return Err(HcaError::Format(format!(
                "feature payload has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(HcaError::Format("feature field contains non-finite values".into()));
        }
        Ok(FeatureField { width, height, channels, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

impl ResizeNearest for FeatureField {
    fn resize_nearest(&self, new_width: usize, new_height: usize) -> Self {
        let data = resample(&self.data, self.width, self.height, self.channels, new_width, new_height);
        FeatureField { width: new_width, height: new_height, channels: self.channels, data }
    }
}

/// Built-in low-level features: `(L/100, (a+128)/255, (b+128)/255)`.
pub fn lab_feature_field(lab: &LabImage) -> FeatureField {
    let data = lab
        .pixels()
        .iter()
        .flat_map(|&[l, a, b]| [l / 100.0, (a + 128.0) / 255.0, (b + 128.0) / 255.0])
        .collect();
    FeatureField { width: lab.width(), height: lab.height(), channels: 3, data }
}

const HCAF_MAGIC: &[u8; 4] = b"HCAF";
const HCAF_VERSION: u32 = 1;

/// Decode an HCAF v1 tensor from any reader.
pub fn read_hcaf(mut reader: impl Read) -> Result<FeatureField> {
    let mut header = [0u8; 20];
    reader
        .read_exact(&mut header)
        .map_err(|_| HcaError::Format("HCAF header truncated".into()))?;
    if &header[..4] != HCAF_MAGIC {
        return Err(HcaError::Format(format!("bad HCAF magic {:?}", &header[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, height, width, channels) = (word(0), word(1), word(2), word(3));
    if version != HCAF_VERSION {
        return Err(HcaError::Format(format!("unsupported HCAF version {version}")));
    }
    if channels == 0 {
        return Err(HcaError::Format("HCAF tensor has zero channels".into()));
    }
    if height == 0 || width == 0 {
        return Err(HcaError::Format(format!("HCAF tensor is {width}x{height}")));
    }
    let count = (height as usize)
        .checked_mul(width as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .ok_or_else(|| HcaError::Format("HCAF dimensions overflow".into()))?;
    let mut payload = Vec::new();
    reader
        .take(count as u64 * 4 + 1)
        .read_to_end(&mut payload)
        .map_err(|e| HcaError::Format(format!("HCAF payload unreadable: {e}")))?;
    if payload.len() != count * 4 {
        return Err(HcaError::Format(format!(
            "HCAF payload has {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    FeatureField::new(width as usize, height as usize, channels as usize, data)
}

/// Encode a field as HCAF v1. Values are narrowed to `f32`.
pub fn write_hcaf(field: &FeatureField, mut writer: impl Write) -> std::io::Result<()> {
    writer.write_all(HCAF_MAGIC)?;
    for v in [HCAF_VERSION, field.height as u32, field.width as u32, field.channels as u32] {
        writer.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(field.data.len() * 4);
    for &v in &field.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    writer.write_all(&buf)
}

/// Load an HCAF file, resizing to the target dimensions when they differ.
pub fn load_feature_tensor(
    path: impl AsRef<Path>,
    target_width: usize,
    target_height: usize,
) -> Result<FeatureField> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HcaError::io(path, e))?;
    let field = read_hcaf(std::io::BufReader::new(file)).map_err(|e| match e {
        HcaError::Format(msg) => HcaError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if field.dims() == (target_width, target_height) {
        Ok(field)
    } else {
        Ok(field.resize_nearest(target_width, target_height))
    }
}

pub fn save_feature_tensor(field: &FeatureField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| HcaError::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_hcaf(field, &mut writer)
        .and_then(|_| writer.flush())
        .map_err(|e| HcaError::io(path, e))
}

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Feature layers with their mixing weights.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    layers: Vec<FeatureField>,
    weights: Vec<f64>,
}

impl FeatureStack {
    pub fn new(layers: Vec<FeatureField>, weights: Vec<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(HcaError::InvalidParameter("feature stack needs at least one layer".into()));
        }
        if layers.len() != weights.len() {
            return Err(HcaError::InvalidParameter(format!(
                "{} feature layers but {} weights",
                layers.len(),
                weights.len()
            )));
        }
        validate_weights(&weights)?;
        let dims = layers[0].dims();
        if let Some(bad) = layers.iter().find(|l| l.dims() != dims) {
            return Err(HcaError::dims(dims, bad.dims()));
        }
        Ok(FeatureStack { layers, weights })
    }

    pub fn single(layer: FeatureField) -> Self {
        FeatureStack { layers: vec![layer], weights: vec![1.0] }
    }

    pub fn layers(&self) -> &[FeatureField] {
        &self.layers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dims(&self) -> (usize, usize) {
        self.layers[0].dims()
    }
}

/// Weights must be non-negative and sum to one.
pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(HcaError::InvalidParameter(format!("layer weight {w} is negative or non-finite")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(HcaError::InvalidParameter(format!("layer weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Per-superpixel mean feature vectors, one table per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelDescriptors {
    count: usize,
    channels: Vec<usize>,
    weights: Vec<f64>,
    // layer -> count * channels
    means: Vec<Vec<f64>>,
}

impl SuperpixelDescriptors {
    /// Build directly from per-layer tables of `count * channels[l]` values.
    pub fn from_tables(
        count: usize,
        channels: Vec<usize>,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if channels.len() != weights.len() || channels.len() != means.len() || channels.is_empty() {
            return Err(HcaError::InvalidParameter("descriptor layer counts disagree".into()));
        }
        validate_weights(&weights)?;
        for (c, m) in channels.iter().zip(&means) {
            if *c == 0 || m.len() != count * c {
                return Err(HcaError::Format(format!(
                    "descriptor table has {} values, expected {}",
                    m.len(),
                    count * c
                )));
            }
        }
        Ok(SuperpixelDescriptors { count, channels, weights, means })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn layer_count(&self) -> usize {
        self.channels.len()
    }

    pub fn descriptor(&self, layer: usize, id: usize) -> &[f64] {
        let c = self.channels[layer];
        &self.means[layer][id * c..(id + 1) * c]
    }

    /// `g(i, j) = sum_l rho_l * ||d_l(i) - d_l(j)||_2`.
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        (0..self.channels.len())
            .map(|l| {
                let (a, b) = (self.descriptor(l, i), self.descriptor(l, j));
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                self.weights[l] * sq.sqrt()
            })
            .sum()
    }
}

pub fn pool_descriptors(
    stack: &FeatureStack,
    seg: &SuperpixelSegmentation,
) -> Result<SuperpixelDescriptors> {
    if stack.dims() != seg.dims() {
        return Err(HcaError::dims(seg.dims(), stack.dims()));
    }
    let n = seg.count();
    let labels = seg.labels();
    let means = stack
        .layers
        .iter()
        .map(|layer| {
            let c = layer.channels;
            let mut sums = vec![0.0; n * c];
            for (p, &l) in labels.iter().enumerate() {
                let src = &layer.data[p * c..(p + 1) * c];
                for (acc, v) in sums[l * c..(l + 1) * c].iter_mut().zip(src) {
                    *acc += v;
                }
            }
            for (id, &size) in seg.sizes().iter().enumerate() {
                sums[id * c..(id + 1) * c].iter_mut().for_each(|v| *v /= size as f64);
            }
            sums
        })
        .collect();
    Ok(SuperpixelDescriptors {
        count: n,
        channels: stack.layers.iter().map(|l| l.channels).collect(),
        weights: stack.weights.clone(),
        means,
    })
}

/// A source of per-pixel features for an image.
pub trait FeatureProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Produce a field with the image's dimensions.
    fn extract(&self, image: &RgbImage, lab: &LabImage) -> Result<FeatureField>;
}

impl fmt::Debug for dyn FeatureProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureProvider({})", self.name())
    }
}

/// CIELAB colour features computed from the image itself.
#[derive(Debug, Default, Clone, Copy)]
pub struct LabFeatures;

impl FeatureProvider for LabFeatures {
    fn name(&self) -> &str {
        "lab"
    }

    fn extract(&self, _image: &RgbImage, lab: &LabImage) -> Result<FeatureField> {
        Ok(lab_feature_field(lab))
    }
}

/// Features exported to an HCAF file by an external network.
#[derive(Debug, Clone)]
pub struct HcafFeatures {
    path: PathBuf,
    label: String,
}

impl HcafFeatures {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let label = format!("hcaf:{}", path.display());
        HcafFeatures { path, label }
    }
}

impl FeatureProvider for HcafFeatures {
    fn name(&self) -> &str {
        &self.label
    }

    fn extract(&self, image: &RgbImage, _lab: &LabImage) -> Result<FeatureField> {
        load_feature_tensor(&self.path, image.width(), image.height())
    }
}

/// Constructs a provider from the argument following its name (possibly empty).
pub type ProviderFactory = fn(&str) -> Result<Box<dyn FeatureProvider>>;

/// Name-indexed table of feature provider constructors.
pub struct FeatureRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl FeatureRegistry {
    pub fn empty() -> Self {
        FeatureRegistry { factories: BTreeMap::new() }
    }

    /// `lab` (built-in colour features) and `hcaf` (tensor files).
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("lab", |arg| {
            if arg.is_empty() {
                Ok(Box::new(LabFeatures))
            } else {
                Err(HcaError::InvalidParameter(format!("lab features take no argument, got {arg:?}")))
            }
        });
        r.register("hcaf", |arg| {
            if arg.is_empty() {
                Err(HcaError::InvalidParameter("hcaf features need a file path".into()))
            } else {
                Ok(Box::new(HcafFeatures::new(arg)))
            }
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: ProviderFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Resolve a source string: a registered name (`lab`), `name=arg`, or a
    /// path whose extension is a registered name (`pool1.hcaf`).
    pub fn resolve(&self, source: &str) -> Result<Box<dyn FeatureProvider>> {
        if let Some(f) = self.factories.get(source) {
            return f("");
        }
        if let Some((name, arg)) = source.split_once('=') {
            if let Some(f) = self.factories.get(name) {
                return f(arg);
            }
        }
        let ext = Path::new(source).extension().and_then(|e| e.to_str());
        match ext.and_then(|e| self.factories.get(e)) {
            Some(f) => f(source),
            None => Err(HcaError::InvalidParameter(format!(
                "unknown feature source {source:?}; known providers: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    /// Parse `src[:w],src[:w],...`. A lone source without a weight gets 1.
    pub fn parse_spec(&self, spec: &str) -> Result<FeatureSource> {
        let mut layers = Vec::new();
        for item in spec.split(',').map(str::trim) {
            if item.is_empty() {
                return Err(HcaError::InvalidParameter(format!("empty entry in feature list {spec:?}")));
            }
            let (source, weight) = match item.rsplit_once(':') {
                Some((src, w)) => match w.parse::<f64>() {
                    Ok(w) => (src, Some(w)),
                    Err(_) => (item, None),
                },
                None => (item, None),
            };
            layers.push((self.resolve(source)?, weight));
        }
        let weights: Vec<f64> = if layers.len() == 1 {
            vec![layers[0].1.unwrap_or(1.0)]
        } else {
            layers
                .iter()
                .map(|(p, w)| {
                    w.ok_or_else(|| {
                        HcaError::InvalidParameter(format!("feature layer {} needs a weight", p.name()))
                    })
                })
                .collect::<Result<_>>()?
        };
        validate_weights(&weights)?;
        Ok(FeatureSource {
            layers: layers.into_iter().map(|(p, _)| p).zip(weights).collect(),
        })
    }
}

/// Weighted list of feature providers making up a [`FeatureStack`].
#[derive(Debug)]
pub struct FeatureSource {
    layers: Vec<(Box<dyn FeatureProvider>, f64)>,
}

impl Default for FeatureSource {
    fn default() -> Self {
        FeatureSource { layers: vec![(Box::new(LabFeatures), 1.0)] }
    }
}

impl FeatureSource {
    pub fn new(layers: Vec<(Box<dyn FeatureProvider>, f64)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(HcaError::InvalidParameter("feature source needs at least one layer".into()));
        }
        validate_weights(&layers.iter().map(|(_, w)| *w).collect::<Vec<_>>())?;
        Ok(FeatureSource { layers })
    }

    pub fn layers(&self) -> impl Iterator<Item = (&dyn FeatureProvider, f64)> {
        self.layers.iter().map(|(p, w)| (p.as_ref(), *w))
    }

    pub fn build(&self, image: &RgbImage, lab: &LabImage) -> Result<FeatureStack> {
        let fields = self
            .layers
            .iter()
            .map(|(p, _)| p.extract(image, lab))
            .collect::<Result<Vec<_>>>()?;
        FeatureStack::new(fields, self.layers.iter().map(|(_, w)| *w).collect())
    }

    /// Convenience: extract features straight from an RGB image.
    pub fn build_for(&self, image: &RgbImage) -> Result<FeatureStack> {
        self.build(image, &rgb_to_lab(image))
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.layers.iter().map(|(p, w)| format!("{}:{w}", p.name())).collect();
        f.write_str(&parts.join(","))
    }
}
