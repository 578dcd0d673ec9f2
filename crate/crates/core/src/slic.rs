//! SLIC superpixels on a CIELAB image.
//!
//! Centres start on a regular grid (nudged to the lowest-gradient pixel of
//! their 3x3 neighbourhood), then 10 assignment/update sweeps run with no
//! convergence test. Afterwards every label is reduced to one 4-connected
//! region: stray fragments are merged into the largest adjacent settled
//! region, ties going to the lowest label.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use crate::error::{HcaError, Result};
use crate::imaging::LabImage;

pub const DEFAULT_COMPACTNESS: f64 = 10.0;
const SWEEPS: usize = 10;

/// Per-pixel superpixel labels plus per-superpixel statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelSegmentation {
    width: usize,
    height: usize,
    labels: Vec<usize>,
    count: usize,
    /// `[x, y, L, a, b]` means; colour terms are zero when built without an image.
    centroids: Vec<[f64; 5]>,
    sizes: Vec<usize>,
    on_boundary: Vec<bool>,
}

impl SuperpixelSegmentation {
    /// Wrap an existing label map. Ids must be dense `0..count`.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: Vec<usize>,
        lab: Option<&LabImage>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(HcaError::Format(format!(
                "label map of {} entries does not fit {width}x{height}",
                labels.len()
            )));
        }
        if let Some(lab) = lab {
            if lab.dims() != (width, height) {
                return Err(HcaError::dims((width, height), lab.dims()));
            }
        }
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; count];
        let mut sums = vec![[0.0f64; 5]; count];
        let mut on_boundary = vec![false; count];
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let l = labels[p];
                sizes[l] += 1;
                let color = lab.map_or([0.0; 3], |img| img.pixels()[p]);
                let s = &mut sums[l];
                s[0] += x as f64;
                s[1] += y as f64;
                s[2] += color[0];
                s[3] += color[1];
                s[4] += color[2];
                if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                    on_boundary[l] = true;
                }
            }
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(HcaError::Format(format!("label ids are not dense: {empty} is unused")));
        }
        let centroids = sums
            .iter()
            .zip(&sizes)
            .map(|(s, &n)| s.map(|v| v / n as f64))
            .collect();
        Ok(SuperpixelSegmentation { width, height, labels, count, centroids, sizes, on_boundary })
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

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn centroids(&self) -> &[[f64; 5]] {
        &self.centroids
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.on_boundary[id]
    }

    /// Ids of superpixels touching the image border, ascending.
    pub fn boundary_set(&self) -> Vec<usize> {
        (0..self.count).filter(|&i| self.on_boundary[i]).collect()
    }

    /// Paint each pixel with its superpixel's value.
    pub fn project(&self, per_superpixel: &[f64]) -> Vec<f64> {
        assert_eq!(per_superpixel.len(), self.count);
        self.labels.iter().map(|&l| per_superpixel[l]).collect()
    }

    /// Debug view: labels as a colour-quantized RGB PNG.
    pub fn write_label_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(self.labels.len() * 3);
        for &l in &self.labels {
            let h = (l as u32).wrapping_mul(2_654_435_761);
            buf.extend_from_slice(&[(h >> 24) as u8 | 0x20, (h >> 16) as u8 | 0x20, (h >> 8) as u8 | 0x20]);
        }
        image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| HcaError::io(path, std::io::Error::other(e.to_string())))
    }
}

/// Symmetric, irreflexive 4-connected adjacency between superpixels.
/// Entry `i` lists the neighbours of `i` in ascending order.
pub fn adjacency(seg: &SuperpixelSegmentation) -> Vec<Vec<usize>> {
    let mut sets = vec![BTreeSet::new(); seg.count];
    let (w, h) = seg.dims();
    for y in 0..h {
        for x in 0..w {
            let a = seg.labels[y * w + x];
            if x + 1 < w {
                let b = seg.labels[y * w + x + 1];
                if a != b {
                    sets[a].insert(b);
                    sets[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = seg.labels[(y + 1) * w + x];
                if a != b {
                    sets[a].insert(b);
                    sets[b].insert(a);
                }
            }
        }
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Grid of initial centres whose product is close to `n`.
fn grid_shape(width: usize, height: usize, n: usize) -> (usize, usize) {
    let ideal = (n as f64 * width as f64 / height as f64).sqrt().round() as usize;
    let mut cols = ideal.clamp(1, width.min(n));
    let rows = ((n as f64 / cols as f64).round() as usize).clamp(1, height);
    cols = ((n as f64 / rows as f64).round() as usize).clamp(1, width);
    (cols, rows)
}

fn gradient(lab: &LabImage, x: usize, y: usize) -> f64 {
    let (w, h) = lab.dims();
    let dist2 = |p: [f64; 3], q: [f64; 3]| -> f64 { (0..3).map(|c| (p[c] - q[c]).powi(2)).sum() };
    let gx = dist2(lab.at((x + 1).min(w - 1), y), lab.at(x.saturating_sub(1), y));
    let gy = dist2(lab.at(x, (y + 1).min(h - 1)), lab.at(x, y.saturating_sub(1)));
    gx + gy
}

pub fn slic_segment(
    lab: &LabImage,
    n_target: usize,
    compactness: f64,
) -> Result<SuperpixelSegmentation> {
    let (w, h) = lab.dims();
    let npix = w * h;
    if n_target < 2 || n_target > npix {
        return Err(HcaError::InvalidParameter(format!(
            "superpixel count {n_target} outside [2, {npix}]"
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(HcaError::InvalidParameter(format!("compactness must be positive, got {compactness}")));
    }

    let (cols, rows) = grid_shape(w, h, n_target);
    let k = cols * rows;
    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(k);
    for j in 0..rows {
        for i in 0..cols {
            let cx = (((i as f64 + 0.5) * w as f64 / cols as f64) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * h as f64 / rows as f64) as usize).min(h - 1);
            let (mut bx, mut by) = (cx, cy);
            let mut best = gradient(lab, cx, cy);
            for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(lab, nx, ny);
                    if g < best {
                        best = g;
                        bx = nx;
                        by = ny;
                    }
                }
            }
            let c = lab.at(bx, by);
            centers.push([bx as f64, by as f64, c[0], c[1], c[2]]);
        }
    }

    let step = (npix as f64 / k as f64).sqrt();
    let spatial_weight = (compactness / step).powi(2);
    let radius_x = (w as f64 / cols as f64).ceil() as isize;
    let radius_y = (h as f64 / rows as f64).ceil() as isize;

    let mut labels: Vec<usize> = (0..npix)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            (y * rows / h) * cols + x * cols / w
        })
        .collect();
    let mut dist = vec![f64::INFINITY; npix];
    let pixels = lab.pixels();

    for _ in 0..SWEEPS {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (id, c) in centers.iter().enumerate() {
            let (cx, cy) = (c[0].round() as isize, c[1].round() as isize);
            let x0 = (cx - radius_x).max(0) as usize;
            let x1 = ((cx + radius_x) as usize).min(w - 1);
            let y0 = (cy - radius_y).max(0) as usize;
            let y1 = ((cy + radius_y) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let px = pixels[p];
                    let dc = (px[0] - c[2]).powi(2) + (px[1] - c[3]).powi(2) + (px[2] - c[4]).powi(2);
                    let ds = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    let d = dc + ds * spatial_weight;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = id;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 5]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in labels.iter().enumerate() {
            let px = pixels[p];
            let s = &mut sums[l];
            s[0] += (p % w) as f64;
            s[1] += (p / w) as f64;
            s[2] += px[0];
            s[3] += px[1];
            s[4] += px[2];
            counts[l] += 1;
        }
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = s.map(|v| v / n as f64);
            }
        }
    }

    let labels = enforce_connectivity(w, h, &labels, k);
    SuperpixelSegmentation::from_labels(w, h, labels, Some(lab))
}

/// Keep the largest 4-connected fragment of every label and merge the
/// rest into their largest settled neighbour. Returns dense labels
/// numbered in scan order of first appearance.
fn enforce_connectivity(w: usize, h: usize, labels: &[usize], nlabels: usize) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let npix = w * h;
    let mut comp_of = vec![UNSET; npix];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..npix {
        if comp_of[start] != UNSET {
            continue;
        }
        let id = comp_label.len();
        let label = labels[start];
        comp_of[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp_of[q] == UNSET && labels[q] == label {
                    comp_of[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comp_label.push(label);
        comp_size.push(size);
    }

    let ncomp = comp_label.len();
    let mut dominant = vec![UNSET; nlabels];
    for c in 0..ncomp {
        let l = comp_label[c];
        if dominant[l] == UNSET || comp_size[c] > comp_size[dominant[l]] {
            dominant[l] = c;
        }
    }
    let mut settled: Vec<bool> = (0..ncomp).map(|c| dominant[comp_label[c]] == c).collect();
    let mut label_size = vec![0usize; nlabels];
    for c in 0..ncomp {
        if settled[c] {
            label_size[comp_label[c]] = comp_size[c];
        }
    }

    if settled.iter().any(|s| !s) {
        let mut comp_adj = vec![BTreeSet::new(); ncomp];
        for y in 0..h {
            for x in 0..w {
                let a = comp_of[y * w + x];
                if x + 1 < w {
                    let b = comp_of[y * w + x + 1];
                    if a != b {
                        comp_adj[a].insert(b);
                        comp_adj[b].insert(a);
                    }
                }
                if y + 1 < h {
                    let b = comp_of[(y + 1) * w + x];
                    if a != b {
                        comp_adj[a].insert(b);
                        comp_adj[b].insert(a);
                    }
                }
            }
        }
        loop {
            let mut pending = false;
            let mut progressed = false;
            for c in 0..ncomp {
                if settled[c] {
                    continue;
                }
                let target = comp_adj[c]
                    .iter()
                    .filter(|&&d| settled[d])
                    .map(|&d| comp_label[d])
                    .min_by(|&a, &b| label_size[b].cmp(&label_size[a]).then(a.cmp(&b)));
                match target {
                    Some(l) => {
                        comp_label[c] = l;
                        label_size[l] += comp_size[c];
                        settled[c] = true;
                        progressed = true;
                    }
                    None => pending = true,
                }
            }
            if !pending {
                break;
            }
            assert!(progressed, "orphan fragments with no settled neighbour");
        }
    }

    let mut remap = vec![UNSET; nlabels];
    let mut next = 0;
    comp_of
        .iter()
        .map(|&c| {
            let l = comp_label[c];
            if remap[l] == UNSET {
                remap[l] = next;
                next += 1;
            }
            remap[l]
        })
        .collect()
}
