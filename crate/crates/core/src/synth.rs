//! Synthetic scenes with known masks: one flat-coloured shape on a flat
//! background, plus mild Gaussian pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::eval::GroundTruth;
use crate::imaging::{rgb_pixel_to_lab, RgbImage, SaliencyMap};

/// Minimum distance between object and background in scaled Lab units
/// (the built-in feature space).
pub const MIN_CONTRAST: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Fraction of the image covered by the object.
    pub area: (f64, f64),
    /// Per-channel noise standard deviation in 8-bit units.
    pub noise_sigma: f64,
    /// Force the object against one image border.
    pub touch_border: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec { width: 300, height: 300, area: (0.05, 0.30), noise_sigma: 5.0, touch_border: false }
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub image: RgbImage,
    pub mask: GroundTruth,
    pub shape: Shape,
}

fn scaled_lab(rgb: [u8; 3]) -> [f64; 3] {
    let [l, a, b] = rgb_pixel_to_lab(rgb);
    [l / 100.0, (a + 128.0) / 255.0, (b + 128.0) / 255.0]
}

fn contrast(p: [u8; 3], q: [u8; 3]) -> f64 {
    let (a, b) = (scaled_lab(p), scaled_lab(q));
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Background and object colours at least [`MIN_CONTRAST`] apart.
pub fn contrasting_colors(rng: &mut impl Rng) -> ([u8; 3], [u8; 3]) {
    loop {
        let bg: [u8; 3] = rng.gen();
        let fg: [u8; 3] = rng.gen();
        if contrast(bg, fg) >= MIN_CONTRAST {
            return (bg, fg);
        }
    }
}

pub fn generate(spec: &SceneSpec, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let (bg, fg) = contrasting_colors(&mut rng);
    let shape = if rng.gen_bool(0.5) { Shape::Rectangle } else { Shape::Ellipse };
    let area = rng.gen_range(spec.area.0..=spec.area.1) * (w * h) as f64;
    let aspect: f64 = rng.gen_range(0.6..1.6);
    // ellipse area is pi/4 of its bounding box
    let box_area = if shape == Shape::Ellipse { area * 4.0 / std::f64::consts::PI } else { area };
    let bw = (box_area * aspect).sqrt().min(w as f64 - 2.0);
    let bh = (box_area / bw).min(h as f64 - 2.0);

    let (x0, y0) = if spec.touch_border {
        let free_x = w as f64 - bw;
        let free_y = h as f64 - bh;
        match rng.gen_range(0..4) {
            0 => (rng.gen_range(0.0..=free_x), 0.0),
            1 => (rng.gen_range(0.0..=free_x), free_y),
            2 => (0.0, rng.gen_range(0.0..=free_y)),
            _ => (free_x, rng.gen_range(0.0..=free_y)),
        }
    } else {
        let margin_x = 0.1 * w as f64;
        let margin_y = 0.1 * h as f64;
        let x = rng.gen_range(margin_x.min(w as f64 - bw - margin_x)..=(w as f64 - bw - margin_x).max(margin_x));
        let y = rng.gen_range(margin_y.min(h as f64 - bh - margin_y)..=(h as f64 - bh - margin_y).max(margin_y));
        (x, y)
    };

    let (cx, cy) = (x0 + bw / 2.0, y0 + bh / 2.0);
    let inside = |x: usize, y: usize| -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        match shape {
            Shape::Rectangle => px >= x0 && px < x0 + bw && py >= y0 && py < y0 + bh,
            Shape::Ellipse => {
                let dx = (px - cx) / (bw / 2.0);
                let dy = (py - cy) / (bh / 2.0);
                dx * dx + dy * dy <= 1.0
            }
        }
    };

    let noise = Normal::new(0.0, spec.noise_sigma).expect("noise sigma is finite");
    let mut mask = Vec::with_capacity(w * h);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let fgnd = inside(x, y);
            mask.push(fgnd);
            let base = if fgnd { fg } else { bg };
            for c in base {
                let v = f64::from(c) + noise.sample(&mut rng);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Scene {
        image: RgbImage::new(w, h, data).expect("buffer sized from dimensions"),
        mask: GroundTruth::new(w, h, mask).expect("mask sized from dimensions"),
        shape,
    }
}

/// Replace a `fraction` of pixels with 0 or 1 (equal odds).
pub fn salt_and_pepper(map: &SaliencyMap, fraction: f64, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = map
        .values()
        .iter()
        .map(|&v| {
            if rng.gen_bool(fraction) {
                if rng.gen_bool(0.5) { 1.0 } else { 0.0 }
            } else {
                v
            }
        })
        .collect();
    SaliencyMap::new(map.width(), map.height(), values).expect("values stay in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_sized() {
        let spec = SceneSpec::default();
        let a = generate(&spec, 4);
        let b = generate(&spec, 4);
        assert_eq!(a.image, b.image);
        let frac = a.mask.foreground() as f64 / (300.0 * 300.0);
        assert!((0.04..=0.31).contains(&frac), "area fraction {frac}");
    }

    #[test]
    fn border_variant_touches_border() {
        let spec = SceneSpec { touch_border: true, ..Default::default() };
        for seed in 0..10 {
            let s = generate(&spec, seed);
            let (w, h) = s.mask.dims();
            let m = s.mask.mask();
            let touches = (0..w).any(|x| m[x] || m[(h - 1) * w + x])
                || (0..h).any(|y| m[y * w] || m[y * w + w - 1]);
            assert!(touches, "seed {seed}");
        }
    }

    #[test]
    fn salt_and_pepper_rate() {
        let base = SaliencyMap::constant(100, 100, 0.5).unwrap();
        let noisy = salt_and_pepper(&base, 0.2, 1);
        let changed = noisy.values().iter().filter(|&&v| v != 0.5).count();
        assert!((1800..2200).contains(&changed), "{changed}");
    }
}
