//! Naive reference implementations and fixtures shared by the CLI test targets.
#![allow(dead_code)]

use std::path::Path;

use hca_core::imaging::write_rgb_png;
use hca_core::synth::{generate, SceneSpec};
use hca_core::RgbImage;
use rand::Rng;

/// Random symmetric adjacency with every node on a spanning path.
pub fn random_adjacency(rng: &mut impl Rng, n: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    let order: Vec<usize> = {
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            v.swap(i, rng.gen_range(0..=i));
        }
        v
    };
    for w in order.windows(2) {
        adj[w[0]][w[1]] = true;
        adj[w[1]][w[0]] = true;
    }
    let extra = rng.gen_range(0..2 * n);
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    adj
}

pub fn adjacency_lists(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    adj.iter().map(|row| (0..row.len()).filter(|&j| row[j]).collect()).collect()
}

/// One SCA instance described densely.
pub struct DenseSca {
    pub f: Vec<Vec<f64>>,
    pub cstar: Vec<f64>,
}

/// Adjacent, adjacent-of-adjacent, and boundary-to-boundary pairs.
pub fn dense_neighbourhood(adj: &[Vec<bool>], boundary: &[bool]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut nb = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if !adj[i][k] {
                continue;
            }
            nb[i][k] = true;
            for j in 0..n {
                if adj[k][j] {
                    nb[i][j] = true;
                }
            }
        }
        for j in 0..n {
            if boundary[i] && boundary[j] {
                nb[i][j] = true;
            }
        }
        nb[i][i] = false;
    }
    nb
}

/// Impact factors and coherence straight from their definitions.
/// `feats[l][i]` is the descriptor of cell `i` in layer `l`.
pub fn dense_sca(nb: &[Vec<bool>], feats: &[Vec<Vec<f64>>], rho: &[f64], sigma2: f64, a: f64, b: f64) -> DenseSca {
    let n = nb.len();
    let mut f = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if nb[i][j] {
                let mut g = 0.0;
                for (layer, w) in feats.iter().zip(rho) {
                    let d2: f64 = layer[i].iter().zip(&layer[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                    g += w * d2.sqrt();
                }
                f[i][j] = (-g / sigma2).exp();
            }
        }
    }
    let c: Vec<f64> = f
        .iter()
        .map(|row| 1.0 / row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cstar = c
        .iter()
        .map(|&ci| if hi > lo { a * (ci - lo) / (hi - lo) + b } else { b + a / 2.0 })
        .collect();
    DenseSca { f, cstar }
}

/// Per-cell double-buffered update; returns the state after every step.
pub fn naive_sca(sca: &DenseSca, prior: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let n = prior.len();
    let mut cur = prior.to_vec();
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let degree: f64 = sca.f[i].iter().sum();
            let mut neighbour = 0.0;
            for j in 0..n {
                neighbour += sca.f[i][j] / degree * cur[j];
            }
            next[i] = sca.cstar[i] * cur[i] + (1.0 - sca.cstar[i]) * neighbour;
        }
        cur = next;
        history.push(cur.clone());
    }
    history
}

fn naive_sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Every (layer, pixel) neighbour of `(m, x, y)` in an `m_total x h x w` cuboid.
pub fn cuboid_neighbours(m: usize, x: usize, y: usize, m_total: usize, w: usize, h: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for k in 0..m_total {
        for (dx, dy) in [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            if k == m && dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.push((k, nx as usize, ny as usize));
            }
        }
    }
    out
}

/// Brute-force cuboid automaton. Returns the layers after `steps` and the
/// largest |evidence| seen.
pub fn naive_cca(
    layers: &[Vec<f64>],
    gammas: &[f64],
    w: usize,
    h: usize,
    lambda: f64,
    eps: f64,
    steps: usize,
) -> (Vec<Vec<f64>>, i32) {
    let m_total = layers.len();
    let mut cur = layers.to_vec();
    let mut widest = 0;
    for _ in 0..steps {
        let mut next = cur.clone();
        for m in 0..m_total {
            for y in 0..h {
                for x in 0..w {
                    let mut sigma = 0;
                    for (k, nx, ny) in cuboid_neighbours(m, x, y, m_total, w, h) {
                        sigma += naive_sign(cur[k][ny * w + nx] - gammas[k]);
                    }
                    widest = widest.max(sigma.abs());
                    let s = cur[m][y * w + x].max(eps).min(1.0 - eps);
                    let l = (s / (1.0 - s)).ln() + lambda * sigma as f64;
                    next[m][y * w + x] = 1.0 / (1.0 + (-l).exp());
                }
            }
        }
        cur = next;
    }
    (cur, widest)
}

/// Exhaustive between-class variance over cuts `t = 1..=255`
/// (bins `< t` versus `>= t`); earliest maximum wins.
pub fn exhaustive_otsu(hist: &[u64; 256]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let mut best: Option<(usize, f64)> = None;
    for t in 1..256 {
        let n0: u64 = hist[..t].iter().sum();
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = hist[..t].iter().enumerate().map(|(b, &c)| b as u64 * c).sum();
        let s1: u64 = hist[t..].iter().enumerate().map(|(b, &c)| (b + t) as u64 * c).sum();
        // n0 n1 (mu0 - mu1)^2 scaled by n0 n1 to stay in integers
        let diff = s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128;
        let score = (diff * diff) as f64 / (n0 as f64 * n1 as f64);
        if best.is_none_or(|(_, v)| score > v) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| t)
}

/// Write a synthetic scene to `dir/name.png` and return its mask as a PNG too.
pub fn write_scene(dir: &Path, name: &str, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let scene = generate(&SceneSpec { width: 120, height: 90, ..Default::default() }, seed);
    let img = dir.join(format!("{name}.png"));
    let gt = dir.join(format!("{name}_gt.png"));
    write_rgb_png(&scene.image, &img).unwrap();
    hca_core::imaging::write_gray_png(&scene.mask.to_map(), &gt).unwrap();
    (img, gt)
}

pub fn square_image(w: usize, h: usize, side: usize) -> RgbImage {
    let mut img = RgbImage::filled(w, h, [128, 128, 128]).unwrap();
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            img.set_pixel(x, y, [220, 30, 30]);
        }
    }
    img
}
