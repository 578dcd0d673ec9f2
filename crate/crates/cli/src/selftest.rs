//! Built-in oracle suite behind `hca selftest`.
//!
//! Each check pits the library against a deliberately naive reference
//! written here. The first failing property aborts the run.

use hca_core::cca::{cca_fuse, histogram, otsu_bin, CcaParams, MapStack};
use hca_core::eval::{f_measure, mae, pr_curve, GroundTruth};
use hca_core::features::SuperpixelDescriptors;
use hca_core::sca::{graph_from_adjacency, impact_matrix, sca_evolve, PriorVector, ScaParams};
use hca_core::SaliencyMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn(&mut ChaCha8Rng, f64) -> Result<String, String>;

pub fn run(perturb_lambda: f64) -> Result<Vec<String>, String> {
    let checks: [(&str, Check); 4] = [
        ("sca-oracle-equivalence", sca_equivalence),
        ("cca-oracle-equivalence", cca_equivalence),
        ("otsu-oracle", otsu_oracle),
        ("metric-hand-checks", metric_checks),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut report = Vec::new();
    for (name, check) in checks {
        match check(&mut rng, perturb_lambda) {
            Ok(detail) => report.push(format!("ok   {name}: {detail}")),
            Err(detail) => return Err(format!("{name}: {detail}")),
        }
    }
    Ok(report)
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for i in 1..n {
        link(i - 1, i, &mut adj);
    }
    for _ in 0..n {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..6)).min(n - 1);
        link(a, b, &mut adj);
    }
    adj
}

fn sca_equivalence(rng: &mut ChaCha8Rng, _: f64) -> Result<String, String> {
    let params = ScaParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.gen_range(10..80);
        let adj = random_adjacency(rng, n);
        let boundary: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        let feats: Vec<f64> = (0..n * 3).map(|_| rng.gen()).collect();
        let prior: Vec<f64> = (0..n).map(|_| rng.gen()).collect();

        let desc = SuperpixelDescriptors::from_tables(n, vec![3], vec![1.0], vec![feats.clone()])
            .map_err(|e| e.to_string())?;
        let graph = graph_from_adjacency(&adj, &boundary);
        let mats = impact_matrix(&desc, &graph, &params).map_err(|e| e.to_string())?;
        let fast = sca_evolve(&PriorVector::new(prior.clone()).unwrap(), &mats, &params);

        // reference: dense matrices built from scratch, per-cell loop
        let mut nb = vec![vec![false; n]; n];
        for i in 0..n {
            for &k in &adj[i] {
                nb[i][k] = true;
                for &j in &adj[k] {
                    nb[i][j] = true;
                }
            }
        }
        for &i in &boundary {
            for &j in &boundary {
                nb[i][j] = true;
            }
        }
        let mut f = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && nb[i][j] {
                    let d: f64 = (0..3).map(|c| (feats[i * 3 + c] - feats[j * 3 + c]).powi(2)).sum::<f64>().sqrt();
                    f[i][j] = (-d / params.sigma_f2).exp();
                }
            }
        }
        let c: Vec<f64> = f.iter().map(|row| 1.0 / row.iter().cloned().fold(0.0, f64::max)).collect();
        let (lo, hi) = c.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let cstar: Vec<f64> = c.iter().map(|v| params.a * (v - lo) / (hi - lo) + params.b).collect();
        let mut s = prior.clone();
        for _ in 0..params.iterations {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let d: f64 = f[i].iter().sum();
                let mut acc = 0.0;
                for j in 0..n {
                    acc += f[i][j] / d * s[j];
                }
                next[i] = cstar[i] * s[i] + (1.0 - cstar[i]) * acc;
            }
            s = next;
        }
        for (a, b) in fast.values().iter().zip(&s) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst < 1e-9 {
        Ok(format!("max diff {worst:.2e}"))
    } else {
        Err(format!("matrix and per-cell updates differ by {worst:.3e}"))
    }
}

fn cca_equivalence(rng: &mut ChaCha8Rng, perturb_lambda: f64) -> Result<String, String> {
    let reference = CcaParams::default();
    let params = CcaParams { lambda: reference.lambda + perturb_lambda, ..reference };
    let (w, h, m) = (8usize, 8usize, 3usize);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let layers: Vec<Vec<f64>> = (0..m).map(|_| (0..w * h).map(|_| rng.gen()).collect()).collect();
        let maps: Vec<SaliencyMap> = layers.iter().map(|l| SaliencyMap::new(w, h, l.clone()).unwrap()).collect();
        let stack = MapStack::new(maps).map_err(|e| e.to_string())?;
        let gammas = stack.gammas().to_vec();
        let fused = cca_fuse(&stack, &params);

        let logit = |s: f64| {
            let s = s.clamp(reference.epsilon, 1.0 - reference.epsilon);
            (s / (1.0 - s)).ln()
        };
        let mut state = layers;
        for _ in 0..reference.iterations {
            let mut next = state.clone();
            for layer in 0..m {
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        let mut sigma = 0i32;
                        for (k, other) in state.iter().enumerate() {
                            for (dx, dy) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                                if k == layer && (dx, dy) == (0, 0) {
                                    continue;
                                }
                                let (qx, qy) = (x + dx, y + dy);
                                if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                                    continue;
                                }
                                let d = other[(qy * w as i64 + qx) as usize] - gammas[k];
                                sigma += if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 };
                            }
                        }
                        let p = (y * w as i64 + x) as usize;
                        let l = logit(state[layer][p]) + f64::from(sigma) * reference.lambda;
                        next[layer][p] = 1.0 / (1.0 + (-l).exp());
                    }
                }
            }
            state = next;
        }
        for p in 0..w * h {
            let mean = state.iter().map(|l| l[p]).sum::<f64>() / m as f64;
            worst = worst.max((fused.values()[p] - mean).abs());
        }
    }
    if worst < 1e-12 {
        Ok(format!("max diff {worst:.2e}"))
    } else {
        Err(format!("cuboid update differs from brute force by {worst:.3e}"))
    }
}

fn otsu_oracle(rng: &mut ChaCha8Rng, _: f64) -> Result<String, String> {
    for case in 0..200 {
        let density = rng.gen_range(0.05..1.0);
        let hist: [u64; 256] =
            std::array::from_fn(|_| if rng.gen_bool(density) { rng.gen_range(0..500) } else { 0 });
        let mut best: Option<(usize, f64)> = None;
        let total: f64 = hist.iter().sum::<u64>() as f64;
        for t in 1..256 {
            let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
            for (b, &c) in hist.iter().enumerate() {
                if b < t {
                    n0 += c as f64;
                    s0 += (b as u64 * c) as f64;
                } else {
                    n1 += c as f64;
                    s1 += (b as u64 * c) as f64;
                }
            }
            if n0 > 0.0 && n1 > 0.0 {
                let v = n0 / total * (n1 / total) * (s0 / n0 - s1 / n1).powi(2);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((t, v));
                }
            }
        }
        let expected = best.map(|(t, _)| t);
        if otsu_bin(&hist) != expected {
            return Err(format!("case {case}: got {:?}, exhaustive search gives {expected:?}", otsu_bin(&hist)));
        }
    }
    let two = SaliencyMap::new(2, 1, vec![0.0, 1.0]).unwrap();
    if otsu_bin(&histogram(two.values())).is_none() {
        return Err("two-level map produced no threshold".into());
    }
    Ok("200 histograms".into())
}

fn metric_checks(_: &mut ChaCha8Rng, _: f64) -> Result<String, String> {
    let f = f_measure(0.8, 0.5, 0.3);
    if (f - 0.70270).abs() > 1e-5 {
        return Err(format!("f_measure(0.8, 0.5, 0.3) = {f}"));
    }
    let gt = GroundTruth::new(4, 1, vec![true, false, true, false]).unwrap();
    let exact = mae(&gt.to_map(), &gt).map_err(|e| e.to_string())?;
    if exact != 0.0 {
        return Err(format!("mae(gt, gt) = {exact}"));
    }
    // bytes 0, 100, 200, 255 against mask 1010: at t = 128, SF = {200, 255}, hits = {200}
    let map = SaliencyMap::new(4, 1, [0u8, 100, 200, 255].iter().map(|&b| f64::from(b) / 255.0).collect()).unwrap();
    let curves = pr_curve(&map, &gt).map_err(|e| e.to_string())?;
    if curves.precision[128] != 0.5 || curves.recall[128] != 0.5 {
        return Err(format!("pr at 128 = ({}, {})", curves.precision[128], curves.recall[128]));
    }
    Ok("f-measure, mae, pr counts".into())
}
