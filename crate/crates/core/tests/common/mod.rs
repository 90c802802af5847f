//! Test-only oracles, independent of the library's persistence code.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toposeg::loss::{topo_loss, topo_loss_grad, total_loss, DiagramMatching};
use toposeg::persistence::Dims;
use toposeg::train::{TinySegmenter, N_PARAMS};
use toposeg::{FiltrationKind, GrayImage, PersistencePoint, Pixel};

/// Brute-force Betti numbers of the pixel set `member` on a `w`×`h` grid.
///
/// β0 is found with a union-find over 4-adjacent member pixels. β1 counts
/// 8-connected components of the non-members after attaching a padding frame
/// around the image, minus the one component that contains the frame.
pub fn oracle_betti(w: usize, h: usize, member: &[bool]) -> (usize, usize) {
    let mut parent: Vec<usize> = (0..w * h).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            i = p[i];
        }
        i
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !member[i] {
                continue;
            }
            for j in [if x + 1 < w { Some(i + 1) } else { None }, if y + 1 < h { Some(i + w) } else { None }]
                .into_iter()
                .flatten()
            {
                if member[j] {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let beta0 = (0..w * h).filter(|&i| member[i] && root(&mut parent, i) == i).count();

    // Padded grid: (w+2)x(h+2), frame cells are always background.
    let (pw, ph) = (w + 2, h + 2);
    let bg = |x: usize, y: usize| x == 0 || y == 0 || x == pw - 1 || y == ph - 1 || !member[(y - 1) * w + (x - 1)];
    let mut label = vec![usize::MAX; pw * ph];
    let mut count = 0;
    for sy in 0..ph {
        for sx in 0..pw {
            if label[sy * pw + sx] != usize::MAX || !bg(sx, sy) {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            label[sy * pw + sx] = count;
            while let Some((x, y)) = queue.pop_front() {
                for ny in y.saturating_sub(1)..=(y + 1).min(ph - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(pw - 1) {
                        if label[ny * pw + nx] == usize::MAX && bg(nx, ny) {
                            label[ny * pw + nx] = count;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            count += 1;
        }
    }
    (beta0, count - 1)
}

/// Oracle β at threshold `t` for the sublevel (`v <= t`) or superlevel set.
pub fn oracle_betti_at(img: &GrayImage, sublevel: bool, t: f64) -> (usize, usize) {
    let member: Vec<bool> = img
        .values()
        .iter()
        .map(|&v| if sublevel { v <= t } else { v >= t })
        .collect();
    oracle_betti(img.width(), img.height(), &member)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random::<f64>())
}

pub fn random_graded_image(rng: &mut impl Rng, w: usize, h: usize, levels: &[f64]) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| levels[rng.random_range(0..levels.len())])
}

pub fn distinct_values(img: &GrayImage) -> Vec<f64> {
    let mut v = img.values().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// `V - E + F` of the cubical complex spanned by the pixels in `member`.
pub fn oracle_euler(w: usize, h: usize, member: &[bool]) -> i64 {
    let m = |x: usize, y: usize| member[y * w + x];
    let mut v = 0i64;
    let mut e = 0i64;
    let mut f = 0i64;
    for y in 0..h {
        for x in 0..w {
            if !m(x, y) {
                continue;
            }
            v += 1;
            if x + 1 < w && m(x + 1, y) {
                e += 1;
            }
            if y + 1 < h && m(x, y + 1) {
                e += 1;
            }
            if x + 1 < w && y + 1 < h && m(x + 1, y) && m(x, y + 1) && m(x + 1, y + 1) {
                f += 1;
            }
        }
    }
    v - e + f
}

type Critical = Option<(Pixel, Option<Pixel>)>;

/// The critical pixels of a matching, in order.
pub fn matching_shape(m: &DiagramMatching) -> Vec<(u8, Critical, Critical)> {
    let key = |p: &Option<PersistencePoint>| p.map(|p| (p.birth_pixel, p.death_pixel));
    m.pairs.iter().map(|q| (q.dim, key(&q.from_f), key(&q.from_g))).collect()
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, p: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| if rng.random_bool(p) { 1.0 } else { 0.0 })
}

/// Result of a finite-difference sweep.
#[derive(Debug, Default)]
pub struct FdStats {
    pub max_dev: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Central differences of `topo_loss` at every pixel of `f` whose value is
/// at least `2h` from every other value. Deviation is
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn topo_fd(f: &GrayImage, g: &GrayImage, kind: FiltrationKind, h: f64) -> FdStats {
    let analytic = topo_loss_grad(f, g, Dims::BOTH, kind).unwrap();
    let (_, base) = topo_loss(f, g, Dims::BOTH, kind).unwrap();
    let shape = matching_shape(&base);
    let mut stats = FdStats::default();
    let vals = f.values();
    for i in 0..vals.len() {
        let v = vals[i];
        let tie = vals.iter().enumerate().any(|(j, &u)| j != i && (u - v).abs() < 2.0 * h);
        if tie || v < h || v > 1.0 - h {
            stats.skipped += 1;
            continue;
        }
        let (x, y) = (i % f.width(), i / f.width());
        let mut p = f.clone();
        p.set(x, y, v + h);
        let (lp, mp) = topo_loss(&p, g, Dims::BOTH, kind).unwrap();
        p.set(x, y, v - h);
        let (lm, mm) = topo_loss(&p, g, Dims::BOTH, kind).unwrap();
        // Lifetime ranks within 2h of each other can swap partners.
        if matching_shape(&mp) != shape || matching_shape(&mm) != shape {
            stats.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic.values()[i];
        stats.max_dev = stats.max_dev.max((a - numeric).abs() / a.abs().max(1.0));
        stats.checked += 1;
    }
    stats
}

/// Central differences of `total_loss(model(img), mask)` with respect to
/// `n` randomly chosen parameters. Returns `None` when a first-layer
/// pre-activation sits within `2h` of the ReLU kink (inputs lie in [0, 1],
/// so one parameter step moves a pre-activation by at most `h`). Parameters
/// whose perturbation changes the matched critical pixels are replaced by
/// others. Deviation is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn weight_fd(
    rng: &mut impl Rng,
    model: &TinySegmenter,
    img: &GrayImage,
    mask: &GrayImage,
    lambda: f64,
    n: usize,
    h: f64,
) -> Option<FdStats> {
    let kind = FiltrationKind::Superlevel;
    let pass = model.forward_pass(img);
    if TinySegmenter::near_kink(&pass, 2.0 * h) {
        return None;
    }
    let loss = |m: &TinySegmenter| {
        let r = total_loss(&m.forward(img), mask, lambda, Dims::BOTH, kind).unwrap();
        (r.total, matching_shape(&r.matching))
    };
    let report = total_loss(&pass.output, mask, lambda, Dims::BOTH, kind).unwrap();
    let shape = matching_shape(&report.matching);
    let grads = model.backward_pass(&pass, &report.grad_f).unwrap();
    let mut order: Vec<usize> = (0..N_PARAMS).collect();
    order.shuffle(rng);
    let mut stats = FdStats::default();
    for i in order {
        if stats.checked == n {
            break;
        }
        let mut plus = model.clone();
        plus.params_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[i] -= h;
        let (lp, sp) = loss(&plus);
        let (lm, sm) = loss(&minus);
        if sp != shape || sm != shape {
            stats.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let a = grads[i];
        stats.max_dev = stats.max_dev.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        stats.checked += 1;
    }
    Some(stats)
}
