//! Topological preprocessing of input images.
//!
//! The pipeline smooths the image, forces a frame of width `d` to the global
//! minimum so that anything touching the border is born through it, reads the
//! significant components off the sublevel persistence diagram, and fills the
//! remaining background by interpolating from the marked components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reflect_index as reflect, GrayImage, Pixel};
use crate::loss::ESSENTIAL_CAP;
use crate::persistence::{compute_persistence, FiltrationKind, PersistenceDiagram, PersistencePoint};

/// Number of labeled pixels that contribute to each interpolated pixel.
pub const INTERP_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Side of the square averaging window, odd.
    pub smooth_k: usize,
    /// Width of the border frame forced to the minimum.
    pub border_d: usize,
    /// `Sublevel` marks dark structures, `Superlevel` bright ones.
    pub filtration: FiltrationKind,
    pub invert_input: bool,
    /// Lower bound on the number of significant components selected.
    pub min_components: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            smooth_k: 3,
            border_d: 2,
            filtration: FiltrationKind::Sublevel,
            invert_input: false,
            min_components: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_k == 0 || self.smooth_k.is_multiple_of(2) {
            return Err(Error::invalid(format!("smoothing window must be odd, got {}", self.smooth_k)));
        }
        if self.min_components == 0 {
            return Err(Error::invalid("min_components must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub threshold: f64,
    pub n_significant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedComponent {
    pub label: u32,
    pub point: PersistencePoint,
    /// Flood level: pixels strictly below it were eligible.
    pub level: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLabeling {
    pub width: usize,
    pub height: usize,
    /// 0 is background, components are numbered from 1.
    pub labels: Vec<u32>,
    pub n_components: usize,
    pub threshold: f64,
    pub components: Vec<MarkedComponent>,
    /// Selected points whose seed pixel was already claimed.
    pub dropped: Vec<PersistencePoint>,
}

impl ComponentLabeling {
    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labels[i] != 0
    }

    /// Components that come from finite diagram points.
    pub fn finite_components(&self) -> impl Iterator<Item = &MarkedComponent> {
        self.components.iter().filter(|c| !c.point.essential)
    }
}

/// Mean over the `k`×`k` window centred on every pixel, reflect padding.
pub fn smooth(img: &GrayImage, k: usize) -> Result<GrayImage> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::invalid(format!("smoothing window must be odd, got {k}")));
    }
    if k == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let r = (k / 2) as isize;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-r..=r).map(|dx| img.get(reflect(x as isize + dx, w), y)).sum();
            rows[y * w + x] = s;
        }
    }
    let norm = (k * k) as f64;
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let s: f64 = (-r..=r).map(|dy| rows[reflect(y as isize + dy, h) * w + x]).sum();
        s / norm
    }))
}

/// Sets every pixel whose Chebyshev distance to the image edge is below `d`
/// to the global minimum.
pub fn modify_border(img: &GrayImage, d: usize) -> Result<GrayImage> {
    if d == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    if 2 * d >= w.min(h) {
        return Err(Error::invalid(format!("border {d} leaves no interior in a {w}x{h} image")));
    }
    let lo = img.min_value();
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let edge = x.min(y).min(w - 1 - x).min(h - 1 - y);
        if edge < d {
            lo
        } else {
            img.get(x, y)
        }
    }))
}

/// Finite lifetimes of the dim-0 points, longest first.
fn component_lifetimes(diagram: &PersistenceDiagram) -> Vec<f64> {
    let mut l: Vec<f64> = diagram
        .of_dim(0)
        .filter(|p| !p.essential && !p.is_infinite())
        .map(|p| p.lifetime())
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

/// Picks the threshold in the middle of the widest gap between consecutive
/// component lifetimes (with a trailing zero), so that the components above
/// it are the significant ones.
pub fn select_threshold(diagram: &PersistenceDiagram) -> Result<ThresholdSelection> {
    select_threshold_min(diagram, 1)
}

/// As [`select_threshold`], but never selects fewer than `min_components`
/// lifetimes (or all of them when there are fewer).
pub fn select_threshold_min(diagram: &PersistenceDiagram, min_components: usize) -> Result<ThresholdSelection> {
    let mut l = component_lifetimes(diagram);
    if l.is_empty() {
        return Err(Error::EmptyDiagram);
    }
    let m = l.len();
    l.push(0.0);
    let start = min_components.clamp(1, m);
    let mut best = start;
    let mut best_gap = f64::NEG_INFINITY;
    for i in start..=m {
        let gap = l[i - 1] - l[i];
        if gap > best_gap {
            best_gap = gap;
            best = i;
        }
    }
    Ok(ThresholdSelection {
        threshold: (l[best - 1] + l[best]) / 2.0,
        n_significant: best,
    })
}

/// Labels one component per significant dim-0 point of a sublevel diagram.
///
/// Points with lifetime above `threshold`, plus the essential class, are
/// visited by decreasing death. Each floods from its birth pixel through
/// unlabeled 4-neighbours whose value is below its death. The essential class
/// floods below the smallest death among the selected points, or the whole
/// connected image when nothing else is selected.
pub fn mark_components(img: &GrayImage, diagram: &PersistenceDiagram, threshold: f64) -> Result<ComponentLabeling> {
    if diagram.filtration != FiltrationKind::Sublevel {
        return Err(Error::invalid("component marking needs a sublevel diagram"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let (w, h) = (img.width(), img.height());
    let mut selected: Vec<PersistencePoint> = diagram
        .of_dim(0)
        .filter(|p| !p.essential && p.lifetime() > threshold)
        .copied()
        .collect();
    for p in &selected {
        if p.birth_pixel.x >= w || p.birth_pixel.y >= h {
            return Err(Error::invalid("diagram does not belong to this image"));
        }
    }
    let essential_level = selected.iter().map(|p| p.death).fold(f64::INFINITY, f64::min);
    selected.sort_by(|a, b| {
        b.death
            .total_cmp(&a.death)
            .then(a.birth.total_cmp(&b.birth))
            .then((a.birth_pixel.y, a.birth_pixel.x).cmp(&(b.birth_pixel.y, b.birth_pixel.x)))
    });
    let mut queue: Vec<(PersistencePoint, f64)> = Vec::with_capacity(selected.len() + 1);
    if let Some(e) = diagram.of_dim(0).find(|p| p.essential) {
        queue.push((*e, essential_level));
    }
    queue.extend(selected.into_iter().map(|p| (p, p.death)));

    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut dropped = Vec::new();
    let mut stack = Vec::new();
    for (point, level) in queue {
        let seed = point.birth_pixel;
        let si = seed.y * w + seed.x;
        if labels[si] != 0 || !(img.at(seed) < level) {
            dropped.push(point);
            continue;
        }
        let label = components.len() as u32 + 1;
        labels[si] = label;
        stack.push(seed);
        let mut size = 0;
        while let Some(Pixel { x, y }) = stack.pop() {
            size += 1;
            let mut visit = |nx: usize, ny: usize| {
                let ni = ny * w + nx;
                if labels[ni] == 0 && img.get(nx, ny) < level {
                    labels[ni] = label;
                    stack.push(Pixel::new(nx, ny));
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < w {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < h {
                visit(x, y + 1);
            }
        }
        components.push(MarkedComponent {
            label,
            point,
            level,
            size,
        });
    }
    Ok(ComponentLabeling {
        width: w,
        height: h,
        labels,
        n_components: components.len(),
        threshold,
        components,
        dropped,
    })
}

/// Replaces each background pixel with the inverse-squared-distance average
/// of the nearest labeled pixels. Labeled pixels are copied unchanged.
pub fn interpolate_background(img: &GrayImage, labeling: &ComponentLabeling) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    crate::grid::check_dims(w, h, labeling.width, labeling.height)?;
    if !labeling.labels.iter().any(|&l| l != 0) {
        return Ok(img.clone());
    }
    let total_labeled = labeling.labels.iter().filter(|&&l| l != 0).count();
    let k = INTERP_NEIGHBORS.min(total_labeled);
    let mut out = img.clone();
    let mut found: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if labeling.is_labeled(y * w + x) {
                continue;
            }
            // Chebyshev rings outward; a pixel outside ring r is farther than
            // r in Euclidean distance, so stop once k candidates lie within r.
            found.clear();
            let max_r = w.max(h);
            for r in 1..=max_r {
                for_each_ring(x, y, r, w, h, |i| {
                    if labeling.is_labeled(i) {
                        let (qx, qy) = (i % w, i / w);
                        let d2 = qx.abs_diff(x).pow(2) + qy.abs_diff(y).pow(2);
                        found.push((d2, i));
                    }
                });
                if found.len() >= k {
                    found.sort_unstable();
                    if found[k - 1].0 <= r * r {
                        break;
                    }
                }
            }
            found.sort_unstable();
            let (mut num, mut den) = (0.0, 0.0);
            for &(d2, i) in found.iter().take(k) {
                let wgt = 1.0 / d2 as f64;
                num += wgt * img.values()[i];
                den += wgt;
            }
            out.set(x, y, num / den);
        }
    }
    Ok(out)
}

fn for_each_ring(cx: usize, cy: usize, r: usize, w: usize, h: usize, mut f: impl FnMut(usize)) {
    let (cx, cy, r) = (cx as isize, cy as isize, r as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h;
    for dx in -r..=r {
        for y in [cy - r, cy + r] {
            let x = cx + dx;
            if inside(x, y) {
                f(y as usize * w + x as usize);
            }
        }
    }
    for dy in (-r + 1)..r {
        for x in [cx - r, cx + r] {
            let y = cy + dy;
            if inside(x, y) {
                f(y as usize * w + x as usize);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOutput {
    pub image: GrayImage,
    pub labeling: ComponentLabeling,
    pub selection: ThresholdSelection,
    pub diagram: PersistenceDiagram,
}

/// Smoothing, border modification, diagram, threshold, marking and
/// interpolation in sequence.
pub fn preprocess_pipeline(img: &GrayImage, cfg: &PreprocessConfig) -> Result<PreprocessOutput> {
    cfg.validate()?;
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    let mut work = if cfg.invert_input { crate::grid::invert(img) } else { img.clone() };
    let bright = cfg.filtration == FiltrationKind::Superlevel;
    if bright {
        work = crate::grid::invert(&work);
    }
    let work = modify_border(&smooth(&work, cfg.smooth_k)?, cfg.border_d)?;
    let cap = ESSENTIAL_CAP.max(work.max_value());
    let diagram = compute_persistence(&work, FiltrationKind::Sublevel, Some(cap))?;
    let selection = match select_threshold_min(&diagram, cfg.min_components) {
        Ok(s) => s,
        Err(Error::EmptyDiagram) => ThresholdSelection {
            threshold: f64::INFINITY,
            n_significant: 0,
        },
        Err(e) => return Err(e),
    };
    let labeling = mark_components(&work, &diagram, selection.threshold)?;
    let mut image = interpolate_background(&work, &labeling)?;
    if bright {
        image = crate::grid::invert(&image);
    }
    Ok(PreprocessOutput {
        image,
        labeling,
        selection,
        diagram,
    })
}
