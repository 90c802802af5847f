//! Segmentation losses: binary cross-entropy, a persistence-diagram loss
//! between a likelihood map and its ground truth, and their weighted sum.
//!
//! The diagram loss pairs the points of `D(f)` and `D(g)` dimension by
//! dimension after ranking each side by lifetime, and sums squared birth and
//! death differences over the pairs. Surplus points are paired with their
//! projection onto the diagonal. Every birth and death of `D(f)` is the value
//! of `f` at a critical pixel, so the gradient with respect to `f` is sparse:
//! it only touches those pixels.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GrayImage, Pixel};
use crate::persistence::{compute_persistence, Dims, FiltrationKind, PersistenceDiagram, PersistencePoint};

/// Weight of the topological term used for likelihood maps in training.
pub const DEFAULT_LAMBDA: f64 = 1.0 / 12000.0;

/// Death assigned to essential classes before diagrams are compared.
pub const ESSENTIAL_CAP: f64 = 1.0;

/// Probability clamp for the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub dim: u8,
    pub from_f: Option<PersistencePoint>,
    pub from_g: Option<PersistencePoint>,
}

impl MatchedPair {
    /// Squared distance between the two endpoints; a lone point is measured
    /// against its diagonal projection.
    pub fn cost(&self) -> f64 {
        match (&self.from_f, &self.from_g) {
            (Some(p), Some(q)) => (p.birth - q.birth).powi(2) + (p.death - q.death).powi(2),
            (Some(p), None) | (None, Some(p)) => (p.death - p.birth).powi(2) / 2.0,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramMatching {
    pub pairs: Vec<MatchedPair>,
    pub dims_used: Dims,
}

impl DiagramMatching {
    pub fn n_pairs(&self, dim: u8) -> usize {
        self.pairs.iter().filter(|p| p.dim == dim).count()
    }

    pub fn cost(&self) -> f64 {
        self.pairs.iter().map(MatchedPair::cost).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub bce: f64,
    pub topo: f64,
    pub lambda: f64,
    pub total: f64,
    /// d(total)/df per pixel.
    pub grad_f: GrayImage,
    pub matching: DiagramMatching,
}

/// Orders points by decreasing lifetime, then later birth in sweep order,
/// then row-major birth pixel.
fn rank_order(kind: FiltrationKind) -> impl Fn(&&PersistencePoint, &&PersistencePoint) -> Ordering {
    move |a, b| {
        b.lifetime()
            .total_cmp(&a.lifetime())
            .then(kind.order_key(b.birth).total_cmp(&kind.order_key(a.birth)))
            .then((a.birth_pixel.y, a.birth_pixel.x).cmp(&(b.birth_pixel.y, b.birth_pixel.x)))
    }
}

/// Pairs the k-th longest-lived point of `df` with the k-th longest-lived
/// point of `dg`, per dimension in `dims`.
pub fn match_diagrams(df: &PersistenceDiagram, dg: &PersistenceDiagram, dims: Dims) -> Result<DiagramMatching> {
    if df.filtration != dg.filtration {
        return Err(Error::FiltrationMismatch);
    }
    if df.has_infinite() || dg.has_infinite() {
        return Err(Error::InfiniteDeath);
    }
    let order = rank_order(df.filtration);
    let mut pairs = Vec::new();
    for dim in dims.iter() {
        let mut fs: Vec<&PersistencePoint> = df.of_dim(dim).collect();
        let mut gs: Vec<&PersistencePoint> = dg.of_dim(dim).collect();
        fs.sort_by(&order);
        gs.sort_by(&order);
        for k in 0..fs.len().max(gs.len()) {
            pairs.push(MatchedPair {
                dim,
                from_f: fs.get(k).map(|p| **p),
                from_g: gs.get(k).map(|p| **p),
            });
        }
    }
    Ok(DiagramMatching { pairs, dims_used: dims })
}

fn check_likelihood(f: &GrayImage, g: &GrayImage) -> Result<()> {
    f.same_dims(g)?;
    if f.is_empty() {
        return Err(Error::EmptyImage);
    }
    if !f.is_normalized() || !g.is_normalized() {
        return Err(Error::invalid("likelihood and ground truth must lie in [0, 1]"));
    }
    Ok(())
}

/// Diagrams of `f` and `g` with essential classes capped, and their matching.
pub fn diagram_matching(f: &GrayImage, g: &GrayImage, dims: Dims, kind: FiltrationKind) -> Result<DiagramMatching> {
    check_likelihood(f, g)?;
    let df = compute_persistence(f, kind, Some(ESSENTIAL_CAP))?;
    let dg = compute_persistence(g, kind, Some(ESSENTIAL_CAP))?;
    match_diagrams(&df, &dg, dims)
}

pub fn topo_loss(f: &GrayImage, g: &GrayImage, dims: Dims, kind: FiltrationKind) -> Result<(f64, DiagramMatching)> {
    let m = diagram_matching(f, g, dims, kind)?;
    Ok((m.cost(), m))
}

/// Gradient of the matching cost with respect to the pixels of `f`, holding
/// the matching fixed.
pub fn matching_gradient(matching: &DiagramMatching, width: usize, height: usize) -> GrayImage {
    let mut grad = vec![0.0; width * height];
    for pair in &matching.pairs {
        let Some(p) = &pair.from_f else { continue };
        let (tb, td) = match &pair.from_g {
            Some(q) => (q.birth, q.death),
            None => {
                let mid = (p.birth + p.death) / 2.0;
                (mid, mid)
            }
        };
        grad[p.birth_pixel.y * width + p.birth_pixel.x] += 2.0 * (p.birth - tb);
        // A capped essential death is the constant cap, not a pixel value.
        if !p.essential {
            if let Some(dp) = p.death_pixel {
                grad[dp.y * width + dp.x] += 2.0 * (p.death - td);
            }
        }
    }
    GrayImage::new(width, height, grad).expect("finite gradient")
}

pub fn topo_loss_grad(f: &GrayImage, g: &GrayImage, dims: Dims, kind: FiltrationKind) -> Result<GrayImage> {
    let m = diagram_matching(f, g, dims, kind)?;
    Ok(matching_gradient(&m, f.width(), f.height()))
}

/// Outcome of comparing [`topo_loss_grad`] with central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Largest `|analytic - numeric| / max(1, |analytic|)` over checked pixels.
    pub max_rel_dev: f64,
    pub n_checked: usize,
    /// Pixels near a value tie, near the ends of `[0, 1]`, or whose
    /// perturbation changes the matched critical pixels.
    pub n_skipped: usize,
}

type MatchingShape = Vec<(u8, Option<(Pixel, Option<Pixel>)>, Option<(Pixel, Option<Pixel>)>)>;

fn matching_shape(m: &DiagramMatching) -> MatchingShape {
    let key = |p: &Option<PersistencePoint>| p.map(|p| (p.birth_pixel, p.death_pixel));
    m.pairs.iter().map(|q| (q.dim, key(&q.from_f), key(&q.from_g))).collect()
}

/// Central-difference check of the topological gradient with step `h`.
pub fn gradient_check(f: &GrayImage, g: &GrayImage, dims: Dims, kind: FiltrationKind, h: f64) -> Result<GradientCheck> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let base = diagram_matching(f, g, dims, kind)?;
    let shape = matching_shape(&base);
    let analytic = matching_gradient(&base, f.width(), f.height());
    let mut sorted: Vec<f64> = f.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let near_tie = |v: f64| {
        let i = sorted.partition_point(|&s| s < v);
        let lo = sorted[..i].last().is_some_and(|&s| v - s < 2.0 * h);
        // sorted[i] is v itself; anything after it within 2h is a tie.
        let hi = sorted.get(i + 1).is_some_and(|&s| s - v < 2.0 * h);
        lo || hi
    };
    let mut out = GradientCheck {
        max_rel_dev: 0.0,
        n_checked: 0,
        n_skipped: 0,
    };
    let mut probe = f.clone();
    for i in 0..f.len() {
        let Pixel { x, y } = f.pixel_of(i);
        let v = f.values()[i];
        if near_tie(v) || v - h < 0.0 || v + h > 1.0 {
            out.n_skipped += 1;
            continue;
        }
        probe.set(x, y, v + h);
        let plus = diagram_matching(&probe, g, dims, kind)?;
        probe.set(x, y, v - h);
        let minus = diagram_matching(&probe, g, dims, kind)?;
        probe.set(x, y, v);
        if matching_shape(&plus) != shape || matching_shape(&minus) != shape {
            out.n_skipped += 1;
            continue;
        }
        let numeric = (plus.cost() - minus.cost()) / (2.0 * h);
        let a = analytic.values()[i];
        out.max_rel_dev = out.max_rel_dev.max((a - numeric).abs() / a.abs().max(1.0));
        out.n_checked += 1;
    }
    Ok(out)
}

/// Mean binary cross-entropy of `f` against a {0, 1} mask, and its gradient.
pub fn bce_loss(f: &GrayImage, g: &GrayImage) -> Result<(f64, GrayImage)> {
    f.same_dims(g)?;
    if f.is_empty() {
        return Err(Error::EmptyImage);
    }
    if let Some(v) = g.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("ground truth value {v} outside {{0, 1}}")));
    }
    if !f.is_normalized() {
        return Err(Error::invalid("likelihood must lie in [0, 1]"));
    }
    let n = f.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(f.len());
    for (&fv, &gv) in f.values().iter().zip(g.values()) {
        let clamped = fv.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= gv * clamped.ln() + (1.0 - gv) * (1.0 - clamped).ln();
        grad.push(if clamped == fv {
            (clamped - gv) / (clamped * (1.0 - clamped)) / n
        } else {
            0.0
        });
    }
    Ok((loss / n, GrayImage::new(f.width(), f.height(), grad)?))
}

/// `bce + lambda * topo` with the gradient of the sum.
pub fn total_loss(f: &GrayImage, g: &GrayImage, lambda: f64, dims: Dims, kind: FiltrationKind) -> Result<LossReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    let (bce, bce_grad) = bce_loss(f, g)?;
    let matching = diagram_matching(f, g, dims, kind)?;
    let topo = matching.cost();
    let topo_grad = matching_gradient(&matching, f.width(), f.height());
    let grad: Vec<f64> = bce_grad
        .values()
        .iter()
        .zip(topo_grad.values())
        .map(|(b, t)| b + lambda * t)
        .collect();
    Ok(LossReport {
        bce,
        topo,
        lambda,
        total: bce + lambda * topo,
        grad_f: GrayImage::new(f.width(), f.height(), grad)?,
        matching,
    })
}
