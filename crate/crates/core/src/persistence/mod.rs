//! Persistent homology of 2D images over a cubical complex.
//!
//! Pixels are the vertices of the complex, edges join 4-adjacent pixels and
//! unit squares fill every 2×2 block. Each cell takes the maximum value of its
//! vertices (lower-star), so the sublevel set at a threshold `t` is the full
//! subcomplex spanned by the pixels with value `<= t`.
//!
//! Zero-dimensional pairs come from a union-find sweep over the pixels in
//! filtration order, with the elder rule deciding which component dies on a
//! merge. One-dimensional pairs use duality: a hole of the sublevel set is a
//! bounded 8-connected component of its complement, so sweeping the pixels in
//! reverse order with 8-connectivity and a virtual "outside" vertex glued to
//! the image border produces the hole pairs as zero-dimensional merges.
//!
//! Equal values are ordered row-major, which makes every critical pixel
//! deterministic. Pairs with zero lifetime are not reported.

mod betti;
mod csv;

pub use betti::{betti_curve, betti_numbers, euler_characteristic, BettiPair};
pub use csv::{read_diagram_csv, write_diagram_csv};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GrayImage, Pixel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiltrationKind {
    /// Pixels with value `<= t` are present at threshold `t`.
    Sublevel,
    /// Pixels with value `>= t` are present at threshold `t`.
    Superlevel,
}

impl FiltrationKind {
    /// Maps an image value into the coordinate that is swept upward: the
    /// value itself for sublevel sets, `1 - v` for superlevel sets.
    pub fn ascending(self, v: f64) -> f64 {
        match self {
            FiltrationKind::Sublevel => v,
            FiltrationKind::Superlevel => 1.0 - v,
        }
    }

    /// Sign of `d ascending(v) / dv`.
    pub fn sign(self) -> f64 {
        match self {
            FiltrationKind::Sublevel => 1.0,
            FiltrationKind::Superlevel => -1.0,
        }
    }

    /// Key that sorts image values in sweep order. Negation is exact, unlike
    /// `1 - v`.
    pub fn order_key(self, v: f64) -> f64 {
        match self {
            FiltrationKind::Sublevel => v,
            FiltrationKind::Superlevel => -v,
        }
    }

    /// Whether a pixel of value `v` is present at threshold `t`.
    pub fn contains(self, v: f64, t: f64) -> bool {
        match self {
            FiltrationKind::Sublevel => v <= t,
            FiltrationKind::Superlevel => v >= t,
        }
    }
}

impl std::str::FromStr for FiltrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sublevel" | "sub" => Ok(FiltrationKind::Sublevel),
            "superlevel" | "super" => Ok(FiltrationKind::Superlevel),
            other => Err(Error::invalid(format!("unknown filtration '{other}'"))),
        }
    }
}

/// A subset of the homology dimensions {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub zero: bool,
    pub one: bool,
}

impl Dims {
    pub const BOTH: Dims = Dims { zero: true, one: true };
    pub const ZERO: Dims = Dims { zero: true, one: false };
    pub const ONE: Dims = Dims { zero: false, one: true };

    pub fn contains(self, dim: u8) -> bool {
        match dim {
            0 => self.zero,
            1 => self.one,
            _ => false,
        }
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        [0u8, 1].into_iter().filter(move |&d| self.contains(d))
    }
}

impl Default for Dims {
    fn default() -> Self {
        Dims::BOTH
    }
}

impl std::str::FromStr for Dims {
    type Err = Error;

    /// Accepts a comma-separated list such as `0`, `1` or `0,1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut dims = Dims { zero: false, one: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "0" => dims.zero = true,
                "1" => dims.one = true,
                other => return Err(Error::invalid(format!("homology dimension '{other}' not in {{0, 1}}"))),
            }
        }
        if !dims.zero && !dims.one {
            return Err(Error::invalid("empty dimension set"));
        }
        Ok(dims)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// One point of a persistence diagram.
///
/// `birth` and `death` are image values in the filtration's own coordinates,
/// so a superlevel point has `birth >= death`. An uncapped essential class
/// has `death == f64::INFINITY` and no death pixel; a capped one carries the
/// cap as its death and the first pixel (row-major) holding the sweep's
/// final value as its death pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub dim: u8,
    pub birth: f64,
    pub death: f64,
    pub birth_pixel: Pixel,
    pub death_pixel: Option<Pixel>,
    pub essential: bool,
}

impl PersistencePoint {
    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    /// `|death - birth|`, infinite for an uncapped essential class.
    pub fn lifetime(&self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            (self.death - self.birth).abs()
        }
    }

    /// Whether the feature exists at threshold `t`. Capped essential classes
    /// are treated as never dying.
    pub fn alive_at(&self, t: f64, kind: FiltrationKind) -> bool {
        if !kind.contains(self.birth, t) {
            return false;
        }
        if self.essential {
            return true;
        }
        !kind.contains(self.death, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub points: Vec<PersistencePoint>,
    pub filtration: FiltrationKind,
    pub essential_cap: Option<f64>,
}

impl PersistenceDiagram {
    pub fn of_dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePoint> + '_ {
        self.points.iter().filter(move |p| p.dim == dim)
    }

    pub fn essential(&self) -> Option<&PersistencePoint> {
        self.points.iter().find(|p| p.essential)
    }

    pub fn has_infinite(&self) -> bool {
        self.points.iter().any(|p| p.is_infinite())
    }

    /// Betti numbers read off the diagram: the points alive at `t`.
    pub fn betti_at(&self, t: f64) -> BettiPair {
        let mut b = BettiPair::default();
        for p in self.points.iter().filter(|p| p.alive_at(t, self.filtration)) {
            match p.dim {
                0 => b.beta0 += 1,
                _ => b.beta1 += 1,
            }
        }
        b
    }

    /// Puts points in canonical order: dim, birth, death, then birth pixel
    /// row-major.
    pub(crate) fn sort_points(&mut self) {
        self.points.sort_by(|a, b| {
            a.dim
                .cmp(&b.dim)
                .then(a.birth.total_cmp(&b.birth))
                .then(a.death.total_cmp(&b.death))
                .then((a.birth_pixel.y, a.birth_pixel.x).cmp(&(b.birth_pixel.y, b.birth_pixel.x)))
        });
    }
}

/// Computes the 0- and 1-dimensional persistence diagram of `img`.
///
/// `essential_cap` is expressed in the ascending coordinate of the filtration
/// (see [`FiltrationKind::ascending`]): a sublevel diagram reports the cap
/// itself as the essential death, a superlevel diagram reports `1 - cap`.
pub fn compute_persistence(
    img: &GrayImage,
    kind: FiltrationKind,
    essential_cap: Option<f64>,
) -> Result<PersistenceDiagram> {
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    let keys: Vec<f64> = img.values().iter().map(|&v| kind.order_key(v)).collect();
    let sweep = Sweep::new(&keys, img.width(), img.height());
    let raw = sweep.pairs();
    let top = keys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cap_pixel = keys.iter().position(|&k| k == top).expect("nonempty");

    let mut points = Vec::with_capacity(raw.len());
    for pair in raw {
        let birth_pixel = img.pixel_of(pair.birth);
        match pair.death {
            Some(d) => points.push(PersistencePoint {
                dim: pair.dim,
                birth: img.values()[pair.birth],
                death: img.values()[d],
                birth_pixel,
                death_pixel: Some(img.pixel_of(d)),
                essential: false,
            }),
            None => {
                let (death, death_pixel) = match essential_cap {
                    Some(cap) => {
                        let death = match kind {
                            FiltrationKind::Sublevel => cap,
                            FiltrationKind::Superlevel => 1.0 - cap,
                        };
                        (death, Some(img.pixel_of(cap_pixel)))
                    }
                    None => (f64::INFINITY, None),
                };
                points.push(PersistencePoint {
                    dim: pair.dim,
                    birth: img.values()[pair.birth],
                    death,
                    birth_pixel,
                    death_pixel,
                    essential: true,
                });
            }
        }
    }
    let mut diagram = PersistenceDiagram {
        points,
        filtration: kind,
        essential_cap,
    };
    diagram.sort_points();
    Ok(diagram)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RawPair {
    pub dim: u8,
    pub birth: usize,
    pub death: Option<usize>,
}

/// Disjoint sets over pixel indices. Every root remembers the oldest member
/// of its set, i.e. the one with the smallest sweep position.
struct ElderForest {
    parent: Vec<usize>,
    size: Vec<u32>,
    elder: Vec<usize>,
}

impl ElderForest {
    fn new(n: usize) -> Self {
        ElderForest {
            parent: (0..n).collect(),
            size: vec![1; n],
            elder: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Merges the sets rooted at `a` and `b`, keeping the elder of `older`.
    fn union(&mut self, a: usize, b: usize, older: usize) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.elder[big] = older;
    }
}

pub(crate) struct Sweep<'a> {
    keys: &'a [f64],
    width: usize,
    height: usize,
    /// Pixel indices in filtration order.
    pub order: Vec<usize>,
    /// Sweep position of every pixel.
    pos: Vec<usize>,
}

impl<'a> Sweep<'a> {
    pub fn new(keys: &'a [f64], width: usize, height: usize) -> Self {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| {
            keys[a]
                .partial_cmp(&keys[b])
                .expect("finite keys")
                .then(a.cmp(&b))
        });
        let mut pos = vec![0; keys.len()];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        Sweep {
            keys,
            width,
            height,
            order,
            pos,
        }
    }

    pub fn pairs(&self) -> Vec<RawPair> {
        let mut out = self.components();
        out.extend(self.holes());
        out
    }

    fn components(&self) -> Vec<RawPair> {
        let n = self.keys.len();
        let mut forest = ElderForest::new(n);
        let mut active = vec![false; n];
        let mut out = Vec::new();
        let mut nbrs = Vec::with_capacity(4);
        for &v in &self.order {
            active[v] = true;
            self.neighbors4(v, &mut nbrs);
            for &u in &nbrs {
                if !active[u] {
                    continue;
                }
                let (ru, rv) = (forest.find(u), forest.find(v));
                if ru == rv {
                    continue;
                }
                let (eu, ev) = (forest.elder[ru], forest.elder[rv]);
                let (older, younger) = if self.pos[eu] < self.pos[ev] { (eu, ev) } else { (ev, eu) };
                if self.keys[younger] != self.keys[v] {
                    out.push(RawPair {
                        dim: 0,
                        birth: younger,
                        death: Some(v),
                    });
                }
                forest.union(ru, rv, older);
            }
        }
        out.push(RawPair {
            dim: 0,
            birth: self.order[0],
            death: None,
        });
        out
    }

    fn holes(&self) -> Vec<RawPair> {
        let n = self.keys.len();
        let outside = n;
        let mut forest = ElderForest::new(n + 1);
        let mut active = vec![false; n + 1];
        active[outside] = true;
        // In the reverse sweep the elder is the member added first, i.e. the
        // one with the largest forward position; the outside is eldest.
        let rpos = |i: usize| if i == outside { usize::MAX } else { self.pos[i] };
        let mut out = Vec::new();
        let mut nbrs = Vec::with_capacity(9);
        for &v in self.order.iter().rev() {
            active[v] = true;
            self.neighbors8(v, &mut nbrs);
            if self.on_border(v) {
                nbrs.push(outside);
            }
            for &u in &nbrs {
                if !active[u] {
                    continue;
                }
                let (ru, rv) = (forest.find(u), forest.find(v));
                if ru == rv {
                    continue;
                }
                let (eu, ev) = (forest.elder[ru], forest.elder[rv]);
                let (older, younger) = if rpos(eu) > rpos(ev) { (eu, ev) } else { (ev, eu) };
                if self.keys[younger] != self.keys[v] {
                    out.push(RawPair {
                        dim: 1,
                        birth: v,
                        death: Some(younger),
                    });
                }
                forest.union(ru, rv, older);
            }
        }
        out
    }

    fn on_border(&self, i: usize) -> bool {
        let (x, y) = (i % self.width, i / self.width);
        x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height
    }

    fn neighbors4(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let (x, y, w) = (i % self.width, i / self.width, self.width);
        if y > 0 {
            out.push(i - w);
        }
        if x > 0 {
            out.push(i - 1);
        }
        if x + 1 < w {
            out.push(i + 1);
        }
        if y + 1 < self.height {
            out.push(i + w);
        }
    }

    fn neighbors8(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let (x, y) = (i % self.width, i / self.width);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                    out.push(ny as usize * self.width + nx as usize);
                }
            }
        }
    }
}
