use serde::{Deserialize, Serialize};

use super::FiltrationKind;
use crate::error::{Error, Result};
use crate::grid::{BinaryImage, GrayImage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettiPair {
    pub beta0: usize,
    pub beta1: usize,
}

impl BettiPair {
    pub fn new(beta0: usize, beta1: usize) -> Self {
        BettiPair { beta0, beta1 }
    }

    /// `|Δβ0| + |Δβ1|`.
    pub fn abs_diff(&self, other: &BettiPair) -> usize {
        self.beta0.abs_diff(other.beta0) + self.beta1.abs_diff(other.beta1)
    }
}

/// β0 counts 4-connected components of set pixels; β1 counts 8-connected
/// components of unset pixels that do not touch the image border.
pub fn betti_numbers(img: &BinaryImage) -> BettiPair {
    let (w, h) = (img.width(), img.height());
    let beta0 = flood_components(w, h, |x, y| img.get(x, y), false).len();
    let beta1 = flood_components(w, h, |x, y| !img.get(x, y), true)
        .into_iter()
        .filter(|touches_border| !touches_border)
        .count();
    BettiPair { beta0, beta1 }
}

/// Labels the components of the pixels selected by `member` and returns, for
/// each component, whether it reaches the image border.
fn flood_components(
    w: usize,
    h: usize,
    member: impl Fn(usize, usize) -> bool,
    eight: bool,
) -> Vec<bool> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] || !member(sx, sy) {
                continue;
            }
            let mut border = false;
            seen[sy * w + sx] = true;
            stack.push((sx, sy));
            while let Some((x, y)) = stack.pop() {
                border |= x == 0 || y == 0 || x + 1 == w || y + 1 == h;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if !seen[ny * w + nx] && member(nx, ny) {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            out.push(border);
        }
    }
    out
}

/// V − E + F of the cubical complex spanned by the set pixels.
pub fn euler_characteristic(img: &BinaryImage) -> i64 {
    let (w, h) = (img.width(), img.height());
    let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            v += 1;
            if x + 1 < w && img.get(x + 1, y) {
                e += 1;
            }
            if y + 1 < h && img.get(x, y + 1) {
                e += 1;
            }
            if x + 1 < w && y + 1 < h && img.get(x + 1, y) && img.get(x, y + 1) && img.get(x + 1, y + 1) {
                f += 1;
            }
        }
    }
    v - e + f
}

/// Betti numbers of the sublevel (`v <= t`) or superlevel (`v >= t`) set at
/// each of the ascending `thresholds`.
pub fn betti_curve(img: &GrayImage, kind: FiltrationKind, thresholds: &[f64]) -> Result<Vec<BettiPair>> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedThresholds);
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let bin = BinaryImage::from_fn(img.width(), img.height(), |x, y| kind.contains(img.get(x, y), t));
            betti_numbers(&bin)
        })
        .collect())
}
