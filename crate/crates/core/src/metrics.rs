//! Pixel confusion metrics and the patch-sampled Betti number error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{binarize, BinaryImage, GrayImage};
use crate::persistence::betti_numbers;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMetrics {
    pub accuracy: f64,
    pub dice: f64,
    pub completeness: f64,
    pub correctness: f64,
    pub quality: f64,
    /// True when at least one ratio was 0/0 and reported as 1.
    pub empty_convention: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettiErrorParams {
    pub patch: usize,
    pub n_patches: usize,
    pub seed: u64,
    pub bin_threshold: f64,
}

impl BettiErrorParams {
    pub fn with_seed(seed: u64) -> Self {
        BettiErrorParams {
            patch: 64,
            n_patches: 100,
            seed,
            bin_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub dice: f64,
    pub completeness: f64,
    pub correctness: f64,
    pub quality: f64,
    pub betti_error: f64,
    pub betti_patch_size: usize,
    pub betti_n_patches: usize,
    pub rng_seed: u64,
    pub bin_threshold: f64,
    /// How per-patch Betti differences are combined.
    pub betti_aggregation: String,
    pub empty_convention: bool,
}

pub const BETTI_AGGREGATION: &str = "abs_b0_plus_abs_b1";

pub fn confusion(pred: &BinaryImage, gt: &BinaryImage) -> Result<ConfusionCounts> {
    pred.same_dims(gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64, empty: &mut bool) -> f64 {
    if den == 0 {
        *empty = true;
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, Dice, completeness, correctness and quality; 0/0 counts as 1.
pub fn ratio_metrics(c: &ConfusionCounts) -> RatioMetrics {
    let mut empty = false;
    let accuracy = ratio(c.tp + c.tn, c.total(), &mut empty);
    let dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, &mut empty);
    let completeness = ratio(c.tp, c.tp + c.fn_, &mut empty);
    let correctness = ratio(c.tp, c.tp + c.fp, &mut empty);
    let quality = ratio(c.tp, c.tp + c.fp + c.fn_, &mut empty);
    RatioMetrics {
        accuracy,
        dice,
        completeness,
        correctness,
        quality,
        empty_convention: empty,
    }
}

/// Top-left corners of `n` patches drawn uniformly from a `w`×`h` image.
pub fn sample_corners(w: usize, h: usize, patch: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || patch > w.min(h) {
        return Err(Error::invalid(format!("patch {patch} does not fit a {w}x{h} image")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (rng.random_range(0..=w - patch), rng.random_range(0..=h - patch)))
        .collect())
}

/// Mean of `|Δβ0| + |Δβ1|` over seeded random patches, both images
/// binarized at `bin_threshold` and cropped at the same corners.
pub fn betti_error(pred: &GrayImage, gt: &GrayImage, params: &BettiErrorParams) -> Result<f64> {
    pred.same_dims(gt)?;
    if params.n_patches == 0 {
        return Err(Error::invalid("need at least one patch"));
    }
    let corners = sample_corners(pred.width(), pred.height(), params.patch, params.n_patches, params.seed)?;
    let pb = binarize(pred, params.bin_threshold);
    let gb = binarize(gt, params.bin_threshold);
    let p = params.patch;
    let total: usize = corners
        .iter()
        .map(|&(x0, y0)| {
            let a = betti_numbers(&BinaryImage::from_fn(p, p, |x, y| pb.get(x0 + x, y0 + y)));
            let b = betti_numbers(&BinaryImage::from_fn(p, p, |x, y| gb.get(x0 + x, y0 + y)));
            a.abs_diff(&b)
        })
        .sum();
    Ok(total as f64 / params.n_patches as f64)
}

/// All metrics for one prediction/ground-truth pair.
pub fn evaluate(pred: &GrayImage, gt: &GrayImage, params: &BettiErrorParams) -> Result<MetricReport> {
    let c = confusion(&binarize(pred, params.bin_threshold), &binarize(gt, params.bin_threshold))?;
    let betti = betti_error(pred, gt, params)?;
    Ok(report_from(&c, betti, params))
}

pub fn report_from(c: &ConfusionCounts, betti_error: f64, params: &BettiErrorParams) -> MetricReport {
    let r = ratio_metrics(c);
    MetricReport {
        accuracy: r.accuracy,
        dice: r.dice,
        completeness: r.completeness,
        correctness: r.correctness,
        quality: r.quality,
        betti_error,
        betti_patch_size: params.patch,
        betti_n_patches: params.n_patches,
        rng_seed: params.seed,
        bin_threshold: params.bin_threshold,
        betti_aggregation: BETTI_AGGREGATION.to_string(),
        empty_convention: r.empty_convention,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(bits: &[u8]) -> BinaryImage {
        BinaryImage::new(2, 2, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let t = BinaryImage::filled(3, 3, true);
        assert_eq!(confusion(&t, &t).unwrap(), ConfusionCounts { tp: 9, fp: 0, fn_: 0, tn: 0 });
        let c = confusion(&bin(&[1, 1, 0, 0]), &bin(&[1, 0, 1, 0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let gt = bin(&[1, 0, 0, 0]);
        let c = confusion(&bin(&[0, 1, 1, 1]), &gt).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 3, fn_: 1, tn: 0 });
        assert!(confusion(&t, &gt).is_err());
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_metrics(&ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!((r.accuracy, r.dice, r.completeness, r.correctness), (0.5, 0.5, 0.5, 0.5));
        assert_eq!(r.quality, 1.0 / 3.0);
        assert!(!r.empty_convention);
        let r = ratio_metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 4 });
        assert_eq!((r.accuracy, r.dice, r.completeness, r.correctness, r.quality), (1.0, 1.0, 1.0, 1.0, 1.0));
        assert!(r.empty_convention);
    }

    #[test]
    fn reference_row_is_consistent() {
        // Published baseline row (accuracy 0.899 omitted): the ratio inequalities hold.
        let (completeness, correctness, quality, dice): (f64, f64, f64, f64) = (0.975, 0.907, 0.886, 0.939);
        assert!(quality <= completeness.min(correctness));
        assert!(dice >= quality);
    }

    #[test]
    fn betti_error_examples() {
        let img = GrayImage::from_fn(20, 20, |x, y| ((x / 3 + y / 4) % 2) as f64);
        let p = BettiErrorParams { patch: 8, n_patches: 30, seed: 4, bin_threshold: 0.5 };
        assert_eq!(betti_error(&img, &img, &p).unwrap(), 0.0);
        assert!(betti_error(&img, &img, &BettiErrorParams { patch: 21, ..p }).is_err());
        assert!(betti_error(&img, &img, &BettiErrorParams { n_patches: 0, ..p }).is_err());

        // A closed ring against the same ring with a one-pixel gap, patch = image.
        let ring = |gap: bool| {
            GrayImage::from_fn(9, 9, |x, y| {
                let on = (2..=6).contains(&x) && (2..=6).contains(&y) && !((3..=5).contains(&x) && (3..=5).contains(&y));
                if on && !(gap && x == 4 && y == 2) {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let p = BettiErrorParams { patch: 9, n_patches: 5, seed: 0, bin_threshold: 0.5 };
        assert_eq!(betti_error(&ring(true), &ring(false), &p).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_corners() {
        let a = sample_corners(50, 40, 16, 20, 9).unwrap();
        assert_eq!(a, sample_corners(50, 40, 16, 20, 9).unwrap());
        assert_ne!(a, sample_corners(50, 40, 16, 20, 10).unwrap());
        assert!(a.iter().all(|&(x, y)| x <= 34 && y <= 24));
    }

    proptest! {
        #[test]
        fn quality_bounded(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let r = ratio_metrics(&ConfusionCounts { tp, fp, fn_, tn });
            prop_assert!(r.quality <= r.completeness.min(r.correctness) + 1e-15);
            prop_assert!(r.dice + 1e-15 >= r.quality);
            for v in [r.accuracy, r.dice, r.completeness, r.correctness, r.quality] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
