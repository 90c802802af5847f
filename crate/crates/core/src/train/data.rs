//! Datasets on disk, patch sampling and synthetic data.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{binarize, load_image, save_image, to_byte, GrayImage};

const IMG_SUFFIX: &str = "_img.png";
const MASK_SUFFIX: &str = "_mask.png";

/// An image with its {0, 1} ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: GrayImage,
    pub mask: GrayImage,
}

/// Reads every `NNN_img.png` / `NNN_mask.png` pair in `dir`, sorted by name.
/// Masks are binarized at 0.5.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut pairs: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    for entry in entries {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name.strip_suffix(IMG_SUFFIX) {
            pairs.entry(stem.to_string()).or_default().0 = true;
        } else if let Some(stem) = name.strip_suffix(MASK_SUFFIX) {
            pairs.entry(stem.to_string()).or_default().1 = true;
        }
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!("no image/mask pairs in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (stem, (has_img, has_mask)) in pairs {
        if !(has_img && has_mask) {
            let missing = if has_img { MASK_SUFFIX } else { IMG_SUFFIX };
            return Err(Error::Dataset(format!("{stem}: missing {stem}{missing}")));
        }
        let image = load_image(dir.join(format!("{stem}{IMG_SUFFIX}")))?;
        let mask = binarize(&load_image(dir.join(format!("{stem}{MASK_SUFFIX}")))?, 0.5).to_gray();
        image.same_dims(&mask)?;
        out.push(Sample { name: stem, image, mask });
    }
    Ok(out)
}

pub fn save_dataset(samples: &[Sample], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in samples {
        save_image(&s.image, dir.join(format!("{}{IMG_SUFFIX}", s.name)))?;
        save_image(&s.mask, dir.join(format!("{}{MASK_SUFFIX}", s.name)))?;
    }
    Ok(())
}

/// Number of training samples under an 80:20 split. A single sample is
/// used for both training and validation.
pub fn train_count(n: usize) -> usize {
    if n <= 1 {
        return n;
    }
    ((0.8 * n as f64).round() as usize).clamp(1, n - 1)
}

/// `(train, validation)` in the given (sorted) order.
pub fn split_dataset(samples: &[Sample]) -> (&[Sample], &[Sample]) {
    if samples.len() == 1 {
        return (samples, samples);
    }
    samples.split_at(train_count(samples.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchDraw {
    pub x: usize,
    pub y: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

impl PatchDraw {
    pub fn draw(width: usize, height: usize, patch: usize, rng: &mut impl Rng) -> Result<Self> {
        if patch == 0 || patch > width || patch > height {
            return Err(Error::invalid(format!("patch {patch} does not fit a {width}x{height} image")));
        }
        Ok(PatchDraw {
            x: rng.random_range(0..=width - patch),
            y: rng.random_range(0..=height - patch),
            flip_horizontal: rng.random_bool(0.5),
            flip_vertical: rng.random_bool(0.5),
        })
    }

    pub fn apply(&self, img: &GrayImage, patch: usize) -> Result<GrayImage> {
        let mut out = img.crop(self.x, self.y, patch, patch)?;
        if self.flip_horizontal {
            out = out.flip_horizontal();
        }
        if self.flip_vertical {
            out = out.flip_vertical();
        }
        Ok(out)
    }
}

/// A random square crop of `img` and `mask` at the same corner, with the
/// same random flips.
pub fn sample_patch(img: &GrayImage, mask: &GrayImage, patch: usize, rng: &mut impl Rng) -> Result<(GrayImage, GrayImage)> {
    img.same_dims(mask)?;
    let d = PatchDraw::draw(img.width(), img.height(), patch, rng)?;
    Ok((d.apply(img, patch)?, d.apply(mask, patch)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Bright annuli on a dark noisy background; the mask is the annuli.
    Rings,
    /// Dark disks on a light background with salt noise; the mask is the disks.
    Blobs,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rings" => Ok(SynthKind::Rings),
            "blobs" => Ok(SynthKind::Blobs),
            _ => Err(Error::invalid(format!("unknown dataset kind {s:?} (rings|blobs)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub sample: Sample,
    /// Number of annuli or disks drawn.
    pub n_objects: usize,
}

pub const RINGS_BACKGROUND: f64 = 0.15;
pub const RINGS_FOREGROUND: f64 = 0.8;
pub const RINGS_ARC: f64 = 0.4;
pub const RINGS_NOISE_SIGMA: f64 = 0.05;
pub const BLOBS_BACKGROUND: f64 = 0.9;
pub const BLOBS_FOREGROUND: f64 = 0.1;
pub const BLOBS_SALT: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
struct Circle {
    cx: f64,
    cy: f64,
    /// Radius of the disk that must stay clear of other shapes.
    reach: f64,
}

/// Rejection-samples up to `count` non-overlapping circles. `shape` draws
/// a reach and an inner radius; circles stay `margin` pixels inside the
/// image and `gap` pixels away from each other and from `taken`.
fn place_circles(
    rng: &mut ChaCha8Rng,
    size: usize,
    count: usize,
    mut shape: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
    margin: f64,
    gap: f64,
    taken: &[Circle],
) -> Vec<(Circle, f64)> {
    let mut placed: Vec<(Circle, f64)> = Vec::new();
    let s = size as f64 - 1.0;
    for _ in 0..count {
        for _attempt in 0..200 {
            let (r, inner) = shape(rng);
            let lo = r + margin;
            let hi = s - r - margin;
            if lo > hi {
                continue;
            }
            let c = Circle {
                cx: rng.random_range(lo..=hi),
                cy: rng.random_range(lo..=hi),
                reach: r,
            };
            let clear = taken
                .iter()
                .chain(placed.iter().map(|(c, _)| c))
                .all(|o| (c.cx - o.cx).hypot(c.cy - o.cy) > c.reach + o.reach + gap);
            if clear {
                placed.push((c, inner));
                break;
            }
        }
    }
    placed
}

fn quantize(v: f64) -> f64 {
    to_byte(v) as f64 / 255.0
}

/// One synthetic image. Pixel values are quantized to 8 bits so that a
/// save/load round trip is exact.
pub fn synth_sample(kind: SynthKind, size: usize, rng: &mut ChaCha8Rng) -> Result<(GrayImage, GrayImage, usize)> {
    if size < 32 {
        return Err(Error::invalid(format!("synthetic images need size >= 32, got {size}")));
    }
    match kind {
        SynthKind::Rings => Ok(synth_rings(size, rng)),
        SynthKind::Blobs => Ok(synth_blobs(size, rng)),
    }
}

fn synth_rings(size: usize, rng: &mut ChaCha8Rng) -> (GrayImage, GrayImage, usize) {
    let want = rng.random_range(1..=4usize);
    let shape = |r: &mut ChaCha8Rng| {
        let inner = r.random_range(4.0..9.0);
        (inner + r.random_range(2.0..3.0), inner)
    };
    let rings = place_circles(rng, size, want, shape, 2.0, 3.0, &[]);
    let circles: Vec<Circle> = rings.iter().map(|(c, _)| *c).collect();
    let arc_r = rng.random_range(4.0..7.0);
    let arc = place_circles(rng, size, 1, |_| (arc_r + 1.0, arc_r), 1.0, 3.0, &circles);
    let arc_start = rng.random_range(0.0..2.0 * PI);

    let noise = Normal::new(0.0, RINGS_NOISE_SIGMA).expect("valid sigma");
    let mut mask = GrayImage::filled(size, size, 0.0);
    let mut img = GrayImage::filled(size, size, RINGS_BACKGROUND);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64, y as f64);
            for (c, inner) in &rings {
                let d = (px - c.cx).hypot(py - c.cy);
                if d >= *inner && d <= c.reach {
                    mask.set(x, y, 1.0);
                    img.set(x, y, RINGS_FOREGROUND);
                }
            }
            for (c, inner) in &arc {
                let d = (px - c.cx).hypot(py - c.cy);
                let angle = ((py - c.cy).atan2(px - c.cx) - arc_start).rem_euclid(2.0 * PI);
                if d >= *inner && d <= c.reach && angle <= PI {
                    img.set(x, y, RINGS_ARC);
                }
            }
        }
    }
    let img = img.map(|v| quantize((v + noise.sample(rng)).clamp(0.0, 1.0)));
    (img, mask, rings.len())
}

fn synth_blobs(size: usize, rng: &mut ChaCha8Rng) -> (GrayImage, GrayImage, usize) {
    let want = rng.random_range(2..=6usize);
    let disks = place_circles(rng, size, want, |r| (r.random_range(3.0..6.0), 0.0), 4.0, 5.0, &[]);
    let mut mask = GrayImage::filled(size, size, 0.0);
    let mut img = GrayImage::filled(size, size, BLOBS_BACKGROUND);
    for y in 0..size {
        for x in 0..size {
            if disks
                .iter()
                .any(|(c, _)| (x as f64 - c.cx).hypot(y as f64 - c.cy) <= c.reach)
            {
                mask.set(x, y, 1.0);
                img.set(x, y, BLOBS_FOREGROUND);
            }
            if rng.random_bool(BLOBS_SALT) {
                img.set(x, y, 1.0);
            }
        }
    }
    (img.map(quantize), mask, disks.len())
}

/// `n` synthetic samples named `000`, `001`, ...
pub fn synth_samples(kind: SynthKind, n: usize, size: usize, seed: u64) -> Result<Vec<SynthSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.saturating_sub(1).to_string().len().max(3);
    (0..n)
        .map(|i| {
            let (image, mask, n_objects) = synth_sample(kind, size, &mut rng)?;
            Ok(SynthSample {
                sample: Sample {
                    name: format!("{i:0width$}"),
                    image,
                    mask,
                },
                n_objects,
            })
        })
        .collect()
}

/// Writes a synthetic dataset to `dir` and returns the object counts.
pub fn synth_dataset(kind: SynthKind, n: usize, size: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<usize>> {
    let samples = synth_samples(kind, n, size, seed)?;
    let plain: Vec<Sample> = samples.iter().map(|s| s.sample.clone()).collect();
    save_dataset(&plain, dir)?;
    Ok(samples.iter().map(|s| s.n_objects).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::betti_numbers;

    #[test]
    fn split_sizes() {
        assert_eq!(train_count(1), 1);
        assert_eq!(train_count(2), 1);
        assert_eq!(train_count(5), 4);
        assert_eq!(train_count(10), 8);
        assert_eq!(train_count(200), 160);
    }

    #[test]
    fn full_size_patch_only_flips() {
        let img = GrayImage::from_fn(6, 6, |x, y| (x + 6 * y) as f64 / 36.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..50 {
            let d = PatchDraw::draw(6, 6, 6, &mut rng).unwrap();
            assert_eq!((d.x, d.y), (0, 0));
            seen.insert((d.flip_horizontal, d.flip_vertical));
            let twice = d.apply(&d.apply(&img, 6).unwrap(), 6).unwrap();
            assert_eq!(twice, img);
        }
        assert_eq!(seen.len(), 4);
        assert!(PatchDraw::draw(6, 6, 7, &mut rng).is_err());
    }

    #[test]
    fn patches_align_with_masks() {
        let img = GrayImage::from_fn(20, 15, |x, y| (x * 15 + y) as f64 / 300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut again = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, b) = sample_patch(&img, &img, 8, &mut rng).unwrap();
            assert_eq!(a, b);
            assert_eq!((a.width(), a.height()), (8, 8));
            assert_eq!(sample_patch(&img, &img, 8, &mut again).unwrap().0, a);
        }
    }

    #[test]
    fn ring_masks_have_one_hole_per_annulus() {
        for size in [32, 64] {
            for s in synth_samples(SynthKind::Rings, 40, size, 3).unwrap() {
                let b = betti_numbers(&binarize(&s.sample.mask, 0.5));
                assert!((1..=4).contains(&s.n_objects));
                assert_eq!((b.beta0, b.beta1), (s.n_objects, s.n_objects));
                assert!(s.sample.image.is_normalized());
            }
        }
    }

    #[test]
    fn blob_masks_count_disks() {
        for s in synth_samples(SynthKind::Blobs, 40, 64, 4).unwrap() {
            let b = betti_numbers(&binarize(&s.sample.mask, 0.5));
            assert!((2..=6).contains(&s.n_objects));
            assert_eq!((b.beta0, b.beta1), (s.n_objects, 0));
        }
        assert!(synth_samples(SynthKind::Blobs, 1, 31, 0).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let counts = synth_dataset(SynthKind::Rings, 3, 32, 9, dir.path()).unwrap();
        assert_eq!(counts.len(), 3);
        let loaded = load_dataset(dir.path()).unwrap();
        let fresh = synth_samples(SynthKind::Rings, 3, 32, 9).unwrap();
        let names: Vec<&str> = loaded.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["000", "001", "002"]);
        for (l, f) in loaded.iter().zip(&fresh) {
            assert_eq!(l, &f.sample);
        }
        let (train, val) = split_dataset(&loaded);
        assert_eq!((train.len(), val.len()), (2, 1));

        std::fs::remove_file(dir.path().join("001_mask.png")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(empty.path()), Err(Error::Dataset(_))));
    }
}
