mod common;

use common::*;
use toposeg::persistence::{betti_numbers, euler_characteristic};
use toposeg::{compute_persistence, BinaryImage, FiltrationKind, GrayImage};

fn check_against_oracle(img: &GrayImage, kind: FiltrationKind) {
    let d = compute_persistence(img, kind, None).unwrap();
    let sub = kind == FiltrationKind::Sublevel;
    let mut ts = distinct_values(img);
    ts.push(-0.5);
    ts.push(1.5);
    for t in ts {
        let b = d.betti_at(t);
        let o = oracle_betti_at(img, sub, t);
        assert_eq!((b.beta0, b.beta1), o, "{kind:?} t={t} img={:?}", img.values());
    }
}

#[test]
fn all_binary_3x3() {
    for mask in 0u32..512 {
        let img = GrayImage::from_fn(3, 3, |x, y| ((mask >> (y * 3 + x)) & 1) as f64);
        check_against_oracle(&img, FiltrationKind::Sublevel);
        check_against_oracle(&img, FiltrationKind::Superlevel);
    }
}

#[test]
fn random_graded_and_rectangular() {
    let mut r = rng(11);
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    for _ in 0..300 {
        let img = random_graded_image(&mut r, 5, 5, &levels);
        check_against_oracle(&img, FiltrationKind::Sublevel);
        check_against_oracle(&img, FiltrationKind::Superlevel);
    }
    for (w, h) in [(1, 7), (7, 1), (2, 9), (9, 4), (12, 12)] {
        for _ in 0..20 {
            let img = random_graded_image(&mut r, w, h, &levels);
            check_against_oracle(&img, FiltrationKind::Sublevel);
            let img = random_image(&mut r, w, h);
            check_against_oracle(&img, FiltrationKind::Superlevel);
        }
    }
}

#[test]
fn library_betti_matches_oracle_and_euler() {
    let mut r = rng(5);
    for _ in 0..500 {
        let img = random_graded_image(&mut r, 6, 5, &[0.0, 1.0]);
        let bits: Vec<bool> = img.values().iter().map(|&v| v > 0.5).collect();
        let bin = BinaryImage::new(6, 5, bits.clone()).unwrap();
        let b = betti_numbers(&bin);
        assert_eq!((b.beta0, b.beta1), oracle_betti(6, 5, &bits));
        assert_eq!(b.beta0 as i64 - b.beta1 as i64, euler_characteristic(&bin));
    }
}

#[test]
fn critical_pixels_carry_values() {
    let mut r = rng(3);
    for _ in 0..50 {
        let img = random_image(&mut r, 9, 7);
        for kind in [FiltrationKind::Sublevel, FiltrationKind::Superlevel] {
            let d = compute_persistence(&img, kind, None).unwrap();
            assert_eq!(d.points.iter().filter(|p| p.is_infinite()).count(), 1);
            for p in &d.points {
                assert_eq!(p.birth, img.at(p.birth_pixel));
                if let Some(dp) = p.death_pixel {
                    assert_eq!(p.death, img.at(dp));
                    match kind {
                        FiltrationKind::Sublevel => assert!(p.birth < p.death),
                        FiltrationKind::Superlevel => assert!(p.birth > p.death),
                    }
                }
            }
        }
    }
}
