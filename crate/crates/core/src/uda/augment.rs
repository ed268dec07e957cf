use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::sim::{Observation, FRAME_HEIGHT, FRAME_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugKind {
    Identity,
    Autocontrast,
    Equalize,
    Rotation,
    Solarize,
    Shear,
    Translate,
    Posterize,
}

impl AugKind {
    /// The seven photometric and geometric kinds, without the identity.
    pub const ALL: [AugKind; 7] = [
        AugKind::Autocontrast,
        AugKind::Equalize,
        AugKind::Rotation,
        AugKind::Solarize,
        AugKind::Shear,
        AugKind::Translate,
        AugKind::Posterize,
    ];
}

/// Magnitudes per kind. Geometric kinds draw their parameter uniformly from
/// `[-max, max]` using the augmentation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugMagnitudes {
    pub rotation_deg: f64,
    pub translate_px: i64,
    pub shear: f64,
    pub solarize_threshold: f64,
    pub posterize_bits: u32,
}

impl Default for AugMagnitudes {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            translate_px: 3,
            shear: 0.15,
            solarize_threshold: 0.5,
            posterize_bits: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub kind: AugKind,
    /// Kind-specific: max degrees, max pixels, max shear factor, threshold,
    /// or bit count. Unused by identity, autocontrast and equalize.
    pub magnitude: f64,
    pub seed: u64,
}

impl Augmentation {
    pub fn new(kind: AugKind, mags: &AugMagnitudes, seed: u64) -> Self {
        let magnitude = match kind {
            AugKind::Identity | AugKind::Autocontrast | AugKind::Equalize => 0.0,
            AugKind::Rotation => mags.rotation_deg,
            AugKind::Translate => mags.translate_px as f64,
            AugKind::Shear => mags.shear,
            AugKind::Solarize => mags.solarize_threshold,
            AugKind::Posterize => f64::from(mags.posterize_bits),
        };
        Self { kind, magnitude, seed }
    }

    pub fn identity() -> Self {
        Self {
            kind: AugKind::Identity,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

pub fn augment(y: &Observation, a: &Augmentation) -> Observation {
    match a.kind {
        AugKind::Identity => y.clone(),
        AugKind::Autocontrast => autocontrast(y),
        AugKind::Equalize => equalize(y),
        AugKind::Solarize => solarize(y, a.magnitude),
        AugKind::Posterize => posterize(y, a.magnitude.round().max(1.0) as u32),
        AugKind::Rotation => {
            let deg = draw(a, a.magnitude);
            rotate(y, deg)
        }
        AugKind::Shear => {
            let s = draw(a, a.magnitude);
            shear(y, s)
        }
        AugKind::Translate => {
            let max = a.magnitude.round() as i64;
            let mut rng = seeded(a.seed);
            let dx = rng.random_range(-max..=max);
            let dy = rng.random_range(-max..=max);
            translate(y, dx, dy)
        }
    }
}

fn draw(a: &Augmentation, max: f64) -> f64 {
    if max == 0.0 {
        return 0.0;
    }
    seeded(a.seed).random_range(-max..=max)
}

pub fn autocontrast(y: &Observation) -> Observation {
    let lo = y.pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return y.clone();
    }
    Observation::from_pixels(y.pixels.iter().map(|p| ((p - lo) / (hi - lo)).clamp(0.0, 1.0)).collect())
}

/// Histogram equalization over 256 intensity levels.
pub fn equalize(y: &Observation) -> Observation {
    let levels: Vec<usize> = y
        .pixels
        .iter()
        .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as usize)
        .collect();
    let mut hist = [0usize; 256];
    for &l in &levels {
        hist[l] += 1;
    }
    let n = levels.len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf[*levels.iter().min().expect("non-empty frame")];
    if cdf_min == n {
        return y.clone();
    }
    let denom = (n - cdf_min) as f64;
    Observation::from_pixels(
        levels
            .iter()
            .map(|&l| (cdf[l] - cdf_min) as f64 / denom)
            .collect(),
    )
}

pub fn solarize(y: &Observation, threshold: f64) -> Observation {
    Observation::from_pixels(
        y.pixels
            .iter()
            .map(|&p| if p > threshold { 1.0 - p } else { p })
            .collect(),
    )
}

/// Quantizes to `2^bits` evenly spaced levels in [0, 1].
pub fn posterize(y: &Observation, bits: u32) -> Observation {
    let levels = 1u64 << bits.min(16);
    let top = (levels - 1) as f64;
    Observation::from_pixels(
        y.pixels
            .iter()
            .map(|&p| ((p.clamp(0.0, 1.0) * levels as f64).floor()).min(top) / top)
            .collect(),
    )
}

/// Inverse-mapped nearest-neighbor resampling with zero fill.
/// `src(row, col)` returns the source coordinates of each output pixel.
fn resample(y: &Observation, src: impl Fn(f64, f64) -> (f64, f64)) -> Observation {
    let mut out = Observation::blank();
    for r in 0..FRAME_HEIGHT {
        for c in 0..FRAME_WIDTH {
            let (sr, sc) = src(r as f64, c as f64);
            let (sr, sc) = (sr.round(), sc.round());
            if sr >= 0.0 && sc >= 0.0 && (sr as usize) < FRAME_HEIGHT && (sc as usize) < FRAME_WIDTH {
                out.set(r, c, y.get(sr as usize, sc as usize));
            }
        }
    }
    out
}

const CENTER_ROW: f64 = (FRAME_HEIGHT as f64 - 1.0) / 2.0;
const CENTER_COL: f64 = (FRAME_WIDTH as f64 - 1.0) / 2.0;

/// Rotation about the frame center; positive degrees turn clockwise on screen.
pub fn rotate(y: &Observation, degrees: f64) -> Observation {
    let (s, c) = degrees.to_radians().sin_cos();
    resample(y, |r, col| {
        let (dr, dc) = (r - CENTER_ROW, col - CENTER_COL);
        (CENTER_ROW + c * dr + s * dc, CENTER_COL - s * dr + c * dc)
    })
}

/// Horizontal shear about the center row.
pub fn shear(y: &Observation, factor: f64) -> Observation {
    resample(y, |r, col| (r, col - factor * (r - CENTER_ROW)))
}

pub fn translate(y: &Observation, dx: i64, dy: i64) -> Observation {
    resample(y, |r, col| (r - dy as f64, col - dx as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{render, SystemState};

    fn frame() -> Observation {
        render(&SystemState::new(0.3, 0.0, 0.2, 0.0))
    }

    #[test]
    fn autocontrast_fixed_point() {
        let f = frame();
        assert_eq!(autocontrast(&f), f);
    }

    #[test]
    fn autocontrast_stretches() {
        let f = Observation::from_pixels(frame().pixels.iter().map(|p| 0.25 + 0.5 * p).collect());
        assert_eq!(autocontrast(&f), frame());
    }

    #[test]
    fn zero_rotation_is_identity() {
        let f = frame();
        assert_eq!(rotate(&f, 0.0), f);
        assert_eq!(shear(&f, 0.0), f);
        assert_eq!(translate(&f, 0, 0), f);
    }

    #[test]
    fn two_level_posterize_is_binary() {
        let f = Observation::from_pixels((0..1024).map(|i| i as f64 / 1023.0).collect());
        let p = posterize(&f, 1);
        assert!(p.pixels.iter().all(|&v| v == 0.0 || v == 1.0));
        let p4 = posterize(&f, 2);
        let mut vals: Vec<u64> = p4.pixels.iter().map(|v| (v * 3.0).round() as u64).collect();
        vals.dedup();
        assert_eq!(vals, vec![0, 1, 2, 3]);
    }

    #[test]
    fn solarize_inverts_bright_pixels() {
        let f = frame();
        let s = solarize(&f, 0.5);
        for (a, b) in f.pixels.iter().zip(&s.pixels) {
            assert_eq!(*b, if *a > 0.5 { 1.0 - a } else { *a });
        }
    }

    #[test]
    fn equalize_spreads_levels() {
        let f = Observation::from_pixels((0..1024).map(|i| if i < 512 { 0.2 } else { 0.4 }).collect());
        let e = equalize(&f);
        assert_eq!(e.pixels[0], 0.0);
        assert_eq!(e.pixels[1023], 1.0);
        let f = frame();
        assert_eq!(equalize(&f), f);
    }

    #[test]
    fn translate_moves_pixels() {
        let f = frame();
        let t = translate(&f, 2, -1);
        assert_eq!(t.get(10, 18), f.get(11, 16));
    }

    #[test]
    fn seeded_augmentations_repeat() {
        let f = frame();
        let mags = AugMagnitudes::default();
        for kind in AugKind::ALL {
            let a = Augmentation::new(kind, &mags, 42);
            let x = augment(&f, &a);
            assert_eq!(x, augment(&f, &a));
            assert!(x.is_valid());
        }
    }
}
