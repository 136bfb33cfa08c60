//! Synthetic textures for desk-scale content and style sets.

use crate::image::Image;
use crate::rng::Prng;

/// Stripes and checkers alternate with this fixed period in pixels.
pub const PATTERN_PERIOD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    /// Vertical stripes, period [`PATTERN_PERIOD`].
    Stripes,
    /// Checkerboard, cell size [`PATTERN_PERIOD`].
    Checker,
    /// Thresholded box-smoothed noise.
    Blobs,
    /// Independent uniform RGB noise.
    Noise,
}

impl TextureKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "stripes" => Some(TextureKind::Stripes),
            "checker" => Some(TextureKind::Checker),
            "blobs" => Some(TextureKind::Blobs),
            "noise" => Some(TextureKind::Noise),
            _ => None,
        }
    }
}

/// Two well-separated colors: the second is the first shifted by a fixed
/// fraction per channel (mod 1), so the pair always differs by at least
/// 0.25 per channel while the texture keeps a seed-specific overall
/// palette.
fn color_pair(rng: &mut Prng) -> ([f32; 3], [f32; 3]) {
    let a = [rng.uniform(), rng.uniform(), rng.uniform()];
    let b = [
        (a[0] + 0.25).fract(),
        (a[1] + 0.30).fract(),
        (a[2] + 0.35).fract(),
    ];
    (a, b)
}

/// Deterministic texture image for a (kind, size, seed) triple.
pub fn synth_texture(kind: TextureKind, size: usize, seed: u64) -> Image {
    let mut rng = Prng::new(seed).split(kind as u64 + 101);
    match kind {
        TextureKind::Stripes => {
            let (a, b) = color_pair(&mut rng);
            let mut img = Image::filled(size, size, a);
            for y in 0..size {
                for x in 0..size {
                    if (x / PATTERN_PERIOD) % 2 == 1 {
                        img.set_pixel(x, y, b);
                    }
                }
            }
            img
        }
        TextureKind::Checker => {
            let (a, b) = color_pair(&mut rng);
            let mut img = Image::filled(size, size, a);
            for y in 0..size {
                for x in 0..size {
                    if (x / PATTERN_PERIOD + y / PATTERN_PERIOD) % 2 == 1 {
                        img.set_pixel(x, y, b);
                    }
                }
            }
            img
        }
        TextureKind::Blobs => {
            let (a, b) = color_pair(&mut rng);
            let field: Vec<f32> = (0..size * size).map(|_| rng.uniform()).collect();
            // Three passes of a 3x3 box blur (clamped borders) smooth the
            // field; thresholding at its mean yields blob regions.
            let mut cur = field;
            for _ in 0..3 {
                let mut next = vec![0.0f32; size * size];
                for y in 0..size {
                    for x in 0..size {
                        let mut acc = 0.0f32;
                        for dy in -1isize..=1 {
                            for dx in -1isize..=1 {
                                let sy = (y as isize + dy).clamp(0, size as isize - 1) as usize;
                                let sx = (x as isize + dx).clamp(0, size as isize - 1) as usize;
                                acc += cur[sy * size + sx];
                            }
                        }
                        next[y * size + x] = acc / 9.0;
                    }
                }
                cur = next;
            }
            let mean = cur.iter().sum::<f32>() / cur.len() as f32;
            let mut img = Image::filled(size, size, a);
            for y in 0..size {
                for x in 0..size {
                    if cur[y * size + x] > mean {
                        img.set_pixel(x, y, b);
                    }
                }
            }
            img
        }
        TextureKind::Noise => {
            let pixels: Vec<f32> = (0..size * size * 3).map(|_| rng.uniform()).collect();
            Image::new(size, size, pixels).expect("consistent dimensions")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_alternates_every_period() {
        let img = synth_texture(TextureKind::Checker, 16, 9);
        let a = img.pixel(0, 0);
        let b = img.pixel(PATTERN_PERIOD, 0);
        assert_ne!(a, b);
        assert_eq!(img.pixel(2 * PATTERN_PERIOD, 0), a);
        assert_eq!(img.pixel(PATTERN_PERIOD, PATTERN_PERIOD), a);
        assert_eq!(img.pixel(0, PATTERN_PERIOD), b);
        // Constant within one cell.
        assert_eq!(img.pixel(1, 2), a);
    }

    #[test]
    fn stripes_alternate_horizontally_only() {
        let img = synth_texture(TextureKind::Stripes, 16, 4);
        let a = img.pixel(0, 0);
        let b = img.pixel(PATTERN_PERIOD, 0);
        assert_ne!(a, b);
        for y in 1..16 {
            assert_eq!(img.pixel(0, y), a);
            assert_eq!(img.pixel(PATTERN_PERIOD, y), b);
        }
    }

    #[test]
    fn same_seed_same_image() {
        for kind in [
            TextureKind::Stripes,
            TextureKind::Checker,
            TextureKind::Blobs,
            TextureKind::Noise,
        ] {
            let a = synth_texture(kind, 12, 77);
            let b = synth_texture(kind, 12, 77);
            assert_eq!(a, b);
            let c = synth_texture(kind, 12, 78);
            assert_ne!(a, c, "{kind:?} should vary with seed");
        }
    }

    #[test]
    fn blobs_have_both_colors() {
        let img = synth_texture(TextureKind::Blobs, 16, 3);
        let first = img.pixel(0, 0);
        assert!(
            (0..16).any(|y| (0..16).any(|x| img.pixel(x, y) != first)),
            "blobs should not be constant"
        );
    }
}
