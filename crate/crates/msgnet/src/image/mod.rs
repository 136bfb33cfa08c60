//! RGB image carrier, PPM codec, resizing, synthetic textures and the
//! color-matching transform.

mod color;
mod ppm;
mod synth;

pub use color::{color_match, color_match_unclamped};
pub use ppm::{load_ppm, save_ppm};
pub use synth::{synth_texture, TextureKind};

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// RGB image with float pixels in [0, 1], interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * Self::CHANNELS {
            return Err(Error::shape(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                width * height * Self::CHANNELS,
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar 1x3xHxW tensor: channel planes R, G, B, each row-major.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0f32; 3 * w * h];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + x) * 3;
                for c in 0..3 {
                    data[c * h * w + y * w + x] = self.pixels[src + c];
                }
            }
        }
        Tensor::new(vec![1, 3, h, w], data).expect("consistent dimensions")
    }

    /// Inverse of [`Image::to_tensor`], clamping values into [0, 1].
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[0] != 1 || s[1] != 3 {
            return Err(Error::shape(format!(
                "from_tensor: expected 1x3xHxW, got {s:?}"
            )));
        }
        let (h, w) = (s[2], s[3]);
        let data = t.data();
        let mut pixels = vec![0.0f32; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let dst = (y * w + x) * 3;
                for c in 0..3 {
                    pixels[dst + c] = data[c * h * w + y * w + x].clamp(0.0, 1.0);
                }
            }
        }
        Image::new(w, h, pixels)
    }

    /// Bilinear resize with half-pixel-center alignment.
    pub fn resize(&self, new_width: usize, new_height: usize) -> Result<Self> {
        if new_width == self.width && new_height == self.height {
            return Ok(self.clone());
        }
        let tape = Tape::new();
        let v = tape.constant(&self.to_tensor());
        let resized = tape.bilinear_resize(v, new_height, new_width)?;
        Image::from_tensor(&tape.tensor(resized))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_in_range() {
        let img = Image::new(
            2,
            2,
            vec![
                0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.5,
            ],
        )
        .unwrap();
        let back = Image::from_tensor(&img.to_tensor()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn from_tensor_clamps() {
        let t = Tensor::new(vec![1, 3, 1, 1], vec![-0.5, 0.5, 1.5]).unwrap();
        let img = Image::from_tensor(&t).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn tensor_layout_is_planar() {
        // 2x1 image: left pixel (1,2,3)/10, right pixel (4,5,6)/10.
        let img = Image::new(2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        // Planes: R = [0.1, 0.4], G = [0.2, 0.5], B = [0.3, 0.6].
        assert_eq!(t.data(), &[0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Image::filled(4, 3, [0.25, 0.5, 0.75]);
        let same = img.resize(4, 3).unwrap();
        assert_eq!(same, img);
        let up = img.resize(8, 6).unwrap();
        for px in up.pixels().chunks(3) {
            assert_eq!(px, &[0.25, 0.5, 0.75]);
        }
    }

    #[test]
    fn resize_two_to_three_fixture() {
        // Grayscale 2x2 ramp [0, 1/3; 2/3, 1]; the 3x3 bilinear result with
        // half-pixel centers interpolates midpoints along each axis.
        let vals = [0.0f32, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let mut pixels = Vec::new();
        for v in vals {
            pixels.extend_from_slice(&[v, v, v]);
        }
        let img = Image::new(2, 2, pixels).unwrap();
        let out = img.resize(3, 3).unwrap();
        let expected = [
            0.0,
            1.0 / 6.0,
            1.0 / 3.0,
            1.0 / 3.0,
            0.5,
            2.0 / 3.0,
            2.0 / 3.0,
            5.0 / 6.0,
            1.0,
        ];
        for (i, want) in expected.iter().enumerate() {
            let got = out.pixel(i % 3, i / 3)[0];
            assert!((got - want).abs() < 1e-6, "pixel {i}: {got} vs {want}");
        }
    }
}
