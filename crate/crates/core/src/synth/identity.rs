use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

pub const MIN_IMAGE_SIZE: usize = 16;

/// Indices into [`IdentitySpec::geometry`]. Coordinates are fractions of the image side.
pub mod geom {
    pub const FACE_CX: usize = 0;
    pub const FACE_CY: usize = 1;
    pub const FACE_RX: usize = 2;
    pub const FACE_RY: usize = 3;
    pub const EYE_DX: usize = 4;
    pub const EYE_DY: usize = 5;
    pub const EYE_R: usize = 6;
    pub const MOUTH_DY: usize = 7;
    pub const MOUTH_RX: usize = 8;
    pub const MOUTH_RY: usize = 9;
    pub const TEXTURE_ANGLE: usize = 10;
    pub const LEN: usize = 11;
}

/// A procedural face identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub seed: u64,
    /// Skin, background and feature (eyes / mouth) colours.
    pub palette: [[f32; 3]; 3],
    pub geometry: Vec<f32>,
    pub texture_freq: f32,
}

impl IdentitySpec {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = seed::rng(seed, seed::CORPUS_IDENTITY, 0);
        let mut color = |lo: f32, hi: f32| -> [f32; 3] {
            [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
        };
        let skin = color(0.35, 0.95);
        let background = color(0.05, 0.75);
        let feature = color(0.0, 0.45);
        let mut g = vec![0.0f32; geom::LEN];
        g[geom::FACE_CX] = rng.gen_range(0.47..0.53);
        g[geom::FACE_CY] = rng.gen_range(0.47..0.54);
        g[geom::FACE_RX] = rng.gen_range(0.27..0.34);
        g[geom::FACE_RY] = rng.gen_range(0.33..0.40);
        g[geom::EYE_DX] = rng.gen_range(0.09..0.14);
        g[geom::EYE_DY] = rng.gen_range(-0.12..-0.06);
        g[geom::EYE_R] = rng.gen_range(0.035..0.06);
        g[geom::MOUTH_DY] = rng.gen_range(0.12..0.19);
        g[geom::MOUTH_RX] = rng.gen_range(0.06..0.12);
        g[geom::MOUTH_RY] = rng.gen_range(0.02..0.045);
        g[geom::TEXTURE_ANGLE] = rng.gen_range(0.0..std::f32::consts::PI);
        let texture_freq = rng.gen_range(3.0..9.0);
        Self { seed, palette: [skin, background, feature], geometry: g, texture_freq }
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry.len() != geom::LEN {
            return Err(Error::invalid(format!(
                "identity geometry needs {} scalars, got {}",
                geom::LEN,
                self.geometry.len()
            )));
        }
        if !(self.texture_freq > 0.0) {
            return Err(Error::invalid("texture_freq must be positive"));
        }
        Ok(())
    }

    pub fn face_center(&self) -> (f32, f32) {
        (self.geometry[geom::FACE_CX], self.geometry[geom::FACE_CY])
    }

    pub fn face_radii(&self) -> (f32, f32) {
        (self.geometry[geom::FACE_RX], self.geometry[geom::FACE_RY])
    }

    /// Colour at normalised coordinates `(u, v)`; `px` is one pixel in
    /// normalised units and sets the anti-aliasing width.
    pub fn shade(&self, u: f32, v: f32, px: f32) -> [f32; 3] {
        let g = &self.geometry;
        let [skin, bg, feat] = self.palette;
        let (cx, cy) = self.face_center();
        let (rx, ry) = self.face_radii();
        let angle = g[geom::TEXTURE_ANGLE];
        let wave = (std::f32::consts::TAU * self.texture_freq * (u * angle.cos() + v * angle.sin())).sin();

        let shade_bg = 0.85 + 0.15 * v;
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            out[c] = bg[c] * shade_bg + 0.06 * wave;
        }

        let face = coverage(ellipse_sd(u, v, cx, cy, rx, ry), px);
        if face > 0.0 {
            let skin_wave = 0.035 * (std::f32::consts::TAU * 1.7 * self.texture_freq * (u - v)).sin();
            let light = 1.0 - 0.25 * (((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2)).min(1.0);
            let mut face_col = [0.0f32; 3];
            for c in 0..3 {
                face_col[c] = skin[c] * light + skin_wave;
            }
            let eye_y = cy + g[geom::EYE_DY];
            let er = g[geom::EYE_R];
            for ex in [cx - g[geom::EYE_DX], cx + g[geom::EYE_DX]] {
                let cov = coverage(ellipse_sd(u, v, ex, eye_y, er, er * 0.8), px);
                mix(&mut face_col, feat, cov);
            }
            let mouth = coverage(
                ellipse_sd(u, v, cx, cy + g[geom::MOUTH_DY], g[geom::MOUTH_RX], g[geom::MOUTH_RY]),
                px,
            );
            let lips = [feat[0] * 0.6 + 0.35, feat[1] * 0.6, feat[2] * 0.6 + 0.05];
            mix(&mut face_col, lips, mouth);
            mix(&mut out, face_col, face);
        }
        out
    }
}

/// Per-frame variation applied when rendering a pseudo-video frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameJitter {
    /// Layout shift in pixels.
    pub dx: f32,
    pub dy: f32,
    pub brightness: f32,
    pub noise_sigma: f32,
    pub noise_seed: u64,
}

impl FrameJitter {
    pub const NONE: FrameJitter =
        FrameJitter { dx: 0.0, dy: 0.0, brightness: 1.0, noise_sigma: 0.0, noise_seed: 0 };

    pub fn sample(rng: &mut impl Rng) -> Self {
        FrameJitter {
            dx: rng.gen_range(-2.0..2.0),
            dy: rng.gen_range(-2.0..2.0),
            brightness: rng.gen_range(0.94..1.06),
            noise_sigma: 0.01,
            noise_seed: rng.gen(),
        }
    }
}

/// Approximate signed distance to an ellipse boundary, in normalised units
/// (negative inside).
pub fn ellipse_sd(u: f32, v: f32, cx: f32, cy: f32, rx: f32, ry: f32) -> f32 {
    let r = (((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2)).sqrt();
    (r - 1.0) * rx.min(ry)
}

fn coverage(sd: f32, px: f32) -> f32 {
    (0.5 - sd / px).clamp(0.0, 1.0)
}

fn mix(dst: &mut [f32; 3], src: [f32; 3], alpha: f32) {
    for c in 0..3 {
        dst[c] = dst[c] * (1.0 - alpha) + src[c] * alpha;
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < MIN_IMAGE_SIZE {
        return Err(Error::invalid(format!("image size must be >= {MIN_IMAGE_SIZE}, got {size}")));
    }
    Ok(())
}

/// Render with an arbitrary coordinate map `(x, y) -> (u, v)` in pixel units.
pub(crate) fn render_mapped(
    spec: &IdentitySpec,
    size: usize,
    map: impl Fn(f32, f32) -> (f32, f32),
) -> Image {
    let n = size as f32;
    let px = 1.0 / n;
    let mut img = Image::new(size);
    for y in 0..size {
        for x in 0..size {
            let (sx, sy) = map(x as f32 + 0.5, y as f32 + 0.5);
            let rgb = spec.shade(sx / n, sy / n, px);
            img.set_pixel(y, x, rgb);
        }
    }
    img
}

/// Canonical render of an identity: `size x size x 3`, values in `[0, 1]`.
pub fn render_identity(spec: &IdentitySpec, size: usize) -> Result<Image> {
    render_frame(spec, size, &FrameJitter::NONE)
}

pub fn render_frame(spec: &IdentitySpec, size: usize, jitter: &FrameJitter) -> Result<Image> {
    check_size(size)?;
    spec.validate()?;
    let mut img = render_mapped(spec, size, |x, y| (x - jitter.dx, y - jitter.dy));
    finish_frame(&mut img, jitter);
    Ok(img)
}

/// Brightness, sensor noise and clamping shared by real and forged frames.
pub(crate) fn finish_frame(img: &mut Image, jitter: &FrameJitter) {
    if jitter.brightness != 1.0 || jitter.noise_sigma > 0.0 {
        let mut rng = seed::rng(jitter.noise_seed, seed::CORPUS_FRAME, 0);
        let size = img.size();
        for c in 0..3 {
            for y in 0..size {
                for x in 0..size {
                    let noise = if jitter.noise_sigma > 0.0 {
                        jitter.noise_sigma * rng.sample::<f32, _>(rand_distr::StandardNormal)
                    } else {
                        0.0
                    };
                    let v = img.get(c, y, x) * jitter.brightness + noise;
                    img.set(c, y, x, v);
                }
            }
        }
    }
    img.clamp01();
}

pub(crate) fn check_image_size(size: usize) -> Result<()> {
    check_size(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic() {
        let spec = IdentitySpec::from_seed(7);
        assert_eq!(render_identity(&spec, 64).unwrap(), render_identity(&spec, 64).unwrap());
    }

    #[test]
    fn distinct_seeds_render_differently() {
        let a = render_identity(&IdentitySpec::from_seed(7), 64).unwrap();
        let b = render_identity(&IdentitySpec::from_seed(8), 64).unwrap();
        assert!(a.mean_abs_diff(&b) > 0.0);
    }

    #[test]
    fn smallest_size_is_valid() {
        let img = render_identity(&IdentitySpec::from_seed(7), 16).unwrap();
        assert_eq!(img.size(), 16);
        assert_eq!(img.data().len(), 16 * 16 * 3);
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn too_small_is_rejected() {
        let err = render_identity(&IdentitySpec::from_seed(7), 15).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let mut spec = IdentitySpec::from_seed(1);
        spec.geometry.pop();
        assert!(render_identity(&spec, 32).is_err());
    }
}
