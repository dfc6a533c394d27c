use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::identity::{
    check_image_size, ellipse_sd, finish_frame, render_mapped, FrameJitter, IdentitySpec,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

/// Forgery style. `None` marks real samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryMethod {
    None,
    BlendHue,
    BoundarySplice,
    NoiseTexture,
    WarpLowfreq,
}

impl ForgeryMethod {
    pub const FORGERIES: [ForgeryMethod; 4] = [
        ForgeryMethod::BlendHue,
        ForgeryMethod::BoundarySplice,
        ForgeryMethod::NoiseTexture,
        ForgeryMethod::WarpLowfreq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeryMethod::None => "none",
            ForgeryMethod::BlendHue => "blend_hue",
            ForgeryMethod::BoundarySplice => "boundary_splice",
            ForgeryMethod::NoiseTexture => "noise_texture",
            ForgeryMethod::WarpLowfreq => "warp_lowfreq",
        }
    }
}

impl fmt::Display for ForgeryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForgeryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ForgeryMethod::None]
            .into_iter()
            .chain(ForgeryMethod::FORGERIES)
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown forgery method `{s}`")))
    }
}

/// Inner-face radii (as a fraction of the target face radii) replaced by source content.
pub const FACE_REGION_SCALE: f32 = 0.78;
/// Half-width of the blurred seam band for `boundary_splice`, in pixels.
pub const SEAM_HALF_WIDTH: f32 = 2.0;
const HUE_SHIFT_DEG: f32 = 28.0;
const BLEND_ALPHA: f32 = 0.85;
const NOISE_AMPLITUDE: f32 = 0.07;
const WARP_AMPLITUDE: f32 = 0.045;

/// Face region of a target identity under a frame shift, in pixel units.
#[derive(Debug, Clone, Copy)]
pub struct FaceRegion {
    pub cx: f32,
    pub cy: f32,
    pub rx: f32,
    pub ry: f32,
}

impl FaceRegion {
    pub fn of(target: &IdentitySpec, size: usize, jitter: &FrameJitter) -> Self {
        let n = size as f32;
        let (cx, cy) = target.face_center();
        let (rx, ry) = target.face_radii();
        FaceRegion {
            cx: cx * n + jitter.dx,
            cy: cy * n + jitter.dy,
            rx: rx * n * FACE_REGION_SCALE,
            ry: ry * n * FACE_REGION_SCALE,
        }
    }

    /// Approximate signed distance in pixels at the pixel centre `(x, y)`.
    pub fn sd(&self, x: usize, y: usize) -> f32 {
        ellipse_sd(x as f32 + 0.5, y as f32 + 0.5, self.cx, self.cy, self.rx, self.ry)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.sd(x, y) <= 0.0
    }

    /// Row-major inside/outside mask.
    pub fn mask(&self, size: usize) -> Vec<bool> {
        (0..size * size).map(|p| self.contains(p % size, p / size)).collect()
    }
}

/// Splice `source` into `target` under `method`.
pub fn forge(
    source: &IdentitySpec,
    target: &IdentitySpec,
    method: ForgeryMethod,
    size: usize,
    noise_seed: u64,
) -> Result<Image> {
    forge_frame(source, target, method, size, noise_seed, &FrameJitter::NONE)
}

pub fn forge_frame(
    source: &IdentitySpec,
    target: &IdentitySpec,
    method: ForgeryMethod,
    size: usize,
    noise_seed: u64,
    jitter: &FrameJitter,
) -> Result<Image> {
    if method == ForgeryMethod::None {
        return Err(Error::invalid("real samples are rendered, not forged (method=none)"));
    }
    check_image_size(size)?;
    source.validate()?;
    target.validate()?;

    let n = size as f32;
    let region = FaceRegion::of(target, size, jitter);
    let base = render_mapped(target, size, |x, y| (x - jitter.dx, y - jitter.dy));
    // Source face aligned onto the target face centre.
    let (tcx, tcy) = target.face_center();
    let (scx, scy) = source.face_center();
    let (ox, oy) = ((tcx - scx) * n + jitter.dx, (tcy - scy) * n + jitter.dy);
    let mut rng = seed::rng(noise_seed, "forge.method", method as u64);

    let out = match method {
        ForgeryMethod::None => unreachable!(),
        ForgeryMethod::BlendHue => {
            let src = render_mapped(source, size, |x, y| (x - ox, y - oy));
            let shift = (HUE_SHIFT_DEG + rng.gen_range(-6.0..6.0)).to_radians();
            let rot = hue_rotation(shift);
            composite(&base, size, |x, y| {
                region.contains(x, y).then(|| (apply3(&rot, src.pixel(y, x)), BLEND_ALPHA))
            })
        }
        ForgeryMethod::BoundarySplice => {
            let src = render_mapped(source, size, |x, y| (x - ox, y - oy));
            let pasted = composite(&base, size, |x, y| region.contains(x, y).then(|| (src.pixel(y, x), 1.0)));
            blur_band(&pasted, &region, SEAM_HALF_WIDTH)
        }
        ForgeryMethod::NoiseTexture => {
            let src = render_mapped(source, size, |x, y| (x - ox, y - oy));
            let field = band_limited_field(&mut rng, size);
            composite(&base, size, |x, y| {
                region.contains(x, y).then(|| {
                    let mut p = src.pixel(y, x);
                    let f = field[y * size + x];
                    p[0] += f;
                    p[1] += f * 0.8;
                    p[2] += f * 1.2;
                    (p, 1.0)
                })
            })
        }
        ForgeryMethod::WarpLowfreq => {
            let amp = WARP_AMPLITUDE * n;
            let (kx, ky) = (rng.gen_range(1.0..2.5f32), rng.gen_range(1.0..2.5f32));
            let (px, py) = (rng.gen_range(0.0..std::f32::consts::TAU), rng.gen_range(0.0..std::f32::consts::TAU));
            let src = render_mapped(source, size, |x, y| {
                let wx = amp * (std::f32::consts::TAU * ky * y / n + py).sin();
                let wy = amp * (std::f32::consts::TAU * kx * x / n + px).sin();
                (x - ox + wx, y - oy + wy)
            });
            composite(&base, size, |x, y| {
                let sd = region.sd(x, y);
                // Feathered inside the region, zero outside it.
                let feather = (-sd / 3.0).clamp(0.0, 1.0);
                (feather > 0.0).then(|| (src.pixel(y, x), feather))
            })
        }
    };
    let mut out = out;
    finish_frame(&mut out, jitter);
    Ok(out)
}

fn composite(
    base: &Image,
    size: usize,
    layer: impl Fn(usize, usize) -> Option<([f32; 3], f32)>,
) -> Image {
    let mut out = base.clone();
    for y in 0..size {
        for x in 0..size {
            if let Some((rgb, alpha)) = layer(x, y) {
                let b = base.pixel(y, x);
                out.set_pixel(y, x, std::array::from_fn(|c| b[c] * (1.0 - alpha) + rgb[c] * alpha));
            }
        }
    }
    out
}

/// Rotation about the grey axis of RGB space.
fn hue_rotation(theta: f32) -> [[f32; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let k = (1.0 - c) / 3.0;
    let r = (1.0f32 / 3.0).sqrt() * s;
    [[c + k, k - r, k + r], [k + r, c + k, k - r], [k - r, k + r, c + k]]
}

fn apply3(m: &[[f32; 3]; 3], v: [f32; 3]) -> [f32; 3] {
    std::array::from_fn(|i| (m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2]).clamp(0.0, 1.0))
}

/// Gaussian blur (sigma 1, 5x5) restricted to pixels within `half_width` of the region boundary.
fn blur_band(img: &Image, region: &FaceRegion, half_width: f32) -> Image {
    let size = img.size();
    let kernel: Vec<f32> = (-2i32..=2).map(|d| (-(d * d) as f32 / 2.0).exp()).collect();
    let mut out = img.clone();
    for y in 0..size {
        for x in 0..size {
            if region.sd(x, y).abs() > half_width {
                continue;
            }
            for c in 0..3 {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (j, ky) in kernel.iter().enumerate() {
                    for (i, kx) in kernel.iter().enumerate() {
                        let yy = (y as i32 + j as i32 - 2).clamp(0, size as i32 - 1) as usize;
                        let xx = (x as i32 + i as i32 - 2).clamp(0, size as i32 - 1) as usize;
                        acc += ky * kx * img.get(c, yy, xx);
                        wsum += ky * kx;
                    }
                }
                out.set(c, y, x, acc / wsum);
            }
        }
    }
    out
}

/// Sum of random mid-frequency plane waves (6 to 14 cycles per image).
fn band_limited_field(rng: &mut impl Rng, size: usize) -> Vec<f32> {
    let n = size as f32;
    let waves: Vec<(f32, f32, f32)> = (0..6)
        .map(|_| {
            let freq = rng.gen_range(6.0..14.0f32);
            let angle = rng.gen_range(0.0..std::f32::consts::PI);
            let phase = rng.gen_range(0.0..std::f32::consts::TAU);
            (freq * angle.cos(), freq * angle.sin(), phase)
        })
        .collect();
    let norm = NOISE_AMPLITUDE / (waves.len() as f32).sqrt();
    (0..size * size)
        .map(|p| {
            let (x, y) = ((p % size) as f32 / n, (p / size) as f32 / n);
            waves
                .iter()
                .map(|&(fx, fy, ph)| (std::f32::consts::TAU * (fx * x + fy * y) + ph).sin())
                .sum::<f32>()
                * norm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::identity::render_identity;

    fn pair() -> (IdentitySpec, IdentitySpec) {
        (IdentitySpec::from_seed(3), IdentitySpec::from_seed(11))
    }

    #[test]
    fn method_none_is_rejected() {
        let (s, t) = pair();
        assert!(matches!(forge(&s, &t, ForgeryMethod::None, 64, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn forge_is_deterministic() {
        let (s, t) = pair();
        for m in ForgeryMethod::FORGERIES {
            assert_eq!(forge(&s, &t, m, 64, 5).unwrap(), forge(&s, &t, m, 64, 5).unwrap(), "{m}");
        }
    }

    #[test]
    fn self_blend_still_shifts_hue() {
        let s = IdentitySpec::from_seed(3);
        let forged = forge(&s, &s, ForgeryMethod::BlendHue, 64, 0).unwrap();
        assert!(forged.mean_abs_diff(&render_identity(&s, 64).unwrap()) > 0.0);
    }

    #[test]
    fn every_method_changes_the_face_region() {
        let (s, t) = pair();
        let base = render_identity(&t, 64).unwrap();
        for m in ForgeryMethod::FORGERIES {
            let f = forge(&s, &t, m, 64, 1).unwrap();
            assert!(f.mean_abs_diff(&base) > 1e-3, "{m}");
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in ForgeryMethod::FORGERIES {
            assert_eq!(m.as_str().parse::<ForgeryMethod>().unwrap(), m);
        }
        assert!("faceswap".parse::<ForgeryMethod>().is_err());
    }
}
