//! Pixel-space augmentation applied to every training view.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::rng::Xoshiro256;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub p_flip: f64,
    pub brightness_delta_max: f64,
    pub noise_sigma: f64,
    /// Radians.
    pub max_rotate: f64,
    pub crop_scale_min: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            p_flip: 0.5,
            brightness_delta_max: 0.2,
            noise_sigma: 0.05,
            max_rotate: 0.1,
            crop_scale_min: 0.8,
        }
    }
}

impl AugmentPolicy {
    /// Policy that leaves every image untouched.
    pub fn identity() -> Self {
        Self {
            p_flip: 0.0,
            brightness_delta_max: 0.0,
            noise_sigma: 0.0,
            max_rotate: 0.0,
            crop_scale_min: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPolicy(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_flip) {
            return bad("p_flip must be in [0,1]");
        }
        if !(self.brightness_delta_max >= 0.0 && self.brightness_delta_max.is_finite()) {
            return bad("brightness_delta_max must be finite and >= 0");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if !(self.max_rotate >= 0.0 && self.max_rotate.is_finite()) {
            return bad("max_rotate must be finite and >= 0");
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= 1.0) {
            return bad("crop_scale_min must be in (0,1]");
        }
        Ok(())
    }
}

/// Apply flip, brightness, noise, rotation and crop, in that order.
pub fn augment_image(x: &Image, policy: &AugmentPolicy, seed: u64) -> Result<Image> {
    policy.validate()?;
    let mut img = x.clone();

    let mut rng = Xoshiro256::for_item(seed, &[0]);
    if rng.bernoulli(policy.p_flip) {
        img = flip_horizontal(&img);
    }

    let mut rng = Xoshiro256::for_item(seed, &[1]);
    let shift = rng.uniform(-1.0, 1.0) * policy.brightness_delta_max;
    if shift != 0.0 {
        for v in img.data_mut() {
            *v = (*v as f64 + shift).clamp(0.0, 1.0) as f32;
        }
    }

    if policy.noise_sigma > 0.0 {
        let mut rng = Xoshiro256::for_item(seed, &[2]);
        for v in img.data_mut() {
            *v = (*v as f64 + policy.noise_sigma * rng.normal()).clamp(0.0, 1.0) as f32;
        }
    }

    let mut rng = Xoshiro256::for_item(seed, &[3]);
    let angle = rng.uniform(-1.0, 1.0) * policy.max_rotate;
    if angle != 0.0 {
        img = rotate(&img, angle);
    }

    let mut rng = Xoshiro256::for_item(seed, &[4]);
    let scale = rng.uniform(policy.crop_scale_min, 1.0);
    let fx = rng.next_f64();
    let fy = rng.next_f64();
    if scale < 1.0 {
        img = crop_resize(&img, scale, fy, fx);
    }

    img.clamp_unit();
    Ok(img)
}

pub fn flip_horizontal(x: &Image) -> Image {
    let (h, w) = (x.height(), x.width());
    let mut out = Image::new(h, w);
    for y in 0..h {
        for c in 0..w {
            out.set_pixel(y, c, x.pixel(y, w - 1 - c));
        }
    }
    out
}

/// Bilinear sample at continuous pixel coordinates, clamping to the edge.
fn sample_bilinear(x: &Image, sy: f64, sx: f64) -> [f32; 3] {
    let (h, w) = (x.height(), x.width());
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let ty = sy - y0 as f64;
    let tx = sx - x0 as f64;
    let d = x.data();
    let mut out = [0.0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let at = |yy: usize, xx: usize| d[(yy * w + xx) * CHANNELS + c] as f64;
        let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
        let bot = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
        *o = (top * (1.0 - ty) + bot * ty) as f32;
    }
    out
}

pub fn rotate(x: &Image, angle: f64) -> Image {
    let (h, w) = (x.height(), x.width());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, c) = angle.sin_cos();
    let mut out = Image::new(h, w);
    for y in 0..h {
        for xx in 0..w {
            let dy = y as f64 - cy;
            let dx = xx as f64 - cx;
            // inverse rotation maps output to source
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            out.set_pixel(y, xx, sample_bilinear(x, sy, sx));
        }
    }
    out
}

/// Crop a square-proportional window of relative size `scale` at relative
/// offsets `(fy, fx)` in [0,1) and resize it back to the input size.
pub fn crop_resize(x: &Image, scale: f64, fy: f64, fx: f64) -> Image {
    let (h, w) = (x.height(), x.width());
    let ch = scale * h as f64;
    let cw = scale * w as f64;
    let oy = fy * (h as f64 - ch);
    let ox = fx * (w as f64 - cw);
    let mut out = Image::new(h, w);
    for y in 0..h {
        for xx in 0..w {
            let sy = oy + (y as f64 + 0.5) * ch / h as f64 - 0.5;
            let sx = ox + (xx as f64 + 0.5) * cw / w as f64 - 0.5;
            out.set_pixel(y, xx, sample_bilinear(x, sy, sx));
        }
    }
    out
}
