//! Image augmentations on `C×H×W` tensors with values in `[0, 1]`.
//!
//! Stochastic ops take an explicit RNG so each image can own a derived
//! stream; the deterministic crops and resizes are shared with TTA.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Area fraction range for the random-scale crop.
    pub crop_scale_range: (f64, f64),
    pub flip_prob: f64,
    pub max_rotate_deg: f64,
    pub jitter_strength: f64,
    pub cutmix_enabled: bool,
    pub cutmix_alpha: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: (0.6, 1.0),
            flip_prob: 0.5,
            max_rotate_deg: 15.0,
            jitter_strength: 0.1,
            cutmix_enabled: false,
            cutmix_alpha: 1.0,
        }
    }
}

impl AugmentConfig {
    /// No-op augmentation: full-image crop, no flip, rotation, jitter or cutmix.
    pub fn disabled() -> Self {
        Self {
            crop_scale_range: (1.0, 1.0),
            flip_prob: 0.0,
            max_rotate_deg: 0.0,
            jitter_strength: 0.0,
            cutmix_enabled: false,
            cutmix_alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::ConfigInvalid(format!("crop scale range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1")));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::ConfigInvalid(format!("flip probability {} not in [0, 1]", self.flip_prob)));
        }
        if !(self.max_rotate_deg >= 0.0 && self.max_rotate_deg <= 180.0) {
            return Err(Error::ConfigInvalid(format!("max rotation {} not in [0, 180]", self.max_rotate_deg)));
        }
        if !(self.jitter_strength >= 0.0) {
            return Err(Error::ConfigInvalid("jitter strength must be non-negative".into()));
        }
        if !(self.cutmix_alpha > 0.0) {
            return Err(Error::ConfigInvalid("cutmix alpha must be positive".into()));
        }
        Ok(())
    }
}

fn chw(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::ShapeMismatch(format!("expected C×H×W image, got {s:?}"))),
    }
}

/// Corner-aligned source coordinate for output index `i`.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear sample of one plane at an in-bounds point.
fn sample(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y0 = (y.floor() as usize).min(h - 1);
    let x0 = (x.floor() as usize).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize with corner-aligned grids.
pub fn resize(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::ShapeMismatch("resize to or from an empty image".into()));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(image.clone());
    }
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &image.data()[ch * h * w..(ch + 1) * h * w];
        for i in 0..out_h {
            let y = source_coord(i, h, out_h);
            for j in 0..out_w {
                out.push(sample(plane, h, w, y, source_coord(j, w, out_w)));
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, out_h, out_w], out))
}

/// Exact sub-tensor copy.
pub fn crop(image: &Tensor, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    if top + height > h || left + width > w {
        return Err(Error::ShapeMismatch(format!(
            "crop {height}x{width} at ({top}, {left}) exceeds {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        for y in top..top + height {
            let start = ch * h * w + y * w + left;
            out.extend_from_slice(&image.data()[start..start + width]);
        }
    }
    Ok(Tensor::from_parts(vec![c, height, width], out))
}

fn center_crop(image: &Tensor, side: usize) -> Result<Tensor> {
    let (_, h, w) = chw(image)?;
    crop(image, (h - side) / 2, (w - side) / 2, side, side)
}

const CROP_TRIES: usize = 10;

/// Random-scale square center crop resized to `out_size × out_size`.
///
/// The crop area is a fraction of `H·W` drawn uniformly from `scale_range`.
/// A draw that rounds below one pixel is redrawn; after ten failures the
/// largest centered square is used instead.
pub fn random_resized_crop<R: Rng + ?Sized>(
    image: &Tensor,
    out_size: usize,
    scale_range: (f64, f64),
    rng: &mut R,
) -> Result<Tensor> {
    let (_, h, w) = chw(image)?;
    if out_size == 0 {
        return Err(Error::ConfigInvalid("output size must be at least 1".into()));
    }
    let max_side = h.min(w);
    let mut side = None;
    for _ in 0..CROP_TRIES {
        let frac = rng.random_range(scale_range.0..=scale_range.1);
        let s = ((frac * (h * w) as f64).sqrt().round() as usize).min(max_side);
        if s >= 1 {
            side = Some(s);
            break;
        }
    }
    let cropped = center_crop(image, side.unwrap_or(max_side))?;
    resize(&cropped, out_size, out_size)
}

/// Reverses column order unconditionally.
pub fn flip(image: &Tensor) -> Result<Tensor> {
    let (_, _, w) = chw(image)?;
    let mut out = image.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    Ok(out)
}

/// Flips with probability `p`.
pub fn horizontal_flip<R: Rng + ?Sized>(image: &Tensor, rng: &mut R, p: f64) -> Result<Tensor> {
    if rng.random::<f64>() < p {
        flip(image)
    } else {
        chw(image)?;
        Ok(image.clone())
    }
}

const EDGE_EPS: f64 = 1e-9;

/// Counter-clockwise rotation (as displayed, rows growing downward) about
/// the image center, bilinear resampling, `fill` outside the source.
pub fn rotate(image: &Tensor, degrees: f64, fill: f64) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    if !(degrees.abs() <= 180.0) {
        return Err(Error::OutOfRange { value: degrees, lo: -180.0, hi: 180.0 });
    }
    if degrees == 0.0 {
        return Ok(image.clone());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let (ymax, xmax) = ((h - 1) as f64, (w - 1) as f64);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let plane = &image.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let dy = y as f64 - cy;
            for x in 0..w {
                let dx = x as f64 - cx;
                let sx = cx + dx * cos - dy * sin;
                let sy = cy + dx * sin + dy * cos;
                if sx < -EDGE_EPS || sy < -EDGE_EPS || sx > xmax + EDGE_EPS || sy > ymax + EDGE_EPS {
                    out.push(fill);
                } else {
                    out.push(sample(plane, h, w, sy.clamp(0.0, ymax), sx.clamp(0.0, xmax)));
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h, w], out))
}

/// Per-channel `v·(1 + a_c) + b_c` with `a_c, b_c ~ U(±strength)`, clamped to `[0, 1]`.
pub fn color_jitter<R: Rng + ?Sized>(image: &Tensor, rng: &mut R, strength: f64) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    let mut out = image.clone();
    for ch in 0..c {
        let a = (2.0 * rng.random::<f64>() - 1.0) * strength;
        let b = (2.0 * rng.random::<f64>() - 1.0) * strength;
        for v in &mut out.data_mut()[ch * h * w..(ch + 1) * h * w] {
            *v = (*v * (1.0 + a) + b).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Mid-gray, so rotated-in corners carry no contrast.
pub const ROTATE_FILL: f64 = 0.5;

/// The train-time chain: random-scale crop, flip, rotation, color jitter.
pub fn augment_image<R: Rng + ?Sized>(image: &Tensor, out_size: usize, cfg: &AugmentConfig, rng: &mut R) -> Result<Tensor> {
    let img = random_resized_crop(image, out_size, cfg.crop_scale_range, rng)?;
    let img = horizontal_flip(&img, rng, cfg.flip_prob)?;
    let angle = if cfg.max_rotate_deg > 0.0 {
        rng.random_range(-cfg.max_rotate_deg..=cfg.max_rotate_deg)
    } else {
        0.0
    };
    let img = rotate(&img, angle, ROTATE_FILL)?;
    color_jitter(&img, rng, cfg.jitter_strength)
}

/// Four corner crops then the center crop: TL, TR, BL, BR, center.
pub fn five_crop(image: &Tensor, size: usize) -> Result<[Tensor; 5]> {
    let (_, h, w) = chw(image)?;
    if size == 0 || size > h.min(w) {
        return Err(Error::CropTooLarge { crop: size, height: h, width: w });
    }
    let (bottom, right) = (h - size, w - size);
    Ok([
        crop(image, 0, 0, size, size)?,
        crop(image, 0, right, size, size)?,
        crop(image, bottom, 0, size, size)?,
        crop(image, bottom, right, size, size)?,
        crop(image, bottom / 2, right / 2, size, size)?,
    ])
}

/// Images `B×C×H×W` with soft labels `B×K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub soft_labels: Tensor,
}

/// Half-open pixel box `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutmixRecord {
    /// Exact surviving-pixel fraction `1 - area / (H·W)`.
    pub lambda_adjusted: f64,
    pub partner_index: usize,
    pub cut: CutBox,
}

/// Box with side fractions `√(1-λ)` centered at `(cx, cy)`, clipped to the image.
pub fn cutmix_box(height: usize, width: usize, lambda: f64, cx: usize, cy: usize) -> CutBox {
    let r = (1.0 - lambda).max(0.0).sqrt();
    let cut_w = (width as f64 * r).floor() as usize;
    let cut_h = (height as f64 * r).floor() as usize;
    CutBox {
        x0: cx.saturating_sub(cut_w / 2).min(width),
        x1: (cx + cut_w / 2).min(width),
        y0: cy.saturating_sub(cut_h / 2).min(height),
        y1: (cy + cut_h / 2).min(height),
    }
}

/// Pastes `cut` from each image's partner and mixes labels by the exact area ratio.
pub fn apply_cutmix(batch: &Batch, cut: CutBox, partners: &[usize]) -> Result<(Batch, Vec<CutmixRecord>)> {
    let (b, c, h, w) = match *batch.images.shape() {
        [b, c, h, w] => (b, c, h, w),
        ref s => return Err(Error::ShapeMismatch(format!("expected B×C×H×W batch, got {s:?}"))),
    };
    let (lb, k) = batch.soft_labels.dims2()?;
    if lb != b || partners.len() != b || partners.iter().any(|&p| p >= b) {
        return Err(Error::ShapeMismatch("partners and labels must match the batch".into()));
    }
    if cut.x1 > w || cut.y1 > h || cut.x0 > cut.x1 || cut.y0 > cut.y1 {
        return Err(Error::ShapeMismatch(format!("cut box {cut:?} outside {h}x{w}")));
    }
    let lambda = 1.0 - cut.area() as f64 / (h * w) as f64;
    let plane = h * w;
    let img = plane * c;
    let src = batch.images.data();
    let mut images = src.to_vec();
    let mut labels = batch.soft_labels.clone();
    let mut records = Vec::with_capacity(b);
    for (i, &p) in partners.iter().enumerate() {
        for ch in 0..c {
            for y in cut.y0..cut.y1 {
                let off = ch * plane + y * w;
                let (dst, from) = (i * img + off, p * img + off);
                images[dst + cut.x0..dst + cut.x1].copy_from_slice(&src[from + cut.x0..from + cut.x1]);
            }
        }
        for j in 0..k {
            labels.row_mut(i)[j] =
                lambda * batch.soft_labels.row(i)[j] + (1.0 - lambda) * batch.soft_labels.row(p)[j];
        }
        records.push(CutmixRecord { lambda_adjusted: lambda, partner_index: p, cut });
    }
    Ok((Batch { images: Tensor::from_parts(batch.images.shape().to_vec(), images), soft_labels: labels }, records))
}

/// Cutmix with `λ ~ Beta(α, α)`, a random partner permutation and a uniform box center.
pub fn cutmix<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<(Batch, Vec<CutmixRecord>)> {
    let b = batch.images.shape().first().copied().unwrap_or(0);
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let (h, w) = match *batch.images.shape() {
        [_, _, h, w] => (h, w),
        ref s => return Err(Error::ShapeMismatch(format!("expected B×C×H×W batch, got {s:?}"))),
    };
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::ConfigInvalid(format!("cutmix alpha: {e}")))?;
    let lambda: f64 = beta.sample(rng);
    let mut partners: Vec<usize> = (0..b).collect();
    partners.shuffle(rng);
    let cx = rng.random_range(0..w);
    let cy = rng.random_range(0..h);
    apply_cutmix(batch, cutmix_box(h, w, lambda, cx, cy), &partners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn constant(v: f64, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::new(vec![c, h, w], vec![v; c * h * w]).unwrap()
    }

    #[test]
    fn full_scale_crop_is_identity() {
        let img = image(1, 3, 8, 8);
        let out = random_resized_crop(&img, 8, (1.0, 1.0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = constant(0.3, 2, 9, 7);
        let out = random_resized_crop(&img, 5, (0.2, 0.9), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(out.shape(), &[2, 5, 5]);
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn tiny_scale_falls_back_to_center_crop() {
        let img = image(2, 1, 4, 4);
        let out = random_resized_crop(&img, 4, (1e-4, 1e-4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn upscale_keeps_corners() {
        let img = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let up = resize(&img, 4, 4).unwrap();
        let d = up.data();
        assert_eq!((d[0], d[3], d[12], d[15]), (0.1, 0.2, 0.3, 0.4));
        // Interior point (1, 1) sits at source (1/3, 1/3).
        let expected = 0.1 * (2.0 / 3.0) * (2.0 / 3.0) + 0.2 * (2.0 / 3.0) * (1.0 / 3.0)
            + 0.3 * (1.0 / 3.0) * (2.0 / 3.0) + 0.4 * (1.0 / 3.0) * (1.0 / 3.0);
        assert!((d[5] - expected).abs() < 1e-15);
    }

    #[test]
    fn flip_examples() {
        let row = Tensor::new(vec![1, 1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(flip(&row).unwrap().data(), &[0.3, 0.2, 0.1]);
        let img = image(3, 3, 4, 5);
        assert_eq!(flip(&flip(&img).unwrap()).unwrap(), img);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(horizontal_flip(&img, &mut rng, 0.0).unwrap(), img);
            assert_eq!(horizontal_flip(&img, &mut rng, 1.0).unwrap(), flip(&img).unwrap());
        }
    }

    #[test]
    fn rotate_examples() {
        let img = image(4, 2, 5, 5);
        assert_eq!(rotate(&img, 0.0, 0.0).unwrap(), img);
        let r = rotate(&img, 90.0, 0.0).unwrap();
        let n = 5;
        for ch in 0..2 {
            for y in 0..n {
                for x in 0..n {
                    // transpose, then reverse rows
                    let want = img.data()[ch * n * n + x * n + (n - 1 - y)];
                    assert!((r.data()[ch * n * n + y * n + x] - want).abs() < 1e-9);
                }
            }
        }
        let c = constant(0.7, 3, 6, 4);
        for deg in [-180.0, -33.0, 15.0, 90.0, 127.5] {
            let out = rotate(&c, deg, 0.7).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
        assert!(matches!(rotate(&img, 181.0, 0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn jitter_examples() {
        let img = image(5, 3, 4, 4);
        assert_eq!(color_jitter(&img, &mut ChaCha8Rng::seed_from_u64(0), 0.0).unwrap(), img);
        let a = color_jitter(&img, &mut ChaCha8Rng::seed_from_u64(9), 0.8).unwrap();
        let b = color_jitter(&img, &mut ChaCha8Rng::seed_from_u64(9), 0.8).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    fn labelled_batch(b: usize, k: usize, h: usize, w: usize) -> Batch {
        let mut imgs = Vec::new();
        for i in 0..b {
            imgs.extend(image(100 + i as u64, 3, h, w).into_data());
        }
        let mut labels = Tensor::zeros(&[b, k]);
        for i in 0..b {
            labels.row_mut(i)[i % k] = 1.0;
        }
        Batch { images: Tensor::new(vec![b, 3, h, w], imgs).unwrap(), soft_labels: labels }
    }

    #[test]
    fn cutmix_box_arithmetic() {
        let cut = cutmix_box(32, 32, 0.75, 16, 16);
        assert_eq!((cut.x1 - cut.x0, cut.y1 - cut.y0), (16, 16));
        let batch = labelled_batch(2, 2, 32, 32);
        let (_, rec) = apply_cutmix(&batch, cut, &[1, 0]).unwrap();
        assert_eq!(rec[0].lambda_adjusted, 0.75);
        assert_eq!(rec[0].lambda_adjusted, 1.0 - 256.0 / 1024.0);
    }

    #[test]
    fn unit_lambda_leaves_batch_unchanged() {
        let batch = labelled_batch(3, 3, 6, 6);
        let cut = cutmix_box(6, 6, 1.0, 2, 3);
        assert_eq!(cut.area(), 0);
        let (out, rec) = apply_cutmix(&batch, cut, &[2, 0, 1]).unwrap();
        assert_eq!(out, batch);
        assert!(rec.iter().all(|r| r.lambda_adjusted == 1.0));
    }

    #[test]
    fn cutmix_needs_two_images() {
        let batch = labelled_batch(1, 2, 4, 4);
        assert!(matches!(cutmix(&batch, 1.0, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn five_crop_offsets() {
        let img = Tensor::new(vec![1, 4, 4], (0..16).map(|v| v as f64 / 16.0).collect()).unwrap();
        let views = five_crop(&img, 2).unwrap();
        let firsts: Vec<f64> = views.iter().map(|v| v.data()[0] * 16.0).collect();
        // top-left pixel index = 4·row + col for offsets (0,0),(0,2),(2,0),(2,2),(1,1)
        assert_eq!(firsts, vec![0.0, 2.0, 8.0, 10.0, 5.0]);
        let full = five_crop(&img, 4).unwrap();
        assert!(full.iter().all(|v| *v == img));
        assert!(matches!(five_crop(&img, 5), Err(Error::CropTooLarge { .. })));
    }

    proptest! {
        #[test]
        fn cutmix_accounting_is_exact(seed in any::<u64>(), h in 2usize..12, w in 2usize..12) {
            let batch = labelled_batch(4, 3, h, w);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (out, rec) = cutmix(&batch, 1.0, &mut rng).unwrap();
            let img = 3 * h * w;
            for (i, r) in rec.iter().enumerate() {
                prop_assert_eq!(r.lambda_adjusted, 1.0 - r.cut.area() as f64 / (h * w) as f64);
                prop_assert!(r.cut.x1 <= w && r.cut.y1 <= h);
                let mut from_partner = 0;
                for ch in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let off = ch * h * w + y * w + x;
                            let v = out.images.data()[i * img + off];
                            let inside = x >= r.cut.x0 && x < r.cut.x1 && y >= r.cut.y0 && y < r.cut.y1;
                            let src = if inside { r.partner_index } else { i };
                            prop_assert_eq!(v, batch.images.data()[src * img + off]);
                            from_partner += inside as usize;
                        }
                    }
                }
                prop_assert_eq!(from_partner, 3 * r.cut.area());
                let s: f64 = out.soft_labels.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn five_crop_views_are_sub_tensors(seed in any::<u64>(), h in 1usize..9, w in 1usize..9, frac in 0.0f64..1.0) {
            let img = image(seed, 2, h, w);
            let size = 1 + ((h.min(w) - 1) as f64 * frac) as usize;
            let views = five_crop(&img, size).unwrap();
            let offsets = [(0, 0), (0, w - size), (h - size, 0), (h - size, w - size), ((h - size) / 2, (w - size) / 2)];
            for (v, (oy, ox)) in views.iter().zip(offsets) {
                for ch in 0..2 {
                    for y in 0..size {
                        for x in 0..size {
                            prop_assert_eq!(v.data()[ch * size * size + y * size + x], img.data()[ch * h * w + (y + oy) * w + x + ox]);
                        }
                    }
                }
            }
        }

        #[test]
        fn augmentations_keep_range_and_are_seeded(seed in any::<u64>()) {
            let img = image(seed, 3, 10, 10);
            let cfg = AugmentConfig::default();
            let a = augment_image(&img, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = augment_image(&img, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.shape(), &[3, 8, 8]);
            prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
