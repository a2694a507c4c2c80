//! Hounsfield-unit windowing and resizing of CT slices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_HU_WINDOW: (f64, f64) = (-600.0, 1500.0);
pub const DEFAULT_CT_SIZE: usize = 512;

/// A raw slice in Hounsfield units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HuImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Clamps to `window`, rescales linearly to `[0, 1]` and resizes to
/// `size x size` with bilinear interpolation.
pub fn preprocess_ct(raw: &HuImage, window: (f64, f64), size: usize) -> Result<Tensor> {
    let (low, high) = window;
    if !(low < high) {
        return Err(Error::config(format!("HU window [{low}, {high}] is empty")));
    }
    if raw.rows == 0 || raw.cols == 0 || raw.data.is_empty() {
        return Err(Error::data("empty CT image"));
    }
    if raw.rows * raw.cols != raw.data.len() {
        return Err(Error::Dimension {
            op: "preprocess_ct",
            lhs: vec![raw.rows, raw.cols],
            rhs: vec![raw.data.len()],
        });
    }
    if size == 0 {
        return Err(Error::config("output size must be positive"));
    }
    let span = high - low;
    let scaled = raw
        .data
        .iter()
        .map(|&hu| (hu.clamp(low, high) - low) / span)
        .collect();
    let img = Tensor::new(vec![raw.rows, raw.cols], scaled)?;
    bilinear_resize(&img, size, size)
}

/// Bilinear resize of a `[H, W]` image using pixel-center alignment.
/// A constant image stays exactly constant.
pub fn bilinear_resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = img
        .dims2()
        .ok_or_else(|| Error::contract("bilinear_resize expects a [H, W] image"))?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::config("output size must be positive"));
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = libm::floor(pos) as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, pos - i0 as f64)
    };
    let d = img.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, ty) = axis(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, tx) = axis(x, w, out_w);
            let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
            let top = lerp(d[y0 * w + x0], d[y0 * w + x1], tx);
            let bottom = lerp(d[y1 * w + x0], d[y1 * w + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hu(rows: usize, cols: usize, data: Vec<f64>) -> HuImage {
        HuImage { rows, cols, data }
    }

    #[test]
    fn window_endpoints_and_midpoint() {
        let img = hu(1, 5, vec![-600.0, 1500.0, 450.0, -2000.0, 3000.0]);
        let out = preprocess_ct(&img, DEFAULT_HU_WINDOW, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        let same = preprocess_ct(&hu(1, 1, vec![450.0]), DEFAULT_HU_WINDOW, 1).unwrap();
        assert_eq!(same.data(), &[0.5]);
        let full = bilinear_resize(
            &Tensor::new(vec![1, 5], img.data.iter().map(|&v| (v.clamp(-600.0, 1500.0) + 600.0) / 2100.0).collect()).unwrap(),
            1,
            5,
        )
        .unwrap();
        assert_eq!(full.data(), &[0.0, 1.0, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = hu(7, 5, vec![123.0; 35]);
        let out = preprocess_ct(&img, DEFAULT_HU_WINDOW, 16).unwrap();
        let expected = (123.0 + 600.0) / 2100.0;
        assert!(out.data().iter().all(|&v| v == expected));
        let out = preprocess_ct(&img, DEFAULT_HU_WINDOW, DEFAULT_CT_SIZE).unwrap();
        assert_eq!(out.shape(), &[512, 512]);
        assert!(out.data().iter().all(|&v| v == expected));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let t = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
        assert_eq!(bilinear_resize(&t, 3, 4).unwrap(), t);
    }

    #[test]
    fn windowed_round_trip_is_idempotent() {
        let unit: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let (low, high) = DEFAULT_HU_WINDOW;
        let raw = hu(8, 8, unit.iter().map(|x| low + x * (high - low)).collect());
        let out = preprocess_ct(&raw, DEFAULT_HU_WINDOW, 8).unwrap();
        for (a, b) in out.data().iter().zip(&unit) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(preprocess_ct(&hu(0, 0, vec![]), DEFAULT_HU_WINDOW, 4), Err(Error::Data(_))));
        assert!(matches!(preprocess_ct(&hu(1, 1, vec![0.0]), (5.0, 5.0), 4), Err(Error::Config(_))));
        assert!(preprocess_ct(&hu(2, 2, vec![0.0]), DEFAULT_HU_WINDOW, 4).is_err());
    }
}
