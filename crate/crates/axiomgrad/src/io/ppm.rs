//! Attribution overlays rendered as binary PPM (P6): positive values in
//! green, negative in red, intensity normalized by the 99th-percentile
//! magnitude, optional yellow bounding box.

use crate::attribution::AttributionMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct OverlayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

impl OverlayImage {
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm_bytes())?;
        Ok(())
    }
}

/// 99th-percentile of magnitudes; falls back to the maximum when the
/// percentile lands on zero (sparse attribution maps).
fn normalizer(values: &[f64]) -> f64 {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((mags.len() as f64 - 1.0) * 0.99).round() as usize;
    let p99 = mags[idx];
    if p99 > 0.0 {
        p99
    } else {
        *mags.last().unwrap_or(&0.0)
    }
}

/// Blends attribution marks over a grayscale base image
/// (shape `[rows, cols]` or `[1, rows, cols]`, values in `[0, 1]`).
pub fn render_overlay(
    image: &Tensor,
    attribution: &AttributionMap,
    bounding_box: Option<(usize, usize, usize, usize)>,
) -> Result<OverlayImage> {
    let (rows, cols) = match image.shape() {
        [r, c] => (*r, *c),
        [1, r, c] => (*r, *c),
        other => {
            return Err(Error::shape("render_overlay image", &[28, 28], other));
        }
    };
    if attribution.values.len() != rows * cols {
        return Err(Error::shape(
            "render_overlay attribution",
            &[rows * cols],
            attribution.values.shape(),
        ));
    }
    if let Some((r0, c0, r1, c1)) = bounding_box {
        if r1 >= rows || c1 >= cols || r0 > r1 || c0 > c1 {
            return Err(Error::invalid("bounding box outside image or inverted"));
        }
    }

    let norm = normalizer(attribution.values.data());
    let mut pixels = Vec::with_capacity(rows * cols * 3);
    for (k, (&px, &av)) in image
        .data()
        .iter()
        .zip(attribution.values.data())
        .enumerate()
    {
        let gray = (px.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (mut r, mut g, mut b) = (gray, gray, gray);
        if norm > 0.0 && av != 0.0 {
            let intensity = (av.abs() / norm).min(1.0);
            let blend = |base: u8, mark: u8| -> u8 {
                ((1.0 - intensity) * base as f64 + intensity * mark as f64).round() as u8
            };
            if av > 0.0 {
                r = blend(gray, 0);
                g = blend(gray, 255);
                b = blend(gray, 0);
            } else {
                r = blend(gray, 255);
                g = blend(gray, 0);
                b = blend(gray, 0);
            }
        }
        if let Some((r0, c0, r1, c1)) = bounding_box {
            let (row, col) = (k / cols, k % cols);
            let on_border = (row == r0 || row == r1) && (c0..=c1).contains(&col)
                || (col == c0 || col == c1) && (r0..=r1).contains(&row);
            if on_border {
                r = 255;
                g = 255;
                b = 0;
            }
        }
        pixels.extend_from_slice(&[r, g, b]);
    }
    Ok(OverlayImage {
        width: cols,
        height: rows,
        pixels,
    })
}
