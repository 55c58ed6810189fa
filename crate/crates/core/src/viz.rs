//! Minimal raster plots: line charts, matrix heatmaps and heatmap overlays.

use image::{Rgb, RgbImage};

use crate::bbox::Detection;
use crate::data::{quantize, Image};

/// Blue-cyan-yellow-red ramp for values in [0, 1].
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0);
    [quantize(r), quantize(g), quantize(b)]
}

pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: [u8; 3],
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3]) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64, c);
    }
}

/// Curves on the unit square with a light grid at quarters; `marker`
/// highlights one point.
pub fn line_plot(series: &[Series], marker: Option<(f64, f64)>, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let pad = 24.0;
    let (w, h) = (width as f64 - 2.0 * pad, height as f64 - 2.0 * pad);
    let map = |x: f64, y: f64| (pad + x.clamp(0.0, 1.0) * w, pad + (1.0 - y.clamp(0.0, 1.0)) * h);
    for q in 1..4 {
        let t = q as f64 / 4.0;
        line(&mut img, map(t, 0.0), map(t, 1.0), [225; 3]);
        line(&mut img, map(0.0, t), map(1.0, t), [225; 3]);
    }
    line(&mut img, map(0.0, 0.0), map(1.0, 0.0), [0; 3]);
    line(&mut img, map(0.0, 0.0), map(0.0, 1.0), [0; 3]);
    for s in series {
        for k in 1..s.x.len().min(s.y.len()) {
            line(&mut img, map(s.x[k - 1], s.y[k - 1]), map(s.x[k], s.y[k]), s.color);
        }
    }
    if let Some((mx, my)) = marker {
        let (cx, cy) = map(mx, my);
        for dy in -3..=3 {
            for dx in -3..=3 {
                put(&mut img, cx as i64 + dx, cy as i64 + dy, [220, 30, 30]);
            }
        }
    }
    img
}

/// Row-normalized matrix as colored square cells.
pub fn matrix_heatmap(m: &[Vec<usize>], cell: u32) -> RgbImage {
    let n = m.len() as u32;
    let mut img = RgbImage::new(n * cell, n * cell);
    for (i, row) in m.iter().enumerate() {
        let total: usize = row.iter().sum();
        for (j, &v) in row.iter().enumerate() {
            let c = colormap(if total > 0 { v as f64 / total as f64 } else { 0.0 });
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(j as u32 * cell + x, i as u32 * cell + y, Rgb(c));
                }
            }
        }
    }
    img
}

/// Blends a colormapped (H, W) heatmap in [0, 1] over an image.
pub fn overlay(image: &Image, heat: &[f64], alpha: f64) -> RgbImage {
    RgbImage::from_fn(image.width as u32, image.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let hc = colormap(heat[y * image.width + x]);
        Rgb([0, 1, 2].map(|c| {
            let base = image.get(c, y, x);
            quantize((1.0 - alpha) * base + alpha * hc[c] as f64 / 255.0)
        }))
    })
}

/// Image with a 1-pixel rectangle per detection, colored by class.
pub fn draw_boxes(image: &Image, dets: &[Detection], num_classes: usize) -> RgbImage {
    let mut img = image.to_rgb8();
    for d in dets {
        let c = colormap((d.class_id as f64 + 0.5) / num_classes.max(1) as f64);
        let b = d.bbox;
        let (x1, y1, x2, y2) = (b.x1, b.y1, (b.x2 - 1.0).max(b.x1), (b.y2 - 1.0).max(b.y1));
        line(&mut img, (x1, y1), (x2, y1), c);
        line(&mut img, (x1, y2), (x2, y2), c);
        line(&mut img, (x1, y1), (x1, y2), c);
        line(&mut img, (x2, y1), (x2, y2), c);
    }
    img
}
