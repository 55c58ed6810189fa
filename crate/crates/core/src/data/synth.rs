//! Procedural scenes of textured elliptical grains on a microscope-like field.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use log::info;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Image, Sample};
use crate::bbox::{BBox, GroundTruth};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Background {
    Flat { rgb: [f64; 3] },
    /// Smooth value noise around `rgb`, lattice spacing `cell` pixels.
    Noise { rgb: [f64; 3], amplitude: f64, cell: usize },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrainSpec {
    pub class_id: usize,
    pub center: (f64, f64),
    /// Semi-axes (a along the rotated x axis, b along y), pixels.
    pub axes: (f64, f64),
    pub rotation: f64,
    pub texture_freq: f64,
    /// Width of the alpha ramp at the rim, as a fraction of the radius.
    pub softness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub background: Background,
    pub grains: Vec<GrainSpec>,
    pub num_classes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub scenes: usize,
    pub classes: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub min_grains: usize,
    pub max_grains: usize,
    /// Semi-axis range in pixels.
    pub min_axis: f64,
    pub max_axis: f64,
    /// Class frequencies follow `(c + 1)^-long_tail`.
    pub long_tail: f64,
    /// Largest allowed IoU between two grains of a scene.
    pub max_overlap: f64,
    pub val_fraction: f64,
    pub backgrounds: Vec<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenes: 64,
            classes: 3,
            seed: 0,
            height: 128,
            width: 128,
            min_grains: 1,
            max_grains: 4,
            min_axis: 7.0,
            max_axis: 18.0,
            long_tail: 0.8,
            max_overlap: 0.05,
            val_fraction: 0.2,
            backgrounds: Vec::new(),
        }
    }
}

/// Fixed per-class look: tint, texture frequency and number of rim rings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassAppearance {
    pub rgb: [f64; 3],
    pub texture_freq: f64,
    pub reticulate: bool,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).rem_euclid(6.0);
    let i = h6.floor() as usize;
    let f = h6 - i as f64;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn class_appearance(class_id: usize) -> ClassAppearance {
    let golden = 0.618_033_988_749_895;
    ClassAppearance {
        rgb: hsv(0.08 + class_id as f64 * golden, 0.65, 0.55 + 0.1 * (class_id % 3) as f64),
        texture_freq: 1.5 + (class_id % 5) as f64,
        reticulate: class_id % 2 == 1,
    }
}

pub fn power_law_weights(classes: usize, exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..classes).map(|c| ((c + 1) as f64).powf(-exponent)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Tight bounding box of a rotated ellipse.
pub fn ellipse_bbox(center: (f64, f64), axes: (f64, f64), rotation: f64) -> BBox {
    let (c, s) = (rotation.cos(), rotation.sin());
    let hw = ((axes.0 * c).powi(2) + (axes.1 * s).powi(2)).sqrt();
    let hh = ((axes.0 * s).powi(2) + (axes.1 * c).powi(2)).sqrt();
    BBox::new(center.0 - hw, center.1 - hh, center.0 + hw, center.1 + hh)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn render_background(spec: &SceneSpec) -> Result<Image> {
    let (h, w) = (spec.height, spec.width);
    match &spec.background {
        Background::Flat { rgb } => Ok(Image::filled(h, w, *rgb)),
        Background::Noise { rgb, amplitude, cell } => {
            let cell = (*cell).max(1);
            let (gh, gw) = (h / cell + 2, w / cell + 2);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_b6);
            let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut img = Image::new(h, w);
            for y in 0..h {
                let fy = y as f64 / cell as f64;
                let (y0, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
                for x in 0..w {
                    let fx = x as f64 / cell as f64;
                    let (x0, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
                    let l = |i: usize, j: usize| lattice[i * gw + j];
                    let n = (l(y0, x0) * (1.0 - tx) + l(y0, x0 + 1) * tx) * (1.0 - ty)
                        + (l(y0 + 1, x0) * (1.0 - tx) + l(y0 + 1, x0 + 1) * tx) * ty;
                    for (c, base) in rgb.iter().enumerate() {
                        img.set(c, y, x, (base + amplitude * n).clamp(0.0, 1.0));
                    }
                }
            }
            Ok(img)
        }
        Background::File { path } => Ok(Image::load(path)?.resize(h, w)),
    }
}

fn render_grain(img: &mut Image, g: &GrainSpec) {
    let look = class_appearance(g.class_id);
    let bb = ellipse_bbox(g.center, g.axes, g.rotation).clamp(img.width as f64, img.height as f64);
    let (c, s) = (g.rotation.cos(), g.rotation.sin());
    let (a, b) = g.axes;
    let soft = g.softness.max(1e-3);
    for y in bb.y1.floor() as usize..(bb.y2.ceil() as usize).min(img.height) {
        for x in bb.x1.floor() as usize..(bb.x2.ceil() as usize).min(img.width) {
            let dx = x as f64 + 0.5 - g.center.0;
            let dy = y as f64 + 0.5 - g.center.1;
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            let r = (u * u + v * v).sqrt();
            let alpha = smoothstep((1.0 - r) / soft);
            if alpha <= 0.0 {
                continue;
            }
            let rings = 0.5 + 0.5 * (TAU * g.texture_freq * r).cos();
            let surface = if look.reticulate {
                0.5 + 0.5 * (PI * g.texture_freq * u).cos() * (PI * g.texture_freq * v).cos()
            } else {
                rings
            };
            let exine = if r > 0.8 { 0.55 } else { 1.0 };
            let shade = (0.65 + 0.35 * surface) * exine;
            for (ch, base) in look.rgb.iter().enumerate() {
                let old = img.get(ch, y, x);
                img.set(ch, y, x, old * (1.0 - alpha) + (base * shade).clamp(0.0, 1.0) * alpha);
            }
        }
    }
}

/// Renders a scene; boxes are the tight ellipse extents clipped to the frame.
pub fn synth_scene(spec: &SceneSpec) -> Result<(Image, Vec<GroundTruth>)> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::Config("scene size must be positive".into()));
    }
    let mut img = render_background(spec)?;
    let mut gts = Vec::new();
    for g in &spec.grains {
        if g.class_id >= spec.num_classes {
            return Err(Error::Config(format!("grain class {} >= {}", g.class_id, spec.num_classes)));
        }
        render_grain(&mut img, g);
        let bbox = ellipse_bbox(g.center, g.axes, g.rotation).clamp(spec.width as f64, spec.height as f64);
        if bbox.area() > 0.0 {
            gts.push(GroundTruth {
                class_id: g.class_id,
                bbox,
            });
        }
    }
    Ok((img, gts))
}

const PLACEMENT_RETRIES: usize = 50;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.classes == 0 {
            bad.push("classes must be >= 1".to_string());
        }
        if self.height == 0 || self.width == 0 {
            bad.push("image size must be positive".into());
        }
        if self.min_grains > self.max_grains {
            bad.push("min_grains exceeds max_grains".into());
        }
        if !(self.min_axis > 0.0 && self.min_axis <= self.max_axis) {
            bad.push(format!("axis range [{}, {}] invalid", self.min_axis, self.max_axis));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bad.push(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Independent generator for scene `index`.
    pub fn scene_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn sample_scene(&self, index: usize) -> Result<SceneSpec> {
        self.validate()?;
        let mut rng = self.scene_rng(index);
        let classes = WeightedIndex::new(power_law_weights(self.classes, self.long_tail))
            .map_err(|e| Error::Config(e.to_string()))?;
        let background = if !self.backgrounds.is_empty() && rng.random_bool(0.5) {
            Background::File {
                path: self.backgrounds[rng.random_range(0..self.backgrounds.len())].clone(),
            }
        } else if rng.random_bool(0.5) {
            Background::Flat {
                rgb: [0.86, 0.84, 0.78].map(|v: f64| v + rng.random_range(-0.04..0.04)),
            }
        } else {
            Background::Noise {
                rgb: [0.84, 0.83, 0.8].map(|v: f64| v + rng.random_range(-0.04..0.04)),
                amplitude: rng.random_range(0.02..0.06),
                cell: 16,
            }
        };
        let count = rng.random_range(self.min_grains..=self.max_grains);
        let (w, h) = (self.width as f64, self.height as f64);
        let mut grains: Vec<GrainSpec> = Vec::new();
        let mut boxes: Vec<BBox> = Vec::new();
        for _ in 0..count {
            let class_id = classes.sample(&mut rng);
            let look = class_appearance(class_id);
            let mut placed = false;
            for _ in 0..PLACEMENT_RETRIES {
                let a = rng.random_range(self.min_axis..=self.max_axis);
                let b = a * rng.random_range(0.6..=1.0);
                let rotation = rng.random_range(0.0..PI);
                let center = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                let full = ellipse_bbox(center, (a, b), rotation);
                let visible = full.clamp(w, h);
                if visible.area() < 0.5 * full.area() || boxes.iter().any(|o| o.iou(&visible) > self.max_overlap) {
                    continue;
                }
                boxes.push(visible);
                grains.push(GrainSpec {
                    class_id,
                    center,
                    axes: (a, b),
                    rotation,
                    texture_freq: look.texture_freq,
                    softness: rng.random_range(0.08..0.2),
                });
                placed = true;
                break;
            }
            if !placed {
                info!("scene {index}: no room for grain of class {class_id}, emitting fewer grains");
            }
        }
        Ok(SceneSpec {
            height: self.height,
            width: self.width,
            background,
            grains,
            num_classes: self.classes,
            seed: rng.random(),
        })
    }
}

/// Scenes `0..cfg.scenes` with ids `scene_00000`, ...
pub fn synth_scenes(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    (0..cfg.scenes)
        .map(|i| {
            let spec = cfg.sample_scene(i)?;
            let (image, gts) = synth_scene(&spec)?;
            Ok(Sample {
                id: format!("scene_{i:05}"),
                image,
                gts,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(grains: Vec<GrainSpec>) -> SceneSpec {
        SceneSpec {
            height: 64,
            width: 64,
            background: Background::Flat { rgb: [0.8; 3] },
            grains,
            num_classes: 3,
            seed: 1,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let (img, gts) = synth_scene(&spec(vec![])).unwrap();
        assert!(gts.is_empty());
        assert!(img.data.iter().all(|&v| v == 0.8));
    }

    #[test]
    fn axis_aligned_box() {
        let g = GrainSpec {
            class_id: 0,
            center: (32.0, 32.0),
            axes: (10.0, 6.0),
            rotation: 0.0,
            texture_freq: 2.0,
            softness: 0.1,
        };
        let (_, gts) = synth_scene(&spec(vec![g])).unwrap();
        assert_eq!(gts[0].bbox, BBox::new(22., 26., 42., 38.));
    }

    #[test]
    fn rotated_quarter_turn_swaps_extent() {
        let b = ellipse_bbox((0.0, 0.0), (10.0, 6.0), PI / 2.0);
        assert!((b.width() - 12.0).abs() < 1e-12 && (b.height() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let cfg = SynthConfig {
            scenes: 3,
            ..Default::default()
        };
        assert_eq!(synth_scenes(&cfg).unwrap(), synth_scenes(&cfg).unwrap());
    }
}
