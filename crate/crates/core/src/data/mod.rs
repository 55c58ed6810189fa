//! Images, annotations and the on-disk dataset layout.
//!
//! ```text
//! root/
//!   images/<id>.png     8-bit RGB
//!   labels/<id>.txt     one object per line: `class cx cy w h`, normalized to [0, 1]
//!   classes.txt         one class name per line
//!   split.json          train / val ids and per-class instance counts
//! ```

mod augment;
mod split;
mod synth;

pub use augment::{color_shift, gaussian_blur, hflip, mosaic, AugmentPolicy, MIN_BOX_AREA};
pub use split::{stratified_split, DatasetSplit};
pub use synth::{
    class_appearance, ellipse_bbox, power_law_weights, synth_scene, synth_scenes, Background, ClassAppearance, GrainSpec,
    SceneSpec, SynthConfig,
};

use std::fs;
use std::path::Path;

use log::warn;

use crate::bbox::{BBox, GroundTruth};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// RGB image, channel-major, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut img = Image::new(height, width);
        for (c, v) in rgb.iter().enumerate() {
            img.plane_mut(c).fill(*v);
        }
        img
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Rgb([0, 1, 2].map(|c| quantize(self.get(c, y as usize, x as usize))))
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::new(h, w);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p.0[c] as f64 / 255.0);
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Image::from_rgb8(&image::open(path)?.to_rgb8()))
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Image::new(height, width);
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..3 {
                    let top = self.get(c, y0, x0) * (1.0 - tx) + self.get(c, y0, x1) * tx;
                    let bot = self.get(c, y1, x0) * (1.0 - tx) + self.get(c, y1, x1) * tx;
                    out.set(c, y, x, top * (1.0 - ty) + bot * ty);
                }
            }
        }
        out
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Stacks images of equal size into an (N, 3, H, W) tensor.
pub fn batch_tensor(images: &[&Image]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::Usage("empty batch".into()));
    };
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::Shape {
                op: "batch_tensor",
                msg: format!("{}x{} image in a {}x{} batch", img.height, img.width, h, w),
            });
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub gts: Vec<GroundTruth>,
}

impl Sample {
    /// Resized copy with boxes scaled along.
    pub fn resized(&self, height: usize, width: usize) -> Sample {
        let sy = height as f64 / self.image.height as f64;
        let sx = width as f64 / self.image.width as f64;
        Sample {
            id: self.id.clone(),
            image: self.image.resize(height, width),
            gts: self
                .gts
                .iter()
                .map(|g| GroundTruth {
                    class_id: g.class_id,
                    bbox: BBox::new(g.bbox.x1 * sx, g.bbox.y1 * sy, g.bbox.x2 * sx, g.bbox.y2 * sy),
                })
                .collect(),
        }
    }
}

/// Result of parsing one label file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLabels {
    pub gts: Vec<GroundTruth>,
    pub rejected: usize,
}

/// Parses `class cx cy w h` lines against a `width` x `height` image.
pub fn parse_labels(text: &str, width: usize, height: usize, num_classes: usize) -> ParsedLabels {
    let mut out = ParsedLabels::default();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = (f.len() == 5)
            .then(|| {
                let c = f[0].parse::<usize>().ok()?;
                let v: Vec<f64> = f[1..].iter().map(|s| s.parse::<f64>().ok()).collect::<Option<_>>()?;
                Some((c, v))
            })
            .flatten();
        let Some((class_id, v)) = parsed else {
            warn!("label line {}: malformed: {:?}", ln + 1, line);
            out.rejected += 1;
            continue;
        };
        if class_id >= num_classes || v.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) || v[2] <= 0.0 || v[3] <= 0.0 {
            warn!("label line {}: out of range: {:?}", ln + 1, line);
            out.rejected += 1;
            continue;
        }
        let (w, h) = (width as f64, height as f64);
        let bbox = BBox::new(
            (v[0] - v[2] / 2.0) * w,
            (v[1] - v[3] / 2.0) * h,
            (v[0] + v[2] / 2.0) * w,
            (v[1] + v[3] / 2.0) * h,
        )
        .clamp(w, h);
        if bbox.area() <= 0.0 {
            out.rejected += 1;
            continue;
        }
        out.gts.push(GroundTruth { class_id, bbox });
    }
    out
}

pub fn format_labels(gts: &[GroundTruth], width: usize, height: usize) -> String {
    let (w, h) = (width as f64, height as f64);
    gts.iter()
        .map(|g| {
            let b = g.bbox;
            format!(
                "{} {:.6} {:.6} {:.6} {:.6}\n",
                g.class_id,
                (b.x1 + b.x2) / 2.0 / w,
                (b.y1 + b.y2) / 2.0 / h,
                b.width() / w,
                b.height() / h
            )
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
    pub split: Option<DatasetSplit>,
    /// Label lines rejected while loading.
    pub rejected: usize,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn by_ids(&self, ids: &[String]) -> Vec<&Sample> {
        ids.iter().filter_map(|id| self.samples.iter().find(|s| &s.id == id)).collect()
    }

    pub fn train(&self) -> Vec<&Sample> {
        match &self.split {
            Some(s) => self.by_ids(&s.train),
            None => self.samples.iter().collect(),
        }
    }

    pub fn val(&self) -> Vec<&Sample> {
        match &self.split {
            Some(s) => self.by_ids(&s.val),
            None => Vec::new(),
        }
    }

    /// Loads `root` in the documented layout. Images without a label file
    /// are background-only.
    pub fn load(root: &Path) -> Result<Dataset> {
        let classes: Vec<String> = fs::read_to_string(root.join("classes.txt"))?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if classes.is_empty() {
            return Err(Error::Format(format!("{}: classes.txt lists no classes", root.display())));
        }
        let mut paths: Vec<_> = fs::read_dir(root.join("images"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        let mut samples = Vec::new();
        let mut rejected = 0;
        for p in paths {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let image = Image::load(&p)?;
            let label = root.join("labels").join(format!("{id}.txt"));
            let gts = match fs::read_to_string(&label) {
                Ok(text) => {
                    let parsed = parse_labels(&text, image.width, image.height, classes.len());
                    rejected += parsed.rejected;
                    parsed.gts
                }
                Err(_) => {
                    warn!("{}: no label file, treating as background", label.display());
                    Vec::new()
                }
            };
            samples.push(Sample { id, image, gts });
        }
        let split_path = root.join("split.json");
        let split = if split_path.exists() {
            Some(serde_json::from_str(&fs::read_to_string(split_path)?)?)
        } else {
            None
        };
        Ok(Dataset {
            classes,
            samples,
            split,
            rejected,
        })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root.join("images"))?;
        fs::create_dir_all(root.join("labels"))?;
        fs::write(root.join("classes.txt"), self.classes.iter().map(|c| format!("{c}\n")).collect::<String>())?;
        for s in &self.samples {
            s.image.save_png(&root.join("images").join(format!("{}.png", s.id)))?;
            fs::write(
                root.join("labels").join(format!("{}.txt", s.id)),
                format_labels(&s.gts, s.image.width, s.image.height),
            )?;
        }
        if let Some(split) = &self.split {
            fs::write(root.join("split.json"), serde_json::to_string_pretty(split)?)?;
        }
        Ok(())
    }
}
