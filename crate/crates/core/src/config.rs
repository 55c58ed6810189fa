use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema shared by the full-size network and the small CPU variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub width_mult: f64,
    pub depth_mult: f64,
    /// Bins of the per-side distance distribution (R).
    pub dfl_bins: usize,
    pub okm_kernel: usize,
    /// (H, W); both divisible by 32.
    pub input_size: (usize, usize),
    /// Channel share routed through the Omni-Kernel in CSPOKM.
    pub csp_e: f64,
    /// Attention areas in every A2C2f block (1 = global).
    pub area: usize,
}

/// Nominal channel plan at width 1.
pub const BASE_P1: usize = 64;
pub const BASE_P2: usize = 128;
pub const BASE_P2X: usize = 256;
pub const BASE_P3: usize = 512;
pub const BASE_P4: usize = 512;
pub const BASE_P5: usize = 1024;
pub const BASE_DETECT: [usize; 3] = [256, 512, 1024];
pub const BASE_EDGE: [usize; 3] = [128, 256, 512];
pub const STRIDES: [usize; 3] = [8, 16, 32];

impl ModelConfig {
    /// Full-size network: 640x640, 120 classes, R = 16, 31-wide kernels.
    pub fn paper(num_classes: usize) -> Self {
        ModelConfig {
            num_classes,
            width_mult: 1.0,
            depth_mult: 1.0,
            dfl_bins: 16,
            okm_kernel: 31,
            input_size: (640, 640),
            csp_e: 0.25,
            area: 1,
        }
    }

    /// CPU-sized network used for training experiments and checks.
    pub fn desk(num_classes: usize) -> Self {
        ModelConfig {
            num_classes,
            width_mult: 0.125,
            depth_mult: 0.34,
            dfl_bins: 8,
            okm_kernel: 5,
            input_size: (128, 128),
            csp_e: 0.25,
            area: 1,
        }
    }

    /// `base * width_mult` rounded up to a multiple of 8 (at least 8).
    pub fn ch(&self, base: usize) -> usize {
        let c = (base as f64 * self.width_mult).ceil() as usize;
        c.div_ceil(8).max(1) * 8
    }

    /// `max(round(n * depth_mult), 1)`.
    pub fn depth(&self, n: usize) -> usize {
        ((n as f64 * self.depth_mult).round() as usize).max(1)
    }

    pub fn detect_channels(&self) -> [usize; 3] {
        BASE_DETECT.map(|c| self.ch(c))
    }

    pub fn edge_channels(&self) -> [usize; 3] {
        BASE_EDGE.map(|c| self.ch(c))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            bad.push(format!("input_size {:?} must be positive multiples of 32", self.input_size));
        }
        if self.num_classes == 0 {
            bad.push("num_classes must be >= 1".into());
        }
        if !(self.width_mult > 0.0 && self.width_mult.is_finite()) {
            bad.push(format!("width_mult {} must be positive", self.width_mult));
        }
        if !(self.depth_mult > 0.0 && self.depth_mult.is_finite()) {
            bad.push(format!("depth_mult {} must be positive", self.depth_mult));
        }
        if self.dfl_bins < 2 {
            bad.push(format!("dfl_bins {} must be >= 2", self.dfl_bins));
        }
        if self.okm_kernel.is_multiple_of(2) {
            bad.push(format!("okm_kernel {} must be odd", self.okm_kernel));
        }
        if !(self.csp_e > 0.0 && self.csp_e < 1.0) {
            bad.push(format!("csp_e {} must lie in (0, 1)", self.csp_e));
        }
        if self.area == 0 {
            bad.push("area must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_scaling() {
        let d = ModelConfig::desk(3);
        assert_eq!(d.detect_channels(), [32, 64, 128]);
        assert_eq!(d.ch(BASE_P1), 8);
        assert_eq!(d.depth(2), 1);
        assert_eq!(d.depth(4), 1);
        let p = ModelConfig::paper(120);
        assert_eq!(p.detect_channels(), [256, 512, 1024]);
        assert_eq!(p.depth(4), 4);
        let mut tiny = d.clone();
        tiny.width_mult = 0.0625;
        assert_eq!(tiny.ch(BASE_P1), 8);
        assert_eq!(tiny.ch(BASE_P2X), 16);
    }

    #[test]
    fn validation_lists_violations() {
        let mut c = ModelConfig::desk(3);
        c.input_size = (100, 128);
        c.okm_kernel = 4;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("input_size") && msg.contains("okm_kernel"), "{msg}");
    }
}
