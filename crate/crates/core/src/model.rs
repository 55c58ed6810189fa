//! Backbone, edge branch, neck and head wired into one network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blocks::{A2C2f, C3k2, ConvBnAct, SpdConv, Sppf};
use crate::config::*;
use crate::edge::{EdgePyramid, Hem, Sef};
use crate::error::{shape_err, Result};
use crate::head::{Head, HeadOutput};
use crate::omni::Cspokm;
use crate::params::{Builder, Ctx, ParamStore};
use crate::tensor::{upsample_nearest2x, Tensor};

/// Neck outputs consumed by the head, at strides 8, 16 and 32.
#[derive(Clone, Debug)]
pub struct FeatureMaps {
    pub detect_p3: Tensor,
    pub detect_p4: Tensor,
    pub detect_p5: Tensor,
}

impl FeatureMaps {
    pub fn levels(&self) -> [&Tensor; 3] {
        [&self.detect_p3, &self.detect_p4, &self.detect_p5]
    }
}

/// Forward intermediates kept for visualization and ablations.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub features: FeatureMaps,
    /// Output of the final backbone A2C2f.
    pub backbone_p5: Tensor,
    pub edges: EdgePyramid,
}

/// One row of the layer table.
#[derive(Clone, Debug, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: String,
    pub c_in: usize,
    pub c_out: usize,
    /// Output stride relative to the input image.
    pub stride: usize,
    pub params: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamReport {
    pub param_count: usize,
    pub per_module: Vec<(String, usize)>,
}

#[derive(Clone, Debug)]
pub struct HieraEdgeNet {
    pub config: ModelConfig,
    pub stem1: ConvBnAct,
    pub stem2: ConvBnAct,
    pub p2x: C3k2,
    pub hem: Hem,
    pub down3: ConvBnAct,
    pub stage3: C3k2,
    pub sef3: Sef,
    pub down4: ConvBnAct,
    pub stage4: C3k2,
    pub sef4: Sef,
    pub down5: ConvBnAct,
    pub stage5: C3k2,
    pub sef5: Sef,
    pub sppf: Sppf,
    pub attn5: A2C2f,
    pub neck_p4: A2C2f,
    pub spd: SpdConv,
    pub cspokm: Cspokm,
    pub out_p3: A2C2f,
    pub down_p3: ConvBnAct,
    pub out_p4: A2C2f,
    pub down_p4: ConvBnAct,
    pub out_p5: C3k2,
    pub head: Head,
    pub layers: Vec<LayerInfo>,
}

impl HieraEdgeNet {
    /// Builds the network and registers its parameters in `store`.
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(store, &mut rng);
        let c = |base| cfg.ch(base);
        let d = |n| cfg.depth(n);
        let (h, w) = cfg.input_size;
        let [cd3, cd4, cd5] = cfg.detect_channels();
        let [ce3, ce4, ce5] = cfg.edge_channels();

        let stem1 = ConvBnAct::new(&mut b.child("stem1"), 3, c(BASE_P1), 3, 2);
        let stem2 = ConvBnAct::new(&mut b.child("stem2"), c(BASE_P1), c(BASE_P2), 3, 2);
        let p2x = C3k2::new(&mut b.child("p2x"), c(BASE_P2), c(BASE_P2X), d(2), false);
        let hem = Hem::new(&mut b.child("hem"), c(BASE_P2X), [ce3, ce4, ce5]);
        let down3 = ConvBnAct::new(&mut b.child("down3"), c(BASE_P2X), c(BASE_P2X), 3, 2);
        let stage3 = C3k2::new(&mut b.child("stage3"), c(BASE_P2X), c(BASE_P3), d(2), false);
        let sef3 = Sef::new(&mut b.child("sef3"), c(BASE_P3), ce3, c(BASE_P3));
        let down4 = ConvBnAct::new(&mut b.child("down4"), c(BASE_P3), c(BASE_P4), 3, 2);
        let stage4 = C3k2::new(&mut b.child("stage4"), c(BASE_P4), c(BASE_P4), d(2), true);
        let sef4 = Sef::new(&mut b.child("sef4"), c(BASE_P4), ce4, c(BASE_P4));
        let down5 = ConvBnAct::new(&mut b.child("down5"), c(BASE_P4), c(BASE_P5), 3, 2);
        let stage5 = C3k2::new(&mut b.child("stage5"), c(BASE_P5), c(BASE_P5), d(2), true);
        let sef5 = Sef::new(&mut b.child("sef5"), c(BASE_P5), ce5, c(BASE_P5));
        let sppf = Sppf::new(&mut b.child("sppf"), c(BASE_P5), c(BASE_P5), 5);
        let attn5 = A2C2f::new(&mut b.child("attn5"), c(BASE_P5), c(BASE_P5), d(4), cfg.area, false)?;

        let neck_p4 = A2C2f::new(&mut b.child("neck_p4"), c(BASE_P5) + c(BASE_P4), cd4, d(2), cfg.area, true)?;
        let spd = SpdConv::new(&mut b.child("spd"), c(BASE_P2X), cd3);
        let cspokm = Cspokm::new(
            &mut b.child("cspokm"),
            cd4 + c(BASE_P3) + cd3,
            cd3,
            cd3,
            cfg.csp_e,
            cfg.okm_kernel,
            (h / 8, w / 8),
        )?;
        let out_p3 = A2C2f::new(&mut b.child("out_p3"), cd3, cd3, d(2), cfg.area, false)?;
        let down_p3 = ConvBnAct::new(&mut b.child("down_p3"), cd3, cd3, 3, 2);
        let out_p4 = A2C2f::new(&mut b.child("out_p4"), cd3 + cd4, cd4, d(2), cfg.area, false)?;
        let down_p4 = ConvBnAct::new(&mut b.child("down_p4"), cd4, cd4, 3, 2);
        let out_p5 = C3k2::new(&mut b.child("out_p5"), cd4 + c(BASE_P5), cd5, d(2), true);
        let head = Head::new(&mut b.child("head"), cfg);

        let layer = |name: &str, kind: &str, c_in: usize, c_out: usize, stride: usize| LayerInfo {
            name: name.to_string(),
            kind: kind.to_string(),
            c_in,
            c_out,
            stride,
            params: store.count_trainable(name),
        };
        let layers = vec![
            layer("stem1", "Conv", 3, c(BASE_P1), 2),
            layer("stem2", "Conv", c(BASE_P1), c(BASE_P2), 4),
            layer("p2x", "C3k2", c(BASE_P2), c(BASE_P2X), 4),
            layer("hem", "HEM", c(BASE_P2X), ce3 + ce4 + ce5, 8),
            layer("down3", "Conv", c(BASE_P2X), c(BASE_P2X), 8),
            layer("stage3", "C3k2", c(BASE_P2X), c(BASE_P3), 8),
            layer("sef3", "SEF", c(BASE_P3) + ce3, c(BASE_P3), 8),
            layer("down4", "Conv", c(BASE_P3), c(BASE_P4), 16),
            layer("stage4", "C3k2", c(BASE_P4), c(BASE_P4), 16),
            layer("sef4", "SEF", c(BASE_P4) + ce4, c(BASE_P4), 16),
            layer("down5", "Conv", c(BASE_P4), c(BASE_P5), 32),
            layer("stage5", "C3k2", c(BASE_P5), c(BASE_P5), 32),
            layer("sef5", "SEF", c(BASE_P5) + ce5, c(BASE_P5), 32),
            layer("sppf", "SPPF", c(BASE_P5), c(BASE_P5), 32),
            layer("attn5", "A2C2f", c(BASE_P5), c(BASE_P5), 32),
            layer("neck_p4", "A2C2f(C3k)", c(BASE_P5) + c(BASE_P4), cd4, 16),
            layer("spd", "SPDConv", c(BASE_P2X), cd3, 8),
            layer("cspokm", "CSPOKM", cd4 + c(BASE_P3) + cd3, cd3, 8),
            layer("out_p3", "A2C2f", cd3, cd3, 8),
            layer("down_p3", "Conv", cd3, cd3, 16),
            layer("out_p4", "A2C2f", cd3 + cd4, cd4, 16),
            layer("down_p4", "Conv", cd4, cd4, 32),
            layer("out_p5", "C3k2(C3k)", cd4 + c(BASE_P5), cd5, 32),
            layer("head", "Detect", cd3 + cd4 + cd5, 3 * (4 * cfg.dfl_bins + cfg.num_classes), 8),
        ];
        Ok(HieraEdgeNet {
            config: cfg.clone(),
            stem1,
            stem2,
            p2x,
            hem,
            down3,
            stage3,
            sef3,
            down4,
            stage4,
            sef4,
            down5,
            stage5,
            sef5,
            sppf,
            attn5,
            neck_p4,
            spd,
            cspokm,
            out_p3,
            down_p3,
            out_p4,
            down_p4,
            out_p5,
            head,
            layers,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4("model")?;
        if c != 3 || (h, w) != self.config.input_size {
            return shape_err(
                "model",
                format!(
                    "input is {}x{}x{}, model expects 3x{}x{}",
                    c, h, w, self.config.input_size.0, self.config.input_size.1
                ),
            );
        }
        Ok(())
    }

    pub fn trace(&self, ctx: &Ctx, x: &Tensor) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let p2 = self.stem2.forward(ctx, &self.stem1.forward(ctx, x)?)?;
        let p2x = self.p2x.forward(ctx, &p2)?;
        let mut edges = self.hem.forward(ctx, &p2x)?;
        if ctx.opts.zero_edges {
            edges = edges.zeroed();
        }
        let p3 = self.stage3.forward(ctx, &self.down3.forward(ctx, &p2x)?)?;
        let f3 = self.sef3.forward(ctx, &p3, &edges.e_p3)?;
        let p4 = self.stage4.forward(ctx, &self.down4.forward(ctx, &f3)?)?;
        let f4 = self.sef4.forward(ctx, &p4, &edges.e_p4)?;
        let p5 = self.stage5.forward(ctx, &self.down5.forward(ctx, &f4)?)?;
        let f5 = self.sef5.forward(ctx, &p5, &edges.e_p5)?;
        let bp5 = self.attn5.forward(ctx, &self.sppf.forward(ctx, &f5)?)?;

        let n4 = self
            .neck_p4
            .forward(ctx, &Tensor::concat_channels(&[upsample_nearest2x(&bp5)?, f4])?)?;
        let x3 = Tensor::concat_channels(&[upsample_nearest2x(&n4)?, f3, self.spd.forward(ctx, &p2x)?])?;
        let d3 = self.out_p3.forward(ctx, &self.cspokm.forward(ctx, &x3)?)?;
        let d4 = self
            .out_p4
            .forward(ctx, &Tensor::concat_channels(&[self.down_p3.forward(ctx, &d3)?, n4])?)?;
        let d5 = self
            .out_p5
            .forward(ctx, &Tensor::concat_channels(&[self.down_p4.forward(ctx, &d4)?, bp5.clone()])?)?;
        Ok(ForwardTrace {
            features: FeatureMaps {
                detect_p3: d3,
                detect_p4: d4,
                detect_p5: d5,
            },
            backbone_p5: bp5,
            edges,
        })
    }

    pub fn features(&self, ctx: &Ctx, x: &Tensor) -> Result<FeatureMaps> {
        Ok(self.trace(ctx, x)?.features)
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<HeadOutput> {
        let f = self.features(ctx, x)?;
        self.head.forward(ctx, f.levels())
    }

    pub fn param_report(&self, store: &ParamStore) -> ParamReport {
        ParamReport {
            param_count: store.count_trainable(""),
            per_module: self.layers.iter().map(|l| (l.name.clone(), l.params)).collect(),
        }
    }

    /// Aligned text table of all layers and the trainable total.
    pub fn describe(&self, store: &ParamStore) -> String {
        let mut s = format!(
            "{:<10} {:<12} {:>6} {:>6} {:>6} {:>12}\n",
            "name", "type", "in", "out", "stride", "params"
        );
        for l in &self.layers {
            s.push_str(&format!(
                "{:<10} {:<12} {:>6} {:>6} {:>6} {:>12}\n",
                l.name, l.kind, l.c_in, l.c_out, l.stride, l.params
            ));
        }
        s.push_str(&format!("trainable parameters: {}\n", store.count_trainable("")));
        s
    }
}
