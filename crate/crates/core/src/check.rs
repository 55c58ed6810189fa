//! Verification battery: finite-difference gradient checks of every block,
//! structural identities, and oracle comparisons. Each result belongs to a
//! named group so subsets can be run alone.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::assign::{anchor_points, assign, Anchor, AssignConfig, Predictions};
use crate::bbox::{BBox, Detection, GroundTruth};
use crate::blocks::{
    depth_to_space, space_to_depth, A2C2f, AreaAttention, C3k2, ConvBnAct, SobelConv, SpdConv, Sppf, SPD_ORDER,
};
use crate::config::ModelConfig;
use crate::detect::nms;
use crate::edge::{Hem, Sef};
use crate::error::{Error, Result};
use crate::eval::{average_precision, evaluate, ApMethod, EvalConfig};
use crate::gradcheck::{check_block, check_fn, check_sampled_params, GradCheckConfig, GradCheckReport};
use crate::head::{Head, HeadOutput, LevelOutput};
use crate::loss::{dfl_decode, focal_loss, total_loss, LossConfig};
use crate::model::HieraEdgeNet;
use crate::omni::{Cspokm, Fca, Fgm, OmniKernel, Sca, SCA_REDUCTION};
use crate::params::{Builder, Ctx, ParamStore};
use crate::tensor::{inject_backward_fault, irfft2, maxpool2d, no_grad, rfft2, Tensor};

pub const GROUPS: &[&str] = &[
    "grad", "fft", "spd", "sppf", "attention", "fca", "fgm", "omni", "edge", "loss", "nms", "assign", "ap",
];

/// Ops whose backward pass can be sign-flipped for the fault drill.
pub const FAULT_OPS: &[&str] = &[
    "conv2d",
    "pad_replicate",
    "batchnorm2d",
    "maxpool2d",
    "upsample_nearest2x",
    "rfft2",
    "irfft2",
    "attention",
    "matmul",
    "global_avg_pool",
    "softmax_lastdim",
    "log_softmax_lastdim",
    "sum_lastdim",
    "concat",
    "narrow",
    "permute",
    "reshape",
    "index_select0",
    "sum",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "exp",
    "abs",
    "sigmoid",
    "silu",
    "relu",
    "focal",
    "ciou",
];

/// Blocks covered by the gradient group, in report order.
pub const GRAD_CASES: &[&str] = &[
    "conv_bn_act",
    "sobel_conv",
    "spd_conv",
    "sppf",
    "c3k2",
    "area_attention",
    "a2c2f",
    "hem",
    "sef",
    "fca",
    "sca",
    "fgm",
    "omni_kernel",
    "cspokm",
    "head",
    "total_loss",
];

pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Groups to run; empty means all.
    pub only: Vec<String>,
    pub fault: Option<&'static str>,
    pub instances: usize,
    pub seed: u64,
    pub nms_trials: usize,
    pub assign_trials: usize,
    /// Adds the sampled whole-model gradient check.
    pub model_grad: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            only: Vec::new(),
            fault: None,
            instances: 3,
            seed: 0,
            nms_trials: 200,
            assign_trials: 200,
            model_grad: true,
        }
    }
}

impl CheckOptions {
    pub fn validate(&self) -> Result<()> {
        for g in &self.only {
            if !GROUPS.contains(&g.as_str()) {
                return Err(Error::Usage(format!("unknown check group '{}' (known: {})", g, GROUPS.join(", "))));
            }
        }
        if self.instances == 0 {
            return Err(Error::Usage("instances must be >= 1".into()));
        }
        Ok(())
    }

    fn wants(&self, group: &str) -> bool {
        self.only.is_empty() || self.only.iter().any(|g| g == group)
    }
}

/// Looks up a fault op name, giving it the static lifetime the hook needs.
pub fn fault_op(name: &str) -> Option<&'static str> {
    FAULT_OPS.iter().copied().find(|&o| o == name)
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(group: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            group,
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}/{}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.name,
            self.detail
        )
    }
}

/// Runs the selected groups. Errors inside a single check are reported as
/// failures of that check rather than aborting the battery.
pub fn run(opts: &CheckOptions) -> Result<Vec<CheckResult>> {
    opts.validate()?;
    let mut out = Vec::new();
    type Group = fn(&CheckOptions) -> Vec<CheckResult>;
    let groups: [(&str, Group); 13] = [
        ("grad", grad_group),
        ("fft", fft_group),
        ("spd", spd_group),
        ("sppf", sppf_group),
        ("attention", attention_group),
        ("fca", fca_group),
        ("fgm", fgm_group),
        ("omni", omni_group),
        ("edge", edge_group),
        ("loss", loss_group),
        ("nms", nms_group),
        ("assign", assign_group),
        ("ap", ap_group),
    ];
    inject_backward_fault(opts.fault);
    for (name, f) in groups {
        if opts.wants(name) {
            out.extend(f(opts));
        }
    }
    inject_backward_fault(None);
    Ok(out)
}

fn outcome(group: &'static str, name: &str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((ok, detail)) => CheckResult::new(group, name, ok, detail),
        Err(e) => CheckResult::new(group, name, false, format!("error: {e}")),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn within(name: &str, err: f64, tol: f64) -> (bool, String) {
    (err < tol, format!("{name} max abs err {err:.3e} (tol {tol:.0e})"))
}

// ---------------------------------------------------------------- gradients

fn build<T>(seed: u64, f: impl FnOnce(&mut Builder) -> Result<T>) -> Result<(ParamStore, T)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blk = f(&mut Builder::new(&mut store, &mut rng))?;
    jitter(&mut store, seed);
    Ok((store, blk))
}

/// Moves every trainable parameter off its initial value so that no check
/// runs at a symmetric point (unit BN scales, zero gate logits, ...).
fn jitter(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for id in store.trainable_ids() {
        let t = store.get(id);
        let noise = Tensor::randn(t.shape(), 0.1, &mut rng);
        let v = t.add(&noise).expect("same shape").detach();
        store.set(id, v).expect("same shape");
    }
}

fn input(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7)))
}

fn flat_concat(ts: &[Tensor]) -> Result<Tensor> {
    let flat = ts.iter().map(|t| t.reshape(&[t.numel()])).collect::<Result<Vec<_>>>()?;
    Tensor::concat(&flat, 0)
}

fn gcfg(seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    }
}

/// Gradient check of one block instance. `instance` varies seeds and shapes.
pub fn grad_case(name: &str, instance: usize, seed: u64) -> Result<GradCheckReport> {
    let s = seed.wrapping_mul(1000).wrapping_add(instance as u64 * 17 + 1);
    let odd = instance % 2 == 1;
    match name {
        "conv_bn_act" => {
            let stride = if odd { 2 } else { 1 };
            let (st, blk) = build(s, |b| Ok(ConvBnAct::new(b, 4, 6, 3, stride)))?;
            check_block(&st, &[input(&[1, 4, 6, 6], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "sobel_conv" => {
            let (st, (sob, proj)) = build(s, |b| {
                Ok((SobelConv::new(&mut b.child("sobel"), 4), ConvBnAct::new(&mut b.child("proj"), 4, 6, 1, 1)))
            })?;
            check_block(
                &st,
                &[input(&[1, 4, 6, 6], s)],
                true,
                |c, x| proj.forward(c, &sob.forward(c, &x[0])?),
                gcfg(s),
            )
        }
        "spd_conv" => {
            let (st, blk) = build(s, |b| Ok(SpdConv::new(b, 4, 8)))?;
            check_block(&st, &[input(&[1, 4, 8, 8], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "sppf" => {
            let k = if odd { 3 } else { 5 };
            let (st, blk) = build(s, |b| Ok(Sppf::new(b, 8, 8, k)))?;
            check_block(&st, &[input(&[1, 8, 6, 6], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "c3k2" => {
            let (st, blk) = build(s, |b| Ok(C3k2::new(b, 8, 8, 1, odd)))?;
            check_block(&st, &[input(&[1, 8, 5, 5], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "area_attention" => {
            let area = if odd { 2 } else { 1 };
            let (st, blk) = build(s, |b| AreaAttention::new(b, 8, 2, area))?;
            check_block(&st, &[input(&[1, 8, 4, 4], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "a2c2f" => {
            let (st, blk) = build(s, |b| A2C2f::new(b, 16, 16, 1, 1 + instance % 2, instance == 2))?;
            check_block(&st, &[input(&[1, 16, 4, 4], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "hem" => {
            let (st, blk) = build(s, |b| Ok(Hem::new(b, 4, [4, 6, 8])))?;
            check_block(
                &st,
                &[input(&[1, 4, 16, 16], s)],
                true,
                |c, x| {
                    let e = blk.forward(c, &x[0])?;
                    flat_concat(&[e.e_p3, e.e_p4, e.e_p5])
                },
                gcfg(s),
            )
        }
        "sef" => {
            let (st, blk) = build(s, |b| Ok(Sef::new(b, 8, 4, 8)))?;
            check_block(
                &st,
                &[input(&[1, 8, 4, 4], s), input(&[1, 4, 4, 4], s + 1)],
                true,
                |c, x| blk.forward(c, &x[0], &x[1]),
                gcfg(s),
            )
        }
        "fca" => {
            let w = if odd { 5 } else { 6 };
            let (st, blk) = build(s, |b| Ok(Fca::new(b, 4)))?;
            check_block(&st, &[input(&[1, 4, 6, w], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "sca" => {
            let (st, blk) = build(s, |b| Ok(Sca::new(b, 8, SCA_REDUCTION)))?;
            check_block(&st, &[input(&[1, 8, 4, 4], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "fgm" => {
            let size = if odd { (6, 5) } else { (6, 6) };
            let (st, blk) = build(s, |b| Ok(Fgm::new(b, 4, size)))?;
            check_block(&st, &[input(&[1, 4, size.0, size.1], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "omni_kernel" => {
            let (st, blk) = build(s, |b| OmniKernel::new(b, 8, 5, (8, 8)))?;
            check_block(&st, &[input(&[1, 8, 8, 8], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "cspokm" => {
            let (st, blk) = build(s, |b| Cspokm::new(b, 32, 32, 32, 0.25, 5, (8, 8)))?;
            check_block(&st, &[input(&[1, 32, 8, 8], s)], true, |c, x| blk.forward(c, &x[0]), gcfg(s))
        }
        "head" => {
            let cfg = tiny_model_config();
            let (st, head) = build(s, |b| Ok(Head::new(b, &cfg)))?;
            let ch = cfg.detect_channels();
            let grids = [(4, 4), (2, 2), (2, 2)];
            let feats: Vec<Tensor> = (0..3).map(|i| input(&[1, ch[i], grids[i].0, grids[i].1], s + i as u64)).collect();
            check_block(
                &st,
                &feats,
                true,
                |c, x| {
                    let out = head.forward(c, [&x[0], &x[1], &x[2]])?;
                    let (reg, cls) = out.flatten()?;
                    flat_concat(&[reg, cls])
                },
                gcfg(s),
            )
        }
        "total_loss" => total_loss_case(s),
        "model" => model_case(s),
        _ => Err(Error::Usage(format!("no gradient case named '{name}'"))),
    }
}

/// Width 1/16 variant used for head and whole-model gradient checks.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        num_classes: 3,
        width_mult: 0.0625,
        depth_mult: 0.34,
        dfl_bins: 8,
        okm_kernel: 5,
        input_size: (64, 64),
        csp_e: 0.25,
        area: 1,
    }
}

/// Two images on a 32x32 canvas, three levels, gts disjoint with at most
/// `topk` interior anchors each so the assignment is locally constant.
pub fn loss_toy_gts() -> Vec<Vec<GroundTruth>> {
    let gt = |c, x1, y1, x2, y2| GroundTruth {
        class_id: c,
        bbox: BBox::new(x1, y1, x2, y2),
    };
    vec![
        vec![gt(0, 2.0, 2.0, 14.0, 14.0), gt(2, 18.0, 17.0, 30.0, 31.0)],
        vec![gt(1, 5.0, 3.0, 27.0, 13.0)],
    ]
}

fn toy_head(leaves: &[Tensor], bins: usize, nc: usize) -> HeadOutput {
    HeadOutput {
        levels: (0..3)
            .map(|i| LevelOutput {
                reg: leaves[2 * i].clone(),
                cls: leaves[2 * i + 1].clone(),
                stride: 8 << i,
            })
            .collect(),
        dfl_bins: bins,
        num_classes: nc,
    }
}

fn total_loss_case(seed: u64) -> Result<GradCheckReport> {
    let (r, nc) = (4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leaves = Vec::new();
    let mut names = Vec::new();
    for (i, g) in [4usize, 2, 1].into_iter().enumerate() {
        leaves.push(Tensor::randn(&[2, 4 * r, g, g], 1.0, &mut rng));
        leaves.push(Tensor::randn(&[2, nc, g, g], 1.0, &mut rng));
        names.push(format!("reg_p{}", i + 3));
        names.push(format!("cls_p{}", i + 3));
    }
    let gts = loss_toy_gts();
    let cfg = LossConfig::default();
    check_fn(
        &names,
        &leaves,
        |v| Ok(total_loss(&toy_head(v, r, nc), &gts, &cfg)?.total),
        gcfg(seed),
    )
}

fn model_case(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model_config();
    let mut store = ParamStore::new();
    let model = HieraEdgeNet::new(&cfg, &mut store, seed)?;
    jitter(&mut store, seed);
    let x = input(&[1, 3, 64, 64], seed);
    check_sampled_params(
        &store,
        20,
        true,
        |c| {
            let f = model.features(c, &x)?;
            flat_concat(&[f.detect_p3, f.detect_p4, f.detect_p5])
        },
        gcfg(seed),
    )
}

fn describe_report(r: &GradCheckReport, secs: f64) -> String {
    let worst = r
        .worst
        .as_ref()
        .map(|(n, i, a, num)| format!(", worst {n}[{i}] analytic {a:.6e} numeric {num:.6e}"))
        .unwrap_or_default();
    format!(
        "max rel err {:.2e} over {} elements{} ({:.1}s)",
        r.max_rel_err, r.checked, worst, secs
    )
}

fn grad_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut cases: Vec<&str> = GRAD_CASES.to_vec();
    if opts.model_grad {
        cases.push("model");
    }
    let mut out = Vec::new();
    for name in cases {
        let instances = if name == "model" { 1 } else { opts.instances };
        for i in 0..instances {
            let t0 = Instant::now();
            let label = format!("{name}#{i}");
            out.push(match grad_case(name, i, opts.seed) {
                Ok(r) => CheckResult::new(
                    "grad",
                    label,
                    r.passed(GRAD_TOL),
                    describe_report(&r, t0.elapsed().as_secs_f64()),
                ),
                Err(e) => CheckResult::new("grad", label, false, format!("error: {e}")),
            });
        }
    }
    out
}

// ------------------------------------------------------------ fft and gates

/// Direct O(H^2 W^2) DFT of one real plane, bins (k, l) for l <= W/2.
pub fn naive_rdft2(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * (w / 2 + 1));
    for k in 0..h {
        for l in 0..=w / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x_ in 0..w {
                    let ang = -2.0 * std::f64::consts::PI * ((k * y) as f64 / h as f64 + (l * x_) as f64 / w as f64);
                    re += x[y * w + x_] * ang.cos();
                    im += x[y * w + x_] * ang.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

fn fft_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, &(h, w)) in [(8, 8), (6, 5), (7, 10), (1, 4)].iter().enumerate() {
        let x = input(&[2, 3, h, w], opts.seed + i as u64);
        out.push(outcome("fft", &format!("roundtrip_{h}x{w}"), (|| {
            let back = irfft2(&rfft2(&x)?)?;
            Ok(within("irfft2(rfft2(x)) - x", max_abs_diff(back.data(), x.data()), 1e-10))
        })()));
        out.push(outcome("fft", &format!("naive_dft_{h}x{w}"), (|| {
            let spec = rfft2(&x)?;
            let plane = &x.data()[..h * w];
            let naive = naive_rdft2(plane, h, w);
            let mut err: f64 = 0.0;
            for k in 0..h {
                for l in 0..=w / 2 {
                    let z = spec.at(0, 0, k, l);
                    let (re, im) = naive[k * (w / 2 + 1) + l];
                    err = err.max((z.re - re).abs()).max((z.im - im).abs());
                }
            }
            Ok(within("rfft2 vs direct DFT", err, 1e-10))
        })()));
    }
    out
}

fn fca_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for i in 0..opts.instances {
        let s = opts.seed + i as u64;
        out.push(outcome("fca", &format!("channel_scaling#{i}"), (|| {
            let (st, fca) = build(s, |b| Ok(Fca::new(b, 5)))?;
            let x = input(&[2, 5, 6, 7], s);
            let ctx = Ctx::eval(&st);
            let w = fca.weights(&ctx, &x)?;
            let y = fca.forward(&ctx, &x)?;
            Ok(within("fca(x) - w*x", max_abs_diff(y.data(), x.mul(&w)?.data()), 1e-8))
        })()));
    }
    out.push(outcome("fca", "zero_input", (|| {
        let (st, fca) = build(opts.seed, |b| Ok(Fca::new(b, 3)))?;
        let y = fca.forward(&Ctx::eval(&st), &Tensor::zeros(&[1, 3, 4, 4]))?;
        let m = y.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((m == 0.0, format!("max |fca(0)| = {m:e}")))
    })()));
    out
}

fn fgm_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, &(h, w)) in [(6, 6), (5, 7), (8, 4)].iter().enumerate() {
        let x = input(&[1, 3, h, w], opts.seed + i as u64);
        out.push(outcome("fgm", &format!("unit_gate_identity_{h}x{w}"), (|| {
            let y = Fgm::apply(&x, &Tensor::ones(&[1, 3, h, w / 2 + 1]))?;
            Ok(within("fgm(x; 1) - x", max_abs_diff(y.data(), x.data()), 1e-8))
        })()));
    }
    out.push(outcome("fgm", "saturated_logits", (|| {
        let (mut st, fgm) = build(opts.seed, |b| Ok(Fgm::new(b, 3, (6, 6))))?;
        st.set(fgm.logits, Tensor::full(&[1, 3, 6, 4], 60.0))?;
        let x = input(&[1, 3, 6, 6], opts.seed);
        let y = fgm.forward(&Ctx::eval(&st), &x)?;
        Ok(within("fgm(x) with saturated gates - x", max_abs_diff(y.data(), x.data()), 1e-8))
    })()));
    out.push(outcome("fgm", "zero_gate", (|| {
        let x = input(&[1, 2, 4, 6], opts.seed);
        let y = Fgm::apply(&x, &Tensor::zeros(&[1, 2, 4, 4]))?;
        Ok(within("fgm(x; 0)", max_abs_diff(y.data(), &vec![0.0; y.numel()]), 1e-12))
    })()));
    out
}

// ------------------------------------------------------------- spd, sppf

fn spd_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, shape) in [[1, 3, 4, 6], [2, 5, 8, 8], [1, 1, 2, 2]].iter().enumerate() {
        let x = input(shape, opts.seed + i as u64);
        let tag = format!("{}x{}x{}x{}", shape[0], shape[1], shape[2], shape[3]);
        out.push(outcome("spd", &format!("bijection_{tag}"), (|| {
            let y = space_to_depth(&x)?;
            let back = depth_to_space(&y)?;
            let exact = back.data() == x.data();
            let mut seen = y.to_vec();
            let mut orig = x.to_vec();
            seen.sort_by(f64::total_cmp);
            orig.sort_by(f64::total_cmp);
            Ok((
                exact && seen == orig,
                format!("inverse exact: {exact}, value multiset preserved: {}", seen == orig),
            ))
        })()));
        out.push(outcome("spd", &format!("layout_{tag}"), (|| {
            let [n, c, h, w] = *shape;
            let y = space_to_depth(&x)?;
            let (xd, yd) = (x.data(), y.data());
            let mut ok = true;
            for b in 0..n {
                for (q, &(dy, dx)) in SPD_ORDER.iter().enumerate() {
                    for ch in 0..c {
                        for i in 0..h / 2 {
                            for j in 0..w / 2 {
                                let got = yd[((b * 4 * c + q * c + ch) * (h / 2) + i) * (w / 2) + j];
                                let want = xd[((b * c + ch) * h + 2 * i + dy) * w + 2 * j + dx];
                                ok &= got == want;
                            }
                        }
                    }
                }
            }
            Ok((ok, "every output element equals its sub-pixel source".to_string()))
        })()));
    }
    out
}

/// Window maximum by direct enumeration, windows clipped at the border.
pub fn naive_maxpool_same(x: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![f64::NEG_INFINITY; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x_) = (i + di, j + dj);
                    if y >= 0 && x_ >= 0 && y < h as isize && x_ < w as isize {
                        let o = &mut out[i as usize * w + j as usize];
                        *o = o.max(x[y as usize * w + x_ as usize]);
                    }
                }
            }
        }
    }
    out
}

fn sppf_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let x = input(&[2, 3, 11, 9], opts.seed);
    for (k, n) in [(5usize, 2usize), (5, 3), (3, 2), (3, 4)] {
        let big = n * (k - 1) + 1;
        out.push(outcome("sppf", &format!("{n}x_pool{k}_eq_pool{big}"), (|| {
            let mut y = x.clone();
            for _ in 0..n {
                y = maxpool2d(&y, k, 1, k / 2)?;
            }
            let z = maxpool2d(&x, big, 1, big / 2)?;
            let exact = y.data() == z.data();
            Ok((exact, format!("serial vs single pool exact: {exact}")))
        })()));
    }
    out.push(outcome("sppf", "pool9_brute_force", (|| {
        let z = maxpool2d(&x, 9, 1, 4)?;
        let (h, w) = (11, 9);
        let mut ok = true;
        for p in 0..6 {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            ok &= z.data()[p * h * w..(p + 1) * h * w] == naive_maxpool_same(plane, h, w, 9)[..];
        }
        Ok((ok, format!("maxpool(9) equals window enumeration: {ok}")))
    })()));
    out
}

// --------------------------------------------------------------- attention

/// Dense attention computed from the raw projection weights, token by token.
pub fn dense_attention_oracle(att: &AreaAttention, store: &ParamStore, x: &Tensor) -> Result<Vec<f64>> {
    let (n, c, h, w) = x.dims4("attention_oracle")?;
    let l = h * w;
    let (heads, hd, area) = (att.heads, att.head_dim(), att.area);
    let seg = l / area;
    let wq = store.get(att.qkv.weight).data();
    let bq = store.get(att.qkv.bias).data();
    let wp = store.get(att.proj.weight).data();
    let bp = store.get(att.proj.bias).data();
    let xd = x.data();
    let mut out = vec![0.0; n * c * l];
    for b in 0..n {
        // qkv[o][t]
        let mut qkv = vec![0.0; 3 * c * l];
        for o in 0..3 * c {
            for t in 0..l {
                let mut s = bq[o];
                for ci in 0..c {
                    s += wq[o * c + ci] * xd[(b * c + ci) * l + t];
                }
                qkv[o * l + t] = s;
            }
        }
        let mut attn = vec![0.0; c * l];
        for hh in 0..heads {
            let q = |t: usize, d: usize| qkv[(hh * hd + d) * l + t];
            let k = |t: usize, d: usize| qkv[(c + hh * hd + d) * l + t];
            let v = |t: usize, d: usize| qkv[(2 * c + hh * hd + d) * l + t];
            for t in 0..l {
                let start = (t / seg) * seg;
                let logits: Vec<f64> = (start..start + seg)
                    .map(|u| (0..hd).map(|d| q(t, d) * k(u, d)).sum::<f64>() * att.scale())
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for d in 0..hd {
                    attn[(hh * hd + d) * l + t] = (0..seg).map(|u| e[u] / z * v(start + u, d)).sum();
                }
            }
        }
        for o in 0..c {
            for t in 0..l {
                let mut s = bp[o];
                for ci in 0..c {
                    s += wp[o * c + ci] * attn[ci * l + t];
                }
                out[(b * c + o) * l + t] = s;
            }
        }
    }
    Ok(out)
}

fn attention_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, &(dim, heads, area, h, w)) in [(8, 2, 1, 4, 4), (12, 3, 1, 3, 5), (8, 1, 1, 6, 2), (8, 2, 4, 4, 4)]
        .iter()
        .enumerate()
    {
        let s = opts.seed + i as u64;
        out.push(outcome("attention", &format!("dense_oracle_d{dim}_h{heads}_a{area}"), (|| {
            let (st, att) = build(s, |b| AreaAttention::new(b, dim, heads, area))?;
            let x = input(&[2, dim, h, w], s);
            let y = no_grad(|| att.forward(&Ctx::eval(&st), &x))?;
            let want = dense_attention_oracle(&att, &st, &x)?;
            Ok(within("area attention vs dense oracle", max_abs_diff(y.data(), &want), 1e-10))
        })()));
    }
    out.push(outcome("attention", "head_permutation", (|| {
        let (dim, heads) = (12, 3);
        let hd = dim / heads;
        let (mut st, att) = build(opts.seed, |b| AreaAttention::new(b, dim, heads, 1))?;
        let x = input(&[1, dim, 3, 3], opts.seed);
        let before = att.forward(&Ctx::eval(&st), &x)?;
        // head order 2, 0, 1 in q, k, v and the matching proj input columns
        let perm = [2usize, 0, 1];
        let ch = |c: usize| perm[c / hd] * hd + c % hd;
        let wq = st.get(att.qkv.weight).to_vec();
        let bq = st.get(att.qkv.bias).to_vec();
        let wp = st.get(att.proj.weight).to_vec();
        let (mut wq2, mut bq2, mut wp2) = (wq.clone(), bq.clone(), wp.clone());
        for part in 0..3 {
            for c in 0..dim {
                let (dst, src) = (part * dim + c, part * dim + ch(c));
                bq2[dst] = bq[src];
                wq2[dst * dim..(dst + 1) * dim].copy_from_slice(&wq[src * dim..(src + 1) * dim]);
            }
        }
        for o in 0..dim {
            for c in 0..dim {
                wp2[o * dim + c] = wp[o * dim + ch(c)];
            }
        }
        st.set(att.qkv.weight, Tensor::from_vec(&[3 * dim, dim, 1, 1], wq2)?)?;
        st.set(att.qkv.bias, Tensor::from_vec(&[3 * dim], bq2)?)?;
        st.set(att.proj.weight, Tensor::from_vec(&[dim, dim, 1, 1], wp2)?)?;
        let after = att.forward(&Ctx::eval(&st), &x)?;
        Ok(within("output change under head permutation", max_abs_diff(before.data(), after.data()), 1e-12))
    })()));
    out
}

// ------------------------------------------------------------ omni, edge

fn omni_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(outcome("omni", "branches_keep_spatial_dims", (|| {
        let (st, okm) = build(opts.seed, |b| OmniKernel::new(b, 4, 7, (9, 6)))?;
        let x = input(&[1, 4, 9, 6], opts.seed);
        let resp = okm.branch_responses(&Ctx::eval(&st), &x)?;
        let shapes: Vec<Vec<usize>> = resp.iter().map(|r| r.shape().to_vec()).collect();
        let ok = shapes.iter().all(|s| s == x.shape()) && okm.forward(&Ctx::eval(&st), &x)?.shape() == x.shape();
        Ok((ok, format!("branch shapes {shapes:?}")))
    })()));
    out.push(outcome("omni", "cspokm_skip_untouched", (|| {
        let (st, csp) = build(opts.seed, |b| Cspokm::new(b, 16, 16, 16, 0.25, 5, (4, 4)))?;
        let x = input(&[1, 16, 4, 4], opts.seed);
        let ctx = Ctx::eval(&st);
        let tr = csp.trace(&ctx, &x)?;
        let feat = csp.cv1.forward(&ctx, &x)?;
        let skip_orig = feat.narrow(1, csp.c_okm, csp.c_skip)?;
        let skip_fused = tr.fused_in.narrow(1, csp.c_okm, csp.c_skip)?;
        let ok = skip_fused.data() == skip_orig.data() && tr.output.shape() == x.shape();
        Ok((
            ok,
            format!("okm/skip = {}/{}, skip slice identical and channels preserved: {ok}", csp.c_okm, csp.c_skip),
        ))
    })()));
    out
}

fn edge_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(outcome("edge", "hem_constant_input", (|| {
        let (st, hem) = build(opts.seed, |b| Ok(Hem::new(b, 3, [4, 6, 8])))?;
        let ctx = Ctx::eval(&st);
        let a = hem.forward(&ctx, &Tensor::full(&[1, 3, 16, 24], 0.25))?;
        let b = hem.forward(&ctx, &Tensor::full(&[1, 3, 16, 24], -3.5))?;
        let same = a.levels().iter().zip(b.levels()).all(|(x, y)| x.data() == y.data());
        let halving = a.e_p4.dim(2) * 2 == a.e_p3.dim(2)
            && a.e_p5.dim(2) * 2 == a.e_p4.dim(2)
            && a.e_p4.dim(3) * 2 == a.e_p3.dim(3)
            && a.e_p5.dim(3) * 2 == a.e_p4.dim(3);
        Ok((same && halving, format!("identical pyramids: {same}, levels halve: {halving}")))
    })()));
    out.push(outcome("edge", "hem_shift_invariant", (|| {
        let (st, hem) = build(opts.seed, |b| Ok(Hem::new(b, 3, [4, 6, 8])))?;
        let ctx = Ctx::eval(&st);
        let x = input(&[1, 3, 16, 16], opts.seed);
        let s0 = hem.stages(&ctx, &x)?;
        let s1 = hem.stages(&ctx, &x.add_scalar(2.0))?;
        Ok(within("Sobel change under constant shift", max_abs_diff(s0[0].data(), s1[0].data()), 1e-12))
    })()));
    out.push(outcome("edge", "sef_edge_not_degenerate", (|| {
        let (st, sef) = build(opts.seed, |b| Ok(Sef::new(b, 8, 4, 8)))?;
        let ctx = Ctx::eval(&st);
        let main = input(&[1, 8, 4, 4], opts.seed);
        let edge = input(&[1, 4, 4, 4], opts.seed + 1);
        let y = sef.forward(&ctx, &main, &edge)?;
        let z = sef.forward(&ctx, &main, &Tensor::zeros(&[1, 4, 4, 4]))?;
        let d = max_abs_diff(y.data(), z.data());
        Ok((d > 0.0, format!("max |sef(m, e) - sef(m, 0)| = {d:.3e}")))
    })()));
    out.push(outcome("edge", "sef_output_channels", (|| {
        let mut ok = true;
        for (cm, ce, co) in [(16, 16, 16), (32, 32, 16), (64, 64, 32)] {
            let (st, sef) = build(opts.seed, |b| Ok(Sef::new(b, cm, ce, co)))?;
            let y = sef.forward(&Ctx::eval(&st), &input(&[1, cm, 2, 2], 1), &input(&[1, ce, 2, 2], 2))?;
            ok &= y.dim(1) == co;
        }
        Ok((ok, "three width configurations".to_string()))
    })()));
    out
}

// -------------------------------------------------------------------- loss

fn loss_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let f = focal_loss(0.9, true, 0.25, 2.0);
    out.push(CheckResult::new(
        "loss",
        "focal_fixture",
        (f - 2.634e-4).abs() <= 1e-7,
        format!("focal(0.9, y=1) = {f:.6e}, expected 2.634e-4 +- 1e-7"),
    ));
    let d = dfl_decode(&[0.3; 16]);
    out.push(CheckResult::new("loss", "dfl_uniform", d == 7.5, format!("dfl_decode(uniform, R=16) = {d}")));
    let iou = BBox::new(0.0, 0.0, 2.0, 2.0).iou(&BBox::new(1.0, 1.0, 3.0, 3.0));
    out.push(CheckResult::new(
        "loss",
        "iou_fixture",
        (iou - 1.0 / 7.0).abs() <= 1e-12,
        format!("IoU = {iou:.15}"),
    ));
    out.push(outcome("loss", "zero_gts_reduce_to_cls", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let leaves: Vec<Tensor> = [4usize, 2, 1]
            .iter()
            .flat_map(|&g| [Tensor::randn(&[2, 16, g, g], 1.0, &mut rng), Tensor::randn(&[2, 3, g, g], 1.0, &mut rng)])
            .collect();
        let cfg = LossConfig::default();
        let l = total_loss(&toy_head(&leaves, 4, 3), &[vec![], vec![]], &cfg)?;
        let b = &l.breakdown;
        let want = cfg.lambda_cls * b.cls;
        Ok((
            b.iou == 0.0 && b.dfl == 0.0 && (l.total.item() - want).abs() <= 1e-12 * want.abs().max(1.0),
            format!("total {:.9e}, lambda_cls * cls {:.9e}, iou {}, dfl {}", l.total.item(), want, b.iou, b.dfl),
        ))
    })()));
    out.push(outcome("loss", "lambda_cls_linear", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 1);
        let leaves: Vec<Tensor> = [4usize, 2, 1]
            .iter()
            .flat_map(|&g| [Tensor::randn(&[2, 16, g, g], 1.0, &mut rng), Tensor::randn(&[2, 3, g, g], 1.0, &mut rng)])
            .collect();
        let head = toy_head(&leaves, 4, 3);
        let gts = loss_toy_gts();
        let cfg = LossConfig::default();
        let doubled = LossConfig {
            lambda_cls: 2.0 * cfg.lambda_cls,
            ..cfg
        };
        let a = total_loss(&head, &gts, &cfg)?;
        let b = total_loss(&head, &gts, &doubled)?;
        let diff = b.total.item() - a.total.item();
        let want = cfg.lambda_cls * a.breakdown.cls;
        Ok(within("added loss minus lambda_cls * cls", (diff - want).abs(), 1e-12))
    })()));
    out.push(outcome("loss", "focal_monotone", {
        let mut prev = f64::INFINITY;
        let mut ok = true;
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let v = focal_loss(p, true, 0.25, 2.0);
            ok &= v >= 0.0 && v < prev && (focal_loss(1.0 - p, false, 0.25, 2.0) - 3.0 * v).abs() <= 1e-12 * v;
            prev = v;
        }
        Ok((ok, "non-negative, strictly decreasing in p_t, alpha symmetric".to_string()))
    }));
    out
}

// --------------------------------------------------------------------- nms

/// Repeatedly takes the best remaining detection and removes every remaining
/// same-class detection that overlaps it too much.
pub fn nms_reference(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut alive = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if !alive[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (x, y) = (&dets[i], &dets[b]);
                    let better = x.score > y.score || (x.score == y.score && x.class_id < y.class_id);
                    Some(if better { i } else { b })
                }
            };
        }
        let Some(b) = best else { break };
        alive[b] = false;
        out.push(dets[b]);
        for j in 0..dets.len() {
            if alive[j] && dets[j].class_id == dets[b].class_id && dets[j].bbox.iou(&dets[b].bbox) > iou_threshold {
                alive[j] = false;
            }
        }
    }
    out
}

/// Boxes on a coarse integer lattice with quantized scores so that ties and
/// heavy overlaps are common.
pub fn random_detections(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let x1 = rng.random_range(0..40) as f64;
            let y1 = rng.random_range(0..40) as f64;
            Detection {
                bbox: BBox::new(x1, y1, x1 + rng.random_range(1..16) as f64, y1 + rng.random_range(1..16) as f64),
                class_id: rng.random_range(0..classes),
                score: rng.random_range(1..=20) as f64 / 20.0,
            }
        })
        .collect()
}

pub fn nms_trial(seed: u64, n: usize) -> (bool, Vec<Detection>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dets = random_detections(&mut rng, n, 3);
    let thr = [0.3, 0.5, 0.7][(seed % 3) as usize];
    let fast = nms(&dets, thr);
    let slow = nms_reference(&dets, thr);
    (fast == slow, fast)
}

fn nms_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut mismatches = Vec::new();
    let mut overlap_ok = true;
    for t in 0..opts.nms_trials {
        let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(t as u64);
        let (same, kept) = nms_trial(seed, 100);
        if !same {
            mismatches.push(t);
        }
        let thr = [0.3, 0.5, 0.7][(seed % 3) as usize];
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                overlap_ok &= a.class_id != b.class_id || a.bbox.iou(&b.bbox) <= thr;
            }
        }
    }
    vec![
        CheckResult::new(
            "nms",
            "reference_survivors",
            mismatches.is_empty(),
            format!("{} random 100-box instances, mismatching trials {:?}", opts.nms_trials, mismatches),
        ),
        CheckResult::new("nms", "no_surviving_overlap", overlap_ok, "no same-class survivor pair above threshold"),
    ]
}

// ------------------------------------------------------------------ assign

/// Assignment by exhaustive pairwise comparison: anchor `a` is in the top-k
/// of gt `g` iff fewer than k other candidates outrank it, and a claimed
/// anchor belongs to the claiming gt with the best score (first on ties).
pub fn assign_reference(anchors: &[Anchor], pred: &Predictions, gts: &[GroundTruth], cfg: &AssignConfig) -> Vec<Option<usize>> {
    let score = |a: usize, g: &GroundTruth| {
        let p = pred.scores[a * pred.num_classes + g.class_id];
        pred.boxes[a].iou(&g.bbox) * p.max(0.0).powf(cfg.score_power)
    };
    let dist = |a: &Anchor, b: &BBox| {
        let (cx, cy) = b.center();
        (a.x - cx).powi(2) + (a.y - cy).powi(2)
    };
    let mut claims: Vec<Vec<(usize, f64)>> = vec![Vec::new(); anchors.len()];
    for (g, gt) in gts.iter().enumerate() {
        if gt.bbox.area() <= 0.0 || gt.class_id >= pred.num_classes {
            continue;
        }
        let mut cands: Vec<usize> = (0..anchors.len())
            .filter(|&a| gt.bbox.contains_point(anchors[a].x, anchors[a].y))
            .collect();
        if cands.is_empty() {
            // first anchor at minimum distance
            let mut best = 0;
            for a in 1..anchors.len() {
                if dist(&anchors[a], &gt.bbox) < dist(&anchors[best], &gt.bbox) {
                    best = a;
                }
            }
            cands.push(best);
        }
        for &a in &cands {
            let (sa, da) = (score(a, gt), dist(&anchors[a], &gt.bbox));
            let ahead = cands
                .iter()
                .filter(|&&b| {
                    let (sb, db) = (score(b, gt), dist(&anchors[b], &gt.bbox));
                    sb > sa || (sb == sa && (db < da || (db == da && b < a)))
                })
                .count();
            if ahead < cfg.topk {
                claims[a].push((g, sa));
            }
        }
    }
    claims
        .into_iter()
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (g, s) in c {
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((g, s));
                }
            }
            best.map(|b| b.0)
        })
        .collect()
}

/// A random toy on a 4x4 stride-8 grid: a few overlapping gts and random
/// predicted boxes and scores. Returns (anchors, boxes, scores, gts, classes).
pub fn assign_toy(seed: u64) -> (Vec<Anchor>, Vec<BBox>, Vec<f64>, Vec<GroundTruth>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = anchor_points(&[(4, 4, 8)]);
    let nc = 2;
    let boxes: Vec<BBox> = anchors
        .iter()
        .map(|a| {
            let (w, h) = (rng.random_range(2.0..20.0), rng.random_range(2.0..20.0));
            BBox::new(a.x - w / 2.0, a.y - h / 2.0, a.x + w / 2.0, a.y + h / 2.0)
        })
        .collect();
    let scores: Vec<f64> = (0..anchors.len() * nc).map(|_| rng.random_range(0.0..1.0)).collect();
    let ngt = rng.random_range(1..=4);
    let gts = (0..ngt)
        .map(|_| {
            let x1 = rng.random_range(0..28) as f64;
            let y1 = rng.random_range(0..28) as f64;
            GroundTruth {
                class_id: rng.random_range(0..nc),
                bbox: BBox::new(x1, y1, (x1 + rng.random_range(1..24) as f64).min(32.0), (y1 + rng.random_range(1..24) as f64).min(32.0)),
            }
        })
        .collect();
    (anchors, boxes, scores, gts, nc)
}

fn assign_group(opts: &CheckOptions) -> Vec<CheckResult> {
    let mut bad = Vec::new();
    for t in 0..opts.assign_trials {
        let (anchors, boxes, scores, gts, nc) = assign_toy(opts.seed.wrapping_mul(7919).wrapping_add(t as u64));
        let pred = Predictions {
            boxes: &boxes,
            scores: &scores,
            num_classes: nc,
        };
        // small k makes the top-k cut bite on a 16-anchor grid
        for topk in [1, 3, 10] {
            let cfg = AssignConfig {
                topk,
                ..AssignConfig::default()
            };
            if assign(&anchors, &pred, &gts, &cfg) != assign_reference(&anchors, &pred, &gts, &cfg) {
                bad.push((t, topk));
            }
        }
    }
    vec![CheckResult::new(
        "assign",
        "brute_force_4x4",
        bad.is_empty(),
        format!("{} random toys x 3 top-k values, mismatches {:?}", opts.assign_trials, bad),
    )]
}

// ---------------------------------------------------------------------- ap

#[derive(Deserialize)]
struct FixtureBox {
    class_id: usize,
    #[serde(default)]
    score: f64,
    bbox: [f64; 4],
}

#[derive(Deserialize)]
struct FixtureImage {
    gts: Vec<FixtureBox>,
    dets: Vec<FixtureBox>,
}

#[derive(Deserialize)]
struct FixtureRanked {
    tp: Vec<bool>,
    num_gt: usize,
    ap: [f64; 2],
}

#[derive(Deserialize)]
struct ApFixture {
    num_classes: usize,
    images: Vec<FixtureImage>,
    ap: Vec<Vec<[f64; 2]>>,
    map50: [f64; 2],
    map75: [f64; 2],
    map5095: [f64; 2],
    ranked: Vec<FixtureRanked>,
}

pub const AP_GOLDEN: &str = include_str!("../fixtures/ap_golden.json");

fn ratio(r: [f64; 2]) -> f64 {
    r[0] / r[1]
}

/// Compares the evaluator with the hand-computed golden file; returns the
/// largest deviation over every AP and mAP value.
pub fn ap_golden_error() -> Result<f64> {
    let fx: ApFixture = serde_json::from_str(AP_GOLDEN)?;
    let dets: Vec<Vec<Detection>> = fx
        .images
        .iter()
        .map(|im| {
            im.dets
                .iter()
                .map(|d| Detection {
                    bbox: BBox::from_array(d.bbox),
                    class_id: d.class_id,
                    score: d.score,
                })
                .collect()
        })
        .collect();
    let gts: Vec<Vec<GroundTruth>> = fx
        .images
        .iter()
        .map(|im| {
            im.gts
                .iter()
                .map(|g| GroundTruth {
                    class_id: g.class_id,
                    bbox: BBox::from_array(g.bbox),
                })
                .collect()
        })
        .collect();
    let rep = evaluate(
        &dets,
        &gts,
        &EvalConfig {
            num_classes: fx.num_classes,
            method: ApMethod::Interp101,
        },
    )?;
    let mut err: f64 = 0.0;
    for (c, row) in fx.ap.iter().enumerate() {
        for (t, &want) in row.iter().enumerate() {
            let got = rep.ap[c][t].ok_or_else(|| Error::Format(format!("class {c} has no AP")))?;
            err = err.max((got - ratio(want)).abs());
        }
    }
    err = err
        .max((rep.map50 - ratio(fx.map50)).abs())
        .max((rep.map75 - ratio(fx.map75)).abs())
        .max((rep.map5095 - ratio(fx.map5095)).abs());
    for r in &fx.ranked {
        let got = average_precision(&r.tp, r.num_gt, ApMethod::Interp101).unwrap_or(f64::NAN);
        err = err.max((got - ratio(r.ap)).abs());
    }
    Ok(err)
}

fn ap_group(_: &CheckOptions) -> Vec<CheckResult> {
    let mut out = vec![outcome("ap", "golden_fixture", ap_golden_error().map(|e| within("AP vs hand computation", e, 1e-9)))];
    out.push(outcome("ap", "iou_bracketing", (|| {
        // every detection overlaps its gt with IoU in (0.5, 0.55)
        let gts: Vec<Vec<GroundTruth>> = (0..4)
            .map(|i| {
                vec![GroundTruth {
                    class_id: i % 2,
                    bbox: BBox::new(0.0, 0.0, 100.0, 100.0),
                }]
            })
            .collect();
        let dets: Vec<Vec<Detection>> = gts
            .iter()
            .map(|g| {
                vec![Detection {
                    bbox: BBox::new(0.0, 0.0, 100.0, 52.0),
                    class_id: g[0].class_id,
                    score: 0.9,
                }]
            })
            .collect();
        let rep = evaluate(
            &dets,
            &gts,
            &EvalConfig {
                num_classes: 2,
                method: ApMethod::Interp101,
            },
        )?;
        let ok = (rep.map50 - 1.0).abs() < 1e-12 && (rep.map5095 - 0.1).abs() < 1e-12;
        Ok((ok, format!("map50 {} map5095 {}", rep.map50, rep.map5095)))
    })()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_group_is_usage_error() {
        let opts = CheckOptions {
            only: vec!["nope".into()],
            ..CheckOptions::default()
        };
        assert!(matches!(run(&opts), Err(Error::Usage(_))));
    }

    #[test]
    fn naive_dft_of_impulse_is_flat() {
        let mut x = vec![0.0; 12];
        x[0] = 1.0;
        assert!(naive_rdft2(&x, 3, 4).iter().all(|&(re, im)| (re - 1.0).abs() < 1e-15 && im.abs() < 1e-15));
    }
}
