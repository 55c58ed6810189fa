//! Central finite-difference verification of reverse-mode gradients.
//!
//! A possibly non-scalar function `f` is reduced to the scalar
//! `L = sum(w * f(x))` with fixed random weights `w`. Analytic gradients of
//! `L` come from one backward pass. For each checked element the central
//! difference is formed output-by-output, `sum_i w_i (f(x+h)_i - f(x-h)_i) / 2h`,
//! which keeps cancellation error per output element instead of per sum.
//!
//! Relative error uses `|a - n| / max(|n|, floor)` where the floor is a small
//! fraction of the largest numeric gradient seen in the same check. Gradients
//! that are zero by construction (a bias feeding a batch norm, a key bias under
//! softmax) are then judged against the check's gradient scale rather than
//! against their own rounding noise.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{Ctx, ParamStore};
use crate::tensor::{no_grad, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Elements checked per leaf; leaves with at most this many are checked fully.
    pub max_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            max_per_tensor: 24,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Leaf name, flat index, analytic and numeric value at the worst element.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Fraction of the largest numeric gradient used as the error denominator floor.
pub const FLOOR_FRACTION: f64 = 1e-3;

impl GradCheckReport {
    /// Builds the report from (leaf name, index, analytic, numeric) samples.
    pub fn from_samples(samples: Vec<(String, usize, f64, f64)>) -> Self {
        let scale = samples.iter().fold(0.0f64, |m, s| m.max(s.3.abs()));
        let floor = (FLOOR_FRACTION * scale).max(1e-8);
        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            checked: samples.len(),
            worst: None,
        };
        for s in samples {
            let err = relative_error(s.2, s.3, floor);
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some(s);
            }
        }
        report
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(floor)
}

/// Checks `f` w.r.t. every tensor in `leaves`; `names` label the report.
pub fn check_fn<F>(names: &[String], leaves: &[Tensor], f: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vars: Vec<Tensor> = leaves.iter().map(|t| t.detach().requires_grad()).collect();
    let y = f(&vars)?;
    let w = Tensor::randn(y.shape(), 1.0, &mut rng);
    y.mul(&w)?.sum().backward()?;
    let wd = w.to_vec();
    let consts: Vec<Tensor> = leaves.iter().map(Tensor::detach).collect();
    let mut samples = Vec::new();
    for (li, var) in vars.iter().enumerate() {
        let n = var.numel();
        let analytic = var.grad().unwrap_or_else(|| vec![0.0; n]);
        let picks: Vec<usize> = if n <= cfg.max_per_tensor {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, cfg.max_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        for i in picks {
            let eval = |delta: f64| -> Result<Vec<f64>> {
                let mut data = consts[li].to_vec();
                data[i] += delta;
                let mut args = consts.clone();
                args[li] = Tensor::from_vec(consts[li].shape(), data)?;
                no_grad(|| f(&args)).map(|t| t.to_vec())
            };
            let plus = eval(cfg.h)?;
            let minus = eval(-cfg.h)?;
            let numeric: f64 = plus
                .iter()
                .zip(&minus)
                .zip(&wd)
                .map(|((p, m), w)| w * (p - m))
                .sum::<f64>()
                / (2.0 * cfg.h);
            samples.push((names[li].clone(), i, analytic[i], numeric));
        }
    }
    Ok(GradCheckReport::from_samples(samples))
}

/// Checks a block forward w.r.t. its inputs and every trainable parameter in `store`.
pub fn check_block<F>(
    store: &ParamStore,
    inputs: &[Tensor],
    train: bool,
    f: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&Ctx, &[Tensor]) -> Result<Tensor>,
{
    let ids = store.trainable_ids();
    let mut names: Vec<String> = (0..inputs.len()).map(|i| format!("input{i}")).collect();
    names.extend(ids.iter().map(|&id| store.name(id).to_string()));
    let mut leaves = inputs.to_vec();
    leaves.extend(ids.iter().map(|&id| store.get(id).clone()));
    let k = inputs.len();
    check_fn(
        &names,
        &leaves,
        |vals| {
            let s = store.with_values(&ids, &vals[k..]);
            let ctx = Ctx::new(&s, train);
            f(&ctx, &vals[..k])
        },
        cfg,
    )
}

/// Checks `count` scalars drawn uniformly from all trainable parameters of
/// `store` (the whole-model case, where checking every tensor is too slow).
pub fn check_sampled_params<F>(
    store: &ParamStore,
    count: usize,
    train: bool,
    f: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&Ctx) -> Result<Tensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids = store.trainable_ids();
    let sizes: Vec<usize> = ids.iter().map(|&id| store.get(id).numel()).collect();
    let total: usize = sizes.iter().sum();
    let leaves = store.with_grad_leaves();
    f(&Ctx::new(&leaves, train))?.sum().backward()?;
    let mut samples = Vec::new();
    let mut flat = sample(&mut rng, total, count.min(total)).into_vec();
    flat.sort_unstable();
    for mut k in flat {
        let mut slot = 0;
        while k >= sizes[slot] {
            k -= sizes[slot];
            slot += 1;
        }
        let id = ids[slot];
        let analytic = leaves.get(id).grad().map_or(0.0, |g| g[k]);
        let eval = |delta: f64| -> Result<f64> {
            let mut data = store.get(id).to_vec();
            data[k] += delta;
            let s = store.with_values(&[id], &[Tensor::from_vec(store.get(id).shape(), data)?]);
            no_grad(|| f(&Ctx::new(&s, train))).map(|t| t.sum().item())
        };
        let numeric = (eval(cfg.h)? - eval(-cfg.h)?) / (2.0 * cfg.h);
        samples.push((store.name(id).to_string(), k, analytic, numeric));
    }
    Ok(GradCheckReport::from_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d, inject_backward_fault, Conv2dOptions};

    #[test]
    fn conv_passes_and_sign_fault_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[1, 2, 5, 5], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let names = vec!["x".to_string(), "w".to_string()];
        let f = |v: &[Tensor]| conv2d(&v[0], &v[1], None, Conv2dOptions::new(2, 1, 1));
        let ok = check_fn(&names, &[x.clone(), w.clone()], f, GradCheckConfig::default()).unwrap();
        assert!(ok.passed(1e-4), "{ok:?}");
        inject_backward_fault(Some("conv2d"));
        let bad = check_fn(&names, &[x, w], f, GradCheckConfig::default()).unwrap();
        inject_backward_fault(None);
        assert!(!bad.passed(1e-4));
    }
}
