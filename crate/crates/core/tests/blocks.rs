use hieraedge::blocks::{depth_to_space, space_to_depth, AreaAttention, SobelConv, SPD_ORDER};
use hieraedge::edge::{Hem, Sef};
use hieraedge::omni::{Cspokm, Fca, Fgm, OmniKernel};
use hieraedge::params::{Builder, Ctx, ParamStore};
use hieraedge::tensor::{irfft2, maxpool2d, rfft2};
use hieraedge::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Direct O(H^2 W^2) DFT of one plane, half spectrum.
fn dft_half(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let wh = w / 2 + 1;
    let mut out = Vec::with_capacity(h * wh);
    for k in 0..h {
        for l in 0..wh {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let t = -2.0 * std::f64::consts::PI * ((k * i) as f64 / h as f64 + (l * j) as f64 / w as f64);
                    re += x[i * w + j] * t.cos();
                    im += x[i * w + j] * t.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

#[test]
fn rfft2_matches_direct_dft() {
    for (h, w) in [(8, 8), (5, 6), (7, 10), (1, 4), (3, 1)] {
        let x = Tensor::randn(&[2, 2, h, w], 1.0, &mut rng(h as u64 * 31 + w as u64));
        let spec = rfft2(&x).unwrap();
        for p in 0..4 {
            let want = dft_half(&x.data()[p * h * w..(p + 1) * h * w], h, w);
            for k in 0..h {
                for l in 0..w / 2 + 1 {
                    let z = spec.at(p / 2, p % 2, k, l);
                    let (re, im) = want[k * (w / 2 + 1) + l];
                    assert!((z.re - re).abs() < 1e-10 && (z.im - im).abs() < 1e-10, "{h}x{w} bin ({k},{l})");
                }
            }
        }
        let back = irfft2(&spec).unwrap();
        assert!(max_abs_diff(back.data(), x.data()) < 1e-10);
    }
}

#[test]
fn space_to_depth_layout_and_inverse() {
    let (n, c, h, w) = (2, 3, 4, 6);
    let x = Tensor::from_vec(&[n, c, h, w], (0..n * c * h * w).map(|v| v as f64).collect()).unwrap();
    let y = space_to_depth(&x).unwrap();
    assert_eq!(y.shape(), &[n, 4 * c, h / 2, w / 2]);
    for b in 0..n {
        for (q, (dy, dx)) in SPD_ORDER.iter().enumerate() {
            for ch in 0..c {
                for i in 0..h / 2 {
                    for j in 0..w / 2 {
                        let got = y.data()[((b * 4 * c + q * c + ch) * (h / 2) + i) * (w / 2) + j];
                        let want = x.data()[((b * c + ch) * h + 2 * i + dy) * w + 2 * j + dx];
                        assert_eq!(got, want);
                    }
                }
            }
        }
    }
    assert_eq!(depth_to_space(&y).unwrap().data(), x.data());
    assert!(space_to_depth(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
}

/// Max over the clipped k x k window around every pixel.
fn window_max(x: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![f64::NEG_INFINITY; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x2) = (i + di, j + dj);
                    if y >= 0 && y < h as isize && x2 >= 0 && x2 < w as isize {
                        let o = &mut out[(i * w as isize + j) as usize];
                        *o = o.max(x[(y * w as isize + x2) as usize]);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn serial_pools_equal_one_wide_pool() {
    let x = Tensor::randn(&[1, 3, 11, 9], 1.0, &mut rng(4));
    let once = maxpool2d(&x, 5, 1, 2).unwrap();
    let twice = maxpool2d(&once, 5, 1, 2).unwrap();
    let wide = maxpool2d(&x, 9, 1, 4).unwrap();
    assert_eq!(twice.data(), wide.data());
    for p in 0..3 {
        let plane = &x.data()[p * 99..(p + 1) * 99];
        assert_eq!(&wide.data()[p * 99..(p + 1) * 99], &window_max(plane, 11, 9, 9)[..]);
    }
}

/// Attention from the raw parameters, one query token at a time.
fn dense_attention(att: &AreaAttention, store: &ParamStore, x: &Tensor) -> Vec<f64> {
    let (c, l) = (x.shape()[1], x.shape()[2] * x.shape()[3]);
    let (heads, hd) = (att.heads, att.dim / att.heads);
    let seg = l / att.area;
    let (wq, bq) = (store.get(att.qkv.weight).data(), store.get(att.qkv.bias).data());
    let (wp, bp) = (store.get(att.proj.weight).data(), store.get(att.proj.bias).data());
    let xd = x.data();
    let lin = |w: &[f64], b: &[f64], src: &dyn Fn(usize, usize) -> f64, o: usize, t: usize| {
        b[o] + (0..c).map(|i| w[o * c + i] * src(i, t)).sum::<f64>()
    };
    let input = |i: usize, t: usize| xd[i * l + t];
    let q = |hh: usize, d: usize, t: usize| lin(wq, bq, &input, hh * hd + d, t);
    let k = |hh: usize, d: usize, t: usize| lin(wq, bq, &input, c + hh * hd + d, t);
    let v = |hh: usize, d: usize, t: usize| lin(wq, bq, &input, 2 * c + hh * hd + d, t);
    let mut mixed = vec![0.0; c * l];
    for hh in 0..heads {
        for t in 0..l {
            let start = t / seg * seg;
            let s: Vec<f64> = (start..start + seg)
                .map(|u| (0..hd).map(|d| q(hh, d, t) * k(hh, d, u)).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            for d in 0..hd {
                mixed[(hh * hd + d) * l + t] = (0..seg).map(|u| (s[u] - m).exp() / z * v(hh, d, start + u)).sum();
            }
        }
    }
    let mixed_src = |i: usize, t: usize| mixed[i * l + t];
    (0..c).flat_map(|o| (0..l).map(move |t| (o, t))).map(|(o, t)| lin(wp, bp, &mixed_src, o, t)).collect()
}

#[test]
fn area_attention_matches_dense_computation() {
    for (dim, heads, area, hw) in [(8, 2, 1, (3, 4)), (12, 3, 1, (2, 3)), (8, 1, 2, (4, 4)), (8, 2, 4, (4, 2))] {
        let mut store = ParamStore::new();
        let mut r = rng(dim as u64 + area as u64);
        let att = AreaAttention::new(&mut Builder::new(&mut store, &mut r), dim, heads, area).unwrap();
        let x = Tensor::randn(&[1, dim, hw.0, hw.1], 1.0, &mut rng(8));
        let got = att.forward(&Ctx::eval(&store), &x).unwrap();
        let err = max_abs_diff(got.data(), &dense_attention(&att, &store, &x));
        assert!(err < 1e-10, "dim {dim} heads {heads} area {area}: {err}");
    }
}

#[test]
fn area_attention_rejects_indivisible_tokens() {
    let mut store = ParamStore::new();
    let mut r = rng(0);
    let att = AreaAttention::new(&mut Builder::new(&mut store, &mut r), 8, 2, 4).unwrap();
    assert!(att.forward(&Ctx::eval(&store), &Tensor::zeros(&[1, 8, 3, 3])).is_err());
    assert!(AreaAttention::new(&mut Builder::new(&mut store, &mut r), 8, 3, 1).is_err());
}

#[test]
fn fca_is_per_channel_scaling() {
    let mut store = ParamStore::new();
    let mut r = rng(2);
    let fca = Fca::new(&mut Builder::new(&mut store, &mut r), 5);
    let x = Tensor::randn(&[2, 5, 6, 7], 1.0, &mut rng(3));
    let ctx = Ctx::eval(&store);
    let w = fca.weights(&ctx, &x).unwrap();
    let y = fca.forward(&ctx, &x).unwrap();
    let plane = 42;
    for p in 0..10 {
        for i in 0..plane {
            let want = w.data()[p] * x.data()[p * plane + i];
            assert!((y.data()[p * plane + i] - want).abs() < 1e-8);
        }
    }
}

#[test]
fn fgm_with_unit_gate_is_identity() {
    let x = Tensor::randn(&[1, 3, 5, 7], 1.0, &mut rng(6));
    let y = Fgm::apply(&x, &Tensor::ones(&[1, 3, 5, 4])).unwrap();
    assert!(max_abs_diff(x.data(), y.data()) < 1e-8);
    let z = Fgm::apply(&x, &Tensor::zeros(&[1, 3, 5, 4])).unwrap();
    assert!(z.data().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn fgm_rejects_wrong_size() {
    let mut store = ParamStore::new();
    let mut r = rng(0);
    let fgm = Fgm::new(&mut Builder::new(&mut store, &mut r), 2, (4, 4));
    assert!(fgm.forward(&Ctx::eval(&store), &Tensor::zeros(&[1, 2, 4, 5])).is_err());
}

#[test]
fn omni_kernel_and_csp_shapes() {
    let mut store = ParamStore::new();
    let mut r = rng(1);
    let okm = OmniKernel::new(&mut Builder::new(&mut store, &mut r), 4, 5, (9, 6)).unwrap();
    let ctx = Ctx::eval(&store);
    let x = Tensor::randn(&[1, 4, 9, 6], 1.0, &mut rng(2));
    for b in okm.branch_responses(&ctx, &x).unwrap() {
        assert_eq!(b.shape(), &[1, 4, 9, 6]);
    }
    assert_eq!(okm.forward(&ctx, &x).unwrap().shape(), &[1, 4, 9, 6]);

    let mut store = ParamStore::new();
    let csp = Cspokm::new(&mut Builder::new(&mut store, &mut r), 8, 16, 12, 0.25, 3, (4, 4)).unwrap();
    let t = csp.trace(&Ctx::eval(&store), &Tensor::randn(&[1, 8, 4, 4], 1.0, &mut rng(3))).unwrap();
    assert_eq!((csp.c_okm, csp.c_skip), (4, 12));
    assert_eq!(t.output.shape(), &[1, 12, 4, 4]);
    // skip share enters the fusion unchanged
    let skip_in_fused = t.fused_in.narrow(1, 4, 12).unwrap();
    assert_eq!(skip_in_fused.data(), t.skip.data());
    assert!(Cspokm::new(&mut Builder::new(&mut store, &mut r), 8, 2, 4, 0.1, 3, (4, 4)).is_err());
}

#[test]
fn sobel_responds_to_vertical_step() {
    let mut store = ParamStore::new();
    let mut r = rng(0);
    let s = SobelConv::new(&mut Builder::new(&mut store, &mut r), 1);
    let mut d = vec![0.0; 36];
    for i in 0..6 {
        for j in 3..6 {
            d[i * 6 + j] = 1.0;
        }
    }
    let y = s.forward(&Ctx::eval(&store), &Tensor::from_vec(&[1, 1, 6, 6], d).unwrap()).unwrap();
    for i in 0..6 {
        let row = &y.data()[i * 6..i * 6 + 6];
        assert_eq!(row, &[0.0, 0.0, 4.0, 4.0, 0.0, 0.0]);
    }
}

#[test]
fn hem_constant_input_gives_input_independent_pyramid() {
    let mut store = ParamStore::new();
    let mut r = rng(5);
    let hem = Hem::new(&mut Builder::new(&mut store, &mut r), 3, [4, 6, 8]);
    let ctx = Ctx::eval(&store);
    let a = hem.forward(&ctx, &Tensor::full(&[1, 3, 16, 24], 0.3)).unwrap();
    let b = hem.forward(&ctx, &Tensor::full(&[1, 3, 16, 24], -2.0)).unwrap();
    for (x, y) in a.levels().iter().zip(b.levels()) {
        assert!(max_abs_diff(x.data(), y.data()) < 1e-12);
    }
    assert_eq!(a.e_p3.shape(), &[1, 4, 8, 12]);
    assert_eq!(a.e_p4.shape(), &[1, 6, 4, 6]);
    assert_eq!(a.e_p5.shape(), &[1, 8, 2, 3]);
    assert!(hem.forward(&ctx, &Tensor::zeros(&[1, 3, 12, 16])).is_err());
}

#[test]
fn sef_uses_edge_input_and_checks_sizes() {
    let mut store = ParamStore::new();
    let mut r = rng(7);
    let sef = Sef::new(&mut Builder::new(&mut store, &mut r), 6, 4, 10);
    let ctx = Ctx::eval(&store);
    let m = Tensor::randn(&[1, 6, 4, 4], 1.0, &mut rng(8));
    let e = Tensor::randn(&[1, 4, 4, 4], 1.0, &mut rng(9));
    let with = sef.forward(&ctx, &m, &e).unwrap();
    let without = sef.forward(&ctx, &m, &Tensor::zeros(&[1, 4, 4, 4])).unwrap();
    assert_eq!(with.shape(), &[1, 10, 4, 4]);
    assert!(max_abs_diff(with.data(), without.data()) > 1e-3);
    assert!(sef.forward(&ctx, &m, &Tensor::zeros(&[1, 4, 2, 2])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fft_round_trip(h in 1usize..9, w in 1usize..9, seed in 0u64..1000) {
        let x = Tensor::randn(&[1, 2, h, w], 1.0, &mut rng(seed));
        let back = irfft2(&rfft2(&x).unwrap()).unwrap();
        prop_assert!(max_abs_diff(back.data(), x.data()) < 1e-10);
    }

    #[test]
    fn spd_is_a_permutation(c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
        let x = Tensor::randn(&[1, c, 2 * h, 2 * w], 1.0, &mut rng(seed));
        let y = space_to_depth(&x).unwrap();
        let mut a = x.to_vec();
        let mut b = y.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(depth_to_space(&y).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn sobel_ignores_constant_offsets(seed in 0u64..1000, shift in -5.0..5.0f64) {
        let mut store = ParamStore::new();
        let mut r = rng(0);
        let s = SobelConv::new(&mut Builder::new(&mut store, &mut r), 2);
        let ctx = Ctx::eval(&store);
        let x = Tensor::randn(&[1, 2, 5, 6], 1.0, &mut rng(seed));
        let y = s.forward(&ctx, &x).unwrap();
        let z = s.forward(&ctx, &x.add_scalar(shift)).unwrap();
        prop_assert!(max_abs_diff(y.data(), z.data()) < 1e-12);
    }
}
