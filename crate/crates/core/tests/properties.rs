use framebits_core::complexity::{block_dct, frame_texture, DctPlan, FrequencyWeight};
use framebits_core::dataset::{
    kfold_split, FrameType, OracleCoefficients, OracleDrivers, SyntheticOracleParams,
};
use framebits_core::gop::{classify_frames, decode_order, GopConfig};
use framebits_core::linalg::Matrix;
use framebits_core::metrics::{bd_rate, mape, r2, Pchip, RdPoint};
use framebits_core::models::{fit_forest, fit_linear, ForestParams, TreeLimits};
use framebits_core::ratecontrol::{allocate_gop, compensate, qp_refine, RcConstants};
use framebits_core::Plane;
use proptest::prelude::*;

fn naive_dct(block: &[f64], w: usize) -> Vec<f64> {
    let n = w as f64;
    let alpha = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    let mut out = vec![0.0; w * w];
    for u in 0..w {
        for v in 0..w {
            let mut s = 0.0;
            for x in 0..w {
                for y in 0..w {
                    s += block[x * w + y]
                        * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n)).cos()
                        * (std::f64::consts::PI * (2 * y + 1) as f64 * v as f64 / (2.0 * n)).cos();
                }
            }
            out[u * w + v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

fn constants() -> impl Strategy<Value = RcConstants> {
    (0.1f64..3.0, 0.01f64..0.99, 0i32..=63).prop_map(|(c_low, c_high, q_start)| RcConstants {
        c_low,
        c_high,
        q_start,
    })
}

proptest! {
    #[test]
    fn dct_matches_reference(
        w in prop::sample::select(vec![2usize, 4, 8]),
        pixels in prop::collection::vec(0.0f64..255.0, 64),
    ) {
        let block = &pixels[..w * w];
        let fast = block_dct(block, w);
        let slow = naive_dct(block, w);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_is_offset_invariant(
        pixels in prop::collection::vec(0u8..=200, 48 * 40),
        offset in 0u8..=55,
    ) {
        let plan = DctPlan::new(16, FrequencyWeight::Exp2).unwrap();
        let a = Plane::new(48, 40, pixels.clone());
        let b = Plane::new(48, 40, pixels.iter().map(|p| p + offset).collect());
        let ta = frame_texture(&a, &plan);
        let tb = frame_texture(&b, &plan);
        prop_assert!(ta.energy >= 0.0);
        prop_assert!((ta.energy - tb.energy).abs() < 1e-9);
        prop_assert!((tb.brightness - ta.brightness - f64::from(offset)).abs() < 1e-9);
    }

    #[test]
    fn decode_order_is_topological(
        n in 1usize..200,
        gop_pow in 1u32..6,
        periods in 1usize..4,
    ) {
        let gop = 1usize << gop_pow;
        let cfg = GopConfig::new(gop, gop * periods).unwrap();
        let roles = classify_frames(n, &cfg).unwrap();
        let order = decode_order(&roles);
        prop_assert_eq!(order.len(), n);
        let mut pos = vec![usize::MAX; n];
        for (i, &k) in order.iter().enumerate() {
            prop_assert_eq!(pos[k], usize::MAX);
            pos[k] = i;
        }
        for r in &roles {
            prop_assert_eq!(r.refs.len(), r.frame_type.ref_count());
            for &p in &r.refs {
                prop_assert!(pos[p] < pos[r.frame_index]);
            }
            if r.frame_type == FrameType::B {
                prop_assert!(r.refs[0] < r.frame_index && r.frame_index < r.refs[1]);
            }
        }
    }

    #[test]
    fn refine_monotone_in_targets(
        q in 0.0f64..63.0,
        b_hat in 1.0f64..1e7,
        r1 in 0.01f64..100.0,
        r2 in 0.01f64..100.0,
        k in constants(),
    ) {
        prop_assume!((r1 - r2).abs() > 1e-6);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = qp_refine(q, b_hat, b_hat * lo, &k).unwrap();
        let b = qp_refine(q, b_hat, b_hat * hi, &k).unwrap();
        prop_assert!(b.q_bar < a.q_bar);
        prop_assert!(b.q_prime <= a.q_prime);
        let c = qp_refine(q, b_hat * hi, b_hat * hi, &k).unwrap();
        let d = qp_refine(q, b_hat * lo, b_hat * hi, &k).unwrap();
        prop_assert!(c.q_bar > d.q_bar);
    }

    #[test]
    fn refine_fixed_point_and_bound(
        q in 0.0f64..63.0,
        b_hat in 1.0f64..1e7,
        ratio in 0.01f64..100.0,
        k in constants(),
    ) {
        let r = qp_refine(q, b_hat, b_hat * ratio, &k).unwrap();
        let plain = r.q_bar.round().clamp(0.0, 63.0) as i32;
        prop_assert!(r.q_prime >= plain);
        if r.q_bar >= f64::from(k.q_start) {
            prop_assert_eq!(r.q_prime, plain);
        }
    }

    #[test]
    fn allocation_conserves_target(
        preds in prop::collection::vec(1.0f64..1e6, 1..64),
        target in 1.0f64..1e8,
    ) {
        let shares = allocate_gop(target, &preds).unwrap();
        let sum: f64 = shares.iter().sum();
        prop_assert!((sum - target).abs() <= 1.0);
        let total: f64 = preds.iter().sum();
        for (s, p) in shares.iter().zip(&preds).take(preds.len() - 1) {
            prop_assert!((s - target * p / total).abs() <= 1e-9 * target);
        }
    }

    #[test]
    fn compensation_floor_and_carry(
        deficit in -1e7f64..1e7,
        target in 1.0f64..1e7,
        strength in 0.01f64..=1.0,
    ) {
        let c = compensate(deficit, target, strength);
        prop_assert!(c.target >= 0.1 * target - 1e-9);
        prop_assert!(c.carried >= 0.0);
        let applied = (target - c.target) / strength;
        prop_assert!((applied + c.carried - deficit).abs() <= 1e-6 * (1.0 + deficit.abs()));
    }

    #[test]
    fn bd_rate_antisymmetry(
        base in 100.0f64..1e5,
        steps in prop::collection::vec(0.2f64..1.0, 3),
        dq in prop::collection::vec(0.5f64..3.0, 3),
        shift in -0.3f64..0.3,
        qshift in -0.5f64..0.5,
    ) {
        let mut a = vec![RdPoint::new(base, 30.0)];
        for i in 0..3 {
            let p = a[i];
            a.push(RdPoint::new(p.rate * 10f64.powf(steps[i]), p.quality + dq[i]));
        }
        let t: Vec<RdPoint> = a
            .iter()
            .map(|p| RdPoint::new(p.rate * 10f64.powf(shift), p.quality + qshift))
            .collect();
        let x = bd_rate(&a, &t).unwrap();
        let y = bd_rate(&t, &a).unwrap();
        prop_assert!(((1.0 + x / 100.0) * (1.0 + y / 100.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pchip_integral_matches_dense_sum(
        ys in prop::collection::vec(-5.0f64..5.0, 4..8),
        a in 0.0f64..0.4,
        b in 0.6f64..1.0,
    ) {
        let n = ys.len();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let p = Pchip::new(xs, ys).unwrap();
        let m = 20_000;
        let h = (b - a) / m as f64;
        let mut dense = 0.5 * (p.eval(a) + p.eval(b));
        for i in 1..m {
            dense += p.eval(a + i as f64 * h);
        }
        dense *= h;
        prop_assert!((p.integral(a, b) - dense).abs() < 1e-6);
    }

    #[test]
    fn metric_ranges(
        truth in prop::collection::vec(1.0f64..1e6, 2..50),
        noise in prop::collection::vec(-0.5f64..0.5, 50),
    ) {
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t * (1.0 + e)).collect();
        prop_assert!(mape(&truth, &pred).unwrap() <= 50.0 + 1e-9);
        if let Ok(v) = r2(&truth, &pred) {
            prop_assert!(v <= 1.0);
        }
    }

    #[test]
    fn bd_rate_scale_invariance(
        rates in prop::collection::vec(0.1f64..0.8, 4),
        shift in -0.2f64..0.2,
        scale in 1e-3f64..1e3,
    ) {
        let mut a = Vec::new();
        let mut r = 1000.0;
        for (i, step) in rates.iter().enumerate() {
            r *= 10f64.powf(*step);
            a.push(RdPoint::new(r, 30.0 + 2.0 * i as f64 + step));
        }
        let t: Vec<RdPoint> = a.iter().map(|p| RdPoint::new(p.rate * 10f64.powf(shift), p.quality)).collect();
        let sa: Vec<RdPoint> = a.iter().map(|p| RdPoint::new(p.rate * scale, p.quality)).collect();
        let st: Vec<RdPoint> = t.iter().map(|p| RdPoint::new(p.rate * scale, p.quality)).collect();
        let base = bd_rate(&a, &t).unwrap();
        prop_assert!((bd_rate(&sa, &st).unwrap() - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn metrics_are_permutation_invariant(
        pairs in prop::collection::vec((1.0f64..1e4, 1.0f64..1e4), 2..40),
        seed in any::<u64>(),
    ) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..t.len()).collect();
        let n = idx.len();
        for i in (1..n).rev() {
            idx.swap(i, (seed.rotate_left(i as u32) % (i as u64 + 1)) as usize);
        }
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        prop_assert!((mape(&t, &p).unwrap() - mape(&tp, &pp).unwrap()).abs() < 1e-9);
        if let (Ok(a), Ok(b)) = (r2(&t, &p), r2(&tp, &pp)) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn oracle_bits_decrease_with_qp(
        alpha in 1.0f64..1e6,
        betas in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        gamma in 1.0f64..12.0,
        drivers in (0.0f64..50.0, 0.0f64..50.0, 0.0f64..20.0),
        q in 0i32..63,
    ) {
        let c = OracleCoefficients { alpha, beta_e: betas.0, beta_c: betas.1, beta_h: betas.2, gamma };
        let params = SyntheticOracleParams { i: c, p: c, b: c, epsilon: 0.0, seed: 0 };
        let d = OracleDrivers { e_y: drivers.0, e_chroma: drivers.1, h_sum: drivers.2 };
        for ft in FrameType::ALL {
            prop_assert!(params.bits("s", 0, ft, d, q + 1) < params.bits("s", 0, ft, d, q));
        }
    }

    #[test]
    fn kfold_partitions_sequences(n in 5usize..60, k in 2usize..6, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("seq{i}")).collect();
        let folds = kfold_split(&ids, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = std::collections::BTreeSet::new();
        for f in &folds {
            prop_assert!(f.train.is_disjoint(&f.test));
            prop_assert_eq!(f.train.len() + f.test.len(), n);
            for t in &f.test {
                prop_assert!(seen.insert(t.clone()));
            }
        }
        prop_assert_eq!(seen.len(), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_trees_are_valid_and_bounded(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..60),
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 - r[1] + (r[2] * 3.0).sin()).collect();
        let x = Matrix::from_rows(&rows, 3);
        let params = ForestParams { n_estimators: 8, ..ForestParams::default() };
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let model = fit_forest(&x, &y, names, params, seed).unwrap();
        let limits: TreeLimits = params.limits(3);
        prop_assert!(model.validate().is_ok());
        for t in &model.trees {
            prop_assert!(t.validate(&limits).is_ok());
        }
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for r in &rows {
            let p = model.predict_row(r).unwrap();
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }

    #[test]
    fn linear_residuals_are_orthogonal(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 6..60),
        noise in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let y: Vec<f64> = rows.iter().zip(&noise).map(|(r, e)| 3.0 * r[0] - r[1] + 5.0 + e).collect();
        let x = Matrix::from_rows(&rows, 2);
        let m = fit_linear(&x, &y, vec!["a".into(), "b".into()]);
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let pred = m.predict(&x).unwrap();
        let res: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let scale: f64 = y.iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!(res.iter().sum::<f64>().abs() < 1e-6 * scale);
        for j in 0..2 {
            let dot: f64 = rows.iter().zip(&res).map(|(r, e)| r[j] * e).sum();
            prop_assert!(dot.abs() < 1e-6 * scale * 10.0);
        }
    }
}
