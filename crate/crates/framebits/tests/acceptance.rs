//! Acceptance gates. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs without the libtest harness so the report is
//! never captured and the timed gates run one after another.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use framebits::config::{ModelKind, RunConfig};
use framebits::model_file::to_json;
use framebits::parallel::{analyze_sequence_par, fit_forest_par, with_threads};
use framebits::pipeline::{cross_validate, synthetic_corpus, synthetic_features, sweep_truth, train_model, Corpus};
use framebits::yuv::{open_sequence, YuvWriter};
use framebits_core::complexity::{analyze_sequence, block_dct, ComplexityConfig, DctPlan, frame_texture};
use framebits_core::dataset::{build_matrix, SequenceFeatures, TrainingSet};
use framebits_core::gop::{cascade_qps, classify_frames, decode_order, GopConfig};
use framebits_core::metrics::{bd_rate, RdPoint};
use framebits_core::models::{fit_forest, importance, BitPredictor, ForestParams, ImportanceMethod};
use framebits_core::plane::MemorySequence;
use framebits_core::ratecontrol::{
    allocate_gop, qp_refine, simulate_session, CompensationMode, OracleBackend, PredictorSet, RcBackend, RcConstants, SessionConfig,
};
use framebits_core::rng::stream;
use framebits_core::synthetic::{SceneParams, SyntheticSequence};
use framebits_core::{FramePlanes, FrameSource, FrameType, Plane, VideoGeometry};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Direct O(w⁴) evaluation of the orthonormal 2-D DCT-II definition.
fn naive_dct(block: &[f64], cos: &[f64], w: usize) -> Vec<f64> {
    let n = w as f64;
    let alpha = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    let mut out = vec![0.0; w * w];
    for u in 0..w {
        for v in 0..w {
            let mut s = 0.0;
            for x in 0..w {
                for y in 0..w {
                    s += block[x * w + y] * cos[u * w + x] * cos[v * w + y];
                }
            }
            out[u * w + v] = alpha(u) * alpha(v) * s;
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, &[]);
    let w = 32;
    let cos: Vec<f64> = (0..w * w)
        .map(|i| (std::f64::consts::PI * (2 * (i % w) + 1) as f64 * (i / w) as f64 / (2.0 * w as f64)).cos())
        .collect();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let block: Vec<f64> = (0..w * w).map(|_| f64::from(rng.random_range(0u8..=255))).collect();
        let fast = block_dct(&block, w);
        let slow = naive_dct(&block, &cos, w);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    let plan = DctPlan::new(w, Default::default()).unwrap();
    let mut constant_zero = true;
    for c in [0u8, 1, 77, 128, 255] {
        let plane = Plane::filled(64, 64, c);
        constant_zero &= frame_texture(&plane, &plan).energy == 0.0;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-9 && constant_zero && elapsed < Duration::from_secs(10),
        format!("max |err| {worst:.2e}, constant blocks E=0: {constant_zero}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let cfg = ComplexityConfig::default();
    let geometry = VideoGeometry::new(96, 64, 8).unwrap().with_frame_count(40);
    let still = SyntheticSequence::new(geometry, SceneParams::random(3, 0).still());
    let recs = analyze_sequence(&still, &cfg).unwrap();
    let h_zero = recs.iter().all(|r| r.h_by_gap.iter().flatten().all(|&h| h == 0.0));
    let h_count: usize = recs.iter().map(|r| r.h_by_gap.iter().flatten().count()).sum();

    let mut const_ok = true;
    for c in [0u8, 16, 100, 235, 255] {
        let frames = (0..3).map(|i| FramePlanes::constant(i, &geometry, c, 255 - c, c / 2)).collect();
        let seq = MemorySequence::new(geometry.with_frame_count(3), frames).unwrap();
        for r in analyze_sequence(&seq, &cfg).unwrap() {
            const_ok &= (r.l_y - f64::from(c)).abs() < 1e-9
                && (r.l_u - f64::from(255 - c)).abs() < 1e-9
                && (r.l_v - f64::from(c / 2)).abs() < 1e-9
                && r.e_y == 0.0
                && r.e_u == 0.0
                && r.e_v == 0.0;
        }
    }

    let plan = DctPlan::new(cfg.block_size, cfg.weight).unwrap();
    let mut rng = stream(2, &[]);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let (wd, ht) = (rng.random_range(16..120usize), rng.random_range(16..90usize));
        let offset = rng.random_range(1..=55u8);
        let base = Plane::from_fn(wd, ht, |_, _| rng.random_range(0..=200u8));
        let shifted = Plane::from_fn(wd, ht, |r, c| base.get(r, c) + offset);
        let (a, b) = (frame_texture(&base, &plan).energy, frame_texture(&shifted, &plan).energy);
        worst_rel = worst_rel.max((a - b).abs() / a.max(1e-300));
    }
    outcome(
        h_zero && h_count > 0 && const_ok && worst_rel < 1e-9,
        format!("static h=0 over {h_count} values: {h_zero}; constant planes: {const_ok}; offset max rel diff {worst_rel:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let gop = GopConfig::new(32, 64).unwrap();
    let roles = classify_frames(65, &gop).unwrap();
    let distances: BTreeSet<usize> = roles.iter().flat_map(|r| r.ref_distances()).collect();
    let expected: BTreeSet<usize> = [1, 2, 4, 8, 16, 32].into();

    let roles = classify_frames(200, &gop).unwrap();
    let order = decode_order(&roles);
    let mut position = vec![usize::MAX; roles.len()];
    for (p, &k) in order.iter().enumerate() {
        position[k] = p;
    }
    let permutation = order.len() == roles.len() && position.iter().all(|&p| p != usize::MAX);
    let topological = permutation && roles.iter().all(|r| r.refs.iter().all(|&x| position[x] < position[r.frame_index]));
    outcome(
        distances == expected && topological,
        format!("distances {distances:?}; decode order over 200 frames topological: {topological}"),
    )
}

fn criterion_4(set: &TrainingSet) -> Outcome {
    let params = ForestParams::default();
    let names = set.feature_names.clone();
    let a = fit_forest_par(&set.x, &set.y, names.clone(), params, 7).unwrap();
    let b = fit_forest_par(&set.x, &set.y, names.clone(), params, 7).unwrap();
    let serial = fit_forest(&set.x, &set.y, names, params, 7).unwrap();
    let limits = params.limits(set.x.cols());
    let trees_ok = a.validate().is_ok()
        && a.trees
            .iter()
            .all(|t| t.validate(&limits).is_ok() && t.depth() <= 16);
    let json = |m: &framebits_core::models::ForestModel| to_json(&BitPredictor::Forest(m.clone()));
    let (ja, jb, js) = (json(&a), json(&b), json(&serial));
    let max_depth = a.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
    outcome(
        trees_ok && ja == jb && ja == js,
        format!(
            "{} trees valid: {trees_ok} (max depth {max_depth}); repeat identical: {}; serial == parallel: {}",
            a.trees.len(),
            ja == jb,
            ja == js
        ),
    )
}

fn criterion_5(corpus: &Corpus, cfg: &RunConfig, started: Instant) -> Outcome {
    let floors = [(FrameType::I, 0.90), (FrameType::P, 0.85), (FrameType::B, 0.75)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (ft, floor) in floors {
        let cv = |kind, chroma| {
            let set = build_matrix(&corpus.sequences, &corpus.truth, ft, chroma).unwrap();
            cross_validate(&set, kind, cfg.forest, 5, cfg.seed).unwrap()
        };
        let rf = cv(ModelKind::Forest, true);
        let lin = cv(ModelKind::Linear, true);
        let rf_nc = cv(ModelKind::Forest, false);
        let ok_floor = rf.r2 >= floor;
        let ok_lin = ft == FrameType::I || rf.r2 > lin.r2;
        let ok_chroma = rf_nc.r2 <= rf.r2;
        pass &= ok_floor && ok_lin && ok_chroma;
        parts.push(format!(
            "{ft}: RF R2 {:.3} (pooled {:.3}, floor {floor}) MAPE {:.1}%, linear {:.3}, no-chroma {:.3}",
            rf.r2, rf.pooled_r2, rf.mape, lin.r2, rf_nc.r2
        ));
    }
    let elapsed = started.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    outcome(pass, format!("{}; {:.0} s", parts.join("; "), elapsed.as_secs_f64()))
}

fn criterion_6() -> Outcome {
    let k = RcConstants {
        c_low: 1.0,
        c_high: 0.5,
        q_start: 24,
    };
    let e1 = qp_refine(30.0, 1000.0, 1000.0, &k).unwrap();
    let e2 = qp_refine(25.0, 1000.0, 2000.0, &k).unwrap();
    let e3 = qp_refine(0.5, 1000.0, 4000.0, &k).unwrap();
    let examples = (e1.q_bar - 30.0).abs() <= 1e-12
        && e1.q_prime == 30
        && (e2.q_bar - 20.0).abs() <= 1e-12
        && e2.q_prime == 22
        && (e3.q_bar + 1.5).abs() <= 1e-12;

    let mut rng = stream(6, &[]);
    let mut monotone = true;
    let mut fixed_point = true;
    for _ in 0..100_000 {
        let k = RcConstants {
            c_low: rng.random_range(0.05..3.0),
            c_high: rng.random_range(0.0..1.0),
            q_start: rng.random_range(0..=63),
        };
        let q = rng.random_range(0.0..63.0);
        let b_hat = rng.random_range(1.0..1e7);
        let lo = rng.random_range(1.0..1e7);
        let hi = lo * rng.random_range(1.0..8.0);
        let a = qp_refine(q, b_hat, lo, &k).unwrap();
        let b = qp_refine(q, b_hat, hi, &k).unwrap();
        monotone &= b.q_bar <= a.q_bar && b.q_prime <= a.q_prime;
        for r in [a, b] {
            if r.q_bar >= f64::from(k.q_start) {
                let expect = framebits_core::ratecontrol::round_half_away(r.q_bar).clamp(0.0, 63.0) as i32;
                fixed_point &= r.q_prime == expect;
            }
        }
    }
    outcome(
        examples && monotone && fixed_point,
        format!("examples: {examples}; monotone in b': {monotone}; fixed point above q_start: {fixed_point} (1e5 draws)"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = stream(7, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=64);
        let preds: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1e6)).collect();
        let target = rng.random_range(1e3..1e9);
        let alloc = allocate_gop(target, &preds).unwrap();
        worst = worst.max((alloc.iter().sum::<f64>() - target).abs());
    }
    outcome(worst <= 1.0, format!("max |sum - target| {worst:.2e} bits over 1e4 GOPs"))
}

fn fit_predictors(corpus: &Corpus, cfg: &RunConfig) -> PredictorSet {
    let mut set = PredictorSet::default();
    for ft in FrameType::ALL {
        let data = build_matrix(&corpus.sequences, &corpus.truth, ft, true).unwrap();
        set.set(ft, train_model(&data, ModelKind::Forest, cfg.forest, cfg.seed).unwrap());
    }
    set
}

fn oracle_bitrate(seq: &SequenceFeatures, cfg: &RunConfig, base: i32) -> f64 {
    let qps = cascade_qps(&seq.roles, base, &cfg.dataset.level_offsets);
    let mut oracle = OracleBackend::new(seq, cfg.oracle.clone()).unwrap();
    let total: f64 = seq
        .roles
        .iter()
        .map(|r| oracle.encode(r.frame_index, r.frame_type, qps[r.frame_index]).unwrap().bits)
        .sum();
    total / seq.frame_count() as f64 * cfg.video.frame_rate
}

/// Worst absolute deviation over 321-frame sequences and three targets.
fn closed_loop(cfg: &RunConfig, predictors: &PredictorSet, mode: CompensationMode) -> (f64, usize) {
    let mut long = cfg.clone();
    long.synth.frames = 321;
    let mut worst: f64 = 0.0;
    let mut gops = 0;
    for index in 1000..1003 {
        let seq = synthetic_features(&long, index).unwrap();
        for base in [27, 32, 37] {
            let target = oracle_bitrate(&seq, cfg, base);
            let mut session = SessionConfig::new(target, cfg.video.frame_rate, cfg.rc_constants(cfg.synth.height));
            session.level_offsets = cfg.dataset.level_offsets.clone();
            session.compensation = mode;
            let mut backend = OracleBackend::new(&seq, cfg.oracle.clone()).unwrap();
            let report = simulate_session(&seq, predictors, &session, &mut backend).unwrap();
            gops = report.gop_count;
            worst = worst.max(report.deviation_percent.abs());
        }
    }
    (worst, gops)
}

/// Gated with per-frame compensation; the GOP-only numbers are reported
/// alongside because the last GOP's prediction bias is never corrected there.
fn criterion_8(noisy: &Corpus, noisy_predictors: &PredictorSet, cfg: &RunConfig) -> Outcome {
    let mut clean_cfg = cfg.clone();
    clean_cfg.oracle.epsilon = 0.0;
    let clean = Corpus {
        sequences: noisy.sequences.clone(),
        truth: noisy
            .sequences
            .iter()
            .flat_map(|s| sweep_truth(&clean_cfg, s).unwrap())
            .collect(),
    };
    let clean_predictors = fit_predictors(&clean, &clean_cfg);
    let (dev_clean, gops) = closed_loop(&clean_cfg, &clean_predictors, CompensationMode::Frame);
    let (dev_noisy, _) = closed_loop(cfg, noisy_predictors, CompensationMode::Frame);
    let (gop_clean, _) = closed_loop(&clean_cfg, &clean_predictors, CompensationMode::Gop);
    let (gop_noisy, _) = closed_loop(cfg, noisy_predictors, CompensationMode::Gop);
    outcome(
        dev_clean < 1.0 && dev_noisy < 3.0 && gops >= 10,
        format!(
            "{gops} GOPs x 9 runs, frame compensation worst |deviation| noise-free {dev_clean:.3}% (< 1%), \
             eps=0.1 {dev_noisy:.3}% (< 3%); GOP-only compensation {gop_clean:.3}% / {gop_noisy:.3}%"
        ),
    )
}

/// Smooth, increasing, concave rate-quality curve with 4 to 6 points.
fn random_curve<R: Rng>(rng: &mut R) -> Vec<RdPoint> {
    let n = rng.random_range(4..=6);
    let r0: f64 = rng.random_range(50.0..500.0);
    let (a, b, c) = (rng.random_range(20.0..35.0), rng.random_range(2.0..8.0), rng.random_range(-0.3..0.0));
    let mut rate = r0;
    (0..n)
        .map(|_| {
            rate *= rng.random_range(1.3..2.2);
            let l = (rate / r0).ln();
            RdPoint::new(rate, a + b * l + c * l * l)
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let curve: Vec<RdPoint> = [100.0, 200.0, 400.0, 800.0]
        .iter()
        .zip([30.0, 33.0, 36.0, 38.5])
        .map(|(&r, q)| RdPoint::new(r, q))
        .collect();
    let identical = bd_rate(&curve, &curve).unwrap();
    let doubled: Vec<RdPoint> = curve.iter().map(|p| RdPoint::new(2.0 * p.rate, p.quality)).collect();
    let shift = bd_rate(&curve, &doubled).unwrap();

    let mut rng = stream(9, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (x, y) = (random_curve(&mut rng), random_curve(&mut rng));
        let (Ok(ab), Ok(ba)) = (bd_rate(&x, &y), bd_rate(&y, &x)) else {
            continue;
        };
        worst = worst.max(((1.0 + ab / 100.0) * (1.0 + ba / 100.0) - 1.0).abs());
    }
    outcome(
        identical == 0.0 && (shift - 100.0).abs() <= 0.01 && worst < 0.002,
        format!("identical {identical}%, 2x rate {shift:.6}%, antisymmetry max |(1+a)(1+b)-1| {worst:.1e}"),
    )
}

fn criterion_10(corpus: &Corpus, predictors: &PredictorSet) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for ft in FrameType::ALL {
        let Some(BitPredictor::Forest(model)) = predictors.get(ft) else {
            return outcome(false, format!("{ft}: no forest"));
        };
        let data = build_matrix(&corpus.sequences, &corpus.truth, ft, true).unwrap();
        let report = importance(model, &data.x, &data.y, ImportanceMethod::Impurity).unwrap();
        let top = report.top().unwrap_or("-").to_string();
        pass &= top == "q";
        parts.push(format!("{ft}: top {top} ({:.2})", report.scores[report.ranking()[0]]));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_11() -> Outcome {
    let geometry = VideoGeometry::new(1920, 1080, 8).unwrap().with_frame_count(8);
    let source = SyntheticSequence::new(geometry, SceneParams::random(11, 0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hd.yuv");
    let rendered: Vec<FramePlanes> = (0..8).map(|k| source.read_frame(k).unwrap()).collect();
    let mut writer = YuvWriter::create(&path, geometry).unwrap();
    for k in 0..64 {
        writer.write_frame(&rendered[k % rendered.len()]).unwrap();
    }
    writer.finish().unwrap();
    let file = open_sequence(&path, 1920, 1080).unwrap();
    let cfg = ComplexityConfig::default();
    let start = Instant::now();
    let records = with_threads(8, || analyze_sequence_par(&file, &cfg)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let fps = records.len() as f64 / secs;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        records.len() == 64 && fps >= 5.0,
        format!("64 frames 1920x1080 in {secs:.2} s = {fps:.1} fps (8 workers, {cores} cores available)"),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    results.push((1, "DCT correctness", criterion_1()));
    results.push((2, "feature identities", criterion_2()));
    results.push((3, "GOP structure", criterion_3()));

    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    let started = Instant::now();
    let corpus = synthetic_corpus(&cfg).unwrap();
    let c5 = criterion_5(&corpus, &cfg, started);
    let p_set = build_matrix(&corpus.sequences, &corpus.truth, FrameType::P, true).unwrap();
    results.push((4, "forest training contract", criterion_4(&p_set)));
    results.push((5, "synthetic-oracle regression", c5));
    results.push((6, "QP refinement", criterion_6()));
    results.push((7, "allocation conservation", criterion_7()));
    let predictors = fit_predictors(&corpus, &cfg);
    results.push((8, "closed-loop rate stability", criterion_8(&corpus, &predictors, &cfg)));
    results.push((9, "BD-rate", criterion_9()));
    results.push((10, "importance sanity", criterion_10(&corpus, &predictors)));
    results.push((11, "analysis throughput", criterion_11()));

    results.sort_by_key(|r| r.0);
    for (id, name, o) in &results {
        println!("{} criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
