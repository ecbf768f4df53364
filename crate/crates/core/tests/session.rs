use framebits_core::complexity::{analyze_sequence, ComplexityConfig};
use framebits_core::dataset::{build_matrix, qp_sweep, synth_encode, FrameType, SequenceFeatures, SyntheticOracleParams};
use framebits_core::gop::{cascade_qps, classify_frames, GopConfig, DEFAULT_LEVEL_OFFSETS};
use framebits_core::models::{fit_forest, BitPredictor, ForestParams, LabelTransform};
use framebits_core::ratecontrol::{
    qp_refine, simulate_session, BackendBits, CompensationMode, FirstPassQp, OracleBackend,
    PredictorSet, RcBackend, RcConstants, RcError, SessionConfig,
};
use framebits_core::synthetic::{SceneParams, SyntheticSequence};
use framebits_core::VideoGeometry;
use proptest::prelude::*;

fn sequence(id: u64, frames: usize, gop: GopConfig) -> SequenceFeatures {
    let g = VideoGeometry::new(64, 48, 8).unwrap().with_frame_count(frames);
    let src = SyntheticSequence::new(g, SceneParams::random(11, id));
    let cfg = ComplexityConfig { block_size: 16, ..ComplexityConfig::default() };
    let recs = analyze_sequence(&src, &cfg).unwrap();
    SequenceFeatures::new(format!("seq{id}"), recs, classify_frames(frames, &gop).unwrap()).unwrap()
}

/// Small log-label forests fitted on oracle data.
fn predictors(gop: GopConfig, oracle: &SyntheticOracleParams) -> PredictorSet {
    let seqs: Vec<_> = (0..10).map(|i| sequence(i, 33, gop)).collect();
    let mut truth = Vec::new();
    for s in &seqs {
        for base in qp_sweep(20, 50, 5) {
            let qps = cascade_qps(&s.roles, base, &DEFAULT_LEVEL_OFFSETS);
            truth.extend(synth_encode(s, oracle, &qps).unwrap());
        }
    }
    let mut set = PredictorSet::default();
    for ft in FrameType::ALL {
        let ts = build_matrix(&seqs, &truth, ft, true).unwrap();
        let params = ForestParams { n_estimators: 20, label: LabelTransform::Log, ..ForestParams::default() };
        let m = fit_forest(&ts.x, &ts.y, ts.feature_names.clone(), params, 0).unwrap();
        set.set(ft, BitPredictor::Forest(m));
    }
    set
}

struct Fixed(f64);

impl RcBackend for Fixed {
    fn encode(&mut self, _: usize, _: FrameType, _: i32) -> Result<BackendBits, RcError> {
        Ok(BackendBits { bits: self.0, interpolated: false })
    }
}

struct Scripted(Vec<f64>, usize);

impl RcBackend for Scripted {
    fn encode(&mut self, _: usize, _: FrameType, _: i32) -> Result<BackendBits, RcError> {
        let v = self.0[self.1 % self.0.len()];
        self.1 += 1;
        Ok(BackendBits { bits: v, interpolated: false })
    }
}

#[test]
fn single_frame_hitting_its_share_has_zero_deviation() {
    let gop = GopConfig::new(8, 16).unwrap();
    let oracle = SyntheticOracleParams::default();
    let preds = predictors(gop, &oracle);
    let seq = sequence(40, 1, gop);
    let cfg = SessionConfig::new(30_000.0, 30.0, RcConstants::default());
    let report = simulate_session(&seq, &preds, &cfg, &mut Fixed(1000.0)).unwrap();
    assert_eq!(report.decisions.len(), 1);
    assert_eq!(report.decisions[0].b_prime, 1000.0);
    assert_eq!(report.deviation_percent, 0.0);
}

#[test]
fn missing_model_is_reported() {
    let gop = GopConfig::new(8, 16).unwrap();
    let seq = sequence(41, 9, gop);
    let cfg = SessionConfig::new(30_000.0, 30.0, RcConstants::default());
    let err = simulate_session(&seq, &PredictorSet::default(), &cfg, &mut Fixed(1.0)).unwrap_err();
    assert!(matches!(err, RcError::MissingPredictor(_)));
}

#[test]
fn doubled_target_never_raises_qp() {
    let gop = GopConfig::new(8, 16).unwrap();
    let oracle = SyntheticOracleParams::default();
    let preds = predictors(gop, &oracle);
    let seq = sequence(42, 33, gop);
    let first = cascade_qps(&seq.roles, 32, &DEFAULT_LEVEL_OFFSETS);
    let predicted: f64 = preds.predict_sequence(&seq, &first).unwrap().iter().sum();
    let mut cfg = SessionConfig::new(2.0 * predicted, seq.frame_count() as f64, RcConstants::default());
    cfg.first_pass = FirstPassQp::Fixed(32);
    // a backend that exactly meets every prediction leaves no deficit to feed back
    let b_hat = preds.predict_sequence(&seq, &first).unwrap();
    let mut backend = Scripted(Vec::new(), 0);
    let order: Vec<usize> = framebits_core::ratecontrol::rc_gops(&seq).into_iter().flatten().collect();
    backend.0 = order.iter().map(|&k| 2.0 * b_hat[k]).collect();
    let report = simulate_session(&seq, &preds, &cfg, &mut backend).unwrap();
    for d in &report.decisions {
        assert!(d.q_prime <= d.q, "frame {}: {} > {}", d.frame_index, d.q_prime, d.q);
    }
}

#[test]
fn oracle_loop_tracks_target_and_is_deterministic() {
    let gop = GopConfig::new(8, 16).unwrap();
    let oracle = SyntheticOracleParams { epsilon: 0.0, ..SyntheticOracleParams::default() };
    let preds = predictors(gop, &oracle);
    let seq = sequence(43, 81, gop);
    for mode in [CompensationMode::Gop, CompensationMode::Frame] {
        let mut cfg = SessionConfig::new(400_000.0, 30.0, RcConstants::default());
        cfg.compensation = mode;
        let run = || {
            let mut backend = OracleBackend::new(&seq, oracle).unwrap();
            simulate_session(&seq, &preds, &cfg, &mut backend).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.deviation_percent.abs() < 5.0, "{mode:?}: {}", a.deviation_percent);
        let gap = a.total_achieved_bits - a.total_target_bits;
        assert!((gap - a.final_deficit).abs() < 1e-6 * a.total_target_bits);
    }
}

#[test]
fn refine_substitution_examples_hold_exactly() {
    let k = RcConstants { c_low: 1.0, c_high: 0.5, q_start: 24 };
    assert_eq!(qp_refine(30.0, 5.0, 5.0, &k).unwrap().q_bar, 30.0);
    assert_eq!(qp_refine(25.0, 1.0, 2.0, &k).unwrap().q_bar, 20.0);
    assert_eq!(qp_refine(0.5, 1.0, 4.0, &k).unwrap().q_bar, -1.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deficit_accounts_for_every_bit(
        script in prop::collection::vec(1.0f64..1e6, 1..40),
        target in 1e4f64..1e7,
        strength in 0.05f64..=1.0,
        per_frame in any::<bool>(),
    ) {
        let gop = GopConfig::new(8, 16).unwrap();
        let seq = SEQ.with(|s| s.clone());
        let preds = PREDS.with(|p| p.clone());
        let mut cfg = SessionConfig::new(target, 30.0, RcConstants::default());
        cfg.strength = strength;
        cfg.first_pass = FirstPassQp::Fixed(30);
        if per_frame {
            cfg.compensation = CompensationMode::Frame;
        }
        let _ = gop;
        let report = simulate_session(&seq, &preds, &cfg, &mut Scripted(script, 0)).unwrap();
        let gap = report.total_achieved_bits - report.total_target_bits;
        prop_assert!((gap - report.final_deficit).abs() <= 1e-9 * (report.total_achieved_bits + report.total_target_bits));
        let exact = 100.0 * gap / report.total_target_bits;
        prop_assert_eq!(report.deviation_percent, exact);
        for w in report.decisions.windows(2) {
            prop_assert!(w[0].gop <= w[1].gop);
        }
    }
}

thread_local! {
    static SEQ: SequenceFeatures = sequence(44, 41, GopConfig::new(8, 16).unwrap());
    static PREDS: PredictorSet = predictors(GopConfig::new(8, 16).unwrap(), &SyntheticOracleParams::default());
}

