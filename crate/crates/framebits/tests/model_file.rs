use std::fs;

use framebits::model_file::{from_json, load_model, save_model, to_json, ModelFileError};
use framebits_core::linalg::Matrix;
use framebits_core::models::{fit_forest, fit_linear, BitPredictor, ForestParams};
use framebits_core::rng::stream;
use framebits_core::FrameType;
use rand::Rng;

fn data(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = stream(seed, &[]);
    let mut x = Matrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        y.push(2.0 * row[0] - row[1] * row[2] + 30.0);
        for (j, v) in row.into_iter().enumerate() {
            x.set(i, j, v);
        }
    }
    (x, y)
}

fn names() -> Vec<String> {
    ["q", "E_Y", "L_Y"].map(String::from).to_vec()
}

fn forest() -> BitPredictor {
    let (x, y) = data(200, 1);
    let params = ForestParams {
        n_estimators: 12,
        ..ForestParams::default()
    };
    let mut m = fit_forest(&x, &y, names(), params, 3).unwrap();
    m.frame_type = Some(FrameType::P);
    BitPredictor::Forest(m)
}

#[test]
fn forest_round_trip_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model_P.json");
    let model = forest();
    save_model(&path, &model).unwrap();
    let back = load_model(&path).unwrap();
    let (x, _) = data(1000, 99);
    assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());
    assert_eq!(back.frame_type(), Some(FrameType::P));
    assert_eq!(to_json(&model), to_json(&back));
}

#[test]
fn linear_round_trip() {
    let (x, y) = data(50, 2);
    let model = BitPredictor::Linear(fit_linear(&x, &y, names()).unwrap());
    let back = from_json(std::path::Path::new("m"), &to_json(&model)).unwrap();
    let (t, _) = data(100, 5);
    assert_eq!(model.predict(&t).unwrap(), back.predict(&t).unwrap());
}

#[test]
fn truncated_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let text = to_json(&forest());
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_model(&path), Err(ModelFileError::CorruptFile { .. })));
}

#[test]
fn unknown_version_is_rejected() {
    let text = to_json(&forest()).replacen("\"version\":1", "\"version\":7", 1);
    assert!(text.contains("\"version\":7"));
    let err = from_json(std::path::Path::new("m"), &text).unwrap_err();
    assert!(matches!(err, ModelFileError::VersionMismatch { found: 7, .. }), "{err}");
}

#[test]
fn inconsistent_widths_are_corrupt() {
    let text = to_json(&forest()).replacen("\"L_Y\"", "\"L_Y\",\"extra\"", 1);
    let err = from_json(std::path::Path::new("m"), &text).unwrap_err();
    assert!(matches!(err, ModelFileError::CorruptFile { .. }), "{err}");
}
