use unlearn_core::dataset::{generate_toy, load_uds, save_uds, ToySpec};
use unlearn_core::model::{load_checkpoint, save_checkpoint, Architecture, Classifier};
use unlearn_core::poison::{load_upr, save_upr, synthetic_noise, PerturbationBudget, SyntheticConfig};
use unlearn_core::rng::SeededRng;

fn small() -> ToySpec {
    ToySpec { train: 40, val: 10, test: 10, ..ToySpec::default() }
}

#[test]
fn formats_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _, _) = generate_toy(&small()).unwrap();

    let uds = dir.path().join("train.uds");
    save_uds(&train, &uds).unwrap();
    let once = load_uds(&uds).unwrap();
    assert_eq!(once, train.quantized());
    save_uds(&once, &uds).unwrap();
    assert_eq!(load_uds(&uds).unwrap(), once);

    let mut rng = SeededRng::new(4);
    let noise = synthetic_noise(&train, PerturbationBudget::new(8.0 / 255.0).unwrap(), SyntheticConfig::default(), &mut rng).unwrap();
    let upr = dir.path().join("noise.upr");
    save_upr(&noise, &upr).unwrap();
    assert_eq!(load_upr(&upr).unwrap(), noise);

    let model = Classifier::new(Architecture::small_cnn(), train.dims(), 10, &mut rng).unwrap();
    let umc = dir.path().join("model.umc");
    save_checkpoint(&model, &umc).unwrap();
    assert_eq!(load_checkpoint(&umc).unwrap(), model);
}

#[test]
fn missing_and_corrupt_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.uds");
    assert_eq!(load_uds(&missing).unwrap_err().exit_code(), 3);
    let bad = dir.path().join("bad.uds");
    std::fs::write(&bad, b"XXXX\0\0\0\0").unwrap();
    assert_eq!(load_uds(&bad).unwrap_err().exit_code(), 3);
}
