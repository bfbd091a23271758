use agrpose::config::{Projection, RunConfig};
use agrpose::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn json_round_trip(
        lr in 1e-6..1e-1f64,
        batch in 1usize..64,
        epochs in 0usize..50,
        sigma in 10.0..1000.0f64,
        naive in any::<bool>(),
        seed in any::<u64>(),
        jitter in 0.0..500.0f64,
    ) {
        let mut c = RunConfig::desk();
        c.train.lr = lr;
        c.train.batch = batch;
        c.train.epochs = epochs;
        c.train.pen_center_jitter_mm = jitter;
        c.model.gate_sigma = sigma;
        c.model.projection = if naive { Projection::Naive } else { Projection::Gated };
        c.synth.seed = seed;
        prop_assert!(c.validate().is_ok());
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

#[test]
fn profiles_validate_and_differ() {
    let desk = RunConfig::profile("desk").unwrap();
    let full = RunConfig::profile("full").unwrap();
    desk.validate().unwrap();
    full.validate().unwrap();
    assert_ne!(desk, full);
    assert!(matches!(RunConfig::profile("huge"), Err(Error::Config { .. })));
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
    v["train"]["learning_rate"] = serde_json::json!(0.1);
    assert!(serde_json::from_value::<RunConfig>(v).is_err());
}

#[test]
fn invalid_values_name_their_path() {
    let cases: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
        ("train.batch", Box::new(|c| c.train.batch = 0)),
        ("train.lr", Box::new(|c| c.train.lr = f64::NAN)),
        ("model.gate_sigma", Box::new(|c| c.model.gate_sigma = 0.0)),
        ("train.pen_center_jitter_mm", Box::new(|c| c.train.pen_center_jitter_mm = -1.0)),
    ];
    for (path, edit) in cases {
        let mut c = RunConfig::desk();
        edit(&mut c);
        match c.validate() {
            Err(Error::Config { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{path}: {other:?}"),
        }
    }
}
