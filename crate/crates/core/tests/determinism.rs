mod common;

use common::short_config;
use sedet_core::layout::FeatureLayout;
use sedet_core::models::{ModelKind, TrainConfig, TrainedModel};
use sedet_core::pipeline::{cross_validate, evaluate_model, fit_model, Corpus};
use sedet_core::synth::generate_interactions;
use sedet_core::windowing::WindowConfig;

fn corpus<T: sedet_core::scalar::Real>(seed: u64) -> Corpus<T> {
    let xs = generate_interactions(&short_config(seed), 9).unwrap();
    Corpus::from_synthetic(&xs, &FeatureLayout::standard(), 500, Some(1000)).unwrap()
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        hidden: [8, 2],
        seed,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_models_and_metrics() {
    let c = corpus::<f64>(50);
    let wc = WindowConfig::new(2000, 1000, 500).unwrap();
    for kind in ModelKind::ALL {
        let a = fit_model(kind, &c, &c.ids(), &wc, &quick(3)).unwrap();
        let b = fit_model(kind, &c, &c.ids(), &wc, &quick(3)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{kind}");
        let ra = evaluate_model(&a, &c, &c.ids(), 11).unwrap();
        let rb = evaluate_model(&b, &c, &c.ids(), 11).unwrap();
        assert_eq!(ra, rb, "{kind}");
        if kind.is_network() {
            let other = fit_model(kind, &c, &c.ids(), &wc, &quick(4)).unwrap();
            assert_ne!(a.to_json().unwrap(), other.to_json().unwrap(), "{kind}");
        }
    }
}

#[test]
fn cross_validation_is_reproducible() {
    let c = corpus::<f64>(51);
    let wc = WindowConfig::new(1000, 500, 500).unwrap();
    let a = cross_validate(ModelKind::Gru, &c, &wc, &quick(5), 3, 8).unwrap();
    let b = cross_validate(ModelKind::Gru, &c, &wc, &quick(5), 3, 8).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn save_and_load_change_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus::<f64>(52);
    let wc = WindowConfig::new(1500, 500, 500).unwrap();
    for kind in ModelKind::ALL {
        let m = fit_model(kind, &c, &c.ids(), &wc, &quick(6)).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        m.save(&path).unwrap();
        let back = TrainedModel::<f64>::load(&path).unwrap();
        assert_eq!(back, m, "{kind}");
        assert_eq!(back.to_json().unwrap(), m.to_json().unwrap());
        assert_eq!(evaluate_model(&back, &c, &c.ids(), 2).unwrap(), evaluate_model(&m, &c, &c.ids(), 2).unwrap());
    }
}

#[test]
fn single_precision_round_trips_too() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus::<f32>(53);
    let wc = WindowConfig::new(1000, 0, 500).unwrap();
    for kind in [ModelKind::Lstm, ModelKind::LogReg] {
        let m = fit_model(kind, &c, &c.ids(), &wc, &quick(7)).unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = TrainedModel::<f32>::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(evaluate_model(&back, &c, &c.ids(), 2).unwrap(), evaluate_model(&m, &c, &c.ids(), 2).unwrap());
    }
}

#[test]
fn loading_checks_the_window_and_layout() {
    let c = corpus::<f64>(54);
    let wc = WindowConfig::new(1000, 500, 500).unwrap();
    let m = fit_model(ModelKind::LogReg, &c, &c.ids(), &wc, &quick(1)).unwrap();
    let mut okao = FeatureLayout::okao();
    okao.name = "other".into();
    assert!(m.check_layout(&okao).is_err());
    let mut json: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    json["window_config"]["eta_ms"] = 2000.into();
    assert!(TrainedModel::<f64>::from_json(&json.to_string()).is_err());
}
