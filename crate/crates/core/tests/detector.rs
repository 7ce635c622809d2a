use sedet_core::detector::{batch_decisions, detect_stream, write_decisions, Detector};
use sedet_core::error::Error;
use sedet_core::layout::{FeatureLayout, StreamId};
use sedet_core::models::{ModelKind, TrainConfig, TrainedModel};
use sedet_core::pipeline::{fit_model, Corpus};
use sedet_core::stream::StreamSample;
use sedet_core::synth::{generate_interactions, GeneratorConfig, InteractionLength, SyntheticInteraction};
use sedet_core::windowing::WindowConfig;

fn short_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        interaction: InteractionLength {
            mean_s: 90.0,
            sd_s: 20.0,
            min_s: 60.0,
            max_s: 150.0,
        },
        sed_segments_mean: 1.5,
        ..Default::default()
    }
}

fn corpus(n: usize, seed: u64) -> (Vec<SyntheticInteraction>, Corpus<f64>) {
    let xs = generate_interactions(&short_config(seed), n).unwrap();
    let c = Corpus::from_synthetic(&xs, &FeatureLayout::standard(), 500, Some(1000)).unwrap();
    (xs, c)
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        max_epochs: 2,
        hidden: [8, 2],
        seed: 9,
        ..Default::default()
    }
}

fn model(kind: ModelKind, c: &Corpus<f64>, wc: WindowConfig) -> TrainedModel<f64> {
    fit_model(kind, c, &c.ids(), &wc, &quick_train()).unwrap()
}

#[test]
fn stream_matches_batch_bit_for_bit() {
    let (xs, c) = corpus(8, 31);
    let layout = FeatureLayout::standard();
    for (kind, tau, eta) in [(ModelKind::Lstm, 5000, 2000), (ModelKind::Gru, 2000, 0), (ModelKind::LogReg, 3000, 1000), (ModelKind::Dnn, 0, 0)] {
        let m = model(kind, &c, WindowConfig::new(tau, eta, 500).unwrap());
        for x in &xs {
            let batch = batch_decisions(&m, &layout, &x.id, "m", x.duration_ms, &x.samples).unwrap();
            let stream = detect_stream(&m, &layout, &x.id, "m", Some(x.duration_ms), x.samples.iter().cloned().map(Ok)).unwrap();
            assert_eq!(batch.len(), stream.len(), "{kind} {}", x.id);
            for (b, s) in batch.iter().zip(&stream) {
                assert_eq!(b.p_sed.to_bits(), s.p_sed.to_bits(), "{kind} {} frame {}", x.id, b.frame);
                assert_eq!(b, s);
            }
            let n_frames = x.duration_ms.div_ceil(500) as usize;
            assert_eq!(stream.len(), n_frames - tau as usize / 500);
        }
    }
}

#[test]
fn decision_timing_follows_window_and_buffer() {
    let (xs, c) = corpus(4, 32);
    let layout = FeatureLayout::standard();
    let m = model(ModelKind::LogReg, &c, WindowConfig::new(5000, 2000, 500).unwrap());
    let d = detect_stream(&m, &layout, &xs[0].id, "m", Some(xs[0].duration_ms), xs[0].samples.iter().cloned().map(Ok)).unwrap();
    assert_eq!(d[0].frame, 10);
    assert_eq!(d[0].t_ms, 5000);
    for (k, x) in d.iter().enumerate() {
        assert_eq!(x.t_ms - x.labeled_t_ms, 2000);
        assert!((0.0..=1.0).contains(&x.p_sed));
        assert_eq!(x.label, u8::from(x.p_sed > 0.5));
        if k > 0 {
            assert_eq!(x.frame, d[k - 1].frame + 1);
        }
    }
}

#[test]
fn decisions_arrive_as_frames_close() {
    let (xs, c) = corpus(4, 33);
    let layout = FeatureLayout::standard();
    let m = model(ModelKind::LogReg, &c, WindowConfig::new(1000, 0, 500).unwrap());
    let x = &xs[1];
    let mut det = Detector::new(&m, &layout, &x.id, "m", Some(x.duration_ms)).unwrap();
    let mut seen = 0;
    for s in &x.samples {
        for d in det.push(s).unwrap() {
            // A decision for frame f is only possible once a sample of a later frame arrived.
            assert!(s.timestamp_ms >= (d.frame as u64 + 1) * 500);
            seen += 1;
        }
    }
    seen += det.finish().unwrap().len();
    assert_eq!(seen, x.duration_ms.div_ceil(500) as usize - 2);
    assert!(det.finish().unwrap().is_empty());
}

#[test]
fn stream_errors() {
    let (xs, c) = corpus(4, 34);
    let layout = FeatureLayout::standard();
    let m = model(ModelKind::LogReg, &c, WindowConfig::new(1000, 0, 500).unwrap());
    let mut det = Detector::new(&m, &layout, "x", "m", None).unwrap();
    let s = |t, stream, n| StreamSample {
        timestamp_ms: t,
        stream,
        values: vec![0.0; n],
    };
    det.push(&s(1000, StreamId::Head, 3)).unwrap();
    assert!(matches!(det.push(&s(900, StreamId::Head, 3)), Err(Error::Unsorted { .. })));
    assert!(matches!(det.push(&s(1100, StreamId::Head, 4)), Err(Error::Dimension { .. })));

    let mut okao = FeatureLayout::okao();
    okao.streams.retain(|s| s.stream != StreamId::Speech);
    assert!(matches!(Detector::new(&m, &okao, "x", "m", None), Err(Error::Layout(_))));

    let mut partial = FeatureLayout::standard();
    partial.streams.retain(|s| s.stream != StreamId::Speech);
    let samples = xs[0].samples.iter().cloned().map(Ok);
    assert!(detect_stream(&m, &partial, "x", "m", None, samples).is_err());
}

#[test]
fn decisions_jsonl_has_schema_header() {
    let (xs, c) = corpus(4, 35);
    let layout = FeatureLayout::standard();
    let m = model(ModelKind::LogReg, &c, WindowConfig::new(1000, 500, 500).unwrap());
    let d = batch_decisions(&m, &layout, &xs[0].id, "lr", xs[0].duration_ms, &xs[0].samples).unwrap();
    let mut buf = Vec::new();
    write_decisions(&mut buf, &m, "lr", &d).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let head: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(head["schema"], "sedet.decisions/1");
    let first: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    for key in ["interaction", "t_ms", "labeled_t_ms", "label", "p_sed", "model"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["t_ms"].as_u64().unwrap() - first["labeled_t_ms"].as_u64().unwrap(), 500);
    assert_eq!(lines.count(), d.len() - 1);
}
