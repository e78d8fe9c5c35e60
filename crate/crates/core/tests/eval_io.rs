use eitnet_core::eval::complexity::{pipeline_layers, Layer, LayerSpec};
use eitnet_core::eval::train::eval_transform;
use eitnet_core::eval::{
    count_params_flops, generate_synthetic_dataset, load_model, read_dataset, save_model, write_dataset, EitNet,
    PipelineConfig, StageToggles, SyntheticConfig,
};
use eitnet_core::temporal::AttentionMode;
use eitnet_core::tensor::{read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor};
use eitnet_core::{SeedRng, Tensor};
use proptest::prelude::*;

fn small_config() -> SyntheticConfig {
    SyntheticConfig { repetitions: 1, ..Default::default() }
}

#[test]
fn dataset_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let samples = generate_synthetic_dataset(&small_config(), 11).unwrap();
    let manifest = write_dataset(dir.path(), &samples, Some("seed=11")).unwrap();
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.starts_with("# seed=11\nsample_id,subject_id,view_id,label,clip_path,pose_path,"));
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), samples.len());
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!((a.sample_id, a.subject_id, a.view_id, a.label), (b.sample_id, b.subject_id, b.view_id, b.label));
        assert_eq!(a.clip, b.clip);
        assert_eq!(a.poses, b.poses);
        assert_eq!(a.player_box.coords(), b.player_box.coords());
    }
}

#[test]
fn dataset_reader_reports_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("manifest.csv"), "sample_id,subject_id\n0,1\n").unwrap();
    let err = read_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("view_id"), "{err}");
}

#[test]
fn model_roundtrip_preserves_predictions() {
    let samples = generate_synthetic_dataset(&small_config(), 5).unwrap();
    let mut model = EitNet::seeded(PipelineConfig::default(), 9).unwrap();
    // give every head and scaler non-trivial values
    let mut rng = SeedRng::new(1);
    let mut perturb = |t: &mut Tensor| *t = Tensor::randn(t.shape(), 0.1, &mut rng);
    perturb(&mut model.classifier.weight);
    perturb(&mut model.classifier.bias);
    perturb(&mut model.pose_head.weight);
    perturb(&mut model.detector.head.cls_weight);
    perturb(&mut model.detector.head.reg_bias);
    model.feature_scaler.mean.iter_mut().for_each(|m| *m = 0.25);
    model.cell_scaler.inv_std.iter_mut().for_each(|s| *s = 2.0);

    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &model).unwrap();
    let loaded = load_model(dir.path()).unwrap();
    assert_eq!(loaded.seed, 9);
    assert_eq!(loaded.config.toggles, StageToggles::ALL);
    for s in &samples[..8] {
        let clip = eval_transform(&model, s).unwrap().apply(&s.clip).unwrap();
        let (a, b) = (model.predict(&clip).unwrap(), loaded.predict(&clip).unwrap());
        assert_eq!(a.probabilities, b.probabilities);
        assert_eq!(a.roi.coords(), b.roi.coords());
        assert_eq!(a.poses, b.poses);
    }
}

#[test]
fn model_loader_rejects_mismatched_heads() {
    let dir = tempfile::tempdir().unwrap();
    let model = EitNet::seeded(PipelineConfig::default(), 2).unwrap();
    save_model(dir.path(), &model).unwrap();
    eitnet_core::tensor::save_tensor(dir.path().join("classifier.eitt"), &Tensor::zeros(&[3, 3])).unwrap();
    assert!(load_model(dir.path()).is_err());
}

fn len(t: &Tensor) -> usize {
    t.len()
}

/// Parameter count of the tensors an `EitNet` actually owns for the enabled stages.
fn owned_params(m: &EitNet) -> usize {
    let t = m.config.toggles;
    let mut n = 0;
    if t.detection {
        for s in &m.detector.backbone.stages {
            n += len(&s.weight) + len(&s.bias);
        }
        n += m.detector.fusion.raw.len();
        let h = &m.detector.head;
        n += len(&h.cls_weight) + len(&h.cls_bias) + len(&h.reg_weight) + len(&h.reg_bias);
    }
    if t.spatiotemporal {
        for b in &m.blocks {
            n += len(&b.weight) + b.bias.as_ref().map_or(0, len) + b.norm.gamma.len() + b.norm.beta.len();
        }
    }
    let e = &m.encoder;
    n += len(&e.proj_weight) + len(&e.proj_bias) + len(&e.pos_enc);
    if e.config.summary_token {
        n += len(&e.summary_weight) + len(&e.summary_bias);
    }
    if t.temporal {
        for b in &e.blocks {
            n += [&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.w1, &b.b1, &b.w2, &b.b2].iter().map(|t| len(t)).sum::<usize>();
            n += b.ln1_gamma.len() + b.ln1_beta.len() + b.ln2_gamma.len() + b.ln2_beta.len();
        }
    }
    n + m.classifier.param_count() + m.pose_head.param_count()
}

#[test]
fn complexity_params_match_model_tensors() {
    for (name, toggles) in StageToggles::ablations() {
        for mode in [AttentionMode::Divided, AttentionMode::Joint] {
            let mut config = PipelineConfig { toggles, ..Default::default() };
            config.temporal.mode = mode;
            let counted = count_params_flops(&config).unwrap().total.params;
            let model = EitNet::seeded(config, 0).unwrap();
            assert_eq!(counted as usize, owned_params(&model), "{name} {mode:?}");
        }
    }
}

#[test]
fn complexity_csv_sums_to_total() {
    let c = count_params_flops(&PipelineConfig::default()).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf, None).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,params,macs"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let (total, layers) = rows.split_last().unwrap();
    assert_eq!(total[0], "total");
    for col in 1..3 {
        let sum: u64 = layers.iter().map(|r| r[col].parse::<u64>().unwrap()).sum();
        assert_eq!(sum, total[col].parse::<u64>().unwrap());
    }
    assert_eq!(layers.len(), pipeline_layers(&PipelineConfig::default()).unwrap().len());
}

#[test]
fn conv_macs_follow_output_extent() {
    use eitnet_core::ConvSpec;
    let strided = Layer::new(
        "c",
        LayerSpec::Conv3d { in_channels: 2, out_channels: 3, input: (4, 6, 6), spec: ConvSpec::new((2, 3, 3)).stride((2, 3, 3)) },
    );
    // output 2 x 2 x 2 = 8 positions, 2*2*3*3 = 36 taps per output channel
    assert_eq!(strided.cost().unwrap().macs, 3 * 8 * 36);
    assert_eq!(strided.cost().unwrap().params, 3 * 36 + 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_bytes_roundtrip(shape in prop::collection::vec(1usize..4, 1..=4), seed in any::<u64>()) {
        let t = Tensor::randn(&shape, 10.0, &mut SeedRng::new(seed));
        let bytes = tensor_to_bytes(&t);
        prop_assert_eq!(&bytes[..4], b"EITT");
        prop_assert_eq!(bytes.len(), 4 + 1 + 4 * shape.len() + 8 * t.len());
        prop_assert_eq!(tensor_from_bytes(&bytes).unwrap(), t.clone());
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        prop_assert_eq!(read_tensor(&buf[..]).unwrap(), t);
    }

    #[test]
    fn truncated_tensor_bytes_are_rejected(cut in 0usize..40) {
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let bytes = tensor_to_bytes(&t);
        prop_assume!(cut < bytes.len());
        prop_assert!(tensor_from_bytes(&bytes[..cut]).is_err());
    }
}
