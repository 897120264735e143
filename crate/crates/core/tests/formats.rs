use gapdiag::store::{read_bundle, validate_dataset, write_bundle, load_manifest, HiddenStateBundle};
use gapdiag::synth::{generate_synthetic, SynthConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bundle_round_trip(
        (n_layers, d_hidden, states) in (1usize..5, 1usize..9).prop_flat_map(|(l, d)| {
            (Just(l), Just(d), prop::collection::vec(-1e6f32..1e6, l * d))
        }),
        logits in prop::array::uniform6(-50f32..50.0),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let b = HiddenStateBundle::new(n_layers, d_hidden, states, logits).unwrap();
        write_bundle(&path, &b).unwrap();
        let back = read_bundle(&path, Some((n_layers, d_hidden))).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(back.encode(), b.encode());
    }
}

#[test]
fn validate_flags_a_damaged_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_videos: 10, ..SynthConfig::default() };
    let manifest_path = generate_synthetic(&cfg).unwrap().write(dir.path()).unwrap();
    let manifest = load_manifest(&manifest_path).unwrap();
    assert!(validate_dataset(&manifest).is_ok());

    let victim = manifest.resolve(&manifest.samples[3].bundle_path);
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 4]).unwrap();
    let report = validate_dataset(&manifest);
    assert_eq!(report.exit_code(), 1);
    assert!(report
        .violations
        .iter()
        .any(|v| v.sample_id.as_deref() == Some(manifest.samples[3].sample_id.as_str())));
}
