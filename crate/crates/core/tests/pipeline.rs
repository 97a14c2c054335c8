use eegsz::dsp::Band;
use eegsz::eval::{prepare_network_inputs, run_condition, Condition, CvOptions};
use eegsz::ingest::{read_store, synth_generate, write_store, DatasetId, DatasetManifest, SynthSpec};
use eegsz::models::{accuracy, build_szhnn, ModelKind, SvmParams};
use eegsz::nn::InitOptions;

fn dataset(seed: u64) -> DatasetManifest {
    let spec = SynthSpec { subjects_per_class: 10, channels: 4, samples: 1024, sample_rate_hz: 250.0, seed };
    let recs = synth_generate(&spec).unwrap();
    DatasetManifest::from_recordings(DatasetId::Synthetic, &recs, 256.0 / 250.0, 0.0).unwrap()
}

#[test]
fn store_round_trip_keeps_hash() {
    let data = dataset(1);
    assert_eq!(data.len(), 80);
    assert_eq!(data.class_counts(), [40, 40]);
    let dir = tempfile::tempdir().unwrap();
    let info = write_store(dir.path(), &data).unwrap();
    let back = read_store(dir.path()).unwrap();
    assert_eq!(back.content_hash(), info.content_hash);
    assert_eq!(back, data);
}

/// A single random network is a fixed function and can split strongly
/// separable classes by chance, so the claim is about the average init.
#[test]
fn untrained_network_is_near_chance() {
    let data = dataset(2);
    let inputs = prepare_network_inputs(&data, Band::All, &[0, 1, 2, 3]).unwrap();
    let examples: Vec<_> = inputs.iter().zip(data.labels()).collect();
    let accs: Vec<f64> = (0..20)
        .map(|seed| {
            let net = build_szhnn(&[4, 256]).unwrap().build_network(InitOptions::default(), seed).unwrap();
            accuracy(&net, &examples).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "{accs:?}");
}

#[test]
fn svm_separates_alpha_but_not_gamma() {
    let data = dataset(3);
    let opts = CvOptions { folds: 5, subject_aware: true, svm: SvmParams::default(), ..CvOptions::default() };
    let alpha = run_condition(&data, &Condition::new(ModelKind::Svm, Band::Alpha), &opts).unwrap();
    let gamma = run_condition(&data, &Condition::new(ModelKind::Svm, Band::Gamma), &opts).unwrap();
    assert!(alpha.report.mean_accuracy >= 0.9, "{:?}", alpha.report.fold_accuracies);
    assert!(alpha.report.mean_accuracy - gamma.report.mean_accuracy >= 0.2);
    assert_eq!(alpha.report.fold_accuracies.len(), 5);
}

#[test]
fn short_training_beats_chance() {
    let data = dataset(4);
    let mut opts = CvOptions { folds: 2, subject_aware: true, ..CvOptions::default() };
    opts.train.epochs = 8;
    opts.train.learning_rate = 1e-3;
    opts.train.batch_size = 16;
    let out = run_condition(&data, &Condition::new(ModelKind::Cnn, Band::Alpha), &opts).unwrap();
    assert!(out.report.mean_accuracy > 0.75, "{:?}", out.report.fold_accuracies);
    assert_eq!(out.report.curves.len(), 2);
    assert_eq!(out.report.curves[0].len(), 8);
}
