use toposeg::metrics::BettiErrorParams;
use toposeg::train::{
    synth_samples, train, train_samples, Sample, SynthKind, TinySegmenter, TrainConfig, HISTORY_HEADER,
};

fn rings(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    synth_samples(SynthKind::Rings, n, size, seed)
        .unwrap()
        .into_iter()
        .map(|s| s.sample)
        .collect()
}

fn config(seed: u64, epochs: usize, lambda: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        lambda,
        validation: BettiErrorParams {
            patch: 32,
            n_patches: 20,
            seed: 7,
            bin_threshold: 0.5,
        },
        ..TrainConfig::new(seed)
    }
}

#[test]
fn bce_decreases_without_topology() {
    let data = rings(40, 64, 100);
    for seed in 0..3 {
        let out = train_samples(&data, &config(seed, 20, 0.0), |_| {}).unwrap();
        let r = &out.history.records;
        assert_eq!(r.len(), 20);
        assert!(r[19].bce < r[0].bce, "seed {seed}: {} vs {}", r[19].bce, r[0].bce);
    }
}

#[test]
fn directory_and_memory_training_agree() {
    let dir = tempfile::tempdir().unwrap();
    toposeg::train::synth_dataset(SynthKind::Rings, 6, 40, 3, dir.path()).unwrap();
    let cfg = TrainConfig { patch: 32, ..config(1, 2, 1.0 / 12000.0) };
    let from_dir = train(dir.path(), &cfg).unwrap();
    let from_mem = train_samples(&rings(6, 40, 3), &cfg, |_| {}).unwrap();
    assert_eq!(from_dir.history, from_mem.history);

    let mut a = Vec::new();
    from_dir.history.write_csv(&mut a).unwrap();
    let mut b = Vec::new();
    from_mem.history.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with(HISTORY_HEADER));

    let ckpt = dir.path().join("model.bin");
    from_dir.model.save(&ckpt).unwrap();
    assert_eq!(TinySegmenter::load(&ckpt).unwrap(), from_dir.model);
}

#[test]
fn batches_average_gradients() {
    let data = rings(10, 32, 5);
    let cfg = TrainConfig { patch: 32, batch: 4, ..config(2, 2, 0.0) };
    let out = train_samples(&data, &cfg, |_| {}).unwrap();
    assert_eq!(out.history.records.len(), 2);
    let single = train_samples(&data, &TrainConfig { batch: 1, ..cfg }, |_| {}).unwrap();
    assert_ne!(out.model, single.model);
}

#[test]
fn epoch_callback_sees_every_record() {
    let data = rings(5, 32, 6);
    let mut seen = Vec::new();
    let out = train_samples(&data, &TrainConfig { patch: 32, ..config(0, 4, 0.0) }, |r| seen.push(r.epoch)).unwrap();
    assert_eq!(seen, [1, 2, 3, 4]);
    assert_eq!(out.history.last().unwrap().epoch, 4);
}
