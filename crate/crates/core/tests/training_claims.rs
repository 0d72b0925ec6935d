use pottsadm::experiments::{gen_blobs_2d, suite_scenes, SuiteConfig};
use pottsadm::metrics::labeled_accuracy;
use pottsadm::model::{forward, FeatureConfig};
use pottsadm::training::{init_params, train_gd, train_phase1, TrainConfig, TrainingImage};

fn config() -> TrainConfig {
    let mut cfg = TrainConfig {
        features: FeatureConfig {
            fourier_count: 16,
            ..FeatureConfig::default()
        },
        hidden: Some(16),
        eval_cadence: 1,
        ..TrainConfig::default()
    };
    cfg.sgd.learning_rate = 0.002;
    cfg.sgd.phase1_iters = 150;
    cfg.sgd.phase2_iters = 100;
    cfg
}

#[test]
fn phase1_fits_scribbles_on_separable_scenes() {
    let cfg = config();
    for seed in 0..6 {
        let scene = gen_blobs_2d(24, 24, 2 + seed as usize % 3, 0.0, 1.0, 40 + seed).unwrap();
        let data = vec![TrainingImage::prepare(&scene.image, &scene.mask, &cfg).unwrap()];
        let p0 = init_params(&data, &cfg).unwrap();
        let (p1, _) = train_phase1(&p0, &data, &cfg).unwrap();
        let pred = forward(&p1, &data[0].features).unwrap().argmax();
        let acc = labeled_accuracy(&pred, &scene.mask).unwrap();
        assert!(acc >= 0.95, "seed {seed}: labeled accuracy {acc}");
    }
}

#[test]
fn smoothed_pce_does_not_increase() {
    let cfg = config();
    let suite = SuiteConfig {
        scenes: 4,
        width: 24,
        height: 24,
        ..SuiteConfig::default()
    };
    for scene in suite_scenes(&suite).unwrap() {
        let data = vec![TrainingImage::prepare(&scene.image, &scene.mask, &cfg).unwrap()];
        let p0 = init_params(&data, &cfg).unwrap();
        let (_, trace) = train_phase1(&p0, &data, &cfg).unwrap();
        let pce: Vec<f64> = trace.records.iter().map(|r| r.pce).collect();
        let smoothed: Vec<f64> = pce.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for w in smoothed.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "scene {}: {smoothed:?}", scene.seed);
        }
    }
}

#[test]
fn gd_lowers_relaxed_crf() {
    let cfg = config();
    let suite = SuiteConfig {
        scenes: 4,
        width: 24,
        height: 24,
        ..SuiteConfig::default()
    };
    for scene in suite_scenes(&suite).unwrap() {
        let data = vec![TrainingImage::prepare(&scene.image, &scene.mask, &cfg).unwrap()];
        let p0 = init_params(&data, &cfg).unwrap();
        let (p1, _) = train_phase1(&p0, &data, &cfg).unwrap();
        let (_, trace) = train_gd(&p1, &data, &cfg).unwrap();
        let first = trace.records.first().unwrap().relaxed_crf;
        let last = trace.records.last().unwrap().relaxed_crf;
        assert!(last < first, "scene {}: relaxed {first} -> {last}", scene.seed);
    }
}
