//! Synthetic scenes, the 1D landscape study, GD vs ADM comparisons and the
//! run-directory plumbing shared by the command-line tool.
//!
//! Every run writes its resolved configuration to `config.toml` in the run
//! directory, so outputs can be regenerated from it.

pub mod compare;
pub mod landscape;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use compare::{
    run_comparison, run_scene, run_shorten_sweep, suite_scenes, summarize, write_comparison, write_sweep,
    CompareConfig, ComparisonSummary, SceneInput, SceneOutcome, SuiteConfig, SweepRow,
};
pub use landscape::{landscape_1d, run_landscape_suite, Landscape, LandscapeConfig, LandscapeOutcome};
pub use synthetic::{gen_blobs_2d, gen_staircase_1d, SceneKind, SyntheticScene};

use crate::error::{Error, Result};
use crate::io::{read_image, read_labeling, read_scribbles, write_chains, write_image, write_labeling, write_scribbles};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{forward, load_params, save_params};
use crate::training::{init_params, train_phase1, train_phase2, TrainConfig, TrainingImage};

/// Parses a TOML config; missing keys take their defaults.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_config(&text, path)
}

pub fn parse_config<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Creates `dir` and writes `config` to `dir/config.toml`.
pub fn prepare_run_dir<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = toml::to_string(config).map_err(|e| Error::Argument(format!("config not serializable: {e}")))?;
    fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

/// Writes `<name>.pgm`, `<name>_gt.pgm`, `<name>_scribbles.pgm` and
/// `<name>_chains.txt`.
pub fn write_scene(dir: &Path, name: &str, scene: &SyntheticScene) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_image(&dir.join(format!("{name}.pgm")), &scene.image)?;
    write_labeling(&dir.join(format!("{name}_gt.pgm")), &scene.gt)?;
    write_scribbles(&dir.join(format!("{name}_scribbles.pgm")), &scene.mask)?;
    write_chains(&dir.join(format!("{name}_chains.txt")), scene.mask.chains().unwrap_or(&[]))?;
    Ok(())
}

/// Synthetic suite written to `dir/scenes`.
pub fn run_synth(dir: &Path, config: &SuiteConfig) -> Result<usize> {
    prepare_run_dir(dir, config)?;
    let scenes = suite_scenes(config)?;
    for (i, s) in scenes.iter().enumerate() {
        write_scene(&dir.join("scenes"), &format!("scene_{i:02}"), s)?;
    }
    Ok(scenes.len())
}

/// Landscape suite: one CSV per scene plus `summary.csv`.
pub fn run_landscape(dir: &Path, config: &LandscapeConfig) -> Result<Vec<LandscapeOutcome>> {
    prepare_run_dir(dir, config)?;
    let outcomes = run_landscape_suite(config)?;
    let curves = dir.join("curves");
    fs::create_dir_all(&curves)?;
    let mut summary = String::from("seed,dominant_step,grid_argmin,grid_minima,dense_minima\n");
    for o in &outcomes {
        o.landscape.write_csv(fs::File::create(curves.join(format!("seed_{}.csv", o.seed)))?)?;
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            o.seed, o.dominant_step, o.grid_argmin, o.grid_minima, o.dense_minima
        ));
    }
    fs::write(dir.join("summary.csv"), summary)?;
    Ok(outcomes)
}

/// Full GD vs ADM comparison on the configured suite.
pub fn run_compare(dir: &Path, config: &CompareConfig) -> Result<ComparisonSummary> {
    prepare_run_dir(dir, config)?;
    let inputs = synthetic_inputs(config)?;
    let outcomes = run_comparison(&inputs, config)?;
    write_comparison(dir, &outcomes)
}

pub fn run_sweep(dir: &Path, config: &CompareConfig) -> Result<Vec<SweepRow>> {
    prepare_run_dir(dir, config)?;
    let inputs = synthetic_inputs(config)?;
    let rows = run_shorten_sweep(&inputs, config)?;
    write_sweep(fs::File::create(dir.join("sweep.csv"))?, &rows)?;
    fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(rows)
}

pub fn synthetic_inputs(config: &CompareConfig) -> Result<Vec<SceneInput>> {
    Ok(suite_scenes(&config.suite)?
        .iter()
        .enumerate()
        .map(|(i, s)| SceneInput::from_synthetic(i, s))
        .collect())
}

/// Training one model on one image/scribble pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub image: PathBuf,
    pub scribbles: PathBuf,
    pub chains: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub num_labels: usize,
    /// Start from this checkpoint and skip phase 1.
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            image: PathBuf::new(),
            scribbles: PathBuf::new(),
            chains: None,
            ground_truth: None,
            num_labels: 2,
            checkpoint: None,
            train: TrainConfig::default(),
        }
    }
}

/// Writes `phase1.csv` (unless resuming), `train.csv`, `model.bin`,
/// `prediction.pgm` and, with ground truth, `report.json`.
pub fn run_train(dir: &Path, config: &TrainRunConfig) -> Result<Option<EvalReport>> {
    prepare_run_dir(dir, config)?;
    let image = read_image(&config.image)?;
    let mask = read_scribbles(&config.scribbles, config.num_labels, config.chains.as_deref())?;
    let data = vec![TrainingImage::prepare(&image, &mask, &config.train)?];
    let start = match &config.checkpoint {
        Some(p) => load_params(p)?,
        None => {
            let p0 = init_params(&data, &config.train)?;
            let (p1, t1) = train_phase1(&p0, &data, &config.train)?;
            t1.write_csv(fs::File::create(dir.join("phase1.csv"))?, true)?;
            p1
        }
    };
    let (params, trace) = train_phase2(&start, &data, &config.train)?;
    trace.write_csv(fs::File::create(dir.join("train.csv"))?, true)?;
    save_params(&dir.join("model.bin"), &params)?;
    let pred = forward(&params, &data[0].features)?.argmax();
    write_labeling(&dir.join("prediction.pgm"), &pred)?;
    let report = match &config.ground_truth {
        Some(p) => {
            let gt = read_labeling(p, config.num_labels)?;
            let r = evaluate(&pred, &gt)?;
            fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r)?)?;
            Some(r)
        }
        None => None,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configs_round_trip_through_toml() {
        let cfg = CompareConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: CompareConfig = parse_config(&text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg, back);
        let partial: CompareConfig = parse_config("[train]\nlambda = 2.5\n", Path::new("y.toml")).unwrap();
        assert_eq!(partial.train.lambda, 2.5);
        assert_eq!(partial.suite, SuiteConfig::default());
        assert!(matches!(
            parse_config::<CompareConfig>("[train]\nlambda = \"x\"\n", Path::new("z.toml")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn synth_then_train_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let suite = SuiteConfig {
            scenes: 1,
            width: 16,
            height: 16,
            labels: vec![3],
            ..SuiteConfig::default()
        };
        assert_eq!(run_synth(dir.path(), &suite).unwrap(), 1);
        let scenes = dir.path().join("scenes");
        let mut cfg = TrainRunConfig {
            image: scenes.join("scene_00.pgm"),
            scribbles: scenes.join("scene_00_scribbles.pgm"),
            chains: Some(scenes.join("scene_00_chains.txt")),
            ground_truth: Some(scenes.join("scene_00_gt.pgm")),
            num_labels: 3,
            ..TrainRunConfig::default()
        };
        cfg.train.hidden = None;
        cfg.train.sgd.phase1_iters = 5;
        cfg.train.sgd.phase2_iters = 5;
        cfg.train.sgd.learning_rate = 0.001;
        let out = dir.path().join("run");
        let report = run_train(&out, &cfg).unwrap().unwrap();
        assert!((0.0..=1.0).contains(&report.miou));
        for f in ["config.toml", "phase1.csv", "train.csv", "model.bin", "prediction.pgm", "report.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let resumed = TrainRunConfig {
            checkpoint: Some(out.join("model.bin")),
            ..cfg
        };
        run_train(&dir.path().join("run2"), &resumed).unwrap();
    }
}
