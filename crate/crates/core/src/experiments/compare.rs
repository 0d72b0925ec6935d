//! GD vs ADM on a scene suite from a shared phase-1 model, plus the
//! shortened-scribble sweep.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{gen_blobs_2d, SyntheticScene};
use crate::energy::Connectivity;
use crate::error::{arg, Result};
use crate::io::write_labeling;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{forward, ModelParams};
use crate::training::{
    init_params, train_adm, train_gd, train_phase1, TrainConfig, TrainMode, TrainTrace, TrainingImage,
};
use crate::types::{shorten_scribbles, GridImage, Labeling, ScribbleMask};

/// Seeded blob suite. Scene `i` uses `labels[i % labels.len()]` classes and
/// seed `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
    pub noise: f64,
    pub contrast: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            width: 32,
            height: 32,
            labels: vec![2, 3, 4],
            noise: 0.1,
            contrast: 0.8,
            seed: 1000,
        }
    }
}

pub fn suite_scenes(config: &SuiteConfig) -> Result<Vec<SyntheticScene>> {
    if config.labels.is_empty() {
        return arg("suite needs at least one label count");
    }
    (0..config.scenes)
        .map(|i| {
            let k = config.labels[i % config.labels.len()];
            gen_blobs_2d(config.width, config.height, k, config.noise, config.contrast, config.seed + i as u64)
        })
        .collect()
}

/// One image of a comparison suite.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub name: String,
    pub image: GridImage,
    pub mask: ScribbleMask,
    pub gt: Option<Labeling>,
}

impl SceneInput {
    pub fn from_synthetic(index: usize, scene: &SyntheticScene) -> Self {
        Self {
            name: format!("scene_{index:02}"),
            image: scene.image.clone(),
            mask: scene.mask.clone(),
            gt: Some(scene.gt.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub suite: SuiteConfig,
    /// Shared settings; `mode` is ignored.
    pub train: TrainConfig,
    /// Regularizer neighborhood of the GD baseline.
    pub gd_crf: Connectivity,
    /// Scribble keep ratios for the shortening sweep.
    pub shorten_ratios: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            train: TrainConfig::default(),
            gd_crf: Connectivity::Grid4,
            shorten_ratios: vec![1.0, 0.5, 0.3, 0.0],
        }
    }
}

impl CompareConfig {
    pub fn gd_config(&self) -> TrainConfig {
        TrainConfig {
            mode: TrainMode::Gd,
            crf: self.gd_crf,
            ..self.train.clone()
        }
    }

    pub fn adm_config(&self) -> TrainConfig {
        let crf = match self.train.crf {
            Connectivity::Dense => Connectivity::Grid4,
            c => c,
        };
        TrainConfig {
            mode: TrainMode::Adm,
            crf,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub params: ModelParams,
    pub trace: TrainTrace,
    pub prediction: Labeling,
    pub report: Option<EvalReport>,
}

impl MethodOutcome {
    pub fn final_grid_crf(&self) -> f64 {
        self.trace.final_grid_crf().expect("trace has a final record")
    }
}

#[derive(Debug, Clone)]
pub struct SceneOutcome {
    pub name: String,
    pub phase1: TrainTrace,
    pub gd: MethodOutcome,
    pub adm: MethodOutcome,
}

impl SceneOutcome {
    /// Iterations GD needs to first reach its own final grid-CRF loss.
    pub fn gd_iters_to_final(&self) -> usize {
        self.gd
            .trace
            .first_iter_at_or_below(self.gd.final_grid_crf())
            .expect("final record qualifies")
    }

    /// Iterations ADM needs to reach GD's final grid-CRF loss, if ever.
    pub fn adm_iters_to_gd_final(&self) -> Option<usize> {
        self.adm.trace.first_iter_at_or_below(self.gd.final_grid_crf())
    }

    pub fn adm_faster(&self) -> bool {
        self.adm_iters_to_gd_final()
            .is_some_and(|a| a < self.gd_iters_to_final())
    }
}

fn finish(params: ModelParams, trace: TrainTrace, data: &TrainingImage, gt: Option<&Labeling>) -> Result<MethodOutcome> {
    let prediction = forward(&params, &data.features)?.argmax();
    let report = gt.map(|g| evaluate(&prediction, g)).transpose()?;
    Ok(MethodOutcome {
        params,
        trace,
        prediction,
        report,
    })
}

/// Phase 1 once, then GD and ADM from the same parameters with the same
/// budget.
pub fn run_scene(input: &SceneInput, config: &CompareConfig) -> Result<SceneOutcome> {
    let gd_cfg = config.gd_config();
    let adm_cfg = config.adm_config();
    let adm_data = vec![TrainingImage::prepare(&input.image, &input.mask, &adm_cfg)?];
    let gd_data = if gd_cfg.crf == adm_cfg.crf {
        adm_data.clone()
    } else {
        vec![TrainingImage::prepare(&input.image, &input.mask, &gd_cfg)?]
    };
    let p0 = init_params(&adm_data, &adm_cfg)?;
    let (p1, phase1) = train_phase1(&p0, &adm_data, &adm_cfg)?;
    let (pg, tg) = train_gd(&p1, &gd_data, &gd_cfg)?;
    let (pa, ta) = train_adm(&p1, &adm_data, &adm_cfg)?;
    Ok(SceneOutcome {
        name: input.name.clone(),
        phase1,
        gd: finish(pg, tg, &gd_data[0], input.gt.as_ref())?,
        adm: finish(pa, ta, &adm_data[0], input.gt.as_ref())?,
    })
}

/// Scenes run concurrently; results keep input order.
pub fn run_comparison(inputs: &[SceneInput], config: &CompareConfig) -> Result<Vec<SceneOutcome>> {
    inputs.par_iter().map(|s| run_scene(s, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub scenes: usize,
    pub mean_final_grid_crf_gd: f64,
    pub mean_final_grid_crf_adm: f64,
    /// `1 − adm/gd` of the mean final grid-CRF losses (0 when GD's is 0).
    pub relative_reduction: f64,
    pub adm_faster_scenes: usize,
    pub adm_latent_solves: usize,
    pub adm_constraint_violations: usize,
    pub mean_miou_gd: Option<f64>,
    pub mean_miou_adm: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_miou(outcomes: &[SceneOutcome], pick: impl Fn(&SceneOutcome) -> &MethodOutcome) -> Option<f64> {
    let v: Option<Vec<f64>> = outcomes
        .iter()
        .map(|o| pick(o).report.as_ref().map(|r| r.miou))
        .collect();
    v.map(|v| mean(v.into_iter()))
}

pub fn summarize(outcomes: &[SceneOutcome]) -> ComparisonSummary {
    let gd = mean(outcomes.iter().map(|o| o.gd.final_grid_crf()));
    let adm = mean(outcomes.iter().map(|o| o.adm.final_grid_crf()));
    ComparisonSummary {
        scenes: outcomes.len(),
        mean_final_grid_crf_gd: gd,
        mean_final_grid_crf_adm: adm,
        relative_reduction: if gd > 0.0 { 1.0 - adm / gd } else { 0.0 },
        adm_faster_scenes: outcomes.iter().filter(|o| o.adm_faster()).count(),
        adm_latent_solves: outcomes.iter().map(|o| o.adm.trace.latent_solves).sum(),
        adm_constraint_violations: outcomes.iter().map(|o| o.adm.trace.constraint_violations).sum(),
        mean_miou_gd: mean_miou(outcomes, |o| &o.gd),
        mean_miou_adm: mean_miou(outcomes, |o| &o.adm),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `scene,method,final_grid_crf,miou,pixel_accuracy,trimap_8,trimap_16,iters_to_gd_final`
pub fn write_verdict<W: Write>(mut out: W, outcomes: &[SceneOutcome]) -> Result<()> {
    writeln!(out, "scene,method,final_grid_crf,miou,pixel_accuracy,trimap_8,trimap_16,iters_to_gd_final")?;
    for o in outcomes {
        for (method, m, iters) in [
            ("gd", &o.gd, Some(o.gd_iters_to_final())),
            ("adm", &o.adm, o.adm_iters_to_gd_final()),
        ] {
            let r = m.report.as_ref();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                o.name,
                method,
                m.final_grid_crf(),
                opt(r.map(|r| r.miou)),
                opt(r.map(|r| r.pixel_accuracy)),
                opt(r.and_then(|r| r.trimap_8)),
                opt(r.and_then(|r| r.trimap_16)),
                iters.map(|i| i.to_string()).unwrap_or_default()
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SceneReports<'a> {
    gd: &'a Option<EvalReport>,
    adm: &'a Option<EvalReport>,
}

/// Writes traces, predictions, per-scene reports, the verdict table and the
/// summary under `dir`.
pub fn write_comparison(dir: &Path, outcomes: &[SceneOutcome]) -> Result<ComparisonSummary> {
    let traces = dir.join("traces");
    let preds = dir.join("predictions");
    let reports = dir.join("reports");
    for d in [&traces, &preds, &reports] {
        fs::create_dir_all(d)?;
    }
    for o in outcomes {
        for (tag, t) in [("phase1", &o.phase1), ("gd", &o.gd.trace), ("adm", &o.adm.trace)] {
            t.write_csv(fs::File::create(traces.join(format!("{}_{tag}.csv", o.name)))?, true)?;
        }
        write_labeling(&preds.join(format!("{}_gd.pgm", o.name)), &o.gd.prediction)?;
        write_labeling(&preds.join(format!("{}_adm.pgm", o.name)), &o.adm.prediction)?;
        let rep = SceneReports {
            gd: &o.gd.report,
            adm: &o.adm.report,
        };
        fs::write(reports.join(format!("{}.json", o.name)), serde_json::to_string_pretty(&rep)?)?;
    }
    write_verdict(fs::File::create(dir.join("verdict.csv"))?, outcomes)?;
    let summary = summarize(outcomes);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub scribbled_pixels: usize,
    pub summary: ComparisonSummary,
}

/// Comparison at every keep ratio, scribbles shortened from both chain ends.
pub fn run_shorten_sweep(inputs: &[SceneInput], config: &CompareConfig) -> Result<Vec<SweepRow>> {
    config
        .shorten_ratios
        .iter()
        .map(|&ratio| {
            let shortened: Vec<SceneInput> = inputs
                .iter()
                .map(|s| {
                    Ok(SceneInput {
                        mask: shorten_scribbles(&s.mask, ratio)?,
                        ..s.clone()
                    })
                })
                .collect::<Result<_>>()?;
            let outcomes = run_comparison(&shortened, config)?;
            Ok(SweepRow {
                ratio,
                scribbled_pixels: shortened.iter().map(|s| s.mask.labeled_count()).sum(),
                summary: summarize(&outcomes),
            })
        })
        .collect()
}

/// `ratio,scribbled_pixels,miou_gd,miou_adm,final_grid_crf_gd,final_grid_crf_adm`
pub fn write_sweep<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "ratio,scribbled_pixels,miou_gd,miou_adm,final_grid_crf_gd,final_grid_crf_adm")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.ratio,
            r.scribbled_pixels,
            opt(r.summary.mean_miou_gd),
            opt(r.summary.mean_miou_adm),
            r.summary.mean_final_grid_crf_gd,
            r.summary.mean_final_grid_crf_adm
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureConfig;

    fn tiny() -> CompareConfig {
        let mut c = CompareConfig::default();
        c.suite = SuiteConfig {
            scenes: 2,
            width: 16,
            height: 16,
            labels: vec![2, 3],
            ..SuiteConfig::default()
        };
        c.train.features = FeatureConfig {
            fourier_count: 6,
            ..FeatureConfig::default()
        };
        c.train.hidden = Some(6);
        c.train.sgd.phase1_iters = 10;
        c.train.sgd.phase2_iters = 10;
        c.train.sgd.learning_rate = 0.005;
        c.train.eval_cadence = 5;
        c
    }

    #[test]
    fn gd_twice_gives_identical_traces() {
        let cfg = tiny();
        let scenes = suite_scenes(&cfg.suite).unwrap();
        let input = SceneInput::from_synthetic(0, &scenes[0]);
        let a = run_scene(&input, &cfg).unwrap();
        let b = run_scene(&input, &cfg).unwrap();
        let key = |t: &TrainTrace| {
            t.records
                .iter()
                .map(|r| (r.iter, r.pce.to_bits(), r.grid_crf_discrete.to_bits(), r.relaxed_crf.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a.gd.trace), key(&b.gd.trace));
        assert_eq!(key(&a.adm.trace), key(&b.adm.trace));
        assert_eq!(a.phase1.records.len(), 3);
        assert_eq!(a.adm.trace.constraint_violations, 0);
    }

    #[test]
    fn outputs_and_sweep() {
        let cfg = tiny();
        let inputs: Vec<SceneInput> = suite_scenes(&cfg.suite)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, s)| SceneInput::from_synthetic(i, s))
            .collect();
        let outcomes = run_comparison(&inputs, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = write_comparison(dir.path(), &outcomes).unwrap();
        assert_eq!(summary.scenes, 2);
        assert_eq!(summary.adm_latent_solves, 20);
        let verdict = fs::read_to_string(dir.path().join("verdict.csv")).unwrap();
        assert_eq!(verdict.lines().count(), 5);
        assert!(dir.path().join("traces/scene_01_adm.csv").exists());
        assert!(dir.path().join("reports/scene_00.json").exists());

        let mut sweep_cfg = cfg.clone();
        sweep_cfg.shorten_ratios = vec![1.0, 0.0];
        let rows = run_shorten_sweep(&inputs[..1], &sweep_cfg).unwrap();
        assert!(rows[0].scribbled_pixels > rows[1].scribbled_pixels);
        let mut buf = Vec::new();
        write_sweep(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
