//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always show.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pottsadm::energy::{
    build_dense_weights, relaxed_potts_energy, relaxed_potts_gradient, EnergyParams, UnaryTable,
};
use pottsadm::experiments::{
    parse_config, run_compare, run_landscape_suite, CompareConfig, LandscapeConfig, SceneOutcome,
};
use pottsadm::metrics::{miou, pixel_accuracy, trimap_accuracy};
use pottsadm::model::{backward, forward, FeatureConfig, ModelParams};
use pottsadm::solvers::{
    alpha_expansion, brute_force, maxflow_binary, mean_field_dense, mean_field_free_energy, DiscreteProblem,
};
use pottsadm::training::{
    adm_loss_and_score_grad, gd_loss_and_score_grad, solve_latent, TrainConfig, TrainingImage,
};
use pottsadm::types::{Edge, GridImage, Labeling, Neighborhood, PairwiseGraph, ScribbleMask, SoftSegmentation};

const COMPARE_CONFIG: &str = include_str!("../../../configs/acceptance_compare.toml");

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let detail = format!("{}; {:.2}s (limit {}s)", v.detail, took.as_secs_f64(), limit.as_secs());
    verdict(v.pass && took < limit, detail)
}

/// Grid-4 problem with dyadic costs, so energies sum exactly in any order.
fn random_grid_problem(rng: &mut ChaCha8Rng, w: usize, h: usize, k: usize) -> DiscreteProblem {
    let n = w * h;
    let costs = (0..n * k).map(|_| rng.random_range(0..512) as f64 / 128.0).collect();
    let edges = Neighborhood::Grid4
        .pairs(w, h)
        .into_iter()
        .map(|(p, q)| Edge {
            p,
            q,
            w: rng.random_range(0..384) as f64 / 128.0,
        })
        .collect();
    DiscreteProblem::new(
        UnaryTable::new(n, k, costs).unwrap(),
        PairwiseGraph::new(n, edges, Neighborhood::Grid4).unwrap(),
        k,
    )
    .unwrap()
    .with_dims(w, h)
    .unwrap()
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let instances = 240;
    for _ in 0..instances {
        let (w, h) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let p = random_grid_problem(&mut rng, w, h, 2);
        let mf = maxflow_binary(&p).unwrap().final_energy;
        let bf = brute_force(&p).unwrap().final_energy;
        if mf != bf {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{instances} instances, {mismatches} energy mismatches"))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let instances = 120;
    let (mut exact, mut worst_ratio, mut non_monotone) = (0, 1.0f64, 0);
    for _ in 0..instances {
        let p = random_grid_problem(&mut rng, 3, 3, 3);
        let init = Labeling::constant(3, 3, 3, 0).unwrap();
        let r = alpha_expansion(&p, &init, 5).unwrap();
        let opt = brute_force(&p).unwrap().final_energy;
        if r.final_energy == opt {
            exact += 1;
        }
        let ratio = if opt > 0.0 { r.final_energy / opt } else if r.final_energy == 0.0 { 1.0 } else { f64::INFINITY };
        worst_ratio = worst_ratio.max(ratio);
        if r.energy_trace.windows(2).any(|w| w[1] > w[0]) {
            non_monotone += 1;
        }
    }
    let rate = exact as f64 / instances as f64;
    verdict(
        rate >= 0.95 && worst_ratio <= 2.0 && non_monotone == 0,
        format!("{exact}/{instances} optimal ({:.1}%), worst ratio {worst_ratio:.4}, {non_monotone} non-monotone traces", 100.0 * rate),
    )
}

/// Step for model-parameter differences; larger steps straddle ReLU kinks.
const FD_STEP: f64 = 1e-5;

/// Fourth-order central difference of `f` at `x[i]`.
fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let at = |d: f64| {
        let mut y = x.to_vec();
        y[i] += d;
        f(&y)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

/// Largest component-wise relative error `|fd − g| / max(|fd|, |g|, floor)`, where the
/// floor is `1e-4·‖g‖∞` so components at the round-off level of the loss don't dominate.
fn max_rel_err(f: &dyn Fn(&[f64]) -> f64, x: &[f64], g: &[f64], h: f64) -> f64 {
    let floor = 1e-4 * g.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    (0..x.len())
        .map(|i| {
            let n = fd(f, x, i, h);
            (n - g[i]).abs() / n.abs().max(g[i].abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

fn gradient_scene(seed: u64, w: usize, h: usize, k: usize) -> (GridImage, ScribbleMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = GridImage::gray(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let entries = (0..w * h)
        .map(|_| rng.random_bool(0.25).then(|| rng.random_range(0..k)))
        .collect();
    (img, ScribbleMask::new(w, h, k, entries, None).unwrap())
}

fn criterion_3() -> Verdict {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |key, e: f64| {
        let v = worst.entry(key).or_insert(0.0);
        *v = v.max(e);
    };
    for seed in 0..3u64 {
        let (w, h, k) = (8, 8, 3);
        let (img, mask) = gradient_scene(300 + seed, w, h, k);

        // Relaxed Potts w.r.t. probabilities (rows need not stay normalized).
        let graph = pottsadm::energy::build_grid_weights(&img, &EnergyParams::grid(1.3, 0.05, pottsadm::energy::Connectivity::Grid8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..w * h * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let seg = SoftSegmentation::from_scores(w, h, k, &scores).unwrap();
        let g = relaxed_potts_gradient(&seg, &graph).unwrap();
        let f = |x: &[f64]| {
            let mut e = 0.0;
            for edge in graph.edges() {
                let (a, b) = (&x[edge.p * k..(edge.p + 1) * k], &x[edge.q * k..(edge.q + 1) * k]);
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                e += edge.w * (a.iter().sum::<f64>() + b.iter().sum::<f64>() - 2.0 * dot);
            }
            e
        };
        assert!((f(seg.probs()) - relaxed_potts_energy(&seg, &graph).unwrap()).abs() < 1e-9);
        bump("relaxed", max_rel_err(&f, seg.probs(), &g, 1e-3));

        // Full training losses through the model, w.r.t. every parameter.
        let cfg = TrainConfig {
            lambda: 0.8,
            gamma: 0.6,
            features: FeatureConfig {
                fourier_count: 6,
                fourier_scale: 2.0,
                seed,
            },
            hidden: Some(7),
            ..TrainConfig::default()
        };
        let data = TrainingImage::prepare(&img, &mask, &cfg).unwrap();
        let params = ModelParams::init(data.features.dim(), cfg.hidden, k, 40 + seed).unwrap();
        let theta = params.theta().to_vec();
        let with = |x: &[f64]| ModelParams::from_flat(data.features.dim(), cfg.hidden, k, x.to_vec()).unwrap();

        let s0 = forward(&params, &data.features).unwrap();
        let (_, sg) = gd_loss_and_score_grad(&s0, &mask, &data.reg).unwrap();
        let g = backward(&params, &data.features, &sg).unwrap();
        let f = |x: &[f64]| {
            let s = forward(&with(x), &data.features).unwrap();
            gd_loss_and_score_grad(&s, &mask, &data.reg).unwrap().0
        };
        bump("gd", max_rel_err(&f, &theta, &g, FD_STEP));

        let (latent, _, _) = solve_latent(&s0, &data, None, &cfg).unwrap();
        let (_, sg) = adm_loss_and_score_grad(&s0, &mask, &latent, cfg.gamma).unwrap();
        let g = backward(&params, &data.features, &sg).unwrap();
        let f = |x: &[f64]| {
            let s = forward(&with(x), &data.features).unwrap();
            adm_loss_and_score_grad(&s, &mask, &latent, cfg.gamma).unwrap().0
        };
        bump("adm", max_rel_err(&f, &theta, &g, FD_STEP));
    }
    let pass = worst.values().all(|&e| e <= 1e-4);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.2e}")).collect::<Vec<_>>().join(", ");
    verdict(pass, format!("max relative error: {detail}"))
}

fn criterion_4(outcomes: &[SceneOutcome], reduction: f64) -> Verdict {
    let faster = outcomes.iter().filter(|o| o.adm_faster()).count();
    verdict(
        reduction >= 0.05 && faster * 4 >= outcomes.len() * 3,
        format!(
            "ADM mean grid-CRF loss {:.1}% lower than GD; ADM reached GD's final loss sooner on {faster}/{} scenes",
            100.0 * reduction,
            outcomes.len()
        ),
    )
}

fn criterion_5() -> Verdict {
    let out = run_landscape_suite(&LandscapeConfig::default()).unwrap();
    let at = out.iter().filter(|o| o.argmin_at_dominant()).count();
    let smoother = out.iter().filter(|o| o.dense_smoother()).count();
    verdict(
        at == out.len() && smoother * 4 >= out.len() * 3,
        format!("grid argmin at dominant edge {at}/{}; dense no bumpier {smoother}/{}", out.len(), out.len()),
    )
}

fn criterion_6(outcomes: &[SceneOutcome]) -> Verdict {
    let solves: usize = outcomes.iter().map(|o| o.adm.trace.latent_solves).sum();
    let violations: usize = outcomes.iter().map(|o| o.adm.trace.constraint_violations).sum();
    verdict(
        solves > 0 && violations == 0,
        format!("{solves} latent solves, {violations} scribble violations"),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut ok = true;
    for _ in 0..50 {
        let (w, h, k) = (rng.random_range(2..12), rng.random_range(2..12), rng.random_range(2..5));
        let gt = Labeling::new(w, h, k, (0..w * h).map(|_| rng.random_range(0..k)).collect()).unwrap();
        let pred = Labeling::new(w, h, k, (0..w * h).map(|_| rng.random_range(0..k)).collect()).unwrap();
        ok &= miou(&gt, &gt).unwrap().mean == 1.0;
        let diag = ((w * w + h * h) as f64).sqrt().ceil() as usize;
        let t = trimap_accuracy(&pred, &gt, diag).unwrap();
        if t.band_pixels > 0 {
            ok &= t.accuracy == Some(pixel_accuracy(&pred, &gt).unwrap());
        }
    }
    let gt = Labeling::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = Labeling::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let m = miou(&pred, &gt).unwrap().mean;
    ok &= m == 7.0 / 12.0;
    verdict(ok, format!("identities on 50 random pairs; 2x2 case mIoU = {m}"))
}

fn strip_wall(path: &Path, bytes: Vec<u8>) -> Vec<u8> {
    if path.extension().is_some_and(|e| e == "csv") && path.parent().is_some_and(|p| p.ends_with("traces")) {
        let text = String::from_utf8(bytes).unwrap();
        text.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    } else {
        bytes
    }
}

fn collect(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect(&path, root, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            out.insert(rel, strip_wall(&path, fs::read(&path).unwrap()));
        }
    }
}

fn criterion_8(first: &Path, config: &CompareConfig) -> Verdict {
    let second = tempfile::tempdir().unwrap();
    run_compare(second.path(), config).unwrap();
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    collect(first, first, &mut a);
    collect(second.path(), second.path(), &mut b);
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    verdict(
        a.len() == b.len() && differing.is_empty(),
        format!("{} files compared, {} differ", a.len(), differing.len()),
    )
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut softmax_err = 0.0f64;
    for _ in 0..20 {
        let (n, k) = (rng.random_range(1..20), rng.random_range(2..5));
        let costs: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.0..5.0)).collect();
        let p = DiscreteProblem::new(
            UnaryTable::new(n, k, costs.clone()).unwrap(),
            PairwiseGraph::new(n, vec![], Neighborhood::Grid4).unwrap(),
            k,
        )
        .unwrap();
        let r = mean_field_dense(&p, &SoftSegmentation::uniform(n, 1, k), 3, 0.0).unwrap();
        let neg: Vec<f64> = costs.iter().map(|c| -c).collect();
        let expect = SoftSegmentation::from_scores(n, 1, k, &neg).unwrap();
        for (a, b) in r.marginals.probs().iter().zip(expect.probs()) {
            softmax_err = softmax_err.max((a - b).abs());
        }
    }
    let mut increases = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(950 + seed);
        let (w, h, k) = (10, 8, 3);
        let img = GridImage::gray(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let graph = build_dense_weights(&img, &EnergyParams::dense(0.7, 0.1, 2.0)).unwrap();
        let costs = (0..w * h * k).map(|_| rng.random_range(0.0..3.0)).collect();
        let p = DiscreteProblem::new(UnaryTable::new(w * h, k, costs).unwrap(), graph, k)
            .unwrap()
            .with_dims(w, h)
            .unwrap();
        let r = mean_field_dense(&p, &SoftSegmentation::uniform(w, h, k), 10, 0.0).unwrap();
        let tol = 1e-12;
        increases += r
            .free_energy_trace
            .windows(2)
            .filter(|v| v[1] > v[0] + tol * v[0].abs().max(1.0))
            .count();
        let last = *r.free_energy_trace.last().unwrap();
        assert!((mean_field_free_energy(&p, &r.marginals).unwrap() - last).abs() <= 1e-9 * last.abs().max(1.0));
    }
    verdict(
        softmax_err <= 1e-9 && increases == 0,
        format!("zero-weight max deviation {softmax_err:.1e}; {increases} free-energy increases on 10 dense instances"),
    )
}

fn main() {
    let config: CompareConfig = parse_config(COMPARE_CONFIG, Path::new("configs/acceptance_compare.toml")).unwrap();
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    results.push((1, timed(Duration::from_secs(5), criterion_1)));
    results.push((2, timed(Duration::from_secs(30), criterion_2)));
    results.push((3, timed(Duration::from_secs(30), criterion_3)));

    let run_dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let inputs = pottsadm::experiments::synthetic_inputs(&config).unwrap();
    let outcomes = pottsadm::experiments::run_comparison(&inputs, &config).unwrap();
    let compare_time = start.elapsed();
    let summary = pottsadm::experiments::write_comparison(run_dir.path(), &outcomes).unwrap();
    pottsadm::experiments::prepare_run_dir(run_dir.path(), &config).unwrap();
    let c4 = criterion_4(&outcomes, summary.relative_reduction);
    let limit = Duration::from_secs(600);
    results.push((
        4,
        verdict(
            c4.pass && compare_time < limit,
            format!("{}; {:.1}s (limit {}s)", c4.detail, compare_time.as_secs_f64(), limit.as_secs()),
        ),
    ));
    results.push((5, timed(Duration::from_secs(10), criterion_5)));
    results.push((6, criterion_6(&outcomes)));
    results.push((7, criterion_7()));
    results.push((8, criterion_8(run_dir.path(), &config)));
    results.push((9, criterion_9()));

    println!();
    for (n, v) in &results {
        println!("criterion {n}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
