//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use pkmeans::clustering::{
    class_log_likelihoods, delta_p, dist_b_p, fit_kmeans, kmeans_pp_init, log_evidence, LloydConfig, Points,
};
use pkmeans::encoding::{discretize_numeric, group_categorical};
use pkmeans::evaluation::{auc_binary, compare, AlgorithmSpec, EvaluationReport};
use pkmeans::local_models::fit_predictive_kmeans;
use pkmeans::{json, stratified_kfold, Dataset, Execution, PkmConfig, PkmModel, Variant};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CV_SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn posterior_bound_property() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut checked = 0;
    for &j in &[2usize, 3, 5] {
        for &p in &[1.0, 2.0] {
            for _ in 0..10_000 {
                let d = rng.random_range(1..=8);
                let a = random_encoded(&mut rng, d, j);
                let b = random_encoded(&mut rng, d, j);
                let mut priors: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = priors.iter().sum();
                priors.iter_mut().for_each(|v| *v /= s);
                let lhs = delta_p(&a, &b, &priors, p).unwrap();
                let ea = log_evidence(&class_log_likelihoods(&a, j).unwrap(), &priors);
                let eb = log_evidence(&class_log_likelihoods(&b, j).unwrap(), &priors);
                let rhs = dist_b_p(&a, &b, j, p).unwrap() + j as f64 * (eb - ea).abs();
                if lhs > rhs {
                    violations += 1;
                }
                checked += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        violations == 0 && t < Duration::from_secs(5),
        format!("{checked} pairs, {violations} violations, {:.2} s (< 5 s)", t.as_secs_f64()),
    )
}

fn partition_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut num_match, mut num_beats) = (0, 0);
    for _ in 0..200 {
        let (values, labels, j) = random_interval_instance(&mut rng);
        let opt: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        let cost = discretize_numeric(&opt, &labels, j).unwrap().cost;
        let (best, _) = exhaustive_interval_optimum(&elementary_cells(&values, &labels, j), j);
        if (cost - best).abs() <= 1e-9 {
            num_match += 1;
        }
        if cost < best - 1e-9 {
            num_beats += 1;
        }
    }
    let (mut cat_match, mut cat_beats) = (0, 0);
    for _ in 0..200 {
        let (tokens, labels, j) = random_group_instance(&mut rng);
        let refs: Vec<Option<&str>> = tokens.iter().map(|t| Some(t.as_str())).collect();
        let cost = group_categorical(&refs, &labels, j).unwrap().cost;
        let (best, _) = exhaustive_group_optimum(&category_cells(&tokens, &labels, j), j);
        if (cost - best).abs() <= 1e-9 {
            cat_match += 1;
        }
        if cost < best - 1e-9 {
            cat_beats += 1;
        }
    }
    let t = start.elapsed();
    let pass = num_match >= 190 && cat_match >= 190 && num_beats == 0 && cat_beats == 0 && t < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "intervals {num_match}/200 optimal, groupings {cat_match}/200 optimal (>= 95%), {} below optimum, {:.2} s (< 60 s)",
            num_beats + cat_beats,
            t.as_secs_f64()
        ),
    )
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let scores: Vec<f64> = (0..50).map(|_| f64::from(rng.random_range(0..12u8)) / 12.0).collect();
        let mut pos: Vec<bool> = (0..50).map(|_| rng.random_bool(0.5)).collect();
        pos[0] = true;
        pos[1] = false;
        let diff = (auc_binary(&scores, &pos).unwrap() - auc_all_pairs(&scores, &pos)).abs();
        worst = worst.max(diff);
    }
    outcome(worst <= 1e-12, format!("100 instances, m = 50, max |diff| = {worst:e} (<= 1e-12)"))
}

fn determinism(pima: &Dataset) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    for variant in [Variant::PkmMv, Variant::PkmSnb] {
        let cfg = PkmConfig::new(variant);
        let j = pima.n_classes();
        let a = fit_predictive_kmeans(pima, j, 17, &cfg).unwrap();
        let b = fit_predictive_kmeans(pima, j, 17, &cfg).unwrap();
        let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
        json::save(&pa, &a).unwrap();
        json::save(&pb, &b).unwrap();
        identical &= std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
        let c = fit_predictive_kmeans(pima, j, 99, &cfg).unwrap();
        identical &= a.clustering == c.clustering;
    }
    outcome(identical, "Pima, K = J: model files byte-identical across runs and seeds")
}

fn evaluate_all(data: &Dataset, name: &str) -> EvaluationReport {
    let specs: Vec<AlgorithmSpec> = Variant::ALL
        .iter()
        .map(|&v| AlgorithmSpec::new(PkmConfig::new(v).with_seed(CV_SEED)))
        .collect();
    compare(data, name, &specs, 10, 10, CV_SEED, Execution::Parallel).unwrap()
}

fn acc(report: &EvaluationReport, name: &str) -> f64 {
    100.0 * report.algorithm(name).unwrap().test_acc.mean
}

fn auc(report: &EvaluationReport, name: &str) -> f64 {
    100.0 * report.algorithm(name).unwrap().test_auc.mean
}

fn separability(report: &EvaluationReport) -> Outcome {
    let (mv, snb) = (acc(report, "PKM_MV"), acc(report, "PKM_SNB"));
    outcome(
        mv >= 98.0 && snb >= 98.0,
        format!("blobs m = 400, 10x10 CV test ACC: PKM_MV {mv:.2}, PKM_SNB {snb:.2} (>= 98)"),
    )
}

fn reference_scores(glass: &EvaluationReport, pima: &EvaluationReport) -> Outcome {
    let rows = [
        ("Glass", acc(glass, "PKM_SNB"), 95.38, auc(glass, "PKM_SNB"), 98.27),
        ("Pima", acc(pima, "PKM_SNB"), 73.72, auc(pima, "PKM_SNB"), 78.44),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, a, a_ref, u, u_ref) in rows {
        pass &= (a - a_ref).abs() <= 5.0 && (u - u_ref).abs() <= 5.0;
        parts.push(format!("{name} ACC {a:.2} (ref {a_ref}) AUC {u:.2} (ref {u_ref})"));
    }
    outcome(pass, format!("PKM_SNB within 5 points: {}", parts.join("; ")))
}

fn ordering(reports: &[(&str, &EvaluationReport)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in reports {
        let (km, mv, snb) = (acc(r, "KM_MV"), acc(r, "PKM_MV"), acc(r, "PKM_SNB"));
        pass &= snb - mv >= -1.0 && mv - km >= -1.0;
        parts.push(format!("{name} {snb:.2} >= {mv:.2} >= {km:.2}"));
    }
    outcome(pass, format!("PKM_SNB >= PKM_MV >= KM_MV, gaps >= -1: {}", parts.join("; ")))
}

fn robustness(glass: &EvaluationReport, pima: &EvaluationReport) -> Outcome {
    let g = glass.algorithm("PKM_SNB").unwrap().robustness_acc;
    let p = pima.algorithm("PKM_SNB").unwrap().robustness_acc;
    outcome(g >= 0.9 && p >= 0.9, format!("PKM_SNB test/train ACC: Glass {g:.3}, Pima {p:.3} (>= 0.90)"))
}

fn synthetic(m: usize, seed: u64) -> Dataset {
    // Four overlapping features so the local models have work to do.
    let centers = [vec![0.0, 0.0, 0.0, 0.0], vec![1.5, 1.0, 0.5, 0.0]];
    let (rows, labels) = gaussian_blobs(&centers, &[0, 1], m / 2, 1.0, seed);
    numeric_dataset(&rows, &labels, &["A", "B"])
}

fn median_fit_seconds(data: &Dataset, repeats: usize) -> f64 {
    let cfg = PkmConfig::new(Variant::PkmSnb);
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            PkmModel::fit(data, &cfg, Execution::Sequential).unwrap();
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[repeats / 2]
}

fn performance(pima: &Dataset) -> Outcome {
    let plan = stratified_kfold(pima.labels(), 10, CV_SEED).unwrap();
    let (train, _) = plan.split(0);
    let fold = pima.subset(&train);
    let fold_time = median_fit_seconds(&fold, 3);
    let sizes = [1000usize, 2000, 4000, 8000];
    let times: Vec<f64> = sizes.iter().map(|&m| median_fit_seconds(&synthetic(m, 8), 3)).collect();
    let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let shown: Vec<String> = sizes.iter().zip(&times).map(|(m, t)| format!("{m}: {t:.4}s")).collect();
    outcome(
        fold_time < 2.0 && slope < 2.0,
        format!(
            "Pima fold ({} rows) {fold_time:.4} s (< 2 s); scaling {} slope {slope:.2} (< 2)",
            fold.len(),
            shown.join(", ")
        ),
    )
}

fn invariant_suites() -> Outcome {
    let cases = 1000;
    let runner = || {
        TestRunner::new(Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        })
    };
    let mut results = Vec::new();

    let normalization = runner().run(
        &(prop::collection::vec((0usize..2, 0u8..5, 0u8..5), 6..40), any::<u64>()),
        |(rows, seed)| {
            let mut labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
            labels[0] = 0;
            labels[1] = 1;
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![f64::from(r.1), f64::from(r.2)]).collect();
            let data = numeric_dataset(&x, &labels, &["a", "b"]);
            for variant in Variant::ALL {
                let model = PkmModel::fit(&data, &PkmConfig::new(variant).with_seed(seed), Execution::Sequential).unwrap();
                for row in data.rows() {
                    let p = model.predict(row).unwrap().probabilities;
                    prop_assert!(p.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
                    prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                for pred in &model.predictors {
                    prop_assert!(!pred.pure || pred.snb.is_none());
                }
            }
            Ok(())
        },
    );
    results.push(("probability normalization and pure => MV", normalization.is_ok()));

    let monotone = runner().run(
        &(prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 2), 4..60), 1usize..5, any::<u64>()),
        |(rows, k, seed)| {
            let p = Points::from_rows(&rows).unwrap();
            let k = k.min(rows.len());
            let init = kmeans_pp_init(&p, k, seed).unwrap();
            let model = fit_kmeans(&p, init, &LloydConfig { max_iter: 50, tol: 0.0 }, Execution::Sequential).unwrap();
            for w in model.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0]));
            }
            Ok(())
        },
    );
    results.push(("inertia monotonicity", monotone.is_ok()));

    let folds = runner().run(
        &(prop::collection::vec(0usize..3, 10..150), 2usize..11, any::<u64>()),
        |(labels, k, seed)| {
            let plan = stratified_kfold(&labels, k, seed).unwrap();
            let mut seen = vec![0u8; labels.len()];
            for fold in &plan.folds {
                for &i in fold {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            Ok(())
        },
    );
    results.push(("fold disjointness", folds.is_ok()));

    let pass = results.iter().all(|r| r.1);
    let shown: Vec<String> = results
        .iter()
        .map(|(n, ok)| format!("{n}: {}", if *ok { "ok" } else { "FAILED" }))
        .collect();
    outcome(pass, format!("{cases} cases each; {}", shown.join("; ")))
}

fn main() -> ExitCode {
    let glass_data = load_fixture("glass");
    let pima_data = load_fixture("pima");
    let blobs = two_blobs(400, 7);

    let mut results: Vec<(&str, Outcome)> = vec![
        ("posterior-distance-bound", posterior_bound_property()),
        ("partition-oracles", partition_oracles()),
        ("auc-oracle", auc_oracle()),
        ("determinism", determinism(&pima_data)),
    ];
    let glass = evaluate_all(&glass_data, "glass");
    let pima = evaluate_all(&pima_data, "pima");
    let synth = evaluate_all(&blobs, "blobs");
    print!("{}", glass.render_table());
    print!("{}", pima.render_table());
    print!("{}", synth.render_table());
    results.push(("synthetic-separability", separability(&synth)));
    results.push(("reference-scores", reference_scores(&glass, &pima)));
    results.push(("ordering", ordering(&[("Glass", &glass), ("Pima", &pima), ("blobs", &synth)])));
    results.push(("robustness", robustness(&glass, &pima)));
    results.push(("performance-envelope", performance(&pima_data)));
    results.push(("invariant-suites", invariant_suites()));

    println!();
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
