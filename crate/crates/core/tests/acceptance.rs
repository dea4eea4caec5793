//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails. Takes a couple of minutes in release-like test builds.

use std::time::Instant;

use hnp::featurize::{
    drop_sparse_cell_types, featurize_m1, featurize_m2, featurize_m3, featurize_m4, first_pc,
    nonzero_mean, FeatureVectorSet, Matrix, PatientMatrix, DEFAULT_MAX_ZERO_FRACTION,
};
use hnp::scoring::{LogisticModel, ScoreModel};
use hnp::simlab::{
    estimate_errors, generate_setting, nearest_rank_quantile, run_monte_carlo, threshold_sweep,
    ErrorReport, Method, MonteCarloConfig, MonteCarloSummary, SimulationSetting,
};
use hnp::umbrella::{
    default_slack, fit_general, fit_three_class, split_for_control, upper_bound, ControlSpec,
    FitOptions, RoleFractions, ScoreSample, ScoredSplit, SplitPlan,
};
use hnp::{binomial_tail, delta_search, fit_hnp, BaseLearner, LabeledDataset};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

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

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn mean(s: &MonteCarloSummary, m: Method, name: &str) -> f64 {
    s.method(m).unwrap().metric(name).unwrap().mean
}

fn q95(s: &MonteCarloSummary, m: Method, name: &str) -> f64 {
    s.method(m).unwrap().metric(name).unwrap().quantile.unwrap()
}

fn t1_run() -> MonteCarloSummary {
    let spec = ControlSpec::uniform(3, 0.05, 0.05).unwrap();
    let mut c = MonteCarloConfig::new(SimulationSetting::t1_1(), spec, 1000, 2024);
    c.methods = vec![Method::Hnp, Method::HnpUnconditional, Method::Roc];
    c.sweep_ranks = Some(1000);
    run_monte_carlo(&c).unwrap()
}

fn criterion_1(s: &MonteCarloSummary) -> Outcome {
    let sweep = s.sweep.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for r in &sweep.ranks {
        for name in ["error1", "error23"] {
            worst = worst.max(r.metric(name).unwrap().quantile.unwrap());
        }
    }
    let hnp = q95(s, Method::Hnp, "error1").max(q95(s, Method::Hnp, "error23"));
    outcome(
        worst <= 0.06 && hnp <= 0.06 && s.excluded == 0,
        format!(
            "{} ranks, max 95% quantile over ranks {worst:.4}, selected fit {hnp:.4}, excluded {}",
            sweep.ranks.len(),
            s.excluded
        ),
    )
}

fn criterion_2(s: &MonteCarloSummary) -> Outcome {
    let p23 = mean(s, Method::HnpUnconditional, "error23");
    let t23 = mean(s, Method::Hnp, "error23");
    let p32 = mean(s, Method::HnpUnconditional, "error32");
    let t32 = mean(s, Method::Hnp, "error32");
    let pass = near(p23, 0.006, 0.01)
        && near(t23, 0.020, 0.01)
        && near(p32, 0.082, 0.015)
        && near(t32, 0.046, 0.015)
        && t32 < p32;
    outcome(
        pass,
        format!("error23 unadjusted {p23:.4} adjusted {t23:.4}; error32 unadjusted {p32:.4} adjusted {t32:.4}"),
    )
}

fn criterion_3(s: &MonteCarloSummary) -> Outcome {
    let roc1 = q95(s, Method::Roc, "error1");
    let hnp1 = q95(s, Method::Hnp, "error1");
    let roc32 = mean(s, Method::Roc, "error32");
    let hnp32 = mean(s, Method::Hnp, "error32");
    let pass = near(roc1, 0.074, 0.015)
        && near(hnp1, 0.045, 0.015)
        && near(roc32, 0.096, 0.015)
        && near(hnp32, 0.047, 0.015)
        && hnp1 < roc1
        && hnp32 < roc32;
    outcome(
        pass,
        format!(
            "error1 q95 ROC {roc1:.4} H-NP {hnp1:.4}; error32 mean ROC {roc32:.4} H-NP {hnp32:.4}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let spec = ControlSpec::uniform(3, 0.05, 0.05).unwrap();
    let mut c = MonteCarloConfig::new(SimulationSetting::t2_1(), spec, 1000, 2025);
    c.methods = vec![Method::Hnp, Method::Roc];
    let s = run_monte_carlo(&c).unwrap();
    let roc = [
        q95(&s, Method::Roc, "error1"),
        q95(&s, Method::Roc, "error23"),
    ];
    let hnp = [
        q95(&s, Method::Hnp, "error1"),
        q95(&s, Method::Hnp, "error23"),
    ];
    let pass = roc.iter().all(|&q| q > 0.05) && hnp.iter().all(|&q| q <= 0.06);
    outcome(
        pass,
        format!(
            "ROC q95 ({:.4}, {:.4}); H-NP q95 ({:.4}, {:.4})",
            roc[0], roc[1], hnp[0], hnp[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let spec = ControlSpec::uniform(3, 0.1, 0.05).unwrap();
    let mut c = MonteCarloConfig::new(SimulationSetting::t3_1(), spec, 300, 2026);
    c.methods = vec![];
    let s = threshold_sweep(&c, 1000).unwrap();
    let ranks = &s.sweep.as_ref().unwrap().ranks;
    // Last rank reached by every rep, so each point averages the same reps.
    let full: Vec<f64> = ranks
        .iter()
        .take_while(|r| r.available == s.completed)
        .map(|r| r.metric("remaining").unwrap().mean)
        .collect();
    let (first, last) = (full[0], *full.last().unwrap());
    let (k_min, min) =
        full.iter().enumerate().fold(
            (0, f64::INFINITY),
            |b, (k, &v)| if v < b.1 { (k, v) } else { b },
        );
    outcome(
        min < first.min(last),
        format!(
            "K = {}: R^c(1) {first:.4}, R^c(K) {last:.4}, minimum {min:.4} at rank {}",
            full.len(),
            k_min + 1
        ),
    )
}

fn check(failures: &mut Vec<String>, ok: bool, what: &str) {
    if !ok {
        failures.push(what.to_string());
    }
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();

    // delta_search against a direct scan of the tail, all n <= 200.
    let mut cases = 0usize;
    let mut tail_ok = true;
    let mut search_ok = true;
    for n in 1..=200usize {
        for a in 1..100 {
            let alpha = a as f64 / 100.0;
            let tails: Vec<f64> = (1..=n + 1)
                .map(|k| binomial_tail(k, n, alpha).unwrap())
                .collect();
            tail_ok &= tails.windows(2).all(|w| w[0] <= w[1]);
            tail_ok &= (tails[n] - 1.0).abs() <= 1e-12;
            for d in 1..100 {
                let delta = d as f64 / 100.0;
                let scan = (1..=n)
                    .rev()
                    .find(|&k| tails[k - 1] <= delta * (1.0 + 1e-12));
                search_ok &= delta_search(n, alpha, delta).ok() == scan;
                cases += 1;
            }
        }
    }
    check(&mut failures, search_ok, "delta_search scan");
    check(&mut failures, tail_ok, "tail monotone / v(n+1) = 1");

    // Three-class search and the general search agree bitwise.
    let spec = ControlSpec::uniform(3, 0.05, 0.05).unwrap();
    let mut agree = true;
    for seed in 0..20u64 {
        let (data, _) = generate_setting(&SimulationSetting::t1_1(), seed).unwrap();
        let split = split_for_control(&data, &SplitPlan::standard(3), &spec, seed).unwrap();
        let model = BaseLearner::default()
            .fit(&data.subset(&split.score_indices()))
            .unwrap();
        let scored = ScoredSplit::new(&model, &data, &split).unwrap();
        let opts = FitOptions::default();
        let a = fit_three_class(&scored, model.clone(), &spec, &opts).unwrap();
        let b = fit_general(&scored, model, &spec, &opts).unwrap();
        agree &= a
            .thresholds()
            .iter()
            .zip(b.thresholds())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    }
    check(&mut failures, agree, "fit_general = fit_three_class");

    let s = vec![0.1, 0.2, 0.3, 0.4];
    let ub = upper_bound(
        &ScoreSample::new(s.clone(), Some(s)).unwrap(),
        0.5,
        0.5,
        default_slack,
    )
    .unwrap();
    check(&mut failures, ub.value == 0.1, "upper_bound hand example");

    // Posterior normalization on random models and inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.gen_range(2..7);
        let d = rng.gen_range(1..6);
        let mut m = LogisticModel::zeros(k, d);
        m.weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-40.0..40.0));
        m.bias
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-40.0..40.0));
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let p = ScoreModel::MultinomialLogistic(m).posterior(&x).unwrap();
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    check(&mut failures, worst <= 1e-9, "posterior normalization");

    // first_pc against a dense symmetric eigendecomposition.
    let mut pc_ok = true;
    for _ in 0..100 {
        let (r, c) = (rng.gen_range(2..=50), rng.gen_range(1..=50));
        let values: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Matrix::new(r, c, values).unwrap();
        let pc = first_pc(&m).unwrap();
        let x = DMatrix::from_row_slice(r, c, m.values());
        let mu = x.row_mean();
        let xc = DMatrix::from_fn(r, c, |i, j| x[(i, j)] - mu[j]);
        let cov = xc.transpose() * &xc / (r as f64 - 1.0);
        let top = SymmetricEigen::new(cov.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        let w = DVector::from_vec(pc.loadings);
        pc_ok &= (w.norm() - 1.0).abs() <= 1e-12;
        pc_ok &= (&cov * &w - &w * top).norm() <= 1e-8 * top.max(1.0);
    }
    check(&mut failures, pc_ok, "first_pc eigen residual");

    let m4 = nonzero_mean(&[
        PatientMatrix::unnamed(
            "a",
            Matrix::from_rows(&[vec![2.0, 0.0], vec![4.0, 4.0]]).unwrap(),
        ),
        PatientMatrix::unnamed(
            "b",
            Matrix::from_rows(&[vec![0.0, 6.0], vec![0.0, 2.0]]).unwrap(),
        ),
    ])
    .unwrap();
    check(
        &mut failures,
        m4.to_rows() == vec![vec![2.0, 6.0], vec![4.0, 3.0]],
        "M4 mean matrix",
    );

    let detail = if failures.is_empty() {
        format!("{cases} delta_search cases, 10000 posteriors (max |sum - 1| {worst:.1e}), 100 PCA oracles, hand examples")
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

const GENES: usize = 100;
const CELL_TYPES: usize = 10;

/// Class-specific mean matrices: a shared baseline plus a class effect on
/// a block of genes in the first six cell types.
fn class_means(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..GENES * CELL_TYPES)
        .map(|_| rng.gen_range(1.0..3.0))
        .collect();
    (0..3)
        .map(|c| {
            base.iter()
                .enumerate()
                .map(|(idx, b)| {
                    let (u, v) = (idx / CELL_TYPES, idx % CELL_TYPES);
                    let block = u / 10;
                    let shift = if v < 6 && block == c { 1.2 } else { 0.0 };
                    b + shift
                        + if v < 6 && block == 3 {
                            0.6 * c as f64
                        } else {
                            0.0
                        }
                })
                .collect()
        })
        .collect()
}

/// Noisy, nonnegative patient matrix with about 8% dropout zeros and a
/// last cell type that is almost always absent.
fn draw_patient(rng: &mut ChaCha8Rng, id: String, mean: &[f64]) -> PatientMatrix {
    let noise = Normal::new(0.0, 0.7).unwrap();
    let values = mean
        .iter()
        .enumerate()
        .map(|(idx, m)| {
            let sparse = idx % CELL_TYPES == CELL_TYPES - 1;
            if rng.gen_bool(if sparse { 0.98 } else { 0.08 }) {
                0.0
            } else {
                (m + noise.sample(rng)).max(0.0)
            }
        })
        .collect();
    PatientMatrix::unnamed(id, Matrix::new(GENES, CELL_TYPES, values).unwrap())
}

fn draw_cohort(
    rng: &mut ChaCha8Rng,
    means: &[Vec<f64>],
    sizes: &[usize],
    tag: &str,
) -> (Vec<PatientMatrix>, Vec<usize>) {
    let mut patients = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            patients.push(draw_patient(rng, format!("{tag}{c}_{j}"), &means[c]));
            labels.push(c + 1);
        }
    }
    (patients, labels)
}

fn report_invariants(r: &ErrorReport) -> bool {
    let k = r.num_classes();
    let rates_ok = r.metrics().iter().all(|(_, v)| (0.0..=1.0).contains(v));
    let rows_ok = (1..=k).all(|i| {
        let total: f64 = (1..=k).map(|j| r.rate(i, j)).sum();
        let lower: f64 = (1..i).map(|j| r.rate(i, j)).sum();
        (total - 1.0).abs() < 1e-12
            && (r.under(i) + r.rate(i, i) + lower - 1.0).abs() < 1e-12
            && (r.class_error(i) - r.under(i) - lower).abs() < 1e-12
    });
    let n: usize = (1..=k).map(|i| r.class_size(i)).sum();
    let pi = |i: usize| r.class_size(i) as f64 / n as f64;
    let overall: f64 = (1..=k).map(|i| pi(i) * r.class_error(i)).sum();
    let remaining: f64 = (2..=k)
        .map(|i| pi(i) * (1..i).map(|j| r.rate(i, j)).sum::<f64>())
        .sum();
    rates_ok
        && rows_ok
        && (overall - r.overall()).abs() < 1e-12
        && (remaining - r.remaining()).abs() < 1e-12
        && r.remaining() <= r.overall() + 1e-12
}

fn to_dataset(set: &FeatureVectorSet, labels: &[usize]) -> LabeledDataset {
    LabeledDataset::new(set.vectors.clone(), labels.to_vec(), 3).unwrap()
}

/// Each replicate draws its own 50-patient training cohort from the same
/// generator, featurizes it, splits it at random and fits H-NP; errors are
/// measured on one large independent test cohort.
fn criterion_7() -> Outcome {
    const REPS: u64 = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let means = class_means(&mut rng);
    let (test, test_labels) = draw_cohort(&mut rng, &means, &[1000, 1000, 1000], "te");
    let spec = ControlSpec::uniform(3, 0.2, 0.2).unwrap();
    let plan = SplitPlan::new(vec![
        RoleFractions::new(0.5, 0.5, 0.0),
        RoleFractions::new(0.4, 0.5, 0.1),
        RoleFractions::new(0.7, 0.0, 0.3),
    ])
    .unwrap();
    let mut errors = vec![(Vec::new(), Vec::new()); 4];
    let mut invariants = true;
    let mut kept_ok = true;
    for rep in 0..REPS {
        let (train, train_labels) = draw_cohort(&mut rng, &means, &[20, 20, 10], "tr");
        let kept = drop_sparse_cell_types(&train, DEFAULT_MAX_ZERO_FRACTION).unwrap();
        kept_ok &= kept.len() == CELL_TYPES - 1;
        let fits = [
            featurize_m1(&train, 20).unwrap(),
            featurize_m2(&train, &kept).unwrap(),
            featurize_m3(&train, &kept).unwrap(),
            featurize_m4(&train).unwrap(),
        ];
        for (set, (e1, e2)) in fits.iter().zip(errors.iter_mut()) {
            let data = to_dataset(set, &train_labels);
            let test_set = to_dataset(&set.featurization.apply(&test).unwrap(), &test_labels);
            let (clf, _) = fit_hnp(
                &data,
                &plan,
                &spec,
                &BaseLearner::default(),
                rep,
                &FitOptions::default(),
            )
            .unwrap();
            let r = estimate_errors(&clf, &test_set).unwrap();
            invariants &= report_invariants(&r);
            e1.push(r.under(1));
            e2.push(r.under(2));
        }
    }
    let mut pass = kept_ok && invariants;
    let mut parts = Vec::new();
    for (name, (e1, e2)) in ["M1", "M2", "M3", "M4"].iter().zip(&errors) {
        let q1 = nearest_rank_quantile(e1, 0.8).unwrap();
        let q2 = nearest_rank_quantile(e2, 0.8).unwrap();
        pass &= q1 <= 0.22 && q2 <= 0.22;
        parts.push(format!("{name} q80 ({q1:.3}, {q2:.3})"));
    }
    if !invariants {
        parts.push("report invariants broken".into());
    }
    if !kept_ok {
        parts.push("sparse cell type not dropped".into());
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    let t1 = t1_run();
    results.push((1, criterion_1(&t1)));
    results.push((2, criterion_2(&t1)));
    results.push((3, criterion_3(&t1)));
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));

    let mut failed = 0;
    for (n, o) in &results {
        println!(
            "criterion {n}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.0?}",
        results.len() - failed,
        results.len(),
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
