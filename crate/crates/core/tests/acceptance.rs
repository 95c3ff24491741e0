//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line
//! with the measured quantities and its runtime, then asserts.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::time::{Duration, Instant};

use acl_core::eval::{run_experiment, ExperimentConfig, ExperimentResult, PlantedMixture};
use acl_core::features::FrequencyLaw;
use acl_core::models::{entropy_bound, required_sketch_size, sketch_model, SketchSizeTask};
use acl_core::sketch::{relative_distance, simulate_nodes, sketch_dataset};
use acl_core::solver::{cost_gradient, cost_values};
use acl_core::theory::{cost_shift, lemma2_check, slpd_error};
use acl_core::{
    BoxDomain, Dataset, DiracMixture, FeatureMap, FeatureMapConfig, GaussianMixture, Mixture,
    PeriodicFunction, TaskKind,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(criterion: u32, passed: bool, started: Instant, budget: Duration, detail: String) {
    let elapsed = started.elapsed();
    let in_time = elapsed <= budget;
    let status = if passed && in_time { "PASS" } else { "FAIL" };
    println!(
        "{status} criterion {criterion}: {detail} [{:.1} s, budget {} s]",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
    assert!(in_time, "criterion {criterion} exceeded its time budget");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn map_config(d: usize, m: usize, sigma2: f64, seed: u64) -> FeatureMapConfig {
    FeatureMapConfig {
        d,
        m,
        law: FrequencyLaw::Gaussian,
        sigma2,
        omega_seed: seed,
        dither_seed: Some(seed.wrapping_mul(31).wrapping_add(7)),
        nonlinearity: PeriodicFunction::ComplexExponential,
        renormalize: false,
    }
}

/// Reference map and the renormalized distorted map on the same Ω and ξ.
fn map_pair(d: usize, m: usize, sigma2: f64, seed: u64, f: PeriodicFunction) -> (FeatureMap, FeatureMap) {
    let config = map_config(d, m, sigma2, seed);
    (config.build().unwrap(), config.with_nonlinearity(f, true).build().unwrap())
}

fn random_dirac_grid(rng: &mut ChaCha8Rng, domain: &BoxDomain, count: usize, k: usize) -> Vec<Mixture> {
    (0..count)
        .map(|_| {
            let centroids = (0..k).map(|_| domain.sample(rng)).collect();
            Mixture::Dirac(DiracMixture::uniform(centroids).unwrap())
        })
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn print_table(result: &ExperimentResult) {
    let mut out = Vec::new();
    result.write_csv(&mut out).unwrap();
    print!("{}", String::from_utf8(out).unwrap());
}

#[test]
fn criterion_01_periodic_constants() {
    let started = Instant::now();
    let q = PeriodicFunction::UniversalQuantizer;
    let modulo = PeriodicFunction::ComplexModulo;
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol {
            failures.push(format!("{name} = {got}, expected {want} ± {tol}"));
        }
    };

    let q1 = q.fourier_coefficient(1).unwrap();
    let m1 = modulo.fourier_coefficient(1).unwrap();
    check("Re Q1", q1.re, 4.0 / PI, 1e-6);
    check("Im Q1", q1.im, 0.0, 1e-6);
    check("Re M1", m1.re, 0.0, 1e-6);
    check("Im M1", m1.im, 2.0 / PI, 1e-6);

    let lq = q.mean_lipschitz();
    let lmod = modulo.mean_lipschitz();
    check("L_q", lq, 8.0 / PI, 1e-2);
    check("L_mod", lmod, (4.0 + SQRT_2) / PI, 1e-2);

    check("C_q", q.distortion_constant().unwrap(), 1.0 + PI / (2.0 * SQRT_2), 1e-9);
    check("C_mod", modulo.distortion_constant().unwrap(), 1.0 + 5f64.sqrt() * PI / 4.0, 1e-9);

    for smoothness in [0.5, 1.0, 3.0] {
        let cq = 24.0 * smoothness;
        let cmod = (24.0 + 2.0 * SQRT_2) * smoothness;
        let closed_q = q.mean_lipschitz_closed_form().unwrap();
        let closed_mod = modulo.mean_lipschitz_closed_form().unwrap();
        check("c_q (closed L)", q.covering_constant_with(smoothness, closed_q).unwrap(), cq, 1e-9);
        check("c_mod (closed L)", modulo.covering_constant_with(smoothness, closed_mod).unwrap(), cmod, 1e-9);
        check("c_q (numeric L)", q.covering_constant_with(smoothness, lq).unwrap(), cq, 5e-2);
        check("c_mod (numeric L)", modulo.covering_constant_with(smoothness, lmod).unwrap(), cmod, 5e-2);
    }

    let detail = if failures.is_empty() {
        format!("Q1 = {q1:.9}, M1 = {m1:.9}, L_q = {lq:.5}, L_mod = {lmod:.5}")
    } else {
        failures.join("; ")
    };
    verdict(1, failures.is_empty(), started, secs(10), detail);
}

#[test]
fn criterion_02_slpd_trend() {
    let started = Instant::now();
    let sizes = [64, 256, 1024, 4096];
    let seeds = 10u64;
    let pairs = 2000;
    let sigma2 = 20.0;
    let domain = BoxDomain::unit(2);
    let mut medians = Vec::new();
    let mut ordered_counts = Vec::new();
    for &m in &sizes {
        let mut quantized = Vec::new();
        let mut ordered = 0;
        for seed in 0..seeds {
            let (phi, psi_q) = map_pair(2, m, sigma2, seed, PeriodicFunction::UniversalQuantizer);
            let psi_mod = phi.with_nonlinearity(PeriodicFunction::ComplexModulo, true).unwrap();
            let eq = slpd_error(&phi, &psi_q, &domain, pairs, 1000 + seed).unwrap().eps_hat;
            let emod = slpd_error(&phi, &psi_mod, &domain, pairs, 1000 + seed).unwrap().eps_hat;
            quantized.push(eq);
            if emod >= eq {
                ordered += 1;
            }
        }
        medians.push(median(quantized));
        ordered_counts.push(ordered);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let ordering = ordered_counts.iter().all(|&c| c >= 7);
    let detail = format!(
        "median eps_hat(q) over m {sizes:?} = {:?}; seeds with eps_hat(mod) >= eps_hat(q): {ordered_counts:?}/10",
        medians.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
    );
    verdict(2, decreasing && ordering, started, secs(120), detail);
}

#[test]
fn criterion_03_lemma2_certificate() {
    let started = Instant::now();
    let mut holds = 0;
    let mut worst_margin = f64::INFINITY;
    for instance in 0..100u64 {
        let planted = PlantedMixture {
            k: 3,
            d: 2,
            separation: 4.0,
            component_std: 0.05,
            std_spread: 0.25,
        }
        .generate(300, instance)
        .unwrap();
        let data = planted.samples;
        let (lower, upper) = data.bounds().unwrap();
        let domain = BoxDomain::new(lower, upper).unwrap();
        let (phi, psi) = map_pair(2, 256, 20.0, 500 + instance, PeriodicFunction::UniversalQuantizer);
        let z_sym = sketch_dataset(&phi, &data).unwrap();
        let z_asym = sketch_dataset(&psi, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(instance);
        let grid = random_dirac_grid(&mut rng, &domain, 100, 3);
        let report = lemma2_check(&phi, &psi, &z_sym, &z_asym, &grid).unwrap();
        // the report's verdict must agree with its own numbers
        assert_eq!(report.holds, report.lhs <= report.rhs + 1e-12);
        if report.holds {
            holds += 1;
        }
        worst_margin = worst_margin.min(report.rhs - report.lhs);
    }
    verdict(
        3,
        holds == 100,
        started,
        secs(120),
        format!("holds on {holds}/100 instances, smallest margin rhs - lhs = {worst_margin:.3e}"),
    );
}

#[test]
fn criterion_04_cost_shift() {
    let started = Instant::now();
    let planted = PlantedMixture {
        k: 3,
        d: 2,
        ..PlantedMixture::default()
    }
    .generate(200, 4)
    .unwrap();
    let data = planted.samples;
    let (lower, upper) = data.bounds().unwrap();
    let domain = BoxDomain::new(lower, upper).unwrap();
    let reference = map_config(2, 64, 20.0, 44).build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let models = random_dirac_grid(&mut rng, &domain, 10, 3);
    let report = cost_shift(&reference, &PeriodicFunction::UniversalQuantizer, &data, &models, 10_000, 41).unwrap();
    let sigmas = report.max_squared_sigmas();
    verdict(
        4,
        sigmas <= 3.0,
        started,
        secs(120),
        format!(
            "squared-cost shift spread = {sigmas:.2} sigma over 10 models (unsquared: {:.2} sigma), mean shift {:.4e}",
            report.max_unsquared_sigmas(),
            report.squared_shift.iter().sum::<f64>() / 10.0
        ),
    );
}

#[test]
fn criterion_05_gaussian_sketch_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mean: Vec<f64> = (0..2).map(|_| rng.random()).collect();
    let variances: Vec<f64> = (0..2).map(|_| 0.001 + 0.009 * rng.random::<f64>()).collect();
    let model = Mixture::Gaussian(GaussianMixture::new(vec![1.0], vec![mean.clone()], vec![variances.clone()]).unwrap());
    let map = map_config(2, 16, 20.0, 55).build().unwrap();
    let analytic = sketch_model(&map, &model).unwrap();

    let samples = 1_000_000;
    let mut sums = vec![Complex64::new(0.0, 0.0); 16];
    for _ in 0..samples {
        let x: Vec<f64> = mean
            .iter()
            .zip(&variances)
            .map(|(mu, v)| {
                let g: f64 = StandardNormal.sample(&mut rng);
                mu + v.sqrt() * g
            })
            .collect();
        for (j, s) in sums.iter_mut().enumerate() {
            let w = map.frequencies().column(j);
            let phase = w[0] * x[0] + w[1] * x[1] + map.dither()[j];
            *s += Complex64::from_polar(1.0, phase);
        }
    }
    let monte_carlo: Vec<Complex64> = sums.iter().map(|s| s / (samples as f64 * 4.0)).collect();
    let worst = analytic
        .iter()
        .zip(&monte_carlo)
        .map(|(a, b)| (a - b).norm() / a.norm())
        .fold(0.0, f64::max);
    verdict(
        5,
        worst <= 1e-2,
        started,
        secs(30),
        format!("largest relative entry error {worst:.2e} over m = 16"),
    );
}

#[test]
fn criterion_06_merge_exactness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 5000;
    let data = Dataset::new(3, (0..3 * n).map(|_| rng.random()).collect()).unwrap();
    let map = map_config(3, 64, 30.0, 66)
        .with_nonlinearity(PeriodicFunction::UniversalQuantizer, false)
        .build()
        .unwrap();
    let runs: Vec<_> = [1, 4, 16].iter().map(|&nodes| simulate_nodes(&map, &data, nodes, 64).unwrap()).collect();
    let spread = runs
        .iter()
        .map(|r| relative_distance(r.sketch.values(), runs[0].sketch.values()))
        .fold(0.0, f64::max);
    let expected_bits = (n * 2 * 64) as u64;
    let bits_ok = runs.iter().all(|r| r.total_bits == expected_bits);
    let counts_ok = runs.iter().all(|r| r.sketch.count() == n as u64);
    verdict(
        6,
        spread <= 1e-12 && bits_ok && counts_ok,
        started,
        secs(10),
        format!(
            "largest relative disagreement {spread:.2e}; bit tallies {:?}, expected {expected_bits}",
            runs.iter().map(|r| r.total_bits).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_07_experiment_sketch_size() {
    let started = Instant::now();
    let cfg = ExperimentConfig {
        task: TaskKind::KMeans,
        k: 10,
        d: 5,
        n_list: vec![10_000],
        m_over_kd: vec![2.0, 10.0],
        trials: 10,
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&cfg, 1).unwrap();
    print_table(&result);
    let rate = |m: usize, kind: &str| result.cell(10_000, m, kind).unwrap().success_rate;
    let (rff_large, q_large) = (rate(500, "rff"), rate(500, "quantized"));
    let (rff_small, q_small, mod_small) = (rate(100, "rff"), rate(100, "quantized"), rate(100, "modulo"));
    let passed = rff_large >= 0.8 && q_large >= 0.7 && rff_small >= q_small && q_small >= mod_small;
    verdict(
        7,
        passed,
        started,
        secs(15 * 60),
        format!(
            "success at m/Kd=10: rff {rff_large}, quantized {q_large}; at m/Kd=2: rff {rff_small}, quantized {q_small}, modulo {mod_small}"
        ),
    );
}

#[test]
fn criterion_08_experiment_dataset_size() {
    let started = Instant::now();
    let cfg = ExperimentConfig {
        task: TaskKind::KMeans,
        k: 10,
        d: 5,
        n_list: vec![100, 10_000],
        m_over_kd: vec![2.0, 100.0],
        kinds: vec![PeriodicFunction::ComplexExponential, PeriodicFunction::UniversalQuantizer],
        trials: 15,
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&cfg, 1).unwrap();
    print_table(&result);
    let excess = |n: usize, m: usize, kind: &str| result.cell(n, m, kind).unwrap().median_excess;
    let (small, large) = (100, 5000);
    // small sketches: the quantized cell is worse than the rff cell at each n
    let by_kind = [100, 10_000].iter().all(|&n| excess(n, small, "quantized") > excess(n, small, "rff"));
    // large sketches: both n = 10² cells are worse than both n = 10⁴ cells
    let worst_big_n = excess(10_000, large, "rff").max(excess(10_000, large, "quantized"));
    let best_small_n = excess(100, large, "rff").min(excess(100, large, "quantized"));
    let by_size = best_small_n > worst_big_n;
    verdict(
        8,
        by_kind && by_size,
        started,
        secs(20 * 60),
        format!(
            "m/Kd=2 median excess (rff, quantized): n=100 ({:.1}, {:.1}), n=10000 ({:.1}, {:.1}); \
             m/Kd=100: n=100 ({:.2}, {:.2}), n=10000 ({:.2}, {:.2})",
            excess(100, small, "rff"),
            excess(100, small, "quantized"),
            excess(10_000, small, "rff"),
            excess(10_000, small, "quantized"),
            excess(100, large, "rff"),
            excess(100, large, "quantized"),
            excess(10_000, large, "rff"),
            excess(10_000, large, "quantized"),
        ),
    );
}

/// Largest relative gap between the analytic cost gradient and central
/// differences of the cost, over every coordinate.
fn gradient_gap(map: &FeatureMap, z: &[Complex64], model: &Mixture) -> f64 {
    let grad = cost_gradient(map, z, model).unwrap();
    let h = 1e-6;
    let cost = |m: &Mixture| cost_values(map, z, m).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut push = |value: f64, edit: &dyn Fn(&mut Mixture, f64)| {
        let mut plus = model.clone();
        let mut minus = model.clone();
        edit(&mut plus, h);
        edit(&mut minus, -h);
        analytic.push(value);
        numeric.push((cost(&plus) - cost(&minus)) / (2.0 * h));
    };
    for k in 0..model.k() {
        push(grad.weights[k], &|m, e| match m {
            Mixture::Dirac(x) => x.weights[k] += e,
            Mixture::Gaussian(x) => x.weights[k] += e,
        });
        for l in 0..model.dim() {
            push(grad.locations[k][l], &|m, e| match m {
                Mixture::Dirac(x) => x.centroids[k][l] += e,
                Mixture::Gaussian(x) => x.means[k][l] += e,
            });
            if let Some(v) = &grad.variances {
                push(v[k][l], &|m, e| {
                    if let Mixture::Gaussian(x) = m {
                        x.variances[k][l] += e;
                    }
                });
            }
        }
    }
    let scale = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * scale))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_09_gradient_check() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 3;
    let k = 3;
    let map = map_config(d, 60, 15.0, 99).build().unwrap();
    let data = Dataset::new(d, (0..300 * d).map(|_| rng.random()).collect()).unwrap();
    let z = sketch_dataset(&map, &data).unwrap();
    let mut worst_dirac: f64 = 0.0;
    let mut worst_gmm: f64 = 0.0;
    for _ in 0..20 {
        let weights: Vec<f64> = {
            let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|w| w / total).collect()
        };
        let locations: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let dirac = Mixture::Dirac(DiracMixture::new(weights.clone(), locations.clone()).unwrap());
        worst_dirac = worst_dirac.max(gradient_gap(&map, z.values(), &dirac));
        let variances = (0..k).map(|_| (0..d).map(|_| 0.005 + 0.05 * rng.random::<f64>()).collect()).collect();
        let gmm = Mixture::Gaussian(GaussianMixture::new(weights, locations, variances).unwrap());
        worst_gmm = worst_gmm.max(gradient_gap(&map, z.values(), &gmm));
    }
    verdict(
        9,
        worst_dirac <= 1e-5 && worst_gmm <= 1e-5,
        started,
        secs(10),
        format!("largest relative gradient error: k-means {worst_dirac:.2e}, GMM {worst_gmm:.2e}"),
    );
}

#[test]
fn criterion_10_plug_in_formulas() {
    let started = Instant::now();
    let line = BoxDomain::unit(1);
    let size = required_sketch_size(&PeriodicFunction::UniversalQuantizer, 1.0, &line, 1.0, SketchSizeTask::KMeans).unwrap();
    let entropy = entropy_bound(&line, 0.5).unwrap();
    // ⌈128 ln(1 + 24)⌉
    let expected_size = (128.0 * 25f64.ln()).ceil() as u64;
    verdict(
        10,
        size == 413 && expected_size == 413 && entropy == 3f64.ln(),
        started,
        secs(1),
        format!("required sketch size {size}, entropy bound {entropy} (ln 3 = {})", 3f64.ln()),
    );
}

#[test]
fn periodic_maps_stay_periodic_under_the_acceptance_configuration() {
    // sanity check of the shared helpers: both maps of a pair share Ω and ξ
    let (phi, psi) = map_pair(2, 8, 20.0, 3, PeriodicFunction::UniversalQuantizer);
    assert!(phi.shares_frequencies(&psi));
    let x = [0.25, 0.75];
    let shifted: Vec<f64> = (0..8).map(|j| phi.phase(j, &x) + TAU).collect();
    for (j, t) in shifted.iter().enumerate() {
        let direct = phi.apply(&x).unwrap()[j];
        assert!((Complex64::from_polar(phi.output_scale().re, *t) - direct).norm() < 1e-12);
    }
}
