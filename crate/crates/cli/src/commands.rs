use std::fs;
use std::io::{self, Write};
use std::path::Path;

use acl_core::eval::{
    em_baseline, empirical_excess_risk, kmeans_baseline, risk, run_experiment, success,
    ExperimentConfig, PlantedMixture,
};
use acl_core::models::ModelFile;
use acl_core::sketch::simulate_nodes;
use acl_core::theory::{lemma2_check, slpd_error, smoothness_constant_gaussian};
use acl_core::{
    sketch_dataset, solve, BoxDomain, Dataset, DiracMixture, FeatureMapConfig, FrequencyLaw,
    Mixture, PeriodicFunction, ScalePreset, Sketch, SolverOptions, TaskKind, TaskSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::args::{
    EvalArgs, ExperimentArgs, Kind, LearnArgs, SketchArgs, Suite, Task, VerifyArgs,
};
use crate::CliError;

/// Mixed into the seed to derive the dither seed from the frequency seed.
const DITHER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Float width assumed when tallying the bits sent by simulated nodes.
const FLOAT_BITS: u32 = 64;

type CliResult = Result<(), CliError>;

fn print_config(config: &serde_json::Value) -> CliResult {
    eprintln!("resolved configuration:\n{}", serde_json::to_string_pretty(config)?);
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(path) => Box::new(io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn preset(task: Task) -> ScalePreset {
    match task {
        Task::Kmeans => ScalePreset::KMeans,
        Task::Gmm => ScalePreset::Gmm,
    }
}

fn map_config(d: usize, m: usize, law: FrequencyLaw, sigma2: f64, seed: u64, dither: bool) -> FeatureMapConfig {
    FeatureMapConfig {
        d,
        m,
        law,
        sigma2,
        omega_seed: seed,
        dither_seed: dither.then_some(seed ^ DITHER_STREAM),
        nonlinearity: PeriodicFunction::ComplexExponential,
        renormalize: false,
    }
}

pub fn sketch(mut args: SketchArgs) -> CliResult {
    if args.nodes == 0 {
        return Err(CliError::Usage("--nodes must be at least 1".into()));
    }
    let data = Dataset::load_csv(&args.data, args.header)?;
    let d = data.dim();
    let sigma2 = args.sigma2.unwrap_or_else(|| preset(args.preset).frequency_variance(d));
    args.sigma2 = Some(sigma2);
    let config = map_config(d, args.m, args.law.law(), sigma2, args.seed, !args.no_dither)
        .with_nonlinearity(args.kind.function(), args.renormalize);
    print_config(&json!({ "sketch": &args, "map": &config }))?;

    let map = config.build()?;
    let (sketch, bits) = if args.nodes == 1 {
        let sketch = sketch_dataset(&map, &data)?;
        let bits = map.contribution_bits(FLOAT_BITS)? * data.len() as u64;
        (sketch, bits)
    } else {
        let aggregation = simulate_nodes(&map, &data, args.nodes, FLOAT_BITS)?;
        (aggregation.sketch, aggregation.total_bits)
    };
    sketch.save(&args.out)?;
    println!(
        "sketched {} samples of dimension {d} into m = {} on {} node(s), {bits} bits of contributions",
        data.len(),
        args.m,
        args.nodes
    );
    Ok(())
}

fn broadcast(values: &[f64], d: usize, flag: &str) -> Result<Vec<f64>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        len if len == d => Ok(values.to_vec()),
        len => Err(CliError::Usage(format!(
            "--{flag} has {len} values, expected 1 or the dimension {d}"
        ))),
    }
}

fn solver_options(args: &LearnArgs, task: &TaskSpec) -> Result<SolverOptions, CliError> {
    let mut opts = match &args.solver_config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => SolverOptions::default_for(task),
    };
    if let Some(variant) = args.variant {
        opts.variant = variant.variant();
    }
    if let Some(restarts) = args.restarts {
        opts.restarts = restarts;
    }
    if let Some(replicates) = args.replicates {
        opts.replicates = replicates;
    }
    if let Some(iters) = args.inner_max_iters {
        opts.inner_max_iters = iters;
    }
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    Ok(opts)
}

pub fn learn(args: LearnArgs) -> CliResult {
    let sketch = Sketch::load(&args.sketch)?;
    let config = sketch
        .map_config()
        .cloned()
        .ok_or_else(|| acl_core::Error::Parse("sketch file lacks its feature map".into()))?;
    let map = config.build()?;
    if map.hash() != sketch.map_hash() {
        return Err(acl_core::Error::IncompatibleSketch(
            "sketch does not match the feature map it records".into(),
        )
        .into());
    }
    let z = if args.renormalize { sketch.renormalized(&map)? } else { sketch };
    let d = map.dim();
    let domain = BoxDomain::new(broadcast(&args.lower, d, "lower")?, broadcast(&args.upper, d, "upper")?)?;
    let task = match args.task {
        Task::Kmeans => TaskSpec::kmeans(args.k, domain),
        Task::Gmm => TaskSpec::gmm(args.k, domain, args.variance_cap),
    };
    let opts = solver_options(&args, &task)?;
    print_config(&json!({ "learn": &args, "map": &config, "task": &task, "solver": &opts }))?;

    let report = solve(&z, &map.reference()?, &task, &opts)?;
    let file = ModelFile::new(&report.model, &task.domain, task.variance_cap);
    fs::write(&args.out, serde_json::to_string_pretty(&file)?)?;
    if let Some(path) = &args.trace {
        let mut writer = csv::Writer::from_path(path)?;
        for point in &report.trace {
            writer.serialize(point)?;
        }
        writer.flush()?;
    }
    println!("final cost {:.6e} (initial {:.6e})", report.cost, report.initial_cost);
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    task: TaskKind,
    #[serde(rename = "K")]
    k: usize,
    n: usize,
    risk: f64,
    baseline_risk: f64,
    excess_risk: f64,
    outcome: acl_core::eval::Outcome,
}

pub fn eval(args: EvalArgs) -> CliResult {
    print_config(&json!({ "eval": &args }))?;
    let file: ModelFile = serde_json::from_str(&fs::read_to_string(&args.model)?)?;
    let model = file.mixture()?;
    let data = Dataset::load_csv(&args.data, args.header)?;
    let baseline = match model.task() {
        TaskKind::KMeans => Mixture::Dirac(kmeans_baseline(&data, model.k(), args.baseline_restarts, args.seed)?.model),
        TaskKind::Gmm => Mixture::Gaussian(em_baseline(&data, model.k(), args.baseline_restarts, args.seed)?.model),
    };
    let row = EvalRow {
        task: model.task(),
        k: model.k(),
        n: data.len(),
        risk: risk(&model, &data)?,
        baseline_risk: risk(&baseline, &data)?,
        excess_risk: empirical_excess_risk(&model, &baseline, &data)?,
        outcome: success(&model, &baseline, &data, args.success_factor)?,
    };
    let mut writer = csv::Writer::from_writer(io::stdout().lock());
    writer.serialize(row)?;
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ConstantsRow {
    function: &'static str,
    first_coefficient_re: f64,
    first_coefficient_im: f64,
    sup_norm: f64,
    distortion_constant: f64,
    mean_lipschitz_closed_form: Option<f64>,
    mean_lipschitz_numeric: f64,
    smoothness_constant: f64,
    covering_constant: f64,
}

#[derive(Serialize)]
struct Lemma2Row {
    instance: u64,
    lhs: f64,
    rhs: f64,
    eps_hat: f64,
    holds: bool,
}

pub fn verify(args: VerifyArgs) -> CliResult {
    print_config(&json!({ "verify": &args }))?;
    let mut writer = csv::Writer::from_writer(output(args.out.as_deref())?);
    match args.suite {
        Suite::Constants => {
            let smoothness = smoothness_constant_gaussian(args.sigma2)?;
            for kind in [Kind::Rff, Kind::Quantized, Kind::Modulo] {
                let f = kind.function();
                let first = f.first_coefficient();
                let numeric = f.mean_lipschitz();
                let closed = f.mean_lipschitz_closed_form();
                writer.serialize(ConstantsRow {
                    function: f.label(),
                    first_coefficient_re: first.re,
                    first_coefficient_im: first.im,
                    sup_norm: f.sup_norm(),
                    distortion_constant: f.distortion_constant()?,
                    mean_lipschitz_closed_form: closed,
                    mean_lipschitz_numeric: numeric,
                    smoothness_constant: smoothness,
                    covering_constant: f.covering_constant_with(smoothness, closed.unwrap_or(numeric))?,
                })?;
            }
        }
        Suite::Slpd => {
            let domain = BoxDomain::unit(args.d);
            for &m in &args.m_list {
                for seed in 0..args.seeds {
                    let phi = map_config(args.d, m, FrequencyLaw::Gaussian, args.sigma2, args.seed + seed, true).build()?;
                    for kind in &args.kinds {
                        let psi = match kind {
                            Kind::Rff => phi.clone(),
                            _ => phi.with_nonlinearity(kind.function(), true)?,
                        };
                        writer.serialize(slpd_error(&phi, &psi, &domain, args.pairs, args.seed + seed)?)?;
                    }
                }
            }
        }
        Suite::Lemma2 => {
            let planted = PlantedMixture {
                k: args.k,
                d: args.d,
                ..PlantedMixture::default()
            };
            for instance in 0..args.instances {
                let seed = args.seed + instance;
                let data = planted.generate(args.n, seed)?.samples;
                let (lower, upper) = data.bounds()?;
                let domain = BoxDomain::new(lower, upper)?;
                let config = map_config(args.d, args.m, FrequencyLaw::Gaussian, args.sigma2, seed, true);
                let phi = config.build()?;
                let psi = config.with_nonlinearity(PeriodicFunction::UniversalQuantizer, true).build()?;
                let z_sym = sketch_dataset(&phi, &data)?;
                let z_asym = sketch_dataset(&psi, &data)?;
                let grid = candidate_grid(&domain, args.grid, args.k, seed)?;
                let report = lemma2_check(&phi, &psi, &z_sym, &z_asym, &grid)?;
                writer.serialize(Lemma2Row {
                    instance,
                    lhs: report.lhs,
                    rhs: report.rhs,
                    eps_hat: report.eps_hat,
                    holds: report.holds,
                })?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Uniformly weighted k-means models with centroids uniform in the box.
fn candidate_grid(domain: &BoxDomain, count: usize, k: usize, seed: u64) -> Result<Vec<Mixture>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let centroids = (0..k).map(|_| domain.sample(&mut rng)).collect();
            Ok(Mixture::Dirac(DiracMixture::uniform(centroids)?))
        })
        .collect()
}

pub fn experiment(args: ExperimentArgs) -> CliResult {
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    print_config(&json!({ "experiment": &args, "config": &cfg }))?;
    let result = run_experiment(&cfg, args.jobs)?;
    result.write_csv(output(args.out.as_deref())?)?;
    if let Some(path) = &args.trials_out {
        result.write_trials_csv(io::BufWriter::new(fs::File::create(path)?))?;
    }
    Ok(())
}
