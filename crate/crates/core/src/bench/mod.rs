//! Experiment harness: per-trial pipelines, FFNN training on a separate
//! realization, CSV results.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::classify::{self, ffnn_train, FfnnModel, GraphEstimate};
use crate::error::{Error, Result};
use crate::estimators::{self, Method};
use crate::features::{self, FeatureKind, FeatureSet};
use crate::graphgen::{self, Graph, InteractionMatrix, ObservedSet};
use crate::linalg;
use crate::moments::{LagMoments, StreamingMoments};
use crate::noise::{build_covariance, CovarianceSpec, InterventionSpec};
use crate::rng::{self, stream};
use crate::simulate::Simulator;

pub use config::{BenchMethod, ExperimentConfig, ScalingMode, Selection};

/// One accuracy measurement (or a failure) of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub regime: String,
    pub beta: f64,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    pub fn csv_header(timing: bool) -> &'static str {
        if timing {
            "method,regime,beta,n,trial,seed,accuracy,error,wall_ms"
        } else {
            "method,regime,beta,n,trial,seed,accuracy,error"
        }
    }

    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.regime,
            self.beta,
            self.n,
            self.trial,
            self.seed,
            self.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            self.error.as_deref().unwrap_or("")
        );
        if timing {
            s.push(',');
            s.push_str(&self.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default());
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub rows: usize,
    pub error_rows: usize,
}

/// One realization of a regime: graph, weights, noise, observed subset.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: Graph,
    pub a: InteractionMatrix,
    pub sigma: CovarianceSpec,
    pub intervention: InterventionSpec,
    pub observed: ObservedSet,
}

impl Instance {
    /// Support of `A` over the observed nodes (local indexing).
    pub fn observed_support(&self) -> DMatrix<f64> {
        linalg::principal_submatrix(&self.a.support(), self.observed.indices())
    }
}

/// Draws an instance from per-purpose streams of `seed`.
pub fn make_instance(cfg: &ExperimentConfig, p: f64, beta: f64, seed: u64) -> Result<Instance> {
    let r = &cfg.regime;
    let graph = match &r.graph {
        Some(path) => {
            let g = graphgen::load_adjacency(path, Some(r.directed))?;
            if g.n() != r.nodes {
                return Err(Error::Config(format!("graph file has {} nodes, regime expects {}", g.n(), r.nodes)));
            }
            g
        }
        None => graphgen::erdos_renyi(r.nodes, p, r.directed, rng::mix(seed, stream::GRAPH))?,
    };
    let a = graphgen::laplacian_weights(&graph, r.alpha, r.rho)?;
    let n = &cfg.noise;
    let sigma = match &n.covariance {
        Some(path) => CovarianceSpec::from_matrix(linalg::read_matrix(path)?)?,
        None => build_covariance(r.nodes, n.sigma2_for(beta), beta, n.osc, rng::mix(seed, stream::COVARIANCE))?,
    };
    if sigma.n() != r.nodes {
        return Err(Error::Config("covariance size does not match the regime".into()));
    }
    let observed = match r.selection {
        Selection::Random => graphgen::sample_observed(r.nodes, r.observed, rng::mix(seed, stream::OBSERVED))?,
        Selection::First => ObservedSet::new((0..r.observed).collect(), r.nodes)?,
    };
    Ok(Instance { graph, a, sigma, intervention: InterventionSpec::new(n.intervention)?, observed })
}

/// Simulates once and returns observed-block moments at every checkpoint.
pub fn checkpoint_moments(
    inst: &Instance,
    checkpoints: &[usize],
    max_lag: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<LagMoments>> {
    let idx = inst.observed.indices();
    let mut sm = StreamingMoments::new(idx.len(), max_lag, checkpoints.to_vec())?;
    let mut sim = Simulator::new(inst.a.matrix(), &inst.sigma, &inst.intervention, burn_in, seed)?;
    let mut buf = vec![0.0; idx.len()];
    sim.run(sm.required_samples(), |y| {
        for (b, &i) in buf.iter_mut().zip(idx) {
            *b = y[i];
        }
        sm.push(&buf);
    });
    sm.into_checkpoints()
}

/// Seed of one trial under a master seed.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    rng::mix(rng::mix(master, stream::TRIAL), trial as u64)
}

/// In-sample accuracy of each trained network, averaged over the training
/// offsets. The training datasets are regenerated from their seeds.
pub fn training_accuracy(
    cfg: &ExperimentConfig,
    models: &TrainedModels,
) -> Result<BTreeMap<(usize, FeatureKind), f64>> {
    let seed = training_seed(cfg);
    let p = cfg.training.p.unwrap_or(cfg.regime.p);
    let checkpoints = &cfg.data.checkpoints;
    let mut sums: BTreeMap<(usize, FeatureKind), f64> = BTreeMap::new();
    for (b, &beta) in cfg.training.betas.iter().enumerate() {
        let inst = make_instance(cfg, p, beta, seed)?;
        let sim_seed = rng::mix(rng::mix(seed, stream::NOISE), b as u64);
        let mom = checkpoint_moments(&inst, checkpoints, cfg.features.m, cfg.burn_in(), sim_seed)?;
        for ((n, kind), model) in &models.models {
            let Some(c) = checkpoints.iter().position(|x| x == n) else { continue };
            let fs = dataset_features(*kind, &mom[c], &inst, cfg)?;
            let x = match &model.scaling {
                Some(sc) => sc.apply_matrix(&fs.values)?,
                None => fs.values.clone(),
            };
            let (_, labels) = model.predict(&x)?;
            let g = GraphEstimate::from_pairs(inst.observed.len(), &fs.pairs, &labels)?;
            *sums.entry((*n, *kind)).or_default() +=
                classify::accuracy(&g, &inst.observed_support(), cfg.regime.directed)?;
        }
    }
    let k = cfg.training.betas.len() as f64;
    Ok(sums.into_iter().map(|(key, s)| (key, s / k)).collect())
}

fn training_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.training.seed.unwrap_or_else(|| rng::mix(cfg.data.seed, stream::TRAINING))
}

/// Standardized (and labeled) features of one dataset according to the
/// scaling mode; in training mode the raw features are returned.
fn dataset_features(kind: FeatureKind, m: &LagMoments, inst: &Instance, cfg: &ExperimentConfig) -> Result<FeatureSet> {
    let fs = features::build(kind, m, &inst.observed, cfg.features.params())?.with_labels(&inst.observed_support())?;
    match cfg.features.scaling {
        ScalingMode::PerDataset => Ok(features::standard_scale(&fs)?.0),
        ScalingMode::Training => Ok(fs),
    }
}

/// Networks keyed by checkpoint and feature family.
#[derive(Clone, Debug, Default)]
pub struct TrainedModels {
    pub models: BTreeMap<(usize, FeatureKind), FfnnModel>,
}

impl TrainedModels {
    pub fn file_name(n: usize, kind: FeatureKind) -> String {
        format!("ffnn_{kind}_n{n}.txt")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for ((n, kind), m) in &self.models {
            m.save(&dir.join(Self::file_name(*n, *kind)))?;
        }
        Ok(())
    }

    /// Loads whatever models the config needs from `dir`.
    pub fn load(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let mut models = BTreeMap::new();
        for m in cfg.parsed_methods()? {
            if let BenchMethod::Ffnn(kind) = m {
                for &n in &cfg.data.checkpoints {
                    let path = dir.join(Self::file_name(n, kind));
                    models.insert((n, kind), FfnnModel::load(&path)?);
                }
            }
        }
        Ok(Self { models })
    }
}

/// Trains one network per checkpoint and feature family on a single
/// training graph, pooling datasets over the configured offsets.
pub fn train_models(cfg: &ExperimentConfig) -> Result<TrainedModels> {
    let kinds: Vec<FeatureKind> = cfg
        .parsed_methods()?
        .into_iter()
        .filter_map(|m| match m {
            BenchMethod::Ffnn(k) => Some(k),
            _ => None,
        })
        .collect();
    if kinds.is_empty() {
        return Ok(TrainedModels::default());
    }
    let seed = training_seed(cfg);
    let p = cfg.training.p.unwrap_or(cfg.regime.p);
    let checkpoints = &cfg.data.checkpoints;
    let lag = cfg.features.m;

    // per offset: features for every (checkpoint, kind)
    let per_beta: Vec<Vec<Vec<FeatureSet>>> = cfg
        .training
        .betas
        .par_iter()
        .enumerate()
        .map(|(b, &beta)| -> Result<Vec<Vec<FeatureSet>>> {
            // same graph and observed set for every offset
            let inst = make_instance(cfg, p, beta, seed)?;
            let sim_seed = rng::mix(rng::mix(seed, stream::NOISE), b as u64);
            let mom = checkpoint_moments(&inst, checkpoints, lag, cfg.burn_in(), sim_seed)?;
            mom.iter().map(|m| kinds.iter().map(|&k| dataset_features(k, m, &inst, cfg)).collect()).collect()
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> =
        (0..checkpoints.len()).flat_map(|c| (0..kinds.len()).map(move |k| (c, k))).collect();
    let trained: Vec<((usize, FeatureKind), FfnnModel)> = jobs
        .par_iter()
        .map(|&(c, k)| -> Result<_> {
            let sets: Vec<&FeatureSet> = per_beta.iter().map(|b| &b[c][k]).collect();
            let dim = sets[0].dim();
            if sets.iter().any(|s| s.dim() != dim) {
                return Err(Error::Degenerate("training datasets dropped different feature coordinates".into()));
            }
            let rows: usize = sets.iter().map(|s| s.len()).sum();
            let mut x = DMatrix::zeros(rows, dim);
            let mut y = Vec::with_capacity(rows);
            let mut r0 = 0;
            for s in &sets {
                x.rows_mut(r0, s.len()).copy_from(&s.values);
                y.extend_from_slice(s.labels()?);
                r0 += s.len();
            }
            let scaling = match cfg.features.scaling {
                ScalingMode::Training => {
                    let sc = features::fit_scaling(&x)?;
                    x = sc.apply_matrix(&x)?;
                    Some(sc)
                }
                ScalingMode::PerDataset => None,
            };
            let model_seed = rng::mix(rng::mix(seed, stream::CLASSIFIER), (c * 16 + k) as u64);
            let mut model = ffnn_train(&x, &y, &cfg.training.network, model_seed)?;
            model.scaling = scaling;
            Ok(((checkpoints[c], kinds[k]), model))
        })
        .collect::<Result<_>>()?;
    Ok(TrainedModels { models: trained.into_iter().collect() })
}

fn evaluate_method(
    method: BenchMethod,
    m: &LagMoments,
    inst: &Instance,
    cfg: &ExperimentConfig,
    models: &TrainedModels,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let truth = inst.observed_support();
    let directed = cfg.regime.directed;
    match method {
        BenchMethod::Gmm(est) => {
            let e = estimators::estimate_from_moments(est, m, &inst.observed)?;
            let g = GraphEstimate::from_gmm(&e.scores(), rng::mix(seed, stream::CLASSIFIER))?;
            classify::accuracy(&g, &truth, directed)
        }
        BenchMethod::Oracle => {
            let e = estimators::estimate_from_moments(Method::Nig, m, &inst.observed)?;
            classify::oracle_threshold_accuracy(&e.scores(), &truth, directed)
        }
        BenchMethod::Ffnn(kind) => {
            let model = models
                .models
                .get(&(n, kind))
                .ok_or_else(|| Error::Parameter(format!("no trained ffnn_{kind} model for n = {n}")))?;
            let fs = dataset_features(kind, m, inst, cfg)?;
            let x = match &model.scaling {
                Some(sc) => sc.apply_matrix(&fs.values)?,
                None => fs.values.clone(),
            };
            let (_, labels) = model.predict(&x)?;
            let g = GraphEstimate::from_pairs(inst.observed.len(), &fs.pairs, &labels)?;
            classify::accuracy(&g, &truth, directed)
        }
    }
}

fn error_tag(e: &Error) -> String {
    let msg = e.to_string().replace([',', '\n', '"'], ";");
    format!("{}: {msg}", e.tag())
}

/// All rows of one trial; failures become rows with an error tag.
pub fn run_trial(cfg: &ExperimentConfig, models: &TrainedModels, trial: usize) -> Vec<ResultRow> {
    let methods = cfg.parsed_methods().unwrap_or_default();
    let seed = trial_seed(cfg.data.seed, trial);
    let beta = cfg.noise.beta;
    let regime = cfg.regime_id();
    let row = |method: BenchMethod, n: usize, res: std::result::Result<f64, String>, ms: f64| ResultRow {
        method: method.to_string(),
        regime: regime.clone(),
        beta,
        n,
        trial,
        seed,
        accuracy: res.as_ref().ok().copied(),
        error: res.err(),
        wall_ms: cfg.output.timing.then_some(ms),
    };
    let setup = cfg.max_lag().and_then(|lag| {
        let inst = make_instance(cfg, cfg.regime.p, beta, seed)?;
        let mut checkpoints = cfg.data.checkpoints.clone();
        if cfg.length() > *checkpoints.last().unwrap() {
            checkpoints.push(cfg.length());
        }
        let mom = checkpoint_moments(&inst, &checkpoints, lag, cfg.burn_in(), seed)?;
        Ok((inst, mom))
    });
    let mut rows = Vec::new();
    match setup {
        Err(e) => {
            log::warn!("trial {trial} failed during setup: {e}");
            for &n in &cfg.data.checkpoints {
                for &m in &methods {
                    rows.push(row(m, n, Err(error_tag(&e)), 0.0));
                }
            }
        }
        Ok((inst, mom)) => {
            for (c, &n) in cfg.data.checkpoints.iter().enumerate() {
                for &m in &methods {
                    let start = Instant::now();
                    let res = evaluate_method(m, &mom[c], &inst, cfg, models, n, seed);
                    if let Err(e) = &res {
                        log::debug!("trial {trial} {m} n={n}: {e}");
                    }
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    rows.push(row(m, n, res.map_err(|e| error_tag(&e)), ms));
                }
            }
        }
    }
    rows
}

/// Runs every trial in parallel and hands rows to `sink` in trial order.
pub fn evaluate(
    cfg: &ExperimentConfig,
    models: &TrainedModels,
    mut sink: impl FnMut(&ResultRow) -> Result<()>,
) -> Result<Summary> {
    cfg.validate()?;
    let (tx, rx) = mpsc::channel::<(usize, Vec<ResultRow>)>();
    let mut summary = Summary::default();
    let mut sink_result = Ok(());
    std::thread::scope(|s| {
        s.spawn(move || {
            (0..cfg.data.trials).into_par_iter().for_each_with(tx, |tx, t| {
                let _ = tx.send((t, run_trial(cfg, models, t)));
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (t, rows) in rx {
            pending.insert(t, rows);
            while let Some(rows) = pending.remove(&next) {
                for r in &rows {
                    summary.rows += 1;
                    summary.error_rows += usize::from(r.error.is_some());
                    if sink_result.is_ok() {
                        sink_result = sink(r);
                    }
                }
                next += 1;
            }
        }
    });
    sink_result?;
    Ok(summary)
}

fn obtain_models(cfg: &ExperimentConfig) -> Result<TrainedModels> {
    if !cfg.uses_ffnn()? {
        return Ok(TrainedModels::default());
    }
    match &cfg.training.models {
        Some(dir) => TrainedModels::load(dir, cfg),
        None => train_models(cfg),
    }
}

/// Trains once (if needed) and evaluates every test regime, writing CSV.
pub fn train_and_generalize(
    train_cfg: &ExperimentConfig,
    tests: &[ExperimentConfig],
    mut out: impl Write,
) -> Result<Summary> {
    let models = obtain_models(train_cfg)?;
    let timing = train_cfg.output.timing;
    writeln!(out, "{}", ResultRow::csv_header(timing))?;
    out.flush()?;
    let mut total = Summary::default();
    for cfg in tests {
        if cfg.features != train_cfg.features {
            return Err(Error::Config("test regimes must share the feature settings".into()));
        }
        let s = evaluate(cfg, &models, |r| {
            writeln!(out, "{}", r.to_csv(timing))?;
            out.flush()?;
            Ok(())
        })?;
        total.rows += s.rows;
        total.error_rows += s.error_rows;
    }
    Ok(total)
}

/// Main regime plus any configured extra test regimes.
pub fn test_regimes(cfg: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let mut out = vec![cfg.clone()];
    for t in &cfg.tests {
        out.push(cfg.with_test(t)?);
    }
    Ok(out)
}

pub fn run_benchmark(cfg: &ExperimentConfig, out: impl Write) -> Result<Summary> {
    cfg.validate()?;
    train_and_generalize(cfg, &test_regimes(cfg)?, out)
}

/// Collects rows in memory (used by tests and the acceptance suite).
pub fn run_benchmark_rows(cfg: &ExperimentConfig, models: Option<&TrainedModels>) -> Result<Vec<ResultRow>> {
    let owned;
    let models = match models {
        Some(m) => m,
        None => {
            owned = obtain_models(cfg)?;
            &owned
        }
    };
    let mut rows = Vec::new();
    evaluate(cfg, models, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}
