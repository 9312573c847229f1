use ndscausal::bench::{self, ExperimentConfig, ResultRow};
use ndscausal::features::FeatureKind;
use ndscausal::theory;

fn mean_accuracy(rows: &[ResultRow], method: &str, n: usize) -> f64 {
    let v: Vec<f64> =
        rows.iter().filter(|r| r.method == method && r.n == n).map(|r| r.accuracy.expect("trial failed")).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn same_regime_matches_training_accuracy() {
    let cfg = ExperimentConfig::from_toml(
        r#"
methods = ["ffnn_k"]

[regime]
nodes = 30
observed = 24
p = 0.5
alpha = 0.4
rho = 0.9

[noise]
gap = 5.0
beta = 2.0
osc = 0.002

[data]
checkpoints = [100000]
trials = 4
seed = 21

[training]
betas = [2.0]
"#,
    )
    .unwrap();
    let models = bench::train_models(&cfg).unwrap();
    let train = bench::training_accuracy(&cfg, &models).unwrap()[&(100000, FeatureKind::K)];
    let rows = bench::run_benchmark_rows(&cfg, Some(&models)).unwrap();
    let test = mean_accuracy(&rows, "ffnn_k", 100000);
    assert!(test >= train - 0.05, "test {test} vs training {train}");
}

#[test]
fn flat_noise_certified_regime_is_recovered() {
    let text = r#"
methods = ["ffnn_k", "ffnn_f"]

[regime]
nodes = 20
observed = 16
p = 0.5
alpha = 0.9
rho = 0.9

[noise]
gap = 10.0
beta = 5.0

[data]
checkpoints = [10000, 100000]
trials = 4
seed = 8

[training]
betas = [0.0, 5.0, 10.0]
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    for t in 0..cfg.data.trials {
        let inst =
            bench::make_instance(&cfg, cfg.regime.p, cfg.noise.beta, bench::trial_seed(cfg.data.seed, t)).unwrap();
        assert!(theory::check_theorem2(&inst.a, &inst.sigma).unwrap().certified());
    }
    let rows = bench::run_benchmark_rows(&cfg, None).unwrap();
    for m in ["ffnn_k", "ffnn_f"] {
        let acc = mean_accuracy(&rows, m, 100000);
        assert!(acc >= 0.95, "{m}: {acc}");
    }
}

#[test]
fn sparser_test_graphs_run() {
    let cfg = ExperimentConfig::from_toml(
        r#"
methods = ["ffnn_k", "granger"]

[regime]
nodes = 16
observed = 12
p = 0.5
alpha = 0.9
rho = 0.9

[noise]
gap = 2.0
beta = 2.0

[data]
checkpoints = [5000]
trials = 2
seed = 2

[training]
betas = [0.0, 2.0]

[[tests]]
p = 0.2
"#,
    )
    .unwrap();
    let mut out = Vec::new();
    let summary = bench::run_benchmark(&cfg, &mut out).unwrap();
    assert_eq!(summary.error_rows, 0);
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert_eq!(rows.iter().filter(|l| l.contains(",N16_S12_p0.2,")).count(), 4);
}
