//! End-to-end training runs: determinism, the qp = 0 equivalence, and
//! desk-scale sanity on a separable problem.

use zsharp::harness::{
    metrics_csv_string, param_hash, train, train_accuracy, DataSource, DatasetSpec, MethodSpec,
    RunConfig,
};
use zsharp::zfilter::PercentileScope;

fn moons_cfg(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default_desk();
    cfg.dataset = DatasetSpec {
        source: DataSource::TwoMoons { n: 400, noise: 0.1 },
        seed: 7,
        label_flip: 0.0,
        test_fraction: 0.2,
    };
    cfg.hidden_dims = vec![32, 32];
    cfg.epochs = epochs;
    cfg.batch_size = 64;
    cfg.seed = 1;
    cfg
}

#[test]
fn training_is_a_pure_function_of_the_config() {
    let cfg = moons_cfg(5);
    let a = train(&cfg).unwrap();
    let b = train(&cfg).unwrap();
    assert_eq!(metrics_csv_string(&a), metrics_csv_string(&b));
    assert_eq!(param_hash(&a.final_params), param_hash(&b.final_params));
    assert_eq!(a.summary, b.summary);
    for (ma, mb) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(ma.train_loss.to_bits(), mb.train_loss.to_bits());
        assert_eq!(ma.grad_norm.to_bits(), mb.grad_norm.to_bits());
    }
}

#[test]
fn qp_zero_run_is_bitwise_identical_to_sam() {
    let mut z_cfg = moons_cfg(6);
    z_cfg.method = MethodSpec::ZSharp {
        rho: 0.05,
        delta: 1e-8,
        qp: 0.0,
        scope: PercentileScope::Global,
        sigma_eps: 1e-12,
    };
    let mut sam_cfg = moons_cfg(6);
    sam_cfg.method = MethodSpec::Sam {
        rho: 0.05,
        delta: 1e-8,
    };

    let z = train(&z_cfg).unwrap();
    let s = train(&sam_cfg).unwrap();
    assert_eq!(metrics_csv_string(&z), metrics_csv_string(&s));
    assert_eq!(param_hash(&z.final_params), param_hash(&s.final_params));
}

#[test]
fn two_moons_reaches_high_train_accuracy() {
    // Reference-run calibration: constant lr 0.003 with batch 32 fits the
    // separable problem essentially perfectly inside 50 epochs.
    let mut cfg = moons_cfg(50);
    cfg.batch_size = 32;
    cfg.schedule = zsharp::opt::LrSchedule::Constant(0.003);
    let result = train(&cfg).unwrap();
    let acc = train_accuracy(&result).unwrap();
    assert!(acc > 0.95, "train accuracy {acc}");
    assert!(result.summary.final_test_acc.unwrap() > 0.9);
}

#[test]
fn kept_fraction_tracks_one_minus_qp() {
    let result = train(&moons_cfg(5)).unwrap();
    // d = (2*32 + 32) + (32*32 + 32) + (32*2 + 2) = 1218.
    let d = result.final_params.total_dim() as f64;
    assert_eq!(d as usize, 1218);
    let tolerance = 2.0 / d;
    for m in &result.metrics {
        let kf = m.kept_fraction.unwrap();
        assert!(
            (kf - 0.05).abs() <= tolerance,
            "epoch {} kept_fraction {kf} outside 0.05 +/- {tolerance}",
            m.epoch
        );
    }
}

#[test]
fn per_layer_scope_also_trains() {
    let mut cfg = moons_cfg(3);
    cfg.method = MethodSpec::ZSharp {
        rho: 0.05,
        delta: 1e-8,
        qp: 0.9,
        scope: PercentileScope::PerLayer,
        sigma_eps: 1e-12,
    };
    let result = train(&cfg).unwrap();
    assert_eq!(result.metrics.len(), 3);
    for m in &result.metrics {
        assert!(m.kept_fraction.unwrap() > 0.0);
    }
}

#[test]
fn sgd_base_and_constant_schedule_train() {
    let mut cfg = moons_cfg(3);
    cfg.base.kind = zsharp::harness::BaseOptKind::Sgd;
    cfg.schedule = zsharp::opt::LrSchedule::Constant(0.05);
    let result = train(&cfg).unwrap();
    assert_eq!(result.summary.epochs_run, 3);
}
