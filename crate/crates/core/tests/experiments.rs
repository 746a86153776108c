use lhs_core::experiments::{run, ExperimentConfig, ExperimentId};
use lhs_core::Error;

fn quick(id: ExperimentId) -> ExperimentConfig {
    let base = ExperimentConfig::defaults(id);
    ExperimentConfig {
        n: base.n.min(8),
        seeds: base.seeds.min(2),
        t_end: base.t_end.min(20.0),
        samples: 30,
        dt: 2e-3,
        n_values: if id == ExperimentId::E3 { vec![4, 8, 16] } else { base.n_values.clone() },
        ..base
    }
}

#[test]
fn reruns_produce_identical_tables() {
    for id in ExperimentId::ALL {
        let cfg = quick(id);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.tables.len(), b.tables.len());
        for (x, y) in a.tables.iter().zip(&b.tables) {
            assert_eq!(x.to_csv(), y.to_csv(), "{id} table {}", x.name);
        }
        assert_eq!(a.to_json(), b.to_json(), "{id}");
        assert!(a.verdicts.iter().all(|v| v.tolerance >= 0.0 && !v.detail.is_empty()));
        assert!(a.verdict("pair_inequality").is_some(), "{id}");
    }
}

#[test]
fn seeds_change_the_data() {
    let a = run(&quick(ExperimentId::E1)).unwrap();
    let b = run(&ExperimentConfig {
        seed: 2,
        ..quick(ExperimentId::E1)
    })
    .unwrap();
    assert_ne!(a.metric("F0"), b.metric("F0"));
}

#[test]
fn inadmissible_configs_fail_validation() {
    let cfg = ExperimentConfig {
        kappa1: 0.5,
        ..ExperimentConfig::defaults(ExperimentId::E1)
    };
    assert!(matches!(run(&cfg), Err(Error::Infeasible(_))));
    let cfg = ExperimentConfig {
        kappa0: 1.0,
        kappa1: -0.6,
        ..ExperimentConfig::defaults(ExperimentId::E5)
    };
    assert!(matches!(run(&cfg), Err(Error::Infeasible(_))));
}

#[test]
fn quick_runs_pass() {
    for id in ExperimentId::ALL {
        let report = run(&quick(id)).unwrap();
        if id == ExperimentId::E3 {
            // monotonicity of the sups is a property of larger samples
            assert!(report.verdict("pair_inequality").unwrap().passed);
            continue;
        }
        assert!(report.passed(), "{id}: {:#?}", report.verdicts);
    }
}
