use dirci::dist::Normal;
use dirci::multiplicity::{Adjustment, SelectionRule};
use dirci::regions::{Method, MethodSpec};
use dirci::simulate::{
    presets, run_scenario, CorrModel, MethodEntry, ScenarioSpec, Study, ThetaModel,
};

fn csv_with_threads(study: &Study, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| study.run(&Normal).unwrap().0.to_csv_string().unwrap())
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    for name in ["fig4", "fig5", "two-group"] {
        let study = presets::by_name(name, Some(20), 3).unwrap();
        assert_eq!(
            csv_with_threads(&study, 1),
            csv_with_threads(&study, 4),
            "{name}"
        );
    }
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let a = presets::by_name("fig7", Some(30), 5).unwrap();
    let b = presets::by_name("fig7", Some(30), 6).unwrap();
    let ra = csv_with_threads(&a, 2);
    assert_eq!(ra, csv_with_threads(&a, 2));
    assert_ne!(ra, csv_with_threads(&b, 2));
}

#[test]
fn by05_shortest_controls_fcr_under_independence() {
    let by05 = MethodEntry::new(
        MethodSpec::marginal(Method::Shortest, 0.05).unwrap(),
        Adjustment::By05,
    );
    let vectors = [
        vec![0.0; 10],
        vec![3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![2.0, -2.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 3.5, -1.0],
        vec![1.0; 10],
    ];
    for (i, values) in vectors.into_iter().enumerate() {
        let spec = ScenarioSpec {
            id: format!("v{i}"),
            m: values.len(),
            theta_model: ThetaModel::Fixed { values },
            corr_model: CorrModel::Independent,
            rule: SelectionRule::two_sided(1.96).unwrap(),
            methods: vec![by05],
            reps: 20_000,
            seed: 41,
        };
        let out = run_scenario(&Normal, &spec).unwrap();
        let fcr = out[0].rates.fcr().unwrap();
        assert!(fcr.value <= 0.05 + 3.0 * fcr.se, "vector {i}: {fcr:?}");
    }
}

#[test]
fn conditional_mfcr_under_independence() {
    let grid = dirci::simulate::DependenceGrid {
        corr_models: vec![CorrModel::Independent],
        ..presets::fig5(400, 9)
    };
    let report = dirci::simulate::run_dependence_study(&Normal, &grid).unwrap();
    for r in report
        .rows
        .iter()
        .filter(|r| r.metric == "mfcr" && r.value.is_finite())
    {
        if !r.method.ends_with("by05") {
            assert!(r.value <= 0.05 + 3.0 * r.se, "{r:?}");
        }
    }
}
