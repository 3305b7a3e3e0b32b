use std::io::Write;

use imela_core::fairness::{self, GroupSpec};
use imela_core::imela::{self, default_params};
use imela_core::kkt::{best_iterate, kkt_residuals, Selection};
use imela_core::linalg::dist;
use imela_core::test_problems::{brute_force_kkt, counterexample_in, random_polytope_problem, BUILTIN_NAMES, builtin};
use imela_core::tuning::{build_params, run_method, ParamSet};
use imela_core::{Budget, Method, OracleCounter};

#[test]
fn single_precision_run_converges() {
    let ce = counterexample_in::<f32>();
    let mut p = default_params(&ce.instance.constants, 4.0f32, 1).unwrap();
    p.budget = Budget::Outer(200);
    let trace = imela::run(&ce.instance, &p, &mut OracleCounter::new()).unwrap();
    let last = trace.last().unwrap();
    assert!(last.x.iter().all(|v| v.abs() <= 1e-3), "{:?}", last.x);
    assert!(last.combined_sq().unwrap().sqrt() <= 1e-3);
}

#[test]
fn imela_lands_on_a_brute_force_kkt_point() {
    for seed in 0..3 {
        let inst = random_polytope_problem(seed, 2).unwrap();
        let cands = brute_force_kkt(&inst, 0.01).unwrap();
        assert!(!cands.is_empty());
        let l = inst.smoothness().unwrap();
        let mut p = default_params(&inst.constants, 2.0 * l, 1).unwrap();
        p.budget = Budget::Outer(3000);
        p.eps_target = Some(1e-6);
        let trace = imela::run(&inst, &p, &mut OracleCounter::new()).unwrap();
        let last = trace.last().unwrap();
        assert!(last.combined_sq().unwrap().sqrt() <= 1e-4, "seed {seed}: {:?}", last.combined_sq());
        let nearest = cands.iter().map(|c| dist(&c.x, &last.x)).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 0.05, "seed {seed}: nearest brute-force candidate at {nearest}");
    }
}

#[test]
fn every_method_produces_a_well_formed_trace() {
    for name in BUILTIN_NAMES {
        let inst = builtin(name).unwrap().instance;
        for m in Method::ALL {
            let params = build_params(&inst, m, &ParamSet::new(), Budget::Outer(50)).unwrap();
            let trace = run_method(&inst, &params).unwrap();
            assert_eq!(trace.method, m);
            assert_eq!(trace.outer_iterations(), 50, "{name} {m}");
            assert!(trace.records.windows(2).all(|w| w[0].cum_oracle <= w[1].cum_oracle));
            for r in &trace.records {
                assert!(r.infeasibility >= 0.0 && r.objective.is_finite());
                assert_eq!(r.stationarity.is_some(), m.has_multipliers());
                if let Some(s) = r.stationarity {
                    assert!(s >= 0.0 && r.comp_slack.unwrap() >= 0.0);
                }
                assert!(inst.set.contains(&r.x, 1e-9), "{name} {m}: iterate leaves the set");
            }
            let sum: u64 = trace.records.iter().map(|r| r.inner_steps as u64).sum();
            assert_eq!(sum, trace.total_steps());
            assert_eq!(trace.counter.steps, trace.total_steps());
            assert!(best_iterate(&trace, Selection::PrimalDual).is_ok() == m.has_multipliers());
        }
    }
}

#[test]
fn certificates_are_kkt_points() {
    for name in BUILTIN_NAMES {
        let ai = builtin(name).unwrap();
        for (x, l) in &ai.kkt_points {
            let r = kkt_residuals(&ai.instance, x, l).unwrap();
            assert!(r.sum() <= 1e-10, "{name}: {r:?}");
        }
    }
}

#[test]
fn fairness_files_round_trip() {
    let data = fairness::synthetic_dataset(90, 3, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let svm = dir.path().join("d.svm");
    let mut f = std::fs::File::create(&svm).unwrap();
    for i in 0..data.len() {
        let row = data.features.dense_row(i);
        let cells: Vec<String> = row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| format!("{}:{v}", j + 1)).collect();
        writeln!(f, "{} {}", if data.labels[i] > 0.0 { "1" } else { "0" }, cells.join(" ")).unwrap();
    }
    drop(f);
    let loaded = fairness::load_libsvm(&svm).unwrap().with_group(3).unwrap();
    assert_eq!(loaded.labels, data.labels);
    for i in 0..data.len() {
        assert_eq!(loaded.features.dense_row(i), data.features.dense_row(i));
    }

    let csv = dir.path().join("d.csv");
    let mut f = std::fs::File::create(&csv).unwrap();
    writeln!(f, "a,b,c,sex,label").unwrap();
    for i in 0..data.len() {
        let row: Vec<String> = data.features.dense_row(i).iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", row.join(","), data.labels[i]).unwrap();
    }
    drop(f);
    let from_csv = fairness::load_csv(&csv, Some(&GroupSpec::Name("sex".into()))).unwrap();
    assert_eq!(from_csv, loaded);

    let a = fairness::split_fairness(&loaded, 3).unwrap();
    let b = fairness::split_fairness(&from_csv, 3).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.train.len(), 60);
    assert_eq!(a.dim(), 3);
}
