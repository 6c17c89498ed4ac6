//! Metrics recomputed from the shipped fixtures, pinned to values from an
//! independent implementation.

use std::path::{Path, PathBuf};

use adsorb_core::eval::{self, EvalParams, SrMode};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn table1_ratios() {
    let r = eval::load_records(&fixture("table1.csv")).unwrap();
    let strict = eval::success_ratio(
        &r,
        &EvalParams {
            epsilon: 0.1,
            sr_mode: SrMode::Strict,
        },
    )
    .unwrap();
    assert_eq!(strict.systems(), vec![3, 5, 6, 7, 9, 10, 11, 12, 13, 14]);
    let lenient = eval::success_ratio(&r, &EvalParams::default()).unwrap();
    assert_eq!((lenient.hits, lenient.total), (17, 20));
    let ledr = eval::ledr(&r, &EvalParams::default()).unwrap();
    assert_eq!(ledr.systems(), vec![2, 4, 8, 17, 18, 19, 20]);
    assert_eq!(ledr.percent, 35.0);
    // LEDR successes are lenient successes and never strict ones
    for s in ledr.systems() {
        assert!(lenient.systems().contains(&s));
        assert!(!strict.systems().contains(&s));
    }
}

#[test]
fn table_s1_per_run_metrics() {
    let r = eval::load_records(&fixture("tableS1.csv")).unwrap();
    let report = eval::evaluate(&r, None, 0.1).unwrap();
    assert_eq!((report.sr_strict.hits, report.sr_strict.total), (31, 60));
    assert_eq!(report.sr_lenient.hits, 52);
    assert_eq!(report.ledr.hits, 21);
    assert_eq!(report.rsr.min.percent, 100.0 * 4.0 / 59.0);
    assert_eq!(report.rsr.max.percent, 100.0 * 42.0 / 66.0);
    assert!(
        (report.rsr.mean - 28.099995204184815).abs() < 1e-9,
        "{}",
        report.rsr.mean
    );
    assert_eq!(report.rsr.entries.len(), 60);
}

#[test]
fn solutions_fixture_consistency() {
    let triples = eval::load_solutions(&fixture("solutions.json")).unwrap();
    let c = eval::consistency_ratio(&triples).unwrap();
    assert_eq!(c.total, 85.0);
    assert_eq!(c.surface_inconsistent, vec![15, 16]);
    assert_eq!(c.adsorbate_inconsistent, vec![20]);
    assert_eq!((c.surface, c.adsorbate), (90.0, 95.0));
}
