use adsorb_bench::{oh_on_pt, pt111};
use adsorb_core::calculator::{lj_energy_forces, BuiltinCalculator, CalcParams, Calculator};
use adsorb_core::relax::{relax, AnomalyThresholds, FireParams};
use adsorb_core::sites::{enumerate_heuristic_sites, sample_random_sites};
use adsorb_core::structures::adsorbate_from_registry;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn energy_forces(c: &mut Criterion) {
    let p = CalcParams::default();
    let mut g = c.benchmark_group("lj_energy_forces");
    for n in [2, 3, 4] {
        let slab = pt111(n);
        g.bench_with_input(BenchmarkId::from_parameter(slab.len()), &slab, |b, s| {
            b.iter(|| lj_energy_forces(black_box(s), &p).unwrap())
        });
    }
    g.finish();
}

fn sites(c: &mut Criterion) {
    let slab = pt111(4);
    c.bench_function("enumerate_heuristic_sites 4x4", |b| {
        b.iter(|| enumerate_heuristic_sites(black_box(&slab)).unwrap())
    });
    c.bench_function("sample_random_sites 50", |b| {
        b.iter(|| sample_random_sites(black_box(&slab), 50, 7).unwrap())
    });
}

fn fire(c: &mut Criterion) {
    let cfg = oh_on_pt();
    let calc = BuiltinCalculator::new(CalcParams::default()).with_adsorbate(&adsorbate_from_registry("OH").unwrap());
    let p = FireParams {
        fmax: 1e-3,
        ..FireParams::default()
    };
    let th = AnomalyThresholds::default();
    calc.compute(&cfg.structure).unwrap();
    c.bench_function("relax OH/Pt(111) 2x2", |b| {
        b.iter(|| relax(black_box(&cfg), &calc, &p, &th, false).unwrap())
    });
}

criterion_group!(benches, energy_forces, sites, fire);
criterion_main!(benches);
