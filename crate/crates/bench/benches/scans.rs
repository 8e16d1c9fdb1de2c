use cploc_core::data::Cp1Spec;
use cploc_core::nuisance::estimate_frob_sq;
use cploc_core::sim::{build_delta, generate_panel, DeltaKind, SigmaModel};
use cploc_core::{scan_ssr, scan_ustat, ObservationMatrix};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn panel(n: usize, p: usize) -> ObservationMatrix {
    let delta = build_delta(DeltaKind::Dense, p, n, 1).unwrap();
    let spec = Cp1Spec::new(n, 0.3, delta, SigmaModel::Identity).unwrap();
    generate_panel(&spec, 7).unwrap()
}

fn scans(c: &mut Criterion) {
    let mut g = c.benchmark_group("scan");
    for (n, p) in [(200, 50), (200, 150), (1000, 500)] {
        let x = panel(n, p);
        let id = format!("{n}x{p}");
        g.bench_with_input(BenchmarkId::new("ustat", &id), &x, |b, x| {
            b.iter(|| scan_ustat(x).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("ssr", &id), &x, |b, x| {
            b.iter(|| scan_ssr(x).unwrap())
        });
    }
    g.finish();
}

fn frobenius(c: &mut Criterion) {
    let x = panel(200, 50);
    c.bench_function("frob_sq 200x50", |b| {
        b.iter(|| estimate_frob_sq(&x, 60).unwrap())
    });
}

criterion_group!(benches, scans, frobenius);
criterion_main!(benches);
