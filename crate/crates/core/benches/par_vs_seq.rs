use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use znkz::json::fixture_curve;
use znkz::kz::Solver;
use znkz::par;
use znkz::periods::Periods;
use znkz::verify::{self, IdentityCase, IdentityId};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn periods(c: &mut Criterion) {
    let pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.5), (5.0, -0.5)];
    let spec = fixture_curve(2, 3, &pts, 128).unwrap();
    let mut g = c.benchmark_group("periods_n2m3");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| Periods::compute(&spec).unwrap());
        });
    }
    g.finish();
    par::force_sequential(false);
}

fn solve(c: &mut Criterion) {
    let spec = fixture_curve(3, 2, &[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 0.0), (4.0, -1.0), (5.0, 0.0)], 128).unwrap();
    let periods = Periods::compute(&spec).unwrap();
    let mut g = c.benchmark_group("solve_n3m2");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| {
                let s = Solver::with_periods(&spec, Some(periods.clone())).unwrap();
                s.solve(&s.default_options().unwrap()).unwrap()
            });
        });
    }
    g.finish();
    par::force_sequential(false);
}

fn identities(c: &mut Criterion) {
    let case = IdentityCase::new(IdentityId::Rel4, 3, 2, vec![1, 2]).with_trials(200, 0);
    let mut g = c.benchmark_group("rel4_200_trials");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| verify::run_case(&case).unwrap());
        });
    }
    g.finish();
    par::force_sequential(false);
}

criterion_group!(benches, periods, solve, identities);
criterion_main!(benches);
