//! Per-sample decision path: what runs between the gamma sensor firing
//! and the diverter acting.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gammasort_bench::{bench_line, readings};
use gammasort_core::compiler::{rule_decide, sensor_posterior};
use gammasort_core::decision::{decide, tail_prob};

fn realtime(c: &mut Criterion) {
    let b = bench_line();
    let s = readings(64, &b.rule);
    let mut g = c.benchmark_group("realtime");

    let mut i = 0;
    g.bench_function("sensor_posterior", |bench| {
        bench.iter(|| {
            i = (i + 1) % s.len();
            sensor_posterior(black_box(&b.model), black_box(s[i])).unwrap()
        })
    });

    let mut i = 0;
    g.bench_function("sensor_posterior_and_decide", |bench| {
        bench.iter(|| {
            i = (i + 1) % s.len();
            let m = sensor_posterior(black_box(&b.model), black_box(s[i])).unwrap();
            decide(&m, &b.policy)
        })
    });

    let posterior = sensor_posterior(&b.model, s[s.len() / 2]).unwrap();
    g.bench_function("tail_prob", |bench| {
        bench.iter(|| tail_prob(black_box(&posterior), black_box(b.policy.c_hat)))
    });

    let mut i = 0;
    g.bench_function("rule_decide", |bench| {
        bench.iter(|| {
            i = (i + 1) % s.len();
            rule_decide(black_box(&b.rule), black_box(s[i]))
        })
    });

    g.finish();
}

criterion_group!(benches, realtime);
criterion_main!(benches);
