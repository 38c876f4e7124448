//! Shared setup for the benchmark targets: the five-type sorting line
//! with its slow evidence, compiled model, and divert rule — the same
//! configuration the latency acceptance criterion measures.

use gammasort_core::compiler::{compile, compile_rule, CompiledModel, DivertRule, Policy};
use gammasort_core::model::fixture::{reference_fixture_with, SortingLine};
use gammasort_core::model::Evidence;

pub struct BenchLine {
    pub line: SortingLine,
    pub evidence: Evidence,
    pub model: CompiledModel,
    pub rule: DivertRule,
    pub policy: Policy,
}

/// Five waste types, assay observed at −2.4, the policy from the
/// walkthrough config (ĉ = 0, Λ₀ = 1, Λ₁ = 10).
pub fn bench_line() -> BenchLine {
    let line = reference_fixture_with(5);
    let evidence = Evidence::none().with_value(line.assay, -2.4);
    let policy = Policy::new(0.0, 1.0, 10.0).expect("valid policy");
    let model =
        compile(&line.net, &evidence, line.sensor, line.sample_density).expect("compiles");
    let rule = compile_rule(&model, &policy).expect("rule compiles");
    BenchLine {
        line,
        evidence,
        model,
        rule,
        policy,
    }
}

/// Sensor readings spanning the rule's scan range.
pub fn readings(n: usize, rule: &DivertRule) -> Vec<f64> {
    (0..n)
        .map(|i| rule.scan[0] + (rule.scan[1] - rule.scan[0]) * i as f64 / (n - 1) as f64)
        .collect()
}
