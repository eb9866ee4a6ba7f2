//! Sequential versus rayon execution on the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use solaudit::corpus::clean_all;
use solaudit::detectors::random_baseline;
use solaudit::prompts::{build_prompts, write_prompts, Rendering, SubsetSpec};
use solaudit::taxonomy::{label_corpus, SwcMapping, Tool, ToolFinding, VotePolicy};
use solaudit::{Address, ContractRecord, Execution, VulnClass};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn synthetic_source(i: usize) -> String {
    let mut s = format!("pragma solidity ^0.4.24;\n/* contract number {i}\n   with a block comment */\ncontract C{i} {{\n");
    for f in 0..40 {
        s.push_str(&format!(
            "    // withdraw path {f}\n    function f{f}(uint a) public returns (uint) {{ string memory s = \"// not a comment {f}\"; return a * {f}; }}\n"
        ));
    }
    s.push_str("}\n");
    s
}

fn raw_records(n: usize) -> Vec<ContractRecord> {
    (0..n)
        .map(|i| ContractRecord::from_raw(Address::from_index(i as u64), synthetic_source(i), "0.4.24".into()))
        .collect()
}

fn cleaned_records(n: usize) -> Vec<ContractRecord> {
    let mut records = raw_records(n);
    assert!(clean_all(Execution::Sequential, &mut records).is_empty());
    records
}

fn findings(records: &[ContractRecord]) -> Vec<ToolFinding> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for (t, tool) in Tool::ALL.into_iter().enumerate() {
            for (c, vuln) in VulnClass::ALL.into_iter().enumerate() {
                if (i + t * 3 + c * 5) % 4 == 0 {
                    out.push(ToolFinding { tool, address: r.address.clone(), vuln, raw_detector_id: String::new() });
                }
            }
        }
    }
    out
}

fn bench_clean(c: &mut Criterion) {
    let records = raw_records(256);
    let mut group = c.benchmark_group("clean_all");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched_ref(|| records.clone(), |rs| black_box(clean_all(mode, rs)), BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn bench_label(c: &mut Criterion) {
    let records = cleaned_records(256);
    let fs = findings(&records);
    let policy = VotePolicy::default();
    let mut group = c.benchmark_group("label_corpus");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched_ref(|| records.clone(), |rs| black_box(label_corpus(mode, rs, &fs, &policy)), BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn bench_random(c: &mut Criterion) {
    let addresses: Vec<Address> = (0..10_000).map(Address::from_index).collect();
    let mut group = c.benchmark_group("random_baseline");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(random_baseline(7, &addresses, mode))));
    }
    group.finish();
}

fn bench_export(c: &mut Criterion) {
    let mut records = cleaned_records(128);
    let fs = findings(&records);
    label_corpus(Execution::Sequential, &mut records, &fs, &VotePolicy::default());
    let prompts = build_prompts(&records, &SwcMapping::default(), &SubsetSpec::full(None, 7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.jsonl");
    let mut group = c.benchmark_group("write_prompts");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(write_prompts(&prompts, Rendering::ChatMessages, &path, mode).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_clean, bench_label, bench_random, bench_export);
criterion_main!(benches);
