use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use f0lab::corpus::{synthesize_utterance, SynthConfig, UtteranceSpec};
use f0lab::dsp::{baseline_f0, extract_features, FeatureConfig};
use f0lab::lstm::{dataset_sse, init_random, Arch, Matrix, SeqPair};
use f0lab::par::{self, Exec};
use f0lab::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn signals(n: usize) -> Vec<Signal> {
    let cfg = FeatureConfig::default();
    let synth = SynthConfig {
        duration_min: 1.0,
        duration_max: 1.5,
        ..Default::default()
    };
    (0..n as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let spec = UtteranceSpec::random(format!("b{i}"), &mut rng, &synth, &cfg);
            synthesize_utterance(&spec, i, &cfg).unwrap().clean
        })
        .collect()
}

fn features(c: &mut Criterion) {
    let cfg = FeatureConfig::default();
    let batch = signals(8);
    let mut g = c.benchmark_group("feature_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                par::map(exec, &batch, |s| {
                    extract_features(black_box(s), None, &cfg).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn baseline(c: &mut Criterion) {
    let cfg = FeatureConfig::default();
    let batch = signals(8);
    let mut g = c.benchmark_group("baseline_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| par::map(exec, &batch, |s| baseline_f0(black_box(s), &cfg).unwrap()))
        });
    }
    g.finish();
}

fn validation_sse(c: &mut Criterion) {
    let arch = Arch::new(15, vec![32, 32], 15).unwrap();
    let w = init_random(&arch, 1).unwrap();
    let set: Vec<SeqPair> = (0..16)
        .map(|k| {
            let rows: Vec<Vec<f64>> = (0..200)
                .map(|t| {
                    (0..15)
                        .map(|j| ((t * (j + 1) + k) as f64 * 0.01).sin())
                        .collect()
                })
                .collect();
            let m = Matrix::from_rows(&rows).unwrap();
            SeqPair {
                input: m.clone(),
                target: m,
            }
        })
        .collect();
    let mut g = c.benchmark_group("dataset_sse");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| dataset_sse(black_box(&w), &set, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, features, baseline, validation_sse);
criterion_main!(benches);
