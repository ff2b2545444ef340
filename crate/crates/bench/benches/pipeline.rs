use criterion::{criterion_group, criterion_main, Criterion};
use earsift_bench::{all_pixels, probe_image, reference_image, sift_input, template, SEED};
use earsift_core::matching::match_templates;
use earsift_core::mixture::fit_gmm;
use earsift_core::sift::extract_sift;
use earsift_core::{Config, MatchStrategy, SegmentationMode};
use std::hint::black_box;

fn sift(c: &mut Criterion) {
    let img = sift_input(&reference_image(0));
    let params = Config::default().sift;
    c.bench_function("extract_sift 237x125", |b| {
        b.iter(|| extract_sift(black_box(&img), None, &params).unwrap())
    });
}

fn mixture(c: &mut Criterion) {
    let pixels = all_pixels(&reference_image(0));
    let mut group = c.benchmark_group("fit_gmm");
    group.sample_size(20);
    for k in [2, 5, 8] {
        group.bench_function(format!("k={k}"), |b| b.iter(|| fit_gmm(black_box(&pixels), k, SEED).unwrap()));
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let cfg = Config {
        mode: SegmentationMode::Prior,
        ..Config::default()
    };
    let reference = template(&reference_image(0), &cfg);
    let probe = template(&probe_image(0), &cfg);
    let mut group = c.benchmark_group("match_templates");
    for strategy in [MatchStrategy::Nn, MatchStrategy::Ed] {
        let params = earsift_core::MatchParams {
            strategy,
            ..cfg.matching.clone()
        };
        group.bench_function(strategy.as_str(), |b| {
            b.iter(|| match_templates(black_box(&probe), black_box(&reference), &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sift, mixture, matching);
criterion_main!(benches);
