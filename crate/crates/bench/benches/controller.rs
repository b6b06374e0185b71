use ape_bench::corpora;
use ape_core::{run, RunConfig, RunOptions, ScalarSurrogate, SurrogateParams, TapParams, TextSurrogate};
use criterion::{criterion_group, criterion_main, Criterion};

fn params() -> SurrogateParams {
    SurrogateParams {
        skill: 0.2,
        tap: TapParams::new(0.5, 1.0, 1.0).unwrap(),
        noise_sigma: 0.02,
        seed: 3,
    }
}

fn controller(c: &mut Criterion) {
    let (train, test) = corpora(400, 100);
    let config = RunConfig::new(15, 40);
    let mut group = c.benchmark_group("run/15_iterations");
    group.sample_size(20);
    group.bench_function("scalar_surrogate", |b| {
        b.iter(|| {
            let mut learner = ScalarSurrogate::new(params()).unwrap();
            run(&config, &mut learner, &train, &test, &mut (), RunOptions::default()).unwrap()
        })
    });
    group.bench_function("text_surrogate", |b| {
        b.iter(|| {
            let examples = train.examples().iter().chain(test.examples());
            let mut learner = TextSurrogate::new(params(), examples).unwrap();
            run(&config, &mut learner, &train, &test, &mut (), RunOptions::default()).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, controller);
criterion_main!(benches);
