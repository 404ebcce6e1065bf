use criterion::{criterion_group, criterion_main, Criterion};
use ddwave::channel::generate_channel;
use ddwave::par::{with_workers, Exec};
use ddwave::scheme::SchemeKind;
use ddwave::sim::{build_scheme, parse_config_str, run_plan_with};

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn effective_channel(c: &mut Criterion) {
    let plan = parse_config_str("{}").unwrap().resolve().unwrap();
    let gf = build_scheme(SchemeKind::GfOtfs, &plan).unwrap();
    gf.tx_basis().unwrap();
    let ch = generate_channel(&plan.channel, 1, 700).unwrap();
    let mut g = c.benchmark_group("gf_effective_channel");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| gf.effective_channel(&ch, Exec::Sequential).unwrap()));
    g.bench_function("parallel", |b| {
        b.iter(|| with_workers(workers(), || gf.effective_channel(&ch, Exec::Parallel).unwrap()))
    });
    g.finish();
}

fn ber_frames(c: &mut Criterion) {
    let plan = parse_config_str(r#"{"snr_grid_db": [10, 20], "n_frames": 4}"#)
        .unwrap()
        .resolve()
        .unwrap();
    let mut g = c.benchmark_group("ber_sweep_4_frames");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| run_plan_with(&plan, Exec::Sequential).unwrap()));
    g.bench_function("parallel", |b| {
        b.iter(|| with_workers(workers(), || run_plan_with(&plan, Exec::Parallel).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, effective_channel, ber_frames);
criterion_main!(benches);
