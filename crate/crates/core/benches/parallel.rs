//! Rayon pool against a single-thread pool on the two heaviest kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use infodisc::corpus;
use infodisc::discrepancy::{discrepancy_exact, gt_distribution};
use infodisc::sampling;
use infodisc::table::gt_function;

fn gt_exact() {
    let f = gt_function(4).unwrap();
    let mu = gt_distribution(4).unwrap();
    std::hint::black_box(discrepancy_exact(&f, &mu).unwrap());
}

fn sampler() {
    let inst = corpus::two_element_instance(2.0, 40);
    let stats = sampling::estimate_outcome_stats(inst.universe_size(), 50_000, 1, |s| sampling::pi1_simulate(&inst, s));
    std::hint::black_box(stats.unwrap());
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let threads = rayon::current_num_threads();
    vec![
        (format!("rayon-{threads}"), rayon::ThreadPoolBuilder::new().build().unwrap()),
        ("sequential".to_string(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench(c: &mut Criterion) {
    let kernels: [(&str, fn()); 2] = [("disc_exact_gt4", gt_exact), ("pi1_50k_trials", sampler)];
    let mut group = c.benchmark_group("parallel");
    group.sample_size(10);
    for (name, kernel) in kernels {
        #[cfg(feature = "parallel")]
        for (label, pool) in pools() {
            group.bench_function(BenchmarkId::new(name, &label), |b| b.iter(|| pool.install(kernel)));
        }
        #[cfg(not(feature = "parallel"))]
        group.bench_function(BenchmarkId::new(name, "sequential"), |b| b.iter(kernel));
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
