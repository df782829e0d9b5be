use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noon_ocm::coincidence::{extract_coincidences_with, PulseRecord};
use noon_ocm::exec::Execution;
use noon_ocm::fit::fit_batch;
use noon_ocm::fringe::{
    joint_distribution_with, ArrayGeometry, Envelope, FringeConfig, SourceModel,
};
use noon_ocm::ocm::{project_events, CentroidHistogram};
use noon_ocm::sim::{sample_events, sample_events_with, Exposure, SimRun};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PITCH: f64 = 250e-6;

fn modes() -> Vec<(&'static str, Execution)> {
    vec![
        ("sequential", Execution::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Execution::Parallel),
    ]
}

fn setup() -> (FringeConfig, ArrayGeometry) {
    let geom = ArrayGeometry::new(11, PITCH, PITCH * 1e-6).unwrap();
    let cfg = FringeConfig::with_period(808e-9, 3.0 * PITCH)
        .unwrap()
        .envelope(Envelope::Gaussian {
            center: geom.pixel_center(5),
            sigma: 1.8 * PITCH,
        });
    (cfg, geom)
}

fn bench_sampling(c: &mut Criterion) {
    let (cfg, geom) = setup();
    let mut g = c.benchmark_group("sample_events");
    g.sample_size(10);
    for n in [2, 4] {
        let run = SimRun::new(
            SourceModel::ideal_noon(n).unwrap(),
            cfg,
            geom,
            Exposure::Events(200_000),
            1,
        );
        for (name, exec) in modes() {
            g.bench_with_input(BenchmarkId::new(name, n), &run, |b, run| {
                b.iter(|| sample_events_with(run, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_joint(c: &mut Criterion) {
    let (cfg, geom) = setup();
    let mut g = c.benchmark_group("joint_distribution");
    g.sample_size(10);
    let src = SourceModel::mixed(5, 0.3).unwrap();
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, 5), |b| {
            b.iter(|| joint_distribution_with(&src, &cfg, &geom, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_coincidences(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<PulseRecord> = (0..1_000_000u64)
        .map(|id| PulseRecord::new(id, (0..11u16).filter(|_| rng.gen_bool(0.1))))
        .collect();
    let mut g = c.benchmark_group("extract_coincidences");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, 3), |b| {
            b.iter(|| extract_coincidences_with(&records, 11, 3, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_fits(c: &mut Criterion) {
    let (cfg, geom) = setup();
    let hists: Vec<(CentroidHistogram, Option<f64>)> = (0..32u64)
        .map(|seed| {
            let n = 2 + (seed % 3) as usize;
            let run = SimRun::new(
                SourceModel::mixed(n, 0.4).unwrap(),
                cfg,
                geom,
                Exposure::Events(20_000),
                seed,
            );
            let out = sample_events(&run).unwrap();
            let h = project_events(&out.events, n, 11)
                .unwrap()
                .with_coordinates(0.0, PITCH);
            (
                h,
                if seed % 2 == 0 {
                    Some(n as f64 * cfg.spatial_frequency())
                } else {
                    None
                },
            )
        })
        .collect();
    let jobs: Vec<(&CentroidHistogram, Option<f64>)> = hists.iter().map(|(h, k)| (h, *k)).collect();
    let mut g = c.benchmark_group("fit_batch");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, jobs.len()), |b| {
            b.iter(|| fit_batch(&jobs, exec))
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_sampling,
    bench_joint,
    bench_coincidences,
    bench_fits
);
criterion_main!(benches);
