use std::f64::consts::PI;

use noon_ocm::analysis::{
    classical_visibility_theory, estimate_accidentals, subtract_accidentals, SinglesRates,
};
use noon_ocm::coincidence::{
    extract_coincidences, extract_coincidences_with, fold_statistics, pulse_records_from_events,
    CoincidenceCounter, PulseRecord,
};
use noon_ocm::exec::Execution;
use noon_ocm::fit::fit_fringe;
use noon_ocm::fringe::{
    joint_distribution, singles_distribution, ArrayGeometry, Envelope, FringeConfig, SourceModel,
};
use noon_ocm::ocm::{project_distribution, project_events, CentroidHistogram};
use noon_ocm::sim::{
    sample_events, sample_singles_calibration, CalibrationExposure, Constituent, DetectorModel,
    Exposure, SimRun,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PITCH: f64 = 250e-6;

fn point_geometry() -> ArrayGeometry {
    ArrayGeometry::new(11, PITCH, PITCH * 1e-6).unwrap()
}

fn gaussian_fringe(v1: f64) -> FringeConfig {
    FringeConfig::with_period(808e-9, 3.0 * PITCH)
        .unwrap()
        .visibility(v1)
        .envelope(Envelope::Gaussian {
            center: 5.0 * PITCH,
            sigma: 1.8 * PITCH,
        })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `2|Σ h e^{−iks}| / Σ h` evaluated directly on bin coordinates.
fn dft_ratio(h: &CentroidHistogram, k: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut total = 0.0;
    for (s, &c) in h.counts().iter().enumerate() {
        acc += c * Complex64::new(0.0, -k * h.coordinate(s)).exp();
        total += c;
    }
    2.0 * acc.norm() / total
}

fn expected_histogram(
    src: SourceModel,
    cfg: &FringeConfig,
    geom: &ArrayGeometry,
) -> CentroidHistogram {
    let joint = joint_distribution(&src, cfg, geom).unwrap();
    let p = project_distribution(&joint);
    let counts: Vec<f64> = p.counts().iter().map(|c| c * 1e6).collect();
    CentroidHistogram::from_parts(src.photon_number, geom.pixel_count, counts.clone(), counts)
        .unwrap()
        .with_coordinates(geom.origin, geom.pitch)
}

#[test]
fn noon_marginal_matches_closed_form() {
    // uniform envelope, finite cores: E_i = 1, Z_i = sinc(f w / 2) e^{i f x_i}
    let geom = ArrayGeometry::new(11, PITCH, 62.5e-6).unwrap();
    for (n, phase, v1) in [(2, 0.3, 1.0), (3, -1.1, 0.9), (4, 2.0, 0.7)] {
        let cfg = FringeConfig::with_period(808e-9, 2.3 * PITCH)
            .unwrap()
            .phase(phase)
            .visibility(v1);
        let joint = joint_distribution(&SourceModel::ideal_noon(n).unwrap(), &cfg, &geom).unwrap();
        let mut marginal = [0.0; 11];
        let mut tuple = vec![0; n];
        for (idx, &p) in joint.probs().iter().enumerate() {
            joint.tuple_of(idx, &mut tuple);
            marginal[tuple[0]] += p;
        }
        let f = cfg.spatial_frequency();
        let att = sinc(f * geom.core_width / 2.0);
        let z: Vec<Complex64> = (0..11)
            .map(|i| att * Complex64::new(0.0, f * geom.pixel_center(i)).exp())
            .collect();
        let zsum: Complex64 = z.iter().sum();
        let rot = Complex64::new(0.0, n as f64 * phase).exp();
        let vn = v1.powi(n as i32);
        let norm = 11f64.powi(n as i32) + vn * (rot * zsum.powi(n as i32)).re;
        for i in 0..11 {
            let num = 11f64.powi(n as i32 - 1) + vn * (rot * z[i] * zsum.powi(n as i32 - 1)).re;
            assert!((marginal[i] - num / norm).abs() < 1e-12, "N={n} pixel {i}");
        }
    }
}

#[test]
fn sampled_singles_marginal_matches_distribution() {
    let geom = ArrayGeometry::fiber_ribbon();
    let cfg = FringeConfig::with_period(808e-9, 1.3e-3)
        .unwrap()
        .visibility(0.9)
        .phase(0.4)
        .envelope(Envelope::Gaussian {
            center: 1.1e-3,
            sigma: 0.9e-3,
        });
    let run = SimRun::new(
        SourceModel::classical(2).unwrap(),
        cfg,
        geom,
        Exposure::Events(500_000),
        11,
    );
    let out = sample_events(&run).unwrap();
    let mut counts = [0.0f64; 11];
    for e in &out.events {
        for &p in e.pixels() {
            counts[p as usize] += 1.0;
        }
    }
    let photons: f64 = counts.iter().sum();
    assert_eq!(photons, 1e6);
    let p1 = singles_distribution(&cfg, &geom).unwrap();
    let chi2: f64 = counts
        .iter()
        .zip(&p1)
        .map(|(c, p)| (c - p * photons).powi(2) / (p * photons))
        .sum();
    assert!(chi2 / 10.0 < 2.0, "chi2/dof {}", chi2 / 10.0);
}

#[test]
fn sampled_noon_centroids_match_projection() {
    let geom = point_geometry();
    let cfg = gaussian_fringe(1.0).phase(0.5);
    let run = SimRun::new(
        SourceModel::ideal_noon(3).unwrap(),
        cfg,
        geom,
        Exposure::Events(1_000_000),
        12,
    );
    let out = sample_events(&run).unwrap();
    let sampled = project_events(&out.events, 3, 11).unwrap();
    let expected = project_distribution(&joint_distribution(&run.source, &cfg, &geom).unwrap());
    let tv: f64 = sampled
        .counts()
        .iter()
        .zip(expected.counts())
        .map(|(a, b)| (a / 1e6 - b).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn uniform_pair_accidentals_against_enumeration() {
    let r = vec![1e-3; 11];
    let mut oracle = 0.0;
    for i in 0..11 {
        for j in 0..11 {
            if i != j {
                oracle += 1e8 * r[i] * r[j];
            }
        }
    }
    let acc = estimate_accidentals(
        &SinglesRates::exact(r),
        &SinglesRates::zeros(11),
        2,
        1e8,
        true,
    )
    .unwrap();
    assert!((acc.total() - oracle).abs() < 1e-6);
    assert!((oracle - 1.1e4).abs() < 1e-6);
}

fn enumerate_accidentals(r: &[f64], n: usize, pulses: f64, distinct: bool) -> Vec<f64> {
    let d = r.len();
    let mut out = vec![0.0; n * (d - 1) + 1];
    let mut tuple = vec![0usize; n];
    loop {
        let mut seen = vec![false; d];
        let repeat = tuple.iter().any(|&i| std::mem::replace(&mut seen[i], true));
        if !(distinct && repeat) {
            out[tuple.iter().sum::<usize>()] +=
                pulses * tuple.iter().map(|&i| r[i]).product::<f64>();
        }
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            tuple[k] += 1;
            if tuple[k] < d {
                break;
            }
            tuple[k] = 0;
        }
    }
}

#[test]
fn random_accidentals_against_enumeration_and_numeric_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..12 {
        let d = 7;
        let n = 1 + trial % 4;
        let distinct = trial % 2 == 0;
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..0.02)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..0.01)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1e-7)).collect();
        let pulses = 1e7;
        let sa = SinglesRates {
            rates: a.clone(),
            variances: var.clone(),
        };
        let acc = estimate_accidentals(&sa, &SinglesRates::exact(b.clone()), n, pulses, distinct)
            .unwrap();
        let r: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let oracle = enumerate_accidentals(&r, n, pulses, distinct);
        for (x, y) in acc.counts().iter().zip(&oracle) {
            assert!(
                (x - y).abs() <= 1e-9 * y.abs().max(1.0),
                "trial {trial}: {x} vs {y}"
            );
        }
        // central differences of the enumerated counts
        let mut numeric = vec![0.0; oracle.len()];
        for i in 0..d {
            let h = 1e-6;
            let mut up = r.clone();
            let mut dn = r.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = enumerate_accidentals(&up, n, pulses, distinct);
            let fd = enumerate_accidentals(&dn, n, pulses, distinct);
            for s in 0..numeric.len() {
                let g = (fu[s] - fd[s]) / (2.0 * h);
                numeric[s] += g * g * var[i];
            }
        }
        for (x, y) in acc.variances().iter().zip(&numeric) {
            assert!(
                (x - y).abs() <= 1e-5 * y.abs().max(1e-9),
                "trial {trial}: var {x} vs {y}"
            );
        }
    }
}

#[test]
fn classical_theory_against_fourier_of_self_convolution() {
    // 12 samples per period, 20 periods: the sampled fringe has exact DFT lines
    let samples = 240;
    let k = 20;
    let p: Vec<f64> = (0..samples)
        .map(|j| 1.0 + 0.9 * (2.0 * PI * (k * j) as f64 / samples as f64).cos())
        .collect();
    // circular 4-fold self-convolution
    let mut conv = p.clone();
    for _ in 1..4 {
        let mut next = vec![0.0; samples];
        for (i, a) in conv.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                next[(i + j) % samples] += a * b;
            }
        }
        conv = next;
    }
    let dft = |m: usize| -> f64 {
        conv.iter()
            .enumerate()
            .map(|(j, c)| {
                c * Complex64::new(0.0, -2.0 * PI * (m * j) as f64 / samples as f64).exp()
            })
            .sum::<Complex64>()
            .norm()
    };
    // in pixel-sum coordinates the N-fold fringe keeps the singles frequency
    let v = 2.0 * dft(k) / dft(0);
    assert!(
        (v - classical_visibility_theory(4, 0.9)).abs() < 1e-12,
        "{v}"
    );
    assert!((classical_visibility_theory(4, 0.9) - 0.0820125).abs() < 1e-6);
}

#[test]
fn expected_weight_fits_match_published_and_fourier_values() {
    let geom = point_geometry();
    let cfg = gaussian_fringe(1.0);
    let k1 = cfg.spatial_frequency();

    let classical3 = expected_histogram(SourceModel::classical(3).unwrap(), &cfg, &geom);
    let fit = fit_fringe(&classical3, Some(3.0 * k1)).unwrap();
    assert!(
        (fit.visibility() - 0.25).abs() < 1e-3,
        "{}",
        fit.visibility()
    );

    let noon2 = expected_histogram(SourceModel::ideal_noon(2).unwrap(), &cfg, &geom);
    let fit = fit_fringe(&noon2, None).unwrap();
    assert!((fit.visibility() - 1.0).abs() < 1e-3);
    let rel = (fit.period() - cfg.period() / 2.0).abs() / (cfg.period() / 2.0);
    assert!(rel < 1e-3, "period error {rel}");

    for n in 1..=4 {
        let mut sources = vec![SourceModel::classical(n).unwrap()];
        if n >= 2 {
            sources.push(SourceModel::ideal_noon(n).unwrap());
        }
        for src in sources {
            let h = expected_histogram(src, &cfg, &geom);
            let kn = n as f64 * k1;
            let fit = fit_fringe(&h, Some(kn)).unwrap();
            let oracle = dft_ratio(&h, kn);
            assert!(
                (fit.visibility_raw() - oracle).abs() < 1e-3,
                "{:?} N={n}: fit {} vs Fourier {oracle}",
                src.kind,
                fit.visibility_raw()
            );
        }
    }
}

#[test]
fn mixed_source_raw_and_corrected_visibility() {
    let geom = point_geometry();
    let cfg = gaussian_fringe(1.0);
    let k1 = cfg.spatial_frequency();
    for (i, eps) in [0.2, 0.4, 0.6].into_iter().enumerate() {
        for n in 2..=4 {
            let src = SourceModel::mixed(n, eps).unwrap();
            let run = SimRun::new(
                src,
                cfg,
                geom,
                Exposure::Events(1_000_000),
                300 + 10 * i as u64 + n as u64,
            );
            let out = sample_events(&run).unwrap();
            let raw = project_events(&out.events, n, 11)
                .unwrap()
                .with_coordinates(geom.origin, geom.pitch);
            let kn = Some(n as f64 * k1);
            let raw_fit = fit_fringe(&raw, kn).unwrap();
            let mixture = (1.0 - eps) + eps / 2f64.powi(n as i32 - 1);
            let oracle = dft_ratio(&expected_histogram(src, &cfg, &geom), n as f64 * k1);
            let sigma = raw_fit.visibility_sigma();
            assert!(
                (raw_fit.visibility_raw() - mixture).abs() < 3.0 * sigma,
                "eps {eps} N={n}"
            );
            assert!(
                (raw_fit.visibility_raw() - oracle).abs() < 3.0 * sigma,
                "eps {eps} N={n}"
            );

            let cal = sample_singles_calibration(
                &run,
                Constituent::Background,
                CalibrationExposure::Photons(1e7),
            )
            .unwrap();
            let acc = estimate_accidentals(
                &SinglesRates::from(&cal),
                &SinglesRates::zeros(11),
                n,
                out.report.pulses as f64,
                false,
            )
            .unwrap();
            let corrected = fit_fringe(&subtract_accidentals(&raw, &acc).unwrap(), kn).unwrap();
            assert!(corrected.visibility_raw() > raw_fit.visibility_raw());
            assert!(
                (corrected.visibility_raw() - 1.0).abs() < 3.0 * corrected.visibility_sigma(),
                "eps {eps} N={n}: {}±{}",
                corrected.visibility_raw(),
                corrected.visibility_sigma()
            );
        }
    }
}

#[test]
fn fold_statistics_round_trip_from_simulation() {
    let geom = ArrayGeometry::fiber_ribbon();
    let cfg = FringeConfig::with_period(808e-9, 1.0e-3).unwrap();
    let run = SimRun::new(
        SourceModel::classical(3).unwrap(),
        cfg,
        geom,
        Exposure::Events(20_000),
        5,
    )
    .detector(DetectorModel::threshold(1.0));
    let out = sample_events(&run).unwrap();
    let records = pulse_records_from_events(out.events.iter()).unwrap();
    let stats = fold_statistics(&records, 11).unwrap();
    assert_eq!(stats.fold_total(3), out.events.len() as u64);
    let c = extract_coincidences(&records, 11, 3).unwrap();
    assert_eq!(c.table.total(), out.events.len() as u64);
    for (a, b) in c.events.iter().zip(&out.events) {
        assert_eq!(a.pixels(), b.pixels());
        assert_eq!(a.pulse_id, b.pulse_id);
    }
}

#[test]
fn streaming_and_batch_tables_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<PulseRecord> = (0..50_000u64)
        .map(|id| {
            let mut fired: Vec<u16> = (0..11).filter(|_| rng.gen_bool(0.15)).collect();
            // order within a pulse must not matter
            fired.reverse();
            PulseRecord::new(id / 2, fired)
        })
        .collect();
    let batch = extract_coincidences_with(&records, 11, 2, Execution::Sequential).unwrap();
    let parallel = extract_coincidences(&records, 11, 2).unwrap();
    let mut stream = CoincidenceCounter::new(11, 2);
    for r in &records {
        stream.push(r).unwrap();
    }
    let stream = stream.finish();
    assert_eq!(batch.table, stream.table);
    assert_eq!(parallel.table, stream.table);
    assert_eq!(batch.stats, stream.stats);
    assert_eq!(batch.events, parallel.events);
}
