use noon_ocm::analysis::classical_visibility_theory;
use noon_ocm::coincidence::{extract_coincidences, CountTable, PulseRecord};
use noon_ocm::exec::Execution;
use noon_ocm::fringe::{joint_distribution, ArrayGeometry, Envelope, FringeConfig, SourceModel};
use noon_ocm::ocm::{project_events, project_events_with, CentroidHistogram, DetectionEvent};
use proptest::prelude::*;

fn fringe_strategy() -> impl Strategy<Value = FringeConfig> {
    (
        1.2f64..9.0,
        -3.0f64..3.0,
        0.0f64..=1.0,
        1.0f64..9.0,
        0.5f64..6.0,
    )
        .prop_map(|(period, phase, v, c, s)| {
            FringeConfig::with_period(0.8, period)
                .unwrap()
                .phase(phase)
                .visibility(v)
                .envelope(Envelope::Gaussian {
                    center: c,
                    sigma: s,
                })
        })
}

fn source_strategy() -> impl Strategy<Value = SourceModel> {
    (2usize..=4, 0usize..3, 0.0f64..=1.0).prop_map(|(n, kind, eps)| match kind {
        0 => SourceModel::classical(n).unwrap(),
        1 => SourceModel::ideal_noon(n).unwrap(),
        _ => SourceModel::mixed(n, eps).unwrap(),
    })
}

fn events_strategy(n: usize, d: u16) -> impl Strategy<Value = Vec<DetectionEvent>> {
    prop::collection::vec(prop::collection::vec(0..d, n), 0..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, px)| DetectionEvent::new(i as u64, px))
            .collect()
    })
}

fn hist_strategy() -> impl Strategy<Value = CentroidHistogram> {
    prop::collection::vec(0u32..1000, 21).prop_map(|c| {
        CentroidHistogram::from_counts(2, 11, c.into_iter().map(f64::from).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_is_permutation_symmetric(
        cfg in fringe_strategy(),
        src in source_strategy(),
        core in 0.05f64..1.0,
        picks in prop::collection::vec((prop::collection::vec(0usize..11, 4), any::<prop::sample::Index>()), 8),
    ) {
        let geom = ArrayGeometry::new(11, 1.0, core).unwrap();
        let joint = joint_distribution(&src, &cfg, &geom).unwrap();
        let total: f64 = joint.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let n = src.photon_number;
        for (tuple, rot) in picks {
            let tuple = &tuple[..n];
            let mut perm = tuple.to_vec();
            perm.rotate_left(rot.index(n));
            perm.swap(0, n - 1);
            let a = joint.get(tuple);
            let b = joint.get(&perm);
            prop_assert!((a - b).abs() <= 1e-15 + 1e-12 * a.abs());
        }
    }

    #[test]
    fn merge_is_associative_and_commutative(a in hist_strategy(), b in hist_strategy(), c in hist_strategy()) {
        let ab_c = a.merge(&b).unwrap().merge(&c).unwrap();
        let a_bc = a.merge(&b.merge(&c).unwrap()).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
    }

    #[test]
    fn projection_keeps_every_event(events in events_strategy(3, 11)) {
        let h = project_events(&events, 3, 11).unwrap();
        prop_assert_eq!(h.total(), events.len() as f64);
        prop_assert_eq!(h.len(), 31);
        let seq = project_events_with(&events, 3, 11, Execution::Sequential).unwrap();
        prop_assert_eq!(seq, h);
    }

    #[test]
    fn split_projection_merges_to_whole(events in events_strategy(2, 11), cut in any::<prop::sample::Index>()) {
        let k = if events.is_empty() { 0 } else { cut.index(events.len()) };
        let whole = project_events(&events, 2, 11).unwrap();
        let left = project_events(&events[..k], 2, 11).unwrap();
        let right = project_events(&events[k..], 2, 11).unwrap();
        prop_assert_eq!(left.merge(&right).unwrap(), whole);
    }

    #[test]
    fn colex_rank_round_trips(k in 1usize..=5, seed in any::<u64>()) {
        let table = CountTable::new(11, k);
        let r = (seed % table.len() as u64) as usize;
        let subset = table.subset(r);
        prop_assert_eq!(subset.len(), k);
        prop_assert!(subset.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(table.rank(&subset), r);
    }

    #[test]
    fn table_total_equals_emitted_events(
        fires in prop::collection::vec(prop::collection::btree_set(0u16..11, 0..6), 0..300),
        order in 1usize..=5,
    ) {
        let records: Vec<PulseRecord> = fires
            .into_iter()
            .enumerate()
            .map(|(i, s)| PulseRecord::new(i as u64, s))
            .collect();
        let c = extract_coincidences(&records, 11, order).unwrap();
        prop_assert_eq!(c.table.total(), c.events.len() as u64);
        prop_assert_eq!(c.stats.fold_total(order), c.events.len() as u64);
        prop_assert_eq!(c.stats.pulses, records.len() as u64);
    }
}

#[test]
fn classical_theory_halves_with_each_photon() {
    for n in 1..=10 {
        let v = classical_visibility_theory(n, 1.0);
        assert_eq!(v, 1.0 / 2f64.powi(n as i32 - 1));
        assert_eq!(classical_visibility_theory(n + 1, 1.0), v / 2.0);
    }
}
