mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use sessionseq::dictionary::{build_dictionary, BuildOptions};
use sessionseq::event_model::EventPattern;
use sessionseq::query::{
    count_events, expand_pattern, funnel, funnel_unique_users, rollup, CountMode, FunnelMode, RollupRow, ROLLUP_LEVELS,
};
use sessionseq::sessionizer::sessionize;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sessionize_matches_brute_force(seed in any::<u64>(), gap in prop::sample::select(vec![60u64, 600, 1800])) {
        let events = random_corpus(seed, 400, gap);
        let dict = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        let out = sessionize(&events, &dict, gap).unwrap();
        prop_assert_eq!(out.unknown_events, 0);
        prop_assert_eq!(decode_records(&dict, &out.sessions.records), brute_sessionize(&events, gap));
    }

    #[test]
    fn dictionary_ignores_input_order(seed in any::<u64>()) {
        let mut events = random_corpus(seed, 300, 1800);
        let a = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        events.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn queries_match_brute_force(
        seed in any::<u64>(),
        pattern in prop::sample::select(PATTERNS.to_vec()),
        stages in prop::collection::vec(prop::sample::select(PATTERNS.to_vec()), 1..4),
    ) {
        let events = random_corpus(seed, 300, 1800);
        let dict = build_dictionary(&events, date(), &BuildOptions::default()).unwrap();
        let sessions = sessionize(&events, &dict, 1800).unwrap().sessions;
        let decoded: Vec<_> = decode_records(&dict, &sessions.records).into_iter().map(|s| s.names).collect();

        let p = EventPattern::glob(pattern).unwrap();
        let class = expand_pattern(&dict, &p);
        let (total, in_sessions) = brute_count(&decoded, &p);
        let raw_total = events.iter().filter(|e| p.matches(&e.event_name)).count() as u64;
        prop_assert_eq!(total, raw_total);
        prop_assert_eq!(count_events(&sessions, &class, CountMode::Total).unwrap(), total);
        prop_assert_eq!(count_events(&sessions, &class, CountMode::Sessions).unwrap(), in_sessions);

        let patterns: Vec<EventPattern> = stages.iter().map(|s| EventPattern::glob(s).unwrap()).collect();
        let classes: Vec<_> = patterns.iter().map(|p| expand_pattern(&dict, p)).collect();
        for (mode, contiguous) in [(FunnelMode::InOrder, false), (FunnelMode::Contiguous, true)] {
            let got = funnel(&sessions, &classes, mode).unwrap().stage_counts;
            prop_assert_eq!(&got, &brute_funnel(&decoded, &patterns, contiguous));
            prop_assert!(got.windows(2).all(|w| w[0] >= w[1]));
            let users = funnel_unique_users(&sessions, &classes, mode).unwrap().stage_counts;
            prop_assert!(users.iter().zip(&got).all(|(u, s)| u <= s));
            // prefix consistency
            for k in 1..classes.len() {
                prop_assert_eq!(&funnel(&sessions, &classes[..k], mode).unwrap().stage_counts[..], &got[..k]);
            }
        }
    }

    #[test]
    fn rollups_conserve_counts(seed in any::<u64>()) {
        let events = random_corpus(seed, 300, 1800);
        let tables = rollup(&events);
        prop_assert_eq!(tables.len(), ROLLUP_LEVELS.len());
        let logged_out = events.iter().filter(|e| e.user_id.is_none()).count() as u64;
        for t in &tables {
            prop_assert_eq!(t.total(), events.len() as u64);
            prop_assert_eq!(t.rows.values().map(|r| r.logged_out).sum::<u64>(), logged_out);
        }
        for pair in tables.windows(2) {
            let mut coarsened: BTreeMap<_, RollupRow> = BTreeMap::new();
            for (key, row) in &pair[0].rows {
                let slot = coarsened.entry(key.coarsen(pair[1].level)).or_default();
                slot.logged_in += row.logged_in;
                slot.logged_out += row.logged_out;
            }
            prop_assert_eq!(&coarsened, &pair[1].rows);
        }
    }
}
