use engage_core::candidate::SubjectLineCandidate;
use engage_core::pipeline::{
    format_pairwise, label_pairs, shuffle_seed, EngagementAggregate, MinSendsScope, PairwiseLabel, PipelineConfig,
    PreferencePair, Source, VariantTotals,
};
use proptest::prelude::*;

fn variant(source: Source, sends: u64, clicks: u64) -> VariantTotals {
    let tag = if source == Source::Rule { "rule" } else { "gen" };
    VariantTotals {
        variant_id: tag.into(),
        subject_text: format!("Subject {tag}"),
        source,
        sends,
        clicks,
    }
}

fn aggregate(i: usize, rule: (u64, u64), generated: (u64, u64)) -> EngagementAggregate {
    EngagementAggregate {
        post_id: format!("p{i}"),
        post_text: "Some post text.".into(),
        variants: vec![
            variant(Source::Rule, rule.0, rule.1),
            variant(Source::Generated, generated.0, generated.1),
        ],
    }
}

/// Integer-exact verdict for one aggregate with margin 0.1.
#[derive(Debug, PartialEq)]
enum Expected {
    MinSends,
    ZeroCtr,
    DeadZone,
    GeneratedWins,
    RuleWins,
}

fn oracle(rule: (u64, u64), generated: (u64, u64), min_sends: u64, scope: MinSendsScope) -> Expected {
    let enough = match scope {
        MinSendsScope::PerArm => rule.0 >= min_sends && generated.0 >= min_sends,
        MinSendsScope::Combined => rule.0 + generated.0 >= min_sends,
    };
    if !enough {
        return Expected::MinSends;
    }
    if rule.1 == 0 {
        return Expected::ZeroCtr;
    }
    // lift = (gc/gs) / (rc/rs), compared against 11/10 and 9/10 exactly.
    let num = generated.1 as u128 * rule.0 as u128 * 10;
    let den = generated.0 as u128 * rule.1 as u128;
    if num > 11 * den {
        Expected::GeneratedWins
    } else if num < 9 * den {
        Expected::RuleWins
    } else {
        Expected::DeadZone
    }
}

fn arm() -> impl Strategy<Value = (u64, u64)> {
    (1u64..1200).prop_flat_map(|sends| (Just(sends), 0..=sends.min(200)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn labels_follow_the_exact_rules(
        arms in prop::collection::vec((arm(), arm()), 1..40),
        per_arm in any::<bool>(),
    ) {
        let scope = if per_arm { MinSendsScope::PerArm } else { MinSendsScope::Combined };
        let config = PipelineConfig { min_sends_scope: scope, ..PipelineConfig::default() };
        let aggs: Vec<_> = arms.iter().enumerate().map(|(i, (r, g))| aggregate(i, *r, *g)).collect();
        let out = label_pairs(&aggs, &config);
        let s = out.summary;

        prop_assert_eq!(s.total, aggs.len());
        prop_assert_eq!(s.emitted + s.dropped_min_sends + s.dropped_zero_ctr + s.dropped_dead_zone + s.dropped_invalid, s.total);
        prop_assert_eq!(s.dropped_invalid, 0);

        let expected: Vec<Expected> = arms.iter().map(|(r, g)| oracle(*r, *g, 300, scope)).collect();
        let count = |e: Expected| expected.iter().filter(|x| **x == e).count();
        prop_assert_eq!(s.dropped_min_sends, count(Expected::MinSends));
        prop_assert_eq!(s.dropped_zero_ctr, count(Expected::ZeroCtr));
        prop_assert_eq!(s.dropped_dead_zone, count(Expected::DeadZone));

        for pair in &out.pairs {
            let i: usize = pair.post_id[1..].parse().unwrap();
            let (r, g) = arms[i];
            prop_assert!(!(0.9..=1.1).contains(&pair.lift_ratio), "dead-zone pair {:?}", pair.lift_ratio);
            match oracle(r, g, 300, scope) {
                Expected::GeneratedWins => prop_assert_eq!(&pair.winner.text, "Subject gen"),
                Expected::RuleWins => prop_assert_eq!(&pair.winner.text, "Subject rule"),
                other => prop_assert!(false, "emitted a pair the oracle drops: {:?}", other),
            }
            match scope {
                MinSendsScope::PerArm => prop_assert!(r.0 >= 300 && g.0 >= 300),
                MinSendsScope::Combined => prop_assert!(r.0 + g.0 >= 300),
            }
            prop_assert!(r.1 > 0);
        }
    }
}

#[test]
fn margin_boundaries_are_strict() {
    let config = PipelineConfig::default();
    // Exactly 1.10 and 0.90 stay in the dead zone.
    let edge = [
        aggregate(0, (1000, 100), (1000, 110)),
        aggregate(1, (1000, 100), (1000, 90)),
    ];
    assert!(label_pairs(&edge, &config).pairs.is_empty());
    let out = label_pairs(
        &[
            aggregate(0, (1000, 100), (1000, 111)),
            aggregate(1, (1000, 100), (1000, 89)),
        ],
        &config,
    );
    assert_eq!(out.pairs.len(), 2);
    assert_eq!(out.pairs[0].winner.source, engage_core::Provenance::Generated);
    assert_eq!(out.pairs[1].winner.source, engage_core::Provenance::Rule);
}

#[test]
fn send_floor_is_per_arm_by_default() {
    let out = label_pairs(&[aggregate(0, (299, 30), (5000, 900))], &PipelineConfig::default());
    assert_eq!(out.summary.dropped_min_sends, 1);
    let combined = PipelineConfig {
        min_sends_scope: MinSendsScope::Combined,
        ..PipelineConfig::default()
    };
    assert_eq!(
        label_pairs(&[aggregate(0, (299, 30), (5000, 900))], &combined)
            .summary
            .emitted,
        1
    );
}

#[test]
fn winner_slot_is_balanced() {
    let pairs: Vec<PreferencePair> = (0..10_000)
        .map(|i| {
            let post_id = format!("post-{i}");
            PreferencePair {
                shuffle_seed: shuffle_seed(42, &post_id),
                post_id,
                post_text: "Post".into(),
                winner: SubjectLineCandidate::generated("Winner"),
                loser: SubjectLineCandidate::rule("Loser"),
                lift_ratio: 1.5,
            }
        })
        .collect();
    let in_a = pairs
        .iter()
        .filter(|p| format_pairwise(p).target == PairwiseLabel::A)
        .count();
    let share = in_a as f64 / pairs.len() as f64;
    assert!((share - 0.5).abs() < 0.02, "share {share}");
    for p in pairs.iter().take(200) {
        let ex = format_pairwise(p);
        let (_, a, b) = ex.fields().unwrap();
        let winner_slot = if ex.target == PairwiseLabel::A { a } else { b };
        assert_eq!(winner_slot, "Winner");
        assert_eq!(ex, format_pairwise(p));
    }
}
