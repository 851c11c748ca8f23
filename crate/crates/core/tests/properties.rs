use proptest::prelude::*;

use enumkit::e164::{from_domain, parse_number, to_domain, ApexConfig, E164Number};
use enumkit::naptr::{NaptrRecord, NaptrRecordSet};
use enumkit::scenario::config::{ScenarioConfig, CANONICAL_EVENTS};
use enumkit::scenario::run_events;
use enumkit::scenario::script::parse_script;
use enumkit::topology::Topology;
use enumkit::wire::{escape, unescape, Frame, FrameKind};

fn digits() -> impl Strategy<Value = String> {
    "[1-9][0-9]{2,14}"
}

proptest! {
    #[test]
    fn punctuation_does_not_change_the_number(d in digits(), seps in prop::collection::vec("[-. ()]?", 15)) {
        let mut raw = String::from("+");
        for (i, c) in d.chars().enumerate() {
            raw.push(c);
            raw.push_str(&seps[i]);
        }
        let n = parse_number(&raw, None).unwrap();
        prop_assert_eq!(n.full_digits(), d.as_str());
    }

    #[test]
    fn domain_round_trip(d in digits(), apex in "[a-z]{1,6}(\\.[a-z]{1,6}){0,2}") {
        let apex = ApexConfig::new(&apex, &apex).unwrap();
        let n = E164Number::from_digits(&d).unwrap();
        let domain = to_domain(&n, &apex).to_string();
        prop_assert_eq!(from_domain(&domain, &apex).unwrap(), n);
        prop_assert_eq!(domain.matches('.').count(), d.len() + apex.label_count() - 1);
    }

    #[test]
    fn escaping_round_trips(s in "\\PC*") {
        prop_assert_eq!(unescape(&escape(&s)).unwrap(), s.clone());
        let e = escape(&s);
        prop_assert!(!e.contains(';') && !e.contains('\n'));
    }

    #[test]
    fn frames_survive_the_wire(values in prop::collection::vec("\\PC{0,20}", 0..6)) {
        let mut f = Frame::new(FrameKind::Provision);
        for (i, v) in values.iter().enumerate() {
            f.push(&format!("k{i}"), v);
        }
        let bytes = f.encode();
        let (back, used) = Frame::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, f);
    }

    #[test]
    fn merging_keeps_one_record_per_key(recs in prop::collection::vec((0u16..3, 0u16..3, 0usize..3, 0u32..100), 0..12)) {
        let services = ["E2U+sip", "E2U+mailto", "E2U+tel"];
        let mut set = NaptrRecordSet::new(E164Number::from_digits("4420794600").unwrap());
        for (o, p, s, tag) in &recs {
            let r = NaptrRecord::new(*o, *p, "u", services[*s], &format!("!^.*$!x:{tag}!"), ".").unwrap();
            set.merge(r.clone());
            prop_assert!(set.records.contains(&r));
        }
        let mut keys: Vec<_> = set.records.iter().map(|r| r.merge_key()).collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(keys.len(), n);
    }

    #[test]
    fn record_text_round_trips(o in 0u16..1000, p in 0u16..1000, s in 0usize..3, user in "[a-z]{1,8}") {
        let services = ["E2U+sip", "E2U+mailto", "E2U+web:http"];
        let r = NaptrRecord::new(o, p, "u", services[s], &format!("!^.*$!sip:{user}@example.com!"), ".").unwrap();
        let back: NaptrRecord = r.to_string().parse().unwrap();
        prop_assert_eq!(back, r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn seed_only_affects_delivery_order(seed in any::<u64>(), model in 1u8..=6) {
        let run = |seed: u64| {
            let mut cfg = ScenarioConfig::builtin(model).unwrap();
            cfg.model.seed = seed;
            let mut t = Topology::build(cfg).unwrap();
            run_events(&mut t, &parse_script(CANONICAL_EVENTS).unwrap());
            t
        };
        let a = run(seed);
        let b = run(seed);
        prop_assert_eq!(a.log.render(), b.log.render());
        let reference = run(7);
        prop_assert_eq!(a.canonical_state(), reference.canonical_state());
    }
}
