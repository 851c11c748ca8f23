//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one line whatever happens to the others; the process
//! exits non-zero if any line is FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use enumkit::e164::{from_domain, parse_number, to_domain, ApexConfig, E164Number};
use enumkit::market::{self, MarketTable, PotentialMarketInputs};
use enumkit::naptr::{select, NaptrRecord, NaptrRecordSet, Requester, ServiceSelector, Visibility};
use enumkit::ids::{RegistrarId, Role};
use enumkit::registrar::{Right, Rights, TransferState};
use enumkit::resolver::resolve;
use enumkit::scenario::config::{FaultSpec, ScenarioConfig, CANONICAL_EVENTS};
use enumkit::scenario::invariants::{assert_invariants, ACCESS_SOUNDNESS, REPLICA_CONVERGENCE};
use enumkit::scenario::script::{parse_script, Proof};
use enumkit::scenario::valueflow::value_flow;
use enumkit::scenario::{resolve_lines, run_events};
use enumkit::sim::Fault;
use enumkit::topology::Topology;

// Tolerances, pinned here rather than taken from the library.
const DOMAIN_BUDGET: Duration = Duration::from_millis(1);
const ROUNDTRIP_BUDGET: Duration = Duration::from_secs(5);
const POTENTIAL_TOL: f64 = 0.01;
const GROWTH_TOL: f64 = 0.05;
const SHARE_TOL: f64 = 0.005;

const SEED: u64 = 0x5eed_2004;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("worked-example domain", c1_worked_example),
        ("potential-market cells", c2_potential_market),
        ("growth and share cells", c3_growth_and_share),
        ("domain round trip", c4_roundtrip),
        ("NAPTR selection oracle", c5_selection),
        ("model transparency", c6_transparency),
        ("value-flow directions", c7_value_flow),
        ("transfer conservation and faults", c8_transfers),
        ("multi-registry convergence", c9_convergence),
        ("access soundness", c10_access),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn canonical(cfg: ScenarioConfig) -> Topology {
    let mut t = Topology::build(cfg).expect("fixture builds");
    run_events(&mut t, &parse_script(CANONICAL_EVENTS).expect("canonical script parses"));
    t
}

fn builtin(model: u8) -> ScenarioConfig {
    ScenarioConfig::builtin(model).expect("builtin model")
}

fn c1_worked_example() -> Check {
    let apex = ApexConfig::new("e164.arpa", "e164.arpa").map_err(|e| e.to_string())?;
    let start = Instant::now();
    let n = parse_number("+1-315-443-4473", None).map_err(|e| e.to_string())?;
    let domain = to_domain(&n, &apex).to_string();
    let took = start.elapsed();
    ensure(domain == "3.7.4.4.3.4.4.5.1.3.1.e164.arpa", || format!("got {domain}"))?;
    ensure(took < DOMAIN_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{domain} in {took:?}"))
}

fn fig(tables: &[MarketTable], name: &str) -> MarketTable {
    tables.iter().find(|t| t.name == name).cloned().expect("fixture table present")
}

fn c2_potential_market() -> Check {
    // (region, year, revenue $B, subscribers M) as printed.
    const PRINTED: [(&str, u16, f64, f64); 4] = [
        ("world", 2000, 30.5, 96.55),
        ("world", 2002, 36.0, 130.75),
        ("usa", 2000, 10.05, 17.75),
        ("usa", 2002, 11.15, 24.9),
    ];
    let table = fig(&market::builtin_tables(), market::FIG_3_2);
    let mut misses = Vec::new();
    for (region, year, revenue, subscribers) in PRINTED {
        let v = |m: &str| table.value(&format!("{m}.{region}"), year).expect("component row");
        let est = market::potential_market(&PotentialMarketInputs {
            total_toll: v("total_toll"),
            mobile_revenue: v("mobile_revenue"),
            other_revenue: v("other_revenue"),
            main_lines: v("main_lines"),
            mobile_subscribers: v("mobile_subscribers"),
            internet_users: v("internet_users"),
            penetration: 0.05,
        })
        .map_err(|e| e.to_string())?;
        for (what, got, want) in [("revenue", est.revenue, revenue), ("subscribers", est.subscribers, subscribers)] {
            if (got - want).abs() > POTENTIAL_TOL {
                misses.push(format!("{region} {year} {what} computed {got:.2} printed {want}"));
            }
        }
    }
    if misses.is_empty() {
        Ok("8/8 cells within 0.01".into())
    } else {
        Err(format!("{}/8 cells within 0.01; {}", 8 - misses.len(), misses.join("; ")))
    }
}

fn c3_growth_and_share() -> Check {
    const GROWTH: [(&str, [f64; 4]); 2] = [
        ("internet_users.world", [35.2, 29.7, 25.8, 26.6]),
        ("internet_users.usa", [24.7, 24.4, 16.2, 12.9]),
    ];
    const SHARE: [(&str, &str, [f64; 5]); 2] = [
        ("pc_to_phone_users.world", "internet_users.world", [2.89, 4.72, 7.20, 10.31, 13.99]),
        ("pc_to_phone_users.usa", "internet_users.usa", [3.74, 5.98, 8.95, 12.64, 16.99]),
    ];
    let table = fig(&market::builtin_tables(), market::FIG_3_1);
    let mut n = 0;
    for (metric, printed) in GROWTH {
        for (i, want) in printed.iter().enumerate() {
            let year = 2001 + i as u16;
            let prev = table.value(metric, year - 1).map_err(|e| e.to_string())?;
            let cur = table.value(metric, year).map_err(|e| e.to_string())?;
            let got = (cur - prev) / prev * 100.0;
            ensure((got - want).abs() <= GROWTH_TOL, || format!("{metric} {year}: {got:.3} vs {want}"))?;
            n += 1;
        }
    }
    for (num, den, printed) in SHARE {
        for (i, want) in printed.iter().enumerate() {
            let year = 2000 + i as u16;
            let got = table.value(num, year).map_err(|e| e.to_string())? / table.value(den, year).map_err(|e| e.to_string())? * 100.0;
            ensure((got - want).abs() <= SHARE_TOL, || format!("{num} {year}: {got:.4} vs {want}"))?;
            n += 1;
        }
    }
    Ok(format!("{n} cells"))
}

fn random_label(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=8);
    (0..len).map(|_| (b'a' + rng.random_range(0..26)) as char).collect()
}

fn c4_roundtrip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = Instant::now();
    for i in 0..10_000 {
        let len = rng.random_range(3..=15);
        let mut digits = String::with_capacity(len);
        digits.push(char::from(b'1' + rng.random_range(0..9)));
        for _ in 1..len {
            digits.push(char::from(b'0' + rng.random_range(0..10)));
        }
        let labels = rng.random_range(1..=3);
        let apex_text = (0..labels).map(|_| random_label(&mut rng)).collect::<Vec<_>>().join(".");
        let apex = ApexConfig::new(&apex_text, &apex_text).map_err(|e| format!("apex {apex_text}: {e}"))?;
        let n = E164Number::from_digits(&digits).map_err(|e| format!("{digits}: {e}"))?;
        let domain = to_domain(&n, &apex).to_string();
        let expected: String = digits.chars().rev().map(|c| format!("{c}.")).collect::<String>() + &apex_text;
        ensure(domain == expected, || format!("case {i}: {domain} != {expected}"))?;
        let back = from_domain(&domain, &apex).map_err(|e| format!("case {i} {domain}: {e}"))?;
        ensure(back == n, || format!("case {i}: {domain} came back as {}", back.full_digits()))?;
    }
    let took = start.elapsed();
    ensure(took < ROUNDTRIP_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("10000 numbers in {took:?}"))
}

const SERVICES: [&str; 5] = ["E2U+sip", "e2u+SIP", "E2U+mailto", "E2U+tel", "E2U+web:http"];

fn random_record(rng: &mut ChaCha8Rng, order_span: u16, services: &[&str]) -> NaptrRecord {
    let service = *services.choose(rng).unwrap();
    let tag = rng.random_range(0..10_000);
    let rec = NaptrRecord::new(
        rng.random_range(0..order_span) * 10,
        rng.random_range(0..order_span) * 10,
        "u",
        service,
        &format!("!^.*$!sip:r{tag}@example.org!"),
        ".",
    )
    .expect("generated record is valid");
    let vis = if rng.random_bool(0.3) { Visibility::Restricted } else { Visibility::Public };
    rec.with_visibility(vis)
}

/// Exhaustive selection: walk the distinct (order, preference) keys from
/// smallest to largest and emit matching records under each key in their
/// stored order.
fn select_oracle(records: &[NaptrRecord], sel: &ServiceSelector, requester: Requester) -> Vec<NaptrRecord> {
    let visible = |r: &NaptrRecord| requester == Requester::Privileged || r.visibility == Visibility::Public;
    let wanted = |r: &NaptrRecord| match sel {
        ServiceSelector::Any => true,
        ServiceSelector::Service(s) => s.eq_ignore_ascii_case(&r.service),
    };
    let keys: BTreeSet<(u16, u16)> = records.iter().map(|r| (r.order, r.preference)).collect();
    let mut out = Vec::new();
    for key in keys {
        for r in records {
            if (r.order, r.preference) == key && visible(r) && wanted(r) {
                out.push(r.clone());
            }
        }
    }
    out
}

fn c5_selection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 5);
    let number = E164Number::from_digits("13154434473").unwrap();
    let mut compared = 0;
    for case in 0..1000 {
        let size = rng.random_range(0..=6);
        // A narrow key space forces ties, which is where stability matters.
        let records: Vec<NaptrRecord> = (0..size).map(|_| random_record(&mut rng, 3, &SERVICES)).collect();
        let set = NaptrRecordSet::with_records(number.clone(), records.clone());
        let mut selectors = vec![ServiceSelector::Any];
        selectors.extend(SERVICES.iter().map(|s| ServiceSelector::service(s)));
        selectors.push(ServiceSelector::service("E2U+fax"));
        for sel in &selectors {
            for requester in [Requester::Public, Requester::Privileged] {
                let got = select(&set, sel, requester);
                let want = select_oracle(&records, sel, requester);
                ensure(got == want, || format!("case {case} {sel} {requester:?}: {got:?} != {want:?}"))?;
                compared += 1;
            }
        }
    }
    Ok(format!("1000 sets, {compared} selections identical"))
}

fn c6_transparency() -> Check {
    let mut reference: Option<String> = None;
    let mut queried = 0;
    for model in 1..=6 {
        let t = canonical(builtin(model));
        let lines = resolve_lines(&t.log);
        ensure(!lines.is_empty(), || format!("model {model}: no resolves logged"))?;
        queried = lines.len();
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        match &reference {
            None => reference = Some(text),
            Some(r) => ensure(*r == text, || format!("model {model} differs:\n{text}\nvs model 1:\n{r}"))?,
        }
    }
    let r = reference.unwrap();
    let first = r.lines().next().unwrap_or_default();
    ensure(first == "+13154434473 * -> [sip:info@example.com, mailto:info@example.com]", || {
        format!("unexpected first resolve {first}")
    })?;
    Ok(format!("{queried} resolves identical across models 1-6"))
}

fn c7_value_flow() -> Check {
    use Role::*;
    let expected: [(u8, &[(Role, Role)]); 4] = [
        (1, &[(User, Tsp), (Asp, Tsp), (Tsp, Registry)]),
        (2, &[(User, Asp), (Asp, Registry)]),
        (3, &[(User, IndependentRegistrar), (IndependentRegistrar, Registry)]),
        (6, &[(User, IndependentRegistrar), (IndependentRegistrar, Registry)]),
    ];
    for (model, pairs) in expected {
        let t = canonical(builtin(model));
        let graph = value_flow(&t).map_err(|e| e.to_string())?;
        let got = graph.role_pairs(&t);
        let want: BTreeSet<(Role, Role)> = pairs.iter().copied().collect();
        ensure(got == want, || format!("model {model}: {got:?} != {want:?}"))?;
    }
    Ok("models 1, 2, 3, 6 match".into())
}

fn random_number(rng: &mut ChaCha8Rng) -> String {
    let cc = if rng.random_bool(0.5) { "1" } else { "44" };
    let mut s = format!("+{cc}");
    s.push(char::from(b'2' + rng.random_range(0..8)));
    for _ in 0..9 {
        s.push(char::from(b'0' + rng.random_range(0..10)));
    }
    s
}

fn key_of(r: &NaptrRecord) -> (String, u16, u16) {
    (r.service.to_ascii_lowercase(), r.order, r.preference)
}

fn multiset(records: &[NaptrRecord]) -> Vec<String> {
    let mut v: Vec<String> = records.iter().map(|r| format!("{} {}", r.visibility.as_str(), r.zone_line())).collect();
    v.sort();
    v
}

struct Subscribed {
    topo: Topology,
    number: String,
    old: String,
    new: String,
    expected: BTreeMap<(String, u16, u16), NaptrRecord>,
}

fn subscribed(rng: &mut ChaCha8Rng, bases: &[Topology]) -> Result<Subscribed, String> {
    let mut topo = bases.choose(rng).unwrap().clone();
    let number = random_number(rng);
    let (a, b) = {
        let cfg = topo.config();
        (cfg.resolve_alias("REG1").to_string(), cfg.resolve_alias("REG2").to_string())
    };
    let (old, new) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
    let tsp = if rng.random_bool(0.5) { "TSP-A" } else { "TSP-B" };
    topo.assign("U1", &number, tsp).map_err(|e| format!("assign: {e}"))?;
    topo.subscribe("U1", &number, &old, &Proof::Confirm, None).map_err(|e| format!("subscribe: {e}"))?;
    let mut expected = BTreeMap::new();
    for _ in 0..rng.random_range(0..=5) {
        let rec = random_record(rng, 4, &SERVICES);
        topo.provision("U1", &number, vec![rec.clone()]).map_err(|e| format!("provision: {e}"))?;
        expected.insert(key_of(&rec), rec);
    }
    Ok(Subscribed { topo, number, old, new, expected })
}

fn delegations_point_to(topo: &Topology, number: &str, registrar: &str) -> Result<(), String> {
    let n = parse_number(number, None).unwrap();
    for (id, reg) in &topo.registries {
        let Some(d) = reg.delegations.get(&n) else { continue };
        ensure(d.registrar.as_str() == registrar, || format!("{id} delegates {number} to {}", d.registrar))?;
    }
    Ok(())
}

fn c8_transfers() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 8);
    let bases: Vec<Topology> = (1..=6).map(|m| Topology::build(builtin(m)).unwrap()).collect();

    // Reachable old registrar: records arrive intact.
    let mut paused = 0;
    for case in 0..500 {
        let mut s = subscribed(&mut rng, &bases)?;
        let model = s.topo.config().model.id;
        let ctx = |m: String| format!("script {case} (model {model}): {m}");
        let rec = if rng.random_bool(0.3) {
            // Stop early, write to the old registrar, then carry on.
            paused += 1;
            let stop = *[TransferState::Requested, TransferState::OldNotified].choose(&mut rng).unwrap();
            let t = s.topo.transfer("U1", &s.number, &s.new, Some(stop)).map_err(|e| ctx(e.to_string()))?;
            let rec = random_record(&mut rng, 4, &SERVICES);
            s.topo.provision("U1", &s.number, vec![rec.clone()]).map_err(|e| ctx(e.to_string()))?;
            s.expected.insert(key_of(&rec), rec);
            s.topo.resume(t.id.as_str(), None).map_err(|e| ctx(e.to_string()))?
        } else {
            s.topo.transfer("U1", &s.number, &s.new, None).map_err(|e| ctx(e.to_string()))?
        };
        s.topo.settle();
        ensure(rec.state == TransferState::Complete, || ctx(format!("ended {}", rec.state)))?;
        ensure(rec.warnings.is_empty(), || ctx(format!("warnings {:?}", rec.warnings)))?;
        let want = multiset(&s.expected.values().cloned().collect::<Vec<_>>());
        let n = parse_number(&s.number, None).unwrap();
        let held = s.topo.registrars[&RegistrarId::from(s.new.as_str())].export(&n);
        ensure(multiset(&held.records) == want, || ctx(format!("new holds {:?}, want {want:?}", multiset(&held.records))))?;
        let left = s.topo.registrars[&RegistrarId::from(s.old.as_str())].export(&n);
        ensure(left.is_empty(), || ctx(format!("old still holds {}", left.len())))?;
        delegations_point_to(&s.topo, &s.number, &s.new).map_err(ctx)?;
        let report = assert_invariants(&s.topo);
        ensure(report.all_passed(), || ctx(report.to_string()))?;
    }

    // Old registrar down for the whole transfer.
    for case in 0..50 {
        let mut s = subscribed(&mut rng, &bases)?;
        let model = s.topo.config().model.id;
        let ctx = |m: String| format!("outage {case} (model {model}): {m}");
        let step = s.topo.step();
        s.topo.net.add_fault(Fault { actor: s.old.clone(), from: step, to: step + 20 });
        let rec = s.topo.transfer("U1", &s.number, &s.new, None).map_err(|e| ctx(e.to_string()))?;
        ensure(rec.state == TransferState::Complete, || ctx(format!("ended {}", rec.state)))?;
        ensure(rec.migrated_records.is_empty(), || ctx("migrated set not empty".into()))?;
        ensure(!rec.warnings.is_empty(), || ctx("no warning on the record".into()))?;
        let logged = s.topo.log.of_kind("warning").any(|w| w.get("transfer") == Some(rec.id.as_str()));
        ensure(logged, || ctx("no warning in the log".into()))?;
        s.topo.settle();
        delegations_point_to(&s.topo, &s.number, &s.new).map_err(ctx)?;
        let n = parse_number(&s.number, None).unwrap();
        ensure(s.topo.registrars[&RegistrarId::from(s.old.as_str())].export(&n).is_empty(), || {
            ctx("old kept records after recovering".into())
        })?;
        let report = assert_invariants(&s.topo);
        ensure(report.all_passed(), || ctx(report.to_string()))?;
    }

    // Dispute at each state before Complete.
    let mut disputes = 0;
    for base in &bases {
        for stop in &TransferState::FORWARD[..4] {
            let mut s = subscribed(&mut rng, std::slice::from_ref(base))?;
            let model = s.topo.config().model.id;
        let ctx = |m: String| format!("dispute at {stop} (model {model}): {m}");
            let before = resolve(&mut s.topo, &s.number, &ServiceSelector::Any).map(|o| o.uris().iter().map(|u| u.to_string()).collect::<Vec<_>>());
            let t = s.topo.transfer("U1", &s.number, &s.new, Some(*stop)).map_err(|e| ctx(e.to_string()))?;
            ensure(t.state == *stop, || ctx(format!("paused at {}", t.state)))?;
            let d = s.topo.dispute(&s.old, t.id.as_str(), "not authorised").map_err(|e| ctx(e.to_string()))?;
            s.topo.settle();
            ensure(d.state == TransferState::Disputed, || ctx(format!("ended {}", d.state)))?;
            delegations_point_to(&s.topo, &s.number, &s.old).map_err(ctx)?;
            let after = resolve(&mut s.topo, &s.number, &ServiceSelector::Any).map(|o| o.uris().iter().map(|u| u.to_string()).collect::<Vec<_>>());
            ensure(before.as_ref().ok() == after.as_ref().ok(), || ctx(format!("{before:?} -> {after:?}")))?;
            let report = assert_invariants(&s.topo);
            ensure(report.all_passed(), || ctx(report.to_string()))?;
            disputes += 1;
        }
    }
    Ok(format!("500 transfers ({paused} paused and resumed), 50 outages, {disputes} disputes"))
}

/// Every registry holds the owner's copy of every delegation.
fn replicas_match(t: &Topology) -> Result<usize, String> {
    let mut owners = BTreeMap::new();
    for reg in t.registries.values() {
        for (n, d) in &reg.delegations {
            if d.owning_registry == reg.id {
                owners.insert(n.clone(), d.clone());
            }
        }
    }
    for reg in t.registries.values() {
        for (n, d) in &owners {
            let copy = reg.delegations.get(n);
            ensure(copy == Some(d), || format!("{} holds {copy:?} for {n:?}, owner has {d:?}", reg.id))?;
        }
        ensure(reg.delegations.len() == owners.len(), || format!("{} holds stray delegations", reg.id))?;
    }
    Ok(owners.len())
}

fn c9_convergence() -> Check {
    let mut checked = 0;
    for model in 4..=6 {
        let t = canonical(builtin(model));
        ensure(t.registries.len() > 1, || format!("model {model} has one registry"))?;
        checked += replicas_match(&t).map_err(|e| format!("model {model}: {e}"))?;
    }
    let mut cfg = builtin(4);
    cfg.faults.push(FaultSpec { actor: "R2".into(), from: 1, to: 30 });
    let t = canonical(cfg);
    let report = assert_invariants(&t);
    let conv = report.get(REPLICA_CONVERGENCE).expect("check present");
    ensure(!conv.passed, || "peering fault not reported".into())?;
    ensure(replicas_match(&t).is_err(), || "independent check saw no divergence under fault".into())?;
    Ok(format!("{checked} delegations converged across models 4-6; fault reported"))
}

/// Independent model of who may do what to one number.
struct AccessOracle {
    user: String,
    registrar: String,
    tsp: String,
    tsp_implicit: bool,
    network: BTreeSet<String>,
    grants: BTreeMap<String, (String, Rights, ServiceSelector)>,
}

impl AccessOracle {
    fn scope_covers(scope: &ServiceSelector, service: &str) -> bool {
        match scope {
            ServiceSelector::Any => true,
            ServiceSelector::Service(s) => s.eq_ignore_ascii_case(service),
        }
    }

    fn inherent(&self, actor: &str, service: &str) -> bool {
        actor == self.user
            || actor == self.registrar
            || (self.tsp_implicit && actor == self.tsp && self.network.contains(&service.to_ascii_lowercase()))
    }

    fn may_write(&self, actor: &str, service: &str) -> bool {
        self.inherent(actor, service)
            || self.grants.values().any(|(g, rights, scope)| {
                g == actor
                    && (rights.contains(Right::Provision) || rights.contains(Right::Change))
                    && Self::scope_covers(scope, service)
            })
    }

    fn may_read(&self, actor: &str, service: &str) -> bool {
        self.inherent(actor, service)
            || self
                .grants
                .values()
                .any(|(g, rights, scope)| g == actor && rights.contains(Right::Access) && Self::scope_covers(scope, service))
    }
}

fn c10_access() -> Check {
    const ACTORS: [&str; 9] = ["U1", "U2", "TSP-A", "TSP-B", "ASP-X", "ASP-Y", "REG-I", "REG-J", "nobody"];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    let bases: Vec<Topology> = (1..=6).map(|m| Topology::build(builtin(m)).unwrap()).collect();
    let (mut writes, mut refused, mut reads) = (0, 0, 0);
    for case in 0..1000 {
        let mut s = subscribed(&mut rng, &bases)?;
        let model = s.topo.config().model.id;
        let ctx = |m: String| format!("sequence {case} (model {model}): {m}");
        let n = parse_number(&s.number, None).unwrap();
        let tsp = s.topo.subscriptions[&n].tsp.to_string();
        let mut oracle = AccessOracle {
            user: "U1".into(),
            registrar: s.old.clone(),
            tsp,
            tsp_implicit: matches!(model, 1 | 4),
            network: s.topo.config().policy.network_related_services.iter().map(|x| x.to_ascii_lowercase()).collect(),
            grants: BTreeMap::new(),
        };
        for _ in 0..rng.random_range(4..=12) {
            match rng.random_range(0..4) {
                0 => {
                    let grantor = if rng.random_bool(0.85) { "U1" } else { *ACTORS.choose(&mut rng).unwrap() };
                    let grantee = *ACTORS[1..8].choose(&mut rng).unwrap();
                    let rights = Rights::new(
                        [Right::Provision, Right::Access, Right::Change].into_iter().filter(|_| rng.random_bool(0.5)),
                    );
                    let scope = if rng.random_bool(0.4) {
                        ServiceSelector::Any
                    } else {
                        ServiceSelector::service(SERVICES.choose(&mut rng).unwrap())
                    };
                    let r = s.topo.grant(grantor, &s.number, grantee, rights.clone(), scope.clone());
                    if grantor != "U1" {
                        ensure(r.is_err(), || ctx(format!("{grantor} granted on another's number")))?;
                    } else if let Ok(g) = r {
                        oracle.grants.insert(g.id.to_string(), (grantee.to_string(), rights, scope));
                    }
                }
                1 => {
                    let ids: Vec<String> = oracle.grants.keys().cloned().collect();
                    if let Some(id) = ids.choose(&mut rng) {
                        let revoker = if rng.random_bool(0.85) { "U1" } else { *ACTORS[1..].choose(&mut rng).unwrap() };
                        let r = s.topo.revoke(revoker, id);
                        if revoker == "U1" {
                            r.map_err(|e| ctx(format!("revoke {id}: {e}")))?;
                            oracle.grants.remove(id);
                        } else {
                            ensure(r.is_err(), || ctx(format!("{revoker} revoked {id}")))?;
                        }
                    }
                }
                2 => {
                    let actor = *ACTORS.choose(&mut rng).unwrap();
                    let rec = random_record(&mut rng, 4, &SERVICES);
                    let allowed = oracle.may_write(actor, &rec.service);
                    let ok = s.topo.provision(actor, &s.number, vec![rec.clone()]).is_ok();
                    ensure(!ok || allowed, || ctx(format!("{actor} wrote {} against the oracle", rec.service)))?;
                    ensure(ok || !allowed, || ctx(format!("{actor} refused {} the oracle allows", rec.service)))?;
                    writes += 1;
                    refused += usize::from(!ok);
                }
                _ => {
                    let actor = *ACTORS.choose(&mut rng).unwrap();
                    let set = s.topo.get(Some(actor), &s.number, &ServiceSelector::Any).map_err(|e| ctx(e.to_string()))?;
                    for r in &set.records {
                        let ok = r.visibility == Visibility::Public || oracle.may_read(actor, &r.service);
                        ensure(ok, || ctx(format!("{actor} read restricted {}", r.service)))?;
                    }
                    let stored = s.topo.registrars[&RegistrarId::from(s.old.as_str())].export(&n);
                    let visible =
                        stored.records.iter().filter(|r| r.visibility == Visibility::Public || oracle.may_read(actor, &r.service)).count();
                    ensure(visible == set.len(), || ctx(format!("{actor} saw {} of {visible}", set.len())))?;
                    reads += 1;
                }
            }
        }
        s.topo.settle();
        let report = assert_invariants(&s.topo);
        ensure(report.get(ACCESS_SOUNDNESS).unwrap().passed, || ctx(report.to_string()))?;
    }

    let mut planted = canonical(builtin(1));
    let rec = NaptrRecord::new(1, 1, "u", "E2U+sip", "!^.*$!sip:evil@example.org!", ".").unwrap();
    let id = planted.inject_unchecked_write("ASP-Y", "+1-315-443-4473", rec).map_err(|e| e.to_string())?;
    let report = assert_invariants(&planted);
    let access = report.get(ACCESS_SOUNDNESS).unwrap();
    ensure(!access.passed && access.counterexamples == vec![id], || format!("planted write not pinned: {access:?}"))?;
    Ok(format!("1000 sequences, {writes} writes ({refused} refused), {reads} reads; planted write caught"))
}
