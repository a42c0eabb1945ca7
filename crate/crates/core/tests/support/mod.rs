//! Random worlds and independent oracles shared by the property tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use agritwin::clock::{Clock, SimClock};
use agritwin::directory::TwinDirectory;
use agritwin::field::{FieldOperations, FieldSeed, FieldService, FieldTwinModel, TriggerQueue};
use agritwin::hub::{Comparator, GeoBox, HubOptions, Predicate, Registry, Scalar, TwinHub, TwinQuery};
use agritwin::mediator::{ExchangeCommand, ExchangeReceipt, Grant, GrantScope, ItemOutcome, Mediator, ReceiptStatus};
use agritwin::sim::systems;
use agritwin::twin::{
    Datatype, LocalTwin, Property, SemanticId, Submodel, Timestamp, TwinAccess, TwinId, TwinKind, TwinShell,
    TypedValue, INBOX_SUBMODEL,
};
use agritwin::vocabulary::{ConceptCategory, ConceptDescription, Vocabulary};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn sid(s: &str) -> SemanticId {
    SemanticId::expand(s).unwrap()
}

// ---------------------------------------------------------------- geometry

/// Centroid by fan triangulation from the first vertex. Written without
/// reference to the library's shoelace sum so the two can disagree.
pub fn fan_centroid(ring: &[[f64; 2]]) -> [f64; 2] {
    let mut pts = ring.to_vec();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let o = pts[0];
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in pts[1..].windows(2) {
        let (b, c) = (w[0], w[1]);
        let a = ((b[0] - o[0]) * (c[1] - o[1]) - (c[0] - o[0]) * (b[1] - o[1])) / 2.0;
        area += a;
        cx += a * (o[0] + b[0] + c[0]) / 3.0;
        cy += a * (o[1] + b[1] + c[1]) / 3.0;
    }
    [cx / area, cy / area]
}

/// Star-shaped ring around `center`, so it never self-intersects.
pub fn random_ring(rng: &mut ChaCha8Rng, center: [f64; 2]) -> Vec<[f64; 2]> {
    let n = rng.gen_range(3..=8);
    let step = std::f64::consts::TAU / n as f64;
    // Jitter below 0.4 of a sector keeps every gap under half a turn.
    let angles: Vec<f64> = (0..n).map(|i| (i as f64 + rng.gen_range(0.0..0.4)) * step).collect();
    angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(0.002..0.01);
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

// ---------------------------------------------------------------- registry

pub const CROPS: [&str; 5] = ["potato", "sugar beet", "winter wheat", "maize", "rapeseed"];

/// What the oracle knows about one registered twin, derived from the inputs
/// that built it rather than from the hub.
#[derive(Debug, Clone)]
pub struct OracleEntry {
    pub id: TwinId,
    pub kind: TwinKind,
    pub tags: BTreeMap<SemanticId, Scalar>,
    pub location: Option<[f64; 2]>,
}

pub struct RegistryCase {
    pub hub: Arc<TwinHub>,
    pub oracle: Vec<OracleEntry>,
}

pub fn random_seed(rng: &mut ChaCha8Rng, i: usize) -> FieldSeed {
    let center = [rng.gen_range(7.0..8.0), rng.gen_range(49.0..50.0)];
    FieldSeed {
        id: format!("f-{i:03}").parse().unwrap(),
        boundaries: random_ring(rng, center),
        slope_percent: rng.gen_range(0..=150) as f64 / 10.0,
        crop: CROPS.choose(rng).unwrap().to_string(),
        initial_nitrogen: rng.gen_range(0..=20) as f64 * 10.0,
        plant_health: rng.gen_range(0..=10) as f64 / 10.0,
        weed_density: rng.gen_range(0..=40) as f64,
    }
}

/// Up to `max` twins: mostly field twins, some system twins with tags.
pub fn random_registry(rng: &mut ChaCha8Rng, max: usize) -> RegistryCase {
    let clock: Arc<dyn Clock> = Arc::new(SimClock::standard());
    let vocabulary = Arc::new(Vocabulary::standard());
    let hub = Arc::new(TwinHub::new(vocabulary.clone(), clock.clone(), HubOptions::default()).unwrap());
    let fields = FieldService::new(hub.clone(), Arc::new(FieldOperations::new(clock.clone(), Arc::new(TriggerQueue::new()))));
    let n = rng.gen_range(0..=max);
    let mut oracle = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.8) {
            let seed = random_seed(rng, i);
            fields.host(&FieldTwinModel::from_seed(&seed, Vec::new()), clock.now()).unwrap();
            oracle.push(OracleEntry {
                id: seed.id.clone(),
                kind: TwinKind::FieldTwin,
                tags: BTreeMap::from([
                    (sid("crop.type"), Scalar::Text(seed.crop.clone())),
                    (sid("soil.nitrogen"), Scalar::Number(seed.initial_nitrogen)),
                    (sid("plant.health"), Scalar::Number(seed.plant_health)),
                    (sid("field.slope"), Scalar::Number(seed.slope_percent)),
                    (sid("weed.density"), Scalar::Number(seed.weed_density)),
                ]),
                location: Some(fan_centroid(&seed.boundaries)),
            });
        } else {
            let id = format!("s-{i:03}");
            let shell = systems::spreader(&id, &vocabulary).unwrap();
            let mut tags = BTreeMap::new();
            if rng.gen_bool(0.5) {
                tags.insert(sid("crop.type"), Scalar::Text(CROPS.choose(rng).unwrap().to_string()));
            }
            if rng.gen_bool(0.5) {
                tags.insert(sid("soil.nitrogen"), Scalar::Number(rng.gen_range(0..=20) as f64 * 10.0));
            }
            hub.register_twin(shell.describe().with_endpoint(format!("local://{id}")), tags.clone())
                .unwrap();
            oracle.push(OracleEntry {
                id: id.parse().unwrap(),
                kind: TwinKind::SystemTwin,
                tags,
                location: None,
            });
        }
    }
    RegistryCase { hub, oracle }
}

fn random_scalar(rng: &mut ChaCha8Rng, facet: &str, known: &[&OracleEntry]) -> Scalar {
    let id = sid(facet);
    let seen: Vec<&Scalar> = known.iter().filter_map(|e| e.tags.get(&id)).collect();
    if !seen.is_empty() && rng.gen_bool(0.6) {
        return (*seen.choose(rng).unwrap()).clone();
    }
    match (facet, rng.gen_range(0..10)) {
        (_, 0) => Scalar::Boolean(rng.gen()),
        ("crop.type", _) => Scalar::Text(CROPS.choose(rng).unwrap().to_string()),
        (_, 1) => Scalar::Text("potato".into()),
        _ => Scalar::Number(rng.gen_range(0..=200) as f64),
    }
}

pub fn random_query(rng: &mut ChaCha8Rng, oracle: &[OracleEntry]) -> TwinQuery {
    let facets = ["crop.type", "soil.nitrogen", "plant.health", "field.slope", "weed.density"];
    let ops = [Comparator::Eq, Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge];
    let known: Vec<&OracleEntry> = oracle.iter().collect();
    let predicates = (0..rng.gen_range(0..=3))
        .map(|_| {
            let facet = *facets.choose(rng).unwrap();
            Predicate {
                semantic_id: sid(facet),
                op: *ops.choose(rng).unwrap(),
                value: random_scalar(rng, facet, &known),
            }
        })
        .collect();
    let geo_box = rng.gen_bool(0.4).then(|| {
        let (a, b) = (rng.gen_range(6.9..8.1), rng.gen_range(6.9..8.1));
        let (c, d) = (rng.gen_range(48.9..50.1), rng.gen_range(48.9..50.1));
        GeoBox {
            lon_min: f64::min(a, b),
            lon_max: f64::max(a, b),
            lat_min: f64::min(c, d),
            lat_max: f64::max(c, d),
        }
    });
    let kind = match rng.gen_range(0..3) {
        0 => Some(TwinKind::FieldTwin),
        1 => Some(TwinKind::SystemTwin),
        _ => None,
    };
    TwinQuery {
        kind,
        predicates,
        geo_box,
    }
}

fn oracle_holds(op: Comparator, lhs: &Scalar, rhs: &Scalar) -> bool {
    match (lhs, rhs) {
        (Scalar::Number(a), Scalar::Number(b)) => match op {
            Comparator::Eq => a == b,
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
        },
        (Scalar::Text(a), Scalar::Text(b)) => match op {
            Comparator::Eq => a == b,
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
        },
        (Scalar::Boolean(a), Scalar::Boolean(b)) => op == Comparator::Eq && a == b,
        _ => false,
    }
}

/// Brute-force filter over the oracle's own view of the registry.
pub fn brute_force(oracle: &[OracleEntry], q: &TwinQuery) -> Vec<TwinId> {
    let mut ids: Vec<TwinId> = oracle
        .iter()
        .filter(|e| q.kind.is_none_or(|k| k == e.kind))
        .filter(|e| {
            q.geo_box.is_none_or(|b| {
                e.location
                    .is_some_and(|[x, y]| x >= b.lon_min && x <= b.lon_max && y >= b.lat_min && y <= b.lat_max)
            })
        })
        .filter(|e| {
            q.predicates
                .iter()
                .all(|p| e.tags.get(&p.semantic_id).is_some_and(|v| oracle_holds(p.op, v, &p.value)))
        })
        .map(|e| e.id.clone())
        .collect();
    ids.sort();
    ids
}

/// Number of (registry, query) mismatches over `registries × queries` cases.
pub fn registry_mismatches(rng: &mut ChaCha8Rng, registries: usize, queries: usize) -> Vec<String> {
    let mut bad = Vec::new();
    for r in 0..registries {
        let case = random_registry(rng, 100);
        for _ in 0..queries {
            let q = random_query(rng, &case.oracle);
            // The hub promises lexicographic order, so no sorting here.
            let got = case.hub.query(&q).unwrap();
            let want = brute_force(&case.oracle, &q);
            if got != want {
                bad.push(format!("registry {r}: {} got {got:?} want {want:?}", serde_json::to_string(&q).unwrap()));
            }
        }
    }
    bad
}

// ---------------------------------------------------------------- mediator

const UNITS: [&str; 4] = ["1", "kg/ha", "%", "m"];

pub struct ExchangeWorld {
    pub clock: Arc<SimClock>,
    pub hub: Arc<TwinHub>,
    pub mediator: Mediator,
    pub twins: Vec<Arc<LocalTwin>>,
    /// Concepts each twin owns outside its inbox.
    pub owned: Vec<Vec<SemanticId>>,
}

fn random_value(rng: &mut ChaCha8Rng, datatype: Datatype) -> TypedValue {
    match datatype {
        Datatype::Decimal => TypedValue::Decimal(rng.gen_range(-1000.0..1000.0)),
        Datatype::Integer => TypedValue::Integer(rng.gen_range(-1000..1000)),
        Datatype::Boolean => TypedValue::Boolean(rng.gen()),
        _ => TypedValue::Text(format!("t{}", rng.gen_range(0..1000))),
    }
}

/// `n` hosted field twins with up to 20 random properties each.
pub fn exchange_world(rng: &mut ChaCha8Rng, n: usize) -> ExchangeWorld {
    let clock = Arc::new(SimClock::standard());
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let vocabulary = Arc::new(Vocabulary::standard());
    let pool: Vec<(SemanticId, Datatype, &str)> = (0..40)
        .map(|i| {
            let dt = *[Datatype::Decimal, Datatype::Integer, Datatype::Text, Datatype::Boolean]
                .choose(rng)
                .unwrap();
            let unit = *UNITS.choose(rng).unwrap();
            let c = ConceptDescription::property(&format!("rx.c{i:02}"), &format!("random {i}"), dt, unit).unwrap();
            vocabulary.register_concept(c.clone()).unwrap();
            (c.semantic_id, dt, unit)
        })
        .collect();
    for j in 0..3 {
        vocabulary
            .register_concept(ConceptDescription {
                semantic_id: sid(&format!("rx.sm{j}")),
                preferred_name: format!("group {j}"),
                definition: String::new(),
                category: ConceptCategory::Submodel,
                datatype: None,
                canonical_unit: None,
            })
            .unwrap();
    }
    let directory = Arc::new(TwinDirectory::new());
    let hub = Arc::new(
        TwinHub::new(vocabulary.clone(), dyn_clock.clone(), HubOptions::default())
            .unwrap()
            .with_directory(directory.clone()),
    );
    let mut owned = Vec::new();
    for t in 0..n {
        let k = rng.gen_range(1..=20);
        let chosen: Vec<&(SemanticId, Datatype, &str)> = pool.choose_multiple(rng, k).collect();
        let groups = rng.gen_range(1..=3);
        let mut submodels: Vec<Submodel> = (0..groups).map(|j| Submodel::new(format!("g{j}"), sid(&format!("rx.sm{j}")))).collect();
        for (e, (id, dt, unit)) in chosen.iter().enumerate() {
            let at = clock.at_step(rng.gen_range(0..48));
            let p = Property::new(format!("p{e}"), id.clone(), *dt, *unit).with_value(random_value(rng, *dt), at);
            let g = rng.gen_range(0..groups);
            submodels[g] = submodels[g].clone().with_property(p);
        }
        let shell = TwinShell::create(
            format!("x-{t:02}").parse().unwrap(),
            TwinKind::FieldTwin,
            submodels,
            Some(&vocabulary),
        )
        .unwrap();
        hub.host_field_twin(shell).unwrap();
        owned.push(chosen.iter().map(|(id, _, _)| id.clone()).collect());
    }
    let twins = hub.hosted_ids().iter().map(|id| hub.hosted_twin(id).unwrap()).collect();
    let registry: Arc<dyn Registry> = hub.clone();
    let mediator = Mediator::new(registry, directory, vocabulary, dyn_clock);
    ExchangeWorld {
        clock,
        hub,
        mediator,
        twins,
        owned,
    }
}

/// Inbox content as (value, unit, timestamp) per concept.
pub type InboxModel = BTreeMap<SemanticId, (TypedValue, String, Timestamp)>;

pub fn inbox_of(shell: &TwinShell) -> InboxModel {
    shell
        .properties()
        .filter(|(path, _)| path.submodel == INBOX_SUBMODEL)
        .filter_map(|(_, p)| Some((p.semantic_id.clone(), (p.value.clone()?, p.unit.clone(), p.last_updated?))))
        .collect()
}

fn without_inbox(mut shell: TwinShell) -> TwinShell {
    shell.submodels.retain(|sm| sm.short_name != INBOX_SUBMODEL);
    shell
}

/// Runs `count` random exchanges and returns every violated expectation:
/// wrong per-item outcome, destination gaining anything but the requested
/// items, any change to the source, or a replay that differs byte for byte.
pub fn mediator_violations(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let world = exchange_world(rng, 12);
    let mut bad = Vec::new();
    let mut models: Vec<InboxModel> = world.twins.iter().map(|t| inbox_of(&t.snapshot())).collect();
    for n in 0..count {
        world.clock.advance();
        let s = rng.gen_range(0..world.twins.len());
        let mut d = rng.gen_range(0..world.twins.len() - 1);
        if d >= s {
            d += 1;
        }
        let k = rng.gen_range(1..=world.owned[s].len().min(5));
        let items: Vec<SemanticId> = world.owned[s].choose_multiple(rng, k).cloned().collect();
        let (src, dst) = (&world.twins[s], &world.twins[d]);
        let principal = format!("svc-{}", rng.gen_range(0..3));
        world
            .mediator
            .register_grant(Grant::new("farmer", &principal, src.twin_id(), items.clone(), GrantScope::OneTime))
            .unwrap();

        // Expected outcome from the oracle's inbox model.
        let src_before = src.snapshot();
        let dst_before = dst.snapshot();
        let mut expected = models[d].clone();
        let mut expected_items = Vec::new();
        for item in &items {
            let (_, p) = src_before.properties().find(|(path, p)| path.submodel != INBOX_SUBMODEL && p.semantic_id == *item).unwrap();
            let (value, at) = (p.value.clone().unwrap(), p.last_updated.unwrap());
            let newer_held = expected.get(item).is_some_and(|(_, _, held)| *held > at);
            if newer_held {
                expected_items.push(None);
            } else {
                expected.insert(item.clone(), (value.clone(), p.unit.clone(), at));
                expected_items.push(Some(value));
            }
        }

        let cmd = ExchangeCommand::copy(format!("cmd-{n:04}"), src.twin_id(), dst.twin_id(), items.clone(), principal);
        let receipt: ExchangeReceipt = match world.mediator.submit_exchange(&cmd) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("#{n}: rejected: {e}"));
                continue;
            }
        };
        for (item, (outcome, want)) in items.iter().zip(receipt.per_item.iter().zip(&expected_items)) {
            let ok = match (outcome, want) {
                (ItemOutcome::Delivered { value, semantic_id, .. }, Some(v)) => value == v && semantic_id == item,
                (ItemOutcome::Failed { semantic_id, .. }, None) => semantic_id == item,
                _ => false,
            };
            if !ok {
                bad.push(format!("#{n}: item {item}: got {outcome:?}, want {want:?}"));
            }
        }
        let want_status = if expected_items.iter().all(Option::is_some) {
            ReceiptStatus::Delivered
        } else {
            ReceiptStatus::Failed
        };
        if receipt.status != want_status || receipt.per_item.len() != items.len() {
            bad.push(format!("#{n}: status {:?}, want {want_status:?}", receipt.status));
        }
        let dst_after = dst.snapshot();
        if inbox_of(&dst_after) != expected {
            bad.push(format!("#{n}: destination inbox differs from requested items"));
        }
        if without_inbox(dst_after.clone()) != without_inbox(dst_before) {
            bad.push(format!("#{n}: destination changed outside its inbox"));
        }
        if src.snapshot() != src_before {
            bad.push(format!("#{n}: source modified"));
        }
        models[d] = expected;

        let replay = world.mediator.submit_exchange(&cmd);
        match replay {
            Ok(r) if serde_json::to_vec(&r).unwrap() == serde_json::to_vec(&receipt).unwrap() => {}
            other => bad.push(format!("#{n}: replay differs: {other:?}")),
        }
        if dst.snapshot() != dst_after {
            bad.push(format!("#{n}: replay changed the destination"));
        }
    }
    bad
}
