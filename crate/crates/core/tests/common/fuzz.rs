//! Randomized check that interning is a bijection per class and idempotent.

use std::collections::{BTreeMap, HashMap};

use mcheck_core::conc_lib::{AtomicIntPayload, LockPayload, MapPayload, Payload};
use mcheck_core::vm::LibClass;
use mcheck_core::{PeerInternTable, VersionId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small value ranges so that repeats are frequent.
fn random_payload(rng: &mut ChaCha8Rng) -> Payload {
    match rng.gen_range(0..3) {
        0 => {
            let owner = rng.gen_bool(0.6).then(|| rng.gen_range(0..4));
            let count = if owner.is_some() { rng.gen_range(1..3) } else { 0 };
            let mut queue: Vec<u32> = (0..4).filter(|t| Some(*t) != owner && rng.gen_bool(0.2)).collect();
            if rng.gen_bool(0.5) {
                queue.reverse();
            }
            Payload::Lock(LockPayload { owner, count, queue })
        }
        1 => Payload::AtomicInt(AtomicIntPayload(rng.gen_range(-20..20))),
        _ => {
            let len = rng.gen_range(0..4);
            let entries: BTreeMap<i64, i64> = (0..len).map(|_| (rng.gen_range(0..5), rng.gen_range(-2..3))).collect();
            Payload::Map(MapPayload { entries })
        }
    }
}

/// Interns `iterations` random payloads, panicking on the first broken
/// property. Returns the number of distinct payloads seen.
pub fn fuzz_interning(iterations: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = PeerInternTable::new();
    let mut model: HashMap<Payload, VersionId> = HashMap::new();
    let mut owners: HashMap<(LibClass, VersionId), Payload> = HashMap::new();

    for i in 0..iterations {
        let payload = random_payload(&mut rng);
        let class = payload.class();
        let id = table.intern_state(class, payload.clone()).unwrap();

        // Idempotence: interning again, or looking up, yields the same id.
        assert_eq!(table.intern_state(class, payload.clone()).unwrap(), id, "iteration {i}");
        assert_eq!(table.lookup(&payload), Some(id));
        // Resolve inverts intern.
        assert_eq!(table.resolve(class, id).unwrap(), &payload);

        match model.get(&payload) {
            Some(&known) => assert_eq!(known, id, "payload changed id at iteration {i}"),
            None => {
                // A new payload gets the next dense id of its class.
                assert_eq!(id.0 as usize, table.len(class) - 1);
                model.insert(payload.clone(), id);
            }
        }
        // Injectivity: no two payloads of a class share an id.
        let previous = owners.insert((class, id), payload.clone());
        assert!(previous.is_none_or(|p| p == payload), "id {id} reused at iteration {i}");
    }

    assert_eq!(table.total(), model.len());
    for class in [LibClass::Lock, LibClass::AtomicInt, LibClass::Map] {
        for v in 0..table.len(class) {
            let id = VersionId(v as u32);
            let payload = table.resolve(class, id).unwrap();
            assert_eq!(model.get(payload), Some(&id));
        }
        assert!(table.resolve(class, VersionId(table.len(class) as u32)).is_err());
    }
    model.len()
}
