//! The memoized linearizability search against the brute-force permutation
//! oracle: exhaustive over small histories, seeded-random over larger ones.
//! Every pass verdict is additionally replayed to validate its witness.

use std::collections::BTreeSet;

use nvset_checker::{
    check_linearizable_permutations, search_linearization, OpTag, SearchOp, SeqSet, Verdict,
    DEFAULT_OP_CAP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAGS: [OpTag; 3] = [OpTag::Insert, OpTag::Remove, OpTag::Contains];

/// A pass witness must name every required op, respect real time, and
/// replay with matching results.
fn validate_witness(ops: &[SearchOp], init: &BTreeSet<i64>, witness: &[u64]) {
    let find = |id: u64| ops.iter().find(|o| o.id == id).expect("witness id");
    let mut seen = BTreeSet::new();
    for &id in witness {
        assert!(seen.insert(id), "witness repeats op {id}");
    }
    for o in ops {
        assert!(
            o.optional || seen.contains(&o.id),
            "required op {} dropped",
            o.id
        );
    }
    for (a, &ia) in witness.iter().enumerate() {
        for &ib in witness.iter().skip(a + 1) {
            assert!(
                find(ib).respond >= find(ia).invoke,
                "witness violates real time: {ib} before {ia}"
            );
        }
    }
    let mut set = SeqSet::new(init);
    for &id in witness {
        let o = find(id);
        let r = set.apply(o.tag, o.key);
        if let Some(want) = o.result {
            assert_eq!(r, want, "op {} replays to {}", id, r);
        }
    }
}

fn agree(ops: &[SearchOp], init: &BTreeSet<i64>) {
    let fast = search_linearization(ops, init, DEFAULT_OP_CAP);
    let slow = check_linearizable_permutations(ops, init);
    match (&fast, &slow) {
        (Verdict::Pass { witness }, Verdict::Pass { .. }) => {
            validate_witness(ops, init, witness);
        }
        (Verdict::Fail { .. }, Verdict::Fail { .. }) => {}
        _ => panic!(
            "verdicts disagree on {:?}: search {:?} vs permutations {:?}",
            ops, fast, slow
        ),
    }
}

#[test]
fn exhaustive_histories_up_to_three_ops() {
    let init = BTreeSet::new();
    let mut histories = 0usize;
    for n in 1..=3usize {
        // Every shape: each op takes a tag, a key from {1, 2}, a result,
        // and a distinct (invoke, respond) pair drawn from 2n time slots.
        // Optional, pending, and unconstrained-result ops are covered by
        // the random test below.
        let slots: Vec<u64> = (1..=2 * n as u64).collect();
        let layouts: Vec<Vec<u64>> = permutations(&slots)
            .into_iter()
            .filter(|perm| (0..n).all(|i| perm[2 * i] < perm[2 * i + 1]))
            .collect();
        let shapes = 12usize.pow(n as u32);
        for shape in 0..shapes {
            let mut s = shape;
            let mut protos = Vec::with_capacity(n);
            for _ in 0..n {
                let tag = TAGS[s % 3];
                s /= 3;
                let key = 1 + (s % 2) as i64;
                s /= 2;
                let result = s % 2 == 0;
                s /= 2;
                protos.push((tag, key, result));
            }
            for perm in &layouts {
                let ops: Vec<SearchOp> = protos
                    .iter()
                    .enumerate()
                    .map(|(i, &(tag, key, result))| SearchOp {
                        id: i as u64 + 1,
                        tag,
                        key,
                        invoke: perm[2 * i],
                        respond: perm[2 * i + 1],
                        result: Some(result),
                        optional: false,
                    })
                    .collect();
                agree(&ops, &init);
                histories += 1;
            }
        }
    }
    assert!(histories > 100_000, "covered {histories} histories");
}

fn permutations(items: &[u64]) -> Vec<Vec<u64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

#[test]
fn seeded_random_histories_up_to_six_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    for _ in 0..400 {
        let n = rng.gen_range(4..=6);
        let init: BTreeSet<i64> = (1..=3)
            .filter(|_| rng.gen_bool(0.4))
            .collect();
        let mut ops = Vec::with_capacity(n);
        for i in 0..n {
            let invoke = rng.gen_range(0..20u64);
            let respond = if rng.gen_bool(0.15) {
                u64::MAX
            } else {
                invoke + rng.gen_range(1..10u64)
            };
            ops.push(SearchOp {
                id: i as u64 + 1,
                tag: TAGS[rng.gen_range(0..3)],
                key: rng.gen_range(1..=3),
                invoke,
                respond,
                result: if rng.gen_bool(0.2) {
                    None
                } else {
                    Some(rng.gen_bool(0.5))
                },
                optional: rng.gen_bool(0.3),
            });
        }
        agree(&ops, &init);
    }
}

#[test]
fn pending_updates_model_as_optional_any_result() {
    // A history the durable checker hands to the search: a pending insert
    // may or may not have taken effect, so it arrives optional with an open
    // interval, and both resolutions must be reachable.
    let init = BTreeSet::new();
    let pending = SearchOp {
        id: 1,
        tag: OpTag::Insert,
        key: 1,
        invoke: 1,
        respond: u64::MAX,
        result: None,
        optional: true,
    };
    let saw_it = SearchOp {
        id: 2,
        tag: OpTag::Contains,
        key: 1,
        invoke: 2,
        respond: 3,
        result: Some(true),
        optional: false,
    };
    let missed_it = SearchOp {
        id: 3,
        tag: OpTag::Contains,
        key: 1,
        invoke: 4,
        respond: 5,
        result: Some(false),
        optional: false,
    };
    assert!(search_linearization(&[pending, saw_it], &init, 12).passed());
    assert!(search_linearization(&[pending, missed_it], &init, 12).passed());
    // Seen then unseen with no remove around is not explainable.
    assert!(!search_linearization(&[pending, saw_it, missed_it], &init, 12).passed());
}
