//! Randomized runs end to end: audit, crash, recovery, durability and
//! strictness checking. Acceptance reruns these at full volume; this is
//! the fast regression slice.

use nvset_checker::{
    check_durable, check_sle, run_fuzz, FuzzConfig, History, Verdict,
};
use nvset_core::recovery::persistent_abstract_set;

#[test]
fn durable_fuzz_slice() {
    let mut crashes = 0;
    for seed in 0..120 {
        let out = run_fuzz(FuzzConfig {
            seed,
            ..Default::default()
        })
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let h = History::from_events(&out.events)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let v = check_durable(&h, &out.init);
        assert!(
            v.passed(),
            "seed {seed} ({:?} {:?}): {:?}",
            out.impl_kind,
            out.variant,
            v
        );
        if out.crashed {
            crashes += 1;
            let img = out.image.as_ref().unwrap();
            let abs = persistent_abstract_set(img, out.impl_kind)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(
                Some(&abs),
                out.recovered.as_ref(),
                "seed {seed}: recovered list diverges from the image walk"
            );
        }
    }
    assert!(crashes > 50, "crash injection too rare: {crashes}");
}

#[test]
fn strict_fuzz_slice_without_persist_free() {
    for seed in 0..120 {
        let out = run_fuzz(FuzzConfig {
            seed,
            allow_pf: false,
            ..Default::default()
        })
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let h = History::from_events(&out.events)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let v = check_sle(&h, &out.init);
        assert!(
            !matches!(v, Verdict::Refused { .. }),
            "seed {seed}: refused: {v:?}"
        );
        assert!(
            v.passed(),
            "seed {seed} ({:?} {:?}): {:?}",
            out.impl_kind,
            out.variant,
            v
        );
    }
}
