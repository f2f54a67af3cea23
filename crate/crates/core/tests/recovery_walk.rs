//! Image-walk semantics: in-flight link resolution, fault cases, and
//! recovery idempotence.

use std::collections::BTreeSet;
use std::sync::Arc;

use nvset_core::recovery::{
    persistent_abstract_set, persistent_items, recover_ld, recover_pd, ImageCell, PersistentImage,
    RecoveryError,
};
use nvset_core::substrate::{SimConfig, SimPmem, StartOffsets, Word, WordPair, NIL};
use nvset_core::taglink::{mark_del, mark_dflag, mark_durable, mark_iflag};
use nvset_core::{ContainsVariant, SetImpl};

const HEAD: Word = 0x40;
const N1: Word = 0x80;
const N2: Word = 0xC0;
const N3: Word = 0x100;
const TAIL: Word = 0x140;

fn put(img: &mut PersistentImage, word: Word, key: i64, value: u64, next: Word, old: Word) {
    img.cells.insert(
        word,
        ImageCell {
            pair: WordPair::new(next, old),
            key,
            value,
        },
    );
}

/// head -> 10 -> 20 -> tail, fully durable.
fn durable_chain() -> PersistentImage {
    let mut img = PersistentImage::default();
    put(&mut img, HEAD, i64::MIN, 0, mark_durable(N1), NIL);
    put(&mut img, N1, 10, 100, mark_durable(N2), NIL);
    put(&mut img, N2, 20, 200, mark_durable(TAIL), NIL);
    put(&mut img, TAIL, i64::MAX, 0, NIL, NIL);
    img
}

fn keys(img: &PersistentImage, k: SetImpl) -> BTreeSet<i64> {
    persistent_abstract_set(img, k).unwrap()
}

#[test]
fn durable_chain_yields_its_keys_under_both_walks() {
    let img = durable_chain();
    assert_eq!(keys(&img, SetImpl::Pd), BTreeSet::from([10, 20]));
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([10, 20]));
    assert_eq!(
        persistent_items(&img, SetImpl::Pd).unwrap(),
        vec![(10, 100), (20, 200)]
    );
}

#[test]
fn marked_node_is_deleted_for_ld_but_reachable_for_pd() {
    let mut img = durable_chain();
    // The mark committed with the durable bit set.
    put(&mut img, N1, 10, 100, mark_durable(mark_del(N2)), NIL);
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([20]));
    assert_eq!(keys(&img, SetImpl::Pd), BTreeSet::from([10, 20]));
}

#[test]
fn a_committed_mark_counts_even_without_the_durable_bit() {
    let mut img = durable_chain();
    // The marked value reached the image before its durable-bit dwcas.
    put(&mut img, N1, 10, 100, mark_del(N2), NIL);
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([20]));
}

#[test]
fn pending_insert_with_its_node_in_the_image_is_kept() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, N3, mark_iflag(N2));
    put(&mut img, N3, 15, 150, mark_durable(N2), NIL);
    assert_eq!(keys(&img, SetImpl::Pd), BTreeSet::from([10, 15, 20]));
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([10, 15, 20]));
}

#[test]
fn pending_insert_without_its_node_falls_back_to_the_old_path() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, N3, mark_iflag(N2));
    assert_eq!(keys(&img, SetImpl::Pd), BTreeSet::from([10, 20]));
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([10, 20]));
}

#[test]
fn pending_unlink_resolves_through_the_new_link() {
    let mut img = durable_chain();
    put(&mut img, N3, 15, 150, mark_durable(mark_del(N2)), NIL);
    // The unlink of 15 committed before its durable-bit dwcas; the victim
    // stays in the image but off the path.
    put(&mut img, N1, 10, 100, N2, mark_dflag(N3));
    assert_eq!(keys(&img, SetImpl::Pd), BTreeSet::from([10, 20]));
    assert_eq!(keys(&img, SetImpl::Ld), BTreeSet::from([10, 20]));
}

#[test]
fn non_durable_link_with_nil_old_faults() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, N2, NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::NilOld(w)) if w == N1
    ));
}

#[test]
fn dangling_durable_link_faults() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, mark_durable(N3), NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::Dangling(from, to)) if from == N1 && to == N3
    ));
}

#[test]
fn cycle_faults() {
    let mut img = durable_chain();
    put(&mut img, N2, 20, 200, mark_durable(N1), NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::Cycle(_))
    ));
}

#[test]
fn key_disorder_faults() {
    let mut img = PersistentImage::default();
    put(&mut img, HEAD, i64::MIN, 0, mark_durable(N1), NIL);
    put(&mut img, N1, 20, 200, mark_durable(N2), NIL);
    put(&mut img, N2, 10, 100, mark_durable(TAIL), NIL);
    put(&mut img, TAIL, i64::MAX, 0, NIL, NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::KeyOrder(20, 10))
    ));
}

#[test]
fn missing_or_duplicated_head_faults() {
    let mut img = durable_chain();
    img.cells.remove(&HEAD);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::NoHead)
    ));
    let mut img = durable_chain();
    put(&mut img, N3, i64::MIN, 0, mark_durable(N1), NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::ManyHeads(2))
    ));
}

#[test]
fn nil_next_before_the_tail_faults() {
    let mut img = durable_chain();
    put(&mut img, N2, 20, 200, mark_durable(NIL), NIL);
    assert!(matches!(
        persistent_abstract_set(&img, SetImpl::Pd),
        Err(RecoveryError::NilNext(w)) if w == N2
    ));
}

#[test]
fn recovery_is_durable_and_idempotent() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, N3, mark_iflag(N2));
    put(&mut img, N3, 15, 150, mark_durable(N2), NIL);
    let want = BTreeSet::from([10, 15, 20]);

    for impl_kind in [SetImpl::Pd, SetImpl::Ld] {
        let mem = Arc::new(SimPmem::new(SimConfig::default(), 1, StartOffsets::default()));
        match impl_kind {
            SetImpl::Pd => {
                recover_pd(mem.clone(), &img, ContainsVariant::PersistAll).unwrap();
            }
            SetImpl::Ld => {
                recover_ld(mem.clone(), &img, ContainsVariant::PersistAll).unwrap();
            }
        }
        // An immediate crash after recovery loses nothing.
        let img2 = mem.persistent_image_now();
        assert_eq!(keys(&img2, impl_kind), want);
        for c in img2.cells.values() {
            assert!(
                c.key == i64::MAX || nvset_core::taglink::is_durable(c.pair.next),
                "recovered links are durable by content"
            );
            assert_eq!(c.pair.old, NIL);
        }
        let items: Vec<(i64, u64)> = persistent_items(&img2, impl_kind).unwrap();
        assert_eq!(items, vec![(10, 100), (15, 150), (20, 200)]);
    }
}

#[test]
fn image_jsonl_roundtrip_preserves_cells() {
    let mut img = durable_chain();
    put(&mut img, N1, 10, 100, N3, mark_iflag(N2));
    put(&mut img, N3, 15, 150, mark_durable(N2), NIL);
    let mut buf = Vec::new();
    img.to_jsonl(&mut buf).unwrap();
    let back = PersistentImage::from_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.cells.len(), img.cells.len());
    for (w, c) in &img.cells {
        let b = &back.cells[w];
        assert_eq!(b.pair, c.pair);
        assert_eq!(b.key, c.key);
        assert_eq!(b.value, c.value);
    }
}
