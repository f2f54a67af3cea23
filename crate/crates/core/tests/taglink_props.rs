//! Algebraic properties of the tag-bit helpers over arbitrary link words.

use nvset_core::substrate::{Word, NIL};
use nvset_core::taglink::{
    is_clean, is_dflagged, is_durable, is_iflagged, is_marked, mark_del, mark_dflag, mark_durable,
    mark_iflag, render_next, render_old, strip_durable, unmark,
};
use proptest::prelude::*;

const TAG_MASK: Word = 0xF;

/// A word whose target is non-NIL, as the markers require.
fn link() -> impl Strategy<Value = Word> {
    any::<Word>().prop_map(|w| w | 0x40)
}

/// A 64-aligned node address, the shape the allocator hands out.
fn address() -> impl Strategy<Value = Word> {
    (1u64..=u64::MAX / 64).prop_map(|n| n * 64)
}

proptest! {
    #[test]
    fn markers_never_move_the_target(w in link()) {
        let t = unmark(w);
        prop_assert_eq!(unmark(mark_durable(w)), t);
        prop_assert_eq!(unmark(strip_durable(w)), t);
        prop_assert_eq!(unmark(mark_del(w)), t);
        prop_assert_eq!(unmark(mark_dflag(w)), t);
        prop_assert_eq!(unmark(mark_iflag(w)), t);
    }

    #[test]
    fn durable_bit_sets_and_strips(w in link()) {
        prop_assert!(is_durable(mark_durable(w)));
        prop_assert!(!is_durable(strip_durable(w)));
        prop_assert_eq!(mark_durable(strip_durable(w)), mark_durable(w));
    }

    #[test]
    fn each_marker_sets_only_its_own_bit(w in link()) {
        prop_assert!(is_marked(mark_del(w)));
        prop_assert!(is_dflagged(mark_dflag(w)));
        prop_assert!(is_iflagged(mark_iflag(w)));
        // Independence: a marker leaves the other queries unchanged.
        prop_assert_eq!(is_dflagged(mark_del(w)), is_dflagged(w));
        prop_assert_eq!(is_marked(mark_dflag(w)), is_marked(w));
        prop_assert_eq!(is_marked(mark_durable(w)), is_marked(w));
        prop_assert_eq!(is_dflagged(mark_durable(w)), is_dflagged(w));
        prop_assert_eq!(is_marked(strip_durable(w)), is_marked(w));
        prop_assert_eq!(is_dflagged(strip_durable(w)), is_dflagged(w));
    }

    #[test]
    fn cleanliness_tracks_mark_and_dflag_only(w in link()) {
        prop_assert_eq!(is_clean(w), !is_marked(w) && !is_dflagged(w));
        prop_assert_eq!(is_clean(mark_durable(w)), is_clean(w));
        prop_assert_eq!(is_clean(strip_durable(w)), is_clean(w));
        prop_assert!(!is_clean(mark_del(w)));
        prop_assert!(!is_clean(mark_dflag(w)));
    }

    #[test]
    fn unmark_is_idempotent_and_flag_free(w in link()) {
        let t = unmark(w);
        prop_assert_eq!(unmark(t), t);
        prop_assert!(is_clean(t));
        prop_assert!(!is_durable(t));
        prop_assert!(!is_iflagged(t));
        prop_assert_eq!(t & TAG_MASK, 0);
    }

    #[test]
    fn markers_are_idempotent(w in link()) {
        prop_assert_eq!(mark_del(mark_del(w)), mark_del(w));
        prop_assert_eq!(mark_dflag(mark_dflag(w)), mark_dflag(w));
        prop_assert_eq!(mark_iflag(mark_iflag(w)), mark_iflag(w));
        prop_assert_eq!(mark_durable(mark_durable(w)), mark_durable(w));
        prop_assert_eq!(strip_durable(strip_durable(w)), strip_durable(w));
    }

    #[test]
    fn aligned_addresses_round_trip(a in address()) {
        prop_assert_eq!(unmark(a), a);
        prop_assert_eq!(unmark(mark_durable(mark_del(mark_dflag(a)))), a);
        prop_assert_ne!(a, NIL);
    }

    #[test]
    fn renders_name_the_target_and_the_set_bits(w in link()) {
        let mut next = format!("0x{:X}", unmark(w));
        if is_durable(w) {
            next.push('D');
        }
        if is_marked(w) {
            next.push('M');
        }
        if is_dflagged(w) {
            next.push('F');
        }
        prop_assert_eq!(render_next(w), next);

        let mut old = format!("0x{:X}", unmark(w));
        if is_iflagged(w) {
            old.push('I');
        }
        if is_marked(w) {
            old.push('M');
        }
        if is_dflagged(w) {
            old.push('F');
        }
        prop_assert_eq!(render_old(w), old);
        prop_assert_eq!(render_next(NIL), "nil");
        prop_assert_eq!(render_old(NIL), "nil");
    }
}
