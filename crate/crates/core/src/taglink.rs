//! Tag-bit manipulation for link words.
//!
//! Node targets are at least 16-byte aligned, so bits 0-3 of a link word are
//! free. The next field uses bit 0 for the persistence (durable) bit, bit 1
//! for the deletion mark, and bit 2 for the delete flag. The old field uses
//! bit 0 for the insert flag; values copied from next words into old fields
//! must therefore have the durable bit stripped first.

use crate::substrate::{Word, NIL};

pub const DURABLE: Word = 1 << 0;
pub const MARK: Word = 1 << 1;
pub const DFLAG: Word = 1 << 2;
pub const IFLAG: Word = 1 << 0;

const TAG_MASK: Word = 0xF;

/// Target with all tag bits cleared.
#[inline]
pub fn unmark(w: Word) -> Word {
    w & !TAG_MASK
}

#[inline]
pub fn is_durable(w: Word) -> bool {
    w & DURABLE != 0
}

#[inline]
pub fn is_marked(w: Word) -> bool {
    w & MARK != 0
}

#[inline]
pub fn is_dflagged(w: Word) -> bool {
    w & DFLAG != 0
}

#[inline]
pub fn is_iflagged(w: Word) -> bool {
    w & IFLAG != 0
}

/// Neither marked nor delete-flagged; the durable bit does not affect cleanliness.
#[inline]
pub fn is_clean(w: Word) -> bool {
    w & (MARK | DFLAG) == 0
}

#[inline]
pub fn mark_durable(w: Word) -> Word {
    w | DURABLE
}

#[inline]
pub fn strip_durable(w: Word) -> Word {
    w & !DURABLE
}

#[inline]
pub fn mark_del(w: Word) -> Word {
    debug_assert_ne!(unmark(w), NIL, "mark on NIL");
    w | MARK
}

#[inline]
pub fn mark_dflag(w: Word) -> Word {
    debug_assert_ne!(unmark(w), NIL, "dflag on NIL");
    w | DFLAG
}

#[inline]
pub fn mark_iflag(w: Word) -> Word {
    debug_assert_ne!(unmark(w), NIL, "iflag on NIL");
    w | IFLAG
}

/// Render a next word for logs: `0xADDR` plus `D`/`M`/`F` suffix letters.
pub fn render_next(w: Word) -> String {
    if w == NIL {
        return "nil".to_string();
    }
    let mut s = format!("0x{:X}", unmark(w));
    if is_durable(w) {
        s.push('D');
    }
    if is_marked(w) {
        s.push('M');
    }
    if is_dflagged(w) {
        s.push('F');
    }
    s
}

/// Render an old word for logs: bit 0 is the insert flag here, not the durable bit.
pub fn render_old(w: Word) -> String {
    if w == NIL {
        return "nil".to_string();
    }
    let mut s = format!("0x{:X}", unmark(w));
    if is_iflagged(w) {
        s.push('I');
    }
    if is_marked(w) {
        s.push('M');
    }
    if is_dflagged(w) {
        s.push('F');
    }
    s
}
