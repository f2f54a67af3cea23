//! Post-crash recovery: normalize a persistent image back into a fully
//! durable list.
//!
//! The walk follows persisted links from the head sentinel. A non-durable
//! persisted link is in flight; its old value says how to proceed. An
//! insert-tagged old whose target cell never reached the image routes the
//! walk through the old value instead (the insert did not durably happen).
//! Remove-tagged values follow the new link: the commit that produced them
//! is the remove's point of durability. Structural damage faults loudly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::list::{ContainsVariant, LdSet, PdSet, SetImpl};
use crate::substrate::{render_word, Pmem, Word, WordPair, NIL};
use crate::taglink::{is_durable, is_iflagged, is_marked, unmark};

/// One surviving cell: its link pair plus the immutable payload.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ImageCell {
    pub pair: WordPair,
    pub key: i64,
    pub value: u64,
}

/// Cells that had reached persistence when the crash hit.
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct PersistentImage {
    pub cells: BTreeMap<Word, ImageCell>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error("image has no head cell (key == i64::MIN)")]
    NoHead,
    #[error("image has {0} head cells")]
    ManyHeads(usize),
    #[error("cell {}: link to {} not in the image", render_word(*.0), render_word(*.1))]
    Dangling(Word, Word),
    #[error("cell {}: non-durable link with nil old", render_word(*.0))]
    NilOld(Word),
    #[error("cell {}: nil next before the tail", render_word(*.0))]
    NilNext(Word),
    #[error("cycle through cell {}", render_word(*.0))]
    Cycle(Word),
    #[error("keys out of order: {0} then {1}")]
    KeyOrder(i64, i64),
    #[error("walk ended at key {0}, not the tail")]
    NoTail(i64),
    #[error("image i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct ImageRecord {
    cell: Word,
    next: Word,
    old: Word,
    key: i64,
    value: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    render: Option<String>,
}

impl PersistentImage {
    pub fn to_jsonl<W: Write>(&self, mut out: W) -> Result<(), RecoveryError> {
        for (&cell, ic) in &self.cells {
            let rec = ImageRecord {
                cell,
                next: ic.pair.next,
                old: ic.pair.old,
                key: ic.key,
                value: ic.value,
                render: Some(format!(
                    "{}: <{},{}>",
                    render_word(cell),
                    crate::taglink::render_next(ic.pair.next),
                    crate::taglink::render_old(ic.pair.old)
                )),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self, RecoveryError> {
        let mut img = PersistentImage::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImageRecord = serde_json::from_str(&line)
                .map_err(|source| RecoveryError::Parse { line: i + 1, source })?;
            img.cells.insert(
                rec.cell,
                ImageCell {
                    pair: WordPair::new(rec.next, rec.old),
                    key: rec.key,
                    value: rec.value,
                },
            );
        }
        Ok(img)
    }
}

/// Walk the image from the head, resolving in-flight links, and return the
/// surviving (key, value) items in ascending key order.
fn walk(img: &PersistentImage, impl_kind: SetImpl) -> Result<Vec<(i64, u64)>, RecoveryError> {
    let heads: Vec<Word> = img
        .cells
        .iter()
        .filter(|(_, c)| c.key == i64::MIN)
        .map(|(&w, _)| w)
        .collect();
    if heads.is_empty() {
        return Err(RecoveryError::NoHead);
    }
    if heads.len() > 1 {
        return Err(RecoveryError::ManyHeads(heads.len()));
    }
    let mut cur = heads[0];
    let mut visited: HashSet<Word> = HashSet::new();
    let mut out: Vec<(i64, u64)> = Vec::new();
    loop {
        if !visited.insert(cur) {
            return Err(RecoveryError::Cycle(cur));
        }
        let cell = &img.cells[&cur];
        if cell.key == i64::MAX {
            break;
        }
        let pair = cell.pair;
        let deleted = match impl_kind {
            // A persisted mark is a completed remove.
            SetImpl::Ld => is_marked(pair.next),
            // Physical delete: membership follows reachability alone.
            SetImpl::Pd => false,
        };
        if cell.key != i64::MIN && !deleted {
            out.push((cell.key, cell.value));
        }
        let succ = if is_durable(pair.next) || deleted {
            unmark(pair.next)
        } else {
            // In-flight link: the old value carries its provenance.
            if pair.old == NIL {
                return Err(RecoveryError::NilOld(cur));
            }
            if is_iflagged(pair.old) {
                let target = unmark(pair.next);
                if img.cells.contains_key(&target) {
                    // The inserted node reached the image; keep it.
                    target
                } else {
                    // The insert is not durable; resume on the old path.
                    unmark(pair.old)
                }
            } else {
                // A pending unlink: the commit that wrote it was the
                // remove's point of durability, so the victim is gone.
                unmark(pair.next)
            }
        };
        if succ == NIL {
            return Err(RecoveryError::NilNext(cur));
        }
        if !img.cells.contains_key(&succ) {
            return Err(RecoveryError::Dangling(cur, succ));
        }
        cur = succ;
    }
    for w in out.windows(2) {
        if w[0].0 >= w[1].0 {
            return Err(RecoveryError::KeyOrder(w[0].0, w[1].0));
        }
    }
    Ok(out)
}

/// The abstract set a crash at this image durably preserved.
pub fn persistent_abstract_set(
    img: &PersistentImage,
    impl_kind: SetImpl,
) -> Result<BTreeSet<i64>, RecoveryError> {
    Ok(walk(img, impl_kind)?.into_iter().map(|(k, _)| k).collect())
}

/// Like [`persistent_abstract_set`] but keeping the values.
pub fn persistent_items(
    img: &PersistentImage,
    impl_kind: SetImpl,
) -> Result<Vec<(i64, u64)>, RecoveryError> {
    walk(img, impl_kind)
}

/// Rebuild a physical-delete list from an image onto a fresh substrate.
/// The result is fully durable; recover after crash(recover(img)) yields
/// the same abstract set.
pub fn recover_pd<M: Pmem>(
    mem: Arc<M>,
    img: &PersistentImage,
    variant: ContainsVariant,
) -> Result<PdSet<M>, RecoveryError> {
    let items = walk(img, SetImpl::Pd)?;
    Ok(PdSet::build_durable(mem, variant, &items))
}

/// Rebuild a logical-delete list from an image onto a fresh substrate.
pub fn recover_ld<M: Pmem>(
    mem: Arc<M>,
    img: &PersistentImage,
    variant: ContainsVariant,
) -> Result<LdSet<M>, RecoveryError> {
    let items = walk(img, SetImpl::Ld)?;
    Ok(LdSet::build_durable(mem, variant, &items))
}
