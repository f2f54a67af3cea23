//! Event log records and JSONL import/export.
//!
//! Every record carries the six base fields `seq`, `kind`, `worker`, `cell`,
//! `value_before`, `value_after` (null where not applicable) plus
//! kind-specific extras. Link words are serialized both raw and rendered.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use super::{Word, WordPair, NIL};
use crate::taglink;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Meta,
    Alloc,
    Invoke,
    Respond,
    Read,
    Rmw,
    Flush,
    Fence,
    Commit,
    BgFlush,
    EarlyCommit,
    Crash,
    Note,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub worker: Option<usize>,
    pub cell: Option<Word>,
    pub value_before: Option<WordPair>,
    pub value_after: Option<WordPair>,

    /// Rendered forms of the pair fields, export-only sugar.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub render_before: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub render_after: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub op: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub op_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub key: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub success: Option<bool>,
    /// Rmw only: the write changed the stored value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub destructive: Option<bool>,
    /// Flush and commit: whether the cell was already persistent at birth
    /// (alloc) or the event was classified redundant (flush, fence).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub redundant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub durable: Option<bool>,
    /// Commit: seq of the flush being committed; early_commit: target flush.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flush_seq: Option<u64>,
    /// Commit: seq of the fence/bg_flush/early_commit that caused it.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cause_seq: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cause: Option<String>,
    /// Note: which effect annotation this is.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    /// Note: seq of the rmw the note attaches to.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ref_seq: Option<u64>,
    /// Note (unlink): the node taken out of the list.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub victim: Option<Word>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meta: Option<serde_json::Value>,
}

impl Event {
    pub fn base(seq: u64, kind: EventKind) -> Self {
        Event {
            seq,
            kind,
            worker: None,
            cell: None,
            value_before: None,
            value_after: None,
            render_before: None,
            render_after: None,
            op: None,
            op_kind: None,
            key: None,
            value: None,
            result: None,
            class: None,
            success: None,
            destructive: None,
            redundant: None,
            durable: None,
            flush_seq: None,
            cause_seq: None,
            cause: None,
            note: None,
            ref_seq: None,
            victim: None,
            meta: None,
        }
    }

    pub(crate) fn with_renders(mut self) -> Self {
        self.render_before = self.value_before.map(render_pair);
        self.render_after = self.value_after.map(render_pair);
        self
    }
}

pub fn render_pair(p: WordPair) -> String {
    format!(
        "<{},{}>",
        taglink::render_next(p.next),
        taglink::render_old(p.old)
    )
}

pub fn render_word(w: Word) -> String {
    if w == NIL {
        "nil".to_string()
    } else {
        taglink::render_next(w)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_jsonl<W: Write>(events: &[Event], mut out: W) -> Result<(), LogError> {
    for e in events {
        let rendered = e.clone().with_renders();
        serde_json::to_writer(&mut out, &rendered).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Event>, LogError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Event =
            serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        events.push(e);
    }
    Ok(events)
}
