//! Parser for scripted simulator schedules.
//!
//! One directive per line: `step <worker>`, `bg_flush <cell>`,
//! `early_commit <flush-seq>`, `crash`. `#` starts a comment; blank lines
//! are skipped. Cell ids accept decimal or 0x-prefixed hex.

use super::{Word, WorkerId};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Directive {
    Step(WorkerId),
    BgFlush(Word),
    EarlyCommit(u64),
    Crash,
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("line {0}: unknown directive {1:?}")]
    UnknownDirective(usize, String),
    #[error("line {0}: missing argument")]
    MissingArgument(usize),
    #[error("line {0}: bad number {1:?}")]
    BadNumber(usize, String),
}

fn parse_u64(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

pub fn parse_schedule(text: &str) -> Result<Vec<Directive>, ScheduleError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let head = parts.next().unwrap();
        let arg = parts.next();
        let num = |a: Option<&str>| -> Result<u64, ScheduleError> {
            let a = a.ok_or(ScheduleError::MissingArgument(line))?;
            parse_u64(a).ok_or_else(|| ScheduleError::BadNumber(line, a.to_string()))
        };
        match head {
            "step" => out.push(Directive::Step(num(arg)? as WorkerId)),
            "bg_flush" => out.push(Directive::BgFlush(num(arg)?)),
            "early_commit" => out.push(Directive::EarlyCommit(num(arg)?)),
            "crash" => out.push(Directive::Crash),
            other => return Err(ScheduleError::UnknownDirective(line, other.to_string())),
        }
    }
    Ok(out)
}
