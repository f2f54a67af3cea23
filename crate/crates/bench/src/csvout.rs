//! CSV emission; one row per iteration, fixed schema.

use std::io::Write;

pub const HEADER: [&str; 10] = [
    "impl",
    "contains",
    "threads",
    "keyrange",
    "dist",
    "search_pct",
    "throughput",
    "psyncs_per_search",
    "psyncs_per_update",
    "redundant_psyncs",
];

#[derive(Clone, Debug)]
pub struct Row {
    pub impl_name: &'static str,
    pub contains: &'static str,
    pub threads: usize,
    pub keyrange: i64,
    pub dist: String,
    pub search_pct: u32,
    pub throughput: f64,
    pub psyncs_per_search: f64,
    pub psyncs_per_update: f64,
    pub redundant_psyncs: u64,
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.impl_name.to_string(),
            r.contains.to_string(),
            r.threads.to_string(),
            r.keyrange.to_string(),
            r.dist.clone(),
            r.search_pct.to_string(),
            r.throughput.to_string(),
            r.psyncs_per_search.to_string(),
            r.psyncs_per_update.to_string(),
            r.redundant_psyncs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
