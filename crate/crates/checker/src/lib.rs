//! History checkers for the persistent-set simulator: linearizability,
//! durable linearizability, strict linearizability with effect witnesses,
//! persist-point location, scripted schedules, and a randomized fuzz
//! driver.

pub mod cpe;
pub mod durable;
pub mod fuzz;
pub mod history;
pub mod lin;
pub mod scenario;
pub mod seq;
pub mod sle;

pub use cpe::{find_cpe, image_upto, CpeError, CpeReport, Flip};
pub use durable::{check_durable, check_durable_capped};
pub use fuzz::{run_fuzz, FuzzConfig, FuzzError, FuzzOutcome};
pub use history::{History, HistoryError, OpRecord, OpStatus};
pub use lin::{
    check_linearizable, check_linearizable_permutations, search_linearization,
    SearchOp, Verdict, DEFAULT_OP_CAP,
};
pub use scenario::{volatile_probe_violation, redundant_helping, VolatileProbeReport, RedundantHelpingReport};
pub use seq::{OpTag, SeqSet};
pub use sle::{check_sle, check_sle_capped};
