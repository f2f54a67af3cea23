//! Lock-free linked-list sets over a persistence substrate with explicit
//! flush/fence accounting, plus crash simulation and recovery.

pub mod audit;
pub mod list;
pub mod recovery;
pub mod substrate;
pub mod taglink;

pub use list::{ConcurrentSet, ContainsVariant, LdSet, PdSet, SetImpl};
pub use substrate::{OpClass, Pmem, Word, WordPair, WorkerId, NIL};
