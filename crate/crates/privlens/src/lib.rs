//! Privacy analysis of message traces: detectability, associability and
//! requirement checking over a contextual information model.

pub mod deduce;
pub mod dsl;
pub mod error;
pub mod report;
pub mod reqs;
pub mod term;
pub mod trace;
pub mod views;

pub use deduce::{Analysis, Derivation, KnowledgeBase, Rule};
pub use error::{Error, Result};
pub use term::{ContextRef, Item, Kind, Model, ModelBuilder, Op, Term};
