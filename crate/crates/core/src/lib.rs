//! Memoized mutation analysis over the Mini language.
//!
//! The pipeline: parse a project ([`lang`]), run the static analyses
//! ([`analysis`]), profile the test suite and pick expensive deterministic
//! functions ([`profiler`]), record and filter memo-tables ([`memo`]),
//! generate mutants ([`mutation`]) and finally run them with cache look-ups
//! in place of the expensive bodies ([`runner`]).

pub mod hash;
pub mod lang;
pub mod analysis;
pub mod profiler;
pub mod mutation;
pub mod memo;
pub mod runner;
