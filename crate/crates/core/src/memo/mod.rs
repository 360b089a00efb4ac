//! Memo-tables: canonical input keys, recorded outputs, provisional
//! filtering and the on-disk database.

mod db;
mod encode;
mod record;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::{json, Value as Json};
use thiserror::Error;

pub use db::{decode_db, encode_db, load_db, save_db};
pub use encode::{
    canonical_decode, canonical_encode, encode_datum_into, encode_value_into, DecodeError, Reader, TAG_ARR, TAG_BOOL,
    TAG_FNREF, TAG_INT, TAG_STR, TAG_UNIT,
};
pub use record::{
    build_memo_db, provisional_memoization, record_tables, run_with_lookup, CacheStats, Decision, DecisionEvent, Eligibility, FunctionShape,
    LookupHooks, MemoOptions, Shapes,
};

use crate::hash::fnv1a64;
use crate::lang::Datum;
use crate::profiler::ExpensivenessCriterion;

pub const SCHEMA_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoError {
    #[error("program fingerprint {found:016x} does not match the database ({expected:016x})")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("database schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u16, found: u16 },
    #[error("corrupt memo database at byte {0}")]
    CorruptDB(usize),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Canonical bytes of a call's inputs: argument values in order, then the
/// values of every global the function may read, in name order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputKey {
    pub function: String,
    pub hash: u64,
    pub bytes: Vec<u8>,
}

impl InputKey {
    pub fn new(function: &str, bytes: Vec<u8>) -> InputKey {
        InputKey { function: function.to_string(), hash: fnv1a64(&bytes), bytes }
    }

    /// Splits the canonical bytes back into argument and global values.
    pub fn decode(&self) -> Result<(Vec<Datum>, Vec<Datum>), DecodeError> {
        decode_key(&self.bytes)
    }
}

pub fn decode_key(bytes: &[u8]) -> Result<(Vec<Datum>, Vec<Datum>), DecodeError> {
    let mut r = Reader::new(bytes);
    let n = r.u32()? as usize;
    let mut args = Vec::new();
    for _ in 0..n {
        args.push(r.datum()?);
    }
    let mut globals = Vec::new();
    while !r.at_end() {
        globals.push(r.datum()?);
    }
    Ok((args, globals))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalWrite {
    pub value: Datum,
    /// The global still held the same array at exit; restore its contents
    /// rather than rebinding it.
    pub in_place: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputRecord {
    pub ret: Datum,
    /// Exit values of every global the function may write.
    pub globals: BTreeMap<String, GlobalWrite>,
    /// Exit contents of every argument the function may mutate.
    pub args: BTreeMap<usize, Datum>,
    /// Steps the body took.
    pub steps: u64,
    /// Deepest nested call, relative to the entry frame depth.
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoEntry {
    pub key: Vec<u8>,
    pub record: OutputRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoTable {
    pub function: String,
    /// Entries bucketed by key hash; look-ups compare the full key bytes.
    pub entries: BTreeMap<u64, Vec<MemoEntry>>,
    pub recorded_from: BTreeSet<String>,
}

/// A second recording of a key produced a different output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict;

impl MemoTable {
    pub fn new(function: &str) -> MemoTable {
        MemoTable { function: function.to_string(), entries: BTreeMap::new(), recorded_from: BTreeSet::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, hash: u64, key: &[u8]) -> Option<&OutputRecord> {
        self.entries.get(&hash)?.iter().find(|e| e.key == key).map(|e| &e.record)
    }

    pub fn get(&self, key: &InputKey) -> Option<&OutputRecord> {
        self.lookup(key.hash, &key.bytes)
    }

    pub fn insert(&mut self, key: InputKey, record: OutputRecord) -> Result<(), Conflict> {
        let bucket = self.entries.entry(key.hash).or_default();
        match bucket.iter().find(|e| e.key == key.bytes) {
            Some(e) if e.record == record => Ok(()),
            Some(_) => Err(Conflict),
            None => {
                bucket.push(MemoEntry { key: key.bytes, record });
                bucket.sort_by(|a, b| a.key.cmp(&b.key));
                Ok(())
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &MemoEntry)> {
        self.entries.iter().flat_map(|(h, es)| es.iter().map(move |e| (*h, e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exclusion {
    NewTestFailure(String),
    CacheMissOnCoveringTest,
    Conflicted,
    StateRestoreUnsupported,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exclusion::NewTestFailure(t) => write!(f, "NewTestFailure({t})"),
            Exclusion::CacheMissOnCoveringTest => f.write_str("CacheMissOnCoveringTest"),
            Exclusion::Conflicted => f.write_str("Conflicted"),
            Exclusion::StateRestoreUnsupported => f.write_str("StateRestoreUnsupported"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoDB {
    pub schema_version: u16,
    pub fingerprint: u64,
    pub criterion: ExpensivenessCriterion,
    pub tables: BTreeMap<String, MemoTable>,
    pub exclusions: BTreeMap<String, Exclusion>,
}

impl MemoDB {
    pub fn new(fingerprint: u64, criterion: ExpensivenessCriterion) -> MemoDB {
        MemoDB {
            schema_version: SCHEMA_VERSION,
            fingerprint,
            criterion,
            tables: BTreeMap::new(),
            exclusions: BTreeMap::new(),
        }
    }

    pub fn check_fingerprint(&self, program_fingerprint: u64) -> Result<(), MemoError> {
        if self.fingerprint == program_fingerprint {
            Ok(())
        } else {
            Err(MemoError::FingerprintMismatch { expected: self.fingerprint, found: program_fingerprint })
        }
    }

    pub fn exclude(&mut self, f: &str, why: Exclusion) {
        self.tables.remove(f);
        self.exclusions.entry(f.to_string()).or_insert(why);
    }

    pub fn entry_count(&self) -> usize {
        self.tables.values().map(MemoTable::len).sum()
    }

    /// Human-readable mirror of the database, for diagnostics.
    pub fn to_json(&self) -> Json {
        let tables: BTreeMap<&str, Json> = self
            .tables
            .iter()
            .map(|(f, t)| {
                let entries: Vec<Json> = t
                    .iter()
                    .map(|(hash, e)| {
                        let (args, globals) = decode_key(&e.key).unwrap_or_default();
                        let writes: BTreeMap<&str, Json> = e
                            .record
                            .globals
                            .iter()
                            .map(|(g, w)| (g.as_str(), json!({"value": w.value, "in_place": w.in_place})))
                            .collect();
                        json!({
                            "hash": format!("{hash:016x}"),
                            "args": args,
                            "globals": globals,
                            "ret": e.record.ret,
                            "writes": writes,
                            "post_args": e.record.args,
                            "steps": e.record.steps,
                            "depth": e.record.depth,
                        })
                    })
                    .collect();
                (f.as_str(), json!({"recorded_from": t.recorded_from, "entries": entries}))
            })
            .collect();
        let exclusions: BTreeMap<&str, String> =
            self.exclusions.iter().map(|(f, e)| (f.as_str(), e.to_string())).collect();
        json!({
            "schema_version": self.schema_version,
            "fingerprint": format!("{:016x}", self.fingerprint),
            "criterion": self.criterion,
            "tables": tables,
            "exclusions": exclusions,
        })
    }
}
