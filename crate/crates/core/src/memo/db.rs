//! Binary database format.
//!
//! ```text
//! header   "MEMU" u16:version u64:fingerprint
//!          u64:tau_ns u8:tau_mode u8:limit_kind u64:limit u32:table_count u64:checksum
//! table    u32+name u32:entries (u32+key u32+record)* u32:tests (u32+test)* u64:checksum
//! trailer  u32:exclusions (u32+name u8:reason [u32+test])* u64:checksum
//! ```
//!
//! Integers are big-endian; every checksum is FNV-1a-64 over the bytes of its
//! section that precede it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::encode::{encode_datum_into, DecodeError, Reader};
use super::{Exclusion, GlobalWrite, InputKey, MemoDB, MemoError, MemoTable, OutputRecord, SCHEMA_VERSION};
use crate::hash::fnv1a64;
use crate::lang::Program;
use crate::profiler::{ExpensivenessCriterion, Limit, TauMode};

const MAGIC: &[u8; 4] = b"MEMU";

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_be_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn seal(out: &mut Vec<u8>, start: usize) {
    let sum = fnv1a64(&out[start..]);
    out.extend_from_slice(&sum.to_be_bytes());
}

pub fn encode_record(r: &OutputRecord) -> Vec<u8> {
    let mut out = Vec::new();
    encode_datum_into(&r.ret, &mut out);
    put_u32(&mut out, r.globals.len());
    for (g, w) in &r.globals {
        put_str(&mut out, g);
        out.push(w.in_place as u8);
        encode_datum_into(&w.value, &mut out);
    }
    put_u32(&mut out, r.args.len());
    for (pos, v) in &r.args {
        put_u32(&mut out, *pos);
        encode_datum_into(v, &mut out);
    }
    out.extend_from_slice(&r.steps.to_be_bytes());
    out.extend_from_slice(&r.depth.to_be_bytes());
    out
}

fn decode_record(bytes: &[u8]) -> Result<OutputRecord, DecodeError> {
    let mut r = Reader::new(bytes);
    let ret = r.datum()?;
    let mut globals = BTreeMap::new();
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let in_place = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(DecodeError { offset: r.pos - 1 }),
        };
        globals.insert(name, GlobalWrite { value: r.datum()?, in_place });
    }
    let mut args = BTreeMap::new();
    for _ in 0..r.u32()? {
        let pos = r.u32()? as usize;
        args.insert(pos, r.datum()?);
    }
    let steps = r.u64()?;
    let depth = r.u32()?;
    if !r.at_end() {
        return Err(DecodeError { offset: r.pos });
    }
    Ok(OutputRecord { ret, globals, args, steps, depth })
}

fn encode_criterion(c: &ExpensivenessCriterion, out: &mut Vec<u8>) {
    out.extend_from_slice(&c.tau_ns.to_be_bytes());
    out.push(match c.tau_mode {
        TauMode::Mean => 0,
        TauMode::Cumulative => 1,
    });
    let (kind, value) = match c.limit {
        Limit::Count(n) => (0u8, n),
        Limit::Percent(p) => (1u8, p.to_bits()),
    };
    out.push(kind);
    out.extend_from_slice(&value.to_be_bytes());
}

pub fn encode_db(db: &MemoDB) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&db.schema_version.to_be_bytes());
    out.extend_from_slice(&db.fingerprint.to_be_bytes());
    encode_criterion(&db.criterion, &mut out);
    put_u32(&mut out, db.tables.len());
    seal(&mut out, 0);

    for (name, table) in &db.tables {
        let start = out.len();
        put_str(&mut out, name);
        put_u32(&mut out, table.len());
        for (_, e) in table.iter() {
            put_u32(&mut out, e.key.len());
            out.extend_from_slice(&e.key);
            let rec = encode_record(&e.record);
            put_u32(&mut out, rec.len());
            out.extend_from_slice(&rec);
        }
        put_u32(&mut out, table.recorded_from.len());
        for t in &table.recorded_from {
            put_str(&mut out, t);
        }
        seal(&mut out, start);
    }

    let start = out.len();
    put_u32(&mut out, db.exclusions.len());
    for (f, why) in &db.exclusions {
        put_str(&mut out, f);
        match why {
            Exclusion::NewTestFailure(t) => {
                out.push(0);
                put_str(&mut out, t);
            }
            Exclusion::CacheMissOnCoveringTest => out.push(1),
            Exclusion::Conflicted => out.push(2),
            Exclusion::StateRestoreUnsupported => out.push(3),
        }
    }
    seal(&mut out, start);
    out
}

fn corrupt(e: DecodeError) -> MemoError {
    MemoError::CorruptDB(e.offset)
}

fn check_seal(r: &mut Reader<'_>, start: usize) -> Result<(), MemoError> {
    let end = r.pos;
    let expected = fnv1a64(&r.bytes[start..end]);
    if r.u64().map_err(corrupt)? != expected {
        return Err(MemoError::CorruptDB(start));
    }
    Ok(())
}

/// Parses a database image. Structural damage is reported as `CorruptDB`
/// before any version or fingerprint check.
pub fn decode_db(bytes: &[u8]) -> Result<MemoDB, MemoError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(corrupt)? != MAGIC {
        return Err(MemoError::CorruptDB(0));
    }
    let version = r.u16().map_err(corrupt)?;
    let fingerprint = r.u64().map_err(corrupt)?;
    let tau_ns = r.u64().map_err(corrupt)?;
    let mode_at = r.pos;
    let tau_mode = r.u8().map_err(corrupt)?;
    let limit_kind = r.u8().map_err(corrupt)?;
    let limit = r.u64().map_err(corrupt)?;
    let table_count = r.u32().map_err(corrupt)?;
    check_seal(&mut r, 0)?;
    if version != SCHEMA_VERSION {
        return Err(MemoError::SchemaVersionMismatch { expected: SCHEMA_VERSION, found: version });
    }
    let criterion = ExpensivenessCriterion {
        tau_ns,
        tau_mode: match tau_mode {
            0 => TauMode::Mean,
            1 => TauMode::Cumulative,
            _ => return Err(MemoError::CorruptDB(mode_at)),
        },
        limit: match limit_kind {
            0 => Limit::Count(limit),
            1 => Limit::Percent(f64::from_bits(limit)),
            _ => return Err(MemoError::CorruptDB(mode_at + 1)),
        },
    };

    let mut db = MemoDB::new(fingerprint, criterion);
    for _ in 0..table_count {
        let start = r.pos;
        let name = r.string().map_err(corrupt)?;
        let mut table = MemoTable::new(&name);
        for _ in 0..r.u32().map_err(corrupt)? {
            let n = r.u32().map_err(corrupt)? as usize;
            let key = r.take(n).map_err(corrupt)?.to_vec();
            let rec_at = r.pos;
            let n = r.u32().map_err(corrupt)? as usize;
            let rec = r.take(n).map_err(corrupt)?;
            let record = decode_record(rec).map_err(|e| MemoError::CorruptDB(rec_at + 4 + e.offset))?;
            table.insert(InputKey::new(&name, key), record).map_err(|_| MemoError::CorruptDB(rec_at))?;
        }
        let mut tests = BTreeSet::new();
        for _ in 0..r.u32().map_err(corrupt)? {
            tests.insert(r.string().map_err(corrupt)?);
        }
        table.recorded_from = tests;
        check_seal(&mut r, start)?;
        if db.tables.insert(name, table).is_some() {
            return Err(MemoError::CorruptDB(start));
        }
    }

    let start = r.pos;
    for _ in 0..r.u32().map_err(corrupt)? {
        let name = r.string().map_err(corrupt)?;
        let at = r.pos;
        let why = match r.u8().map_err(corrupt)? {
            0 => Exclusion::NewTestFailure(r.string().map_err(corrupt)?),
            1 => Exclusion::CacheMissOnCoveringTest,
            2 => Exclusion::Conflicted,
            3 => Exclusion::StateRestoreUnsupported,
            _ => return Err(MemoError::CorruptDB(at)),
        };
        db.exclusions.insert(name, why);
    }
    check_seal(&mut r, start)?;
    if !r.at_end() {
        return Err(MemoError::CorruptDB(r.pos));
    }
    Ok(db)
}

pub fn save_db(db: &MemoDB, path: &Path) -> Result<(), MemoError> {
    std::fs::write(path, encode_db(db))
        .map_err(|e| MemoError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Reads a database and checks it was built from `program`.
pub fn load_db(path: &Path, program: &Program) -> Result<MemoDB, MemoError> {
    let bytes = std::fs::read(path)
        .map_err(|e| MemoError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let db = decode_db(&bytes)?;
    db.check_fingerprint(program.fingerprint())?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Datum;

    fn sample() -> MemoDB {
        let mut db = MemoDB::new(0xfeed, ExpensivenessCriterion::default());
        let mut t = MemoTable::new("fib");
        for n in 0..4i64 {
            let mut key = vec![0, 0, 0, 1];
            encode_datum_into(&Datum::Int(n), &mut key);
            let record = OutputRecord {
                ret: Datum::Int(n * 2),
                globals: BTreeMap::from([("G".into(), GlobalWrite { value: Datum::Arr(vec![Datum::Unit]), in_place: true })]),
                args: BTreeMap::from([(0, Datum::Str("x".into()))]),
                steps: 10 + n as u64,
                depth: 2,
            };
            t.insert(InputKey::new("fib", key), record).unwrap();
        }
        t.recorded_from.insert("test_fib".into());
        db.tables.insert("fib".into(), t);
        db.exclusions.insert("p".into(), Exclusion::NewTestFailure("test_p".into()));
        db.exclusions.insert("r".into(), Exclusion::CacheMissOnCoveringTest);
        db
    }

    #[test]
    fn empty_round_trip() {
        let db = MemoDB::new(1, ExpensivenessCriterion { limit: Limit::Count(3), tau_mode: TauMode::Cumulative, tau_ns: 7 });
        let bytes = encode_db(&db);
        assert_eq!(&bytes[..4], b"MEMU");
        assert_eq!(decode_db(&bytes).unwrap(), db);
    }

    #[test]
    fn full_round_trip_is_byte_exact() {
        let db = sample();
        let bytes = encode_db(&db);
        let back = decode_db(&bytes).unwrap();
        assert_eq!(back, db);
        assert_eq!(encode_db(&back), bytes);
    }

    #[test]
    fn every_single_byte_flip_is_corruption() {
        let bytes = encode_db(&sample());
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x20;
            assert!(matches!(decode_db(&bad), Err(MemoError::CorruptDB(_))), "offset {i}");
        }
        assert!(matches!(decode_db(&bytes[..bytes.len() - 1]), Err(MemoError::CorruptDB(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_db(&longer), Err(MemoError::CorruptDB(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut db = sample();
        db.schema_version = 9;
        assert_eq!(
            decode_db(&encode_db(&db)),
            Err(MemoError::SchemaVersionMismatch { expected: SCHEMA_VERSION, found: 9 })
        );
    }

    #[test]
    fn fingerprint_checked_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memo.db");
        let p = crate::lang::parse("fn f(){}").unwrap();
        let mut db = sample();
        save_db(&db, &path).unwrap();
        assert!(matches!(load_db(&path, &p), Err(MemoError::FingerprintMismatch { .. })));
        db.fingerprint = p.fingerprint();
        save_db(&db, &path).unwrap();
        assert_eq!(load_db(&path, &p).unwrap(), db);
    }
}
