//! Canonical, type-tagged value encoding used for memo keys and records.

use thiserror::Error;

use crate::lang::{Datum, Value};

pub const TAG_INT: u8 = 0x01;
pub const TAG_BOOL: u8 = 0x02;
pub const TAG_STR: u8 = 0x03;
pub const TAG_ARR: u8 = 0x04;
pub const TAG_FNREF: u8 = 0x05;
pub const TAG_UNIT: u8 = 0x06;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed encoding at byte {offset}")]
pub struct DecodeError {
    pub offset: usize,
}

fn put_bytes(out: &mut Vec<u8>, tag: u8, bytes: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

pub fn encode_value_into(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Int(i) => {
            out.push(TAG_INT);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Value::Bool(b) => out.extend_from_slice(&[TAG_BOOL, *b as u8]),
        Value::Str(s) => put_bytes(out, TAG_STR, s.as_bytes()),
        Value::Arr(a) => {
            let items = a.borrow();
            out.push(TAG_ARR);
            out.extend_from_slice(&(items.len() as u32).to_be_bytes());
            for item in items.iter() {
                encode_value_into(item, out);
            }
        }
        Value::FnRef(f) => put_bytes(out, TAG_FNREF, f.as_bytes()),
        Value::Unit => out.push(TAG_UNIT),
    }
}

pub fn encode_datum_into(d: &Datum, out: &mut Vec<u8>) {
    match d {
        Datum::Int(i) => {
            out.push(TAG_INT);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Datum::Bool(b) => out.extend_from_slice(&[TAG_BOOL, *b as u8]),
        Datum::Str(s) => put_bytes(out, TAG_STR, s.as_bytes()),
        Datum::Arr(items) => {
            out.push(TAG_ARR);
            out.extend_from_slice(&(items.len() as u32).to_be_bytes());
            for item in items {
                encode_datum_into(item, out);
            }
        }
        Datum::FnRef(f) => put_bytes(out, TAG_FNREF, f.as_bytes()),
        Datum::Unit => out.push(TAG_UNIT),
    }
}

pub fn canonical_encode(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    encode_value_into(v, &mut out);
    out
}

/// Byte cursor shared by the value decoder and the database reader.
pub struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn err(&self) -> DecodeError {
        DecodeError { offset: self.pos }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| self.err())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError { offset: at })
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn datum(&mut self) -> Result<Datum, DecodeError> {
        let at = self.pos;
        match self.u8()? {
            TAG_INT => Ok(Datum::Int(self.u64()? as i64)),
            TAG_BOOL => match self.u8()? {
                0 => Ok(Datum::Bool(false)),
                1 => Ok(Datum::Bool(true)),
                _ => Err(DecodeError { offset: at + 1 }),
            },
            TAG_STR => Ok(Datum::Str(self.string()?)),
            TAG_ARR => {
                let n = self.u32()? as usize;
                // Each element takes at least one byte.
                if n > self.bytes.len() - self.pos {
                    return Err(DecodeError { offset: at + 1 });
                }
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.datum()?);
                }
                Ok(Datum::Arr(items))
            }
            TAG_FNREF => Ok(Datum::FnRef(self.string()?)),
            TAG_UNIT => Ok(Datum::Unit),
            _ => Err(DecodeError { offset: at }),
        }
    }
}

/// Decodes exactly one value; trailing bytes are an error.
pub fn canonical_decode(bytes: &[u8]) -> Result<Datum, DecodeError> {
    let mut r = Reader::new(bytes);
    let d = r.datum()?;
    if !r.at_end() {
        return Err(DecodeError { offset: r.pos });
    }
    Ok(d)
}
