//! Minimal protobuf codec for `tf.train.Example` with int64 and float lists.
//!
//! ```text
//! Example  { Features features = 1; }
//! Features { map<string, Feature> feature = 1; }   // entry: key = 1, value = 2
//! Feature  { oneof { BytesList = 1; FloatList = 2; Int64List = 3; } }
//! *List    { repeated value = 1 [packed]; }
//! ```

use std::collections::BTreeMap;

use super::{PretrainError, SerializedExample, FEATURE_NAMES};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Int64(Vec<i64>),
    Float(Vec<f32>),
}

const VARINT: u8 = 0;
const FIXED64: u8 = 1;
const LEN: u8 = 2;
const FIXED32: u8 = 5;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_tag(out: &mut Vec<u8>, field: u32, wire: u8) {
    put_varint(out, (u64::from(field) << 3) | u64::from(wire));
}

fn put_len_delimited(out: &mut Vec<u8>, field: u32, body: &[u8]) {
    put_tag(out, field, LEN);
    put_varint(out, body.len() as u64);
    out.extend_from_slice(body);
}

fn encode_feature(value: &FeatureValue) -> Vec<u8> {
    let mut packed = Vec::new();
    let field = match value {
        FeatureValue::Int64(vs) => {
            for &v in vs {
                put_varint(&mut packed, v as u64);
            }
            3
        }
        FeatureValue::Float(vs) => {
            for &v in vs {
                packed.extend_from_slice(&v.to_le_bytes());
            }
            2
        }
    };
    let mut list = Vec::new();
    if !packed.is_empty() {
        put_len_delimited(&mut list, 1, &packed);
    }
    let mut feature = Vec::new();
    put_len_delimited(&mut feature, field, &list);
    feature
}

/// Encodes features in the given order.
pub fn encode_features<'a>(features: impl IntoIterator<Item = (&'a str, &'a FeatureValue)>) -> Vec<u8> {
    let mut map = Vec::new();
    for (name, value) in features {
        let mut entry = Vec::new();
        put_len_delimited(&mut entry, 1, name.as_bytes());
        put_len_delimited(&mut entry, 2, &encode_feature(value));
        put_len_delimited(&mut map, 1, &entry);
    }
    let mut example = Vec::new();
    put_len_delimited(&mut example, 1, &map);
    example
}

pub fn encode_example(ex: &SerializedExample) -> Vec<u8> {
    let values = [
        FeatureValue::Int64(ex.input_ids.clone()),
        FeatureValue::Int64(ex.input_mask.clone()),
        FeatureValue::Int64(ex.segment_ids.clone()),
        FeatureValue::Int64(ex.masked_lm_positions.clone()),
        FeatureValue::Int64(ex.masked_lm_ids.clone()),
        FeatureValue::Float(ex.masked_lm_weights.clone()),
        FeatureValue::Int64(vec![ex.next_sentence_labels]),
    ];
    encode_features(FEATURE_NAMES.iter().copied().zip(values.iter()))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> PretrainError {
    PretrainError::MalformedExample(msg.into())
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn varint(&mut self) -> Result<u64, PretrainError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.buf.get(self.pos).ok_or_else(|| malformed("truncated varint"))?;
            self.pos += 1;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(malformed("varint longer than 10 bytes"))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PretrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| malformed("field overruns buffer"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn tag(&mut self) -> Result<(u64, u8), PretrainError> {
        let t = self.varint()?;
        Ok((t >> 3, (t & 7) as u8))
    }

    fn bytes(&mut self) -> Result<&'a [u8], PretrainError> {
        let n = self.varint()? as usize;
        self.take(n)
    }

    fn skip(&mut self, wire: u8) -> Result<(), PretrainError> {
        match wire {
            VARINT => self.varint().map(drop),
            FIXED64 => self.take(8).map(drop),
            LEN => self.bytes().map(drop),
            FIXED32 => self.take(4).map(drop),
            w => Err(malformed(format!("unsupported wire type {w}"))),
        }
    }
}

fn decode_int64_list(buf: &[u8]) -> Result<Vec<i64>, PretrainError> {
    let mut c = Cursor::new(buf);
    let mut out = Vec::new();
    while !c.done() {
        match c.tag()? {
            (1, LEN) => {
                let mut p = Cursor::new(c.bytes()?);
                while !p.done() {
                    out.push(p.varint()? as i64);
                }
            }
            (1, VARINT) => out.push(c.varint()? as i64),
            (_, w) => c.skip(w)?,
        }
    }
    Ok(out)
}

fn decode_float_list(buf: &[u8]) -> Result<Vec<f32>, PretrainError> {
    let mut c = Cursor::new(buf);
    let mut out = Vec::new();
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    while !c.done() {
        match c.tag()? {
            (1, LEN) => {
                let packed = c.bytes()?;
                if packed.len() % 4 != 0 {
                    return Err(malformed("packed float list length not a multiple of 4"));
                }
                out.extend(packed.chunks_exact(4).map(f));
            }
            (1, FIXED32) => out.push(f(c.take(4)?)),
            (_, w) => c.skip(w)?,
        }
    }
    Ok(out)
}

fn decode_feature(buf: &[u8]) -> Result<FeatureValue, PretrainError> {
    let mut c = Cursor::new(buf);
    let mut value = None;
    while !c.done() {
        match c.tag()? {
            (1, LEN) => return Err(malformed("bytes_list features are not supported")),
            (2, LEN) => value = Some(FeatureValue::Float(decode_float_list(c.bytes()?)?)),
            (3, LEN) => value = Some(FeatureValue::Int64(decode_int64_list(c.bytes()?)?)),
            (_, w) => c.skip(w)?,
        }
    }
    value.ok_or_else(|| malformed("feature with no value"))
}

/// Decodes every feature of an Example message.
pub fn decode_features(buf: &[u8]) -> Result<BTreeMap<String, FeatureValue>, PretrainError> {
    let mut out = BTreeMap::new();
    let mut c = Cursor::new(buf);
    while !c.done() {
        match c.tag()? {
            (1, LEN) => {
                let mut features = Cursor::new(c.bytes()?);
                while !features.done() {
                    match features.tag()? {
                        (1, LEN) => {
                            let mut entry = Cursor::new(features.bytes()?);
                            let (mut key, mut value) = (None, None);
                            while !entry.done() {
                                match entry.tag()? {
                                    (1, LEN) => {
                                        key = Some(
                                            String::from_utf8(entry.bytes()?.to_vec())
                                                .map_err(|_| malformed("feature name is not UTF-8"))?,
                                        )
                                    }
                                    (2, LEN) => value = Some(decode_feature(entry.bytes()?)?),
                                    (_, w) => entry.skip(w)?,
                                }
                            }
                            let key = key.ok_or_else(|| malformed("map entry without key"))?;
                            out.insert(key, value.unwrap_or(FeatureValue::Int64(Vec::new())));
                        }
                        (_, w) => features.skip(w)?,
                    }
                }
            }
            (_, w) => c.skip(w)?,
        }
    }
    Ok(out)
}

pub fn decode_example(buf: &[u8]) -> Result<SerializedExample, PretrainError> {
    let mut features = decode_features(buf)?;
    if let Some(name) = features.keys().find(|k| !FEATURE_NAMES.contains(&k.as_str())) {
        return Err(PretrainError::UnknownFeature(name.clone()));
    }
    let mut int = |name: &'static str| match features.remove(name) {
        Some(FeatureValue::Int64(v)) => Ok(v),
        Some(FeatureValue::Float(_)) => Err(malformed(format!("{name} should be an int64 list"))),
        None => Err(PretrainError::MissingFeature(name)),
    };
    let input_ids = int("input_ids")?;
    let input_mask = int("input_mask")?;
    let segment_ids = int("segment_ids")?;
    let masked_lm_positions = int("masked_lm_positions")?;
    let masked_lm_ids = int("masked_lm_ids")?;
    let labels = int("next_sentence_labels")?;
    let masked_lm_weights = match features.remove("masked_lm_weights") {
        Some(FeatureValue::Float(v)) => v,
        Some(FeatureValue::Int64(_)) => return Err(malformed("masked_lm_weights should be a float list")),
        None => return Err(PretrainError::MissingFeature("masked_lm_weights")),
    };
    let [next_sentence_labels] = labels[..] else {
        return Err(malformed("next_sentence_labels must hold exactly one value"));
    };
    Ok(SerializedExample {
        input_ids,
        input_mask,
        segment_ids,
        masked_lm_positions,
        masked_lm_ids,
        masked_lm_weights,
        next_sentence_labels,
    })
}
