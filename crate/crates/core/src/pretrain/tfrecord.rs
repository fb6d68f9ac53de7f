//! TFRecord framing: `u64 len | u32 masked_crc(len) | data | u32 masked_crc(data)`,
//! all little-endian, with CRC-32C (Castagnoli).

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use super::proto::{decode_example, encode_example};
use super::{PretrainError, SerializedExample};

const CASTAGNOLI_REFLECTED: u32 = 0x82f6_3b78;

fn table() -> &'static [u32; 256] {
    static TABLE: OnceLock<[u32; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { (c >> 1) ^ CASTAGNOLI_REFLECTED } else { c >> 1 };
            }
            *slot = c;
        }
        t
    })
}

pub fn crc32c(data: &[u8]) -> u32 {
    let t = table();
    !data
        .iter()
        .fold(!0u32, |c, &b| t[((c ^ u32::from(b)) & 0xff) as usize] ^ (c >> 8))
}

pub fn mask_crc(crc: u32) -> u32 {
    crc.rotate_right(15).wrapping_add(0xa282_ead8)
}

/// Which checksum of a record failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrcField {
    Length,
    Data,
}

impl fmt::Display for CrcField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrcField::Length => "length",
            CrcField::Data => "data",
        })
    }
}

pub fn write_record<W: Write>(out: &mut W, data: &[u8]) -> io::Result<()> {
    let len = (data.len() as u64).to_le_bytes();
    out.write_all(&len)?;
    out.write_all(&mask_crc(crc32c(&len)).to_le_bytes())?;
    out.write_all(data)?;
    out.write_all(&mask_crc(crc32c(data)).to_le_bytes())
}

/// Sequential record reader that verifies both checksums.
pub struct RecordReader<R> {
    input: R,
    path: PathBuf,
    offset: u64,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PretrainError> {
        let path = path.as_ref();
        Ok(RecordReader::new(BufReader::new(File::open(path)?), path))
    }
}

impl<R: Read> RecordReader<R> {
    pub fn new(input: R, path: impl Into<PathBuf>) -> Self {
        RecordReader {
            input,
            path: path.into(),
            offset: 0,
        }
    }

    /// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean EOF before the first byte.
    fn fill(&mut self, buf: &mut [u8], start: u64, allow_eof: bool) -> Result<bool, PretrainError> {
        let mut got = 0;
        while got < buf.len() {
            match self.input.read(&mut buf[got..]) {
                Ok(0) if got == 0 && allow_eof => return Ok(false),
                Ok(0) => {
                    return Err(PretrainError::Truncated {
                        path: self.path.clone(),
                        offset: start,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(true)
    }

    pub fn next_record(&mut self) -> Result<Option<Vec<u8>>, PretrainError> {
        let start = self.offset;
        let path = self.path.clone();
        let corrupt = |which| PretrainError::CorruptRecord {
            path: path.clone(),
            offset: start,
            which,
        };
        let mut header = [0u8; 12];
        if !self.fill(&mut header, start, true)? {
            return Ok(None);
        }
        let (len_bytes, len_crc) = header.split_at(8);
        if mask_crc(crc32c(len_bytes)).to_le_bytes() != len_crc {
            return Err(corrupt(CrcField::Length));
        }
        let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| corrupt(CrcField::Length))?;
        let mut data = vec![0u8; len];
        self.fill(&mut data, start, false)?;
        let mut data_crc = [0u8; 4];
        self.fill(&mut data_crc, start, false)?;
        if mask_crc(crc32c(&data)).to_le_bytes() != data_crc {
            return Err(corrupt(CrcField::Data));
        }
        self.offset += 16 + len as u64;
        Ok(Some(data))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<Vec<u8>, PretrainError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// `<dir>/pretrain-<index>-of-<count>.tfrecord`, index from 0.
pub fn shard_path(dir: impl AsRef<Path>, index: usize, count: usize) -> PathBuf {
    dir.as_ref().join(format!("pretrain-{index}-of-{count}.tfrecord"))
}

/// Deals examples to shard files round-robin by their global index.
pub struct ShardWriter {
    writers: Vec<BufWriter<File>>,
    paths: Vec<PathBuf>,
    written: u64,
}

impl ShardWriter {
    pub fn create(dir: impl AsRef<Path>, shards: usize) -> Result<Self, PretrainError> {
        let dir = dir.as_ref();
        if shards == 0 {
            return Err(PretrainError::InvalidConfig("shards must be at least 1".into()));
        }
        std::fs::create_dir_all(dir)?;
        let paths: Vec<PathBuf> = (0..shards).map(|i| shard_path(dir, i, shards)).collect();
        let writers = paths
            .iter()
            .map(|p| File::create(p).map(BufWriter::new))
            .collect::<io::Result<_>>()?;
        Ok(ShardWriter { writers, paths, written: 0 })
    }

    pub fn write(&mut self, example: &SerializedExample) -> Result<(), PretrainError> {
        let shard = (self.written % self.writers.len() as u64) as usize;
        write_record(&mut self.writers[shard], &encode_example(example))?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    /// Flushes every shard and returns the paths in shard order.
    pub fn finish(self) -> Result<Vec<PathBuf>, PretrainError> {
        for mut w in self.writers {
            w.flush()?;
        }
        Ok(self.paths)
    }
}

pub fn write_tfrecords<'a, I>(examples: I, dir: impl AsRef<Path>, shards: usize) -> Result<Vec<PathBuf>, PretrainError>
where
    I: IntoIterator<Item = &'a SerializedExample>,
{
    let mut writer = ShardWriter::create(dir, shards)?;
    for ex in examples {
        writer.write(ex)?;
    }
    writer.finish()
}

/// Reads shard files in order, yielding every example; the first damaged
/// record ends the stream with an error.
pub fn read_tfrecords(paths: &[PathBuf]) -> impl Iterator<Item = Result<SerializedExample, PretrainError>> + '_ {
    let mut failed = false;
    paths
        .iter()
        .flat_map(|p| -> Box<dyn Iterator<Item = Result<Vec<u8>, PretrainError>>> {
            match RecordReader::open(p) {
                Ok(r) => Box::new(r),
                Err(e) => Box::new(std::iter::once(Err(e))),
            }
        })
        .map(|r| r.and_then(|bytes| decode_example(&bytes)))
        .take_while(move |r| {
            let keep = !failed;
            failed |= r.is_err();
            keep
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(i: i64) -> SerializedExample {
        SerializedExample {
            input_ids: vec![2, 10 + i, 3, 11, 3],
            input_mask: vec![1; 5],
            segment_ids: vec![0, 0, 0, 1, 1],
            masked_lm_positions: vec![1],
            masked_lm_ids: vec![10 + i],
            masked_lm_weights: vec![1.0],
            next_sentence_labels: i % 2,
        }
    }

    #[test]
    fn crc_known_answers() {
        assert_eq!(crc32c(b"123456789"), 0xe306_9283);
        assert_eq!(crc32c(b""), 0);
        assert_eq!(crc32c(&[0u8; 32]), 0x8a91_36aa);
        assert_eq!(mask_crc(0), 0xa282_ead8);
    }

    #[test]
    fn empty_record_bytes() {
        let mut buf = Vec::new();
        write_record(&mut buf, b"").unwrap();
        assert_eq!(buf.len(), 16);
        assert_eq!(&buf[12..], &mask_crc(0).to_le_bytes());
    }

    #[test]
    fn round_robin_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let examples: Vec<_> = (0..10).map(example).collect();
        let paths = write_tfrecords(&examples, dir.path(), 4).unwrap();
        assert_eq!(paths[0].file_name().unwrap(), "pretrain-0-of-4.tfrecord");
        let shard1: Vec<_> = read_tfrecords(&paths[1..2]).collect::<Result<_, _>>().unwrap();
        assert_eq!(shard1, vec![example(1), example(5), example(9)]);
        let all: Vec<_> = read_tfrecords(&paths).collect::<Result<_, _>>().unwrap();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn every_flipped_byte_is_detected() {
        let mut buf = Vec::new();
        for i in 0..3 {
            write_record(&mut buf, &encode_example(&example(i))).unwrap();
        }
        let first = 16 + encode_example(&example(0)).len() as u64;
        for pos in 0..buf.len() {
            let mut bad = buf.clone();
            bad[pos] ^= 0x01;
            let mut reader = RecordReader::new(&bad[..], "mem");
            let err = reader.by_ref().find_map(Result::err).expect("corruption detected");
            match err {
                PretrainError::CorruptRecord { offset, which, .. } => {
                    let expected_offset = if (pos as u64) < first { 0 } else { offset };
                    assert_eq!(offset, expected_offset);
                    let rel = (pos as u64 - offset) as usize;
                    assert_eq!(which, if rel < 12 { CrcField::Length } else { CrcField::Data }, "pos {pos}");
                }
                other => panic!("pos {pos}: {other:?}"),
            }
        }
    }

    #[test]
    fn truncation_is_reported() {
        let mut buf = Vec::new();
        write_record(&mut buf, b"hello").unwrap();
        let mut reader = RecordReader::new(&buf[..buf.len() - 1], "mem");
        assert!(matches!(reader.next_record(), Err(PretrainError::Truncated { offset: 0, .. })));
    }
}
