//! Streaming JSON-Lines I/O for [`DocumentRecord`]s.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::Serialize;
use xxhash_rust::xxh3::Xxh3;

use crate::record::{DocumentRecord, RecordError};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: u64 },
    #[error("line {line}: {source}")]
    Record { line: u64, source: RecordError },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: u64, id: String },
}

impl CorpusError {
    fn is_line_level(&self) -> bool {
        !matches!(self, CorpusError::Io(_))
    }
}

/// Counters kept by [`RecordReader`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub lines: u64,
    pub records: u64,
    pub skipped: u64,
}

/// Lazily decodes records from a JSON-Lines stream.
///
/// In strict mode the first bad line ends the stream with an error (and
/// texts over 4 MiB count as bad). In lenient mode bad lines are counted in
/// [`ReadStats::skipped`] and the iterator moves on. I/O errors end the
/// stream in both modes.
pub struct RecordReader<R> {
    input: R,
    strict: bool,
    stats: ReadStats,
    seen_ids: HashSet<String>,
    buf: Vec<u8>,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R, strict: bool) -> Self {
        RecordReader {
            input,
            strict,
            stats: ReadStats::default(),
            seen_ids: HashSet::new(),
            buf: Vec::new(),
            done: false,
        }
    }

    pub fn stats(&self) -> ReadStats {
        self.stats
    }

    fn decode_line(&mut self, line: u64) -> Result<DocumentRecord, CorpusError> {
        let raw = std::str::from_utf8(&self.buf).map_err(|_| CorpusError::InvalidUtf8 { line })?;
        let record: DocumentRecord = serde_json::from_str(raw).map_err(|e| {
            if e.is_data() {
                CorpusError::Schema { line, message: e.to_string() }
            } else {
                CorpusError::Malformed { line, message: e.to_string() }
            }
        })?;
        record
            .validate(self.strict)
            .map_err(|source| CorpusError::Record { line, source })?;
        if !self.seen_ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: record.id });
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<DocumentRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.input.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
            self.stats.lines += 1;
            while matches!(self.buf.last(), Some(b'\n' | b'\r')) {
                self.buf.pop();
            }
            if self.buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let line = self.stats.lines;
            match self.decode_line(line) {
                Ok(record) => {
                    self.stats.records += 1;
                    return Some(Ok(record));
                }
                Err(e) if !self.strict && e.is_line_level() => {
                    self.stats.skipped += 1;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

pub fn read_records<R: BufRead>(input: R, strict: bool) -> RecordReader<R> {
    RecordReader::new(input, strict)
}

/// Wraps a reader, transparently gunzipping when the stream starts with the
/// gzip magic bytes.
pub fn decompress_if_gzip<'a, R: Read + Send + 'a>(input: R) -> io::Result<Box<dyn BufRead + Send + 'a>> {
    let mut buffered = BufReader::new(input);
    let head = buffered.fill_buf()?;
    if head.starts_with(&GZIP_MAGIC) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(buffered))))
    } else {
        Ok(Box::new(buffered))
    }
}

pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    decompress_if_gzip(File::open(path)?)
}

/// Canonical one-line encoding of any serializable value: sorted keys (the
/// record types declare fields alphabetically and use `BTreeMap`), no
/// insignificant whitespace, trailing newline.
pub fn canonical_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("record types always serialize");
    line.push(b'\n');
    line
}

/// A JSON-Lines sink that fingerprints exactly the bytes it writes.
pub struct JsonlWriter<W> {
    out: W,
    hasher: Xxh3,
    count: u64,
    bytes: u64,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        JsonlWriter { out, hasher: Xxh3::new(), count: 0, bytes: 0 }
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        let line = canonical_line(value);
        self.out.write_all(&line)?;
        self.hasher.update(&line);
        self.count += 1;
        self.bytes += line.len() as u64;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn fingerprint(&self) -> u64 {
        self.hasher.digest()
    }

    pub fn finish(mut self) -> io::Result<(W, u64)> {
        self.out.flush()?;
        let fp = self.hasher.digest();
        Ok((self.out, fp))
    }
}

/// Writes records as canonical JSON-Lines and returns how many were written.
pub fn write_records<'a, I, W>(records: I, output: W) -> io::Result<u64>
where
    I: IntoIterator<Item = &'a DocumentRecord>,
    W: Write,
{
    let mut writer = JsonlWriter::new(output);
    for record in records {
        writer.write(record)?;
    }
    let count = writer.count();
    writer.finish()?;
    Ok(count)
}

/// Fingerprint of the canonical serialization of `records`, identical to
/// what [`JsonlWriter`] reports for the same sequence.
pub fn fingerprint_records<'a, I>(records: I) -> u64
where
    I: IntoIterator<Item = &'a DocumentRecord>,
{
    let mut hasher = Xxh3::new();
    for record in records {
        hasher.update(&canonical_line(record));
    }
    hasher.digest()
}

pub fn format_fingerprint(fp: u64) -> String {
    format!("{fp:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read_all(input: &str, strict: bool) -> (Vec<Result<DocumentRecord, CorpusError>>, ReadStats) {
        let mut reader = read_records(Cursor::new(input.as_bytes().to_vec()), strict);
        let items: Vec<_> = reader.by_ref().collect();
        (items, reader.stats())
    }

    #[test]
    fn two_records_in_order() {
        let (items, stats) = read_all(
            "{\"id\":\"a\",\"text\":\"one\"}\n{\"id\":\"b\",\"text\":\"two\"}\n",
            true,
        );
        let ids: Vec<_> = items.into_iter().map(|r| r.unwrap().id).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(stats, ReadStats { lines: 2, records: 2, skipped: 0 });
    }

    #[test]
    fn empty_input_yields_nothing() {
        let (items, stats) = read_all("", true);
        assert!(items.is_empty());
        assert_eq!(stats, ReadStats::default());
    }

    #[test]
    fn lenient_skips_malformed_line() {
        let (items, stats) = read_all("{\"id\":\"a\",\"text\":\"one\"}\n{not json\n", false);
        assert_eq!(items.len(), 1);
        assert!(items[0].is_ok());
        assert_eq!(stats.skipped, 1);
    }

    #[test]
    fn strict_aborts_on_malformed_line() {
        let (items, _) = read_all("{oops\n{\"id\":\"a\",\"text\":\"one\"}\n", true);
        assert_eq!(items.len(), 1);
        assert!(matches!(items[0], Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn missing_text_is_schema_error() {
        let (items, _) = read_all("{\"id\":\"a\"}\n", true);
        assert!(matches!(items[0], Err(CorpusError::Schema { .. })));
    }

    #[test]
    fn invalid_utf8_reported() {
        let mut bytes = b"{\"id\":\"a\",\"text\":\"".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe]);
        bytes.extend_from_slice(b"\"}\n");
        let mut reader = read_records(Cursor::new(bytes), true);
        assert!(matches!(reader.next(), Some(Err(CorpusError::InvalidUtf8 { line: 1 }))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let (items, _) = read_all(
            "{\"id\":\"a\",\"text\":\"1\"}\n{\"id\":\"a\",\"text\":\"2\"}\n",
            true,
        );
        assert!(matches!(items[1], Err(CorpusError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn empty_meta_is_omitted_and_keys_sorted() {
        let r = DocumentRecord::new("x", "hello").with_lang("en").with_loss(1.5);
        let line = String::from_utf8(canonical_line(&r)).unwrap();
        assert_eq!(line, "{\"id\":\"x\",\"lang\":\"en\",\"loss\":1.5,\"text\":\"hello\"}\n");
    }

    #[test]
    fn gzip_detected_by_magic() {
        use flate2::write::GzEncoder;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(b"{\"id\":\"z\",\"text\":\"gz\"}\n").unwrap();
        let gz = enc.finish().unwrap();
        let input = decompress_if_gzip(Cursor::new(gz)).unwrap();
        let records: Vec<_> = read_records(input, true).map(Result::unwrap).collect();
        assert_eq!(records[0].text, "gz");
    }

    #[test]
    fn writer_fingerprint_matches_helper() {
        let records: Vec<_> = (0..10)
            .map(|i| DocumentRecord::new(format!("d{i}"), format!("text {i}")))
            .collect();
        let mut w = JsonlWriter::new(Vec::new());
        for r in &records {
            w.write(r).unwrap();
        }
        assert_eq!(w.fingerprint(), fingerprint_records(&records));
    }
}
