//! Recall memory: the append-only conversation log.
//!
//! On disk the log is newline-delimited JSON, one
//! `{"seq", "role", "text", "timestamp"}` record per line, flushed on every
//! append. Sequence numbers start at 0 and increase by one.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
    System,
    Function,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Agent => "agent",
            Role::System => "system",
            Role::Function => "function",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Role::User),
            "agent" => Ok(Role::Agent),
            "system" => Ok(Role::System),
            "function" => Ok(Role::Function),
            other => Err(Error::Validation(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub seq: u64,
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecallPage {
    pub entries: Vec<RecallEntry>,
    pub total_matches: usize,
    pub has_more: bool,
}

impl RecallPage {
    /// Human-readable rendering used as a function-call result.
    pub fn render(&self, page: usize) -> String {
        if self.total_matches == 0 {
            return "No results found.".to_string();
        }
        let mut out = format!(
            "Showing {} of {} results (page {page}):",
            self.entries.len(),
            self.total_matches
        );
        for e in &self.entries {
            out.push_str(&format!(
                "\n[{}] {} ({}): {}",
                e.seq,
                e.timestamp.format("%Y-%m-%d %H:%M:%S"),
                e.role,
                e.text
            ));
        }
        if self.has_more {
            out.push_str(&format!("\nMore results on page {}.", page + 1));
        }
        out
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    if s.len() != 10 {
        return Err(Error::Date(format!("{s:?} is not in YYYY-MM-DD format")));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Date(format!("{s:?}: {e}")))
}

#[derive(Debug)]
pub struct RecallMemory {
    entries: Vec<RecallEntry>,
    page_size: usize,
    sink: Option<(PathBuf, File)>,
}

impl Default for RecallMemory {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl RecallMemory {
    pub fn in_memory() -> Self {
        RecallMemory {
            entries: Vec::new(),
            page_size: DEFAULT_PAGE_SIZE,
            sink: None,
        }
    }

    /// Open (or create) a log file, loading existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut log = RecallMemory::in_memory();
        if path.exists() {
            log.entries = read_log(BufReader::new(File::open(path)?))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        log.sink = Some((path.to_path_buf(), file));
        Ok(log)
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        assert!(page_size > 0, "page size must be positive");
        self.page_size = page_size;
        self
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RecallEntry] {
        &self.entries
    }

    pub fn append_entry(
        &mut self,
        role: Role,
        text: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Result<u64> {
        if let Some(last) = self.entries.last() {
            if timestamp < last.timestamp {
                return Err(Error::Order {
                    last: last.timestamp.to_rfc3339(),
                    new: timestamp.to_rfc3339(),
                });
            }
        }
        let entry = RecallEntry {
            seq: self.entries.len() as u64,
            role,
            text: text.into(),
            timestamp,
        };
        if let Some((_, file)) = self.sink.as_mut() {
            let mut line =
                serde_json::to_vec(&entry).map_err(|e| Error::Validation(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        let seq = entry.seq;
        self.entries.push(entry);
        Ok(seq)
    }

    fn paginate<'a>(
        &self,
        matches: impl Iterator<Item = &'a RecallEntry>,
        page: usize,
    ) -> RecallPage {
        let matches: Vec<&RecallEntry> = matches.collect();
        let start = page.saturating_mul(self.page_size);
        let entries: Vec<RecallEntry> = matches
            .iter()
            .skip(start)
            .take(self.page_size)
            .map(|e| (*e).clone())
            .collect();
        let has_more = start.saturating_add(self.page_size) < matches.len();
        RecallPage {
            entries,
            total_matches: matches.len(),
            has_more,
        }
    }

    /// Case-insensitive substring search, in sequence order. An empty query
    /// matches every entry.
    pub fn conversation_search(&self, query: &str, page: usize) -> RecallPage {
        let needle = query.to_lowercase();
        self.paginate(
            self.entries
                .iter()
                .filter(|e| e.text.to_lowercase().contains(&needle)),
            page,
        )
    }

    /// Entries whose UTC calendar date lies in `[start, end]`.
    pub fn conversation_search_date(
        &self,
        start: &str,
        end: &str,
        page: usize,
    ) -> Result<RecallPage> {
        let start = parse_date(start)?;
        let end = parse_date(end)?;
        if start > end {
            return Err(Error::Date(format!("start {start} is after end {end}")));
        }
        Ok(self.paginate(
            self.entries.iter().filter(|e| {
                let d = e.timestamp.date_naive();
                start <= d && d <= end
            }),
            page,
        ))
    }

    /// Serialize the whole log in file format.
    pub fn to_ndjson(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend(serde_json::to_vec(e).map_err(|e| Error::Validation(e.to_string()))?);
            out.push(b'\n');
        }
        Ok(out)
    }
}

/// Parse and validate a log: contiguous sequence numbers from 0 and
/// non-decreasing timestamps.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<RecallEntry>> {
    let mut entries: Vec<RecallEntry> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec = Some(i as u64);
        let entry: RecallEntry = serde_json::from_str(&line)
            .map_err(|e| Error::format(rec, format!("bad log record: {e}")))?;
        if entry.seq != entries.len() as u64 {
            return Err(Error::format(
                rec,
                format!("expected seq {}, found {}", entries.len(), entry.seq),
            ));
        }
        if entries
            .last()
            .is_some_and(|l| entry.timestamp < l.timestamp)
        {
            return Err(Error::format(rec, "timestamp regression"));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(y: i32, m: u32, d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, 0, 0).unwrap()
    }

    #[test]
    fn sequence_numbers() {
        let mut log = RecallMemory::in_memory();
        assert_eq!(
            log.append_entry(Role::User, "hi", at(2024, 1, 1, 0))
                .unwrap(),
            0
        );
        assert_eq!(
            log.append_entry(Role::Agent, "hello", at(2024, 1, 1, 0))
                .unwrap(),
            1
        );
        let err = log
            .append_entry(Role::User, "late", at(2023, 12, 31, 0))
            .unwrap_err();
        assert_eq!(err.kind(), "OrderError");
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn case_insensitive_search() {
        let mut log = RecallMemory::in_memory();
        log.append_entry(Role::User, "Cheddar is cute", at(2024, 1, 1, 0))
            .unwrap();
        log.append_entry(Role::User, "hello", at(2024, 1, 1, 1))
            .unwrap();
        assert_eq!(log.conversation_search("cheddar", 0).total_matches, 1);
        let none = log.conversation_search("zzz", 0);
        assert_eq!((none.total_matches, none.has_more), (0, false));
        assert_eq!(log.conversation_search("", 0).total_matches, 2);
    }

    #[test]
    fn pagination_arithmetic() {
        let mut log = RecallMemory::in_memory();
        for i in 0..20 {
            let text = if i % 5 == 4 {
                "other".to_string()
            } else {
                format!("pet {i}")
            };
            log.append_entry(Role::User, text, at(2024, 1, 1, 0))
                .unwrap();
        }
        let mut log12 = RecallMemory::in_memory();
        for i in 0..12 {
            log12
                .append_entry(Role::User, format!("match {i}"), at(2024, 1, 1, 0))
                .unwrap();
        }
        log12
            .append_entry(Role::User, "nope", at(2024, 1, 1, 0))
            .unwrap();
        let p2 = log12.conversation_search("match", 2);
        assert_eq!(p2.entries.len(), 12 - 2 * 5);
        assert!(!p2.has_more);
        assert!(log12.conversation_search("match", 1).has_more);
        let beyond = log12.conversation_search("match", 9);
        assert!(beyond.entries.is_empty() && !beyond.has_more);
        // 16 "pet" matches: pages 0..=2 are full, page 3 holds the last one.
        assert_eq!(log.conversation_search("pet", 3).entries.len(), 1);
    }

    #[test]
    fn date_range_inclusive() {
        let mut log = RecallMemory::in_memory();
        log.append_entry(Role::User, "a", at(2024, 1, 1, 23))
            .unwrap();
        log.append_entry(Role::User, "b", at(2024, 1, 3, 0))
            .unwrap();
        let r = log
            .conversation_search_date("2024-01-01", "2024-01-02", 0)
            .unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].text, "a");
        let r = log
            .conversation_search_date("2024-01-03", "2024-01-03", 0)
            .unwrap();
        assert_eq!(r.entries[0].text, "b");
        for (s, e) in [
            ("2024-13-01", "2024-12-01"),
            ("2024-1-01", "2024-01-02"),
            ("2024-01-05", "2024-01-01"),
        ] {
            assert_eq!(
                log.conversation_search_date(s, e, 0).unwrap_err().kind(),
                "DateError"
            );
        }
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recall.ndjson");
        {
            let mut log = RecallMemory::open(&path).unwrap();
            log.append_entry(Role::User, "héllo \"quoted\"\nnewline", at(2024, 2, 29, 12))
                .unwrap();
            log.append_entry(
                Role::Function,
                "🐶",
                at(2024, 3, 1, 0) + chrono::Duration::nanoseconds(5),
            )
            .unwrap();
        }
        let on_disk = std::fs::read(&path).unwrap();
        let reopened = RecallMemory::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.to_ndjson().unwrap(), on_disk);
    }

    #[test]
    fn corrupt_log_rejected() {
        let bad =
            "{\"seq\":1,\"role\":\"user\",\"text\":\"x\",\"timestamp\":\"2024-01-01T00:00:00Z\"}\n";
        assert_eq!(read_log(bad.as_bytes()).unwrap_err().kind(), "FormatError");
        assert_eq!(
            read_log("not json\n".as_bytes()).unwrap_err().kind(),
            "FormatError"
        );
    }
}
