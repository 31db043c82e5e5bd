//! Shared domain vocabulary: keys, records, operations, traces, epoch batches,
//! and the trace file format.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ads::Digest;

/// Opaque ordered record identifier. Keys are compared lexicographically and
/// must not contain commas (the trace file separator).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key(pub String);

impl Key {
    pub fn new(s: impl Into<String>) -> Self {
        Key(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key(s.to_string())
    }
}

/// Replication state of a record: held only off-chain (`Nr`) or replicated
/// into contract storage (`R`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplState {
    Nr,
    R,
}

impl fmt::Display for ReplState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplState::Nr => f.write_str("NR"),
            ReplState::R => f.write_str("R"),
        }
    }
}

/// A KV record with its replication state. The payload is opaque; its length
/// must be consistent with `value_words` (32-byte words, partial words round
/// up).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub key: Key,
    pub value_words: u64,
    pub value: Vec<u8>,
    pub state: ReplState,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("record must carry at least one word")]
    EmptyValue,
    #[error("value length {len} inconsistent with {words} words")]
    LengthMismatch { len: usize, words: u64 },
}

impl Record {
    pub fn new(key: Key, value: Vec<u8>, state: ReplState) -> Result<Self, RecordError> {
        if value.is_empty() {
            return Err(RecordError::EmptyValue);
        }
        let value_words = words_for_len(value.len());
        Ok(Record {
            key,
            value_words,
            value,
            state,
        })
    }

    /// Canonical leaf order: NR group before R group, keys ascending within
    /// each group. This is the single order the ADS module builds over.
    pub fn canonical_cmp(&self, other: &Record) -> Ordering {
        canonical_position(self.state, &self.key).cmp(&canonical_position(other.state, &other.key))
    }
}

/// Sort key for the canonical state-grouped, key-sorted layout.
pub fn canonical_position(state: ReplState, key: &Key) -> (u8, Key) {
    let group = match state {
        ReplState::Nr => 0,
        ReplState::R => 1,
    };
    (group, key.clone())
}

/// Number of 32-byte words needed for `len` bytes, rounding up.
pub fn words_for_len(len: usize) -> u64 {
    (len as u64 + 31) / 32
}

/// A single workload operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operation {
    Write { key: Key, words: u64 },
    Read { key: Key },
    Scan { start_key: Key, count: u64 },
}

impl Operation {
    pub fn key(&self) -> &Key {
        match self {
            Operation::Write { key, .. } | Operation::Read { key } => key,
            Operation::Scan { start_key, .. } => start_key,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Operation::Write { .. })
    }
}

/// An ordered operation sequence.
pub type Trace = Vec<Operation>;

/// One epoch's worth of output from the data owner: record updates to push
/// on-chain, replication-state transitions, and the new tree digest.
#[derive(Debug, Clone)]
pub struct EpochBatch {
    pub epoch_index: u64,
    /// Value updates for replicated records, plus values carried by NR->R
    /// transitions.
    pub writes: Vec<Record>,
    pub transitions: Vec<(Key, ReplState)>,
    pub digest: Digest,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("line {line}: unknown op code `{code}`")]
    UnknownOpCode { line: usize, code: String },
    #[error("line {line}: malformed operation `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid count `{text}`")]
    BadCount { line: usize, text: String },
}

/// Parses the trace file format: one op per line, `W,<key>,<words>` |
/// `R,<key>` | `S,<key>,<count>`.
pub fn parse_trace(input: &str) -> Result<Trace, TraceParseError> {
    let mut ops = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let mut parts = raw.split(',');
        let code = parts.next().unwrap_or("");
        let op = match code {
            "W" => {
                let (key, count) = key_and_count(parts, line, raw)?;
                if count == 0 {
                    return Err(TraceParseError::BadCount {
                        line,
                        text: raw.to_string(),
                    });
                }
                Operation::Write {
                    key,
                    words: count,
                }
            }
            "R" => {
                let key = parts.next().filter(|k| !k.is_empty()).ok_or_else(|| {
                    TraceParseError::Malformed {
                        line,
                        text: raw.to_string(),
                    }
                })?;
                if parts.next().is_some() {
                    return Err(TraceParseError::Malformed {
                        line,
                        text: raw.to_string(),
                    });
                }
                Operation::Read {
                    key: Key::new(key),
                }
            }
            "S" => {
                let (start_key, count) = key_and_count(parts, line, raw)?;
                if count == 0 {
                    return Err(TraceParseError::BadCount {
                        line,
                        text: raw.to_string(),
                    });
                }
                Operation::Scan { start_key, count }
            }
            other => {
                return Err(TraceParseError::UnknownOpCode {
                    line,
                    code: other.to_string(),
                })
            }
        };
        ops.push(op);
    }
    Ok(ops)
}

fn key_and_count<'a>(
    mut parts: impl Iterator<Item = &'a str>,
    line: usize,
    raw: &str,
) -> Result<(Key, u64), TraceParseError> {
    let key = parts.next().filter(|k| !k.is_empty()).ok_or_else(|| {
        TraceParseError::Malformed {
            line,
            text: raw.to_string(),
        }
    })?;
    let count = parts.next().ok_or_else(|| TraceParseError::Malformed {
        line,
        text: raw.to_string(),
    })?;
    if parts.next().is_some() {
        return Err(TraceParseError::Malformed {
            line,
            text: raw.to_string(),
        });
    }
    let count = count.parse().map_err(|_| TraceParseError::BadCount {
        line,
        text: raw.to_string(),
    })?;
    Ok((Key::new(key), count))
}

/// Serializes a trace to the file format; round-trips exactly with
/// [`parse_trace`].
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for op in trace {
        match op {
            Operation::Write { key, words } => {
                out.push_str(&format!("W,{},{}\n", key, words));
            }
            Operation::Read { key } => {
                out.push_str(&format!("R,{}\n", key));
            }
            Operation::Scan { start_key, count } => {
                out.push_str(&format!("S,{},{}\n", start_key, count));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_basic_ops() {
        let t = parse_trace("W,k1,2\nR,k1\nR,k1\n").unwrap();
        assert_eq!(
            t,
            vec![
                Operation::Write {
                    key: "k1".into(),
                    words: 2
                },
                Operation::Read { key: "k1".into() },
                Operation::Read { key: "k1".into() },
            ]
        );
        let t = parse_trace("S,k0,4\n").unwrap();
        assert_eq!(
            t,
            vec![Operation::Scan {
                start_key: "k0".into(),
                count: 4
            }]
        );
    }

    #[test]
    fn rejects_unknown_op_code() {
        assert_eq!(
            parse_trace("X,k1\n"),
            Err(TraceParseError::UnknownOpCode {
                line: 1,
                code: "X".to_string()
            })
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            parse_trace("W,k1\n"),
            Err(TraceParseError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            parse_trace("R,k1\nW,k2,notanum\n"),
            Err(TraceParseError::BadCount { line: 2, .. })
        ));
    }

    #[test]
    fn serializes_simple_cases() {
        assert_eq!(serialize_trace(&vec![]), "");
        assert_eq!(
            serialize_trace(&vec![Operation::Read { key: "k9".into() }]),
            "R,k9\n"
        );
    }

    #[test]
    fn canonical_order_groups_nr_first() {
        let nr = Record::new("z".into(), vec![1; 32], ReplState::Nr).unwrap();
        let r = Record::new("a".into(), vec![1; 32], ReplState::R).unwrap();
        assert_eq!(nr.canonical_cmp(&r), Ordering::Less);
    }

    #[test]
    fn words_round_up() {
        assert_eq!(words_for_len(1), 1);
        assert_eq!(words_for_len(32), 1);
        assert_eq!(words_for_len(33), 2);
    }

    fn arb_key() -> impl Strategy<Value = Key> {
        "[a-z0-9]{1,8}".prop_map(Key::new)
    }

    fn arb_op() -> impl Strategy<Value = Operation> {
        prop_oneof![
            (arb_key(), 1u64..64).prop_map(|(key, words)| Operation::Write { key, words }),
            arb_key().prop_map(|key| Operation::Read { key }),
            (arb_key(), 1u64..16).prop_map(|(start_key, count)| Operation::Scan {
                start_key,
                count
            }),
        ]
    }

    proptest! {
        #[test]
        fn parse_serialize_roundtrip(trace in proptest::collection::vec(arb_op(), 0..64)) {
            let text = serialize_trace(&trace);
            prop_assert_eq!(parse_trace(&text).unwrap(), trace);
        }
    }
}
