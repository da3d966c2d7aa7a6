//! Messages and the append-only transcript.
//!
//! A transcript record keeps the routing metadata and a digest of the
//! payload, not the payload itself: 64-bit FNV-1a over its little-endian
//! bytes. Exported as one JSON object per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PayloadKind, Role};
use crate::nn::Tensor;
use crate::rng::fnv1a;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Ids(Vec<u64>),
    Tensor(Tensor),
    Labels(Vec<usize>),
}

impl Payload {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Payload::Ids(v) => (v.len(), 1),
            Payload::Tensor(t) => t.shape(),
            Payload::Labels(v) => (v.len(), 1),
        }
    }

    pub fn element_count(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            Payload::Ids(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Payload::Tensor(t) => t.to_le_bytes(),
            Payload::Labels(v) => v.iter().flat_map(|&x| (x as u64).to_le_bytes()).collect(),
        }
    }

    pub fn digest(&self) -> u64 {
        fnv1a(&self.to_le_bytes())
    }

    pub fn into_ids(self) -> Result<Vec<u64>> {
        match self {
            Payload::Ids(v) => Ok(v),
            other => Err(Error::Protocol(format!("expected sample ids, got {other:?}"))),
        }
    }

    pub fn into_tensor(self) -> Result<Tensor> {
        match self {
            Payload::Tensor(t) => Ok(t),
            _ => Err(Error::Protocol("expected a tensor payload".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: u64,
    pub sender: Role,
    pub receiver: Role,
    pub kind: PayloadKind,
    pub payload: Payload,
    /// Payload went through local differential privacy before sending.
    pub perturbed: bool,
}

impl Message {
    pub fn record(&self) -> TranscriptRecord {
        let (r, c) = self.payload.shape();
        TranscriptRecord {
            round: self.round,
            sender: self.sender,
            receiver: self.receiver,
            kind: self.kind,
            shape: [r, c],
            float_count: r * c,
            payload_digest: format!("{:016x}", self.payload.digest()),
            ldp: self.perturbed,
        }
    }
}

/// One line of an exported transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: u64,
    pub sender: Role,
    pub receiver: Role,
    pub kind: PayloadKind,
    pub shape: [usize; 2],
    pub float_count: usize,
    pub payload_digest: String,
    #[serde(default)]
    pub ldp: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: Transcript) {
        self.records.extend(other.records);
    }

    /// Records of one round, in order.
    pub fn round(&self, round: u64) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.iter().filter(move |r| r.round == round)
    }

    pub fn count(&self, kind: PayloadKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records always serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// Parses exported records; blank lines are skipped.
    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            if rec.float_count != rec.shape[0] * rec.shape[1] {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: i + 1,
                    msg: format!("float count {} does not match shape {:?}", rec.float_count, rec.shape),
                });
            }
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, &path.display().to_string())
    }
}
