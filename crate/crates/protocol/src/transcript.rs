//! Wire log of a run, one JSON object per line.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::message::{Frame, TYPE_SEALED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    /// Simulation (true) time of transmission.
    pub t: f64,
    pub src: String,
    /// `*` for broadcasts.
    pub dst: String,
    pub msg_type: u8,
    /// What an observer of the wire can tell: `beacon`, `sealed` or `malformed`.
    pub label: String,
    pub len: usize,
    #[serde(with = "hex")]
    pub frame: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn record(&mut self, t: f64, src: &str, dst: &str, frame: &[u8]) {
        let (msg_type, label) = match Frame::decode(frame) {
            Ok(Frame::Beacon(m)) => (m.msg_type(), "beacon"),
            Ok(Frame::Sealed(_)) => (TYPE_SEALED, "sealed"),
            Err(_) => (frame.get(5).copied().unwrap_or(0), "malformed"),
        };
        self.entries.push(TranscriptEntry {
            seq: self.entries.len() as u64,
            t,
            src: src.to_string(),
            dst: dst.to_string(),
            msg_type,
            label: label.to_string(),
            len: frame.len(),
            frame: frame.to_vec(),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn from_jsonl(s: &str) -> serde_json::Result<Self> {
        let entries = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }
}
