//! Binary dataset files.
//!
//! ```text
//! header (28 bytes, little-endian):
//!   magic        b"WSBC"
//!   version      u16 (= 1)
//!   state_dim    u16
//!   action_dim   u16
//!   history_len  u16
//!   transitions  u64
//!   episodes     u64
//! per episode:
//!   length       u32
//!   length rows of (state, action) as f32
//!   terminal state as f32
//! ```
//!
//! Generation metadata goes to a JSON sidecar next to the file
//! (`<path>.json`).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Episode, GenerationRecord};
use crate::env::STATE_FIELDS;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"WSBC";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u16,
    metadata: Option<GenerationRecord>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn encode(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_LEN
            + 4 * d
                .episodes
                .iter()
                .map(|e| e.states.len() + e.actions.len() + 1)
                .sum::<usize>(),
    );
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d.state_dim as u16).to_le_bytes());
    out.extend_from_slice(&(d.action_dim as u16).to_le_bytes());
    out.extend_from_slice(&(d.history_len as u16).to_le_bytes());
    out.extend_from_slice(&(d.n_transitions() as u64).to_le_bytes());
    out.extend_from_slice(&(d.n_episodes() as u64).to_le_bytes());
    for (e, ep) in d.episodes.iter().enumerate() {
        let len = d.episode_len(e);
        out.extend_from_slice(&(len as u32).to_le_bytes());
        for t in 0..len {
            for x in d.state(e, t).iter().chain(d.action(e, t)) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for x in &ep.states[len * d.state_dim..] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Option<()> {
        let raw = self.take(n * 4)?;
        out.extend(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        Some(())
    }
}

pub(crate) fn decode(bytes: &[u8], metadata: Option<GenerationRecord>) -> Result<Dataset> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedHeader);
    }
    let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let (sd, ad, hist) = (u16_at(6) as usize, u16_at(8) as usize, u16_at(10) as usize);
    let (n_trans, n_eps) = (u64_at(12), u64_at(20));
    if sd == 0 || ad == 0 {
        return Err(Error::Corrupt(format!(
            "zero dimension in header (state {sd}, action {ad})"
        )));
    }
    let mut r = Reader {
        bytes,
        pos: HEADER_LEN,
    };
    let mut episodes = Vec::new();
    let mut total = 0u64;
    for e in 0..n_eps as usize {
        let len = r
            .take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or(Error::TruncatedPayload { episode: e })?;
        let mut rows = Vec::new();
        r.f32s(len * (sd + ad), &mut rows)
            .ok_or(Error::TruncatedPayload { episode: e })?;
        let mut states = Vec::with_capacity((len + 1) * sd);
        let mut actions = Vec::with_capacity(len * ad);
        for row in rows.chunks_exact(sd + ad) {
            states.extend_from_slice(&row[..sd]);
            actions.extend_from_slice(&row[sd..]);
        }
        r.f32s(sd, &mut states)
            .ok_or(Error::TruncatedPayload { episode: e })?;
        total += len as u64;
        episodes.push(Episode { states, actions });
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after the last episode",
            bytes.len() - r.pos
        )));
    }
    if total != n_trans {
        return Err(Error::Corrupt(format!(
            "header declares {n_trans} transitions, payload holds {total}"
        )));
    }
    Dataset::new(sd, ad, hist, episodes, metadata)
}

/// Writes the binary file and its JSON sidecar.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode(dataset)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar = Sidecar {
        format: "wsbc-dataset".into(),
        version: VERSION,
        metadata: dataset.metadata.clone(),
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::json(&side, e))?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

/// Reads a dataset; the sidecar is optional (ingested data may lack one).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let metadata = if side.exists() {
        let raw = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let s: Sidecar = serde_json::from_slice(&raw).map_err(|e| Error::json(&side, e))?;
        s.metadata
    } else {
        None
    };
    decode(&bytes, metadata)
}

/// One row per transition: `episode,t,<state>,<action>,<next state>`.
pub fn export_csv<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    let names: Vec<String> = if dataset.state_dim == STATE_FIELDS.len() {
        STATE_FIELDS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dataset.state_dim).map(|i| format!("s{i}")).collect()
    };
    let mut header = vec!["episode".to_string(), "t".to_string()];
    header.extend(names.iter().cloned());
    header.extend((0..dataset.action_dim).map(|i| format!("a{i}")));
    header.extend(names.iter().map(|n| format!("next_{n}")));
    writeln!(out, "{}", header.join(","))?;
    for e in 0..dataset.n_episodes() {
        for t in 0..dataset.episode_len(e) {
            let cells: Vec<String> = dataset
                .state(e, t)
                .iter()
                .chain(dataset.action(e, t))
                .chain(dataset.state(e, t + 1))
                .map(|x| x.to_string())
                .collect();
            writeln!(out, "{e},{t},{}", cells.join(","))?;
        }
    }
    Ok(())
}
