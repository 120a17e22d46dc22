//! Binary Q-table files.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                         |
//! |-------:|-----:|-----------------------------------------------|
//! | 0      | 8    | magic `AUIRLQT\0`                             |
//! | 8      | 2    | format version (`1`)                          |
//! | 10     | 32   | domain hash (SHA-256)                         |
//! | 42     | 8    | state count `S` (u64)                         |
//! | 50     | 8    | action count `A` (u64)                        |
//! | 58     | 8    | alpha (f64)                                   |
//! | 66     | 8    | gamma (f64)                                   |
//! | 74     | 8    | episodes (u64)                                |
//! | 82     | 8    | eps_start (f64)                               |
//! | 90     | 8    | eps_min (f64)                                 |
//! | 98     | 8    | decay_episodes (u64)                          |
//! | 106    | 8    | sigma (f64)                                   |
//! | 114    | 8    | bonus_value (f64)                             |
//! | 122    | 4    | bonus_step_threshold (u32)                    |
//! | 126    | 1    | reward timing (0 terminal, 1 every step)      |
//! | 127    | 4    | max_steps (u32)                               |
//! | 131    | 8    | seed (u64)                                    |
//! | 139    | 8    | episodes trained (u64)                        |
//! | 147    | 8    | created, unix seconds (i64)                   |
//! | 155    | 4    | length `L` of the domain JSON (u32)           |
//! | 159    | L    | domain section as compact UTF-8 JSON          |
//! | 159+L  | 8·S·A| Q-values, row-major (state-major) f64         |
//!
//! The file must end exactly after the last value.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::agent::{Hyperparams, QTable, QTableMeta};
use crate::domain::{DomainHash, DomainSpec};
use crate::error::{Error, Result};
use crate::reward::{RewardParams, RewardTiming};

pub const MAGIC: [u8; 8] = *b"AUIRLQT\0";
pub const VERSION: u16 = 1;

/// Refuse to allocate tables larger than this many entries.
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_qtable<W: Write>(q: &QTable, domain: &DomainSpec, mut w: W) -> Result<()> {
    q.check_domain(domain)?;
    if let Some(i) = q.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("q-table entry {i}")));
    }
    let m = &q.meta;
    let domain_json = serde_json::to_vec(&domain.to_json())?;
    let mut buf = Vec::with_capacity(160 + domain_json.len() + q.values().len() * 8);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&m.domain_hash.0);
    buf.extend_from_slice(&(q.states() as u64).to_le_bytes());
    buf.extend_from_slice(&(q.actions() as u64).to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.alpha.to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.gamma.to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.episodes.to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.eps_start.to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.eps_min.to_le_bytes());
    buf.extend_from_slice(&m.hyperparams.decay_episodes.to_le_bytes());
    buf.extend_from_slice(&m.reward.sigma.to_le_bytes());
    buf.extend_from_slice(&m.reward.bonus_value.to_le_bytes());
    buf.extend_from_slice(&m.reward.bonus_step_threshold.to_le_bytes());
    buf.push(m.reward.timing.code());
    buf.extend_from_slice(&m.max_steps.to_le_bytes());
    buf.extend_from_slice(&m.seed.to_le_bytes());
    buf.extend_from_slice(&m.episodes_trained.to_le_bytes());
    buf.extend_from_slice(&m.created_unix.to_le_bytes());
    buf.extend_from_slice(&(domain_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&domain_json);
    for v in q.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<q-table writer>", e))?;
    w.flush().map_err(|e| Error::io("<q-table writer>", e))
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Corrupt(format!("truncated while reading {what}")))?;
        Ok(b)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }
}

/// Read a Q-table and the domain embedded in it. When `expected` is given the
/// embedded domain must hash to the same identity.
pub fn read_qtable<R: Read>(r: R, expected: Option<&DomainSpec>) -> Result<(QTable, DomainSpec)> {
    let mut c = Cursor { inner: r };
    if c.bytes::<8>("magic")? != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.bytes("version")?);
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported version {version}")));
    }
    let domain_hash = DomainHash(c.bytes("domain hash")?);
    if let Some(d) = expected {
        if d.hash() != domain_hash {
            return Err(Error::HashMismatch {
                expected: d.hash().to_string(),
                found: domain_hash.to_string(),
            });
        }
    }
    let states = c.u64("state count")?;
    let actions = c.u64("action count")?;
    let hyperparams = Hyperparams {
        alpha: c.f64("alpha")?,
        gamma: c.f64("gamma")?,
        episodes: c.u64("episodes")?,
        eps_start: c.f64("eps_start")?,
        eps_min: c.f64("eps_min")?,
        decay_episodes: c.u64("decay_episodes")?,
    };
    let sigma = c.f64("sigma")?;
    let bonus_value = c.f64("bonus_value")?;
    let bonus_step_threshold = c.u32("bonus_step_threshold")?;
    let timing = RewardTiming::from_code(c.bytes::<1>("reward timing")?[0])
        .ok_or_else(|| Error::Corrupt("unknown reward timing".into()))?;
    let max_steps = c.u32("max_steps")?;
    let seed = c.u64("seed")?;
    let episodes_trained = c.u64("episodes trained")?;
    let created_unix = i64::from_le_bytes(c.bytes("created")?);
    let json_len = c.u32("domain length")? as usize;
    if json_len > 1 << 24 {
        return Err(Error::Corrupt("domain section too large".into()));
    }
    let mut json = vec![0u8; json_len];
    c.inner
        .read_exact(&mut json)
        .map_err(|_| Error::Corrupt("truncated while reading domain".into()))?;
    let section: serde_json::Value = serde_json::from_slice(&json)
        .map_err(|e| Error::Corrupt(format!("domain section: {e}")))?;
    let domain = DomainSpec::from_json(&section, "qtable.domain")
        .map_err(|e| Error::Corrupt(format!("domain section: {e}")))?;
    if domain.hash() != domain_hash {
        return Err(Error::Corrupt("embedded domain does not match its hash".into()));
    }
    if states != domain.state_count() as u64 || actions != domain.action_count() as u64 {
        return Err(Error::ShapeMismatch {
            expected_states: domain.state_count(),
            expected_actions: domain.action_count(),
            states: states as usize,
            actions: actions as usize,
        });
    }
    let entries = states
        .checked_mul(actions)
        .filter(|&n| n <= MAX_ENTRIES)
        .ok_or_else(|| Error::Corrupt("table too large".into()))? as usize;
    let mut raw = vec![0u8; entries * 8];
    c.inner
        .read_exact(&mut raw)
        .map_err(|_| Error::Corrupt("truncated inside the value matrix".into()))?;
    let mut trailing = [0u8; 1];
    match c.inner.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Corrupt("trailing bytes after value matrix".into())),
        Err(e) => return Err(Error::io("<q-table reader>", e)),
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Corrupt("non-finite q-value".into()));
    }
    let meta = QTableMeta {
        domain_hash,
        hyperparams,
        reward: RewardParams {
            sigma,
            bonus_value,
            bonus_step_threshold,
            timing,
        },
        max_steps,
        seed,
        episodes_trained,
        created_unix,
    };
    Ok((
        QTable::from_parts(states as usize, actions as usize, values, meta),
        domain,
    ))
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn save_qtable(q: &QTable, domain: &DomainSpec, path: &Path) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let result = File::create(&tmp)
        .map_err(|e| Error::io(&tmp, e))
        .and_then(|f| write_qtable(q, domain, BufWriter::new(f)))
        .and_then(|_| fs::rename(&tmp, path).map_err(|e| Error::io(path, e)));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn load_qtable(path: &Path, domain: &DomainSpec) -> Result<QTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_qtable(BufReader::new(f), Some(domain)).map(|(q, _)| q)
}

/// Load without an active domain; returns the embedded one.
pub fn load_qtable_with_domain(path: &Path) -> Result<(QTable, DomainSpec)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_qtable(BufReader::new(f), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{paper_domain, VariableSpec};

    fn sample() -> (QTable, DomainSpec) {
        let d = paper_domain();
        let meta = QTableMeta {
            domain_hash: d.hash(),
            hyperparams: Hyperparams::default(),
            reward: RewardParams::default().with_sigma(0.25),
            max_steps: 25,
            seed: 99,
            episodes_trained: 1234,
            created_unix: 1_700_000_000,
        };
        let mut q = QTable::zeros(&d, meta).unwrap();
        for s in 0..q.states() {
            for a in 0..q.actions() {
                q.set(s, a, ((s * 31 + a * 7) % 97) as f64 / 13.0 - 2.0);
            }
        }
        (q, d)
    }

    fn bytes_of(q: &QTable, d: &DomainSpec) -> Vec<u8> {
        let mut buf = Vec::new();
        write_qtable(q, d, &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let (q, d) = sample();
        let buf = bytes_of(&q, &d);
        let (back, embedded) = read_qtable(buf.as_slice(), Some(&d)).unwrap();
        assert_eq!(embedded.hash(), d.hash());
        assert_eq!(back.meta, q.meta);
        assert!(back
            .values()
            .iter()
            .zip(q.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(bytes_of(&back, &d), buf);
    }

    #[test]
    fn header_offsets_match_layout() {
        let (q, d) = sample();
        let buf = bytes_of(&q, &d);
        assert_eq!(&buf[..8], b"AUIRLQT\0");
        assert_eq!(&buf[10..42], &d.hash().0);
        assert_eq!(u64::from_le_bytes(buf[42..50].try_into().unwrap()), 8100);
        assert_eq!(u64::from_le_bytes(buf[50..58].try_into().unwrap()), 14);
        assert_eq!(f64::from_le_bytes(buf[106..114].try_into().unwrap()), 0.25);
        assert_eq!(u64::from_le_bytes(buf[131..139].try_into().unwrap()), 99);
        let len = u32::from_le_bytes(buf[155..159].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 159 + len + 8100 * 14 * 8);
    }

    #[test]
    fn wrong_domain_is_rejected() {
        let (q, d) = sample();
        let buf = bytes_of(&q, &d);
        let other = DomainSpec::new("other", vec![VariableSpec::new("x", &["a", "b"])]).unwrap();
        assert!(matches!(
            read_qtable(buf.as_slice(), Some(&other)),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn truncation_and_garbage_are_corrupt() {
        let (q, d) = sample();
        let buf = bytes_of(&q, &d);
        let mid = buf.len() - 8100 * 14 * 4;
        assert!(matches!(
            read_qtable(&buf[..mid], Some(&d)),
            Err(Error::Corrupt(_))
        ));
        assert!(matches!(read_qtable(&buf[..20], Some(&d)), Err(Error::Corrupt(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_qtable(extra.as_slice(), Some(&d)), Err(Error::Corrupt(_))));
        let mut bad_magic = buf;
        bad_magic[0] = b'X';
        assert!(matches!(read_qtable(bad_magic.as_slice(), None), Err(Error::Corrupt(_))));
    }

    #[test]
    fn non_finite_tables_are_not_saved() {
        let (mut q, d) = sample();
        q.set(3, 3, f64::INFINITY);
        assert!(matches!(write_qtable(&q, &d, Vec::new()), Err(Error::NonFinite(_))));
    }
}
