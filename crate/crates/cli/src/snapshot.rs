//! Binary snapshot streams.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8   "Z2SNAP01"
//! version   u16 1
//! dim       u8
//! basis     u8  0 = X, 1 = Z
//! size      u32
//! count     u64
//! manifest  32  SHA-256 of the canonical manifest
//! payload   count * ceil(links / 8) bytes
//! checksum  32  SHA-256 of everything above
//! ```
//!
//! Each snapshot packs link `l` into bit `l % 8` of byte `l / 8`, with links
//! in site-major, direction-minor order; a set bit is spin `-1`.

use std::io::{Read, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use z2perc::{Basis, GaugeConfig, Lattice};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"Z2SNAP01";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8 + 2 + 1 + 1 + 4 + 8 + 32;

#[derive(Clone, Debug)]
pub struct SnapshotFile {
    pub basis: Basis,
    pub lattice: Arc<Lattice>,
    pub manifest_hash: [u8; 32],
    pub snapshots: Vec<GaugeConfig>,
}

fn bytes_per_snapshot(lat: &Lattice) -> usize {
    lat.link_count().div_ceil(8)
}

fn pack(cfg: &GaugeConfig, out: &mut Vec<u8>) {
    let n = cfg.link_count();
    for (i, w) in cfg.words().iter().enumerate() {
        for b in 0..8 {
            if i * 64 + b * 8 >= n {
                break;
            }
            out.push((w >> (8 * b)) as u8);
        }
    }
}

fn unpack(lat: &Arc<Lattice>, basis: Basis, bytes: &[u8]) -> Result<GaugeConfig> {
    let mut words = vec![0u64; lat.link_count().div_ceil(64)];
    for (i, &b) in bytes.iter().enumerate() {
        words[i / 8] |= (b as u64) << (8 * (i % 8));
    }
    GaugeConfig::from_words(lat, basis, words).map_err(|e| CliError::Validation(format!("corrupt snapshot: {e}")))
}

impl PartialEq for SnapshotFile {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
            && self.lattice.dim() == other.lattice.dim()
            && self.lattice.size() == other.lattice.size()
            && self.manifest_hash == other.manifest_hash
            && self.snapshots == other.snapshots
    }
}

impl SnapshotFile {
    pub fn new(basis: Basis, lattice: Arc<Lattice>, manifest_hash: [u8; 32]) -> Self {
        Self {
            basis,
            lattice,
            manifest_hash,
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, cfg: &GaugeConfig) -> Result<()> {
        let lat = cfg.lattice();
        if cfg.basis() != self.basis || lat.dim() != self.lattice.dim() || lat.size() != self.lattice.size() {
            return Err(CliError::Validation("snapshot does not match the stream's lattice or basis".into()));
        }
        self.snapshots.push(cfg.clone());
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let lat = &self.lattice;
        let mut out = Vec::with_capacity(HEADER_LEN + self.snapshots.len() * bytes_per_snapshot(lat) + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(lat.dim() as u8);
        out.push(self.basis.code());
        out.extend_from_slice(&(lat.size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.snapshots.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.manifest_hash);
        for cfg in &self.snapshots {
            pack(cfg, &mut out);
        }
        let sum: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| CliError::Validation(m);
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(bad("not a snapshot file (bad magic)".into()));
        }
        if bytes.len() < HEADER_LEN + 32 {
            return Err(bad(format!("checksum error: file truncated to {} bytes", bytes.len())));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != VERSION {
            return Err(bad(format!("unsupported snapshot version {version}")));
        }
        let dim = bytes[10] as usize;
        let basis = Basis::from_code(bytes[11]).ok_or_else(|| bad(format!("unknown basis code {}", bytes[11])))?;
        let size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let manifest_hash: [u8; 32] = bytes[24..56].try_into().unwrap();
        let lattice = Arc::new(Lattice::new(dim, size).map_err(|e| bad(format!("bad header: {e}")))?);
        let per = bytes_per_snapshot(&lattice);
        let expected = (count as usize)
            .checked_mul(per)
            .and_then(|p| p.checked_add(HEADER_LEN + 32))
            .ok_or_else(|| bad("bad header: snapshot count overflows".into()))?;
        let body = bytes.len() - 32;
        let sum: [u8; 32] = Sha256::digest(&bytes[..body]).into();
        if bytes.len() != expected {
            return Err(bad(format!(
                "checksum error: header promises {count} snapshots ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        if sum[..] != bytes[body..] {
            return Err(bad("checksum error: contents do not match the stored SHA-256".into()));
        }
        let snapshots = bytes[HEADER_LEN..body]
            .chunks_exact(per)
            .map(|chunk| unpack(&lattice, basis, chunk))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            basis,
            lattice,
            manifest_hash,
            snapshots,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let lat = Arc::new(Lattice::new(2, 3).unwrap());
        let mut f = SnapshotFile::new(Basis::X, Arc::clone(&lat), [7; 32]);
        f.push(&GaugeConfig::vacuum(&lat, Basis::X)).unwrap();
        f.push(&GaugeConfig::from_strings(&lat, Basis::X, [0, 9, 17]).unwrap()).unwrap();
        let bytes = f.to_bytes();
        // 18 links -> 3 bytes per snapshot.
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 3 + 32);
        assert_eq!(&bytes[HEADER_LEN + 3..HEADER_LEN + 6], &[0b1, 0b10, 0b10]);
        let back = SnapshotFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let lat = Arc::new(Lattice::new(2, 4).unwrap());
        let mut f = SnapshotFile::new(Basis::Z, Arc::clone(&lat), [0; 32]);
        f.push(&GaugeConfig::from_strings(&lat, Basis::Z, [3]).unwrap()).unwrap();
        let bytes = f.to_bytes();
        let err = SnapshotFile::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN] ^= 1;
        assert!(SnapshotFile::from_bytes(&flipped).unwrap_err().to_string().contains("checksum"));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(SnapshotFile::from_bytes(&magic).is_err());
        assert!(f.push(&GaugeConfig::vacuum(&lat, Basis::X)).is_err());
    }
}
