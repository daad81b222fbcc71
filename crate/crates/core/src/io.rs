//! Binary field files and their JSON sidecars.
//!
//! Layout, little-endian: magic `SPHF`, version `u32`, dimension `u32`,
//! dims `u32 x d`, `h: f64`, origin `f64 x d`, then the phases in node order
//! (first axis fastest).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeField};

pub const MAGIC: &[u8; 4] = b"SPHF";
pub const VERSION: u32 = 1;

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_field(field: &LatticeField, out: &mut impl Write) -> Result<()> {
    let phases = field.phases().ok_or_else(|| format("only S^1 fields are stored as phases"))?;
    let l = field.lattice();
    let mut buf = Vec::with_capacity(16 + 20 * l.dim + 8 * phases.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(l.dim as u32).to_le_bytes());
    for n in &l.dims[..l.dim] {
        buf.extend_from_slice(&(*n as u32).to_le_bytes());
    }
    buf.extend_from_slice(&l.h.to_le_bytes());
    for o in &l.origin[..l.dim] {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    for t in phases {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| format(e.to_string()))
}

struct Cursor<'a> {
    data: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let bytes = self.data.get(self.at..end).ok_or_else(|| format(format!("truncated field file at byte {}", self.at)))?;
        self.at = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_field(input: &mut impl Read) -> Result<LatticeField> {
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(|e| format(e.to_string()))?;
    let mut c = Cursor { data: &data, at: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(format("missing SPHF magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format(format!("unsupported field file version {version}")));
    }
    let d = c.u32()? as usize;
    if !(2..=3).contains(&d) {
        return Err(format(format!("unsupported dimension {d}")));
    }
    let dims: Vec<usize> = (0..d).map(|_| c.u32().map(|n| n as usize)).collect::<Result<_>>()?;
    let h = c.f64()?;
    let origin: Vec<f64> = (0..d).map(|_| c.f64()).collect::<Result<_>>()?;
    let l = Lattice::new(&dims, &origin, h)?;
    let count = l.node_count();
    if data.len() - c.at != 8 * count {
        return Err(format(format!("payload holds {} bytes, expected {}", data.len() - c.at, 8 * count)));
    }
    let phases = (0..count).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    LatticeField::from_phases(l, phases)
}

/// Metadata stored next to a field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub target: String,
    pub dim: usize,
    pub dims: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    /// Operation that produced the field.
    pub source: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl FieldMeta {
    pub fn new(field: &LatticeField, source: &str, params: serde_json::Value) -> Self {
        let l = field.lattice();
        FieldMeta {
            target: "circle".into(),
            dim: l.dim,
            dims: l.dims[..l.dim].to_vec(),
            h: l.h,
            origin: l.origin[..l.dim].to_vec(),
            source: source.into(),
            params,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and `path.json`.
pub fn save_field(field: &LatticeField, path: &Path, meta: &FieldMeta) -> Result<()> {
    let io = |e: std::io::Error| format(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    write_field(field, &mut f)?;
    f.flush().map_err(io)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n").map_err(io)
}

pub fn load_field(path: &Path) -> Result<LatticeField> {
    let f = std::fs::File::open(path).map_err(|e| format(format!("{}: {e}", path.display())))?;
    read_field(&mut std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let l = Lattice::new(&[5, 4, 3], &[-0.25, 0.5, 1.0], 0.125).unwrap();
        let f = LatticeField::sample(l, |x| (3.0 * x[0] - x[1] + 0.7 * x[2]).sin() * 3.0).unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        assert_eq!(buf.len(), 4 + 4 + 4 + 12 + 8 + 24 + 8 * 60);
        let g = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn rejects_corruption() {
        let l = Lattice::new(&[4, 4], &[0.0, 0.0], 0.25).unwrap();
        let f = LatticeField::constant(l, 0.3);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field(&mut bad.as_slice()).is_err());
        assert!(read_field(&mut &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_field(&mut bad.as_slice()).is_err());
        let v = LatticeField::from_vectors(l, vec![[1.0, 0.0]; 16]).unwrap();
        assert!(write_field(&v, &mut Vec::new()).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = std::env::temp_dir().join(format!("gammaflow-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let l = Lattice::new(&[6, 6], &[0.0, 0.0], 0.2).unwrap();
        let f = LatticeField::sample(l, |x| x[0] - x[1]).unwrap();
        let path = dir.join("u.sphf");
        let meta = FieldMeta::new(&f, "test", serde_json::json!({"p": 1.5}));
        save_field(&f, &path, &meta).unwrap();
        assert_eq!(load_field(&path).unwrap(), f);
        let back: FieldMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(back, meta);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
