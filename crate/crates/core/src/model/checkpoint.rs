//! Binary checkpoint layout (all integers and reals little-endian):
//!
//! ```text
//! "SPNF" | u32 version
//! u32 dim | u32 m | f64 scale | u64 seed | u64 basis checksum
//! u32 channels | u32 flags | u32 layer count L | L+1 × u32 widths
//! u32 meta length | meta (UTF-8 JSON)
//! f32 parameters, layer by layer: weights row-major, then biases
//! u64 checksum of every preceding byte
//! ```

use std::path::Path;

use super::{FieldModel, Mlp};
use crate::encoding::init_basis;
use crate::{checksum64, Error, FormatError, Result};

const MAGIC: &[u8; 4] = b"SPNF";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_MODULATE: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated {
                expected: end,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl FieldModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let widths = self.mlp.widths();
        let mut out = Vec::with_capacity(64 + self.meta.len() + 4 * self.mlp.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.basis.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.basis.count() as u32).to_le_bytes());
        out.extend_from_slice(&self.basis.scale().to_le_bytes());
        out.extend_from_slice(&self.basis.seed().to_le_bytes());
        out.extend_from_slice(&self.basis.checksum().to_le_bytes());
        out.extend_from_slice(&(self.channels() as u32).to_le_bytes());
        let flags = if self.modulate { FLAG_MODULATE } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&((widths.len() - 1) as u32).to_le_bytes());
        for &w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        for p in self.mlp.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let sum = checksum64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: "SPNF".into(),
                found: String::from_utf8_lossy(magic).into_owned(),
            }
            .into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FormatError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let scale = r.f64()?;
        let seed = r.u64()?;
        let stored_basis = r.u64()?;
        let channels = r.u32()? as usize;
        let flags = r.u32()?;
        let layers = r.u32()? as usize;
        if layers == 0 || layers > 1024 {
            return Err(FormatError::MalformedHeader("implausible layer count".into()).into());
        }
        let widths = (0..=layers)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let meta_len = r.u32()? as usize;
        let meta = r.take(meta_len)?;
        let n_params: usize = widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        let total = r.pos + 4 * n_params + 8;
        if bytes.len() < total {
            return Err(FormatError::Truncated {
                expected: total,
                actual: bytes.len(),
            }
            .into());
        }
        if bytes.len() > total {
            return Err(FormatError::MalformedHeader(format!(
                "{} trailing bytes after checksum",
                bytes.len() - total
            ))
            .into());
        }
        let body = &bytes[..total - 8];
        let stored = u64::from_le_bytes(bytes[total - 8..].try_into().unwrap());
        let computed = checksum64(body);
        if stored != computed {
            return Err(FormatError::ChecksumMismatch { stored, computed }.into());
        }
        if widths[0] != 2 * count || widths[layers] != channels || widths.contains(&0) {
            return Err(FormatError::MalformedHeader(format!(
                "widths {widths:?} inconsistent with m = {count}, channels = {channels}"
            ))
            .into());
        }
        let meta = String::from_utf8(meta.to_vec())
            .map_err(|_| FormatError::MalformedHeader("metadata is not UTF-8".into()))?;
        let params: Vec<f32> = r
            .take(4 * n_params)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let basis = init_basis(dim, count, scale, seed)?;
        if basis.checksum() != stored_basis {
            return Err(FormatError::BasisMismatch {
                stored: stored_basis,
                computed: basis.checksum(),
            }
            .into());
        }
        Ok(FieldModel {
            basis,
            mlp: Mlp::from_params(&widths, params)?,
            modulate: flags & FLAG_MODULATE != 0,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
