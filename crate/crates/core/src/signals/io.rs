//! PPM (P6), PFM and SPNG raw-grid readers and writers.
//!
//! All multi-byte binary fields are little-endian. Image row 0 is the top row;
//! PFM stores rows bottom-up, so rows are flipped on read and write.

use std::path::Path;

use super::GridSignal;
use crate::{Error, FormatError, Result};

const SPNG_MAGIC: &[u8; 4] = b"SPNG";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits the whitespace-separated ASCII header tokens of a netpbm-style file.
/// Returns the tokens and the offset of the first payload byte (one
/// whitespace byte after the last token).
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), FormatError> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(FormatError::MalformedHeader("unexpected end of header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(FormatError::MalformedHeader("missing payload separator".into()));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, what: &str) -> Result<usize, FormatError> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(FormatError::MalformedHeader(format!("bad {what} {tok:?}"))),
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<GridSignal> {
    let (tok, start) = header_tokens(bytes, 4)?;
    let w = parse_dim(&tok[1], "width")?;
    let h = parse_dim(&tok[2], "height")?;
    let maxval: u32 = tok[3]
        .parse()
        .map_err(|_| FormatError::MalformedHeader(format!("bad maxval {:?}", tok[3])))?;
    if maxval == 0 {
        return Err(FormatError::MalformedHeader("maxval 0".into()).into());
    }
    if maxval > 255 {
        return Err(FormatError::UnsupportedMaxval(maxval).into());
    }
    let expected = w * h * 3;
    let payload = &bytes[start..];
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: payload.len(),
        }
        .into());
    }
    let scale = maxval as f32;
    let data = payload[..expected].iter().map(|&b| b as f32 / scale).collect();
    GridSignal::new(&[w, h], 3, data)
}

fn decode_pfm(bytes: &[u8]) -> Result<GridSignal> {
    let (tok, start) = header_tokens(bytes, 4)?;
    let channels = if tok[0] == "PF" { 3 } else { 1 };
    let w = parse_dim(&tok[1], "width")?;
    let h = parse_dim(&tok[2], "height")?;
    let scale: f32 = tok[3]
        .parse()
        .map_err(|_| FormatError::MalformedHeader(format!("bad scale {:?}", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::MalformedHeader(format!("bad scale {scale}")).into());
    }
    let little = scale < 0.0;
    let row = w * channels;
    let expected = row * h * 4;
    let payload = &bytes[start..];
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: payload.len(),
        }
        .into());
    }
    let values: Vec<f32> = payload[..expected]
        .chunks_exact(4)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut data = Vec::with_capacity(values.len());
    for y in (0..h).rev() {
        data.extend_from_slice(&values[y * row..(y + 1) * row]);
    }
    GridSignal::new(&[w, h], channels, data)
}

/// Reads a P6 PPM or a PFM image (detected from the magic bytes).
pub fn load_image(path: impl AsRef<Path>) -> Result<GridSignal> {
    let path = path.as_ref();
    let bytes = read(path)?;
    match bytes.get(..2) {
        Some(b"P6") => decode_ppm(&bytes),
        Some(b"PF") | Some(b"Pf") => decode_pfm(&bytes),
        _ => Err(FormatError::BadMagic {
            expected: "P6, PF or Pf".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
        }
        .into()),
    }
}

fn image_dims(signal: &GridSignal) -> Result<(usize, usize)> {
    if signal.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "images must be 2D, got a {}D signal",
            signal.dim()
        )));
    }
    Ok((signal.resolution()[0], signal.resolution()[1]))
}

pub(crate) fn encode_pfm(signal: &GridSignal) -> Result<Vec<u8>> {
    let (w, h) = image_dims(signal)?;
    let c = signal.channels();
    let tag = match c {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::Unsupported(format!("PFM needs 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    let row = w * c;
    for y in (0..h).rev() {
        for v in &signal.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) fn encode_ppm(signal: &GridSignal) -> Result<Vec<u8>> {
    let (w, h) = image_dims(signal)?;
    let c = signal.channels();
    if c != 1 && c != 3 {
        return Err(Error::Unsupported(format!("PPM needs 1 or 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for px in signal.data().chunks_exact(c) {
        if c == 1 {
            out.extend_from_slice(&[q(px[0]); 3]);
        } else {
            out.extend(px.iter().map(|&v| q(v)));
        }
    }
    Ok(out)
}

/// Writes a 2D signal as PPM (`.ppm`, 8-bit, values clamped to `[0,1]`) or
/// PFM (any other extension).
pub fn write_image(signal: &GridSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ppm") => encode_ppm(signal)?,
        _ => encode_pfm(signal)?,
    };
    write(path, &bytes)
}

pub(crate) fn decode_grid(bytes: &[u8]) -> Result<GridSignal> {
    let need = |n: usize| -> Result<(), FormatError> {
        if bytes.len() < n {
            Err(FormatError::Truncated {
                expected: n,
                actual: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(8)?;
    if &bytes[..4] != SPNG_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "SPNG".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        }
        .into());
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let dims = u32_at(4) as usize;
    if !(1..=3).contains(&dims) {
        return Err(FormatError::MalformedHeader(format!("grid dimension {dims}")).into());
    }
    let header = 8 + 4 * dims + 8;
    need(header)?;
    let res: Vec<usize> = (0..dims).map(|a| u32_at(8 + 4 * a) as usize).collect();
    let channels = u32_at(8 + 4 * dims) as usize;
    let extension = f32::from_le_bytes(bytes[12 + 4 * dims..16 + 4 * dims].try_into().unwrap());
    if res.contains(&0) || channels == 0 {
        return Err(FormatError::MalformedHeader("zero resolution or channel count".into()).into());
    }
    let count = res.iter().product::<usize>() * channels;
    let expected = header + 4 * count;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        }
        .into());
    }
    let data = bytes[header..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut g = GridSignal::new(&res, channels, data)?;
    g.extension = extension;
    Ok(g)
}

pub(crate) fn encode_grid(signal: &GridSignal) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * signal.data().len());
    out.extend_from_slice(SPNG_MAGIC);
    out.extend_from_slice(&(signal.dim() as u32).to_le_bytes());
    for &r in signal.resolution() {
        out.extend_from_slice(&(r as u32).to_le_bytes());
    }
    out.extend_from_slice(&(signal.channels() as u32).to_le_bytes());
    out.extend_from_slice(&signal.extension.to_le_bytes());
    for v in signal.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads an SPNG raw grid: `"SPNG"`, `u32` dims, `u32` resolution per axis,
/// `u32` channels, `f32` extension factor, then `f32` samples.
pub fn load_grid(path: impl AsRef<Path>) -> Result<GridSignal> {
    let path = path.as_ref();
    decode_grid(&read(path)?)
}

pub fn write_grid(signal: &GridSignal, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_grid(signal))
}

/// Reads any supported signal file, dispatching on the magic bytes.
pub fn load_signal(path: impl AsRef<Path>) -> Result<GridSignal> {
    let path = path.as_ref();
    let bytes = read(path)?;
    if bytes.starts_with(SPNG_MAGIC) {
        decode_grid(&bytes)
    } else {
        load_image(path)
    }
}

/// Writes `.ppm`/`.pfm` as images and everything else as SPNG.
pub fn write_signal(signal: &GridSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "ppm" || e == "pfm" => write_image(signal, path),
        _ => write_grid(signal, path),
    }
}
