//! Portable float grids (PFM, single channel).

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `data` (row-major, top row first) as a little-endian `Pf` file.
pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::invalid("grid data does not match its dimensions"));
    }
    let mut buf = Vec::with_capacity(32 + data.len() * 4);
    write!(buf, "Pf\n{width} {height}\n-1.0\n")?;
    // PFM stores rows bottom-up
    for row in data.chunks_exact(width.max(1)).rev() {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a single-channel PFM written by [`write_pfm`].
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path)?;
    let name = path.display().to_string();
    let mut pos = 0;
    let mut header = Vec::new();
    for _ in 0..3 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(&name, header.len() + 1, "truncated header"))?;
        header.push(String::from_utf8_lossy(&bytes[pos..pos + end]).to_string());
        pos += end + 1;
    }
    if header[0] != "Pf" {
        return Err(Error::parse(&name, 1, "not a single-channel PFM"));
    }
    let dims: Vec<usize> = header[1]
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(&name, 2, "bad dimensions")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::parse(&name, 2, "bad dimensions"));
    }
    let scale: f32 = header[2].trim().parse().map_err(|_| Error::parse(&name, 3, "bad scale"))?;
    let (w, h) = (dims[0], dims[1]);
    let body = &bytes[pos..];
    if body.len() != w * h * 4 {
        return Err(Error::parse(&name, 4, "payload size mismatch"));
    }
    let mut rows: Vec<Vec<f32>> = body
        .chunks_exact(4 * w.max(1))
        .map(|r| {
            r.chunks_exact(4)
                .map(|b| {
                    let a = [b[0], b[1], b[2], b[3]];
                    if scale < 0.0 {
                        f32::from_le_bytes(a)
                    } else {
                        f32::from_be_bytes(a)
                    }
                })
                .collect()
        })
        .collect();
    rows.reverse();
    Ok((w, h, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pfm");
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 1.0).collect();
        write_pfm(&p, 4, 3, &data).unwrap();
        assert_eq!(read_pfm(&p).unwrap(), (4, 3, data));
    }
}
