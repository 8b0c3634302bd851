//! PFM / PGM / PNG readers and writers.
//!
//! PFM files are single-channel (`Pf`), little-endian (scale `-1.0`), with
//! scanlines stored bottom-to-top as the format prescribes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::probability::GaussianDepthMap;

pub fn write_pfm(mut w: impl Write, grid: &Grid<f64>) -> Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    let mut row = Vec::with_capacity(grid.width() * 4);
    for y in (0..grid.height()).rev() {
        row.clear();
        for x in 0..grid.width() {
            row.extend_from_slice(&(*grid.get(x, y) as f32).to_le_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

fn header_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    Ok(tok)
}

/// Reads a single-channel PFM of either endianness.
pub fn read_pfm(r: impl Read) -> Result<Grid<f64>> {
    let mut r = BufReader::new(r);
    let magic = header_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::Format(format!(
            "expected single-channel PFM (Pf), found {magic:?}"
        )));
    }
    let parse_dim = |t: String| {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PFM dimension {t:?}")))
    };
    let width = parse_dim(header_token(&mut r)?)?;
    let height = parse_dim(header_token(&mut r)?)?;
    let scale: f64 = header_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 {
        return Err(Error::Format("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let mut buf = vec![0u8; width * height * 4];
    r.read_exact(&mut buf)?;
    let mut data = vec![0.0; width * height];
    for (row_idx, row) in buf.chunks_exact(width.max(1) * 4).enumerate() {
        let y = height - 1 - row_idx;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            let v = if little {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            data[y * width + x] = v as f64;
        }
    }
    Grid::from_vec(width, height, data)
}

pub fn save_pfm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pfm(&mut w, grid)?;
    w.flush()?;
    Ok(())
}

pub fn load_pfm(path: &Path) -> Result<Grid<f64>> {
    read_pfm(File::open(path)?)
}

/// Paths `<dir>/<name>_mu.pfm` and `<dir>/<name>_sigma.pfm`.
pub fn gaussian_map_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}_mu.pfm")),
        dir.join(format!("{name}_sigma.pfm")),
    )
}

pub fn write_gaussian_map(dir: &Path, name: &str, map: &GaussianDepthMap) -> Result<()> {
    let (mu, sigma) = gaussian_map_paths(dir, name);
    save_pfm(&mu, map.mu())?;
    save_pfm(&sigma, map.sigma())
}

pub fn read_gaussian_map(dir: &Path, name: &str) -> Result<GaussianDepthMap> {
    let (mu, sigma) = gaussian_map_paths(dir, name);
    GaussianDepthMap::new(load_pfm(&mu)?, load_pfm(&sigma)?)
}

/// Binary 8-bit PGM, 255 inside the region.
pub fn write_pgm_mask(mut w: impl Write, mask: &Mask) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_pgm_mask(path: &Path, mask: &Mask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm_mask(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

/// Piecewise-linear approximation of the turbo colormap, `t` in [0, 1].
fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 6] = [
        [48.0, 18.0, 59.0],
        [70.0, 134.0, 251.0],
        [27.0, 229.0, 181.0],
        [164.0, 252.0, 60.0],
        [251.0, 128.0, 34.0],
        [122.0, 4.0, 3.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f).round() as u8;
    }
    out
}

/// Colour-mapped 8-bit PNG of a scalar grid over `[lo, hi]`.
pub fn save_png_colormap(path: &Path, grid: &Grid<f64>, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = image::RgbImage::new(grid.width() as u32, grid.height() as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = *grid.get(x as usize, y as usize);
        *px = image::Rgb(colormap((v - lo) / span));
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_and_row_order() {
        let g = Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = Vec::new();
        write_pfm(&mut bytes, &g).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let body = &bytes[header.len()..];
        // Bottom row first.
        assert_eq!(&body[0..4], &3.0f32.to_le_bytes());
        assert_eq!(&body[12..16], &2.0f32.to_le_bytes());
        assert_eq!(read_pfm(bytes.as_slice()).unwrap(), g);
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.0f32.to_be_bytes());
        bytes.extend_from_slice(&6.0f32.to_be_bytes());
        let g = read_pfm(bytes.as_slice()).unwrap();
        assert_eq!(g.as_slice(), &[6.0, 5.0]);
        assert!(read_pfm(&b"PF\n1 1\n-1.0\n"[..]).is_err());
        assert!(read_pfm(&b"Pf\n1 1\n-1.0\n\x00"[..]).is_err());
        assert!(read_pfm(&b"Pf\nx 1\n-1.0\n"[..]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let m = Grid::from_vec(3, 1, vec![true, false, true]).unwrap();
        let mut bytes = Vec::new();
        write_pgm_mask(&mut bytes, &m).unwrap();
        assert_eq!(bytes, b"P5\n3 1\n255\n\xff\x00\xff".to_vec());
    }

    #[test]
    fn gaussian_map_files() {
        let dir = tempfile::tempdir().unwrap();
        let map = GaussianDepthMap::new(
            Grid::from_fn(4, 3, |x, y| 1.0 + 0.25 * (x + y) as f64),
            Grid::filled(4, 3, 0.125),
        )
        .unwrap();
        write_gaussian_map(dir.path(), "final", &map).unwrap();
        assert!(dir.path().join("final_mu.pfm").exists());
        assert!(dir.path().join("final_sigma.pfm").exists());
        assert_eq!(read_gaussian_map(dir.path(), "final").unwrap(), map);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [48, 18, 59]);
        assert_eq!(colormap(1.0), [122, 4, 3]);
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }
}
