//! Raster file formats.
//!
//! * PNG: 8-bit grayscale, values mapped to `[0, 1]` by `/255`.
//! * Raw grid (`.grid`): magic `CTXG`, `u32` rank, `rank` × `u32` dims, then
//!   row-major little-endian `f32` values. All integers little-endian.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const GRID_MAGIC: &[u8; 4] = b"CTXG";

/// A dense row-major array of any rank.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::input(format!("grid dims {dims:?} do not match {} values", data.len())));
        }
        Ok(Self { dims, data })
    }
}

pub fn read_png_gray(path: &Path) -> Result<Grid> {
    let file = std::fs::File::open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let bytes = &buf[..info.buffer_size()];
    let data = (0..w * h)
        .map(|i| {
            let px = &bytes[i * channels..(i + 1) * channels];
            let v = if channels >= 3 {
                (px[0] as f32 + px[1] as f32 + px[2] as f32) / 3.0
            } else {
                px[0] as f32
            };
            v / 255.0
        })
        .collect();
    Grid::new(vec![h, w], data)
}

/// Writes a `[0, 1]` raster as 8-bit grayscale, rounding to the nearest level.
pub fn write_png_gray(path: &Path, height: usize, width: usize, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let file = std::fs::File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

pub fn write_grid<W: Write>(mut out: W, grid: &Grid) -> Result<()> {
    out.write_all(GRID_MAGIC)?;
    out.write_all(&(grid.dims.len() as u32).to_le_bytes())?;
    for &d in &grid.dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(grid.data.len() * 4);
    for v in &grid.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(mut input: R) -> Result<Grid> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::input("not a raw grid file"));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank == 0 || rank > 4 {
        return Err(Error::input(format!("unsupported grid rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        input.read_exact(&mut b4)?;
        dims.push(u32::from_le_bytes(b4) as usize);
    }
    let n: usize = dims.iter().product();
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Grid::new(dims, data)
}

/// Reads a PNG or raw grid, chosen by file extension.
pub fn read_raster(path: &Path) -> Result<Grid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_png_gray(path),
        Some("grid") => read_grid(BufReader::new(std::fs::File::open(path)?)),
        _ => Err(Error::input(format!("unknown raster format: {}", path.display()))),
    }
}
