use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    dynamic_range: f64,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, dynamic_range: f64) -> Result<Self> {
        if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
            return Err(Error::InvalidArgument(format!("dynamic range must be positive, got {dynamic_range}")));
        }
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image with {} pixels",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(**p >= 0.0 && **p <= dynamic_range)) {
            return Err(Error::Data(format!("pixel {p} outside [0, {dynamic_range}]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
            dynamic_range,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn dynamic_range(&self) -> f64 {
        self.dynamic_range
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Interleaved RGB to luma.
pub fn luminance(rgb: &[f64]) -> Result<Vec<f64>> {
    if !rgb.len().is_multiple_of(3) {
        return Err(Error::Shape(format!("RGB buffer length {} is not a multiple of 3", rgb.len())));
    }
    Ok(rgb
        .chunks_exact(3)
        .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
        .collect())
}

/// Pearson correlation between two flattened images.
pub fn pixcorr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("pixel counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("PixCorr needs at least 2 pixels".into()));
    }
    pearson(a, b).ok_or_else(|| Error::Degenerate("PixCorr of a constant image".into()))
}

/// `None` when either side has zero variance.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r between matching columns of two equally shaped matrices.
pub fn pearson_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.nrows() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 rows".into()));
    }
    (0..a.ncols())
        .map(|j| {
            let x: Vec<f64> = a.column(j).iter().copied().collect();
            let y: Vec<f64> = b.column(j).iter().copied().collect();
            pearson(&x, &y).ok_or_else(|| Error::Degenerate(format!("column {j} is constant")))
        })
        .collect()
}

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad PGM header field {:?}", String::from_utf8_lossy(tok))))
}

/// Binary 8-bit PGM (P5). The dynamic range is the file's maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let width = pgm_number(bytes, &mut pos)?;
    let height = pgm_number(bytes, &mut pos)?;
    let maxval = pgm_number(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != width * height {
        return Err(Error::Length(format!(
            "PGM declares {width}x{height} but raster has {} bytes",
            raster.len()
        )));
    }
    GrayImage::new(height, width, raster.iter().map(|&b| b as f64).collect(), maxval as f64)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

/// Pixels are rounded to the nearest byte; range must be at most 255.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if img.dynamic_range() > 255.0 {
        return Err(Error::InvalidArgument("PGM output supports dynamic range up to 255".into()));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), img.dynamic_range().round() as u32).into_bytes();
    out.extend(img.pixels().iter().map(|p| p.round() as u8));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
