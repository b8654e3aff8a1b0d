//! File formats: binary PGM, raw little-endian f64 with a JSON sidecar,
//! core-position and intensity CSV, and JSON documents.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoreMap, IntensityField};

/// Row-major grayscale image with floating-point samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_len(width * height, data.len())?;
        Ok(Image { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(c, r));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Shifts content by `(dx, dy)` pixels, filling uncovered pixels with 0.
    pub fn shifted(&self, dx: isize, dy: isize) -> Image {
        Image::from_fn(self.width, self.height, |c, r| {
            let (sc, sr) = (c as isize - dx, r as isize - dy);
            if sc < 0 || sr < 0 || sc >= self.width as isize || sr >= self.height as isize {
                0.0
            } else {
                self.get(sc as usize, sr as usize)
            }
        })
    }
}

// ---------------------------------------------------------------- PGM

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    decode_pgm(&bytes)
}

/// Decodes a binary (P5) PGM with 8- or 16-bit big-endian samples. Sample
/// values are returned unscaled.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut header = [0usize; 3];
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format("not a binary PGM (expected magic P5)".into()));
    }
    for h in header.iter_mut() {
        let tok = next_token(bytes, &mut pos)?;
        *h = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM geometry {width}x{height}, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bps;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format("PGM raster is truncated".into()))?;
    let data = if bps == 1 {
        raster.iter().map(|&b| b as f64).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    };
    Image::new(width, height, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("unexpected end of PGM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

/// Encodes samples rounded and clamped to `[0, maxval]`; 16-bit output is
/// used when `maxval > 255`.
pub fn encode_pgm(image: &Image, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::param("maxval must be >= 1"));
    }
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, maxval).into_bytes();
    let m = maxval as f64;
    for &v in &image.data {
        let q = if v.is_nan() { 0.0 } else { v.round().clamp(0.0, m) };
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Image, maxval: u16) -> Result<()> {
    fs::write(path.as_ref(), encode_pgm(image, maxval)?)?;
    Ok(())
}

/// Linear min–max stretch to 8 bits, for viewing float images.
pub fn write_pgm_preview(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let (lo, hi) = (image.min(), image.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled = Image {
        width: image.width,
        height: image.height,
        data: image.data.iter().map(|v| (v - lo) / span * 255.0).collect(),
    };
    write_pgm(path, &scaled, 255)
}

// ---------------------------------------------------------------- raw f64

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
}

/// Writes `<stem>.f64` and `<stem>.json`.
pub fn write_raw_f64(dir: impl AsRef<Path>, stem: &str, image: &Image) -> Result<()> {
    let dir = dir.as_ref();
    let mut bytes = Vec::with_capacity(image.data.len() * 8);
    for v in &image.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{stem}.f64")), bytes)?;
    let side = RawSidecar { width: image.width, height: image.height, dtype: "f64le".into() };
    write_json(dir.join(format!("{stem}.json")), &side)
}

pub fn read_raw_f64(dir: impl AsRef<Path>, stem: &str) -> Result<Image> {
    let dir = dir.as_ref();
    let side: RawSidecar = read_json(dir.join(format!("{stem}.json")))?;
    if side.dtype != "f64le" {
        return Err(Error::Format(format!("unsupported dtype '{}'", side.dtype)));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join(format!("{stem}.f64")))?.read_to_end(&mut bytes)?;
    if bytes.len() != side.width * side.height * 8 {
        return Err(Error::Format("raw file size does not match sidecar".into()));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Image::new(side.width, side.height, data)
}

// ---------------------------------------------------------------- CSV

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Reads an `x,y` CSV of 0-based pixel coordinates.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<[f64; 2]>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref()).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let ix = column(&headers, "x")?;
    let iy = column(&headers, "y")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        out.push([parse_f64(&rec, ix)?, parse_f64(&rec, iy)?]);
    }
    Ok(out)
}

pub fn write_points_csv(path: impl AsRef<Path>, points: &[[f64; 2]]) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["x", "y"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p[0].to_string(), p[1].to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a core map; the image size is given separately because the CSV
/// carries positions only.
pub fn read_cores_csv(path: impl AsRef<Path>, width: usize, height: usize) -> Result<CoreMap> {
    CoreMap::new(width, height, read_points_csv(path)?)
}

/// Smallest image that contains every point of a core CSV.
pub fn bounding_size(points: &[[f64; 2]]) -> (usize, usize) {
    let w = points.iter().map(|p| p[0]).fold(0.0, f64::max);
    let h = points.iter().map(|p| p[1]).fold(0.0, f64::max);
    (w.floor() as usize + 1, h.floor() as usize + 1)
}

pub fn write_cores_csv(path: impl AsRef<Path>, cores: &CoreMap) -> Result<()> {
    write_points_csv(path, cores.positions())
}

/// One-column CSV with header `value`. Values round-trip exactly.
pub fn write_field_csv(path: impl AsRef<Path>, field: &[f64]) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(["value"]).map_err(csv_err)?;
    for v in field {
        w.write_record([v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the first column of a headed CSV.
pub fn read_field_csv(path: impl AsRef<Path>) -> Result<IntensityField> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref()).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(parse_f64(&rec.map_err(csv_err)?, 0)?);
    }
    Ok(IntensityField::new(out))
}

/// Writes rows of serializable records with a header derived from the fields.
pub fn write_records_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Format(format!("missing CSV column '{name}'")))
}

fn parse_f64(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    let s = rec.get(i).ok_or_else(|| Error::Format("short CSV row".into()))?;
    s.parse().map_err(|_| Error::Format(format!("not a number: '{s}'")))
}

// ---------------------------------------------------------------- JSON

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let f = BufReader::new(fs::File::open(path.as_ref())?);
    Ok(serde_json::from_reader(f)?)
}

/// Reads a file line by line, skipping blanks; used for simple lists.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let f = BufReader::new(fs::File::open(path.as_ref())?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line.trim().to_string());
        }
    }
    Ok(out)
}
