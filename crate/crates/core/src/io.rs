//! File formats: raw grid files, phantom specs and PGM export.
//!
//! A raw grid file is a text header, one `key value` field per line after the
//! `RGF1` magic line, closed by an empty line, followed by little-endian
//! `f64` samples in row-major order:
//!
//! ```text
//! RGF1
//! kind means|trace|image
//! trace P|W            (traces only)
//! rows <detectors or image side>
//! cols <radial nodes, time nodes or image side>
//! r0 <radius>
//! step <radial, time or pixel step>
//!
//! <payload>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grids::{
    DetectorRing, ImageData, ImageGrid, MeansData, Phantom, Primitive, RadialGrid, TimeGrid, TraceKind, WaveTraceData,
};

pub const MAGIC: &str = "RGF1";

/// Contents of a raw grid file.
#[derive(Clone, Debug, PartialEq)]
pub enum GridFile {
    Means(MeansData),
    Trace(WaveTraceData),
    Image(ImageData),
}

impl GridFile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GridFile::Means(_) => "means",
            GridFile::Trace(_) => "trace",
            GridFile::Image(_) => "image",
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            GridFile::Means(m) => &m.values,
            GridFile::Trace(t) => &t.values,
            GridFile::Image(i) => &i.values,
        }
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_rgf<W: Write>(mut out: W, file: &GridFile) -> Result<()> {
    let mut header = format!("{MAGIC}\nkind {}\n", file.kind_name());
    let (rows, cols, r0, step) = match file {
        GridFile::Means(m) => (m.ring.count(), m.cols(), m.rgrid.r0(), m.rgrid.step()),
        GridFile::Trace(t) => {
            let kind = match t.kind {
                TraceKind::P => "P",
                TraceKind::W => "W",
            };
            header.push_str(&format!("trace {kind}\n"));
            (t.ring.count(), t.cols(), t.ring.radius(), t.tgrid.step())
        }
        GridFile::Image(i) => (i.grid.side(), i.grid.side(), i.grid.r0(), i.grid.step()),
    };
    header.push_str(&format!("rows {rows}\ncols {cols}\nr0 {r0}\nstep {step}\n\n"));
    out.write_all(header.as_bytes())?;
    let mut payload = Vec::with_capacity(file.values().len() * 8);
    for v in file.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn read_rgf<R: Read>(input: R) -> Result<GridFile> {
    let mut reader = BufReader::new(input);
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut first = true;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(format_err("header is not terminated by an empty line"));
        }
        let line = line.strip_suffix('\n').unwrap_or(&line);
        if first {
            if line != MAGIC {
                return Err(format_err(format!("bad magic `{line}`")));
            }
            first = false;
            continue;
        }
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| format_err(format!("malformed header line `{line}`")))?;
        if fields.iter().any(|(key, _)| key == k) {
            return Err(format_err(format!("duplicate header field `{k}`")));
        }
        fields.push((k.to_string(), v.trim().to_string()));
    }
    let get = |key: &str| {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format_err(format!("missing header field `{key}`")))
    };
    let count = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|_| format_err(format!("field `{key}` is not a count")))
    };
    let real = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format_err(format!("field `{key}` is not a finite number")))
    };
    let kind = get("kind")?.to_string();
    let rows = count("rows")?;
    let cols = count("cols")?;
    let r0 = real("r0")?;
    let step = real("step")?;
    let known: &[&str] = if kind == "trace" {
        &["kind", "trace", "rows", "cols", "r0", "step"]
    } else {
        &["kind", "rows", "cols", "r0", "step"]
    };
    if let Some((k, _)) = fields.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(format_err(format!("unexpected header field `{k}`")));
    }

    let len = rows
        .checked_mul(cols)
        .filter(|&l| l.checked_mul(8).is_some())
        .ok_or_else(|| format_err("declared dimensions overflow"))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(format_err(format!(
            "payload holds {} bytes, header declares {rows} x {cols} samples ({} bytes)",
            bytes.len(),
            len * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
    let wrap = |e: Error| match e {
        Error::Precondition { message, .. } | Error::GridMismatch { message, .. } => format_err(message),
        other => other,
    };
    match kind.as_str() {
        "means" => {
            if cols < 2 {
                return Err(format_err("means need at least two radial nodes"));
            }
            let rgrid = RadialGrid::new(r0, cols - 1).map_err(wrap)?;
            if !close(step, rgrid.step()) {
                return Err(format_err(format!(
                    "radial step {step} does not match 2 r0 / (cols - 1)"
                )));
            }
            let ring = DetectorRing::new(r0, rows).map_err(wrap)?;
            Ok(GridFile::Means(
                MeansData::from_values(ring, rgrid, values).map_err(wrap)?,
            ))
        }
        "trace" => {
            let tk = match get("trace")? {
                "P" => TraceKind::P,
                "W" => TraceKind::W,
                other => return Err(format_err(format!("unknown trace kind `{other}`"))),
            };
            if cols < 2 {
                return Err(format_err("traces need at least two time nodes"));
            }
            let tgrid = TimeGrid::new(step, cols - 1).map_err(wrap)?;
            let ring = DetectorRing::new(r0, rows).map_err(wrap)?;
            Ok(GridFile::Trace(
                WaveTraceData::from_values(ring, tgrid, tk, values).map_err(wrap)?,
            ))
        }
        "image" => {
            if rows != cols || rows < 2 {
                return Err(format_err("images must be square with side at least 2"));
            }
            let grid = ImageGrid::new(r0, rows - 1).map_err(wrap)?;
            if !close(step, grid.step()) {
                return Err(format_err(format!(
                    "pixel step {step} does not match 2 r0 / (side - 1)"
                )));
            }
            Ok(GridFile::Image(ImageData::from_values(grid, values).map_err(wrap)?))
        }
        other => Err(format_err(format!("unknown kind `{other}`"))),
    }
}

pub fn save_rgf(path: &Path, file: &GridFile) -> Result<()> {
    let mut buf = Vec::new();
    write_rgf(&mut buf, file)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_rgf(path: &Path) -> Result<GridFile> {
    read_rgf(fs::File::open(path)?)
}

/// Parses `disk cx cy radius amplitude` / `gauss cx cy sigma amplitude`
/// lines; `#` starts a comment. Support against `R0` is checked by callers.
pub fn parse_phantom_spec(text: &str) -> Result<Phantom> {
    let mut prims = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        let nums: Vec<f64> = parts
            .map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| format_err(format!("line {}: non-numeric field", no + 1)))?;
        if nums.len() != 4 {
            return Err(format_err(format!(
                "line {}: expected 4 numbers, found {}",
                no + 1,
                nums.len()
            )));
        }
        if nums[2] <= 0.0 {
            return Err(format_err(format!("line {}: size must be positive", no + 1)));
        }
        let center = [nums[0], nums[1]];
        prims.push(match head {
            "disk" => Primitive::disk(center, nums[2], nums[3]),
            "gauss" => Primitive::gaussian(center, nums[2], nums[3]),
            other => return Err(format_err(format!("line {}: unknown primitive `{other}`", no + 1))),
        });
    }
    Ok(Phantom::new(prims))
}

pub fn load_phantom_spec(path: &Path) -> Result<Phantom> {
    parse_phantom_spec(&fs::read_to_string(path)?)
}

/// Writes the spec form of a phantom; `parse_phantom_spec` reads it back.
pub fn format_phantom_spec(phantom: &Phantom) -> String {
    let mut s = String::new();
    for p in &phantom.primitives {
        match p {
            Primitive::Disk(d) => s.push_str(&format!(
                "disk {} {} {} {}\n",
                d.center[0], d.center[1], d.radius, d.amplitude
            )),
            Primitive::Gaussian(g) => s.push_str(&format!(
                "gauss {} {} {} {}\n",
                g.center[0], g.center[1], g.sigma, g.amplitude
            )),
        }
    }
    s
}

/// Sidecar path holding the PGM scaling bounds.
pub fn pgm_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale");
    PathBuf::from(s)
}

/// 16-bit binary PGM with linear min-max scaling, top row at maximal `x2`.
/// The bounds go to `<path>.scale` as `min <v>` and `max <v>` lines; a
/// constant image maps to 0.
pub fn export_pgm(img: &ImageData, path: &Path) -> Result<()> {
    if img.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("cli-io", "cannot export non-finite values"));
    }
    let (lo, hi) = img
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let side = img.grid.side();
    let mut out = format!("P5\n{side} {side}\n65535\n").into_bytes();
    let range = hi - lo;
    for i2 in (0..side).rev() {
        for i1 in 0..side {
            let v = img.get(i1, i2);
            let q = if range > 0.0 {
                ((v - lo) / range * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    fs::write(path, out)?;
    fs::write(pgm_sidecar(path), format!("min {lo}\nmax {hi}\n"))?;
    Ok(())
}

/// Reads a PGM written by `export_pgm` back into values via its sidecar.
pub fn import_pgm(path: &Path) -> Result<(usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let mut header = Vec::new();
    let mut pos = 0;
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated PGM header"));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if header[0] != "P5" || header[3] != "65535" {
        return Err(format_err("expected a 16-bit P5 image"));
    }
    let w: usize = header[1].parse().map_err(|_| format_err("bad PGM width"))?;
    let h: usize = header[2].parse().map_err(|_| format_err("bad PGM height"))?;
    if w != h || bytes.len() != pos + 2 * w * h {
        return Err(format_err("PGM payload does not match a square image"));
    }
    let scale = fs::read_to_string(pgm_sidecar(path))?;
    let bound = |key: &str| -> Result<f64> {
        scale
            .lines()
            .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse::<f64>()))
            .and_then(|r| r.ok())
            .ok_or_else(|| format_err(format!("sidecar lacks `{key}`")))
    };
    let (lo, hi) = (bound("min ")?, bound("max ")?);
    let mut values = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let at = pos + 2 * (row * w + col);
            let q = u16::from_be_bytes([bytes[at], bytes[at + 1]]) as f64;
            values[(h - 1 - row) * w + col] = lo + q / 65535.0 * (hi - lo);
        }
    }
    Ok((w, values))
}
