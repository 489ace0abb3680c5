//! Scalar-field frames: text-grid i/o, 16-bit PGM label maps, synthetic scenes.
//!
//! Grid files are plain text. The first line is
//! `width height spacing_km_x spacing_km_y [timestamp]`, followed by `height`
//! rows of `width` space-separated values, with `NA` marking missing pixels.
//! Frames of a sequence are ordered by lexicographic file name, not by the
//! optional timestamp.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scalar-field frame on a uniform pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    /// Pixel spacing in km along x (columns) and y (rows).
    pub spacing_km: (f64, f64),
    /// Row-major values; missing pixels hold 0.
    pub values: Vec<f64>,
    /// Row-major missing mask.
    pub missing: Vec<bool>,
    pub timestamp: Option<String>,
    /// Position in the owning sequence; 0 for standalone fields.
    pub time_index: usize,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, spacing_km: (f64, f64)) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyField);
        }
        if !(spacing_km.0 > 0.0) || !(spacing_km.1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel spacing must be positive, got {:?}",
                spacing_km
            )));
        }
        Ok(ScalarField {
            width,
            height,
            spacing_km,
            values: vec![0.0; width * height],
            missing: vec![false; width * height],
            timestamp: None,
            time_index: 0,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    /// Missing pixels read as 0 everywhere downstream.
    #[inline]
    pub fn value_or_zero(&self, index: usize) -> f64 {
        if self.missing[index] {
            0.0
        } else {
            self.values[index]
        }
    }

    /// Pixel position in km: `(col * spacing_x, row * spacing_y)`.
    #[inline]
    pub fn km_of_pixel(&self, index: usize) -> (f64, f64) {
        let (col, row) = self.col_row(index);
        (col as f64 * self.spacing_km.0, row as f64 * self.spacing_km.1)
    }

    /// Indices of the 8-neighborhood of `index`, clipped at the border.
    pub fn neighbors8(&self, index: usize, out: &mut Vec<usize>) {
        out.clear();
        let (col, row) = self.col_row(index);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                if r >= 0 && r < self.height as i64 && c >= 0 && c < self.width as i64 {
                    out.push(r as usize * self.width + c as usize);
                }
            }
        }
    }
}

/// A time-ordered stack of frames with a fixed sampling interval.
#[derive(Debug, Clone)]
pub struct FieldSequence {
    pub frames: Vec<ScalarField>,
    pub interval_minutes: f64,
}

impl FieldSequence {
    pub fn new(mut frames: Vec<ScalarField>, interval_minutes: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("sequence has no frames".into()));
        }
        if !(interval_minutes > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "interval_minutes must be positive, got {interval_minutes}"
            )));
        }
        let (w, h, s) = (frames[0].width, frames[0].height, frames[0].spacing_km);
        for (i, f) in frames.iter_mut().enumerate() {
            if f.width != w || f.height != h || f.spacing_km != s {
                return Err(Error::FrameMismatch { frame: i });
            }
            f.time_index = i;
        }
        Ok(FieldSequence { frames, interval_minutes })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Parses one text grid file.
pub fn read_grid(path: &Path) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 && tokens.len() != 5 {
        return Err(parse_err(
            path,
            1,
            format!("header needs 4 or 5 tokens, found {}", tokens.len()),
        ));
    }
    let width: usize = tokens[0]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad width {:?}", tokens[0])))?;
    let height: usize = tokens[1]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad height {:?}", tokens[1])))?;
    let sx: f64 = tokens[2]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad spacing {:?}", tokens[2])))?;
    let sy: f64 = tokens[3]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad spacing {:?}", tokens[3])))?;
    if width == 0 || height == 0 {
        return Err(parse_err(path, 1, "zero grid dimension"));
    }
    if !(sx > 0.0 && sx.is_finite() && sy > 0.0 && sy.is_finite()) {
        return Err(parse_err(path, 1, format!("spacing must be positive, got {sx} {sy}")));
    }
    let mut field = ScalarField::new(width, height, (sx, sy))?;
    field.timestamp = tokens.get(4).map(|s| s.to_string());

    let mut rows_read = 0;
    for (lineno0, line) in lines {
        let lineno = lineno0 + 1;
        if line.trim().is_empty() {
            continue;
        }
        if rows_read == height {
            return Err(parse_err(path, lineno, format!("more than {height} data rows")));
        }
        let row = rows_read;
        let mut cols = 0;
        for tok in line.split_whitespace() {
            if cols == width {
                return Err(parse_err(path, lineno, format!("more than {width} values in row")));
            }
            let at = row * width + cols;
            if tok == "NA" {
                field.missing[at] = true;
                field.values[at] = 0.0;
            } else {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad value {tok:?}")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("values must be finite and nonnegative, got {tok}"),
                    ));
                }
                field.values[at] = v;
            }
            cols += 1;
        }
        if cols != width {
            return Err(parse_err(path, lineno, format!("row has {cols} values, expected {width}")));
        }
        rows_read += 1;
    }
    if rows_read != height {
        return Err(parse_err(path, text.lines().count(), format!("found {rows_read} data rows, expected {height}")));
    }
    Ok(field)
}

/// Writes one frame in the text grid format. Values round-trip bit-exactly.
pub fn write_grid(field: &ScalarField, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {}",
        field.width, field.height, field.spacing_km.0, field.spacing_km.1
    ));
    if let Some(ts) = &field.timestamp {
        out.push(' ');
        out.push_str(ts);
    }
    out.push('\n');
    for row in 0..field.height {
        let mut line = String::new();
        for col in 0..field.width {
            if col > 0 {
                line.push(' ');
            }
            let at = row * field.width + col;
            if field.missing[at] {
                line.push_str("NA");
            } else {
                line.push_str(&format!("{}", field.values[at]));
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Loads every `*.grid` file in `dir`, ordered by file name.
pub fn load_sequence(dir: &Path, interval_minutes: f64) -> Result<FieldSequence> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "grid"))
        .collect();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .grid files in {}", dir.display())));
    }
    paths.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    let frames = paths.iter().map(|p| read_grid(p)).collect::<Result<Vec<_>>>()?;
    FieldSequence::new(frames, interval_minutes)
}

/// Writes every frame of `seq` to `dir` as `frame_####.grid`.
pub fn write_sequence(seq: &FieldSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (i, f) in seq.frames.iter().enumerate() {
        write_grid(f, &dir.join(format!("frame_{i:04}.grid")))?;
    }
    Ok(())
}

/// Writes a label grid as a 16-bit binary PGM (maxval 65535, big-endian),
/// label 0 meaning background.
pub fn write_label_map(labels: &[u32], width: usize, height: usize, path: &Path) -> Result<()> {
    assert_eq!(labels.len(), width * height, "label grid shape mismatch");
    if let Some(&too_big) = labels.iter().find(|&&l| l > 65535) {
        return Err(Error::LabelOverflow(too_big));
    }
    let mut bytes = Vec::with_capacity(32 + labels.len() * 2);
    bytes.extend_from_slice(format!("P5\n{width} {height}\n65535\n").as_bytes());
    for &l in labels {
        bytes.extend_from_slice(&(l as u16).to_be_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Reads back a label map written by [`write_label_map`].
pub fn read_label_map(path: &Path) -> Result<(Vec<u32>, usize, usize)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    // Header: three whitespace-separated fields after the P5 magic.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| {
            parse_err(path, 1, "non-utf8 header")
        })?);
    }
    if fields.len() != 4 || fields[0] != "P5" {
        return Err(parse_err(path, 1, "not a P5 PGM header"));
    }
    let width: usize = fields[1].parse().map_err(|_| parse_err(path, 1, "bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| parse_err(path, 1, "bad height"))?;
    if fields[3] != "65535" {
        return Err(parse_err(path, 1, format!("expected maxval 65535, got {}", fields[3])));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 2;
    if bytes.len() - pos < need {
        return Err(parse_err(path, 1, "truncated pixel data"));
    }
    let labels = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
        .collect();
    Ok((labels, width, height))
}

/// One moving Gaussian bump with a center per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobSpec {
    pub amplitude: f64,
    pub width_km: f64,
    /// One `[x_km, y_km]` center per frame.
    pub centers: Vec<[f64; 2]>,
}

/// Declarative synthetic scene: a stack of Gaussian bumps on a fixed grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width_px: usize,
    pub height_px: usize,
    /// `[spacing_x_km, spacing_y_km]`.
    pub spacing_km: [f64; 2],
    pub frames: usize,
    #[serde(default = "default_interval")]
    pub interval_minutes: f64,
    pub blobs: Vec<BlobSpec>,
}

fn default_interval() -> f64 {
    15.0
}

/// Renders the scene: frame t value at pixel p is
/// `sum_b amplitude_b * exp(-|p_km - center_b(t)|^2 / (2 width_b^2))`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FieldSequence> {
    if spec.frames == 0 {
        return Err(Error::InvalidArgument("frames must be positive".into()));
    }
    for (i, b) in spec.blobs.iter().enumerate() {
        if !(b.amplitude > 0.0) || !(b.width_km > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "blob {i}: amplitude and width_km must be positive"
            )));
        }
        if b.centers.len() != spec.frames {
            return Err(Error::InvalidArgument(format!(
                "blob {i}: {} centers for {} frames",
                b.centers.len(),
                spec.frames
            )));
        }
    }
    let spacing = (spec.spacing_km[0], spec.spacing_km[1]);
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut field = ScalarField::new(spec.width_px, spec.height_px, spacing)?;
        for row in 0..spec.height_px {
            for col in 0..spec.width_px {
                let x = col as f64 * spacing.0;
                let y = row as f64 * spacing.1;
                let mut v = 0.0;
                for b in &spec.blobs {
                    let dx = x - b.centers[t][0];
                    let dy = y - b.centers[t][1];
                    v += b.amplitude * (-(dx * dx + dy * dy) / (2.0 * b.width_km * b.width_km)).exp();
                }
                let at = field.index(col, row);
                // Far Gaussian tails are meaningless at any usable detection
                // threshold and would serialize as very long decimals.
                field.values[at] = if v < 1e-9 { 0.0 } else { v };
            }
        }
        frames.push(field);
    }
    FieldSequence::new(frames, spec.interval_minutes)
}
