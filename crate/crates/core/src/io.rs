//! File formats: the `CSEQ`, `DSP1` and `MSK1` little-endian rasters, the
//! contour / strain / trace / report CSV tables and the TOML run
//! configuration.
//!
//! Binary layouts (all integers `u32`, all samples `f32`):
//!
//! | format | header                                        | payload                     |
//! |--------|-----------------------------------------------|-----------------------------|
//! | CSEQ   | `"CSEQ"`, version, nx, ny, nt, spacing (f32)  | intensities                 |
//! | DSP1   | `"DSP1"`, version, nx, ny, nt                 | `(dx, dy)` pairs            |
//! | MSK1   | `"MSK1"`, version, nx, ny                     | one byte per pixel (0 / 1)  |
//!
//! Payloads are frame-major, row-major within a frame. Every writer goes
//! through a temporary file in the destination directory followed by a
//! rename, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::MetricKind;
use crate::deform::DisplacementField;
use crate::error::{Error, Result};
use crate::eval::{Contour, MetricReport};
use crate::imaging::CineSequence;
use crate::optimizer::{IterRecord, SolverConfig};
use crate::strain::MyoMask;

pub const VERSION: u32 = 1;
pub const CSEQ_HEADER: usize = 24;
pub const DSP1_HEADER: usize = 20;
pub const MSK1_HEADER: usize = 16;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), message: message.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |err| Error::Io { path: path.to_path_buf(), err }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.to_path_buf(), err: e.error })?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

/// Little-endian cursor that reports byte offsets in its errors.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(parse_err(
                self.path,
                format!("truncated {what} at byte {}: need {n} bytes, {} left", self.pos, self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "header")?;
        if got != expected {
            return Err(parse_err(
                self.path,
                format!(
                    "bad magic at byte 0: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4, "header")?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u32()?;
        if v != VERSION {
            return Err(parse_err(self.path, format!("unsupported version {v} at byte {at}")));
        }
        Ok(())
    }

    fn dim(&mut self, name: &str) -> Result<usize> {
        let at = self.pos;
        match self.u32()? {
            0 => Err(parse_err(self.path, format!("{name} is zero at byte {at}"))),
            v => Ok(v as usize),
        }
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let p = self.take(len, "payload")?;
        if self.pos != self.bytes.len() {
            return Err(parse_err(
                self.path,
                format!("{} trailing bytes after the payload at byte {}", self.bytes.len() - self.pos, self.pos),
            ));
        }
        Ok(p)
    }

    /// Decodes `f32` samples starting at absolute offset `base`.
    fn floats(&self, payload: &[u8], base: usize) -> Result<Vec<f64>> {
        payload
            .chunks_exact(4)
            .enumerate()
            .map(|(k, b)| {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(parse_err(self.path, format!("non-finite value {v} at byte {}", base + 4 * k)))
                }
            })
            .collect()
    }
}

fn checked_len(path: &Path, dims: &[usize], per: usize) -> Result<usize> {
    dims.iter()
        .try_fold(per, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(path, format!("dimensions {dims:?} overflow")))
}

fn push_f32(out: &mut Vec<u8>, v: f64, what: &str) -> Result<()> {
    let f = v as f32;
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("{what} value {v} does not fit an f32")));
    }
    out.extend_from_slice(&f.to_le_bytes());
    Ok(())
}

pub fn encode_cseq(seq: &CineSequence) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(CSEQ_HEADER + 4 * seq.data().len());
    out.extend_from_slice(b"CSEQ");
    for v in [VERSION, seq.nx() as u32, seq.ny() as u32, seq.nt() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_f32(&mut out, seq.pixel_spacing(), "pixel spacing")?;
    for &v in seq.data() {
        push_f32(&mut out, v, "intensity")?;
    }
    Ok(out)
}

pub fn decode_cseq(bytes: &[u8], path: &Path) -> Result<CineSequence> {
    let mut r = Reader::new(bytes, path);
    r.magic(b"CSEQ")?;
    r.version()?;
    let (nx, ny, nt) = (r.dim("nx")?, r.dim("ny")?, r.dim("nt")?);
    let at = r.pos;
    let spacing = f32::from_le_bytes(r.take(4, "header")?.try_into().expect("4 bytes")) as f64;
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(parse_err(path, format!("invalid pixel spacing {spacing} at byte {at}")));
    }
    let len = checked_len(path, &[nx, ny, nt], 4)?;
    let base = r.pos;
    let payload = r.payload(len)?;
    let data = r.floats(payload, base)?;
    CineSequence::new(nx, ny, nt, spacing, data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_cseq(path: &Path, seq: &CineSequence) -> Result<()> {
    write_atomic(path, &encode_cseq(seq)?)
}

pub fn read_cseq(path: &Path) -> Result<CineSequence> {
    decode_cseq(&read_bytes(path)?, path)
}

pub fn encode_dsp1(field: &DisplacementField) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(DSP1_HEADER + 8 * field.data().len());
    out.extend_from_slice(b"DSP1");
    for v in [VERSION, field.nx() as u32, field.ny() as u32, field.nt() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for d in field.data() {
        push_f32(&mut out, d[0], "displacement")?;
        push_f32(&mut out, d[1], "displacement")?;
    }
    Ok(out)
}

pub fn decode_dsp1(bytes: &[u8], path: &Path) -> Result<DisplacementField> {
    let mut r = Reader::new(bytes, path);
    r.magic(b"DSP1")?;
    r.version()?;
    let (nx, ny, nt) = (r.dim("nx")?, r.dim("ny")?, r.dim("nt")?);
    let len = checked_len(path, &[nx, ny, nt], 8)?;
    let base = r.pos;
    let payload = r.payload(len)?;
    let flat = r.floats(payload, base)?;
    let data = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    DisplacementField::new(nx, ny, nt, data)
}

pub fn write_dsp1(path: &Path, field: &DisplacementField) -> Result<()> {
    write_atomic(path, &encode_dsp1(field)?)
}

pub fn read_dsp1(path: &Path) -> Result<DisplacementField> {
    decode_dsp1(&read_bytes(path)?, path)
}

pub fn encode_msk1(mask: &MyoMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(MSK1_HEADER + mask.data().len());
    out.extend_from_slice(b"MSK1");
    for v in [VERSION, mask.nx() as u32, mask.ny() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(mask.data().iter().map(|&m| m as u8));
    out
}

pub fn decode_msk1(bytes: &[u8], path: &Path) -> Result<MyoMask> {
    let mut r = Reader::new(bytes, path);
    r.magic(b"MSK1")?;
    r.version()?;
    let (nx, ny) = (r.dim("nx")?, r.dim("ny")?);
    let len = checked_len(path, &[nx, ny], 1)?;
    let base = r.pos;
    let payload = r.payload(len)?;
    let data = payload
        .iter()
        .enumerate()
        .map(|(k, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(parse_err(path, format!("mask byte {other} at byte {} is not 0 or 1", base + k))),
        })
        .collect::<Result<Vec<_>>>()?;
    MyoMask::new(nx, ny, data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_msk1(path: &Path, mask: &MyoMask) -> Result<()> {
    write_atomic(path, &encode_msk1(mask))
}

pub fn read_msk1(path: &Path) -> Result<MyoMask> {
    decode_msk1(&read_bytes(path)?, path)
}

/// Fails unless `field` lives on the grid and frame count of `seq`.
pub fn check_companion(seq: &CineSequence, field: &DisplacementField) -> Result<()> {
    if (seq.nx(), seq.ny(), seq.nt()) != (field.nx(), field.ny(), field.nt()) {
        return Err(Error::dim(format!(
            "displacement is {}x{}x{} but the sequence is {}x{}x{}",
            field.nx(),
            field.ny(),
            field.nt(),
            seq.nx(),
            seq.ny(),
            seq.nt()
        )));
    }
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Numerical(format!("CSV encoding: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Numerical(format!("CSV encoding: {e}")))
}

/// Parsed rows of a CSV file with their 1-based line numbers.
type CsvRows = (Vec<String>, Vec<(u64, Vec<String>)>);

fn csv_rows(path: &Path, expected_header: &[&str], exact: bool) -> Result<CsvRows> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, format!("line 1: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let prefix_ok = header.len() >= expected_header.len()
        && header.iter().zip(expected_header).all(|(a, b)| a.eq_ignore_ascii_case(b));
    if !prefix_ok || (exact && header.len() != expected_header.len()) {
        return Err(parse_err(path, format!("line 1: expected columns {expected_header:?}, found {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, format!("line {line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(path, format!("line {line}: cannot parse {name} from '{s}'")))
}

fn finite(path: &Path, line: u64, name: &str, s: &str) -> Result<f64> {
    let v: f64 = field(path, line, name, s)?;
    if !v.is_finite() {
        return Err(parse_err(path, format!("line {line}: {name} is not finite")));
    }
    Ok(v)
}

/// `frame,x,y` with a 1-based frame number; one closed contour per file.
pub fn write_contour(path: &Path, contour: &Contour) -> Result<()> {
    let rows =
        contour.points().iter().map(|p| vec![(contour.frame + 1).to_string(), p[0].to_string(), p[1].to_string()]);
    write_atomic(path, &csv_bytes(&["frame".into(), "x".into(), "y".into()], rows)?)
}

pub fn read_contour(path: &Path) -> Result<Contour> {
    let (_, rows) = csv_rows(path, &["frame", "x", "y"], true)?;
    let mut frame = None;
    let mut points = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let f: usize = field(path, *line, "frame", &r[0])?;
        if f == 0 {
            return Err(parse_err(path, format!("line {line}: frames are numbered from 1")));
        }
        match frame {
            None => frame = Some(f),
            Some(g) if g != f => {
                return Err(parse_err(path, format!("line {line}: frame {f} differs from {g}; one contour per file")))
            }
            _ => {}
        }
        points.push([finite(path, *line, "x", &r[1])?, finite(path, *line, "y", &r[2])?]);
    }
    Contour::new(points, true, frame.unwrap_or(1) - 1).map_err(|e| parse_err(path, e.to_string()))
}

/// Global (and optional segmental) strain curves in strain points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrainTable {
    pub grs: Vec<f64>,
    pub gcs: Vec<f64>,
    /// `segments[s][t]`; `None` is written as an empty cell.
    pub segments: Vec<Vec<Option<f64>>>,
}

impl StrainTable {
    /// Builds a table from dimensionless curves.
    pub fn from_fractions(grs: &[f64], gcs: &[f64], segments: &[Vec<Option<f64>>]) -> Self {
        let pct = |v: &[f64]| v.iter().map(|x| 100.0 * x).collect();
        Self {
            grs: pct(grs),
            gcs: pct(gcs),
            segments: segments.iter().map(|s| s.iter().map(|v| v.map(|x| 100.0 * x)).collect()).collect(),
        }
    }

    /// Dimensionless `(grs, gcs)`.
    pub fn fractions(&self) -> (Vec<f64>, Vec<f64>) {
        (self.grs.iter().map(|v| v / 100.0).collect(), self.gcs.iter().map(|v| v / 100.0).collect())
    }
}

pub fn write_strain(path: &Path, table: &StrainTable) -> Result<()> {
    if table.gcs.len() != table.grs.len() || table.segments.iter().any(|s| s.len() != table.grs.len()) {
        return Err(Error::dim("strain curves differ in length"));
    }
    let mut header = vec!["frame".to_string(), "GRS".into(), "GCS".into()];
    header.extend((1..=table.segments.len()).map(|s| format!("seg_{s}")));
    let rows = (0..table.grs.len()).map(|t| {
        let mut row = vec![(t + 1).to_string(), table.grs[t].to_string(), table.gcs[t].to_string()];
        row.extend(table.segments.iter().map(|s| s[t].map(|v| v.to_string()).unwrap_or_default()));
        row
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub fn read_strain(path: &Path) -> Result<StrainTable> {
    let (header, rows) = csv_rows(path, &["frame", "GRS", "GCS"], false)?;
    let n_seg = header.len() - 3;
    let mut table = StrainTable { segments: vec![Vec::new(); n_seg], ..Default::default() };
    for (k, (line, r)) in rows.iter().enumerate() {
        let frame: usize = field(path, *line, "frame", &r[0])?;
        if frame != k + 1 {
            return Err(parse_err(path, format!("line {line}: expected frame {}, found {frame}", k + 1)));
        }
        table.grs.push(finite(path, *line, "GRS", &r[1])?);
        table.gcs.push(finite(path, *line, "GCS", &r[2])?);
        for s in 0..n_seg {
            let cell = &r[3 + s];
            let v = if cell.is_empty() { None } else { Some(finite(path, *line, &header[3 + s], cell)?) };
            table.segments[s].push(v);
        }
    }
    if table.grs.is_empty() {
        return Err(parse_err(path, "no strain rows"));
    }
    Ok(table)
}

/// Solver trace; `with_pair` adds the frame-pair column used by the
/// pairwise baseline.
pub fn write_trace(path: &Path, records: &[IterRecord], with_pair: bool) -> Result<()> {
    let mut header: Vec<String> = ["level", "iter", "cost", "dissim", "r_spatial", "r_temporal", "step", "gradnorm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_pair {
        header.push("pair".into());
    }
    let rows = records.iter().map(|r| {
        let mut row = vec![
            r.level.to_string(),
            r.iter.to_string(),
            r.cost.to_string(),
            r.dissimilarity.to_string(),
            r.spatial.to_string(),
            r.temporal.to_string(),
            r.step.to_string(),
            r.grad_norm.to_string(),
        ];
        if with_pair {
            row.push((r.pair + 1).to_string());
        }
        row
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// Reads a trace back; the constraint residual is not stored and reads as 0.
pub fn read_trace(path: &Path) -> Result<Vec<IterRecord>> {
    let (header, rows) =
        csv_rows(path, &["level", "iter", "cost", "dissim", "r_spatial", "r_temporal", "step", "gradnorm"], false)?;
    let with_pair = header.len() == 9 && header[8].eq_ignore_ascii_case("pair");
    if header.len() != 8 && !with_pair {
        return Err(parse_err(path, format!("line 1: unexpected columns {header:?}")));
    }
    rows.iter()
        .map(|(line, r)| {
            let f = |k: usize, name: &str| finite(path, *line, name, &r[k]);
            let pair = if with_pair { field::<usize>(path, *line, "pair", &r[8])?.saturating_sub(1) } else { 0 };
            Ok(IterRecord {
                pair,
                level: field(path, *line, "level", &r[0])?,
                iter: field(path, *line, "iter", &r[1])?,
                cost: f(2, "cost")?,
                dissimilarity: f(3, "dissim")?,
                spatial: f(4, "r_spatial")?,
                temporal: f(5, "r_temporal")?,
                step: f(6, "step")?,
                grad_norm: f(7, "gradnorm")?,
                constraint_residual: 0.0,
            })
        })
        .collect()
}

/// `metric,value` rows.
pub fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    let rows = report.rows().into_iter().map(|(k, v)| vec![k, v.to_string()]);
    write_atomic(path, &csv_bytes(&["metric".into(), "value".into()], rows)?)
}

pub fn read_report(path: &Path) -> Result<Vec<(String, f64)>> {
    let (_, rows) = csv_rows(path, &["metric", "value"], true)?;
    rows.iter().map(|(line, r)| Ok((r[0].clone(), finite(path, *line, "value", &r[1])?))).collect()
}

/// Everything a run can be configured with from a TOML file. Solver keys
/// sit at the top level next to the run keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub metric: MetricKind,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub pixel_spacing: Option<f64>,
    pub mask: Option<PathBuf>,
    pub contours: Vec<PathBuf>,
    pub segments: Option<usize>,
    pub ref_angle: f64,
    #[serde(flatten)]
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Llr,
            input: None,
            output: None,
            pixel_spacing: None,
            mask: None,
            contours: Vec::new(),
            segments: None,
            ref_angle: 0.0,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
        cfg.solver.validate()?;
        if let Some(s) = cfg.segments {
            if s != 4 && s != 6 {
                return Err(parse_err(path, format!("segments must be 4 or 6, got {s}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Numerical(format!("TOML encoding: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn cseq_header_and_errors() {
        let seq = CineSequence::from_fn(8, 9, 2, 1.25, |x, y, t| (x + 2.0 * y) as f32 as f64 + t as f64).unwrap();
        let bytes = encode_cseq(&seq).unwrap();
        assert_eq!(bytes.len(), CSEQ_HEADER + 4 * 144);
        assert_eq!(decode_cseq(&bytes, p()).unwrap(), seq);

        let msg = decode_cseq(&bytes[..CSEQ_HEADER], p()).unwrap_err().to_string();
        assert!(msg.contains("truncated payload at byte 24"), "{msg}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_cseq(&bad, p()).unwrap_err().to_string().contains("bad magic"));
        let mut nan = bytes.clone();
        nan[CSEQ_HEADER + 8..CSEQ_HEADER + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_cseq(&nan, p()).unwrap_err().to_string().contains("non-finite value NaN at byte 32"));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(decode_cseq(&v2, p()).unwrap_err().to_string().contains("unsupported version"));
    }

    #[test]
    fn dsp1_size_and_mask_bytes() {
        let zero = DisplacementField::zeros(5, 4, 3);
        let bytes = encode_dsp1(&zero).unwrap();
        assert_eq!(bytes.len(), DSP1_HEADER + 8 * 5 * 4 * 3);
        assert_eq!(decode_dsp1(&bytes, p()).unwrap(), zero);
        let mask = MyoMask::from_fn(4, 3, |x, _| x > 2.0).unwrap();
        let mut bytes = encode_msk1(&mask);
        assert_eq!(decode_msk1(&bytes, p()).unwrap(), mask);
        bytes[MSK1_HEADER + 1] = 7;
        assert!(decode_msk1(&bytes, p()).unwrap_err().to_string().contains("at byte 17"));
    }

    #[test]
    fn companion_check() {
        let seq = CineSequence::from_fn(8, 8, 3, 1.0, |_, _, _| 0.0).unwrap();
        assert!(check_companion(&seq, &DisplacementField::zeros(8, 8, 3)).is_ok());
        assert!(check_companion(&seq, &DisplacementField::zeros(8, 8, 4)).is_err());
    }

    #[test]
    fn run_config_precedence_base() {
        let cfg = RunConfig::from_toml("metric = \"glr\"\nlambda = 0.001\nlevels = 2\n", p()).unwrap();
        assert_eq!(cfg.metric, MetricKind::Glr);
        assert_eq!(cfg.solver.lambda, 0.001);
        assert_eq!(cfg.solver.levels, 2);
        assert_eq!(cfg.solver.mu, 0.06);
        assert!(RunConfig::from_toml("segments = 5\n", p()).is_err());
        assert!(RunConfig::from_toml("levels = 0\n", p()).is_err());
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap(), p()).unwrap();
        assert_eq!(back, cfg);
    }
}
